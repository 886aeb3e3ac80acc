//! Fourier coefficients of measures on the torus and the spectral upper
//! bounds on `W2(mu, dx)` built from them.
//!
//! Frequency weights use `exp(-|k|^2 t)` with no `4 pi^2` factor; the
//! Laplacian normalization is absorbed into the heat time `t`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numtheory::{self, Frac128};
use crate::sequences::pow_u64;
use crate::summation::{ComplexSum, NeumaierSum};
use crate::torus::PointSet;

const MAX_BOX: f64 = 1e8;
const ANCHOR_EVERY: usize = 32;

/// Fourier coefficients on the box `[-L, L]^d`, stored densely in
/// lexicographic order (first coordinate slowest). The zero frequency holds 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    dim: usize,
    cutoff: usize,
    coeffs: Vec<Complex64>,
    source: String,
}

fn box_len(d: usize, cutoff: usize) -> Result<usize> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if cutoff == 0 {
        return Err(Error::invalid("cutoff L must be at least 1"));
    }
    let side = 2.0 * cutoff as f64 + 1.0;
    let total = side.powi(d as i32);
    if total > MAX_BOX {
        return Err(Error::ResourceGuard(format!(
            "frequency box (2L+1)^d = {total:.3e} exceeds {MAX_BOX:.0e}; lower the cutoff"
        )));
    }
    Ok(total as usize)
}

impl Spectrum {
    pub fn from_dense(dim: usize, cutoff: usize, coeffs: Vec<Complex64>, source: impl Into<String>) -> Result<Self> {
        let total = box_len(dim, cutoff)?;
        if coeffs.len() != total {
            return Err(Error::invalid(format!(
                "{} coefficients for a box of {total} frequencies",
                coeffs.len()
            )));
        }
        Ok(Self {
            dim,
            cutoff,
            coeffs,
            source: source.into(),
        })
    }

    /// The spectrum of Lebesgue measure: every nonzero coefficient vanishes.
    pub fn lebesgue(dim: usize, cutoff: usize) -> Result<Self> {
        let total = box_len(dim, cutoff)?;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); total];
        coeffs[total / 2] = Complex64::new(1.0, 0.0);
        Self::from_dense(dim, cutoff, coeffs, "lebesgue")
    }

    fn from_fn(dim: usize, cutoff: usize, source: String, f: impl Fn(&[i64]) -> Complex64 + Sync) -> Result<Self> {
        let total = box_len(dim, cutoff)?;
        let coeffs = (0..total)
            .into_par_iter()
            .map(|idx| f(&decode(idx, dim, cutoff)))
            .collect();
        Self::from_dense(dim, cutoff, coeffs, source)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn index(&self, k: &[i64]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let l = self.cutoff as i64;
        let side = 2 * l + 1;
        let mut idx = 0i64;
        for &kj in k {
            if kj.abs() > l {
                return None;
            }
            idx = idx * side + kj + l;
        }
        Some(idx as usize)
    }

    pub fn get(&self, k: &[i64]) -> Option<Complex64> {
        self.index(k).map(|i| self.coeffs[i])
    }

    pub fn dense(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Nonzero frequencies in lexicographic order with their coefficients.
    pub fn iter_nonzero(&self) -> impl Iterator<Item = (Vec<i64>, Complex64)> + '_ {
        let center = self.coeffs.len() / 2;
        self.coeffs
            .iter()
            .enumerate()
            .filter(move |(i, _)| *i != center)
            .map(move |(i, c)| (decode(i, self.dim, self.cutoff), *c))
    }

    /// Mass `sum |c_k|^2` grouped by `|k|^2`, accumulated in lexicographic
    /// order. Entry `n` holds the total over frequencies with `|k|^2 = n`.
    /// Nonzero shells `(|k|^2, sum |c_k|^2)` in increasing `|k|^2`, each
    /// summed in box order.
    fn radial_power(&self) -> Vec<(u64, f64)> {
        let l = self.cutoff as i64;
        let mut terms: Vec<(u64, f64)> = Vec::with_capacity(self.coeffs.len());
        let mut k = vec![-l; self.dim];
        for c in &self.coeffs {
            let n2: i64 = k.iter().map(|x| x * x).sum();
            if n2 != 0 {
                terms.push((n2 as u64, c.norm_sqr()));
            }
            for j in (0..self.dim).rev() {
                if k[j] < l {
                    k[j] += 1;
                    break;
                }
                k[j] = -l;
            }
        }
        terms.sort_by_key(|t| t.0);
        let mut shells: Vec<(u64, f64)> = Vec::new();
        let mut acc = NeumaierSum::new();
        for (idx, &(n2, p)) in terms.iter().enumerate() {
            acc.add(p);
            if terms.get(idx + 1).is_none_or(|next| next.0 != n2) {
                let v = acc.value();
                if v != 0.0 {
                    shells.push((n2, v));
                }
                acc = NeumaierSum::new();
            }
        }
        shells
    }

    pub fn max_modulus(&self) -> f64 {
        self.iter_nonzero().map(|(_, c)| c.norm()).fold(0.0, f64::max)
    }

    /// Largest `|c(-k) - conj(c(k))|` over the box.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.coeffs.len();
        (0..n)
            .map(|i| (self.coeffs[n - 1 - i] - self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let coeffs: Vec<Vec<serde_json::Value>> = self
            .iter_nonzero()
            .map(|(k, c)| {
                let mut row: Vec<serde_json::Value> = k.into_iter().map(Into::into).collect();
                row.push(c.re.into());
                row.push(c.im.into());
                row
            })
            .collect();
        serde_json::json!({
            "d": self.dim,
            "L": self.cutoff,
            "source": self.source,
            "coeffs": coeffs,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            d: usize,
            #[serde(rename = "L")]
            l: usize,
            source: String,
            coeffs: Vec<Vec<f64>>,
        }
        let raw: Raw = serde_json::from_value(v.clone())?;
        let mut s = Self::lebesgue(raw.d, raw.l)?;
        s.source = raw.source;
        for row in raw.coeffs {
            check_dim(raw.d + 2, row.len())?;
            let k: Vec<i64> = row[..raw.d].iter().map(|x| *x as i64).collect();
            let idx = s
                .index(&k)
                .ok_or_else(|| Error::Parse(format!("frequency {k:?} outside the box")))?;
            s.coeffs[idx] = Complex64::new(row[raw.d], row[raw.d + 1]);
        }
        Ok(s)
    }

    /// Little-endian layout: `d: u32, L: u32, count: u64`, then per nonzero
    /// frequency `d` signed 32-bit integers followed by `re, im` as `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.cutoff as u32).to_le_bytes())?;
        w.write_all(&((self.coeffs.len() - 1) as u64).to_le_bytes())?;
        for (k, c) in self.iter_nonzero() {
            for kj in k {
                w.write_all(&(kj as i32).to_le_bytes())?;
            }
            w.write_all(&c.re.to_le_bytes())?;
            w.write_all(&c.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R, source: impl Into<String>) -> Result<Self> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let l = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8);
        let mut s = Self::lebesgue(d, l)?;
        s.source = source.into();
        let mut k = vec![0i64; d];
        for _ in 0..count {
            for kj in k.iter_mut() {
                r.read_exact(&mut b4)?;
                *kj = i32::from_le_bytes(b4) as i64;
            }
            r.read_exact(&mut b8)?;
            let re = f64::from_le_bytes(b8);
            r.read_exact(&mut b8)?;
            let im = f64::from_le_bytes(b8);
            let idx = s
                .index(&k)
                .ok_or_else(|| Error::Parse(format!("frequency {k:?} outside the box")))?;
            s.coeffs[idx] = Complex64::new(re, im);
        }
        Ok(s)
    }
}

fn decode(mut idx: usize, d: usize, cutoff: usize) -> Vec<i64> {
    let side = 2 * cutoff + 1;
    let mut k = vec![0i64; d];
    for kj in k.iter_mut().rev() {
        *kj = (idx % side) as i64 - cutoff as i64;
        idx /= side;
    }
    k
}

#[inline]
fn unit(phase: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * phase).sin_cos();
    Complex64::new(c, s)
}

/// `(1/N) sum_n exp(2 pi i <k, x_n>)` with compensated accumulation.
pub fn exponential_sum(ps: &PointSet, k: &[i64]) -> Result<Complex64> {
    check_dim(ps.dim(), k.len())?;
    if k.iter().all(|x| *x == 0) {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mut acc = ComplexSum::new();
    for x in ps.iter() {
        let phase: f64 = x.iter().zip(k).map(|(xj, kj)| (*kj as f64 * xj).fract()).sum();
        acc.add(unit(phase));
    }
    Ok(acc.value() / ps.len() as f64)
}

/// Per-axis tables `e^{2 pi i k x}` for `k = 0..=L`, laid out `[k][point]`.
fn axis_table(ps: &PointSet, axis: usize, cutoff: usize) -> Vec<Complex64> {
    let n = ps.len();
    let mut table = vec![Complex64::new(0.0, 0.0); n * (cutoff + 1)];
    table
        .par_chunks_mut(ANCHOR_EVERY * n)
        .enumerate()
        .for_each(|(block, rows)| {
            let k0 = block * ANCHOR_EVERY;
            for (i, x) in ps.iter().enumerate() {
                let x = x[axis];
                let step = unit(x);
                let mut cur = unit((k0 as f64 * x).fract());
                for r in 0..rows.len() / n {
                    rows[r * n + i] = cur;
                    cur *= step;
                }
            }
        });
    table
}

/// `d = 1` without tables: each anchor block of frequencies walks the
/// points once. Same values and summation order as the table route.
fn line_coefficients(ps: &PointSet, cutoff: usize) -> Vec<Complex64> {
    let inv_n = 1.0 / ps.len() as f64;
    let blocks = cutoff / ANCHOR_EVERY + 1;
    let mut out: Vec<Complex64> = (0..blocks)
        .into_par_iter()
        .flat_map_iter(|block| {
            let k0 = block * ANCHOR_EVERY;
            let width = ANCHOR_EVERY.min(cutoff + 1 - k0);
            let mut acc = vec![ComplexSum::new(); width];
            for x in ps.iter() {
                let step = unit(x[0]);
                let mut cur = unit((k0 as f64 * x[0]).fract());
                for a in acc.iter_mut() {
                    a.add(cur);
                    cur *= step;
                }
            }
            acc.into_iter().map(move |a| a.value() * inv_n)
        })
        .collect();
    out.remove(0);
    out
}

/// All coefficients of the empirical measure on `[-L, L]^d`. Only the upper
/// half of the box is summed; the rest follows by conjugate symmetry.
pub fn build_spectrum(ps: &PointSet, cutoff: usize) -> Result<Spectrum> {
    let d = ps.dim();
    let total = box_len(d, cutoff)?;
    let n = ps.len();
    let table_len = n as f64 * (cutoff + 1) as f64 * d as f64;
    if table_len > MAX_BOX {
        return Err(Error::ResourceGuard(format!(
            "phase tables of {table_len:.3e} entries exceed {MAX_BOX:.0e}; lower N or the cutoff"
        )));
    }
    let center = total / 2;
    if d == 1 {
        return from_upper_half(ps, cutoff, total, line_coefficients(ps, cutoff));
    }
    let tables: Vec<Vec<Complex64>> = (0..d).map(|j| axis_table(ps, j, cutoff)).collect();
    let inv_n = 1.0 / n as f64;
    let upper: Vec<Complex64> = (center + 1..total)
        .into_par_iter()
        .map(|idx| {
            let k = decode(idx, d, cutoff);
            let rows: Vec<(&[Complex64], bool)> = k
                .iter()
                .zip(&tables)
                .map(|(kj, t)| {
                    let a = kj.unsigned_abs() as usize;
                    (&t[a * n..(a + 1) * n], *kj < 0)
                })
                .collect();
            let mut acc = ComplexSum::new();
            for i in 0..n {
                let mut z = Complex64::new(1.0, 0.0);
                for (row, neg) in &rows {
                    let e = row[i];
                    z *= if *neg { e.conj() } else { e };
                }
                acc.add(z);
            }
            acc.value() * inv_n
        })
        .collect();
    from_upper_half(ps, cutoff, total, upper)
}

fn from_upper_half(ps: &PointSet, cutoff: usize, total: usize, upper: Vec<Complex64>) -> Result<Spectrum> {
    let center = total / 2;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); total];
    coeffs[center] = Complex64::new(1.0, 0.0);
    for (i, c) in upper.into_iter().enumerate() {
        coeffs[center + 1 + i] = c;
        coeffs[center - 1 - i] = c.conj();
    }
    Spectrum::from_dense(ps.dim(), cutoff, coeffs, format!("points:{}", ps.label()))
}

/// `(1/N) sum_{n=1}^N e^{2 pi i n theta}` from exact `theta` and `N theta`
/// mod 1.
fn kronecker_coeff(theta: Frac128, n: u64) -> Complex64 {
    if theta.is_zero() {
        return Complex64::new(1.0, 0.0);
    }
    let a = theta.signed();
    let b = theta.mul_uint(n).signed();
    let ratio = (PI * b).sin() / (n as f64 * (PI * a).sin());
    unit(0.5 * (a + b)) * ratio
}

/// Exact spectrum of the Kronecker prefix `x_n = n alpha`, `n = 1..=N`, via
/// the closed-form geometric sum.
pub fn kronecker_spectrum(alpha: &[Frac128], n: u64, cutoff: usize) -> Result<Spectrum> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let d = alpha.len();
    Spectrum::from_fn(d, cutoff, format!("kronecker_closed_form:N={n}"), |k| {
        kronecker_coeff(numtheory::inner_frac(k, alpha), n)
    })
}

/// Moduli `min(1, 2 / (N ||<k, alpha>||))`; an upper envelope of the true
/// Kronecker spectrum rather than the spectrum itself.
pub fn kronecker_certified_spectrum(alpha: &[Frac128], n: u64, cutoff: usize) -> Result<Spectrum> {
    if n == 0 {
        return Err(Error::invalid("N must be at least 1"));
    }
    let d = alpha.len();
    let mut s = Spectrum::from_fn(d, cutoff, format!("kronecker_certified:N={n}"), |k| {
        let dist = numtheory::inner_frac(k, alpha).dist();
        Complex64::new(numtheory::geometric_factor(dist, n), 0.0)
    })?;
    let center = s.coeffs.len() / 2;
    s.coeffs[center] = Complex64::new(1.0, 0.0);
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormulaId {
    BoxedW2,
    Peyre1d,
    RandomWalk,
    Lemma1Sum,
}

/// A certified bound. `truncation_tail` is in squared units: it bounds the
/// omitted part of the sum under the square root and is already included in
/// `value`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    pub t_star: Option<f64>,
    pub truncation_tail: f64,
    pub t_grid: String,
    pub formula_id: FormulaId,
    pub source: String,
    pub cutoff: usize,
}

/// `2 * sum_{k > L} 1/k^2 < 2/L`.
fn zeta2_tail(cutoff: usize) -> f64 {
    2.0 / cutoff as f64
}

/// `(sum_{k != 0} |c_k|^2 / k^2)^{1/2}` in dimension one, with the omitted
/// frequencies bounded using `|c_k| <= 1`.
pub fn zinterhof_diaphony(spec: &Spectrum) -> Result<BoundReport> {
    if spec.dim() != 1 {
        return Err(Error::Unsupported(format!(
            "the unsmoothed diaphony is only finite in d = 1 (Dirac masses are not in H^-1 for d = {})",
            spec.dim()
        )));
    }
    let power = spec.radial_power();
    let sum: f64 = power
        .iter()
        .map(|&(n, p)| p / n as f64)
        .collect::<NeumaierSum>()
        .value();
    let tail = zeta2_tail(spec.cutoff());
    Ok(BoundReport {
        value: (sum + tail).sqrt(),
        t_star: None,
        truncation_tail: tail,
        t_grid: "none".into(),
        formula_id: FormulaId::Peyre1d,
        source: spec.source().to_string(),
        cutoff: spec.cutoff(),
    })
}

/// Rigorous bound on `sum_{|k|_inf > L} exp(-|k|^2 t) / |k|^2`.
///
/// In one dimension this is the integral comparison
/// `2 * int_L^inf exp(-t x^2) x^-2 dx`. In higher dimensions every omitted
/// frequency has `|k|^2 >= (L+1)^2`, and the Gaussian mass outside the cube
/// factorizes as `Theta^d - theta_L^d`, with the full theta sum bounded by
/// `theta_L + sqrt(pi/t) erfc(L sqrt(t))`.
pub fn lemma1_tail(d: usize, t: f64, cutoff: usize) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("heat time t must be positive, got {t}")));
    }
    if d == 0 || cutoff == 0 {
        return Err(Error::invalid("need d >= 1 and L >= 1"));
    }
    let l = cutoff as f64;
    let z = l * t.sqrt();
    let gauss_tail = (PI / t).sqrt() * libm::erfc(z);
    if d == 1 {
        let head = (-t * l * l).exp() / l;
        let raw = head - (PI * t).sqrt() * libm::erfc(z);
        // the difference cancels for large z; pad by a few ulps of `head`
        return Ok(2.0 * (raw.max(0.0) + 8.0 * f64::EPSILON * head));
    }
    let theta_l: f64 = 1.0 + 2.0 * (1..=cutoff).map(|k| (-(k as f64).powi(2) * t).exp()).collect::<NeumaierSum>().value();
    let outside = (theta_l + gauss_tail).powi(d as i32) - theta_l.powi(d as i32);
    let pad = 8.0 * f64::EPSILON * d as f64 * (theta_l + gauss_tail).powi(d as i32 - 1) * gauss_tail;
    Ok((outside.max(0.0) + pad) / (l + 1.0).powi(2))
}

/// Truncated heat-smoothed sum and its certified tail, both in squared
/// units.
fn heat_parts(power: &[(u64, f64)], d: usize, cutoff: usize, t: f64) -> Result<(f64, f64)> {
    let tail = lemma1_tail(d, t, cutoff)?;
    let sum = power
        .iter()
        .map(|&(n, p)| {
            let n = n as f64;
            (-n * t).exp() / n * p
        })
        .collect::<NeumaierSum>()
        .value();
    Ok((sum, tail))
}

/// `(sum_{k != 0} exp(-|k|^2 t) |c_k|^2 / |k|^2)^{1/2}`, with the omitted
/// frequencies bounded by [`lemma1_tail`].
pub fn heat_diaphony(spec: &Spectrum, t: f64) -> Result<f64> {
    let (sum, tail) = heat_parts(&spec.radial_power(), spec.dim(), spec.cutoff(), t)?;
    Ok((sum + tail).sqrt())
}

/// `N^-2 .. 1`, logarithmically spaced.
pub fn default_t_grid(n: usize) -> Vec<f64> {
    log_grid((n.max(1) as f64).powi(-2), 1.0, 40)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 || lo == hi {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// `ceil(4 N^{1/d})`.
pub fn default_cutoff(n: usize, d: usize) -> usize {
    (4.0 * (n as f64).powf(1.0 / d as f64)).ceil() as usize
}

/// Smoothing constant of the shipped bound. The heat flow moves mass by at
/// most `sqrt(d t / 2) / pi` in `W2`, and the smoothed measure is within
/// `(1/pi)` times the heat diaphony of `dx`; both are below the unit
/// constant for `d <= 19`.
pub const DEFAULT_C_SMOOTH: f64 = 1.0;

/// `min_t c_smooth sqrt(t) + heat_diaphony(t)` over the grid.
pub fn w2_upper_bound(spec: &Spectrum, t_grid: &[f64], c_smooth: f64) -> Result<BoundReport> {
    if t_grid.is_empty() {
        return Err(Error::invalid("t grid is empty"));
    }
    if let Some(t) = t_grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::invalid(format!("t grid entries must be positive, got {t}")));
    }
    if !(c_smooth > 0.0 && c_smooth.is_finite()) {
        return Err(Error::invalid(format!("c_smooth must be positive, got {c_smooth}")));
    }
    let power = spec.radial_power();
    let evals: Vec<(f64, f64, f64)> = t_grid
        .par_iter()
        .map(|&t| {
            let (sum, tail) = heat_parts(&power, spec.dim(), spec.cutoff(), t)?;
            Ok((c_smooth * t.sqrt() + (sum + tail).sqrt(), t, tail))
        })
        .collect::<Result<_>>()?;
    let best = evals
        .iter()
        .copied()
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .expect("grid is nonempty");
    let lo = t_grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t_grid.iter().copied().fold(0.0, f64::max);
    Ok(BoundReport {
        value: best.0,
        t_star: Some(best.1),
        truncation_tail: best.2,
        t_grid: format!("{} points in [{lo:e}, {hi:e}]", t_grid.len()),
        formula_id: FormulaId::BoxedW2,
        source: spec.source().to_string(),
        cutoff: spec.cutoff(),
    })
}

/// `(sum_{l != 0} cos(2 pi l alpha)^{2k} / l^2)^{1/2}` for the symmetric
/// `k`-step walk by `+-alpha` started at 0, truncated at `|l| <= L` with the
/// rest bounded by `2/L`.
pub fn random_walk_w2_bound(alpha: f64, steps: u64, cutoff: usize) -> Result<BoundReport> {
    if cutoff == 0 {
        return Err(Error::invalid("cutoff must be at least 1"));
    }
    let a = Frac128::from_f64(alpha)?;
    let mut acc = NeumaierSum::new();
    let mut theta = Frac128::ZERO;
    for l in 1..=cutoff {
        theta = theta.wrapping_add(a);
        let c = (2.0 * PI * theta.signed()).cos();
        acc.add(pow_u64(c * c, steps) / (l as f64 * l as f64));
    }
    let tail = zeta2_tail(cutoff);
    Ok(BoundReport {
        value: (2.0 * acc.value() + tail).sqrt(),
        t_star: None,
        truncation_tail: tail,
        t_grid: "none".into(),
        formula_id: FormulaId::RandomWalk,
        source: format!("random_walk:alpha={alpha},k={steps}"),
        cutoff,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSum {
    pub value: f64,
    /// Radius of the summed ball `|k| <= R`.
    pub radius: f64,
    /// Certified bound on everything outside the ball.
    pub tail_bound: f64,
}

const LATTICE_TAIL_TARGET: f64 = 1e-13;

/// `sum_{k in Z^d, k != 0} exp(-|k|^2 t) |k|^m`, summed over a ball large
/// enough that the certified remainder is below `1e-13`.
///
/// Outside radius `R` each term is at most
/// `sup_{x >= R} x^m exp(-x^2 t / 2)` times `exp(-|k|^2 t / 2)`, and the
/// latter sums to at most `(1 + sqrt(2 pi / t))^d`.
pub fn lemma1_sum(m: i32, d: usize, t: f64) -> Result<LatticeSum> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if m + (d as i32) < 0 {
        return Err(Error::Unsupported(format!("need m + d >= 0, got m={m}, d={d}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("t must be positive, got {t}")));
    }
    let mf = m as f64;
    let theta_half = (1.0 + (2.0 * PI / t).sqrt()).powi(d as i32);
    let tail_at = |r: f64| {
        let sup = if mf > 0.0 && r * r < mf / t {
            (mf / t).powf(mf / 2.0) * (-mf / 2.0).exp()
        } else {
            r.powf(mf) * (-r * r * t / 2.0).exp()
        };
        sup * theta_half
    };
    let mut radius = (80.0 / t).sqrt().max(4.0);
    while tail_at(radius) >= LATTICE_TAIL_TARGET {
        radius *= 1.1;
    }
    let r2 = (radius * radius).floor() as i64;
    let mut acc = NeumaierSum::new();
    orthant_sum(d, 0, 1.0, r2, &mut |n2, mult| {
        if n2 > 0 {
            let n = n2 as f64;
            acc.add(mult * (-n * t).exp() * n.powf(mf / 2.0));
        }
    });
    Ok(LatticeSum {
        value: acc.value(),
        radius,
        tail_bound: tail_at(radius),
    })
}

/// Visits every `k` in the closed nonnegative orthant with `|k|^2 <= r2`,
/// passing `|k|^2` and the number of sign patterns it stands for.
fn orthant_sum(levels: usize, partial: i64, mult: f64, r2: i64, f: &mut impl FnMut(i64, f64)) {
    if levels == 0 {
        f(partial, mult);
        return;
    }
    let mut a = 0i64;
    while partial + a * a <= r2 {
        let m = if a == 0 { mult } else { 2.0 * mult };
        orthant_sum(levels - 1, partial + a * a, m, r2, f);
        a += 1;
    }
}
