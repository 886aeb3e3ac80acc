//! Point-sequence generators: Kronecker rotations, van der Corput, quadratic
//! residues, regular grids and seeded uniform random points.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numtheory::{self, Frac128};
use crate::spectral::Spectrum;
use crate::torus::PointSet;

const PAR_THRESHOLD: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq)]
pub enum AlphaChoice {
    /// One of the shipped badly approximable vectors.
    Vetted,
    /// User supplied coordinates.
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SequenceSpec {
    Kronecker { choice: AlphaChoice, alpha: Vec<Frac128> },
    VanDerCorput { base: u64 },
    QuadraticResidues { p: u64 },
    RegularGrid { d: usize, m: usize },
    RandomUniform { d: usize, seed: u64 },
}

impl SequenceSpec {
    pub fn kronecker(alpha: &[f64]) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::invalid("kronecker alpha must have at least one coordinate"));
        }
        Ok(Self::Kronecker {
            choice: AlphaChoice::Explicit(alpha.to_vec()),
            alpha: numtheory::alpha_to_frac(alpha)?,
        })
    }

    pub fn kronecker_vetted(d: usize) -> Result<Self> {
        Ok(Self::Kronecker {
            choice: AlphaChoice::Vetted,
            alpha: numtheory::badly_approximable_frac(d)?,
        })
    }

    pub fn van_der_corput(base: u64) -> Result<Self> {
        if base < 2 {
            return Err(Error::invalid(format!("van der Corput base must be >= 2, got {base}")));
        }
        Ok(Self::VanDerCorput { base })
    }

    pub fn quadratic_residues(p: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::invalid(format!("quadratic residues need a prime p, got {p}")));
        }
        Ok(Self::QuadraticResidues { p })
    }

    pub fn regular_grid(d: usize, m: usize) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::invalid(format!("regular grid needs d >= 1 and m >= 1, got d={d}, m={m}")));
        }
        checked_pow(m, d)?;
        Ok(Self::RegularGrid { d, m })
    }

    pub fn random_uniform(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("random points need d >= 1"));
        }
        Ok(Self::RandomUniform { d, seed })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Kronecker { alpha, .. } => alpha.len(),
            Self::VanDerCorput { .. } | Self::QuadraticResidues { .. } => 1,
            Self::RegularGrid { d, .. } | Self::RandomUniform { d, .. } => *d,
        }
    }

    /// Number of points for the kinds that describe a finite set.
    pub fn natural_len(&self) -> Option<usize> {
        match self {
            Self::QuadraticResidues { p } => Some(*p as usize),
            Self::RegularGrid { d, m } => checked_pow(*m, *d).ok(),
            _ => None,
        }
    }

    pub fn is_prefix_stable(&self) -> bool {
        matches!(
            self,
            Self::Kronecker { .. } | Self::VanDerCorput { .. } | Self::RandomUniform { .. }
        )
    }

    pub fn alpha(&self) -> Option<&[Frac128]> {
        match self {
            Self::Kronecker { alpha, .. } => Some(alpha),
            _ => None,
        }
    }
}

impl fmt::Display for SequenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Kronecker { choice, alpha } => match choice {
                AlphaChoice::Vetted => write!(f, "kronecker:d={},alpha=auto", alpha.len()),
                AlphaChoice::Explicit(a) => {
                    let parts: Vec<String> = a.iter().map(|x| format!("{x}")).collect();
                    write!(f, "kronecker:d={},alpha={}", a.len(), parts.join(";"))
                }
            },
            Self::VanDerCorput { base } => write!(f, "van_der_corput:base={base}"),
            Self::QuadraticResidues { p } => write!(f, "quadratic_residues:p={p}"),
            Self::RegularGrid { d, m } => write!(f, "regular_grid:d={d},m={m}"),
            Self::RandomUniform { d, seed } => write!(f, "random_uniform:d={d},seed={seed}"),
        }
    }
}

impl FromStr for SequenceSpec {
    type Err = Error;

    /// Grammar: `kind:param=value,param=value`. Kinds and their parameters:
    ///
    /// - `kronecker` / `kron`: `d`, `alpha=auto|golden|a;b;c`
    /// - `van_der_corput` / `vdc`: `base`
    /// - `quadratic_residues` / `qr`: `p`
    /// - `regular_grid` / `grid`: `d`, `m`
    /// - `random_uniform` / `random`: `d`, `seed` (required)
    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: String| Error::spec(s, reason);
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut params: Vec<(&str, &str)> = Vec::new();
        for item in rest.split(',').filter(|x| !x.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| bad(format!("parameter `{item}` is not key=value")))?;
            params.push((k.trim(), v.trim()));
        }
        let get = |key: &str| params.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let allow = |keys: &[&str]| -> Result<()> {
            match params.iter().find(|(k, _)| !keys.contains(k)) {
                Some((k, _)) => Err(bad(format!("unknown parameter `{k}` for {kind}"))),
                None => Ok(()),
            }
        };
        let int = |key: &str| -> Result<Option<u64>> {
            get(key)
                .map(|v| v.parse::<u64>().map_err(|_| bad(format!("`{key}={v}` is not a nonnegative integer"))))
                .transpose()
        };
        let need = |key: &str| -> Result<u64> { int(key)?.ok_or_else(|| bad(format!("missing `{key}`"))) };
        let wrap = |r: Result<SequenceSpec>| r.map_err(|e| bad(e.to_string()));

        match kind.trim() {
            "kronecker" | "kron" => {
                allow(&["d", "alpha"])?;
                let d = int("d")?.map(|d| d as usize);
                match get("alpha").unwrap_or("auto") {
                    "auto" => wrap(Self::kronecker_vetted(d.unwrap_or(1))),
                    "golden" => {
                        if d.unwrap_or(1) != 1 {
                            return Err(bad("alpha=golden is one-dimensional".into()));
                        }
                        wrap(Self::kronecker_vetted(1))
                    }
                    list => {
                        let alpha = list
                            .split(';')
                            .map(|x| x.trim().parse::<f64>().map_err(|_| bad(format!("bad alpha coordinate `{x}`"))))
                            .collect::<Result<Vec<f64>>>()?;
                        if let Some(d) = d {
                            if d != alpha.len() {
                                return Err(bad(format!("d={d} but alpha has {} coordinates", alpha.len())));
                            }
                        }
                        wrap(Self::kronecker(&alpha))
                    }
                }
            }
            "van_der_corput" | "vdc" => {
                allow(&["base", "d"])?;
                if int("d")?.is_some_and(|d| d != 1) {
                    return Err(bad("van der Corput requires d = 1".into()));
                }
                wrap(Self::van_der_corput(int("base")?.unwrap_or(2)))
            }
            "quadratic_residues" | "qr" => {
                allow(&["p", "d"])?;
                if int("d")?.is_some_and(|d| d != 1) {
                    return Err(bad("quadratic residues require d = 1".into()));
                }
                wrap(Self::quadratic_residues(need("p")?))
            }
            "regular_grid" | "grid" => {
                allow(&["d", "m"])?;
                wrap(Self::regular_grid(need("d")? as usize, need("m")? as usize))
            }
            "random_uniform" | "random" => {
                allow(&["d", "seed"])?;
                wrap(Self::random_uniform(int("d")?.unwrap_or(1) as usize, need("seed")?))
            }
            other => Err(bad(format!("unknown sequence kind `{other}`"))),
        }
    }
}

fn checked_pow(m: usize, d: usize) -> Result<usize> {
    let mut n: usize = 1;
    for _ in 0..d {
        n = n
            .checked_mul(m)
            .ok_or_else(|| Error::ResourceGuard(format!("grid m^d = {m}^{d} overflows")))?;
    }
    Ok(n)
}

pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    if p < 4 {
        return true;
    }
    if p.is_multiple_of(2) {
        return false;
    }
    let mut f = 3u64;
    while f.saturating_mul(f) <= p {
        if p.is_multiple_of(f) {
            return false;
        }
        f += 2;
    }
    true
}

/// Digit reversal of `n` in `base`: returns `(num, den)` with the radical
/// inverse equal to `num / den` and `den` a power of `base`.
pub fn radical_inverse_exact(mut n: u64, base: u64) -> (u128, u128) {
    let b = base as u128;
    let (mut num, mut den) = (0u128, 1u128);
    while n > 0 {
        num = num * b + (n % base) as u128;
        den *= b;
        n /= base;
    }
    (num, den)
}

pub fn radical_inverse(n: u64, base: u64) -> f64 {
    let (num, den) = radical_inverse_exact(n, base);
    num as f64 / den as f64
}

/// `count` consecutive points starting at index `start` (1-based).
pub fn generate(spec: &SequenceSpec, start: u64, count: usize) -> Result<PointSet> {
    if start == 0 {
        return Err(Error::invalid("sequence indices start at 1"));
    }
    if count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let label = spec.to_string();
    let d = spec.dim();
    start
        .checked_add(count as u64 - 1)
        .ok_or_else(|| Error::invalid("index range overflows"))?;
    let coords = match spec {
        SequenceSpec::Kronecker { alpha, .. } => fill(count, d, |i, out| {
            let n = start + i as u64;
            for (o, a) in out.iter_mut().zip(alpha) {
                *o = a.mul_uint(n).to_f64();
            }
        }),
        SequenceSpec::VanDerCorput { base } => fill(count, 1, |i, out| {
            out[0] = radical_inverse(start + i as u64, *base);
        }),
        SequenceSpec::QuadraticResidues { p } => {
            if start != 1 || count as u64 != *p {
                return Err(Error::invalid(format!(
                    "quadratic residues are the finite set k = 1..={p}; request start=1, count={p}"
                )));
            }
            let p = *p;
            fill(count, 1, |i, out| {
                let k = (i as u128) + 1;
                out[0] = ((k * k) % p as u128) as f64 / p as f64;
            })
        }
        SequenceSpec::RegularGrid { d, m } => {
            let total = checked_pow(*m, *d)?;
            if start != 1 || count != total {
                return Err(Error::invalid(format!(
                    "regular grid with m={m}, d={d} has exactly {total} points; request start=1, count={total}"
                )));
            }
            let m = *m;
            fill(count, *d, |i, out| {
                // first coordinate varies slowest
                let mut r = i;
                for o in out.iter_mut().rev() {
                    *o = ((r % m) as f64 + 0.5) / m as f64;
                    r /= m;
                }
            })
        }
        SequenceSpec::RandomUniform { d, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            // each coordinate consumes two 32-bit words of the stream
            rng.set_word_pos((start as u128 - 1) * (*d as u128) * 2);
            let mut coords = vec![0.0; count * d];
            for c in coords.iter_mut() {
                *c = (rng.next_u64() >> 11) as f64 * (1.0 / 9007199254740992.0);
            }
            coords
        }
    };
    PointSet::from_flat(d, coords, label)
}

fn fill(count: usize, d: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Vec<f64> {
    let mut coords = vec![0.0; count * d];
    if count >= PAR_THRESHOLD {
        coords
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(i, out)| f(i, out));
    } else {
        for (i, out) in coords.chunks_mut(d).enumerate() {
            f(i, out);
        }
    }
    coords
}

/// Generates the natural set for finite kinds and the first `n` points
/// otherwise.
pub fn generate_n(spec: &SequenceSpec, n: Option<usize>) -> Result<PointSet> {
    match (spec.natural_len(), n) {
        (Some(len), Some(n)) if n != len => Err(Error::invalid(format!(
            "{spec} has exactly {len} points, cannot take {n}"
        ))),
        (Some(len), _) => generate(spec, 1, len),
        (None, Some(n)) => generate(spec, 1, n),
        (None, None) => Err(Error::invalid(format!("{spec} is infinite; give a point count"))),
    }
}

/// Fourier coefficients `cos(2 pi l alpha)^k`, `|l| <= L`, of the `k`-step
/// random walk started at 0 that jumps by `+alpha` or `-alpha` with equal
/// probability.
pub fn random_walk_measure_spectrum(alpha: f64, steps: u64, cutoff: usize) -> Result<Spectrum> {
    if cutoff == 0 {
        return Err(Error::invalid("cutoff must be at least 1"));
    }
    let a = Frac128::from_f64(alpha)?;
    let coeffs: Vec<Complex64> = (-(cutoff as i64)..=cutoff as i64)
        .map(|l| Complex64::new(walk_coeff(a, l, steps), 0.0))
        .collect();
    Spectrum::from_dense(1, cutoff, coeffs, format!("random_walk:alpha={alpha},k={steps}"))
}

pub(crate) fn walk_coeff(alpha: Frac128, l: i64, steps: u64) -> f64 {
    let c = (2.0 * std::f64::consts::PI * alpha.mul_int(l).signed()).cos();
    pow_u64(c, steps)
}

pub(crate) fn pow_u64(x: f64, k: u64) -> f64 {
    if k <= i32::MAX as u64 {
        x.powi(k as i32)
    } else {
        x.abs().powf(k as f64) * if x < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 }
    }
}
