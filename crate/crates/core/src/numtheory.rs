//! Diophantine utilities: nearest-integer distance, continued fractions,
//! badness certificates and the geometric-series bound on Kronecker sums.
//!
//! Inner products `<k, alpha> mod 1` are evaluated exactly on 128-bit
//! fixed-point fractions, so the result carries no rounding error beyond the
//! representation of `alpha` itself.

use std::sync::OnceLock;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_POW_64: f64 = 18446744073709551616.0;

/// A point of the circle `R/Z` held as `value / 2^128`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Frac128(pub u128);

impl Frac128 {
    pub const ZERO: Frac128 = Frac128(0);
    pub const HALF: Frac128 = Frac128(1 << 127);

    /// Exact image of `x mod 1` up to truncation below `2^-128`.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(Error::invalid(format!("non-finite value {x}")));
        }
        let r = crate::torus::reduce(x);
        let scaled = r * TWO_POW_64;
        let hi = scaled.floor();
        let lo = (scaled - hi) * TWO_POW_64;
        Ok(Frac128(((hi as u64 as u128) << 64) | lo as u64 as u128))
    }

    /// Nearest double, kept below 1.
    pub fn to_f64(self) -> f64 {
        let x = self.0 as f64 * 2f64.powi(-128);
        if x >= 1.0 {
            1.0 - f64::EPSILON / 2.0
        } else {
            x
        }
    }

    /// Representative in `[-1/2, 1/2)`.
    pub fn signed(self) -> f64 {
        let s = self.0 as i128;
        let hi = (s >> 64) as f64;
        let lo = (self.0 as u64) as f64;
        (hi + lo / TWO_POW_64) / TWO_POW_64
    }

    /// Distance to the nearest integer.
    pub fn dist(self) -> f64 {
        let m = self.0.min(self.0.wrapping_neg());
        ((m >> 64) as u64 as f64 + (m as u64) as f64 / TWO_POW_64) / TWO_POW_64
    }

    #[inline]
    pub fn wrapping_add(self, o: Frac128) -> Frac128 {
        Frac128(self.0.wrapping_add(o.0))
    }

    #[inline]
    pub fn wrapping_sub(self, o: Frac128) -> Frac128 {
        Frac128(self.0.wrapping_sub(o.0))
    }

    /// `k * self mod 1`, exact for any signed integer `k`.
    #[inline]
    pub fn mul_int(self, k: i64) -> Frac128 {
        Frac128((k as i128 as u128).wrapping_mul(self.0))
    }

    #[inline]
    pub fn mul_uint(self, n: u64) -> Frac128 {
        Frac128((n as u128).wrapping_mul(self.0))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

/// `<k, alpha> mod 1`.
pub fn inner_frac(k: &[i64], alpha: &[Frac128]) -> Frac128 {
    k.iter()
        .zip(alpha)
        .fold(Frac128::ZERO, |acc, (ki, a)| acc.wrapping_add(a.mul_int(*ki)))
}

pub fn alpha_to_frac(alpha: &[f64]) -> Result<Vec<Frac128>> {
    alpha.iter().map(|a| Frac128::from_f64(*a)).collect()
}

/// Distance from `x` to the nearest integer.
pub fn dist_nearest_int(x: f64) -> f64 {
    let f = x - x.floor();
    f.min(1.0 - f)
}

/// Partial quotients of the exact rational value of `x`.
///
/// A double is a dyadic rational, so the expansion is finite; it is truncated
/// after `terms` entries.
pub fn continued_fraction(x: f64, terms: usize) -> Result<Vec<i64>> {
    if terms == 0 {
        return Err(Error::invalid("need at least one term"));
    }
    if !x.is_finite() || x.abs() >= 9.2e18 {
        return Err(Error::invalid(format!("cannot expand {x}")));
    }
    let a0 = x.floor();
    let mut out = vec![a0 as i64];
    // x - floor(x) is exact for doubles in this range
    let frac = x - a0;
    if frac == 0.0 {
        return Ok(out);
    }
    let (mant, exp) = decompose(frac);
    let mut num = BigUint::from(mant);
    let mut den = BigUint::one() << exp;
    while out.len() < terms && !num.is_zero() {
        let q = &den / &num;
        let r = &den % &num;
        out.push(q.to_i64().ok_or_else(|| Error::invalid("partial quotient overflow"))?);
        den = num;
        num = r;
    }
    Ok(out)
}

/// `x = mant / 2^exp` for `0 < x < 1`.
fn decompose(x: f64) -> (u64, u32) {
    let bits = x.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let (mut mant, mut exp) = if biased == 0 {
        (bits & ((1 << 52) - 1), 1074u32)
    } else {
        ((bits & ((1 << 52) - 1)) | (1 << 52), (1075 - biased) as u32)
    };
    while mant & 1 == 0 && exp > 0 {
        mant >>= 1;
        exp -= 1;
    }
    (mant, exp)
}

/// Convergents `p_n / q_n` of a list of partial quotients.
pub fn convergents(cf: &[i64]) -> Vec<(i128, i128)> {
    let (mut p0, mut q0, mut p1, mut q1) = (1i128, 0i128, cf.first().copied().unwrap_or(0) as i128, 1i128);
    let mut out = vec![(p1, q1)];
    for a in cf.iter().skip(1) {
        let a = *a as i128;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        out.push((p2, q2));
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
    }
    out
}

// Fraction bits used while bisecting for algebraic constants.
const SCALE: u64 = 200;

fn top_fraction_bits(x: &BigUint) -> Frac128 {
    let mask = (BigUint::one() << SCALE) - BigUint::one();
    let frac = (x & &mask) >> (SCALE - 128);
    Frac128(frac.to_u128().expect("fits in 128 bits"))
}

/// Largest integer `x` in `[lo, hi)` with `pred(x)` false, assuming `pred`
/// is monotone and false at `lo`.
fn bisect(mut lo: BigUint, mut hi: BigUint, pred: impl Fn(&BigUint) -> bool) -> BigUint {
    let one = BigUint::one();
    while &hi - &lo > one {
        let mid = (&lo + &hi) >> 1;
        if pred(&mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Real root in `(1, 2)` of `x^deg = x + 1`, scaled by `2^SCALE`.
fn unit_root(deg: u32) -> BigUint {
    let one = BigUint::one() << SCALE;
    let two = &one << 1;
    bisect(one.clone(), two, |x| {
        // x^deg / S^(deg-1) > x + S  <=>  x^deg > (x + S) S^(deg-1)
        let lhs = x.pow(deg);
        let rhs = (x + &one) << (SCALE * (deg as u64 - 1));
        lhs > rhs
    })
}

fn scaled_powers(theta: &BigUint, count: usize) -> Vec<Frac128> {
    let mut out = Vec::with_capacity(count);
    let mut p = theta.clone();
    for _ in 0..count {
        out.push(top_fraction_bits(&p));
        p = (&p * theta) >> SCALE;
    }
    out
}

fn vetted(d: usize) -> &'static [Frac128] {
    static CACHE: OnceLock<[Vec<Frac128>; 3]> = OnceLock::new();
    let all = CACHE.get_or_init(|| {
        // (sqrt(5) - 1) / 2
        let five = BigUint::from(5u32) << (2 * SCALE);
        let golden = (five.sqrt() - (BigUint::one() << SCALE)) >> 1;
        let d1 = vec![top_fraction_bits(&golden)];
        let d2 = scaled_powers(&unit_root(3), 2);
        let d3 = scaled_powers(&unit_root(4), 3);
        [d1, d2, d3]
    });
    &all[d - 1]
}

/// The shipped badly approximable vectors at full fixed-point precision:
/// the golden ratio for `d = 1`, powers of the plastic number (root of
/// `x^3 = x + 1`) for `d = 2`, and powers of the root of `x^4 = x + 1` for
/// `d = 3`, all reduced mod 1.
pub fn badly_approximable_frac(d: usize) -> Result<Vec<Frac128>> {
    match d {
        1..=3 => Ok(vetted(d).to_vec()),
        0 => Err(Error::invalid("dimension must be at least 1")),
        _ => Err(Error::Unsupported(format!(
            "no vetted badly approximable vector in dimension {d}; supply alpha explicitly"
        ))),
    }
}

pub fn badly_approximable_alpha(d: usize) -> Result<Vec<f64>> {
    Ok(badly_approximable_frac(d)?.into_iter().map(Frac128::to_f64).collect())
}

/// Regression floors of the shipped vectors over the box `|k|_inf <= 1000`:
/// `min ||k||_inf^d * ||<k, alpha>||`.
pub const VETTED_LINEAR_FORM_FLOOR_K1000: [f64; 2] = [0.381966011250105, 0.079595623491439];

const MAX_BOX: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadnessCertificate {
    pub alpha: Vec<f64>,
    #[serde(rename = "K")]
    pub k: u64,
    pub simultaneous_floor: f64,
    pub linear_form_floor: f64,
    pub argmin_k: Vec<i64>,
}

/// Exhaustive certificate over `1 <= q <= K` and `0 < |k|_inf <= K`, with
/// the linear form weighted by `|k|_inf^d`.
pub fn linear_form_badness(alpha: &[f64], k_max: u64) -> Result<BadnessCertificate> {
    let frac = alpha_to_frac(alpha)?;
    let mut cert = linear_form_badness_frac(&frac, k_max)?;
    cert.alpha = alpha.to_vec();
    Ok(cert)
}

pub fn linear_form_badness_frac(alpha: &[Frac128], k_max: u64) -> Result<BadnessCertificate> {
    let d = alpha.len();
    if d == 0 {
        return Err(Error::invalid("alpha must have at least one coordinate"));
    }
    if k_max == 0 {
        return Err(Error::invalid("search radius K must be at least 1"));
    }
    let points = (2.0 * k_max as f64 + 1.0).powi(d as i32);
    if points > MAX_BOX {
        return Err(Error::ResourceGuard(format!(
            "frequency box (2K+1)^{d} = {points:.3e} exceeds {MAX_BOX:.0e}; lower K"
        )));
    }
    let k_max = i64::try_from(k_max).map_err(|_| Error::invalid("K too large"))?;

    let inv_d = 1.0 / d as f64;
    let simultaneous_floor = (1..=k_max)
        .into_par_iter()
        .map(|q| {
            let worst = alpha.iter().map(|a| a.mul_int(q).dist()).fold(0.0, f64::max);
            (q as f64).powf(inv_d) * worst
        })
        .reduce(|| f64::INFINITY, f64::min);

    // k and -k give the same value, so only frequencies whose first nonzero
    // coordinate is positive are visited.
    let best = (0..=k_max)
        .into_par_iter()
        .map(|k1| scan_first_coord(alpha, k1, k_max))
        .reduce(|| None, pick_min)
        .expect("box is nonempty");

    Ok(BadnessCertificate {
        alpha: alpha.iter().map(|a| a.to_f64()).collect(),
        k: k_max as u64,
        simultaneous_floor,
        linear_form_floor: best.0,
        argmin_k: best.1,
    })
}

type Candidate = Option<(f64, Vec<i64>)>;

fn pick_min(a: Candidate, b: Candidate) -> Candidate {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

fn scan_first_coord(alpha: &[Frac128], k1: i64, k_max: i64) -> Candidate {
    let d = alpha.len();
    let mut prefix = vec![0i64; d];
    prefix[0] = k1;
    if d == 1 {
        if k1 == 0 {
            return None;
        }
        let v = (k1 as f64) * alpha[0].mul_int(k1).dist();
        return Some((v, prefix));
    }
    for x in prefix[1..d - 1].iter_mut() {
        *x = -k_max;
    }
    let mut best = None;
    // odometer over the middle coordinates; the last one is the inner loop
    loop {
        best = pick_min(best, scan_last_coord(alpha, &prefix, k_max));
        let mut j = d - 2;
        loop {
            if j == 0 {
                return best;
            }
            if prefix[j] < k_max {
                prefix[j] += 1;
                break;
            }
            prefix[j] = -k_max;
            j -= 1;
        }
    }
}

fn scan_last_coord(alpha: &[Frac128], prefix: &[i64], k_max: i64) -> Candidate {
    let d = alpha.len();
    let first_nonzero = prefix[..d - 1].iter().find(|x| **x != 0).copied();
    let start = match first_nonzero {
        Some(v) if v < 0 => return None,
        Some(_) => -k_max,
        None => 1,
    };
    let pnorm = prefix[..d - 1].iter().map(|x| x.abs()).max().unwrap_or(0);
    let last = alpha[d - 1];
    let mut acc = inner_frac(&prefix[..d - 1], &alpha[..d - 1]).wrapping_add(last.mul_int(start));
    let mut best_v = f64::INFINITY;
    let mut best_k = start;
    for kl in start..=k_max {
        let norm = pnorm.max(kl.abs()) as f64;
        let v = norm.powi(d as i32) * acc.dist();
        if v < best_v {
            best_v = v;
            best_k = kl;
        }
        acc = acc.wrapping_add(last);
    }
    let mut k = prefix[..d - 1].to_vec();
    k.push(best_k);
    Some((best_v, k))
}

/// `min(1, (2/N) / ||<k, alpha>||)`, or 1 when `<k, alpha>` is an integer.
pub fn geometric_sum_bound(alpha: &[Frac128], k: &[i64], n: u64) -> Result<f64> {
    if alpha.len() != k.len() {
        return Err(Error::DimensionMismatch {
            expected: alpha.len(),
            found: k.len(),
        });
    }
    Ok(geometric_factor(inner_frac(k, alpha).dist(), n))
}

/// The geometric-series bound expressed through `||<k, alpha>||` directly.
pub fn geometric_factor(dist: f64, n: u64) -> f64 {
    if dist <= 0.0 || n == 0 {
        return 1.0;
    }
    (2.0 / (n as f64 * dist)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GOLDEN_FRAC: f64 = 0.6180339887498949;

    #[test]
    fn nearest_int_examples() {
        assert!((dist_nearest_int(0.7) - 0.3).abs() < 1e-15);
        assert_eq!(dist_nearest_int(3.0), 0.0);
        assert!((dist_nearest_int(-0.2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn continued_fraction_examples() {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_eq!(continued_fraction(phi, 5).unwrap(), vec![1, 1, 1, 1, 1]);
        assert_eq!(continued_fraction(2f64.sqrt(), 4).unwrap(), vec![1, 2, 2, 2]);
        assert_eq!(continued_fraction(0.25, 100).unwrap(), vec![0, 4]);
        assert_eq!(continued_fraction(-1.5, 10).unwrap(), vec![-2, 2]);
    }

    #[test]
    fn convergents_approximate() {
        let x = std::f64::consts::PI;
        let cf = continued_fraction(x, 6).unwrap();
        assert_eq!(cf, vec![3, 7, 15, 1, 292, 1]);
        for (p, q) in convergents(&cf) {
            let err = (x - p as f64 / q as f64).abs();
            assert!(err < 1.0 / (q * q) as f64);
        }
    }

    #[test]
    fn frac_round_trip() {
        let f = Frac128::from_f64(0.75).unwrap();
        assert_eq!(f.0, 3u128 << 126);
        assert_eq!(f.to_f64(), 0.75);
        assert_eq!(Frac128::from_f64(-0.25).unwrap(), f);
        assert_eq!(f.signed(), -0.25);
        assert_eq!(f.dist(), 0.25);
        assert_eq!(f.mul_int(-3).to_f64(), 0.75);
        assert_eq!(Frac128::from_f64(GOLDEN_FRAC).unwrap().to_f64(), GOLDEN_FRAC);
    }

    #[test]
    fn vetted_vectors() {
        let a1 = badly_approximable_alpha(1).unwrap();
        assert!((a1[0] - GOLDEN_FRAC).abs() < 1e-16);
        let a2 = badly_approximable_alpha(2).unwrap();
        assert!((a2[0] - 0.324717957244746).abs() < 1e-15);
        assert!((a2[1] - 0.7548776662466927).abs() < 1e-15);
        let a3 = badly_approximable_alpha(3).unwrap();
        // theta^4 = theta + 1 for theta = 1.2207440846...
        let theta = 1.0 + a3[0];
        assert!((theta.powi(4) - theta - 1.0).abs() < 1e-12);
        assert!((a3[1] - (theta * theta).fract()).abs() < 1e-12);
        assert!(matches!(badly_approximable_alpha(4), Err(Error::Unsupported(_))));
    }

    #[test]
    fn certificate_examples() {
        let c = linear_form_badness(&[(1.0 + 5f64.sqrt()) / 2.0], 100).unwrap();
        assert!((c.linear_form_floor - 0.3819660112501051).abs() < 1e-12);
        assert_eq!(c.argmin_k, vec![1]);
        let c = linear_form_badness(&[0.5], 2).unwrap();
        assert_eq!(c.linear_form_floor, 0.0);
        assert_eq!(c.simultaneous_floor, 0.0);
        assert!(linear_form_badness(&[0.1, 0.2, 0.3], 1000).is_err());
    }

    #[test]
    fn certificate_matches_naive_scan() {
        let alpha = badly_approximable_frac(2).unwrap();
        let c = linear_form_badness_frac(&alpha, 40).unwrap();
        let mut best = f64::INFINITY;
        for a in -40i64..=40 {
            for b in -40i64..=40 {
                if a == 0 && b == 0 {
                    continue;
                }
                let x = a as f64 * alpha[0].to_f64() + b as f64 * alpha[1].to_f64();
                let n = a.abs().max(b.abs()) as f64;
                best = best.min(n * n * dist_nearest_int(x));
            }
        }
        assert!((c.linear_form_floor - best).abs() < 1e-12);
        let v = inner_frac(&c.argmin_k, &alpha).dist();
        let n = c.argmin_k.iter().map(|x| x.abs()).max().unwrap() as f64;
        assert_eq!(n * n * v, c.linear_form_floor);
    }

    #[test]
    fn vetted_floor_regression() {
        for d in 1..=2 {
            let alpha = badly_approximable_frac(d).unwrap();
            let c = linear_form_badness_frac(&alpha, 1000).unwrap();
            let want = VETTED_LINEAR_FORM_FLOOR_K1000[d - 1];
            assert!((c.linear_form_floor - want).abs() < 1e-12, "d={d}: {}", c.linear_form_floor);
            assert!(c.simultaneous_floor > 0.0);
        }
    }

    #[test]
    fn geometric_bound_examples() {
        assert_eq!(geometric_factor(0.25, 8), 1.0);
        assert!((geometric_factor(0.5, 100) - 0.04).abs() < 1e-15);
        assert_eq!(geometric_factor(0.0, 100), 1.0);
        let alpha = badly_approximable_frac(1).unwrap();
        let b = geometric_sum_bound(&alpha, &[1], 1000).unwrap();
        assert!((b - 0.005236067977).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn nearest_int_periodic(x in -1e6f64..1e6, m in -1000i32..1000) {
            let a = dist_nearest_int(x.fract());
            let b = dist_nearest_int(x.fract() + m as f64);
            prop_assert!((0.0..=0.5).contains(&a));
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn exact_mod_one_is_periodic(bits in any::<u128>(), m in -1000i64..1000, k in -1000i64..1000) {
            let a = Frac128(bits);
            prop_assert_eq!(a.mul_int(k + m).wrapping_sub(a.mul_int(m)), a.mul_int(k));
        }
    }
}
