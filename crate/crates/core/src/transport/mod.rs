//! Ground-truth Wasserstein distances: closed forms on the circle, a
//! network-simplex oracle for discrete problems, a bracket for `W2(mu, dx)`
//! on the two-torus, and the universal packing lower bound.

mod bracket;
mod circle;
mod entropic;
mod simplex;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::summation::NeumaierSum;
use crate::torus::{wrap_distance_raw, EmpiricalMeasure};

pub use bracket::{w2_torus_bracket, BracketMethod, W2Bracket};
pub use circle::{
    star_discrepancy_1d, w1_circle_exact, w2_circle_exact, Discrepancy,
};
pub use entropic::{sinkhorn_log, SinkhornResult};
pub use simplex::{NetworkSimplex, SimplexStatus};

/// Largest `rows * cols` accepted by the dense oracle.
pub const ORACLE_MAX_ENTRIES: usize = 4_000_000;

/// Integer resolution used when general weights are rounded for the
/// integral network simplex.
const MASS_BITS: u32 = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// `(i, j, mass)` with positive mass.
    pub entries: Vec<(usize, usize, f64)>,
    pub cost: f64,
    pub p: f64,
}

impl TransportPlan {
    /// Largest deviation of the plan's marginals from `a` and `b`.
    pub fn marginal_defect(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut rows = vec![NeumaierSum::new(); self.rows];
        let mut cols = vec![NeumaierSum::new(); self.cols];
        for &(i, j, m) in &self.entries {
            rows[i].add(m);
            cols[j].add(m);
        }
        let r = rows.iter().zip(a).map(|(s, w)| (s.value() - w).abs());
        let c = cols.iter().zip(b).map(|(s, w)| (s.value() - w).abs());
        r.chain(c).fold(0.0, f64::max)
    }

    pub fn recompute_cost(&self, cost: impl Fn(usize, usize) -> f64) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, m)| m * cost(i, j))
            .collect::<NeumaierSum>()
            .value()
    }

    /// `cost^{1/p}`.
    pub fn distance(&self) -> f64 {
        self.cost.max(0.0).powf(1.0 / self.p)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "i,j,mass")?;
        for (i, j, m) in &self.entries {
            writeln!(w, "{i},{j},{m:.16e}")?;
        }
        Ok(())
    }
}

/// Integer masses summing to a common total for both sides. Uniform weights
/// are scaled exactly; anything else is rounded to `2^-40` with the largest
/// remainders absorbing the difference.
pub(crate) fn integer_masses(a: &[f64], b: &[f64]) -> (Vec<i64>, Vec<i64>, f64) {
    let uniform = |w: &[f64]| w.iter().all(|x| *x == w[0]);
    if uniform(a) && uniform(b) {
        let (m, n) = (a.len() as i64, b.len() as i64);
        let g = gcd(m, n);
        let total = m / g * n;
        return (vec![n / g; a.len()], vec![m / g; b.len()], total as f64);
    }
    let scale = (1u64 << MASS_BITS) as f64;
    (round_to_total(a, scale), round_to_total(b, scale), scale)
}

fn round_to_total(w: &[f64], scale: f64) -> Vec<i64> {
    let total = scale as i64;
    let mut out: Vec<i64> = w.iter().map(|x| (x * scale).floor() as i64).collect();
    let mut short = total - out.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..w.len()).collect();
    // largest fractional parts first, index order breaking ties
    order.sort_by(|&i, &j| {
        let fi = w[i] * scale - out[i] as f64;
        let fj = w[j] * scale - out[j] as f64;
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    let mut k = 0;
    while short > 0 {
        out[order[k % order.len()]] += 1;
        short -= 1;
        k += 1;
    }
    while short < 0 {
        let i = order[order.len() - 1 - (k % order.len())];
        if out[i] > 0 {
            out[i] -= 1;
            short += 1;
        }
        k += 1;
    }
    out
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

/// Exact optimum of the transportation problem between weight vectors `a`
/// and `b` with the given cost, by network simplex over the complete
/// bipartite graph.
pub fn transport_lp(a: &[f64], b: &[f64], cost: impl Fn(usize, usize) -> f64, p: f64) -> Result<TransportPlan> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("both measures need at least one atom"));
    }
    if a.len().saturating_mul(b.len()) > ORACLE_MAX_ENTRIES {
        return Err(Error::ResourceGuard(format!(
            "{} x {} problem exceeds the oracle limit of {ORACLE_MAX_ENTRIES} entries",
            a.len(),
            b.len()
        )));
    }
    for w in a.iter().chain(b) {
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::invalid(format!("weight {w} is not a nonnegative real")));
        }
    }
    let sa = crate::summation::sum(a.iter().copied());
    let sb = crate::summation::sum(b.iter().copied());
    if (sa - sb).abs() > 1e-9 {
        return Err(Error::invalid(format!("marginal totals differ: {sa} vs {sb}")));
    }
    // zero-weight atoms carry no flow and only slow the solver down
    let rows: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let ra: Vec<f64> = rows.iter().map(|&i| a[i] / sa).collect();
    let rb: Vec<f64> = cols.iter().map(|&j| b[j] / sb).collect();
    let (supply, demand, total) = integer_masses(&ra, &rb);
    let mut ns = NetworkSimplex::new(supply, demand)?;
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            ns.add_arc(ri, cj, cost(i, j));
        }
    }
    ns.solve()?;
    let mass_scale = sa / total;
    let entries: Vec<(usize, usize, f64)> = ns
        .support()
        .map(|(ri, cj, f)| (rows[ri], cols[cj], f as f64 * mass_scale))
        .collect();
    let mut plan = TransportPlan {
        rows: a.len(),
        cols: b.len(),
        entries,
        cost: 0.0,
        p,
    };
    plan.cost = plan.recompute_cost(&cost);
    Ok(plan)
}

/// `W_p` coupling between two discrete measures on the torus for the cost
/// `d(x, y)^p`.
pub fn wp_discrete_oracle(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure, p: f64) -> Result<TransportPlan> {
    check_dim(mu.dim(), nu.dim())?;
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("exponent p must be >= 1, got {p}")));
    }
    let xs = mu.support();
    let ys = nu.support();
    let cost = |i: usize, j: usize| {
        let d = wrap_distance_raw(xs.point(i), ys.point(j));
        if p == 2.0 {
            d * d
        } else if p == 1.0 {
            d
        } else {
            d.powf(p)
        }
    };
    transport_lp(mu.weights(), nu.weights(), cost, p)
}

/// `omega_d`, the volume of the unit ball in `R^d`.
pub fn ball_volume(d: usize) -> f64 {
    let mut v = [1.0, 2.0];
    for k in 2..=d {
        let next = v[0] * 2.0 * std::f64::consts::PI / k as f64;
        v = [v[1], next];
    }
    if d == 0 {
        1.0
    } else {
        v[1]
    }
}

/// `max_eps (1 - omega_d eps^d) eps N^{-1/d}`: the mass outside the balls of
/// radius `eps N^{-1/d}` around the atoms must travel at least that far.
pub fn packing_lower_bound(n: usize, d: usize) -> Result<f64> {
    if n == 0 || d == 0 {
        return Err(Error::invalid("need N >= 1 and d >= 1"));
    }
    let omega = ball_volume(d);
    let df = d as f64;
    let eps = ((df + 1.0) * omega).powf(-1.0 / df);
    Ok(df / (df + 1.0) * eps * (n as f64).powf(-1.0 / df))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{empirical_from_points, PointSet};

    fn measure(d: usize, c: Vec<f64>) -> EmpiricalMeasure {
        empirical_from_points(&PointSet::from_flat(d, c, "t").unwrap())
    }

    #[test]
    fn oracle_examples() {
        let plan = wp_discrete_oracle(&measure(1, vec![0.0]), &measure(1, vec![0.4]), 1.0).unwrap();
        assert!((plan.cost - 0.4).abs() < 1e-15);
        let plan = wp_discrete_oracle(&measure(1, vec![0.0, 0.5]), &measure(1, vec![0.25, 0.75]), 1.0).unwrap();
        assert!((plan.cost - 0.25).abs() < 1e-15);
        assert!(plan.marginal_defect(&[0.5, 0.5], &[0.5, 0.5]) < 1e-15);
    }

    #[test]
    fn oracle_rejects_bad_input() {
        assert!(transport_lp(&[0.5, 0.5], &[0.9], |_, _| 1.0, 1.0).is_err());
        assert!(transport_lp(&[1.0], &[], |_, _| 1.0, 1.0).is_err());
        let mu = measure(1, vec![0.1]);
        let nu = measure(2, vec![0.1, 0.2]);
        assert!(wp_discrete_oracle(&mu, &nu, 2.0).is_err());
    }

    #[test]
    fn integer_rounding_preserves_totals() {
        let a = [0.1, 0.2, 0.3, 0.4];
        let b = [1.0 / 3.0; 3];
        let (sa, sb, total) = integer_masses(&a, &b);
        assert_eq!(sa.iter().sum::<i64>() as f64, total);
        assert_eq!(sb.iter().sum::<i64>() as f64, total);
        let (sa, sb, total) = integer_masses(&[0.25; 4], &[1.0 / 6.0; 6]);
        assert_eq!((sa[0], sb[0], total), (3, 2, 12.0));
    }

    #[test]
    fn ball_volumes() {
        assert_eq!(ball_volume(1), 2.0);
        assert!((ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn packing_examples() {
        assert!((packing_lower_bound(10, 1).unwrap() - 1.0 / 80.0).abs() < 1e-16);
        let want = 2.0 / 3.0 * (3.0 * std::f64::consts::PI).powf(-0.5) / 10.0;
        assert!((packing_lower_bound(100, 2).unwrap() - want).abs() < 1e-15);
    }
}
