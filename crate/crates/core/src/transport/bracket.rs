//! Two-sided bound on `W2(mu, dx)` for a discrete `mu` on the torus.
//!
//! Lebesgue measure is replaced by `nu_M`, equal masses at the `M^d` cell
//! centers. Sending each cell's share of the discrete plan uniformly over the
//! cell adds exactly the cell's second moment `d / (12 M^2)` on top of the
//! discrete cost, and `W2(nu_M, dx) = sqrt(d / 12) / M`. So with `P` the cost
//! of any feasible discrete plan and `D` the value of any feasible dual,
//!
//! `sqrt(D) - sqrt(d/12)/M <= W2(mu, dx) <= sqrt(P + d/(12 M^2))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::entropic::sinkhorn_log;
use super::{integer_masses, NetworkSimplex};
use crate::error::{Error, Result};
use crate::summation::NeumaierSum;
use crate::torus::{wrap_distance_sq_raw, EmpiricalMeasure};

/// Largest `N * M^d` accepted by the exact bracket.
pub const BRACKET_MAX_PAIRS: usize = 1 << 28;
/// Largest `N * M^d` accepted by the entropic bracket.
pub const ENTROPIC_MAX_PAIRS: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketMethod {
    ExactSimplex,
    Entropic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct W2Bracket {
    pub lower: f64,
    pub upper: f64,
    pub grid_resolution: usize,
    pub method: BracketMethod,
    /// Both ends follow from a feasible primal plan and a feasible dual.
    pub rigorous: bool,
    /// Squared cost of the discrete plan against the cell centers.
    pub primal_sq: f64,
    /// Value of the c-transformed dual against the cell centers.
    pub dual_sq: f64,
    /// Final regularization of the entropic solver.
    pub epsilon: Option<f64>,
}

fn cell_centers(m: usize, d: usize) -> Vec<f64> {
    let cells = m.pow(d as u32);
    let mut out = Vec::with_capacity(cells * d);
    let mut idx = vec![0usize; d];
    for _ in 0..cells {
        out.extend(idx.iter().map(|&i| (i as f64 + 0.5) / m as f64));
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < m {
                break;
            }
            idx[j] = 0;
        }
    }
    out
}

/// `sum_i a_i min_c (C(i, c) - psi_c) + mean(psi)`: the dual value after a
/// c-transform, feasible for any `psi`.
fn c_transform_value(mu: &EmpiricalMeasure, centers: &[f64], psi: &[f64]) -> f64 {
    let d = mu.dim();
    let mean = psi.iter().copied().collect::<NeumaierSum>().value() / psi.len() as f64;
    let psi: Vec<f64> = psi.iter().map(|p| p - mean).collect();
    let phi: Vec<f64> = (0..mu.len())
        .into_par_iter()
        .map(|i| {
            let x = mu.support().point(i);
            centers
                .chunks_exact(d)
                .zip(&psi)
                .map(|(c, p)| wrap_distance_sq_raw(x, c) - p)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    phi.iter()
        .zip(mu.weights())
        .map(|(p, a)| p * a)
        .collect::<NeumaierSum>()
        .value()
}

/// Bracket for `W2(mu, dx)` from an `M^d` cell discretization.
pub fn w2_torus_bracket(mu: &EmpiricalMeasure, m: usize, method: BracketMethod) -> Result<W2Bracket> {
    let d = mu.dim();
    if m == 0 {
        return Err(Error::invalid("grid resolution M must be positive"));
    }
    let cells = (m as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    let pairs = cells.saturating_mul(mu.len() as u128);
    let limit = match method {
        BracketMethod::ExactSimplex => BRACKET_MAX_PAIRS,
        BracketMethod::Entropic => ENTROPIC_MAX_PAIRS,
    };
    if pairs > limit as u128 {
        return Err(Error::ResourceGuard(format!(
            "N * M^d = {pairs} exceeds the bracket limit of {limit}"
        )));
    }
    let cells = cells as usize;
    let centers = cell_centers(m, d);
    let (primal, psi, epsilon) = match method {
        BracketMethod::ExactSimplex => exact_semidiscrete(mu, &centers, cells)?,
        BracketMethod::Entropic => {
            let n = mu.len();
            let b = vec![1.0 / cells as f64; cells];
            let xs = mu.support();
            let cost = |i: usize, c: usize| wrap_distance_sq_raw(xs.point(i), &centers[c * d..(c + 1) * d]);
            let r = sinkhorn_log(mu.weights(), &b, n, cells, &cost, 1e-3)?;
            (r.rounded_cost, r.g, Some(r.epsilon))
        }
    };
    let dual = c_transform_value(mu, &centers, &psi);
    let moment = d as f64 / (12.0 * (m * m) as f64);
    let upper = (primal + moment).sqrt();
    let lower = (dual.max(0.0).sqrt() - moment.sqrt()).max(0.0);
    Ok(W2Bracket {
        lower,
        upper,
        grid_resolution: m,
        method,
        rigorous: true,
        primal_sq: primal,
        dual_sq: dual,
        epsilon,
    })
}

/// Column generation over the complete atom-by-cell graph: start from the
/// nearest atoms of every cell and add violated pairs until none is left.
/// Returns the optimal cost and the cell potentials.
fn exact_semidiscrete(mu: &EmpiricalMeasure, centers: &[f64], cells: usize) -> Result<(f64, Vec<f64>, Option<f64>)> {
    let d = mu.dim();
    let n = mu.len();
    let xs = mu.support();
    let cost = |i: usize, c: usize| wrap_distance_sq_raw(xs.point(i), &centers[c * d..(c + 1) * d]);
    let b = vec![1.0 / cells as f64; cells];
    let (supply, demand, total) = integer_masses(mu.weights(), &b);
    let mut ns = NetworkSimplex::new(supply, demand)?;
    // squared torus distances never exceed d / 4
    ns.set_cost_bound(d as f64 / 4.0);

    let k = n.min(8);
    let nearest: Vec<Vec<usize>> = (0..cells)
        .into_par_iter()
        .map(|c| {
            let mut order: Vec<(f64, usize)> = (0..n).map(|i| (cost(i, c), i)).collect();
            if k < n {
                order.select_nth_unstable_by(k - 1, |x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                order.truncate(k);
            }
            order.into_iter().map(|(_, i)| i).collect()
        })
        .collect();
    let mut present = std::collections::HashSet::new();
    for (c, atoms) in nearest.iter().enumerate() {
        for &i in atoms {
            ns.add_arc(i, c, cost(i, c));
            present.insert((i, c));
        }
    }

    loop {
        ns.solve()?;
        let tol = ns.pricing_tolerance();
        // most violated atom for every cell
        let violated: Vec<(usize, usize)> = (0..cells)
            .into_par_iter()
            .filter_map(|c| {
                let mut best = (-tol, usize::MAX);
                for i in 0..n {
                    let rc = ns.reduced_cost(i, c, cost(i, c));
                    if rc < best.0 {
                        best = (rc, i);
                    }
                }
                (best.1 != usize::MAX).then_some((best.1, c))
            })
            .collect();
        let mut added = 0;
        for (i, c) in violated {
            if present.insert((i, c)) {
                ns.add_arc(i, c, cost(i, c));
                added += 1;
            }
        }
        if added == 0 {
            break;
        }
    }
    let status = ns.solve()?;
    if status.artificial_flow != 0 {
        return Err(Error::invalid("column generation ended with artificial flow"));
    }
    let primal = ns
        .support()
        .map(|(i, c, f)| f as f64 / total * cost(i, c))
        .collect::<NeumaierSum>()
        .value();
    let (_, psi) = ns.duals();
    Ok((primal, psi, None))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{empirical_from_points, PointSet};

    fn measure(d: usize, c: Vec<f64>) -> EmpiricalMeasure {
        empirical_from_points(&PointSet::from_flat(d, c, "t").unwrap())
    }

    #[test]
    fn centers_layout() {
        let c = cell_centers(2, 2);
        assert_eq!(c, vec![0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75]);
    }

    #[test]
    fn single_atom_contains_closed_form() {
        // W2^2(delta, dx) = d / 12
        let mu = measure(2, vec![0.3, 0.6]);
        let want = (2.0f64 / 12.0).sqrt();
        for m in [4, 8, 16] {
            let b = w2_torus_bracket(&mu, m, BracketMethod::ExactSimplex).unwrap();
            assert!(b.lower <= want + 1e-12 && want <= b.upper + 1e-12, "{b:?}");
        }
    }

    #[test]
    fn grid_point_set_bracket() {
        // the 4x4 grid of cell centers transports to Lebesgue within cells
        let mut c = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                c.extend([(i as f64 + 0.5) / 4.0, (j as f64 + 0.5) / 4.0]);
            }
        }
        let mu = measure(2, c);
        let want = (2.0f64 / 12.0).sqrt() / 4.0;
        let b = w2_torus_bracket(&mu, 16, BracketMethod::ExactSimplex).unwrap();
        assert!(b.lower <= want + 1e-12 && want <= b.upper + 1e-12, "{b:?}");
        assert!((b.primal_sq - b.dual_sq).abs() < 1e-9);
    }

    #[test]
    fn entropic_brackets_exact() {
        let mu = measure(2, vec![0.1, 0.2, 0.7, 0.4, 0.45, 0.9]);
        let e = w2_torus_bracket(&mu, 8, BracketMethod::ExactSimplex).unwrap();
        let s = w2_torus_bracket(&mu, 8, BracketMethod::Entropic).unwrap();
        assert!(s.primal_sq >= e.primal_sq - 1e-12);
        assert!(s.dual_sq <= e.primal_sq + 1e-12);
        assert!(s.upper - e.upper < 1e-2);
    }

    #[test]
    fn guard_trips() {
        let mu = measure(2, vec![0.0; 2 * 64]);
        assert!(matches!(
            w2_torus_bracket(&mu, 4096, BracketMethod::ExactSimplex),
            Err(Error::ResourceGuard(_))
        ));
    }
}
