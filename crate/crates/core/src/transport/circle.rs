//! Closed-form transport between a discrete measure on the circle and the
//! uniform measure.
//!
//! With `F` the distribution function of the atoms and `g(s) = F^{-1}(s) - s`,
//! the optimal shift of the quantile coupling gives
//! `W2^2 = int g^2 - (int g)^2`, while `W1 = min_c int |F(x) - x - c| dx`
//! with `c` a median of `F(x) - x`. Both are piecewise polynomial and are
//! integrated exactly.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::summation::NeumaierSum;
use crate::torus::{EmpiricalMeasure, PointSet};

/// Sorted support with duplicates merged, and cumulative masses `W_i`.
struct Sorted {
    x: Vec<f64>,
    w: Vec<f64>,
    cum: Vec<f64>,
}

fn sorted_atoms(mu: &EmpiricalMeasure) -> Result<Sorted> {
    check_dim(1, mu.dim())?;
    let xs = mu.support().flat();
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
    let mut x: Vec<f64> = Vec::with_capacity(xs.len());
    let mut w: Vec<f64> = Vec::with_capacity(xs.len());
    let mut counts: Vec<usize> = Vec::with_capacity(xs.len());
    for &i in &order {
        let wi = mu.weights()[i];
        if wi == 0.0 {
            continue;
        }
        if x.last() == Some(&xs[i]) {
            *w.last_mut().unwrap() += wi;
            *counts.last_mut().unwrap() += 1;
        } else {
            x.push(xs[i]);
            w.push(wi);
            counts.push(1);
        }
    }
    let n = mu.len();
    let cum = if mu.is_uniform() {
        // exact partial sums i/N
        let mut seen = 0usize;
        counts
            .iter()
            .map(|c| {
                seen += c;
                seen as f64 / n as f64
            })
            .collect()
    } else {
        let mut acc = NeumaierSum::new();
        let mut cum: Vec<f64> = w
            .iter()
            .map(|wi| {
                acc.add(*wi);
                acc.value()
            })
            .collect();
        *cum.last_mut().unwrap() = 1.0;
        cum
    };
    Ok(Sorted { x, w, cum })
}

/// `W2(mu, dx)` on the circle.
pub fn w2_circle_exact(mu: &EmpiricalMeasure) -> Result<f64> {
    let s = sorted_atoms(mu)?;
    // mean of g
    let mean = s.x.iter().zip(&s.w).map(|(x, w)| x * w).collect::<NeumaierSum>().value() - 0.5;
    let mut acc = NeumaierSum::new();
    let mut prev = 0.0;
    for (x, c) in s.x.iter().zip(&s.cum) {
        // int over (prev, c] of (x - s - mean)^2 ds
        let a = x - prev - mean;
        let b = x - c - mean;
        let width = c - prev;
        acc.add(width * (a * a + a * b + b * b) / 3.0);
        prev = *c;
    }
    Ok(acc.value().max(0.0).sqrt())
}

/// `W1(mu, dx)` on the circle.
pub fn w1_circle_exact(mu: &EmpiricalMeasure) -> Result<f64> {
    let s = sorted_atoms(mu)?;
    // h(x) = F(x) - x on segments [u, v) with F constant = level
    let mut segs: Vec<(f64, f64, f64)> = Vec::with_capacity(s.x.len() + 1);
    let mut start = 0.0;
    let mut level = 0.0;
    for (x, c) in s.x.iter().zip(&s.cum) {
        if *x > start {
            segs.push((start, *x, level));
        }
        start = *x;
        level = *c;
    }
    if start < 1.0 {
        segs.push((start, 1.0, level));
    }
    // measure of {x : h(x) > c} is nonincreasing in c; bisect for 1/2
    let above = |c: f64| -> f64 {
        segs.iter()
            .map(|&(u, v, lev)| {
                // h = lev - x > c  <=>  x < lev - c
                (lev - c).clamp(u, v) - u
            })
            .collect::<NeumaierSum>()
            .value()
    };
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if above(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    let total = segs
        .iter()
        .map(|&(u, v, lev)| abs_linear_integral(lev - c, u, v))
        .collect::<NeumaierSum>()
        .value();
    Ok(total)
}

/// `int_u^v |z - x| dx`.
fn abs_linear_integral(z: f64, u: f64, v: f64) -> f64 {
    if z <= u {
        ((v - z).powi(2) - (u - z).powi(2)) / 2.0
    } else if z >= v {
        ((z - u).powi(2) - (z - v).powi(2)) / 2.0
    } else {
        ((z - u).powi(2) + (v - z).powi(2)) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// `sup_x |F(x) - x|` over anchored intervals `[0, x)`.
    pub star: f64,
    /// `sup_J |mu(J) - |J||` over all intervals.
    pub extreme: f64,
}

/// Exact star and extreme discrepancy of an equal-weight point set on
/// `[0, 1)`.
pub fn star_discrepancy_1d(ps: &PointSet) -> Result<Discrepancy> {
    let xs = ps.coords_1d()?;
    let mut x = xs.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut star_dev = 0.0f64;
    let mut hi = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for (i, xi) in x.iter().enumerate() {
        let i1 = (i + 1) as f64;
        star_dev = star_dev.max((xi - (2.0 * i1 - 1.0) / (2.0 * n)).abs());
        let e = i1 / n - xi;
        hi = hi.max(e);
        lo = lo.min(e);
    }
    Ok(Discrepancy {
        star: 1.0 / (2.0 * n) + star_dev,
        extreme: 1.0 / n + hi - lo,
    })
}
