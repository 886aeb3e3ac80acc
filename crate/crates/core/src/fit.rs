//! Least-squares fits of `log y = intercept + exponent * log x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summation::NeumaierSum;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_min: f64,
    pub n_max: f64,
    pub count: usize,
}

/// Ordinary least squares on `(ln x, ln y)`, summed in input order so the
/// result is reproducible bit for bit.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<ScalingFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("x and y lengths differ"));
    }
    if xs.len() < 2 {
        return Err(Error::invalid(format!("need at least 2 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("log-log fit needs finite positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().copied().collect::<NeumaierSum>().value() / n;
    let my = ly.iter().copied().collect::<NeumaierSum>().value() / n;
    let sxx = lx.iter().map(|x| (x - mx) * (x - mx)).collect::<NeumaierSum>().value();
    if sxx == 0.0 {
        return Err(Error::invalid("all x values coincide"));
    }
    let sxy = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect::<NeumaierSum>()
        .value();
    let syy = ly.iter().map(|y| (y - my) * (y - my)).collect::<NeumaierSum>().value();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(ScalingFit {
        exponent,
        intercept,
        r_squared,
        n_min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        n_max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        count: xs.len(),
    })
}
