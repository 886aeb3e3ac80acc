//! The registered metrics and the inputs they are evaluated on.

use uniformity::integration::perfect_root;
use uniformity::sequences::{generate_n, SequenceSpec};
use uniformity::spectral::{
    build_spectrum, default_cutoff, default_t_grid, heat_diaphony, kronecker_spectrum, log_grid,
    random_walk_w2_bound, w2_upper_bound, zinterhof_diaphony, Spectrum, DEFAULT_C_SMOOTH,
};
use uniformity::torus::{empirical_from_points, PointSet};
use uniformity::transport::{
    packing_lower_bound, star_discrepancy_1d, w1_circle_exact, w2_circle_exact, w2_torus_bracket, BracketMethod,
};
use uniformity::{Error, Result};

pub const METRICS: [&str; 9] = [
    "w1_exact",
    "w2_exact",
    "w2_bracket",
    "w2_spectral_bound",
    "diaphony",
    "heat_diaphony",
    "star_disc",
    "rw_bound",
    "packing_lb",
];

/// Log-spaced `lo:hi:count`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl std::str::FromStr for TGrid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, count] = parts[..] else {
            return Err(format!("t grid `{s}` is not lo:hi:count"));
        };
        let lo: f64 = lo.parse().map_err(|_| format!("bad lower end `{lo}`"))?;
        let hi: f64 = hi.parse().map_err(|_| format!("bad upper end `{hi}`"))?;
        let count: usize = count.parse().map_err(|_| format!("bad count `{count}`"))?;
        if !(lo > 0.0 && hi >= lo && count >= 1) {
            return Err(format!("t grid `{s}` needs 0 < lo <= hi and count >= 1"));
        }
        Ok(TGrid { lo, hi, count })
    }
}

#[derive(Clone, Debug)]
pub struct Params {
    pub cutoff: Option<usize>,
    pub t_grid: Option<TGrid>,
    pub heat_t: Option<f64>,
    pub grid_res: Option<usize>,
    pub bracket: BracketMethod,
    pub c_smooth: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            cutoff: None,
            t_grid: None,
            heat_t: None,
            grid_res: None,
            bracket: BracketMethod::ExactSimplex,
            c_smooth: DEFAULT_C_SMOOTH,
        }
    }
}

/// Where the points come from.
#[derive(Clone, Debug)]
pub enum Source {
    Spec(SequenceSpec),
    Points(PointSet),
}

impl Source {
    pub fn label(&self) -> String {
        match self {
            Source::Spec(s) => s.to_string(),
            Source::Points(p) => p.label().to_string(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Source::Spec(s) => s.dim(),
            Source::Points(p) => p.dim(),
        }
    }

    /// Natural size of finite sources.
    pub fn natural_len(&self) -> Option<usize> {
        match self {
            Source::Spec(s) => s.natural_len(),
            Source::Points(p) => Some(p.len()),
        }
    }

    /// The `N`-point instance. Grids take `m = N^{1/d}` and quadratic
    /// residues take `p = N`; point files are cut to their first `N` rows.
    pub fn instance(&self, n: usize) -> Result<PointSet> {
        match self {
            Source::Points(p) => p.prefix(n),
            Source::Spec(SequenceSpec::RegularGrid { d, .. }) => {
                let m = perfect_root(n, *d)
                    .ok_or_else(|| Error::InvalidParameter(format!("N = {n} is not a perfect {d}-th power")))?;
                generate_n(&SequenceSpec::regular_grid(*d, m)?, None)
            }
            Source::Spec(SequenceSpec::QuadraticResidues { .. }) => {
                generate_n(&SequenceSpec::quadratic_residues(n as u64)?, None)
            }
            Source::Spec(s) => generate_n(s, Some(n)),
        }
    }
}

/// Everything a metric can report besides its value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub t_star: Option<f64>,
    pub tail: Option<f64>,
    pub cutoff: Option<usize>,
}

impl Outcome {
    fn of(value: f64) -> Self {
        Outcome {
            value,
            ..Default::default()
        }
    }
}

pub fn needs_points(metric: &str) -> bool {
    !matches!(metric, "rw_bound" | "packing_lb")
}

fn spectrum(source: &Source, ps: &PointSet, cutoff: usize) -> Result<Spectrum> {
    match source {
        Source::Spec(spec @ SequenceSpec::Kronecker { .. }) => {
            kronecker_spectrum(spec.alpha().expect("Kronecker specs carry alpha"), ps.len() as u64, cutoff)
        }
        _ => build_spectrum(ps, cutoff),
    }
}

/// `points` is the `n`-point instance when [`needs_points`] says so.
pub fn evaluate(metric: &str, source: &Source, n: usize, points: Option<&PointSet>, p: &Params) -> Result<Outcome> {
    let d = source.dim();
    let ps = || points.ok_or_else(|| Error::InvalidParameter(format!("{metric} needs points")));
    match metric {
        "w1_exact" => Ok(Outcome::of(w1_circle_exact(&empirical_from_points(ps()?))?)),
        "w2_exact" => Ok(Outcome::of(w2_circle_exact(&empirical_from_points(ps()?))?)),
        "w2_bracket" => {
            let m = p.grid_res.unwrap_or(if d <= 2 { 128 } else { 32 });
            let b = w2_torus_bracket(&empirical_from_points(ps()?), m, p.bracket)?;
            Ok(Outcome {
                value: b.upper,
                lower: Some(b.lower),
                upper: Some(b.upper),
                cutoff: Some(m),
                ..Default::default()
            })
        }
        "w2_spectral_bound" => {
            let cutoff = p.cutoff.unwrap_or_else(|| default_cutoff(n, d));
            let grid = match p.t_grid {
                Some(g) => log_grid(g.lo, g.hi, g.count),
                None => default_t_grid(n),
            };
            let r = w2_upper_bound(&spectrum(source, ps()?, cutoff)?, &grid, p.c_smooth)?;
            Ok(Outcome {
                value: r.value,
                t_star: r.t_star,
                tail: Some(r.truncation_tail),
                cutoff: Some(cutoff),
                ..Default::default()
            })
        }
        "diaphony" => {
            let cutoff = p.cutoff.unwrap_or_else(|| default_cutoff(n, d));
            let r = zinterhof_diaphony(&spectrum(source, ps()?, cutoff)?)?;
            Ok(Outcome {
                value: r.value,
                tail: Some(r.truncation_tail),
                cutoff: Some(cutoff),
                ..Default::default()
            })
        }
        "heat_diaphony" => {
            let cutoff = p.cutoff.unwrap_or_else(|| default_cutoff(n, d));
            let t = p.heat_t.unwrap_or_else(|| (n as f64).powf(-2.0 / d as f64));
            let v = heat_diaphony(&spectrum(source, ps()?, cutoff)?, t)?;
            Ok(Outcome {
                value: v,
                t_star: Some(t),
                cutoff: Some(cutoff),
                ..Default::default()
            })
        }
        "star_disc" => Ok(Outcome::of(star_discrepancy_1d(ps()?)?.star)),
        "rw_bound" => {
            let alpha = match source {
                Source::Spec(spec @ SequenceSpec::Kronecker { .. }) if d == 1 => spec.alpha().expect("alpha")[0].to_f64(),
                _ => {
                    return Err(Error::Unsupported(
                        "rw_bound walks by +-alpha and needs a one-dimensional Kronecker spec; N is the step count".into(),
                    ))
                }
            };
            let cutoff = p.cutoff.unwrap_or(16 * n.max(1));
            let r = random_walk_w2_bound(alpha, n as u64, cutoff)?;
            Ok(Outcome {
                value: r.value,
                tail: Some(r.truncation_tail),
                cutoff: Some(cutoff),
                ..Default::default()
            })
        }
        "packing_lb" => Ok(Outcome::of(packing_lower_bound(n, d)?)),
        other => Err(Error::InvalidParameter(format!(
            "unknown metric `{other}`; known: {}",
            METRICS.join(", ")
        ))),
    }
}
