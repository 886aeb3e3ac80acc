//! Markdown summary of a records file and its validity checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use uniformity::fit::fit_loglog;
use uniformity::transport::packing_lower_bound;

use crate::records::ExperimentRecord;

const SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub metric: String,
    pub sequence: String,
    pub count: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub exponent: Option<f64>,
    pub r_squared: Option<f64>,
}

pub const SUMMARY_HEADER: [&str; 7] = ["metric", "sequence", "count", "n_min", "n_max", "exponent", "r_squared"];

pub struct Report {
    pub markdown: String,
    pub summary: Vec<SummaryRow>,
    pub violations: Vec<String>,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6e}")).unwrap_or_default()
}

/// Cross-metric checks on records that share a sequence and `N`: exact
/// values inside brackets and below upper bounds, `W1 <= W2`, and every
/// distance above the packing bound.
pub fn violations(records: &[ExperimentRecord]) -> Vec<String> {
    let mut out = Vec::new();
    let mut by_instance: BTreeMap<(&str, usize), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.error.is_none()) {
        by_instance.entry((&r.sequence, r.n)).or_default().push(r);
    }
    for ((seq, n), rs) in &by_instance {
        let value = |m: &str| rs.iter().find(|r| r.metric == m).and_then(|r| r.value);
        let bracket = rs.iter().find(|r| r.metric == "w2_bracket");
        let w2 = value("w2_exact");
        if let (Some(w2), Some(b)) = (w2, value("w2_spectral_bound")) {
            if b < w2 - SLACK {
                out.push(format!("{seq} N={n}: w2_spectral_bound {b:e} below w2_exact {w2:e}"));
            }
        }
        if let Some(br) = bracket {
            let (lo, hi) = (br.lower.unwrap_or(0.0), br.upper.unwrap_or(f64::INFINITY));
            if lo > hi + SLACK {
                out.push(format!("{seq} N={n}: w2_bracket lower {lo:e} above upper {hi:e}"));
            }
            if let Some(w2) = w2 {
                if w2 < lo - SLACK || w2 > hi + SLACK {
                    out.push(format!("{seq} N={n}: w2_exact {w2:e} outside w2_bracket [{lo:e}, {hi:e}]"));
                }
            }
            if let Some(b) = value("w2_spectral_bound") {
                if b < lo - SLACK {
                    out.push(format!("{seq} N={n}: w2_spectral_bound {b:e} below w2_bracket lower {lo:e}"));
                }
            }
        }
        if let (Some(w1), Some(w2)) = (value("w1_exact"), w2) {
            if w1 > w2 + SLACK {
                out.push(format!("{seq} N={n}: w1_exact {w1:e} above w2_exact {w2:e}"));
            }
        }
        for r in rs.iter().filter(|r| matches!(r.metric.as_str(), "w1_exact" | "w2_exact" | "w2_bracket")) {
            let v = if r.metric == "w2_bracket" { r.upper } else { r.value };
            if let (Some(v), Ok(lb)) = (v, packing_lower_bound(r.n, r.d)) {
                if v < lb - SLACK {
                    out.push(format!("{seq} N={n}: {} {v:e} below the packing bound {lb:e}", r.metric));
                }
            }
        }
    }
    out
}

pub fn build(records: &[ExperimentRecord], parse_failures: &[String]) -> Report {
    let mut md = String::new();
    let errors = records.iter().filter(|r| r.error.is_some()).count();
    let mut tables: BTreeMap<&str, BTreeMap<&str, Vec<&ExperimentRecord>>> = BTreeMap::new();
    for r in records {
        tables.entry(&r.metric).or_default().entry(&r.sequence).or_default().push(r);
    }
    let _ = writeln!(md, "# Records report\n");
    let _ = writeln!(
        md,
        "{} records, {} metrics, {errors} errors, {} unparsed rows",
        records.len(),
        tables.len(),
        parse_failures.len()
    );
    let mut summary = Vec::new();
    for (metric, seqs) in &tables {
        let _ = writeln!(md, "\n## {metric}\n");
        let _ = writeln!(md, "| sequence | d | N | value | lower | upper | t_star | tail | error |");
        let _ = writeln!(md, "|---|---|---|---|---|---|---|---|---|");
        for (seq, rs) in seqs {
            let mut rs = rs.clone();
            rs.sort_by_key(|r| r.n);
            for r in &rs {
                let _ = writeln!(
                    md,
                    "| {seq} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    r.d,
                    r.n,
                    cell(r.value),
                    cell(r.lower),
                    cell(r.upper),
                    cell(r.t_star),
                    cell(r.tail),
                    r.error.as_deref().unwrap_or("")
                );
            }
            let ok: Vec<&&ExperimentRecord> = rs.iter().filter(|r| r.value.is_some_and(|v| v > 0.0)).collect();
            let xs: Vec<f64> = ok.iter().map(|r| r.n as f64).collect();
            let ys: Vec<f64> = ok.iter().map(|r| r.value.unwrap()).collect();
            let fit = fit_loglog(&xs, &ys).ok();
            summary.push(SummaryRow {
                metric: metric.to_string(),
                sequence: seq.to_string(),
                count: rs.len(),
                n_min: rs.first().map_or(0, |r| r.n),
                n_max: rs.last().map_or(0, |r| r.n),
                exponent: fit.map(|f| f.exponent),
                r_squared: fit.map(|f| f.r_squared),
            });
        }
    }
    let _ = writeln!(md, "\n## Scaling\n");
    let _ = writeln!(md, "| metric | sequence | count | N range | exponent | r_squared |");
    let _ = writeln!(md, "|---|---|---|---|---|---|");
    for s in &summary {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {}..{} | {} | {} |",
            s.metric,
            s.sequence,
            s.count,
            s.n_min,
            s.n_max,
            s.exponent.map(|e| format!("{e:.4}")).unwrap_or_default(),
            s.r_squared.map(|e| format!("{e:.4}")).unwrap_or_default()
        );
    }
    let violations = violations(records);
    let _ = writeln!(md, "\n## Validity\n");
    if violations.is_empty() {
        let _ = writeln!(md, "no violations");
    } else {
        for v in &violations {
            let _ = writeln!(md, "- VIOLATION {v}");
        }
    }
    if !parse_failures.is_empty() {
        let _ = writeln!(md, "\n## Unparsed rows\n");
        for f in parse_failures {
            let _ = writeln!(md, "- {f}");
        }
    }
    Report {
        markdown: md,
        summary,
        violations,
    }
}
