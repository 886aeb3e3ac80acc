//! `uniformity`: generate torus point sequences, measure their Wasserstein
//! regularity, fit scaling exponents and summarize the records.

mod metrics;
mod records;
mod report;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use uniformity::fit::{fit_loglog, ScalingFit};
use uniformity::integration::{
    run_error_study, standard_suite, Calibration, ErrorRecord, FunctionSpec, SuiteCase, CALIBRATED,
    DEFAULT_RESOLUTION,
};
use uniformity::numtheory::{badly_approximable_frac, linear_form_badness, linear_form_badness_frac};
use uniformity::sequences::{generate_n, SequenceSpec};
use uniformity::transport::BracketMethod;
use uniformity::PointSet;

use metrics::{Outcome, Params, Source, TGrid};
use records::{write_rows, ExperimentRecord, Format};

const SPEC_HELP: &str = "Sequence spec `kind:param=value,...`:
  kronecker|kron    d=<1..3>, alpha=auto|golden|a;b;c
  van_der_corput|vdc  base=<b>=2>
  quadratic_residues|qr  p=<odd prime>
  regular_grid|grid  d=<d>, m=<side>
  random_uniform|random  d=<d>, seed=<u64>";

#[derive(Parser)]
#[command(name = "uniformity", version, about = "Wasserstein regularity of point sequences on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the points of a sequence.
    Generate(GenerateArgs),
    /// Evaluate metrics for every requested N.
    Measure(MeasureArgs),
    /// Fit log(metric) against log(N).
    Scaling(ScalingArgs),
    /// Quadrature error against the gradient-norm bounds.
    Integrate(IntegrateArgs),
    /// Finite-box badly-approximable certificate for a Kronecker vector.
    Certify(CertifyArgs),
    /// Summarize a records file and check bound validity.
    Report(ReportArgs),
}

#[derive(Args)]
struct Output {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(help = SPEC_HELP)]
    spec: String,
    /// Number of points; finite kinds default to their natural size.
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(help = SPEC_HELP, required_unless_present = "points")]
    spec: Option<String>,
    /// Read points from a CSV (`dim,<d>` header) or JSON file instead.
    #[arg(long, conflicts_with = "spec")]
    points: Option<PathBuf>,
    #[arg(long, conflicts_with = "n_list")]
    n: Option<usize>,
    /// Comma list, or `2^a..2^b` for all powers of two in between.
    #[arg(long)]
    n_list: Option<String>,
}

#[derive(Args)]
struct ParamArgs {
    /// Frequency cutoff L of spectral metrics [default: ceil(4 N^(1/d)); 16 N for rw_bound].
    #[arg(long)]
    cutoff: Option<usize>,
    /// Smoothing times `lo:hi:count`, log-spaced [default: N^-2:1:40].
    #[arg(long)]
    t_grid: Option<TGrid>,
    /// Heat time of heat_diaphony [default: N^(-2/d)].
    #[arg(long)]
    heat_t: Option<f64>,
    /// Cells per axis M of w2_bracket [default: 128 for d <= 2, else 32].
    #[arg(long)]
    grid_res: Option<usize>,
    #[arg(long, value_enum, default_value_t = BracketArg::Exact)]
    bracket: BracketArg,
    /// Smoothing constant of w2_spectral_bound.
    #[arg(long, default_value_t = uniformity::spectral::DEFAULT_C_SMOOTH)]
    c_smooth: f64,
    /// Record wall-clock times; otherwise wall_time_ms is 0 so output bytes are reproducible.
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BracketArg {
    Exact,
    Entropic,
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Comma-separated metrics: w1_exact, w2_exact, w2_bracket, w2_spectral_bound, diaphony,
    /// heat_diaphony, star_disc, rw_bound, packing_lb.
    #[arg(long, default_value = "w2_exact")]
    metric: String,
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ScalingArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    metric: String,
    /// Also fit log(value * N) against log(log N).
    #[arg(long)]
    log_correction: bool,
    #[command(flatten)]
    params: ParamArgs,
    /// Write the underlying records here as CSV.
    #[arg(long)]
    records: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct IntegrateArgs {
    #[arg(help = SPEC_HELP, required_unless_present = "suite")]
    spec: Option<String>,
    /// Test function, e.g. `trig:k=1;2`, `product:k=1;1`, `bump:center=0.5;0.5,r=0.125,h=1`,
    /// `extremal:eps_scale=0.0625`.
    #[arg(long, required_unless_present = "suite")]
    function: Option<String>,
    #[arg(long)]
    n_list: Option<String>,
    /// Run the registered function x sequence x N suite instead.
    #[arg(long, conflicts_with_all = ["spec", "function"])]
    suite: bool,
    #[arg(long, value_enum, default_value_t = CalibrationArg::Calibrated)]
    calibration: CalibrationArg,
    /// Quadrature nodes per axis for non-closed-form norms.
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum CalibrationArg {
    Unit,
    Calibrated,
}

#[derive(Args)]
struct CertifyArgs {
    /// Coordinates `a;b;c`; the shipped vector of dimension --d otherwise.
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Search radius: 1 <= q <= K and 0 < |k|_inf <= K.
    #[arg(long, default_value_t = 1000)]
    k: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct ReportArgs {
    /// Records file (CSV or JSON) written by measure.
    records: PathBuf,
    /// Write the per-(metric, sequence) summary here as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Violation(String),
    Guard(String),
}

impl From<uniformity::Error> for Failure {
    fn from(e: uniformity::Error) -> Self {
        match e {
            uniformity::Error::ResourceGuard(_) => Failure::Guard(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(format!("{e:#}"))
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Done = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = init_threads().and_then(|_| run(cli)) {
        let (code, msg) = match f {
            Failure::Usage(m) => (2, m),
            Failure::Violation(m) => (3, m),
            Failure::Guard(m) => (4, m),
        };
        eprintln!("error: {msg}");
        return ExitCode::from(code);
    }
    ExitCode::SUCCESS
}

fn init_threads() -> Done {
    let Ok(v) = std::env::var("UNIFORMITY_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::Usage(format!("UNIFORMITY_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))
}

fn run(cli: Cli) -> Done {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Measure(a) => measure(a),
        Command::Scaling(a) => scaling(a),
        Command::Integrate(a) => integrate(a),
        Command::Certify(a) => certify(a),
        Command::Report(a) => report(a),
    }
}

fn sink(out: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_spec(s: &str) -> std::result::Result<SequenceSpec, Failure> {
    s.parse::<SequenceSpec>().map_err(Failure::from)
}

fn parse_n_list(s: &str) -> std::result::Result<Vec<usize>, Failure> {
    let bad = || Failure::Usage(format!("--n-list `{s}` is neither a comma list nor 2^a..2^b"));
    if let Some((a, b)) = s.split_once("..") {
        let exp = |x: &str| x.trim().strip_prefix("2^").and_then(|e| e.parse::<u32>().ok());
        let (a, b) = (exp(a).ok_or_else(bad)?, exp(b).ok_or_else(bad)?);
        if a > b || b >= usize::BITS {
            return Err(bad());
        }
        return Ok((a..=b).map(|j| 1usize << j).collect());
    }
    let list: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<std::result::Result<_, _>>()?;
    if list.contains(&0) {
        return Err(Failure::Usage("N must be at least 1".into()));
    }
    Ok(list)
}

fn generate(a: GenerateArgs) -> Done {
    let spec = parse_spec(&a.spec)?;
    let ps = generate_n(&spec, a.n)?;
    let mut w = sink(&a.output.out)?;
    match a.output.format {
        Format::Csv => ps.write_csv(&mut w)?,
        Format::Json => {
            ps.write_json(&mut w)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn resolve_source(a: &SourceArgs) -> std::result::Result<(Source, Vec<usize>), Failure> {
    let source = match (&a.spec, &a.points) {
        (Some(s), _) => Source::Spec(parse_spec(s)?),
        (None, Some(path)) => {
            let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let file = BufReader::new(File::open(path)?);
            let ps = if path.extension().is_some_and(|e| e == "json") {
                PointSet::read_json(file, label)?
            } else {
                PointSet::read_csv(file, label)?
            };
            Source::Points(ps)
        }
        (None, None) => return Err(Failure::Usage("give a sequence spec or --points".into())),
    };
    let n_list = match (&a.n, &a.n_list) {
        (Some(n), _) => vec![*n],
        (None, Some(list)) => parse_n_list(list)?,
        (None, None) => vec![source
            .natural_len()
            .ok_or_else(|| Failure::Usage(format!("{} is infinite; give --n or --n-list", source.label())))?],
    };
    Ok((source, n_list))
}

fn params(a: &ParamArgs) -> Params {
    Params {
        cutoff: a.cutoff,
        t_grid: a.t_grid,
        heat_t: a.heat_t,
        grid_res: a.grid_res,
        bracket: match a.bracket {
            BracketArg::Exact => BracketMethod::ExactSimplex,
            BracketArg::Entropic => BracketMethod::Entropic,
        },
        c_smooth: a.c_smooth,
    }
}

/// All `(N, metric)` records in task order, with the failure class of each
/// error entry.
fn collect_records(
    source: &Source,
    n_list: &[usize],
    metrics: &[&str],
    p: &Params,
    timing: bool,
) -> Vec<(ExperimentRecord, Option<Failure>)> {
    let any_points = metrics.iter().any(|m| metrics::needs_points(m));
    let instances: Vec<Option<uniformity::Result<PointSet>>> = n_list
        .par_iter()
        .map(|&n| any_points.then(|| source.instance(n)))
        .collect();
    let tasks: Vec<(usize, &str)> = (0..n_list.len()).flat_map(|i| metrics.iter().map(move |m| (i, *m))).collect();
    tasks
        .par_iter()
        .map(|&(i, metric)| {
            let n = n_list[i];
            let start = Instant::now();
            let result = if metrics::needs_points(metric) {
                match instances[i].as_ref().expect("points were generated") {
                    Ok(ps) => metrics::evaluate(metric, source, n, Some(ps), p),
                    Err(e) => Err(uniformity::Error::InvalidParameter(e.to_string())),
                }
            } else {
                metrics::evaluate(metric, source, n, None, p)
            };
            let ms = if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            let (o, err) = match result {
                Ok(o) => (o, None),
                Err(e) => (Outcome::default(), Some(e)),
            };
            let rec = ExperimentRecord {
                sequence: source.label(),
                d: source.dim(),
                n,
                metric: metric.to_string(),
                value: err.is_none().then_some(o.value),
                lower: o.lower,
                upper: o.upper,
                t_star: o.t_star,
                tail: o.tail,
                cutoff: o.cutoff,
                wall_time_ms: ms,
                error: err.as_ref().map(|e| e.to_string()),
            };
            (rec, err.map(Failure::from))
        })
        .collect()
}

fn split_metrics(s: &str) -> std::result::Result<Vec<&str>, Failure> {
    let ms: Vec<&str> = s.split(',').map(str::trim).filter(|m| !m.is_empty()).collect();
    if let Some(bad) = ms.iter().find(|m| !metrics::METRICS.contains(m)) {
        return Err(Failure::Usage(format!(
            "unknown metric `{bad}`; known: {}",
            metrics::METRICS.join(", ")
        )));
    }
    if ms.is_empty() {
        return Err(Failure::Usage("no metric given".into()));
    }
    Ok(ms)
}

/// Nonzero exit only when every record failed; guard failures win.
fn all_failed(failures: &[Option<Failure>]) -> Option<Failure> {
    if failures.is_empty() || failures.iter().any(Option::is_none) {
        return None;
    }
    let guard = failures.iter().all(|f| matches!(f, Some(Failure::Guard(_))));
    let msg = format!("all {} records failed", failures.len());
    Some(if guard { Failure::Guard(msg) } else { Failure::Usage(msg) })
}

fn measure(a: MeasureArgs) -> Done {
    let (source, n_list) = resolve_source(&a.source)?;
    let metrics = split_metrics(&a.metric)?;
    let rows = collect_records(&source, &n_list, &metrics, &params(&a.params), a.params.timing);
    for (r, _) in &rows {
        if let Some(e) = &r.error {
            eprintln!("{} N={} {}: {e}", r.sequence, r.n, r.metric);
        }
    }
    let (recs, fails): (Vec<ExperimentRecord>, Vec<Option<Failure>>) = rows.into_iter().unzip();
    let mut w = sink(&a.output.out)?;
    write_rows(&recs, &records::HEADER, a.output.format, &mut w)?;
    w.flush()?;
    match all_failed(&fails) {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct FitRow {
    metric: String,
    sequence: String,
    fit: String,
    exponent: f64,
    intercept: f64,
    r_squared: f64,
    n_min: f64,
    n_max: f64,
    count: usize,
}

impl FitRow {
    fn new(metric: &str, sequence: &str, fit: &str, f: &ScalingFit) -> Self {
        FitRow {
            metric: metric.into(),
            sequence: sequence.into(),
            fit: fit.into(),
            exponent: f.exponent,
            intercept: f.intercept,
            r_squared: f.r_squared,
            n_min: f.n_min,
            n_max: f.n_max,
            count: f.count,
        }
    }
}

const FIT_HEADER: [&str; 9] = [
    "metric",
    "sequence",
    "fit",
    "exponent",
    "intercept",
    "r_squared",
    "n_min",
    "n_max",
    "count",
];

fn scaling(a: ScalingArgs) -> Done {
    let (source, n_list) = resolve_source(&a.source)?;
    let metric = split_metrics(&a.metric)?;
    let [metric] = metric[..] else {
        return Err(Failure::Usage("scaling takes exactly one metric".into()));
    };
    let mut sizes = n_list.clone();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 5 {
        return Err(Failure::Usage(format!("need at least 5 distinct sample sizes, got {}", sizes.len())));
    }
    if (*sizes.last().unwrap() as f64) < 100.0 * sizes[0] as f64 {
        eprintln!("warning: sample sizes span less than two decades");
    }
    let rows = collect_records(&source, &n_list, &[metric], &params(&a.params), a.params.timing);
    let (recs, fails): (Vec<ExperimentRecord>, Vec<Option<Failure>>) = rows.into_iter().unzip();
    if let Some(path) = &a.records {
        write_rows(&recs, &records::HEADER, Format::Csv, BufWriter::new(File::create(path)?))?;
    }
    if let Some((r, f)) = recs.iter().zip(fails).find_map(|(r, f)| f.map(|f| (r, f))) {
        eprintln!("{} N={}: {}", r.sequence, r.n, r.error.as_deref().unwrap_or(""));
        return Err(f);
    }
    let xs: Vec<f64> = recs.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = recs.iter().map(|r| r.value.unwrap()).collect();
    let label = source.label();
    let mut fits = vec![FitRow::new(metric, &label, "log_log", &fit_loglog(&xs, &ys)?)];
    if a.log_correction {
        let lx: Vec<f64> = xs.iter().map(|n| n.ln()).collect();
        let ly: Vec<f64> = xs.iter().zip(&ys).map(|(n, v)| n * v).collect();
        fits.push(FitRow::new(metric, &label, "log_corrected", &fit_loglog(&lx, &ly)?));
    }
    let mut w = sink(&a.output.out)?;
    write_rows(&fits, &FIT_HEADER, a.output.format, &mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct IntegrateRow {
    sequence: String,
    function: String,
    #[serde(rename = "N")]
    n: usize,
    measured: f64,
    classic: f64,
    thm6: Option<f64>,
    thm7: Option<f64>,
    local_l1: Option<f64>,
    l1_form: Option<f64>,
}

const INTEGRATE_HEADER: [&str; 9] = [
    "sequence", "function", "N", "measured", "classic", "thm6", "thm7", "local_l1", "l1_form",
];

/// Bounds asserted with the calibrated constants: the grid forms on grids,
/// the `L^2` form on Kronecker points, and the classic form on both.
fn integration_violations(spec: &SequenceSpec, r: &ErrorRecord) -> Vec<&'static str> {
    let mut checks: Vec<(&str, Option<f64>)> = Vec::new();
    match spec {
        SequenceSpec::RegularGrid { .. } => {
            checks.extend([("classic", Some(r.classic)), ("thm7", r.thm7), ("local_l1", r.local_l1)]);
        }
        SequenceSpec::Kronecker { .. } => checks.extend([("classic", Some(r.classic)), ("thm6", r.thm6)]),
        _ => {}
    }
    checks
        .into_iter()
        .filter_map(|(name, b)| b.filter(|b| r.measured > *b).map(|_| name))
        .collect()
}

fn integrate(a: IntegrateArgs) -> Done {
    let cases = if a.suite {
        standard_suite()?
    } else {
        let spec = parse_spec(a.spec.as_deref().expect("clap requires spec"))?;
        let function: FunctionSpec = a.function.as_deref().expect("clap requires function").parse()?;
        let n_list = match &a.n_list {
            Some(s) => parse_n_list(s)?,
            None => vec![spec
                .natural_len()
                .ok_or_else(|| Failure::Usage(format!("{spec} is infinite; give --n-list")))?],
        };
        vec![SuiteCase { spec, function, n_list }]
    };
    let cal = match a.calibration {
        CalibrationArg::Unit => Calibration::UNIT,
        CalibrationArg::Calibrated => CALIBRATED,
    };
    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for case in &cases {
        for r in run_error_study(&case.spec, &case.function, &case.n_list, &cal, a.resolution)? {
            if a.calibration == CalibrationArg::Calibrated {
                for name in integration_violations(&case.spec, &r) {
                    violations.push(format!("{} {} N={}: measured {:e} above {name}", case.spec, case.function, r.n, r.measured));
                }
            }
            rows.push(IntegrateRow {
                sequence: case.spec.to_string(),
                function: case.function.to_string(),
                n: r.n,
                measured: r.measured,
                classic: r.classic,
                thm6: r.thm6,
                thm7: r.thm7,
                local_l1: r.local_l1,
                l1_form: r.l1_form,
            });
        }
    }
    let mut w = sink(&a.output.out)?;
    write_rows(&rows, &INTEGRATE_HEADER, a.output.format, &mut w)?;
    w.flush()?;
    if violations.is_empty() {
        Ok(())
    } else {
        for v in &violations {
            eprintln!("VIOLATION {v}");
        }
        Err(Failure::Violation(format!("{} bound violations", violations.len())))
    }
}

fn certify(a: CertifyArgs) -> Done {
    let cert = match &a.alpha {
        Some(s) => {
            let alpha: Vec<f64> = s
                .split(';')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Failure::Usage(format!("--alpha `{s}` is not a `;`-separated list of numbers")))?;
            linear_form_badness(&alpha, a.k)?
        }
        None => linear_form_badness_frac(&badly_approximable_frac(a.d)?, a.k)?,
    };
    let mut w = sink(&a.output.out)?;
    match a.output.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &cert).map_err(anyhow::Error::from)?;
            writeln!(w)?;
        }
        Format::Csv => {
            let join = |v: &[String]| v.join(";");
            writeln!(w, "alpha,K,simultaneous_floor,linear_form_floor,argmin_k")?;
            writeln!(
                w,
                "{},{},{},{},{}",
                join(&cert.alpha.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
                cert.k,
                cert.simultaneous_floor,
                cert.linear_form_floor,
                join(&cert.argmin_k.iter().map(|x| x.to_string()).collect::<Vec<_>>())
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn report(a: ReportArgs) -> Done {
    let (recs, failures) = records::read_records(BufReader::new(File::open(&a.records)?))?;
    let rep = report::build(&recs, &failures);
    let mut stdout = io::stdout().lock();
    stdout.write_all(rep.markdown.as_bytes())?;
    stdout.flush()?;
    if let Some(path) = &a.out {
        write_rows(&rep.summary, &report::SUMMARY_HEADER, Format::Csv, BufWriter::new(File::create(path)?))?;
    }
    if !failures.is_empty() {
        return Err(Failure::Usage(format!("{} rows failed to parse", failures.len())));
    }
    if !rep.violations.is_empty() {
        return Err(Failure::Violation(format!("{} validity violations", rep.violations.len())));
    }
    Ok(())
}
