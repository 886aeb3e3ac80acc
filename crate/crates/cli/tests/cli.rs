use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use uniformity::fit::fit_loglog;
use uniformity::numtheory::VETTED_LINEAR_FORM_FLOOR_K1000;
use uniformity::spectral::random_walk_w2_bound;

fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_uniformity"));
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// Rows of a CSV with a header, as maps from column name to field.
fn table(text: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    r.records()
        .map(|row| header.iter().cloned().zip(row.unwrap().iter().map(String::from)).collect())
        .collect()
}

fn num(s: &str) -> f64 {
    s.parse().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn generate_van_der_corput() {
    let o = run(&["generate", "vdc:base=2", "--n", "5"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("dim,1"));
    let vals: Vec<f64> = lines.map(num).collect();
    assert_eq!(vals, vec![0.5, 0.25, 0.75, 0.125, 0.625]);
}

#[test]
fn generate_grid_to_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("g.csv");
    let json = dir.path().join("g.json");
    assert_eq!(code(&run(&["generate", "grid:d=2,m=3", "--out", csv.to_str().unwrap()])), 0);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 9);
    let o = run(&["generate", "grid:d=2,m=3", "--format", "json", "--out", json.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rows: Vec<Vec<f64>> = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(rows.len(), 9);
    assert_eq!(rows[1], vec![1.0 / 6.0, 0.5]);
}

#[test]
fn bad_spec_exits_two_and_names_the_invariant() {
    let o = run(&["generate", "vdc:base=1", "--n", "4"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("base must be >= 2"));
    assert_eq!(code(&run(&["measure", "vdc:base=2", "--n", "4", "--metric", "nope"])), 2);
    assert_eq!(code(&run(&["measure", "vdc:base=2"])), 2);
    assert_eq!(code(&run_env(&["generate", "vdc:base=2", "--n", "2"], &[("UNIFORMITY_THREADS", "zero")])), 2);
}

#[test]
fn single_atom_distances() {
    let dir = tempfile::tempdir().unwrap();
    let pts = write(dir.path(), "atom.csv", "dim,1\n0.3\n");
    let o = run(&["measure", "--points", &pts, "--metric", "w1_exact,w2_exact,packing_lb"]);
    assert_eq!(code(&o), 0);
    let rows = table(&stdout(&o));
    assert!((num(&rows[0]["value"]) - 0.25).abs() < 1e-15);
    assert!((num(&rows[1]["value"]) - 0.2886751345948129).abs() < 1e-15);
    assert_eq!(rows[2]["metric"], "packing_lb");
}

#[test]
fn spectral_record_carries_certificate_fields() {
    let o = run(&["measure", "kron:d=2", "--n", "256", "--metric", "w2_spectral_bound"]);
    assert_eq!(code(&o), 0);
    let rows = table(&stdout(&o));
    assert_eq!(rows.len(), 1);
    assert!(num(&rows[0]["t_star"]) > 0.0);
    assert!(num(&rows[0]["tail"]) >= 0.0);
    assert_eq!(rows[0]["cutoff"], "64");
}

#[test]
fn per_record_errors_and_exit_codes() {
    // one metric fails, the other succeeds
    let o = run(&["measure", "kron:d=2", "--n", "16", "--metric", "w2_exact,packing_lb"]);
    assert_eq!(code(&o), 0);
    let rows = table(&stdout(&o));
    assert!(rows[0]["error"].contains("dimension mismatch"));
    assert_eq!(rows[0]["value"], "");
    // every record fails
    assert_eq!(code(&run(&["measure", "kron:d=2", "--n", "16", "--metric", "w2_exact"])), 2);
    // every record trips the resource guard
    let o = run(&["measure", "random:d=2,seed=1", "--n", "64", "--metric", "w2_bracket", "--grid-res", "4096"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn output_is_identical_across_thread_counts() {
    let args = [
        "measure",
        "random:d=1,seed=3",
        "--n-list",
        "5,17,64,300",
        "--metric",
        "w1_exact,w2_exact,w2_spectral_bound,w2_bracket,star_disc",
        "--grid-res",
        "64",
    ];
    let a = run_env(&args, &[("UNIFORMITY_THREADS", "1")]);
    let b = run_env(&args, &[("UNIFORMITY_THREADS", "4")]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn noiseless_scaling_fit() {
    // the packing bound is exactly c N^{-1/2} in d = 2
    let o = run(&["scaling", "random:d=2,seed=1", "--metric", "packing_lb", "--n-list", "2^2..2^12"]);
    assert_eq!(code(&o), 0);
    let rows = table(&stdout(&o));
    assert!((num(&rows[0]["exponent"]) + 0.5).abs() < 1e-12);
    assert_eq!(code(&run(&["scaling", "vdc:base=2", "--metric", "w2_exact", "--n-list", "16,32,64"])), 2);
}

#[test]
fn walk_scaling_matches_library_values() {
    let dir = tempfile::tempdir().unwrap();
    let recs = dir.path().join("walk.csv");
    let o = run(&[
        "scaling",
        "kron:d=1",
        "--metric",
        "rw_bound",
        "--n-list",
        "2^4..2^14",
        "--records",
        recs.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let ks: Vec<f64> = (4..=14).map(|j| 2f64.powi(j)).collect();
    let vals: Vec<f64> = ks
        .iter()
        .map(|k| random_walk_w2_bound(phi, *k as u64, 16 * *k as usize).unwrap().value)
        .collect();
    let want = fit_loglog(&ks, &vals).unwrap().exponent;
    let rows = table(&stdout(&o));
    assert_eq!(num(&rows[0]["exponent"]), want);
    let recs = table(&fs::read_to_string(&recs).unwrap());
    assert_eq!(recs.len(), 11);
    assert!(recs.iter().zip(&vals).all(|(r, v)| num(&r["value"]) == *v));
}

#[test]
fn log_corrected_fit_is_reported() {
    let o = run(&[
        "scaling",
        "vdc:base=2",
        "--metric",
        "w2_exact",
        "--n-list",
        "2^4..2^16",
        "--log-correction",
        "--format",
        "json",
    ]);
    assert_eq!(code(&o), 0);
    let fits: Vec<serde_json::Value> = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(fits.len(), 2);
    assert!((fits[0]["exponent"].as_f64().unwrap() + 1.0).abs() < 0.05);
    assert_eq!(fits[1]["fit"], "log_corrected");
}

#[test]
fn measure_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let recs = dir.path().join("r.csv");
    let summary = dir.path().join("s.csv");
    let o = run(&[
        "measure",
        "vdc:base=3",
        "--n-list",
        "8,27,81,243,729",
        "--metric",
        "w1_exact,w2_exact,w2_spectral_bound,w2_bracket,packing_lb",
        "--grid-res",
        "256",
        "--out",
        recs.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let o = run(&["report", recs.to_str().unwrap(), "--out", summary.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let md = stdout(&o);
    for m in ["w1_exact", "w2_exact", "w2_spectral_bound", "w2_bracket", "packing_lb"] {
        assert!(md.contains(&format!("## {m}\n")), "{md}");
    }
    assert!(md.contains("no violations"));
    let s = table(&fs::read_to_string(&summary).unwrap());
    assert_eq!(s.len(), 5);
    let w2 = s.iter().find(|r| r["metric"] == "w2_exact").unwrap();
    assert!((num(&w2["exponent"]) + 1.0).abs() < 0.2);
}

#[test]
fn empty_report_is_valid() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.csv", "");
    let header_only = write(
        dir.path(),
        "h.csv",
        "sequence,d,N,metric,value,lower,upper,t_star,tail,cutoff,wall_time_ms,error\n",
    );
    let json = write(dir.path(), "e.json", "[]");
    for p in [empty, header_only, json] {
        let o = run(&["report", &p]);
        assert_eq!(code(&o), 0);
        assert!(stdout(&o).contains("0 records"));
    }
}

#[test]
fn injected_violation_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let text = "sequence,d,N,metric,value,lower,upper,t_star,tail,cutoff,wall_time_ms,error\n\
                s,1,4,w2_exact,0.1,,,,,,0,\n\
                s,1,4,w2_spectral_bound,0.05,,,0.01,0,16,0,\n";
    let p = write(dir.path(), "bad.csv", text);
    let o = run(&["report", &p]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).contains("VIOLATION s N=4: w2_spectral_bound"));
    let p = write(dir.path(), "garbled.csv", "sequence,d,N,metric,value,lower,upper,t_star,tail,cutoff,wall_time_ms,error\ns,x,4,w2_exact,0.1,,,,,,0,\n");
    assert_eq!(code(&run(&["report", &p])), 2);
}

#[test]
fn integrate_single_study_and_suite() {
    let o = run(&["integrate", "kron:d=2", "--function", "trig:k=1;1", "--n-list", "16,64,256"]);
    assert_eq!(code(&o), 0);
    let rows = table(&stdout(&o));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| num(&r["measured"]) <= num(&r["thm6"])));
    let o = run(&["integrate", "--suite"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(table(&stdout(&o)).len() >= 200);
}

#[test]
fn certify_shipped_vector() {
    let o = run(&["certify", "--d", "2", "--k", "1000", "--format", "json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["linear_form_floor"].as_f64().unwrap() - VETTED_LINEAR_FORM_FLOOR_K1000[1]).abs() < 1e-12);
    assert_eq!(v["K"], 1000);
}
