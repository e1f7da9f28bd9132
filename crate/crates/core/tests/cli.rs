//! End-to-end runs of the `cobpm` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cobpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cobpm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_estimate(out: &Path, seed: &str) -> Output {
    cobpm(&[
        "--seed", seed, "--threads", "2", "--out", out.to_str().unwrap(),
        "estimate", "--scenario", "beta1d", "--n", "150", "--iterations", "1500",
        "--burn-in", "500", "--replicas", "2",
    ])
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn estimate_is_byte_identical_for_a_fixed_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    assert!(run_estimate(&a, "17").status.success());
    assert!(run_estimate(&b, "17").status.success());
    assert!(run_estimate(&c, "18").status.success());
    let (fa, fb, fc) = (read_all(&a), read_all(&b), read_all(&c));
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for want in ["summary.json", "boxplot.csv", "depth_histogram.csv", "manifest.json", "replica_000/trace.jsonl", "replica_001/summary.json"] {
        assert!(names.contains(&want), "missing {want} in {names:?}");
    }
    assert_eq!(fa, fb);
    assert_ne!(fa, fc);
}

#[test]
fn summary_has_the_documented_fields() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_estimate(tmp.path(), "1").status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("summary.json")).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        let obj = row.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["ci_high", "ci_low", "mean", "median", "n_draws", "phi", "std"]);
        let (lo, med, hi) = (obj["ci_low"].as_f64().unwrap(), obj["median"].as_f64().unwrap(), obj["ci_high"].as_f64().unwrap());
        assert!(lo <= med && med <= hi);
        assert_eq!(obj["n_draws"], 2000);
    }
    let manifest = fs::read_to_string(tmp.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 1"));
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    // Unknown density, missing file, bad hyperparameter, unknown key.
    assert_eq!(cobpm(&["--out", out, "estimate", "--p", "gamma:1", "--q", "uniform:1"]).status.code(), Some(2));
    assert_eq!(cobpm(&["--out", out, "estimate", "--x", "/no/such.csv", "--y", "/no/such.csv"]).status.code(), Some(2));
    assert_eq!(cobpm(&["--out", out, "estimate", "--scenario", "beta1d", "--delta=-1"]).status.code(), Some(2));
    let cfg = tmp.path().join("c.toml");
    fs::write(&cfg, "[oracle]\nsamples = 3\n").unwrap();
    assert_eq!(cobpm(&["--config", cfg.to_str().unwrap(), "--out", out, "oracle", "--scenario", "beta1d"]).status.code(), Some(2));
    assert_eq!(cobpm(&["--out", out, "sanity", "--scenario", "beta1d"]).status.code(), Some(2));
    assert_eq!(cobpm(&["--out", out, "frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    // Output path is an existing regular file, so nothing can be written under it.
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = cobpm(&["--out", blocker.to_str().unwrap(), "oracle", "--scenario", "beta1d", "--draws", "1000"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn csv_inputs_are_rescaled_jointly() {
    let tmp = tempfile::tempdir().unwrap();
    let (x, y) = (tmp.path().join("x.csv"), tmp.path().join("y.csv"));
    let rows = |shift: f64| (0..60).map(|i| format!("{},{}\n", i as f64 + shift, (i * 7 % 13) as f64)).collect::<String>();
    fs::write(&x, rows(0.0)).unwrap();
    fs::write(&y, rows(30.0)).unwrap();
    let out = tmp.path().join("out");
    let o = cobpm(&[
        "--out", out.to_str().unwrap(), "estimate", "--x", x.to_str().unwrap(), "--y", y.to_str().unwrap(),
        "--rescale", "--iterations", "1000", "--burn-in", "500", "--phi", "tv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    // The samples overlap on half their range, so TV sits well inside (0, 1).
    let tv = v[0]["median"].as_f64().unwrap();
    assert!(tv > 0.2 && tv < 0.9, "tv {tv}");
    // Without rescaling the coordinates leave the unit cube.
    let bad = cobpm(&["--out", out.to_str().unwrap(), "estimate", "--x", x.to_str().unwrap(), "--y", y.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn oracle_baseline_sanity_and_sweep_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();

    let o = dir("oracle");
    assert!(cobpm(&["--out", &o, "oracle", "--p", "beta:6,5", "--q", "beta:5,6", "--phi", "kl", "--draws", "200000"]).status.success());
    let v: serde_json::Value = serde_json::from_slice(&fs::read(Path::new(&o).join("oracle.json")).unwrap()).unwrap();
    let kl = v[0]["estimate"].as_f64().unwrap();
    assert!((kl - 0.2).abs() < 0.01, "kl {kl}");

    let b = dir("baseline");
    assert!(cobpm(&["--out", &b, "baseline", "--scenario", "beta1d", "--n", "200", "--iterations", "800", "--burn-in", "400"]).status.success());
    let text = fs::read_to_string(Path::new(&b).join("baseline.csv")).unwrap();
    assert!(text.starts_with("replicate,estimator,phi,estimate\n"));
    for e in ["pc1", "pc10", "hist", "twostep"] {
        assert!(text.contains(&format!(",{e},")), "{e} missing");
    }

    let s = dir("sanity");
    assert!(cobpm(&["--out", &s, "sanity", "--pair", "nested", "--n", "300", "--iterations", "1500"]).status.success());
    let part = fs::read_to_string(Path::new(&s).join("partition.csv")).unwrap();
    assert!(part.starts_with("region,x_lo,x_hi,y_lo,y_hi,n_x,n_y,m1,m2\n"));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(Path::new(&s).join("sanity.json")).unwrap()).unwrap();
    assert!(report["refines_truth"].is_boolean());
    let samples = fs::read_to_string(Path::new(&s).join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 601);

    let w = dir("sweep");
    assert!(cobpm(&[
        "--out", &w, "sweep", "--scenario", "beta1d", "--sizes", "40,80", "--replicas", "2",
        "--estimators", "cobpm,pc1", "--phi", "tv,kl", "--iterations", "600", "--burn-in", "300",
    ])
    .status
    .success());
    let rows = fs::read_to_string(Path::new(&w).join("sweep.csv")).unwrap();
    // cobpm: 2 sizes x 2 replicas x 2 phis; pc1 only reports KL.
    assert_eq!(rows.lines().count(), 1 + 8 + 4);
    let summary = fs::read_to_string(Path::new(&w).join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 6);
}
