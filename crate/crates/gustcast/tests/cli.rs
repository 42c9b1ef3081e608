use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gustcast"))
}

/// Small grids, 200 days, one window per day.
fn write_config(dir: &Path, days: usize) -> PathBuf {
    let cfg = json!({
        "data_dir": dir.join("data"),
        "runs_dir": dir.join("runs"),
        "data_seed": 3,
        "synth": {
            "days": days,
            "gfs": { "name": "gfs", "cadence_hours": 3, "lat_count": 2, "lon_count": 2, "raw_level_count": 6, "selected_level_count": 3 },
            "arpege": { "name": "arpege", "cadence_hours": 1, "lat_count": 3, "lon_count": 3, "raw_level_count": 8, "selected_level_count": 4 }
        },
        "prep": { "stride": 24, "gfs_levels": 3, "arp_levels": 4 },
        "experiment": { "seed": 3 }
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

fn generated(days: usize) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), days);
    ok_json(&["--config", s(&cfg), "generate"]);
    (dir, cfg)
}

#[test]
fn generate_is_deterministic_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 365);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok_json(&["--config", s(&cfg), "generate", "--out", s(&a)]);
    ok_json(&["--config", s(&cfg), "generate", "--out", s(&b)]);
    let manifest: Value = serde_json::from_str(&read(&a.join("manifest.json"))).unwrap();
    let farms = manifest["farms"].as_array().unwrap();
    assert_eq!(farms.len(), 7);
    for f in farms {
        for key in ["power", "gfs", "arpege"] {
            let rel = f[key].as_str().unwrap();
            assert_eq!(std::fs::read(a.join(rel)).unwrap(), std::fs::read(b.join(rel)).unwrap(), "{rel}");
        }
        let power = read(&a.join(f["power"].as_str().unwrap()));
        assert_eq!(power.lines().count(), 1 + 365 * 24);
    }
    assert_eq!(manifest["gfs"]["name"], "gfs");
    assert_eq!(manifest["arpege"]["name"], "arpege");
    assert_eq!(read(&a.join("manifest.json")), read(&b.join("manifest.json")));
}

#[test]
fn train_evaluate_and_rerun() {
    let (_dir, cfg) = generated(200);
    let prep = ok_json(&["--config", s(&cfg), "prepare"]);
    assert_eq!(prep.as_array().unwrap().len(), 7);

    let start = Instant::now();
    let a = ok_json(&["--config", s(&cfg), "--model", "lr", "--mode", "global", "--farms", "0..7", "train"]);
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let b = ok_json(&["--config", s(&cfg), "--model", "lr", "--mode", "global", "--farms", "0..7", "train"]);
    let (ra, rb) = (PathBuf::from(a["run"].as_str().unwrap()), PathBuf::from(b["run"].as_str().unwrap()));
    assert_ne!(ra, rb);
    let metrics = read(&ra.join("metrics.csv"));
    assert_eq!(metrics, read(&rb.join("metrics.csv")));
    for farm in 0..7 {
        assert!(metrics.lines().any(|l| l.starts_with(&format!("{farm},lr,global,"))), "farm {farm}");
    }
    // the run directory holds the config that produced it
    let saved: Value = serde_json::from_str(&read(&ra.join("config.json"))).unwrap();
    assert_eq!(saved["experiment"]["model"], "lr");
    assert_eq!(saved["experiment"]["mode"], "global");

    let e = ok_json(&["evaluate", s(&ra), "--ramp-threshold", "0.2"]);
    assert_eq!(e["matches_stored"], true);
    assert_eq!(read(&ra.join("metrics-eval.csv")), metrics);
    assert_eq!(read(&ra.join("ramps.csv")).lines().count(), 8);
}

#[test]
fn failures_exit_nonzero_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), 200);
    let out = run(&["--config", s(&cfg), "train"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "io");
    assert_eq!(err["exit_code"], out.status.code().unwrap());

    for args in [
        vec!["--config", s(&cfg), "--model", "conv2d-gbm", "train"],
        vec!["--config", s(&cfg), "--mode", "global", "--farms", "2", "train"],
        vec!["--config", s(&cfg), "--model", "lr", "gridsearch"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert!(err["message"].as_str().unwrap().len() > 5);
    }
}

#[test]
fn compare_and_plotdata() {
    let (dir, cfg) = generated(200);
    let c = s(&cfg);
    let runs: Vec<PathBuf> = [["gbm", "individual"], ["gbm", "individual"], ["et", "individual"]]
        .iter()
        .map(|[m, mode]| {
            let v = ok_json(&["--config", c, "--model", m, "--mode", mode, "--farms", "0,1", "train"]);
            PathBuf::from(v["run"].as_str().unwrap())
        })
        .collect();
    let out = dir.path().join("cmp");
    let mut args = vec!["--config", c, "compare", "--out", s(&out)];
    args.extend(runs.iter().map(|r| s(r)));
    ok_json(&args);

    // identical runs: equal cells and degenerate tests
    let table = read(&out.join("comparison.csv"));
    let cell = |row: &str, model: &str| -> String {
        let prefix = format!("{row},{model},individual,");
        table.lines().find(|l| l.starts_with(&prefix)).unwrap()[prefix.len()..].to_string()
    };
    for row in ["farm0", "farm1", "average"] {
        let (a, b) = (cell(row, "gbm"), cell(row, "gbm#2"));
        assert_eq!(a.split(',').take(2).collect::<Vec<_>>(), b.split(',').take(2).collect::<Vec<_>>());
    }
    let pvalues = read(&out.join("pvalues.csv"));
    let same: Vec<&str> = pvalues.lines().filter(|l| l.contains(",gbm,gbm#2,")).collect();
    assert_eq!(same.len(), 6);
    assert!(same.iter().all(|l| l.ends_with(",true")), "{same:?}");
    assert!(read(&out.join("table.md")).starts_with("| farm | gbm (individual) | gbm#2 (individual) | et (individual) |"));

    let plots = dir.path().join("plots");
    ok_json(&["plotdata", s(&out), "--out", s(&plots)]);
    let per_batch = read(&plots.join("per_batch.csv"));
    assert_eq!(per_batch.lines().count(), 1 + 120);
    let header: Vec<&str> = per_batch.lines().next().unwrap().split(',').collect();
    assert_eq!(header[0], "batch_index");
    assert_eq!(header.len(), 1 + 2 * 3);

    // per-batch means agree with the metrics files
    let metrics = read(&runs[2].join("metrics.csv"));
    let col = header.iter().position(|h| *h == "et/individual:nd").unwrap();
    for line in per_batch.lines().skip(1).take(10) {
        let cells: Vec<&str> = line.split(',').collect();
        let b = cells[0];
        let vals: Vec<f64> = metrics
            .lines()
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .filter(|r| r[3] == b)
            .map(|r| r[4].parse().unwrap())
            .collect();
        assert_eq!(vals.len(), 2);
        let want = vals.iter().sum::<f64>() / 2.0;
        assert!((cells[col].parse::<f64>().unwrap() - want).abs() <= 1e-15);
    }

    let preds = read(&plots.join("predictions-farm0.csv"));
    assert_eq!(preds.lines().next().unwrap(), "timestamp,actual,gbm/individual,gbm#2/individual,et/individual");
    assert_eq!(preds.lines().count(), 1 + 120 * 24);
}
