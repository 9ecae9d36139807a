use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn concurve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_concurve"))
        .args(args)
        .env_remove("CONCURVE_THREADS")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen_toy2(dir: &Path, n: usize) -> PathBuf {
    let out = dir.join("toy2.csv");
    let o = concurve(&["gen", "toy2", "--n", &n.to_string(), "--seed", "7", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

fn manifest(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_writes_schema_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen_toy2(dir.path(), 500);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,x2,y,split");
    assert_eq!(text.lines().count(), 501);
    let b = dir.path().join("again.csv");
    assert!(concurve(&["gen", "toy2", "--n", "500", "--seed", "7", "--out", p(&b)]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let m = manifest(&dir.path().join("toy2.csv.manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["outputs"][0], "toy2.csv");
}

#[test]
fn gen_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.csv");
    let o = concurve(&["gen", "toy3", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for name in ["toy1", "toy2", "kovacs", "seasonal"] {
        assert!(err.contains(name), "{err}");
    }
    let o = concurve(&["gen", "toy1", "--rho", "0.5", "--n", "100", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = concurve(&["gen", "toy1", "--rho", "0.5", "--rho-free", "--n", "100", "--out", p(&out)]);
    assert!(o.status.success());
    let o = concurve(&["gen", "toy1", "--rho", "0.9", "--n", "100", "--out", p(&out)]);
    assert!(o.status.success());
}

#[test]
fn train_emits_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_toy2(dir.path(), 400);
    let out = dir.path().join("run");
    let o = concurve(&["train", p(&data), "--preset", "toy", "--lambda", "0.1", "--seed", "1", "--epochs", "2", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.csv", "model.json", "importance.csv", "corr_raw.csv", "corr_transformed.csv", "shapes.csv", "config.toml", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let shapes = std::fs::read_to_string(out.join("shapes.csv")).unwrap();
    assert_eq!(shapes.lines().next().unwrap(), "feature,seed,x,value");
    for feat in ["x1", "x2"] {
        let rows = shapes.lines().filter(|l| l.starts_with(&format!("{feat},"))).count();
        assert_eq!(rows, 256);
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let m = manifest(&out.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["config"]["lambda"], 0.1);
    assert_eq!(m["config"]["kind"], "concurvity");
    assert_eq!(m["dataset"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn train_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_toy2(dir.path(), 100);
    let out = dir.path().join("run");
    let o = concurve(&["train", p(&data), "--lambda", "-1", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "").unwrap();
    let o = concurve(&["train", p(&data), "--preset", "toy", "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = concurve(&["train", p(&dir.path().join("nope.csv")), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_with_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_toy2(dir.path(), 300);
    let cfg = dir.path().join("c.toml");
    let text = concurve::training::TrainConfig {
        epochs: 1,
        hidden: vec![4],
        ..concurve::training::TrainConfig::toy()
    }
    .to_toml();
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("run");
    let o = concurve(&["train", p(&data), "--config", p(&cfg), "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let model = concurve::models::AdditiveModel::load(&out.join("model.json")).unwrap();
    assert_eq!(model.n_components(), 2);
}

#[test]
fn sweep_counts_records_and_renders() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_toy2(dir.path(), 200);
    let out = dir.path().join("sweep");
    let o = concurve(&["sweep", p(&data), "--lambdas", "10", "--seeds", "3", "--epochs", "1", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().next().unwrap(), "lambda,seed,fit,rperp,wallclock_s");
    assert_eq!(records.lines().count(), 31);
    let svg = std::fs::read_to_string(out.join("tradeoff.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="marker""#).count(), 30);
    for f in ["tradeoff.csv", "verbose.csv", "verbose.svg", "manifest.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    assert_eq!(manifest(&out.join("manifest.json"))["status"], "ok");
}

#[test]
fn sweep_missing_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = concurve(&["sweep", p(&dir.path().join("missing.csv")), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
}

#[test]
fn partial_sweep_failure_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_toy2(dir.path(), 200);
    let mut spec = concurve::sweep::SweepSpec::new(p(&data), concurve::training::TrainConfig::toy(), 2, 1);
    spec.train.epochs = 1;
    spec.train.hidden = vec![4];
    // An absurd penalty weight overflows the parameters of that cell only.
    spec.lambdas = vec![0.0, 1e300];
    let spec_path = dir.path().join("sweep.toml");
    std::fs::write(&spec_path, spec.to_toml()).unwrap();
    let out = dir.path().join("o");
    let o = concurve(&["sweep", p(&data), "--spec", p(&spec_path), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out.join("manifest.json"));
    assert_eq!(m["status"], "failed");
    assert_eq!(m["failures"].as_array().unwrap().len(), 1);
    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 2);
}

#[test]
fn bench_table_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let o = concurve(&["bench", "--features", "8,16,32", "--batches", "16,32", "--reps", "2", "--baseline-reps", "1", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "features,batch,rperp_s,nam_forward_s,overhead");
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn report_renders_each_chart_kind() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen_toy2(dir.path(), 300);
    let mut runs = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("run{seed}"));
        let o = concurve(&["train", p(&data), "--seed", seed, "--epochs", "1", "--out", p(&out)]);
        assert!(o.status.success());
        runs.push(out);
    }
    let svg = dir.path().join("svg");
    let shapes: Vec<String> = runs.iter().map(|r| p(&r.join("shapes.csv")).to_string()).collect();
    let imps: Vec<String> = runs.iter().map(|r| p(&r.join("importance.csv")).to_string()).collect();
    let cases: Vec<(Vec<String>, &str)> = vec![
        ([vec!["report".into(), "shapes".into()], shapes.clone(), vec!["--data".into(), p(&data).into()]].concat(), "shapes.svg"),
        ([vec!["report".into(), "importance".into()], imps].concat(), "importance.svg"),
        (vec!["report".into(), "corr".into(), p(&runs[0].join("corr_transformed.csv")).into()], "corr.svg"),
    ];
    for (mut args, name) in cases {
        let out = svg.join(name);
        args.extend(["--out".to_string(), p(&out).to_string()]);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = concurve(&refs);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("<?xml") && text.trim_end().ends_with("</svg>"));
    }
    let o = concurve(&["report", "tradeoff", p(&dir.path().join("none.csv")), "--out", p(&svg.join("t.svg"))]);
    assert_eq!(o.status.code(), Some(2));
}
