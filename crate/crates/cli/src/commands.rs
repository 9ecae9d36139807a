use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use concurve::data::{self, CsvOptions, Dataset, SeasonalShape, Split, Task};
use concurve::metrics::{self, CorrKind};
use concurve::models::{AdditiveModel, ShapeSpec};
use concurve::regularizers::RegKind;
use concurve::svgplot;
use concurve::sweep::{self, BenchSpec, SweepSpec, TradeoffPaths};
use concurve::training::{self, LossKind, TrainConfig};

use crate::manifest::{Fingerprint, RunManifest, RunStatus};
use crate::{
    BenchArgs, ChartKind, CliError, CliResult, ConfigArgs, DatasetName, GenArgs, PresetArg, RegArg, ReportArgs, ShapeArg,
    SweepArgs, TaskArg, TrainArgs,
};

pub const SHAPE_GRID_POINTS: usize = 256;
const DEFAULT_ROWS: usize = 10_000;
/// Twelve weeks of hourly observations.
const DEFAULT_HOURS: usize = 2016;

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{}: no such file", path.display())))
    }
}

fn create_dir(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(CliError::Runtime)
}

fn write(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::Runtime)
}

/// Runs `body`, recording its outcome in `manifest`.
fn tracked(manifest: &mut RunManifest, body: impl FnOnce() -> CliResult<Vec<String>>) -> CliResult {
    match body() {
        Ok(failures) => {
            let n_failed = failures.len();
            match manifest.finish(failures)? {
                RunStatus::Ok => Ok(()),
                _ if n_failed > 0 => Err(CliError::Partial(format!("{n_failed} cell(s) failed; see the manifest"))),
                _ => Err(CliError::Runtime(anyhow::anyhow!("run incomplete: {:?}", manifest.failures))),
            }
        }
        Err(e) => {
            let err = match &e {
                CliError::Usage(m) | CliError::Partial(m) => anyhow::anyhow!("{m}"),
                CliError::Runtime(r) => anyhow::anyhow!("{r:#}"),
            };
            manifest.abort(&err)?;
            Err(e)
        }
    }
}

pub fn generate(args: &GenArgs) -> CliResult<Dataset> {
    let n = args.n.unwrap_or(match args.dataset {
        DatasetName::Seasonal => DEFAULT_HOURS,
        _ => DEFAULT_ROWS,
    });
    let ds = match args.dataset {
        DatasetName::Toy1 => {
            if args.rho_free {
                if !(0.0..=1.0).contains(&args.rho) {
                    return Err(CliError::Usage(format!("--rho must lie in [0, 1], got {}", args.rho)));
                }
                data::gen_toy1_free(n, args.rho, args.seed)?
            } else {
                if !data::TOY1_RHOS.contains(&args.rho) {
                    return Err(CliError::Usage(format!(
                        "--rho must be one of 0, 0.9, 1 (got {}); pass --rho-free for other values",
                        args.rho
                    )));
                }
                data::gen_toy1(n, args.rho, args.seed)?
            }
        }
        DatasetName::Toy2 => data::gen_toy2(n, args.seed)?,
        DatasetName::Kovacs => data::gen_kovacs(n, args.seed)?,
        DatasetName::Seasonal => {
            let shape = match args.shape {
                ShapeArg::Smooth => SeasonalShape::Smooth,
                ShapeArg::Step => SeasonalShape::Step,
            };
            data::gen_seasonal(n, args.seed, shape)?
        }
    };
    Ok(ds)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default()
}

fn sidecar_manifest(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub fn gen(args: &GenArgs) -> CliResult {
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let config = serde_json::json!({
        "dataset": format!("{:?}", args.dataset).to_lowercase(),
        "n": args.n,
        "seed": args.seed,
        "rho": args.rho,
        "rho_free": args.rho_free,
        "shape": format!("{:?}", args.shape).to_lowercase(),
    });
    let mut manifest = RunManifest::begin(
        &sidecar_manifest(&args.out),
        "gen",
        config,
        None,
        vec![args.seed],
        vec![file_name(&args.out)],
    )?;
    tracked(&mut manifest, || {
        let ds = generate(args)?;
        ds.write_csv(&args.out)?;
        println!("wrote {} rows to {}", ds.n_rows(), args.out.display());
        Ok(Vec::new())
    })
}

fn usage_on_config(e: concurve::Error) -> CliError {
    match e {
        concurve::Error::Config(m) => CliError::Usage(m),
        other => other.into(),
    }
}

/// Preset or TOML config, adjusted for the task and the overrides.
pub fn resolve_config(args: &ConfigArgs) -> CliResult<TrainConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            require_file(path)?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            TrainConfig::from_toml(&text).map_err(usage_on_config)?
        }
        None => {
            let name = match args.preset.unwrap_or(PresetArg::Toy) {
                PresetArg::Toy => "toy",
                PresetArg::Kovacs => "kovacs",
                PresetArg::Seasonal => "seasonal",
            };
            let mut cfg = TrainConfig::preset(name)?;
            if args.task == TaskArg::Binary {
                cfg.loss = LossKind::BceLogits;
            }
            cfg
        }
    };
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(r) = args.reg {
        cfg.reg.kind = match r {
            RegArg::None => RegKind::None,
            RegArg::Concurvity => RegKind::Concurvity,
            RegArg::L1 => RegKind::L1Contrib,
        };
    }
    cfg.validate().map_err(usage_on_config)?;
    Ok(cfg)
}

fn load(path: &Path, args: &ConfigArgs) -> CliResult<Dataset> {
    require_file(path)?;
    let task = match args.task {
        TaskArg::Regression => Task::Regression,
        TaskArg::Binary => Task::Binary,
    };
    Ok(data::load_csv(path, &CsvOptions::new(&args.target, task))?)
}

/// Contribution of every component on a 256-point grid: over the train
/// range of its input column for MLP shapes, over one period for Fourier
/// terms. `x` is in the original units of the column and `value` in target
/// units.
pub fn shape_grid_csv(model: &AdditiveModel, prepared: &Dataset, seed: u64) -> CliResult<String> {
    let st = prepared.standardization();
    let target_std = st.map(|s| s.target_std).unwrap_or(1.0);
    let train_rows = prepared.indices(Split::Train);
    let mut out = String::from("feature,seed,x,value\n");
    for (i, comp) in model.spec().components.iter().enumerate() {
        let (model_x, raw_x): (Vec<f64>, Vec<f64>) = match &comp.shape {
            ShapeSpec::Fourier { period, .. } => {
                let xs: Vec<f64> = (0..SHAPE_GRID_POINTS).map(|k| period * k as f64 / SHAPE_GRID_POINTS as f64).collect();
                (xs.clone(), xs)
            }
            ShapeSpec::Mlp { .. } => {
                let col = prepared.column(comp.input);
                let (lo, hi) = train_rows
                    .iter()
                    .map(|&r| col[r])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
                let (mean, std) = st.map(|s| (s.feature_mean[comp.input], s.feature_std[comp.input])).unwrap_or((0.0, 1.0));
                let xs: Vec<f64> = (0..SHAPE_GRID_POINTS)
                    .map(|k| lo + (hi - lo) * k as f64 / (SHAPE_GRID_POINTS - 1) as f64)
                    .collect();
                let raw = xs.iter().map(|x| x * std + mean).collect();
                (xs, raw)
            }
        };
        let values = model.evaluate_component(i, &model_x)?;
        for (x, v) in raw_x.iter().zip(values) {
            let _ = writeln!(out, "{},{seed},{x},{}", comp.name, v * target_std);
        }
    }
    Ok(out)
}

const TRAIN_OUTPUTS: [&str; 7] = [
    "report.csv",
    "model.json",
    "importance.csv",
    "corr_raw.csv",
    "corr_transformed.csv",
    "shapes.csv",
    "config.toml",
];

pub fn train(args: &TrainArgs) -> CliResult {
    let mut cfg = resolve_config(&args.cfg)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(lambda) = args.lambda {
        cfg.reg.lambda = lambda;
        if lambda > 0.0 && cfg.reg.kind == RegKind::None {
            if args.cfg.reg == Some(RegArg::None) {
                return Err(CliError::Usage("--reg none conflicts with --lambda > 0".into()));
            }
            cfg.reg.kind = RegKind::Concurvity;
        }
    }
    cfg.validate().map_err(usage_on_config)?;
    let raw = load(&args.data, &args.cfg)?;
    create_dir(&args.out)?;
    let mut manifest = RunManifest::begin(
        &args.out.join("manifest.json"),
        "train",
        serde_json::to_value(&cfg).context("serializing config")?,
        Some(Fingerprint::of(&args.data)?),
        vec![cfg.seed],
        TRAIN_OUTPUTS.iter().map(|s| s.to_string()).collect(),
    )?;
    tracked(&mut manifest, || {
        let out = &args.out;
        let prepared = cfg.prepare(&raw)?;
        let (model, report) = training::train(&prepared, &cfg)?;
        let val = prepared.validation_split();
        report.write_csv(&out.join("report.csv"))?;
        model.save(&out.join("model.json"))?;
        metrics::importance_on(&model, &prepared, val)?.write_csv(&out.join("importance.csv"), cfg.seed)?;
        let idx = prepared.indices(val);
        let raw_cols: Vec<Vec<f64>> = (0..prepared.n_features())
            .map(|j| {
                let c = prepared.column(j);
                idx.iter().map(|&r| c[r]).collect()
            })
            .collect();
        metrics::corr_matrix(&raw_cols, prepared.feature_names(), CorrKind::RawFeatures)?.write_csv(&out.join("corr_raw.csv"))?;
        let contribs = metrics::split_contributions(&model, &prepared, val)?;
        let names: Vec<String> = model.spec().components.iter().map(|c| c.name.clone()).collect();
        metrics::corr_matrix(&contribs, &names, CorrKind::TransformedFeatures)?.write_csv(&out.join("corr_transformed.csv"))?;
        write(&out.join("shapes.csv"), &shape_grid_csv(&model, &prepared, cfg.seed)?)?;
        write(&out.join("config.toml"), &cfg.to_toml())?;
        println!(
            "{} {}: {:.6}  R⊥: {:.4}",
            val.as_str(),
            report.metric_name,
            report.final_metric,
            report.final_val_rperp
        );
        Ok(Vec::new())
    })
}

fn threads_from_env() -> CliResult<usize> {
    match std::env::var("CONCURVE_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("CONCURVE_THREADS must be a thread count, got {v:?}"))),
        Err(_) => Ok(0),
    }
}

pub fn sweep(args: &SweepArgs) -> CliResult {
    let mut spec = match &args.spec {
        Some(path) => {
            require_file(path)?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            SweepSpec::from_toml(&text).map_err(usage_on_config)?
        }
        None => SweepSpec::new(args.data.display().to_string(), resolve_config(&args.cfg)?, args.lambdas, args.seeds),
    };
    if let Some(e) = args.cfg.epochs {
        spec.train.epochs = e;
    }
    if let Some(r) = args.cfg.reg {
        spec.train.reg.kind = match r {
            RegArg::None | RegArg::Concurvity => RegKind::Concurvity,
            RegArg::L1 => RegKind::L1Contrib,
        };
    }
    spec.record_timing |= args.timing;
    let cap = threads_from_env()?;
    if cap > 0 && (spec.threads == 0 || spec.threads > cap) {
        spec.threads = cap;
    }
    spec.validate().map_err(usage_on_config)?;
    let raw = load(&args.data, &args.cfg)?;
    create_dir(&args.out)?;
    let paths = TradeoffPaths::in_dir(&args.out);
    let mut manifest = RunManifest::begin(
        &args.out.join("manifest.json"),
        "sweep",
        serde_json::to_value(&spec).context("serializing sweep spec")?,
        Some(Fingerprint::of(&args.data)?),
        spec.seeds.clone(),
        paths.all().iter().map(|p| file_name(p)).collect(),
    )?;
    tracked(&mut manifest, || {
        let result = sweep::run_sweep(&spec, &raw)?;
        sweep::emit_tradeoff(&result, &paths, spec.record_timing)?;
        for a in &result.aggregates {
            println!(
                "lambda {:<12.6e} {} {:.6}  R⊥ {:.4}  (n={})",
                a.lambda, result.metric_name, a.fit.mean, a.rperp.mean, a.n
            );
        }
        if let Some(l) = result.elbow_lambda() {
            println!("elbow lambda: {l:.6e}");
        }
        Ok(result
            .failures
            .iter()
            .map(|f| format!("lambda={} seed={}: {}", f.lambda, f.seed, f.error))
            .collect())
    })
}

pub fn bench(args: &BenchArgs) -> CliResult {
    let spec = BenchSpec {
        features: args.features.iter().flatten().copied().collect(),
        batches: args.batches.iter().flatten().copied().collect(),
        reps: args.reps,
        baseline_reps: args.baseline_reps,
        seed: args.seed,
    };
    if spec.features.iter().any(|&p| p < 2) || spec.batches.iter().any(|&b| b < 2) {
        return Err(CliError::Usage("feature counts and batch sizes must be >= 2".into()));
    }
    create_dir(&args.out)?;
    let mut manifest = RunManifest::begin(
        &args.out.join("manifest.json"),
        "bench",
        serde_json::to_value(&spec).context("serializing bench spec")?,
        None,
        vec![spec.seed],
        vec!["bench.csv".into()],
    )?;
    tracked(&mut manifest, || {
        let rows = sweep::bench_rperp(&spec)?;
        sweep::write_bench_csv(&rows, &args.out.join("bench.csv"))?;
        println!("{:>8} {:>8} {:>14} {:>14} {:>10}", "features", "batch", "rperp_ms", "nam_fwd_ms", "overhead");
        for r in &rows {
            let fwd = r.nam_forward_s.map(|s| format!("{:.4}", s * 1e3)).unwrap_or_else(|| "-".into());
            let ovh = r.overhead().map(|o| format!("{:.2}%", o * 100.0)).unwrap_or_else(|| "-".into());
            println!("{:>8} {:>8} {:>14.4} {:>14} {:>10}", r.features, r.batch, r.rperp_s * 1e3, fwd, ovh);
        }
        Ok(Vec::new())
    })
}

/// Concatenates CSV files that share a header.
fn concat_csv(paths: &[PathBuf]) -> CliResult<String> {
    let mut out = String::new();
    let mut header: Option<String> = None;
    for p in paths {
        require_file(p)?;
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let mut lines = text.lines();
        let h = lines.next().unwrap_or("").to_string();
        match &header {
            None => {
                out.push_str(&h);
                out.push('\n');
                header = Some(h);
            }
            Some(first) if *first != h => {
                return Err(CliError::Usage(format!("{}: header differs from the first input", p.display())));
            }
            Some(_) => {}
        }
        for l in lines.filter(|l| !l.is_empty()) {
            out.push_str(l);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn report(args: &ReportArgs) -> CliResult {
    let single = |what: &str| -> CliResult<String> {
        if args.inputs.len() != 1 {
            return Err(CliError::Usage(format!("{what} charts take exactly one input")));
        }
        concat_csv(&args.inputs)
    };
    let svg = match args.kind {
        ChartKind::Tradeoff => svgplot::plot_tradeoff(&concat_csv(&args.inputs)?, &args.metric)?,
        ChartKind::Verbose => svgplot::plot_verbose(&concat_csv(&args.inputs)?, &args.metric)?,
        ChartKind::Shapes => {
            let rug = match &args.data {
                Some(p) => {
                    require_file(p)?;
                    Some(std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
                }
                None => None,
            };
            svgplot::plot_shapes(&concat_csv(&args.inputs)?, rug.as_deref())?
        }
        ChartKind::Importance => svgplot::plot_importance(&concat_csv(&args.inputs)?)?,
        ChartKind::Corr => {
            let title = args.title.clone().unwrap_or_else(|| file_name(&args.inputs[0]));
            svgplot::plot_corr(&single("correlation")?, &title)?
        }
    };
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write(&args.out, &svg)?;
    println!("wrote {}", args.out.display());
    Ok(())
}
