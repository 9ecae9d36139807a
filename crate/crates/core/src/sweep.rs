//! Regularization-strength sweeps and the R⊥ timing benchmark.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::diffcore::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::models::{Activation, AdditiveModel, Link, ModelSpec};
use crate::regularizers::{self, RegKind};
use crate::svgplot;
use crate::training::{self, TrainConfig};

pub const DEFAULT_LAMBDA_COUNT: usize = 50;
pub const DEFAULT_SEED_COUNT: usize = 10;
pub const LAMBDA_MIN: f64 = 1e-4;
pub const LAMBDA_MAX: f64 = 10.0;

/// `count` strengths: the exact 0 followed by `count - 1` log-spaced points
/// over `[LAMBDA_MIN, LAMBDA_MAX]`.
pub fn lambda_grid(count: usize) -> Vec<f64> {
    log_grid(count, LAMBDA_MIN, LAMBDA_MAX)
}

pub fn log_grid(count: usize, min: f64, max: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        2 => vec![0.0, max],
        _ => {
            let (lo, hi) = (min.log10(), max.log10());
            let m = count - 1;
            std::iter::once(0.0)
                .chain((0..m).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (m - 1) as f64)))
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Where the data came from; informational, used in manifests.
    #[serde(default)]
    pub dataset: String,
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Worker threads; 0 lets rayon decide.
    #[serde(default)]
    pub threads: usize,
    /// Write per-cell wall-clock seconds into `records.csv`. Off by default
    /// so reruns are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
    /// Base config; `reg.lambda` and `seed` are overridden per cell.
    pub train: TrainConfig,
}

impl SweepSpec {
    /// Default grid of `n_lambdas` strengths and seeds `1..=n_seeds`.
    pub fn new(dataset: impl Into<String>, train: TrainConfig, n_lambdas: usize, n_seeds: usize) -> Self {
        Self {
            dataset: dataset.into(),
            lambdas: lambda_grid(n_lambdas),
            seeds: (1..=n_seeds as u64).collect(),
            threads: 0,
            record_timing: false,
            train,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("sweep spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::Config("lambda grid is empty".into()));
        }
        if let Some(bad) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::Config(format!("lambda must be finite and >= 0, got {bad}")));
        }
        if self.lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("lambda grid must be strictly increasing".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        self.train.validate()
    }

    /// Config for one cell. A base config without a penalty kind is swept
    /// with the concurvity penalty.
    pub fn cell_config(&self, lambda: f64, seed: u64) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.seed = seed;
        cfg.reg.lambda = lambda;
        if cfg.reg.kind == RegKind::None {
            cfg.reg.kind = RegKind::Concurvity;
        }
        cfg
    }

    pub fn n_cells(&self) -> usize {
        self.lambdas.len() * self.seeds.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub lambda: f64,
    pub seed: u64,
    /// Final validation fit metric (RMSE or BCE).
    pub fit: f64,
    pub rperp: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub lambda: f64,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub q05: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaAggregate {
    pub lambda: f64,
    pub n: usize,
    pub fit: Summary,
    pub rperp: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub metric_name: String,
    /// Sorted by `(lambda, seed)`.
    pub records: Vec<SweepRecord>,
    pub failures: Vec<CellFailure>,
    pub aggregates: Vec<LambdaAggregate>,
}

impl SweepResult {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn aggregate_at(&self, lambda: f64) -> Option<&LambdaAggregate> {
        self.aggregates.iter().find(|a| a.lambda == lambda)
    }

    /// The strength picked by [`elbow`] on the per-λ mean fit.
    pub fn elbow_lambda(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self.aggregates.iter().map(|a| (a.lambda, a.fit.mean)).collect();
        elbow(&pts)
    }
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn summarize(values: &[f64]) -> Summary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Summary {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        q05: quantile(&sorted, 0.05),
        q95: quantile(&sorted, 0.95),
    }
}

/// Per-λ mean and 5%/95% quantiles. `records` must be sorted by
/// `(lambda, seed)`.
pub fn aggregate(records: &[SweepRecord]) -> Vec<LambdaAggregate> {
    records
        .chunk_by(|a, b| a.lambda == b.lambda)
        .map(|group| {
            let fit: Vec<f64> = group.iter().map(|r| r.fit).collect();
            let rperp: Vec<f64> = group.iter().map(|r| r.rperp).collect();
            LambdaAggregate {
                lambda: group[0].lambda,
                n: group.len(),
                fit: summarize(&fit),
                rperp: summarize(&rperp),
            }
        })
        .collect()
}

/// Elbow of a fit-vs-strength curve. Over the points with `lambda > 0`, in
/// `(log10 lambda, fit)` rescaled to the unit square, picks the point lying
/// furthest below the chord from the weakest to the strongest setting: the
/// last strength before the fit starts to degrade. Falls back to the
/// smallest positive strength when no point lies below the chord.
pub fn elbow(points: &[(f64, f64)]) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(l, f)| *l > 0.0 && f.is_finite())
        .map(|&(l, f)| (l.log10(), f))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let first = *pts.first()?;
    let last = *pts.last()?;
    let (x_span, y_min, y_max) = (
        last.0 - first.0,
        pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    if pts.len() < 3 || x_span <= 0.0 || y_max <= y_min {
        return Some(10f64.powf(first.0));
    }
    let norm = |(x, y): (f64, f64)| ((x - first.0) / x_span, (y - y_min) / (y_max - y_min));
    let (a, b) = (norm(first), norm(last));
    let mut best = (0.0, first.0);
    for &p in &pts[1..pts.len() - 1] {
        let (x, y) = norm(p);
        let chord = a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0);
        let below = chord - y;
        if below > best.0 {
            best = (below, p.0);
        }
    }
    Some(10f64.powf(best.1))
}

/// Trains one model per `(lambda, seed)` cell on `data` (raw; it is
/// prepared once with the base config). Cells run in parallel and fail
/// independently; the sweep only errors when every cell fails.
pub fn run_sweep(spec: &SweepSpec, data: &Dataset) -> Result<SweepResult> {
    spec.validate()?;
    let prepared = spec.train.prepare(data)?;
    let cells: Vec<(f64, u64)> = spec
        .lambdas
        .iter()
        .flat_map(|&l| spec.seeds.iter().map(move |&s| (l, s)))
        .collect();

    let run_cell = |&(lambda, seed): &(f64, u64)| -> std::result::Result<SweepRecord, CellFailure> {
        let cfg = spec.cell_config(lambda, seed);
        let start = Instant::now();
        match training::train(&prepared, &cfg) {
            Ok((_, report)) => Ok(SweepRecord {
                lambda,
                seed,
                fit: report.final_metric,
                rperp: report.final_val_rperp,
                wallclock_s: start.elapsed().as_secs_f64(),
            }),
            Err(e) => {
                log::warn!("sweep cell lambda={lambda} seed={seed} failed: {e}");
                Err(CellFailure {
                    lambda,
                    seed,
                    error: e.to_string(),
                })
            }
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<_> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(f) => failures.push(f),
        }
    }
    if records.is_empty() {
        return Err(Error::SweepFailed(cells.len()));
    }
    records.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.seed.cmp(&b.seed)));
    failures.sort_by(|a, b| a.lambda.total_cmp(&b.lambda).then(a.seed.cmp(&b.seed)));
    let aggregates = aggregate(&records);
    Ok(SweepResult {
        metric_name: match spec.train.loss {
            training::LossKind::Mse => "rmse".into(),
            training::LossKind::BceLogits => "bce".into(),
        },
        records,
        failures,
        aggregates,
    })
}

/// Paths written by [`emit_tradeoff`].
#[derive(Debug, Clone)]
pub struct TradeoffPaths {
    pub records_csv: PathBuf,
    pub tradeoff_csv: PathBuf,
    pub tradeoff_svg: PathBuf,
    pub verbose_csv: PathBuf,
    pub verbose_svg: PathBuf,
}

impl TradeoffPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            records_csv: dir.join("records.csv"),
            tradeoff_csv: dir.join("tradeoff.csv"),
            tradeoff_svg: dir.join("tradeoff.svg"),
            verbose_csv: dir.join("verbose.csv"),
            verbose_svg: dir.join("verbose.svg"),
        }
    }

    pub fn all(&self) -> [&Path; 5] {
        [
            &self.records_csv,
            &self.tradeoff_csv,
            &self.tradeoff_svg,
            &self.verbose_csv,
            &self.verbose_svg,
        ]
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `lambda,seed,fit,rperp,wallclock_s`; the last column is left empty unless
/// `with_timing`.
pub fn records_csv(records: &[SweepRecord], with_timing: bool) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "seed", "fit", "rperp", "wallclock_s"])?;
    for r in records {
        let t = if with_timing { r.wallclock_s.to_string() } else { String::new() };
        w.write_record([r.lambda.to_string(), r.seed.to_string(), r.fit.to_string(), r.rperp.to_string(), t])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8"))
}

/// Joint curve: one row per λ with mean and quantiles of R⊥ and fit.
pub fn tradeoff_csv(aggregates: &[LambdaAggregate]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "n", "rperp_mean", "rperp_q05", "rperp_q95", "fit_mean", "fit_q05", "fit_q95"])?;
    for a in aggregates {
        w.write_record([
            a.lambda.to_string(),
            a.n.to_string(),
            a.rperp.mean.to_string(),
            a.rperp.q05.to_string(),
            a.rperp.q95.to_string(),
            a.fit.mean.to_string(),
            a.fit.q05.to_string(),
            a.fit.q95.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8"))
}

/// Long format, one series per quantity: `lambda,series,mean,q05,q95`.
pub fn verbose_csv(aggregates: &[LambdaAggregate]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lambda", "series", "mean", "q05", "q95"])?;
    for (name, pick) in [("fit", 0), ("rperp", 1)] {
        for a in aggregates {
            let s = if pick == 0 { a.fit } else { a.rperp };
            w.write_record([a.lambda.to_string(), name.to_string(), s.mean.to_string(), s.q05.to_string(), s.q95.to_string()])?;
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8"))
}

/// Writes the record table, the joint and verbose curves and their charts.
pub fn emit_tradeoff(result: &SweepResult, paths: &TradeoffPaths, with_timing: bool) -> Result<()> {
    if result.records.is_empty() {
        return Err(Error::Contract("no sweep records to emit".into()));
    }
    let records = records_csv(&result.records, with_timing)?;
    write_file(&paths.records_csv, &records)?;
    write_file(&paths.tradeoff_csv, &tradeoff_csv(&result.aggregates)?)?;
    write_file(&paths.verbose_csv, &verbose_csv(&result.aggregates)?)?;
    write_file(&paths.tradeoff_svg, &svgplot::plot_tradeoff(&records, &result.metric_name)?)?;
    write_file(&paths.verbose_svg, &svgplot::plot_verbose(&records, &result.metric_name)?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub features: Vec<usize>,
    pub batches: Vec<usize>,
    /// Repetitions per R⊥ timing.
    pub reps: usize,
    /// Repetitions per NAM-forward baseline timing. The baseline is far more
    /// expensive at large `p`, and only its mean enters the overhead.
    pub baseline_reps: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            features: vec![8, 64, 256],
            batches: vec![128, 512],
            reps: 100,
            baseline_reps: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub features: usize,
    pub batch: usize,
    /// Mean seconds for one R⊥ forward + backward pass.
    pub rperp_s: f64,
    /// Mean seconds for one forward pass of a NAM with 3 x 128 GELU shape
    /// functions; `None` when the baseline was skipped.
    pub nam_forward_s: Option<f64>,
}

impl BenchRow {
    pub fn overhead(&self) -> Option<f64> {
        self.nam_forward_s.map(|b| self.rperp_s / b)
    }
}

fn random_columns(rng: &mut ChaCha8Rng, p: usize, n: usize) -> Vec<Vec<f64>> {
    (0..p).map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

/// Mean seconds of R⊥ forward + backward on `p` random columns of length `n`.
pub fn time_rperp(p: usize, n: usize, reps: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = random_columns(&mut rng, p, n);
    let tensors = cols.into_iter().map(Tensor::column).collect::<Result<Vec<_>>>()?;
    let start = Instant::now();
    for _ in 0..reps.max(1) {
        let mut tape = Tape::new();
        let ids: Vec<_> = tensors.iter().map(|t| tape.param(t.clone())).collect();
        let r = regularizers::r_perp(&mut tape, &ids, regularizers::DEFAULT_EPS)?;
        std::hint::black_box(tape.backward(r.value)?);
    }
    Ok(start.elapsed().as_secs_f64() / reps.max(1) as f64)
}

/// Mean seconds of one forward pass of a `p`-feature 3 x 128 NAM on `n` rows.
pub fn time_nam_forward(p: usize, n: usize, reps: usize, seed: u64) -> Result<f64> {
    let names: Vec<String> = (1..=p).map(|i| format!("x{i}")).collect();
    let spec = ModelSpec::nam(&names, &[128, 128, 128], Activation::Gelu, Link::Identity);
    let model = AdditiveModel::init(spec, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
    let x: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = Tensor::new(n, p, x)?;
    let start = Instant::now();
    for _ in 0..reps.max(1) {
        std::hint::black_box(model.evaluate(&x)?);
    }
    Ok(start.elapsed().as_secs_f64() / reps.max(1) as f64)
}

/// One row per `(p, batch)` cell, in the order given. `baseline_reps == 0`
/// skips the NAM baseline.
pub fn bench_rperp(spec: &BenchSpec) -> Result<Vec<BenchRow>> {
    if let Some(p) = spec.features.iter().find(|&&p| p < 2) {
        return Err(Error::Config(format!("feature counts must be >= 2, got {p}")));
    }
    if let Some(b) = spec.batches.iter().find(|&&b| b < 2) {
        return Err(Error::Config(format!("batch sizes must be >= 2, got {b}")));
    }
    let mut rows = Vec::new();
    for &batch in &spec.batches {
        for &p in &spec.features {
            let rperp_s = time_rperp(p, batch, spec.reps, spec.seed)?;
            let nam_forward_s = if spec.baseline_reps > 0 {
                Some(time_nam_forward(p, batch, spec.baseline_reps, spec.seed)?)
            } else {
                None
            };
            log::info!("bench p={p} batch={batch} rperp={rperp_s:.3e}s");
            rows.push(BenchRow {
                features: p,
                batch,
                rperp_s,
                nam_forward_s,
            });
        }
    }
    Ok(rows)
}

/// `features,batch,rperp_s,nam_forward_s,overhead`.
pub fn write_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["features", "batch", "rperp_s", "nam_forward_s", "overhead"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.features.to_string(),
            r.batch.to_string(),
            r.rperp_s.to_string(),
            opt(r.nam_forward_s),
            opt(r.overhead()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
