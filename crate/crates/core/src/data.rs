//! Synthetic generators, CSV ingestion, splits and standardization.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Regression,
    Binary,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regression" => Ok(Task::Regression),
            "binary" | "classification" => Ok(Task::Binary),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split label {other:?}"))),
        }
    }
}

/// Train/val/test proportions used by the toy generators.
pub const TOY_FRACTIONS: [f64; 3] = [0.7, 0.2, 0.1];
/// Train/test only.
pub const KOVACS_FRACTIONS: [f64; 3] = [0.7, 0.0, 0.3];

/// Per-column z-score parameters. A column that was left alone has mean 0
/// and std 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StandardizeOptions {
    pub features: bool,
    pub target: bool,
}

impl Default for StandardizeOptions {
    fn default() -> Self {
        Self {
            features: true,
            target: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    target_name: String,
    features: Tensor,
    target: Vec<f64>,
    task: Task,
    split: Vec<Split>,
    standardization: Option<Standardization>,
}

impl Dataset {
    pub fn new(
        feature_names: Vec<String>,
        target_name: String,
        features: Tensor,
        target: Vec<f64>,
        task: Task,
        split: Vec<Split>,
    ) -> Result<Self> {
        let n = features.rows();
        if feature_names.len() != features.cols() {
            return Err(Error::Data(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        if target.len() != n || split.len() != n {
            return Err(Error::Data(format!(
                "row count mismatch: features {n}, target {}, split {}",
                target.len(),
                split.len()
            )));
        }
        if let Some(i) = target.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite target in row {i}")));
        }
        if task == Task::Binary {
            if let Some(i) = target.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Data(format!(
                    "binary target must be 0 or 1; row {i} has {}",
                    target[i]
                )));
            }
        }
        Ok(Self {
            feature_names,
            target_name,
            features,
            target,
            task,
            split,
            standardization: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn split(&self) -> &[Split] {
        &self.split
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.features.column_values(j)
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.n_rows()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.split.iter().filter(|&&s| s == split).count()
    }

    /// `Val` when the dataset has validation rows, otherwise `Test`.
    pub fn validation_split(&self) -> Split {
        if self.count(Split::Val) > 0 {
            Split::Val
        } else {
            Split::Test
        }
    }

    /// Features and target restricted to one split.
    pub fn subset(&self, split: Split) -> (Tensor, Vec<f64>) {
        let idx = self.indices(split);
        let x = self.features.select_rows(&idx);
        let y = idx.iter().map(|&i| self.target[i]).collect();
        (x, y)
    }

    /// Z-scores features and (for regression) the target using statistics
    /// from the train split only.
    pub fn standardize(&self) -> Result<Dataset> {
        self.standardize_with(StandardizeOptions::default())
    }

    pub fn standardize_with(&self, opts: StandardizeOptions) -> Result<Dataset> {
        if self.standardization.is_some() {
            return Err(Error::Contract("dataset is already standardized".into()));
        }
        let train = self.indices(Split::Train);
        if train.is_empty() {
            return Err(Error::Data("cannot standardize without train rows".into()));
        }
        let p = self.n_features();
        let mut feature_mean = vec![0.0; p];
        let mut feature_std = vec![1.0; p];
        if opts.features {
            for j in 0..p {
                let col: Vec<f64> = train.iter().map(|&i| self.features.get(i, j)).collect();
                let (m, s) = mean_std(&col);
                feature_mean[j] = m;
                feature_std[j] = s;
            }
        }
        let (target_mean, target_std) = if opts.target && self.task == Task::Regression {
            let col: Vec<f64> = train.iter().map(|&i| self.target[i]).collect();
            mean_std(&col)
        } else {
            (0.0, 1.0)
        };
        let data = self
            .features
            .data()
            .chunks(p.max(1))
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| (v - feature_mean[j]) / feature_std[j])
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut out = self.clone();
        out.features = Tensor::new(self.n_rows(), p, data)?;
        out.target = self.target.iter().map(|v| (v - target_mean) / target_std).collect();
        out.standardization = Some(Standardization {
            feature_mean,
            feature_std,
            target_mean,
            target_std,
        });
        Ok(out)
    }

    /// Inverse of [`Self::standardize`].
    pub fn destandardize(&self) -> Result<Dataset> {
        let Some(st) = &self.standardization else {
            return Ok(self.clone());
        };
        let p = self.n_features();
        let data = self
            .features
            .data()
            .chunks(p.max(1))
            .flat_map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| v * st.feature_std[j] + st.feature_mean[j])
                    .collect::<Vec<_>>()
            })
            .collect();
        let mut out = self.clone();
        out.features = Tensor::new(self.n_rows(), p, data)?;
        out.target = self.destandardize_target(&self.target);
        out.standardization = None;
        Ok(out)
    }

    /// Maps standardized target values (or predictions) back to the original
    /// scale.
    pub fn destandardize_target(&self, y: &[f64]) -> Vec<f64> {
        match &self.standardization {
            Some(st) => y.iter().map(|v| v * st.target_std + st.target_mean).collect(),
            None => y.to_vec(),
        }
    }

    /// Writes the features, target and a trailing `split` column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.target_name);
        header.push("split");
        w.write_record(&header)?;
        let p = self.n_features();
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = (0..p).map(|j| self.features.get(i, j).to_string()).collect();
            rec.push(self.target[i].to_string());
            rec.push(self.split[i].as_str().to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 0.0 { std } else { 1.0 })
}

/// Seeded shuffle into train/val/test with the given proportions. Counts are
/// rounded; test absorbs the remainder.
pub fn assign_splits(n: usize, fractions: [f64; 3], seed: u64) -> Result<Vec<Split>> {
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be in [0,1] and sum to 1")));
    }
    let n_train = (fractions[0] * n as f64).round() as usize;
    let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_STREAM));
    let mut split = vec![Split::Test; n];
    for (k, &i) in order.iter().enumerate() {
        if k < n_train {
            split[i] = Split::Train;
        } else if k < n_train + n_val {
            split[i] = Split::Val;
        }
    }
    Ok(split)
}

const SPLIT_STREAM: u64 = 0x5b11_7000_0000_0001;

fn names(prefix: &str, p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("{prefix}{i}")).collect()
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Correlation settings for the first toy problem.
pub const TOY1_RHOS: [f64; 3] = [0.0, 0.9, 1.0];

/// `Y = X1` with `X1, X2 ~ U(0, 1)` and `corr(X1, X2)` set by `rho`, which
/// must be one of [`TOY1_RHOS`].
pub fn gen_toy1(n: usize, rho: f64, seed: u64) -> Result<Dataset> {
    if !TOY1_RHOS.contains(&rho) {
        return Err(Error::Config(format!(
            "rho must be one of {TOY1_RHOS:?}, got {rho}"
        )));
    }
    gen_toy1_free(n, rho, seed)
}

/// [`gen_toy1`] for any `rho` in `[-1, 1]`.
///
/// The pair is a Gaussian copula: latent normals with correlation
/// `2 sin(pi rho / 6)` pushed through the normal CDF, whose Pearson
/// correlation on the uniform scale is `rho`. `rho = 1` copies `X1`.
pub fn gen_toy1_free(n: usize, rho: f64, seed: u64) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::Contract(format!("toy data needs n >= 10, got {n}")));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Config(format!("rho must lie in [-1, 1], got {rho}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = 2.0 * (PI * rho / 6.0).sin();
    let mut data = Vec::with_capacity(2 * n);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let x1 = std_normal_cdf(z1);
        let x2 = if rho == 1.0 {
            x1
        } else if rho == -1.0 {
            1.0 - x1
        } else {
            std_normal_cdf(r * z1 + (1.0 - r * r).sqrt() * z2)
        };
        data.extend([x1, x2]);
        target.push(x1);
    }
    Dataset::new(
        names("x", 2),
        "y".into(),
        Tensor::new(n, 2, data)?,
        target,
        Task::Regression,
        assign_splits(n, TOY_FRACTIONS, seed)?,
    )
}

/// `X1 = Z`, `X2 = |Z|`, `Y = X2` with `Z` standard normal.
pub fn gen_toy2(n: usize, seed: u64) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::Contract(format!("toy data needs n >= 10, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        data.extend([z, z.abs()]);
        target.push(z.abs());
    }
    Dataset::new(
        names("x", 2),
        "y".into(),
        Tensor::new(n, 2, data)?,
        target,
        Task::Regression,
        assign_splits(n, TOY_FRACTIONS, seed)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KovacsParams {
    /// Noise on the derived features.
    pub sigma1: f64,
    /// Noise on the target.
    pub sigma2: f64,
}

impl Default for KovacsParams {
    fn default() -> Self {
        Self {
            sigma1: 0.05,
            sigma2: 0.5,
        }
    }
}

/// Seven features with nonlinear dependencies among them; only `X1`, `X5`
/// and `X6` enter the target. Split 7:3 into train/test.
pub fn gen_kovacs(n: usize, seed: u64) -> Result<Dataset> {
    gen_kovacs_with(n, seed, KovacsParams::default())
}

pub fn gen_kovacs_with(n: usize, seed: u64, params: KovacsParams) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::Contract(format!("need n >= 10, got {n}")));
    }
    if !(params.sigma1 >= 0.0 && params.sigma2 >= 0.0) {
        return Err(Error::Config("noise levels must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = |sigma: f64, rng: &mut ChaCha8Rng| -> f64 {
        if sigma == 0.0 {
            0.0
        } else {
            Normal::new(0.0, sigma).expect("sigma checked above").sample(rng)
        }
    };
    let mut data = Vec::with_capacity(7 * n);
    let mut target = Vec::with_capacity(n);
    for _ in 0..n {
        let x1: f64 = rng.random();
        let x2: f64 = rng.random();
        let x3: f64 = rng.random();
        let x4 = x2.powi(3) + x3 * x3 + noise(params.sigma1, &mut rng);
        let x5 = x3 * x3 + noise(params.sigma1, &mut rng);
        let x6 = x2 * x2 + x4 * x4 + noise(params.sigma1, &mut rng);
        let x7 = x1 * x2 + noise(params.sigma1, &mut rng);
        let y = 2.0 * x1 * x1 + x5.powi(3) + 2.0 * x6.sin() + noise(params.sigma2, &mut rng);
        data.extend([x1, x2, x3, x4, x5, x6, x7]);
        target.push(y);
    }
    Dataset::new(
        names("x", 7),
        "y".into(),
        Tensor::new(n, 7, data)?,
        target,
        Task::Regression,
        assign_splits(n, KOVACS_FRACTIONS, seed)?,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeasonalShape {
    Smooth,
    Step,
}

impl std::str::FromStr for SeasonalShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(SeasonalShape::Smooth),
            "step" => Ok(SeasonalShape::Step),
            other => Err(Error::Config(format!("unknown seasonal shape {other:?}"))),
        }
    }
}

/// Square-wave parameters for the step series. Hours are measured within
/// the day (`t mod 24`) and within the week (`t mod 168`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub daily_on: (f64, f64),
    pub daily_level: f64,
    pub weekly_on: (f64, f64),
    pub weekly_level: f64,
}

impl Default for StepParams {
    fn default() -> Self {
        Self {
            daily_on: (8.0, 18.0),
            daily_level: 1.0,
            weekly_on: (0.0, 120.0),
            weekly_level: 0.5,
        }
    }
}

impl StepParams {
    pub fn levels(&self) -> [f64; 4] {
        [
            0.0,
            self.weekly_level,
            self.daily_level,
            self.daily_level + self.weekly_level,
        ]
    }

    pub fn value(&self, t: f64) -> f64 {
        let on = |phase: f64, (a, b): (f64, f64)| phase >= a && phase < b;
        let mut y = 0.0;
        if on(t.rem_euclid(24.0), self.daily_on) {
            y += self.daily_level;
        }
        if on(t.rem_euclid(168.0), self.weekly_on) {
            y += self.weekly_level;
        }
        y
    }
}

/// Noise level of the smooth series.
pub const SMOOTH_NOISE: f64 = 0.1;

/// Noise-free smooth seasonal signal: two daily and two weekly harmonics.
pub fn smooth_seasonal_value(t: f64) -> f64 {
    let d = 2.0 * PI * t / 24.0;
    let w = 2.0 * PI * t / 168.0;
    d.cos() + 0.5 * (2.0 * d).sin() + 0.8 * w.sin() + 0.3 * (2.0 * w).cos()
}

/// Hourly series `t = 0..n_hours-1` with a single time column `t`.
pub fn gen_seasonal(n_hours: usize, seed: u64, shape: SeasonalShape) -> Result<Dataset> {
    gen_seasonal_with(n_hours, seed, shape, StepParams::default())
}

pub fn gen_seasonal_with(n_hours: usize, seed: u64, shape: SeasonalShape, step: StepParams) -> Result<Dataset> {
    if n_hours < 10 {
        return Err(Error::Contract(format!("need at least 10 hours, got {n_hours}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, SMOOTH_NOISE).expect("constant sigma");
    let t: Vec<f64> = (0..n_hours).map(|h| h as f64).collect();
    let target = t
        .iter()
        .map(|&ti| match shape {
            SeasonalShape::Smooth => smooth_seasonal_value(ti) + noise.sample(&mut rng),
            SeasonalShape::Step => step.value(ti),
        })
        .collect();
    Dataset::new(
        vec!["t".into()],
        "y".into(),
        Tensor::column(t)?,
        target,
        Task::Regression,
        assign_splits(n_hours, TOY_FRACTIONS, seed)?,
    )
}

/// How a CSV file is read into a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub target: String,
    pub task: Task,
    /// Used when the file has no `split` column.
    pub fractions: [f64; 3],
    pub split_seed: u64,
    /// Text columns with more distinct values than this are rejected rather
    /// than one-hot encoded.
    pub max_levels: usize,
}

impl CsvOptions {
    pub fn new(target: &str, task: Task) -> Self {
        Self {
            target: target.into(),
            task,
            fractions: TOY_FRACTIONS,
            split_seed: 0,
            max_levels: 32,
        }
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

/// Reads a headered CSV. Numeric columns are kept, text columns are one-hot
/// encoded (`name=level`, levels in sorted order), and a `split` column, if
/// present, assigns rows to splits.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = reader.headers().map_err(|e| Error::csv(path, e))?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{} has no data rows", path.display())));
    }

    let mut missing: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            if is_missing(cell) {
                // data rows are 1-based after the header line
                missing.entry(header[j].clone()).or_default().push(i + 1);
            }
        }
    }
    if !missing.is_empty() {
        let detail: Vec<String> = missing
            .iter()
            .map(|(col, rows)| format!("{col}: rows {rows:?}"))
            .collect();
        return Err(Error::Data(format!("missing values ({})", detail.join("; "))));
    }

    let target_idx = header
        .iter()
        .position(|h| *h == opts.target)
        .ok_or_else(|| Error::Schema(format!("no target column {:?}", opts.target)))?;
    let split_idx = header.iter().position(|h| h == "split");

    let mut target = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let v: f64 = row[target_idx].trim().parse().map_err(|_| {
            Error::Schema(format!(
                "target {:?} is not numeric in row {}: {:?}",
                opts.target,
                i + 1,
                row[target_idx]
            ))
        })?;
        target.push(v);
    }

    let mut names = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if j == target_idx || Some(j) == split_idx {
            continue;
        }
        let parsed: Vec<Option<f64>> = rows.iter().map(|r| r[j].trim().parse::<f64>().ok()).collect();
        if parsed.iter().all(Option::is_some) {
            names.push(name.clone());
            columns.push(parsed.into_iter().map(Option::unwrap).collect());
            continue;
        }
        let levels: BTreeSet<&str> = rows.iter().map(|r| r[j].trim()).collect();
        if levels.len() > opts.max_levels {
            let row = parsed.iter().position(Option::is_none).unwrap_or(0) + 1;
            return Err(Error::Schema(format!(
                "column {name:?} is not numeric (row {row}) and has {} distinct values, too many to one-hot encode",
                levels.len()
            )));
        }
        for level in &levels {
            names.push(format!("{name}={level}"));
            columns.push(rows.iter().map(|r| if r[j].trim() == *level { 1.0 } else { 0.0 }).collect());
        }
    }
    if columns.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }

    let split = match split_idx {
        Some(s) => rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[s].trim()
                    .parse::<Split>()
                    .map_err(|e| Error::Data(format!("row {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?,
        None => assign_splits(rows.len(), opts.fractions, opts.split_seed)?,
    };

    let n = rows.len();
    let p = columns.len();
    let mut data = Vec::with_capacity(n * p);
    for i in 0..n {
        data.extend(columns.iter().map(|c| c[i]));
    }
    let features = Tensor::new(n, p, data)
        .map_err(|_| Error::Data("non-finite feature value".into()))?;
    Dataset::new(names, opts.target.clone(), features, target, opts.task, split)
}

/// Sample Pearson correlation on plain vectors (no guard).
pub fn sample_corr(a: &[f64], b: &[f64]) -> f64 {
    let (ma, _) = mean_std(a);
    let (mb, _) = mean_std(b);
    let mut num = 0.0;
    let mut sa = 0.0;
    let mut sb = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        sa += (x - ma) * (x - ma);
        sb += (y - mb) * (y - mb);
    }
    num / (sa * sb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn splits_are_disjoint_exhaustive_and_sized() {
        let s = assign_splits(10_000, TOY_FRACTIONS, 3).unwrap();
        let count = |k| s.iter().filter(|&&x| x == k).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (7000, 2000, 1000));
        assert_eq!(s, assign_splits(10_000, TOY_FRACTIONS, 3).unwrap());
        assert_ne!(s, assign_splits(10_000, TOY_FRACTIONS, 4).unwrap());
        assert!(assign_splits(10, [0.5, 0.5, 0.5], 0).is_err());
    }

    #[test]
    fn toy1_settings() {
        let d = gen_toy1(10_000, 1.0, 1).unwrap();
        assert_eq!(d.column(0), d.column(1));
        assert_eq!(d.column(0), d.target());

        let d = gen_toy1(10_000, 0.9, 1).unwrap();
        let c = sample_corr(&d.column(0), &d.column(1));
        assert!((0.88..=0.92).contains(&c), "corr {c}");
        assert_eq!(d.column(0), d.target());
        assert!(d.features().data().iter().all(|v| (0.0..=1.0).contains(v)));

        let d = gen_toy1(10_000, 0.0, 1).unwrap();
        assert!(sample_corr(&d.column(0), &d.column(1)).abs() < 0.05);
        assert_eq!(d.column(0), d.target());

        assert!(matches!(gen_toy1(100, 0.5, 1), Err(Error::Config(_))));
        assert!(gen_toy1_free(100, 0.5, 1).is_ok());
    }

    #[test]
    fn toy1_uniform_marginals() {
        let d = gen_toy1(10_000, 0.9, 2).unwrap();
        for j in 0..2 {
            let col = d.column(j);
            let (m, s) = mean_std(&col);
            assert!((m - 0.5).abs() < 0.02);
            assert!((s - (1.0f64 / 12.0).sqrt()).abs() < 0.01);
        }
    }

    #[test]
    fn toy2_construction() {
        let d = gen_toy2(10_000, 5).unwrap();
        let x1 = d.column(0);
        let x2 = d.column(1);
        assert!(x1.iter().zip(&x2).all(|(a, b)| a.abs() == *b));
        assert_eq!(x2, d.target());
        assert!(sample_corr(&x1, &x2).abs() < 0.05);
    }

    #[test]
    fn kovacs_construction() {
        let quiet = KovacsParams { sigma1: 0.0, sigma2: 0.5 };
        let d = gen_kovacs_with(2000, 1, quiet).unwrap();
        for i in 0..d.n_rows() {
            let x3 = d.features().get(i, 2);
            assert_eq!(d.features().get(i, 4), x3 * x3);
        }
        let d = gen_kovacs(10_000, 1).unwrap();
        assert_eq!(d.n_rows(), 10_000);
        assert_eq!((d.count(Split::Train), d.count(Split::Val), d.count(Split::Test)), (7000, 0, 3000));
        assert_eq!(d.validation_split(), Split::Test);
        // Var(U^2) = 1/5 - 1/9 for U ~ U(0, 1); the noise adds sigma1^2
        let signal = 1.0 / 5.0 - 1.0 / 9.0;
        let expected = (signal / (signal + 0.05f64.powi(2))).sqrt();
        let x3sq: Vec<f64> = d.column(2).iter().map(|v| v * v).collect();
        let c = sample_corr(&d.column(4), &x3sq);
        assert!((c - expected).abs() < 0.005, "corr {c}, expected {expected}");
    }

    #[test]
    fn seasonal_series() {
        let d = gen_seasonal(24 * 7 * 8, 3, SeasonalShape::Smooth).unwrap();
        let y = d.target();
        let lag = 168;
        let ac = sample_corr(&y[..y.len() - lag], &y[lag..]);
        assert!(ac > 0.95, "lag-168 autocorrelation {ac}");

        let step = StepParams::default();
        let d = gen_seasonal(24 * 7 * 4, 3, SeasonalShape::Step).unwrap();
        let levels = step.levels();
        assert!(d.target().iter().all(|v| levels.contains(v)));
        for level in levels {
            assert!(d.target().contains(&level));
        }
        assert_eq!(d, gen_seasonal(24 * 7 * 4, 3, SeasonalShape::Step).unwrap());
        assert_eq!(
            gen_seasonal(500, 9, SeasonalShape::Smooth).unwrap(),
            gen_seasonal(500, 9, SeasonalShape::Smooth).unwrap()
        );
    }

    #[test]
    fn standardize_round_trip() {
        let d = gen_kovacs(3000, 2).unwrap();
        let s = d.standardize().unwrap();
        let (x, y) = s.subset(Split::Train);
        for j in 0..x.cols() {
            let (m, sd) = mean_std(&x.column_values(j));
            assert!(m.abs() < 1e-9);
            assert!((sd - 1.0).abs() < 1e-6);
        }
        let (m, sd) = mean_std(&y);
        assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-6);

        let back = s.destandardize().unwrap();
        for (a, b) in back.features().data().iter().zip(d.features().data()) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in back.target().iter().zip(d.target()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_one_hot_and_split_column() {
        let f = write_tmp("a,color,y,split\n1.5,red,0,train\n2,green,1,val\n3,blue,1,test\n4,red,0,train\n");
        let d = load_csv(f.path(), &CsvOptions::new("y", Task::Binary)).unwrap();
        assert_eq!(d.feature_names(), ["a", "color=blue", "color=green", "color=red"]);
        for i in 0..d.n_rows() {
            let s: f64 = (1..4).map(|j| d.features().get(i, j)).sum();
            assert_eq!(s, 1.0);
        }
        assert_eq!(d.split(), [Split::Train, Split::Val, Split::Test, Split::Train]);
    }

    #[test]
    fn csv_errors() {
        let f = write_tmp("a,b,y\n1,,0\n2,3,\n");
        match load_csv(f.path(), &CsvOptions::new("y", Task::Regression)) {
            Err(Error::Data(msg)) => assert!(msg.contains("rows [1]") && msg.contains("rows [2]"), "{msg}"),
            other => panic!("{other:?}"),
        }
        let f = write_tmp("a,y\nx1,0\nx2,1\nx3,1\n");
        let opts = CsvOptions {
            max_levels: 2,
            ..CsvOptions::new("y", Task::Regression)
        };
        assert!(matches!(load_csv(f.path(), &opts), Err(Error::Schema(_))));
        let f = write_tmp("a,y\n1,0\n2,2\n");
        assert!(matches!(load_csv(f.path(), &CsvOptions::new("y", Task::Binary)), Err(Error::Data(_))));
        assert!(matches!(
            load_csv(Path::new("/nonexistent/file.csv"), &CsvOptions::new("y", Task::Regression)),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_write_read_round_trip() {
        let d = gen_toy2(200, 4).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        d.write_csv(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert!(text.starts_with("x1,x2,y,split\n"));
        let back = load_csv(f.path(), &CsvOptions::new("y", Task::Regression)).unwrap();
        assert_eq!(back, d);
    }
}
