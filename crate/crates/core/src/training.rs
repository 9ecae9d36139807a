//! Mini-batch AdamW training with cosine annealing and a warm-up-gated
//! penalty.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split, StandardizeOptions, Task};
use crate::diffcore::{Axis, NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::metrics;
use crate::models::{Activation, AdditiveModel, Link, ModelSpec};
use crate::regularizers::{self, RegConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    BceLogits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// One MLP per feature.
    Nam,
    /// Daily + weekly Fourier terms over a single hourly time column.
    Seasonal,
}

/// Everything needed to train one model. Serialized as a flat TOML table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub loss: LossKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub reg: RegConfig,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub daily_terms: usize,
    pub weekly_terms: usize,
}

pub const PRESETS: [&str; 3] = ["toy", "kovacs", "seasonal"];

impl TrainConfig {
    /// Toy-example settings: 3 x 128 GELU MLPs, lr 1e-3, no weight decay,
    /// 50 epochs of batch 128.
    pub fn toy() -> Self {
        Self {
            model: ModelKind::Nam,
            loss: LossKind::Mse,
            lr: 1e-3,
            weight_decay: 0.0,
            epochs: 50,
            batch_size: 128,
            seed: 0,
            reg: RegConfig::none(),
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            hidden: vec![128, 128, 128],
            activation: Activation::Gelu,
            daily_terms: 0,
            weekly_terms: 0,
        }
    }

    /// Seasonal model with 50 Fourier terms per seasonality.
    pub fn seasonal() -> Self {
        Self {
            model: ModelKind::Seasonal,
            lr: 1e-2,
            epochs: 100,
            hidden: Vec::new(),
            daily_terms: 50,
            weekly_terms: 50,
            ..Self::toy()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" | "kovacs" => Ok(Self::toy()),
            "seasonal" => Ok(Self::seasonal()),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected one of {PRESETS:?}"
            ))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.reg.validate()?;
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be >= 2".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be > 0".into()));
        }
        Ok(())
    }

    /// Model layout for `data`.
    pub fn model_spec(&self, data: &Dataset) -> Result<ModelSpec> {
        let expected = match data.task() {
            Task::Regression => LossKind::Mse,
            Task::Binary => LossKind::BceLogits,
        };
        if self.loss != expected {
            return Err(Error::Config(format!(
                "loss {:?} does not fit a {:?} task",
                self.loss,
                data.task()
            )));
        }
        let spec = match self.model {
            ModelKind::Nam => {
                let link = match data.task() {
                    Task::Regression => Link::Identity,
                    Task::Binary => Link::Logit,
                };
                ModelSpec::nam(data.feature_names(), &self.hidden, self.activation, link)
            }
            ModelKind::Seasonal => {
                if data.n_features() != 1 || data.task() != Task::Regression {
                    return Err(Error::Config(
                        "the seasonal model needs a single time column and a regression target".into(),
                    ));
                }
                ModelSpec::reduced_prophet(self.daily_terms, self.weekly_terms)
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Standardizes `data` the way this model expects: every column and the
    /// target for tabular models, only the target for the seasonal model so
    /// that periods stay in hours.
    pub fn prepare(&self, data: &Dataset) -> Result<Dataset> {
        if data.standardization().is_some() {
            return Ok(data.clone());
        }
        let opts = match self.model {
            ModelKind::Nam => StandardizeOptions::default(),
            ModelKind::Seasonal => StandardizeOptions {
                features: false,
                target: true,
            },
        };
        data.standardize_with(opts)
    }
}

/// Mean loss recorded on the tape. `target` is an `N x 1` node.
pub fn loss(tape: &mut Tape, kind: LossKind, prediction: NodeId, target: NodeId) -> Result<NodeId> {
    let ps = tape.value(prediction).shape();
    let ts = tape.value(target).shape();
    if ps != ts {
        return Err(Error::Dimension {
            op: "loss",
            left: ps,
            right: ts,
        });
    }
    match kind {
        LossKind::Mse => {
            let r = tape.sub(prediction, target)?;
            let sq = tape.square(r)?;
            tape.mean(sq, Axis::All)
        }
        LossKind::BceLogits => {
            if let Some(v) = tape.value(target).data().iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Data(format!("binary target must be 0 or 1, got {v}")));
            }
            let sp = tape.softplus(prediction)?;
            let yz = tape.mul(target, prediction)?;
            let per = tape.sub(sp, yz)?;
            tape.mean(per, Axis::All)
        }
    }
}

/// [`loss`] on plain vectors.
pub fn loss_value(kind: LossKind, prediction: &[f64], target: &[f64]) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(Tensor::column(prediction.to_vec())?);
    let t = tape.constant(Tensor::column(target.to_vec())?);
    let l = loss(&mut tape, kind, p, t)?;
    tape.value(l).item()
}

/// Cosine annealing from `base_lr` at step 0 to 0 at `total_steps`.
pub fn cosine_lr(base_lr: f64, step: usize, total_steps: usize) -> f64 {
    if total_steps == 0 {
        return base_lr;
    }
    base_lr * 0.5 * (1.0 + (PI * step as f64 / total_steps as f64).cos())
}

/// AdamW with bias correction and decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(params: &[Tensor], beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64, weight_decay: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Contract("optimizer state does not match parameters".into()));
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Dimension {
                    op: "adamw",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let mut data = p.data().to_vec();
            for (j, (x, &gj)) in data.iter_mut().zip(g.data()).enumerate() {
                *x -= lr * weight_decay * *x;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                if !v[j].is_finite() {
                    // An overflowed second moment silently zeroes the update.
                    return Err(Error::NonFinite(format!("adamw second moment of parameter {k}")));
                }
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                *x -= lr * mhat / (vhat.sqrt() + self.eps);
            }
            *p = Tensor::checked(p.rows(), p.cols(), data, "adamw")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_rperp: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// `"rmse"` for regression, `"bce"` for binary targets.
    pub metric_name: String,
    /// Final fit metric on the validation split.
    pub final_metric: f64,
    /// R⊥ of the final model over the whole validation split.
    pub final_val_rperp: f64,
    pub val_split: Split,
    pub total_steps: usize,
    /// Penalty value added at every optimizer step (0 while gated).
    pub step_penalties: Vec<f64>,
}

impl TrainReport {
    /// Per-epoch CSV: `epoch,train_loss,val_loss,val_rperp`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["epoch", "train_loss", "val_loss", "val_rperp"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_loss.to_string(),
                e.val_rperp.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// The report with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> TrainReport {
        let mut r = self.clone();
        r.epochs.iter_mut().for_each(|e| e.wallclock_s = 0.0);
        r
    }
}

/// Batch index lists for one epoch: full batches plus a final short batch
/// when it has at least two rows.
fn batches(order: &[usize], batch_size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(batch_size).filter(|b| b.len() >= 2)
}

fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n / batch_size + usize::from(n % batch_size >= 2)
}

const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn diverged(step: usize, err: Error) -> Error {
    match err {
        Error::NonFinite(detail) => Error::Divergence { step, detail },
        Error::NumericalDomain { op, detail } => Error::Divergence {
            step,
            detail: format!("{op}: {detail}"),
        },
        other => other,
    }
}

/// Validation loss, fit metric and R⊥ of `model` on one split.
pub fn evaluate_split(model: &AdditiveModel, data: &Dataset, split: Split, cfg: &TrainConfig) -> Result<(f64, f64, f64)> {
    let (x, y) = data.subset(split);
    let eval = model.evaluate(&x)?;
    let val_loss = loss_value(cfg.loss, &eval.prediction, &y)?;
    let metric = match cfg.loss {
        LossKind::Mse => metrics::rmse(&eval.prediction, &y)?,
        LossKind::BceLogits => metrics::bce_logits(&eval.prediction, &y)?,
    };
    let rperp = regularizers::r_perp_value(&eval.contributions, cfg.reg.eps)?;
    Ok((val_loss, metric, rperp))
}

/// Initializes a model from `cfg.seed` and trains it on `data`, which must
/// already be prepared (see [`TrainConfig::prepare`]).
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<(AdditiveModel, TrainReport)> {
    cfg.validate()?;
    let model = AdditiveModel::init(cfg.model_spec(data)?, cfg.seed)?;
    fit(model, data, cfg)
}

/// Trains `model` on the train split, validating on the validation split
/// after every epoch.
pub fn fit(mut model: AdditiveModel, data: &Dataset, cfg: &TrainConfig) -> Result<(AdditiveModel, TrainReport)> {
    cfg.validate()?;
    let train_idx = data.indices(Split::Train);
    if train_idx.len() < 2 {
        return Err(Error::Data(format!("need at least 2 train rows, got {}", train_idx.len())));
    }
    let val_split = data.validation_split();
    if data.count(val_split) < 2 {
        return Err(Error::Data("need at least 2 validation rows".into()));
    }

    let features = data.features();
    let target = data.target();
    let per_epoch = steps_per_epoch(train_idx.len(), cfg.batch_size);
    let total_steps = per_epoch * cfg.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut adam = AdamW::new(model.params(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    let mut order = train_idx.clone();
    let mut step = 0;
    let mut step_penalties = Vec::with_capacity(total_steps);
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut rows = 0;
        for batch in batches(&order, cfg.batch_size) {
            let x = features.select_rows(batch);
            let y = Tensor::column(batch.iter().map(|&i| target[i]).collect())?;
            let mut tape = Tape::new();
            let (loss_value, pen_value, root) = (|| -> Result<(f64, f64, NodeId)> {
                let pass = model.forward(&mut tape, &x)?;
                let yt = tape.constant(y);
                let l = loss(&mut tape, cfg.loss, pass.prediction, yt)?;
                let lv = tape.value(l).item()?;
                match regularizers::penalty(&mut tape, &cfg.reg, &pass.contributions, step, total_steps)? {
                    Some(pen) => {
                        let pv = tape.value(pen).item()?;
                        Ok((lv, pv, tape.add(l, pen)?))
                    }
                    None => Ok((lv, 0.0, l)),
                }
            })()
            .map_err(|e| diverged(step, e))?;
            if !loss_value.is_finite() {
                return Err(Error::Divergence {
                    step,
                    detail: format!("loss is {loss_value}"),
                });
            }
            let grads = tape.backward(root).map_err(|e| diverged(step, e))?.into_vec();
            let lr = cosine_lr(cfg.lr, step, total_steps);
            adam.step(model.params_mut(), &grads, lr, cfg.weight_decay)
                .map_err(|e| diverged(step, e))?;
            step_penalties.push(pen_value);
            loss_sum += loss_value * batch.len() as f64;
            rows += batch.len();
            step += 1;
        }
        let (val_loss, _, val_rperp) = evaluate_split(&model, data, val_split, cfg)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / rows as f64,
            val_loss,
            val_rperp,
            wallclock_s: started.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {epoch}: train {:.5} val {:.5} rperp {:.4}",
            record.train_loss,
            record.val_loss,
            record.val_rperp
        );
        epochs.push(record);
    }

    let (_, final_metric, final_val_rperp) = evaluate_split(&model, data, val_split, cfg)?;
    let report = TrainReport {
        epochs,
        metric_name: match cfg.loss {
            LossKind::Mse => "rmse".into(),
            LossKind::BceLogits => "bce".into(),
        },
        final_metric,
        final_val_rperp,
        val_split,
        total_steps,
        step_penalties,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_toy1, gen_toy2};

    #[test]
    fn loss_reference_values() {
        assert_eq!(loss_value(LossKind::Mse, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss_value(LossKind::Mse, &[1.0, 2.0], &[3.0, 2.0]).unwrap(), 2.0);
        let b = loss_value(LossKind::BceLogits, &[0.0], &[1.0]).unwrap();
        assert!((b - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            loss_value(LossKind::BceLogits, &[0.0], &[0.5]),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn cosine_schedule() {
        assert_eq!(cosine_lr(0.1, 0, 100), 0.1);
        assert!(cosine_lr(0.1, 100, 100).abs() < 1e-18);
        assert!((cosine_lr(0.1, 50, 100) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn adamw_zero_gradient_cases() {
        let mut params = vec![Tensor::new(1, 2, vec![1.0, -2.0]).unwrap()];
        let zeros = vec![Tensor::zeros(1, 2)];
        let mut opt = AdamW::new(&params, 0.9, 0.999, 1e-8);
        opt.step(&mut params, &zeros, 0.1, 0.0).unwrap();
        assert_eq!(params[0].data(), [1.0, -2.0]);
        assert!(opt.first_moments()[0].iter().all(|&m| m == 0.0));
        assert!(opt.second_moments()[0].iter().all(|&v| v == 0.0));

        opt.step(&mut params, &zeros, 0.01, 0.1).unwrap();
        assert_eq!(params[0].data(), [1.0 * (1.0 - 0.001), -2.0 * (1.0 - 0.001)]);
    }

    #[test]
    fn adamw_first_step_is_a_sign_step() {
        // f(x) = x^2 at x = 1: g = 2, m_hat = 2, v_hat = 4, step = lr * 2 / (2 + eps)
        let mut params = vec![Tensor::scalar(1.0).unwrap()];
        let mut opt = AdamW::new(&params, 0.9, 0.999, 1e-8);
        opt.step(&mut params, &[Tensor::scalar(2.0).unwrap()], 0.1, 0.0).unwrap();
        let x = params[0].item().unwrap();
        assert!((x - 0.9).abs() < 1e-8, "{x}");
    }

    #[test]
    fn config_validation_and_toml() {
        let cfg = TrainConfig::toy();
        cfg.validate().unwrap();
        assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert!(TrainConfig { epochs: 0, ..TrainConfig::toy() }.validate().is_err());
        assert!(TrainConfig { batch_size: 1, ..TrainConfig::toy() }.validate().is_err());
        assert!(TrainConfig::preset("nope").is_err());
        let text = cfg.to_toml();
        assert!(text.contains("lambda = 0") && text.contains("warmup_fraction = 0.05"), "{text}");
    }

    #[test]
    fn batching_keeps_short_batches_of_two() {
        assert_eq!(steps_per_epoch(10, 4), 3);
        assert_eq!(steps_per_epoch(9, 4), 2);
        let order: Vec<usize> = (0..9).collect();
        assert_eq!(batches(&order, 4).count(), 2);
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            hidden: vec![8, 8],
            epochs: 3,
            batch_size: 32,
            lr: 5e-3,
            seed: 4,
            ..TrainConfig::toy()
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let cfg = TrainConfig {
            reg: RegConfig::concurvity(0.1),
            ..small_cfg()
        };
        let data = cfg.prepare(&gen_toy2(400, 1).unwrap()).unwrap();
        let (m1, r1) = train(&data, &cfg).unwrap();
        let (m2, r2) = train(&data, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1.without_timing(), r2.without_timing());
        assert_eq!(r1.epochs.len(), 3);
    }

    #[test]
    fn warmup_steps_record_zero_penalty() {
        let cfg = TrainConfig {
            reg: RegConfig::concurvity(0.5),
            ..small_cfg()
        };
        let data = cfg.prepare(&gen_toy2(400, 1).unwrap()).unwrap();
        let (_, report) = train(&data, &cfg).unwrap();
        let total = report.total_steps;
        assert_eq!(report.step_penalties.len(), total);
        let warm = (0.05 * total as f64).ceil() as usize;
        assert!(report.step_penalties[..warm].iter().all(|&p| p == 0.0));
        assert!(report.step_penalties[warm..].iter().all(|&p| p > 0.0));
    }

    #[test]
    fn zero_lr_leaves_parameters_unchanged() {
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 1,
            weight_decay: 0.1,
            ..small_cfg()
        };
        let data = cfg.prepare(&gen_toy1(200, 0.0, 1).unwrap()).unwrap();
        let init = AdditiveModel::init(cfg.model_spec(&data).unwrap(), cfg.seed).unwrap();
        let (trained, _) = fit(init.clone(), &data, &cfg).unwrap();
        assert_eq!(trained, init);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let cfg = TrainConfig { lr: 1e300, ..small_cfg() };
        let data = cfg.prepare(&gen_toy1(200, 0.0, 1).unwrap()).unwrap();
        match train(&data, &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step <= 2, "step {step}"),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn report_csv_schema() {
        let cfg = small_cfg();
        let data = cfg.prepare(&gen_toy2(200, 1).unwrap()).unwrap();
        let (_, report) = train(&data, &cfg).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        report.write_csv(f.path()).unwrap();
        let text = std::fs::read_to_string(f.path()).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_loss,val_rperp\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn loss_task_mismatch_is_a_config_error() {
        let cfg = TrainConfig {
            loss: LossKind::BceLogits,
            ..small_cfg()
        };
        assert!(matches!(cfg.model_spec(&gen_toy2(100, 1).unwrap()), Err(Error::Config(_))));
    }
}
