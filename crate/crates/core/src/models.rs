//! Additive model container and its shape components.
//!
//! A model is `beta + sum_i f_i(x_{c(i)})` where every component `f_i` reads
//! exactly one input column. Tabular models use one MLP per feature; the
//! reduced seasonal model uses two Fourier components over the same time
//! column. Classification models return logits.

use std::f64::consts::PI;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};

pub const DAILY_PERIOD_HOURS: f64 = 24.0;
pub const WEEKLY_PERIOD_HOURS: f64 = 168.0;

const INIT_GAIN_SQ: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Gelu,
    Elu,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            "elu" => Ok(Activation::Elu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ShapeSpec {
    Mlp {
        hidden: Vec<usize>,
        activation: Activation,
    },
    Fourier {
        period: f64,
        n_terms: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    /// Column of the input batch this component reads.
    pub input: usize,
    pub shape: ShapeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub components: Vec<ComponentSpec>,
    pub link: Link,
    /// Whether the global offset is a trainable parameter. Without it the
    /// offset is fixed at zero.
    #[serde(default = "default_true")]
    pub intercept: bool,
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    /// One MLP per feature column.
    pub fn nam(feature_names: &[String], hidden: &[usize], activation: Activation, link: Link) -> Self {
        let components = feature_names
            .iter()
            .enumerate()
            .map(|(i, name)| ComponentSpec {
                name: name.clone(),
                input: i,
                shape: ShapeSpec::Mlp {
                    hidden: hidden.to_vec(),
                    activation,
                },
            })
            .collect();
        Self {
            components,
            link,
            intercept: true,
        }
    }

    /// Daily plus weekly Fourier seasonality over a single hourly time
    /// column, with no offset and no trend.
    pub fn reduced_prophet(daily_terms: usize, weekly_terms: usize) -> Self {
        let fourier = |name: &str, period, n_terms| ComponentSpec {
            name: name.into(),
            input: 0,
            shape: ShapeSpec::Fourier { period, n_terms },
        };
        Self {
            components: vec![
                fourier("daily", DAILY_PERIOD_HOURS, daily_terms),
                fourier("weekly", WEEKLY_PERIOD_HOURS, weekly_terms),
            ],
            link: Link::Identity,
            intercept: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Config("model has no components".into()));
        }
        for c in &self.components {
            match &c.shape {
                ShapeSpec::Mlp { hidden, .. } => {
                    if hidden.contains(&0) {
                        return Err(Error::Config(format!(
                            "component {:?}: hidden widths must be positive",
                            c.name
                        )));
                    }
                }
                ShapeSpec::Fourier { period, n_terms } => {
                    if !(period.is_finite() && *period > 0.0) {
                        return Err(Error::Config(format!(
                            "component {:?}: period must be positive",
                            c.name
                        )));
                    }
                    if *n_terms == 0 {
                        return Err(Error::Config(format!(
                            "component {:?}: needs at least one Fourier term",
                            c.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of input columns a batch must have.
    pub fn input_width(&self) -> usize {
        self.components.iter().map(|c| c.input + 1).max().unwrap_or(0)
    }

    fn param_shapes(&self) -> (Vec<(usize, usize)>, Vec<Range<usize>>) {
        let mut shapes = Vec::new();
        if self.intercept {
            shapes.push((1, 1));
        }
        let mut layout = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let start = shapes.len();
            match &c.shape {
                ShapeSpec::Mlp { hidden, .. } => {
                    let mut fan_in = 1;
                    for &w in hidden.iter().chain(std::iter::once(&1)) {
                        shapes.push((fan_in, w));
                        shapes.push((1, w));
                        fan_in = w;
                    }
                }
                ShapeSpec::Fourier { n_terms, .. } => shapes.push((2 * n_terms, 1)),
            }
            layout.push(start..shapes.len());
        }
        (shapes, layout)
    }
}

/// Borrowed view of one MLP shape function.
#[derive(Debug)]
pub struct MlpShape<'a> {
    /// (weight, bias) per layer; weights are `fan_in x fan_out`.
    pub layers: Vec<(&'a Tensor, &'a Tensor)>,
    pub activation: Activation,
}

/// Borrowed view of one Fourier seasonality.
#[derive(Debug)]
pub struct FourierShape<'a> {
    pub period: f64,
    pub n_terms: usize,
    coeffs: &'a Tensor,
}

impl FourierShape<'_> {
    /// Cosine coefficients `a_1..a_k`.
    pub fn a(&self) -> &[f64] {
        &self.coeffs.data()[..self.n_terms]
    }

    /// Sine coefficients `b_1..b_k`.
    pub fn b(&self) -> &[f64] {
        &self.coeffs.data()[self.n_terms..]
    }
}

#[derive(Debug)]
pub enum ShapeComponent<'a> {
    Mlp(MlpShape<'a>),
    Fourier(FourierShape<'a>),
}

/// Tape handles produced by [`AdditiveModel::forward`].
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Parameter nodes, aligned with [`AdditiveModel::params`].
    pub params: Vec<NodeId>,
    /// `N x 1`; logits for classification.
    pub prediction: NodeId,
    /// One `N x 1` node per component.
    pub contributions: Vec<NodeId>,
}

/// Plain-value model output.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub prediction: Vec<f64>,
    pub contributions: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveModel {
    spec: ModelSpec,
    params: Vec<Tensor>,
    layout: Vec<Range<usize>>,
}

impl AdditiveModel {
    /// Kaiming-uniform weights with gain 1/sqrt(3) (bound `1 / sqrt(fan_in)`), zero biases, zero
    /// offset and Fourier coefficients from `U(-0.01, 0.01)`, all drawn from a
    /// ChaCha stream seeded with `seed`.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let (shapes, layout) = spec.param_shapes();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(shapes.len());
        if spec.intercept {
            params.push(Tensor::zeros(1, 1));
        }
        for (c, range) in spec.components.iter().zip(&layout) {
            for k in range.clone() {
                let (r, cols) = shapes[k];
                let t = match &c.shape {
                    ShapeSpec::Mlp { .. } if r == 1 && (k - range.start) % 2 == 1 => {
                        Tensor::zeros(r, cols)
                    }
                    ShapeSpec::Mlp { .. } => {
                        let bound = (INIT_GAIN_SQ * 3.0 / r as f64).sqrt();
                        let data = (0..r * cols).map(|_| rng.random_range(-bound..bound)).collect();
                        Tensor::new(r, cols, data)?
                    }
                    ShapeSpec::Fourier { .. } => {
                        let data = (0..r * cols).map(|_| rng.random_range(-0.01..0.01)).collect();
                        Tensor::new(r, cols, data)?
                    }
                };
                params.push(t);
            }
        }
        Ok(Self { spec, params, layout })
    }

    /// Rebuilds a model from explicit parameter arrays.
    pub fn from_parts(spec: ModelSpec, params: Vec<Tensor>) -> Result<Self> {
        spec.validate()?;
        let (shapes, layout) = spec.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::Config(format!(
                "spec needs {} parameter arrays, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for (k, (shape, p)) in shapes.iter().zip(&params).enumerate() {
            if *shape != p.shape() {
                return Err(Error::Config(format!(
                    "parameter {k}: expected shape {shape:?}, got {:?}",
                    p.shape()
                )));
            }
        }
        Ok(Self { spec, params, layout })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_components(&self) -> usize {
        self.spec.components.len()
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Mutable parameter arrays for the optimizer. Shapes must be preserved.
    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Indices into [`Self::params`] owned by component `i`.
    pub fn component_params(&self, i: usize) -> Range<usize> {
        self.layout[i].clone()
    }

    pub fn beta(&self) -> f64 {
        if self.spec.intercept {
            self.params[0].data()[0]
        } else {
            0.0
        }
    }

    pub fn component(&self, i: usize) -> ShapeComponent<'_> {
        let range = self.layout[i].clone();
        match &self.spec.components[i].shape {
            ShapeSpec::Mlp { activation, .. } => {
                let layers = self.params[range]
                    .chunks(2)
                    .map(|wb| (&wb[0], &wb[1]))
                    .collect();
                ShapeComponent::Mlp(MlpShape {
                    layers,
                    activation: *activation,
                })
            }
            ShapeSpec::Fourier { period, n_terms } => ShapeComponent::Fourier(FourierShape {
                period: *period,
                n_terms: *n_terms,
                coeffs: &self.params[range.start],
            }),
        }
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        let width = self.spec.input_width();
        if batch.cols() != width {
            return Err(Error::Dimension {
                op: "model forward",
                left: (batch.rows(), batch.cols()),
                right: (batch.rows(), width),
            });
        }
        Ok(())
    }

    /// Records the model on `tape`. `batch` is `N x input_width`.
    pub fn forward(&self, tape: &mut Tape, batch: &Tensor) -> Result<ForwardPass> {
        self.check_batch(batch)?;
        let n = batch.rows();
        let params: Vec<NodeId> = self.params.iter().map(|p| tape.param(p.clone())).collect();

        let mut contributions = Vec::with_capacity(self.n_components());
        for (i, c) in self.spec.components.iter().enumerate() {
            let x = batch.column_values(c.input);
            let ids = &params[self.layout[i].clone()];
            contributions.push(component_forward(tape, &c.shape, ids, x)?);
        }

        let mut total = contributions[0];
        for &c in &contributions[1..] {
            total = tape.add(total, c)?;
        }
        let prediction = if self.spec.intercept {
            let beta = tape.broadcast(params[0], n, 1)?;
            tape.add(total, beta)?
        } else {
            total
        };
        Ok(ForwardPass {
            params,
            prediction,
            contributions,
        })
    }

    pub fn evaluate(&self, batch: &Tensor) -> Result<Evaluation> {
        let mut tape = Tape::new();
        let pass = self.forward(&mut tape, batch)?;
        Ok(Evaluation {
            prediction: tape.value(pass.prediction).data().to_vec(),
            contributions: pass
                .contributions
                .iter()
                .map(|&c| tape.value(c).data().to_vec())
                .collect(),
        })
    }

    /// `f_i` evaluated at the given input values.
    pub fn evaluate_component(&self, i: usize, xs: &[f64]) -> Result<Vec<f64>> {
        if i >= self.n_components() {
            return Err(Error::Contract(format!("no component {i}")));
        }
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = self.params[self.layout[i].clone()]
            .iter()
            .map(|p| tape.param(p.clone()))
            .collect();
        let out = component_forward(&mut tape, &self.spec.components[i].shape, &ids, xs.to_vec())?;
        Ok(tape.value(out).data().to_vec())
    }

    /// Prediction of the two-seasonality time-series model at hours `t`.
    pub fn reduced_prophet(&self, t: &Tensor) -> Result<Vec<f64>> {
        let periods: Vec<Option<f64>> = self
            .spec
            .components
            .iter()
            .map(|c| match c.shape {
                ShapeSpec::Fourier { period, .. } if c.input == 0 => Some(period),
                _ => None,
            })
            .collect();
        let ok = self.spec.input_width() == 1
            && !self.spec.intercept
            && periods.len() == 2
            && periods[0] == Some(DAILY_PERIOD_HOURS)
            && periods[1] == Some(WEEKLY_PERIOD_HOURS);
        if !ok {
            return Err(Error::Config(
                "reduced seasonal model needs exactly a 24h and a 168h Fourier component on one time column and no offset"
                    .into(),
            ));
        }
        Ok(self.evaluate(t)?.prediction)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            params: self
                .params
                .iter()
                .map(|p| ParamArray {
                    rows: p.rows(),
                    cols: p.cols(),
                    data: p.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Schema(format!("not a model checkpoint: {:?}", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported checkpoint version {}",
                ck.version
            )));
        }
        let params = ck
            .params
            .into_iter()
            .map(|p| Tensor::new(p.rows, p.cols, p.data))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(ck.spec, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_checkpoint())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

pub const CHECKPOINT_FORMAT: &str = "concurve-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// On-disk model document: spec plus parameter arrays in model order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub params: Vec<ParamArray>,
}

/// `N x 2k` design matrix `[cos(2 pi j t / P) | sin(2 pi j t / P)]`.
pub fn fourier_features(t: &[f64], period: f64, n_terms: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(t.len() * 2 * n_terms);
    for &ti in t {
        let base = 2.0 * PI * ti / period;
        data.extend((1..=n_terms).map(|j| (base * j as f64).cos()));
        data.extend((1..=n_terms).map(|j| (base * j as f64).sin()));
    }
    Tensor::new(t.len(), 2 * n_terms, data)
}

fn component_forward(tape: &mut Tape, shape: &ShapeSpec, params: &[NodeId], x: Vec<f64>) -> Result<NodeId> {
    let n = x.len();
    match shape {
        ShapeSpec::Mlp { activation, .. } => {
            let mut h = tape.constant(Tensor::column(x)?);
            let n_layers = params.len() / 2;
            for (l, wb) in params.chunks(2).enumerate() {
                let z = tape.matmul(h, wb[0])?;
                let width = tape.value(wb[1]).cols();
                let b = tape.broadcast(wb[1], n, width)?;
                h = tape.add(z, b)?;
                if l + 1 < n_layers {
                    h = match activation {
                        Activation::Relu => tape.relu(h)?,
                        Activation::Gelu => tape.gelu(h)?,
                        Activation::Elu => tape.elu(h)?,
                    };
                }
            }
            Ok(h)
        }
        ShapeSpec::Fourier { period, n_terms } => {
            let phi = tape.constant(fourier_features(&x, *period, *n_terms)?);
            tape.matmul(phi, params[0])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (1..=p).map(|i| format!("x{i}")).collect()
    }

    fn zeroed(model: &AdditiveModel, beta: f64) -> AdditiveModel {
        let mut params: Vec<Tensor> = model
            .params()
            .iter()
            .map(|p| Tensor::zeros(p.rows(), p.cols()))
            .collect();
        params[0] = Tensor::scalar(beta).unwrap();
        AdditiveModel::from_parts(model.spec().clone(), params).unwrap()
    }

    #[test]
    fn zero_network_predicts_offset() {
        let spec = ModelSpec::nam(&names(3), &[4, 4], Activation::Gelu, Link::Identity);
        let model = zeroed(&AdditiveModel::init(spec, 1).unwrap(), 0.7);
        let batch = Tensor::new(5, 3, (0..15).map(|v| v as f64 * 0.3).collect()).unwrap();
        let eval = model.evaluate(&batch).unwrap();
        assert!(eval.prediction.iter().all(|&p| p == 0.7));
        assert!(eval.contributions.iter().flatten().all(|&c| c == 0.0));
    }

    #[test]
    fn fourier_cosine_at_zero() {
        let spec = ModelSpec::reduced_prophet(1, 1);
        let model = AdditiveModel::from_parts(
            spec,
            vec![Tensor::column(vec![1.0, 0.0]).unwrap(), Tensor::zeros(2, 1)],
        )
        .unwrap();
        let eval = model.evaluate(&Tensor::column(vec![0.0]).unwrap()).unwrap();
        assert_eq!(eval.contributions[0], vec![1.0]);
    }

    #[test]
    fn tiny_relu_network_hand_evaluation() {
        // f(x) = 2 * relu(1 * x + 0) + 0
        let spec = ModelSpec {
            components: vec![ComponentSpec {
                name: "x".into(),
                input: 0,
                shape: ShapeSpec::Mlp {
                    hidden: vec![1],
                    activation: Activation::Relu,
                },
            }],
            link: Link::Identity,
            intercept: false,
        };
        let params = vec![
            Tensor::scalar(1.0).unwrap(),
            Tensor::scalar(0.0).unwrap(),
            Tensor::scalar(2.0).unwrap(),
            Tensor::scalar(0.0).unwrap(),
        ];
        let model = AdditiveModel::from_parts(spec, params).unwrap();
        assert_eq!(model.evaluate_component(0, &[3.0]).unwrap(), vec![6.0]);
        assert_eq!(model.evaluate_component(0, &[-3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn feature_count_mismatch_is_a_dimension_error() {
        let spec = ModelSpec::nam(&names(2), &[3], Activation::Relu, Link::Identity);
        let model = AdditiveModel::init(spec, 0).unwrap();
        let batch = Tensor::zeros(4, 3);
        assert!(matches!(model.evaluate(&batch), Err(Error::Dimension { .. })));
    }

    #[test]
    fn init_is_seed_deterministic() {
        let spec = ModelSpec::nam(&names(2), &[8, 8], Activation::Gelu, Link::Identity);
        let a = AdditiveModel::init(spec.clone(), 42).unwrap();
        let b = AdditiveModel::init(spec.clone(), 42).unwrap();
        let c = AdditiveModel::init(spec, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn init_biases_and_offset_are_zero() {
        let spec = ModelSpec::nam(&names(2), &[5, 6], Activation::Gelu, Link::Identity);
        let m = AdditiveModel::init(spec, 3).unwrap();
        assert_eq!(m.beta(), 0.0);
        for i in 0..2 {
            if let ShapeComponent::Mlp(mlp) = m.component(i) {
                assert_eq!(mlp.layers.len(), 3);
                assert_eq!(mlp.layers[0].0.shape(), (1, 5));
                assert_eq!(mlp.layers[2].0.shape(), (6, 1));
                assert!(mlp.layers.iter().all(|(_, b)| b.data().iter().all(|&v| v == 0.0)));
            } else {
                panic!("expected an MLP");
            }
        }
    }

    #[test]
    fn fan_in_scaling_shrinks_wide_layers() {
        // second-layer weights have fan-in equal to the first hidden width
        let max_abs = |width: usize| {
            (0..100)
                .map(|seed| {
                    let spec = ModelSpec::nam(&names(1), &[width, 4], Activation::Relu, Link::Identity);
                    let m = AdditiveModel::init(spec, seed).unwrap();
                    let w = &m.params()[m.component_params(0).start + 2];
                    assert_eq!(w.rows(), width);
                    w.data().iter().fold(0.0f64, |a, &b| a.max(b.abs()))
                })
                .fold(0.0f64, f64::max)
        };
        assert!(max_abs(128) < max_abs(2));
    }

    #[test]
    fn fourier_coefficients_are_small() {
        let m = AdditiveModel::init(ModelSpec::reduced_prophet(10, 10), 5).unwrap();
        for p in m.params() {
            assert!(p.data().iter().all(|v| v.abs() < 0.01));
        }
        assert_eq!(m.params().len(), 2);
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        let spec = ModelSpec::nam(&names(1), &[0], Activation::Relu, Link::Identity);
        assert!(matches!(AdditiveModel::init(spec, 0), Err(Error::Config(_))));
        assert!(matches!(
            AdditiveModel::init(ModelSpec::reduced_prophet(0, 3), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reduced_prophet_analytic_cases() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.37).collect();
        let tt = Tensor::column(t.clone()).unwrap();
        let spec = ModelSpec::reduced_prophet(2, 3);
        let zero = AdditiveModel::from_parts(spec.clone(), vec![Tensor::zeros(4, 1), Tensor::zeros(6, 1)]).unwrap();
        assert!(zero.reduced_prophet(&tt).unwrap().iter().all(|&v| v == 0.0));

        let daily = AdditiveModel::from_parts(
            spec,
            vec![Tensor::column(vec![1.0, 0.0, 0.0, 0.0]).unwrap(), Tensor::zeros(6, 1)],
        )
        .unwrap();
        for (p, ti) in daily.reduced_prophet(&tt).unwrap().iter().zip(&t) {
            assert!((p - (2.0 * PI * ti / 24.0).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_prophet_rejects_other_models() {
        let spec = ModelSpec::nam(&names(1), &[3], Activation::Relu, Link::Identity);
        let m = AdditiveModel::init(spec, 0).unwrap();
        assert!(matches!(
            m.reduced_prophet(&Tensor::zeros(2, 1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn weekly_periodicity_of_reduced_prophet() {
        let m = AdditiveModel::init(ModelSpec::reduced_prophet(6, 12), 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..2000.0)).collect();
        let shifted: Vec<f64> = t.iter().map(|v| v + 168.0).collect();
        let a = m.reduced_prophet(&Tensor::column(t).unwrap()).unwrap();
        let b = m.reduced_prophet(&Tensor::column(shifted).unwrap()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn checkpoint_round_trips_exactly() {
        let spec = ModelSpec::nam(&names(2), &[7, 3], Activation::Elu, Link::Logit);
        let m = AdditiveModel::init(spec, 17).unwrap();
        let json = serde_json::to_string(&m.to_checkpoint()).unwrap();
        let back = AdditiveModel::from_checkpoint(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(m, back);

        let mut bad = m.to_checkpoint();
        bad.version = 99;
        assert!(matches!(AdditiveModel::from_checkpoint(bad), Err(Error::Schema(_))));
    }
}
