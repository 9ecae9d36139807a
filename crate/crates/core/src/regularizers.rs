//! Concurvity penalty and the L1-on-contributions comparison penalty.
//!
//! Both are recorded on the tape so gradients reach the shape functions.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Axis, NodeId, Tape, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-12;
pub const DEFAULT_WARMUP_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    None,
    Concurvity,
    L1Contrib,
}

impl std::str::FromStr for RegKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RegKind::None),
            "concurvity" => Ok(RegKind::Concurvity),
            "l1_contrib" | "l1" => Ok(RegKind::L1Contrib),
            other => Err(Error::Config(format!("unknown regularizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegConfig {
    pub kind: RegKind,
    pub lambda: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}

fn default_warmup() -> f64 {
    DEFAULT_WARMUP_FRACTION
}

impl Default for RegConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl RegConfig {
    pub fn none() -> Self {
        Self {
            kind: RegKind::None,
            lambda: 0.0,
            eps: DEFAULT_EPS,
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
        }
    }

    pub fn concurvity(lambda: f64) -> Self {
        Self {
            kind: RegKind::Concurvity,
            lambda,
            ..Self::none()
        }
    }

    pub fn l1_contrib(lambda: f64) -> Self {
        Self {
            kind: RegKind::L1Contrib,
            lambda,
            ..Self::none()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!(
                "warmup_fraction must lie in [0, 1], got {}",
                self.warmup_fraction
            )));
        }
        Ok(())
    }

    /// Whether the penalty contributes at optimizer step `step`.
    pub fn active(&self, step: usize, total_steps: usize) -> bool {
        self.kind != RegKind::None
            && self.lambda > 0.0
            && step as f64 >= self.warmup_fraction * total_steps as f64
    }
}

fn check_column(tape: &Tape, id: NodeId, op: &'static str) -> Result<usize> {
    let (r, c) = tape.value(id).shape();
    if c != 1 {
        return Err(Error::Dimension {
            op,
            left: (r, c),
            right: (r, 1),
        });
    }
    Ok(r)
}

/// Pearson correlation of two `N x 1` nodes with `eps` added to the norm
/// product.
pub fn pearson_corr(tape: &mut Tape, v: NodeId, w: NodeId, eps: f64) -> Result<NodeId> {
    let n = check_column(tape, v, "pearson_corr")?;
    let m = check_column(tape, w, "pearson_corr")?;
    if n != m {
        return Err(Error::Dimension {
            op: "pearson_corr",
            left: (n, 1),
            right: (m, 1),
        });
    }
    if n < 2 {
        return Err(Error::Contract(format!("correlation needs at least 2 samples, got {n}")));
    }
    let vc = center_columns(tape, v)?;
    let wc = center_columns(tape, w)?;
    let prod = tape.mul(vc, wc)?;
    let num = tape.sum(prod, Axis::All)?;
    let vn = column_norms(tape, vc)?;
    let wn = column_norms(tape, wc)?;
    let den = tape.mul(vn, wn)?;
    let den = tape.shift(den, eps)?;
    tape.div(num, den)
}

fn center_columns(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
    let (n, p) = tape.value(x).shape();
    let mean = tape.mean(x, Axis::Rows)?;
    let mean = tape.broadcast(mean, n, p)?;
    tape.sub(x, mean)
}

fn column_norms(tape: &mut Tape, centered: NodeId) -> Result<NodeId> {
    let sq = tape.square(centered)?;
    let ss = tape.sum(sq, Axis::Rows)?;
    tape.sqrt(ss)
}

/// Result of [`r_perp`].
#[derive(Debug, Clone, Copy)]
pub struct RPerp {
    /// `1 x 1` node.
    pub value: NodeId,
    /// Set when fewer than two components were given; the value is then an
    /// exact zero constant.
    pub vacuous: bool,
}

fn check_contributions(tape: &Tape, contributions: &[NodeId], op: &'static str) -> Result<usize> {
    let n = check_column(tape, contributions[0], op)?;
    for &c in &contributions[1..] {
        let m = check_column(tape, c, op)?;
        if m != n {
            return Err(Error::Dimension {
                op,
                left: (n, 1),
                right: (m, 1),
            });
        }
    }
    Ok(n)
}

/// Mean absolute pairwise correlation of the contributions.
///
/// All pairs are computed at once: the contributions are stacked into an
/// `N x p` matrix, centered, and the Gram matrix of the centered columns is
/// divided elementwise by the outer product of their norms (plus `eps`).
pub fn r_perp(tape: &mut Tape, contributions: &[NodeId], eps: f64) -> Result<RPerp> {
    let p = contributions.len();
    if p < 2 {
        log::warn!("concurvity penalty with {p} component(s) is vacuous");
        return Ok(RPerp {
            value: tape.constant(Tensor::zeros(1, 1)),
            vacuous: true,
        });
    }
    let n = check_contributions(tape, contributions, "r_perp")?;
    if n < 2 {
        return Err(Error::Contract(format!("correlation needs at least 2 samples, got {n}")));
    }
    let f = tape.hcat(contributions)?;
    let fc = center_columns(tape, f)?;
    let norms = column_norms(tape, fc)?;
    let fct = tape.transpose(fc)?;
    let gram = tape.matmul(fct, fc)?;
    let norms_t = tape.transpose(norms)?;
    let outer = tape.matmul(norms_t, norms)?;
    let denom = tape.shift(outer, eps)?;
    let corr = tape.div(gram, denom)?;
    let abs = tape.abs(corr)?;
    let mask_data = (0..p * p).map(|k| if k / p == k % p { 0.0 } else { 1.0 }).collect();
    let mask = tape.constant(Tensor::new(p, p, mask_data)?);
    let off = tape.mul(abs, mask)?;
    let total = tape.sum(off, Axis::All)?;
    let value = tape.scale(total, 1.0 / (p * (p - 1)) as f64)?;
    Ok(RPerp { value, vacuous: false })
}

/// Mean over samples of `sum_i |f_i|`.
pub fn l1_contrib(tape: &mut Tape, contributions: &[NodeId]) -> Result<NodeId> {
    if contributions.is_empty() {
        return Ok(tape.constant(Tensor::zeros(1, 1)));
    }
    check_contributions(tape, contributions, "l1_contrib")?;
    let f = tape.hcat(contributions)?;
    let a = tape.abs(f)?;
    let per_sample = tape.sum(a, Axis::Cols)?;
    tape.mean(per_sample, Axis::All)
}

/// Scaled penalty for optimizer step `step`, or `None` while the penalty is
/// gated off (warm-up, `kind = none`, or `lambda = 0`).
pub fn penalty(
    tape: &mut Tape,
    cfg: &RegConfig,
    contributions: &[NodeId],
    step: usize,
    total_steps: usize,
) -> Result<Option<NodeId>> {
    if !cfg.active(step, total_steps) {
        return Ok(None);
    }
    let raw = match cfg.kind {
        RegKind::None => return Ok(None),
        RegKind::Concurvity => r_perp(tape, contributions, cfg.eps)?.value,
        RegKind::L1Contrib => l1_contrib(tape, contributions)?,
    };
    tape.scale(raw, cfg.lambda).map(Some)
}

fn columns_on_tape(tape: &mut Tape, columns: &[Vec<f64>]) -> Result<Vec<NodeId>> {
    columns
        .iter()
        .map(|c| Ok(tape.constant(Tensor::column(c.clone())?)))
        .collect()
}

/// [`r_perp`] on plain vectors.
pub fn r_perp_value(columns: &[Vec<f64>], eps: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let ids = columns_on_tape(&mut tape, columns)?;
    let r = r_perp(&mut tape, &ids, eps)?;
    tape.value(r.value).item()
}

/// [`pearson_corr`] on plain vectors.
pub fn pearson_value(v: &[f64], w: &[f64], eps: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let ids = columns_on_tape(&mut tape, &[v.to_vec(), w.to_vec()])?;
    let c = pearson_corr(&mut tape, ids[0], ids[1], eps)?;
    tape.value(c).item()
}

/// [`l1_contrib`] on plain vectors.
pub fn l1_contrib_value(columns: &[Vec<f64>]) -> Result<f64> {
    let mut tape = Tape::new();
    let ids = columns_on_tape(&mut tape, columns)?;
    let l = l1_contrib(&mut tape, &ids)?;
    tape.value(l).item()
}
