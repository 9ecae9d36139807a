//! Central finite-difference gradients, used to validate the tape.
//!
//! Only forward evaluations of the objective are used here; nothing in this
//! module touches `Tape::backward`.

use super::tensor::Tensor;
use crate::error::Result;

/// Worst mismatch found by [`compare`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// (param index, entry index, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Numerical gradient of `objective` at `params` by central differences.
pub fn central_difference<F>(objective: F, params: &[Tensor], h: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    let mut work: Vec<Tensor> = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let (r, c) = params[k].shape();
        let base = params[k].data().to_vec();
        let mut grad = vec![0.0; base.len()];
        for j in 0..base.len() {
            let mut plus = base.clone();
            plus[j] += h;
            work[k] = Tensor::new(r, c, plus)?;
            let fp = objective(&work)?;
            let mut minus = base.clone();
            minus[j] -= h;
            work[k] = Tensor::new(r, c, minus)?;
            let fm = objective(&work)?;
            grad[j] = (fp - fm) / (2.0 * h);
        }
        work[k] = params[k].clone();
        out.push(Tensor::new(r, c, grad)?);
    }
    Ok(out)
}

/// An entry passes when `|a - n| <= max(rel * max(|a|, |n|), abs_floor)`.
pub fn compare(analytic: &[Tensor], numeric: &[Tensor], rel: f64, abs_floor: f64) -> GradCheckReport {
    let mut report = GradCheckReport {
        checked: 0,
        failures: 0,
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst: None,
    };
    let mut worst_ratio = -1.0;
    for (k, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        for (j, (&ga, &gn)) in a.data().iter().zip(n.data()).enumerate() {
            report.checked += 1;
            let err = (ga - gn).abs();
            let scale = ga.abs().max(gn.abs());
            let allowed = (rel * scale).max(abs_floor);
            if err > allowed {
                report.failures += 1;
            }
            report.max_abs_err = report.max_abs_err.max(err);
            if scale > 0.0 {
                report.max_rel_err = report.max_rel_err.max(err / scale);
            }
            let ratio = err / allowed;
            if ratio > worst_ratio {
                worst_ratio = ratio;
                report.worst = Some((k, j, ga, gn));
            }
        }
    }
    report
}
