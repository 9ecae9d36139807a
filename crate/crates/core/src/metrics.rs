//! Post-hoc metrics: fit quality, feature importance, correlation matrices
//! and the concurvity witness test.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Split, Task};
use crate::diffcore::softplus;
use crate::error::{Error, Result};
use crate::models::AdditiveModel;
use crate::regularizers::{pearson_value, DEFAULT_EPS};

fn check_lengths(pred: &[f64], target: &[f64]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(Error::Dimension {
            op: "fit metric",
            left: (pred.len(), 1),
            right: (target.len(), 1),
        });
    }
    if pred.is_empty() {
        return Err(Error::Contract("fit metric on an empty split".into()));
    }
    Ok(())
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / pred.len() as f64)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> Result<f64> {
    mse(pred, target).map(f64::sqrt)
}

/// `1 - SS_res / SS_tot`. A constant target leaves R² undefined.
pub fn r2(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(pred, target)?;
    let mean = target.iter().sum::<f64>() / target.len() as f64;
    let ss_tot: f64 = target.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Data("R² is undefined for a constant target".into()));
    }
    let ss_res: f64 = pred.iter().zip(target).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean binary cross-entropy of logits, `softplus(z) - y z`.
pub fn bce_logits(logits: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(logits, target)?;
    Ok(logits.iter().zip(target).map(|(z, y)| softplus(*z) - y * z).sum::<f64>() / logits.len() as f64)
}

/// Fraction of rows where `logit > 0` agrees with `target == 1`.
pub fn accuracy_logits(logits: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(logits, target)?;
    let hits = logits.iter().zip(target).filter(|(z, y)| (**z > 0.0) == (**y == 1.0)).count();
    Ok(hits as f64 / logits.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub rmse: Option<f64>,
    /// `None` when the target is constant.
    pub r2: Option<f64>,
    pub bce: Option<f64>,
    pub accuracy: Option<f64>,
}

/// RMSE and R² for regression; BCE and accuracy (on logits) for binary.
pub fn fit_metrics(pred: &[f64], target: &[f64], task: Task) -> Result<FitMetrics> {
    match task {
        Task::Regression => Ok(FitMetrics {
            rmse: Some(rmse(pred, target)?),
            r2: r2(pred, target).ok(),
            bce: None,
            accuracy: None,
        }),
        Task::Binary => Ok(FitMetrics {
            rmse: None,
            r2: None,
            bce: Some(bce_logits(pred, target)?),
            accuracy: Some(accuracy_logits(pred, target)?),
        }),
    }
}

/// `(1/N) sum_j |f_i(x_ij) - mean_i|` per contribution.
pub fn feature_importance(contributions: &[Vec<f64>]) -> Result<Vec<f64>> {
    contributions
        .iter()
        .map(|c| {
            if c.is_empty() {
                return Err(Error::Contract("feature importance on an empty split".into()));
            }
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            Ok(c.iter().map(|v| (v - mean).abs()).sum::<f64>() / n)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub split: Split,
    pub names: Vec<String>,
    pub importance: Vec<f64>,
}

impl ImportanceReport {
    /// Feature indices sorted by decreasing importance (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.importance.len()).collect();
        idx.sort_by(|&a, &b| self.importance[b].total_cmp(&self.importance[a]).then(a.cmp(&b)));
        idx
    }

    pub fn write_csv(&self, path: &Path, seed: u64) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        w.write_record(["feature", "seed", "split", "importance"])?;
        for (name, imp) in self.names.iter().zip(&self.importance) {
            w.write_record([name.as_str(), &seed.to_string(), self.split.as_str(), &imp.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Contribution values of every component on one split.
pub fn split_contributions(model: &AdditiveModel, data: &Dataset, split: Split) -> Result<Vec<Vec<f64>>> {
    let (x, _) = data.subset(split);
    if x.rows() == 0 {
        return Err(Error::Contract(format!("split {} is empty", split.as_str())));
    }
    Ok(model.evaluate(&x)?.contributions)
}

pub fn importance_on(model: &AdditiveModel, data: &Dataset, split: Split) -> Result<ImportanceReport> {
    let contributions = split_contributions(model, data, split)?;
    Ok(ImportanceReport {
        split,
        names: model.spec().components.iter().map(|c| c.name.clone()).collect(),
        importance: feature_importance(&contributions)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrKind {
    RawFeatures,
    TransformedFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrMatrix {
    pub kind: CorrKind,
    pub names: Vec<String>,
    /// Row-major `p x p`.
    pub values: Vec<f64>,
    /// Columns that are constant; their correlations are reported as 0.
    pub constant: Vec<bool>,
}

impl CorrMatrix {
    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.size() + j]
    }

    /// Square CSV with a header row and a leading name column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, name) in self.names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend((0..self.size()).map(|j| self.get(i, j).to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Pairwise guarded Pearson correlations of the columns.
pub fn corr_matrix(columns: &[Vec<f64>], names: &[String], kind: CorrKind) -> Result<CorrMatrix> {
    let p = columns.len();
    if names.len() != p {
        return Err(Error::Contract(format!("{} names for {p} columns", names.len())));
    }
    let constant: Vec<bool> = columns
        .iter()
        .map(|c| c.iter().all(|v| *v == c[0]))
        .collect();
    let mut values = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            let c = pearson_value(&columns[i], &columns[j], DEFAULT_EPS)?;
            values[i * p + j] = c;
            values[j * p + i] = c;
        }
    }
    Ok(CorrMatrix {
        kind,
        names: names.to_vec(),
        values,
        constant,
    })
}

/// Coefficients `(c_0, c_1..c_p)` with `c_0 + sum_i c_i f_i ~= 0`, or `None`.
///
/// Columns of `[1, f_1, .., f_p]` are scaled to unit norm first so the
/// singular-value ratio does not depend on contribution scale; the returned
/// vector is mapped back to the unscaled columns and normalized. An all-zero
/// contribution is itself a witness.
pub fn concurvity_witness(contributions: &[Vec<f64>], tol: f64) -> Result<Option<Vec<f64>>> {
    if contributions.is_empty() {
        return Err(Error::Contract("no contributions".into()));
    }
    let n = contributions[0].len();
    let p = contributions.len();
    if contributions.iter().any(|c| c.len() != n) {
        return Err(Error::Contract("contributions differ in length".into()));
    }
    if n <= p {
        return Err(Error::Contract(format!("need more samples than components (N={n}, p={p})")));
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p + 1);
    cols.push(vec![1.0; n]);
    cols.extend(contributions.iter().cloned());
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    if let Some(j) = norms.iter().position(|&s| s == 0.0) {
        let mut c = vec![0.0; p + 1];
        c[j] = 1.0;
        return Ok(Some(c));
    }
    let m = DMatrix::from_fn(n, p + 1, |r, c| cols[c][r] / norms[c]);
    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::NumericalDomain {
            op: "svd",
            detail: "right singular vectors unavailable".into(),
        })?;
    let sv = &svd.singular_values;
    let (imin, smin) = sv.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smin >= tol * smax {
        return Ok(None);
    }
    let mut c: Vec<f64> = (0..=p).map(|j| v_t[(imin, j)] / norms[j]).collect();
    let len = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    c.iter_mut().for_each(|v| *v /= len);
    Ok(Some(c))
}

/// Default singular-value ratio for [`concurvity_witness`].
pub const WITNESS_TOL: f64 = 1e-8;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::r_perp_value;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn importance_reference_values() {
        let imp = feature_importance(&[vec![3.0; 5], vec![-1.0, 1.0], vec![0.0, 2.0, 4.0]]).unwrap();
        assert_eq!(imp[0], 0.0);
        assert_eq!(imp[1], 1.0);
        assert!((imp[2] - 4.0 / 3.0).abs() < 1e-15);
        assert!(feature_importance(&[vec![]]).is_err());
    }

    #[test]
    fn importance_ignores_offsets() {
        let a = vec![0.3, -1.2, 2.5, 0.0];
        let b: Vec<f64> = a.iter().map(|v| v + 7.0).collect();
        let imp = feature_importance(&[a, b]).unwrap();
        assert!((imp[0] - imp[1]).abs() < 1e-12);
    }

    #[test]
    fn corr_matrix_cases() {
        let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let u = vec![1.0, -1.0, 1.0, -1.0];
        let w = vec![1.0, 1.0, -1.0, -1.0];
        let m = corr_matrix(&[u.clone(), u.clone(), w.clone()], &names, CorrKind::TransformedFeatures).unwrap();
        assert!((m.get(0, 1) - 1.0).abs() < 1e-9);
        assert!(m.get(0, 2).abs() < 1e-12 && m.get(1, 2).abs() < 1e-12);
        for i in 0..3 {
            assert!((m.get(i, i) - 1.0).abs() < 1e-9);
            for j in 0..3 {
                assert!((m.get(i, j) - m.get(j, i)).abs() < 1e-12);
            }
        }
        // mean of the upper-triangle magnitudes is the r_perp value
        let upper = (m.get(0, 1).abs() + m.get(0, 2).abs() + m.get(1, 2).abs()) / 3.0;
        let r = r_perp_value(&[u, vec![1.0, -1.0, 1.0, -1.0], w], DEFAULT_EPS).unwrap();
        assert!((upper - r).abs() < 1e-12 && (r - 1.0 / 3.0).abs() < 1e-9);

        let m = corr_matrix(&[vec![2.0; 4], vec![1.0, 2.0, 3.0, 5.0]], &names[..2], CorrKind::RawFeatures).unwrap();
        assert_eq!(m.constant, [true, false]);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn fit_metric_reference_values() {
        let y = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rmse(&y, &y).unwrap(), 0.0);
        assert_eq!(r2(&y, &y).unwrap(), 1.0);
        assert_eq!(r2(&[2.5; 4], &y).unwrap(), 0.0);
        assert!(matches!(r2(&y, &[1.0; 4]), Err(Error::Data(_))));
        assert_eq!(mse(&[1.0, 2.0], &[3.0, 2.0]).unwrap(), 2.0);
        let acc = accuracy_logits(&[-2.0, -2.0, 2.0, 2.0], &[0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(acc, 1.0);
        assert!((bce_logits(&[0.0], &[1.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        let m = fit_metrics(&y, &[1.0; 4], Task::Regression).unwrap();
        assert_eq!(m.r2, None);
        assert!(m.rmse.is_some());
    }

    #[test]
    fn witness_examples() {
        let v = vec![0.5, -1.0, 2.0, 0.1, 3.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let c = concurvity_witness(&[v.clone(), neg], WITNESS_TOL).unwrap().expect("witness");
        assert!(c[0].abs() < 1e-9);
        assert!((c[1] - c[2]).abs() < 1e-9 && c[1].abs() > 0.5);

        let c = concurvity_witness(&[v.clone(), vec![4.0; 5]], WITNESS_TOL).unwrap().expect("witness");
        // 4 * c0 column cancels against the constant column
        assert!((c[0] + 4.0 * c[2]).abs() < 1e-9 && c[1].abs() < 1e-9);

        let c = concurvity_witness(&[v.clone(), vec![0.0; 5]], WITNESS_TOL).unwrap().expect("witness");
        assert_eq!(c, vec![0.0, 0.0, 1.0]);

        let w = vec![1.0, 1.0, -1.0, -1.0, 0.0];
        assert!(concurvity_witness(&[vec![1.0, -1.0, 1.0, -1.0, 0.0], w], WITNESS_TOL).unwrap().is_none());
        assert!(concurvity_witness(&[vec![1.0, 2.0], vec![2.0, 1.0]], WITNESS_TOL).is_err());
    }

    /// Centered random columns, orthogonalized against each other.
    pub(crate) fn decorrelated_columns(rng: &mut ChaCha8Rng, p: usize, n: usize) -> Vec<Vec<f64>> {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(p);
        while cols.len() < p {
            let mut c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = c.iter().sum::<f64>() / n as f64;
            c.iter_mut().for_each(|v| *v -= mean);
            for q in &cols {
                let dot: f64 = c.iter().zip(q).map(|(a, b)| a * b).sum();
                let qq: f64 = q.iter().map(|b| b * b).sum();
                c.iter_mut().zip(q).for_each(|(a, b)| *a -= dot / qq * b);
            }
            if c.iter().map(|v| v * v).sum::<f64>() > 1e-6 {
                cols.push(c);
            }
        }
        let scale = rng.random_range(0.1..10.0);
        for c in cols.iter_mut() {
            let shift = rng.random_range(-5.0..5.0);
            c.iter_mut().for_each(|v| *v = *v * scale + shift);
        }
        cols
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn decorrelated_contributions_have_no_witness(p in 2usize..=6, n in 32usize..=256, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols = decorrelated_columns(&mut rng, p, n);
            prop_assert!(concurvity_witness(&cols, WITNESS_TOL).unwrap().is_none());
        }

        #[test]
        fn injected_dependence_has_a_witness(p in 2usize..=6, n in 32usize..=256, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cols = decorrelated_columns(&mut rng, p - 1, n);
            let a: Vec<f64> = (0..p - 1).map(|_| rng.random_range(0.5..2.0)).collect();
            let c0 = rng.random_range(-3.0..3.0);
            let dep = (0..n).map(|r| c0 + cols.iter().zip(&a).map(|(c, w)| w * c[r]).sum::<f64>()).collect();
            cols.push(dep);
            let c = concurvity_witness(&cols, WITNESS_TOL).unwrap();
            prop_assert!(c.is_some());
        }
    }
}
