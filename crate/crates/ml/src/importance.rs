//! Permutation and impurity feature importance, normalised to sum 1.

use log::warn;
use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::model::{Pipeline, Regressor};
use crate::tree::RegressionTree;

pub const DEFAULT_REPEATS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMethod {
    Impurity,
    Permutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    pub importances: Vec<f64>,
}

impl ImportanceReport {
    /// Feature indices from most to least important; ties keep index order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.importances.len()).collect();
        idx.sort_by(|&a, &b| self.importances[b].total_cmp(&self.importances[a]));
        idx
    }
}

pub fn mse(y: ArrayView1<f64>, yhat: ArrayView1<f64>) -> f64 {
    y.iter().zip(&yhat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

fn normalise(mut v: Vec<f64>, what: &str) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if !(total > 0.0) {
        warn!("{what}: every importance is zero, reporting uniform weights");
        let p = v.len() as f64;
        return vec![1.0 / p; v.len()];
    }
    for x in &mut v {
        *x /= total;
    }
    v
}

/// Mean increase of `metric` (lower is better) when one column is
/// shuffled, over `n_repeats` shuffles; floored at 0. Shuffle `r` of
/// feature `j` uses stream `j * n_repeats + r` of `seed`.
pub fn permutation_importance<M>(
    model: &Pipeline,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    metric: M,
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceReport>
where
    M: Fn(ArrayView1<f64>, ArrayView1<f64>) -> f64 + Sync,
{
    if n_repeats == 0 {
        return Err(MlError::Config("n_repeats must be at least 1".into()));
    }
    if x.nrows() != y.len() || y.is_empty() {
        return Err(MlError::Data(format!("{} feature rows but {} targets", x.nrows(), y.len())));
    }
    let baseline = metric(y, model.predict(x)?.view());
    let p = x.ncols();
    if !(baseline > 0.0) {
        warn!("baseline error is {baseline}, reporting uniform importances");
        return Ok(ImportanceReport {
            method: ImportanceMethod::Permutation,
            importances: vec![1.0 / p as f64; p],
        });
    }
    let jobs: Vec<(usize, usize)> = (0..p).flat_map(|j| (0..n_repeats).map(move |r| (j, r))).collect();
    let deltas = jobs
        .par_iter()
        .map(|&(j, r)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((j * n_repeats + r) as u64);
            let mut col = x.column(j).to_vec();
            col.shuffle(&mut rng);
            let mut xp = x.to_owned();
            xp.column_mut(j).assign(&ndarray::ArrayView1::from(&col));
            Ok(metric(y, model.predict(xp.view())?.view()) - baseline)
        })
        .collect::<Result<Vec<f64>>>()?;
    let raw = deltas
        .chunks(n_repeats)
        .map(|d| (d.iter().sum::<f64>() / n_repeats as f64).max(0.0))
        .collect();
    Ok(ImportanceReport {
        method: ImportanceMethod::Permutation,
        importances: normalise(raw, "permutation importance"),
    })
}

/// Squared-error reduction per feature, normalised within each tree,
/// averaged over trees, normalised again.
pub fn impurity_importance(model: &Pipeline) -> Result<ImportanceReport> {
    let trees: &[RegressionTree] = match &model.model {
        Regressor::Tree(t) => std::slice::from_ref(t),
        Regressor::RandomForest(f) => &f.trees,
        Regressor::Gbrt(g) => &g.trees,
        _ => {
            return Err(MlError::Unsupported(format!(
                "impurity importance needs a tree-based model, got {}",
                model.kind()
            )))
        }
    };
    let p = model.n_features;
    let mut sum = vec![0.0; p];
    for tree in trees {
        let gains = tree.feature_gains();
        let total: f64 = gains.iter().sum();
        if total > 0.0 {
            for (s, g) in sum.iter_mut().zip(gains) {
                *s += g / total;
            }
        }
    }
    let m = trees.len().max(1) as f64;
    let avg = sum.into_iter().map(|s| s / m).collect();
    Ok(ImportanceReport {
        method: ImportanceMethod::Impurity,
        importances: normalise(avg, "impurity importance"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::tree::TreeParams;
    use ndarray::{Array1, Array2};

    #[test]
    fn single_feature_gets_everything() {
        let x = Array2::from_shape_fn((30, 1), |(i, _)| i as f64);
        let y: Array1<f64> = x.column(0).mapv(|v| v * 2.0);
        let m = Pipeline::fit(&ModelSpec::Ridge { alpha: 0.0, degree: 1 }, x.view(), y.view(), 0).unwrap();
        let r = permutation_importance(&m, x.view(), y.view(), mse, 3, 0).unwrap();
        assert_eq!(r.importances, vec![1.0]);
    }

    #[test]
    fn unused_feature_scores_zero() {
        // Feature 1 is noise; a depth-1 tree only splits on feature 0.
        let x = Array2::from_shape_fn((40, 2), |(i, j)| if j == 0 { (i / 20) as f64 } else { ((i * 13) % 7) as f64 });
        let y: Array1<f64> = (0..40).map(|i| x[[i, 0]] + 0.01 * ((i * 5) % 3) as f64).collect();
        let spec = ModelSpec::Tree(TreeParams {
            max_depth: Some(1),
            ..TreeParams::default()
        });
        let m = Pipeline::fit(&spec, x.view(), y.view(), 0).unwrap();
        assert_eq!(impurity_importance(&m).unwrap().importances, vec![1.0, 0.0]);
        assert_eq!(permutation_importance(&m, x.view(), y.view(), mse, 5, 1).unwrap().importances, vec![1.0, 0.0]);
    }

    #[test]
    fn non_tree_model_has_no_impurity_importance() {
        let x = Array2::from_shape_fn((10, 1), |(i, _)| i as f64);
        let y = x.column(0).to_owned();
        let m = Pipeline::fit(&ModelSpec::Knn { k: 1 }, x.view(), y.view(), 0).unwrap();
        assert!(matches!(impurity_importance(&m), Err(MlError::Unsupported(_))));
    }

    #[test]
    fn perfect_model_gives_uniform_weights() {
        let x = Array2::from_shape_fn((10, 2), |(i, j)| (i + j) as f64);
        let y = x.column(0).to_owned();
        let m = Pipeline::fit(&ModelSpec::Knn { k: 1 }, x.view(), y.view(), 0).unwrap();
        // Baseline error on the training rows is zero.
        let r = permutation_importance(&m, x.view(), y.view(), mse, 2, 0).unwrap();
        assert_eq!(r.importances, vec![0.5, 0.5]);
    }
}
