use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::preprocess::{check_finite, check_width, check_xy};
use crate::tree::{Columns, RegressionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbrtParams {
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub tree: TreeParams,
}

/// Least-squares gradient boosting: `init + lr * sum(tree_m(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbrt {
    pub n_features: usize,
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Training MSE before the first stage and after each stage.
    pub loss_trace: Vec<f64>,
}

impl Gbrt {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &GbrtParams, seed: u64) -> Result<Self> {
        check_xy(x, y)?;
        if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
            return Err(MlError::Config(format!("learning_rate must be > 0, got {}", params.learning_rate)));
        }
        let n = x.nrows();
        let min_leaf = params.tree.min_samples_leaf.resolve(n)?;
        let cols = Columns::new(x);
        let y = y.to_vec();
        let init = y.iter().sum::<f64>() / n as f64;
        let mut fitted = vec![init; n];
        let mse = |f: &[f64]| f.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
        let mut loss_trace = vec![mse(&fitted)];
        let mut trees = Vec::with_capacity(params.n_estimators);
        for stage in 0..params.n_estimators {
            let residual: Vec<f64> = y.iter().zip(&fitted).map(|(t, f)| t - f).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stage as u64);
            let tree = RegressionTree::fit_rows(&cols, &residual, (0..n).collect(), &params.tree, min_leaf, &mut rng);
            for (i, f) in fitted.iter_mut().enumerate() {
                *f += params.learning_rate * tree.predict_row(x.row(i));
            }
            let loss = mse(&fitted);
            if !loss.is_finite() {
                return Err(MlError::Training(format!("boosting loss became {loss} at stage {stage}")));
            }
            loss_trace.push(loss);
            trees.push(tree);
        }
        Ok(Gbrt {
            n_features: x.ncols(),
            init,
            learning_rate: params.learning_rate,
            trees,
            loss_trace,
        })
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(x, self.n_features)?;
        check_finite(x)?;
        let mut sum = Array1::zeros(x.nrows());
        for t in &self.trees {
            t.accumulate(x, &mut sum);
        }
        Ok(sum.mapv(|s| self.init + self.learning_rate * s))
    }
}
