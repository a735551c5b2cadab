use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::preprocess::{check_finite, check_width, check_xy};
use crate::tree::{Columns, RegressionTree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
}

/// Bagged regression trees; tree `i` draws from its own ChaCha stream so
/// the fit does not depend on scheduling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_features: usize,
    pub trees: Vec<RegressionTree>,
}

impl RandomForest {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, params: &ForestParams, seed: u64) -> Result<Self> {
        check_xy(x, y)?;
        if params.n_estimators == 0 {
            return Err(MlError::Config("n_estimators must be at least 1".into()));
        }
        let n = x.nrows();
        let min_leaf = params.tree.min_samples_leaf.resolve(n)?;
        let cols = Columns::new(x);
        let y = y.to_vec();
        let trees = (0..params.n_estimators)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                RegressionTree::fit_rows(&cols, &y, rows, &params.tree, min_leaf, &mut rng)
            })
            .collect();
        Ok(RandomForest {
            n_features: x.ncols(),
            trees,
        })
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(x, self.n_features)?;
        check_finite(x)?;
        // Tree-major keeps one tree in cache for the whole batch.
        let mut sum = Array1::zeros(x.nrows());
        for t in &self.trees {
            t.accumulate(x, &mut sum);
        }
        Ok(sum / self.trees.len() as f64)
    }
}
