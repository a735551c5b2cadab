//! k-fold grid search.

use ndarray::{ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::model::{ModelSpec, Pipeline};
use crate::preprocess::{check_xy, TargetScaler};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub grid: Vec<ModelSpec>,
    /// `fold_scores[point][fold]`: validation MSE on the standardised target.
    pub fold_scores: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub best: usize,
}

impl CvReport {
    pub fn best_spec(&self) -> &ModelSpec {
        &self.grid[self.best]
    }
}

/// Shuffled partition of `0..n` into `k` folds; the first `n % k` folds
/// take one extra row.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(MlError::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if n < k {
        return Err(MlError::Config(format!("{n} rows cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Validation MSE of `spec` on one fold, scaled by the training-fold target
/// variance. Every transform is refitted on the training part only.
pub fn fold_score(spec: &ModelSpec, x: ArrayView2<f64>, y: ArrayView1<f64>, val: &[usize], seed: u64) -> Result<f64> {
    let mut is_val = vec![false; x.nrows()];
    for &i in val {
        is_val[i] = true;
    }
    let train: Vec<usize> = (0..x.nrows()).filter(|&i| !is_val[i]).collect();
    let (xt, yt) = (x.select(Axis(0), &train), y.select(Axis(0), &train));
    let (xv, yv) = (x.select(Axis(0), val), y.select(Axis(0), val));
    let scale = TargetScaler::fit(yt.view())?.scale;
    let model = Pipeline::fit(spec, xt.view(), yt.view(), seed)?;
    let pred = model.predict(xv.view())?;
    let sse: f64 = pred.iter().zip(&yv).map(|(p, t)| ((p - t) / scale).powi(2)).sum();
    Ok(sse / val.len() as f64)
}

/// Scores every grid point on the same folds. The best point has the
/// lowest mean score; exact ties go to the lower complexity, then the
/// lower grid index.
pub fn kfold_grid_search(
    grid: &[ModelSpec],
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    k: usize,
    seed: u64,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(MlError::Config("empty hyperparameter grid".into()));
    }
    check_xy(x, y)?;
    let folds = kfold_indices(x.nrows(), k, seed)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..k).map(move |f| (g, f))).collect();
    let scores = jobs
        .par_iter()
        .map(|&(g, f)| fold_score(&grid[g], x, y, &folds[f], seed))
        .collect::<Result<Vec<f64>>>()?;
    let fold_scores: Vec<Vec<f64>> = scores.chunks(k).map(<[f64]>::to_vec).collect();
    let mean: Vec<f64> = fold_scores.iter().map(|s| s.iter().sum::<f64>() / k as f64).collect();
    let std = fold_scores
        .iter()
        .zip(&mean)
        .map(|(s, m)| (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / k as f64).sqrt())
        .collect();
    let p = x.ncols();
    let best = (0..grid.len())
        .min_by(|&i, &j| {
            mean[i]
                .total_cmp(&mean[j])
                .then(grid[i].complexity(p).total_cmp(&grid[j].complexity(p)))
                .then(i.cmp(&j))
        })
        .expect("non-empty grid");
    Ok(CvReport {
        k,
        seed,
        grid: grid.to_vec(),
        fold_scores,
        mean,
        std,
        best,
    })
}
