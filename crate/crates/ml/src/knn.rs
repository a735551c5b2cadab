use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::preprocess::{check_finite, check_width, check_xy};

/// Unweighted k-nearest-neighbour mean under Euclidean distance. Ties go to
/// the lower training-row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    x: Array2<f64>,
    y: Array1<f64>,
}

impl Knn {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, k: usize) -> Result<Self> {
        check_xy(x, y)?;
        if k == 0 || k > x.nrows() {
            return Err(MlError::Config(format!("k = {k} must be in 1..={}", x.nrows())));
        }
        Ok(Knn {
            k,
            x: x.to_owned(),
            y: y.to_owned(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Training-row indices of the `k` nearest neighbours, nearest first.
    pub fn neighbours(&self, q: ArrayView1<f64>) -> Vec<usize> {
        let q = q.to_vec();
        let k = self.k;
        // Sorted by (distance, index); rows arrive in index order, so an equal
        // distance never displaces an earlier row.
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        let mut offer = |d: f64, i: usize| {
            if best.len() == k && d >= best[k - 1].0 {
                return;
            }
            let at = best.partition_point(|&(b, _)| b <= d);
            best.insert(at, (d, i));
            best.truncate(k);
        };
        let dist = |row: &[f64]| row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        match self.x.as_slice().filter(|_| !q.is_empty()) {
            Some(data) => data.chunks_exact(q.len()).enumerate().for_each(|(i, row)| offer(dist(row), i)),
            None => self.x.outer_iter().enumerate().for_each(|(i, row)| offer(dist(&row.to_vec()), i)),
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(x, self.n_features())?;
        check_finite(x)?;
        Ok(x.outer_iter()
            .map(|q| self.neighbours(q).iter().map(|&i| self.y[i]).sum::<f64>() / self.k as f64)
            .collect())
    }
}
