use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::linalg::{cholesky, cholesky_solve};
use crate::preprocess::{check_finite, check_width, check_xy};

/// `min |y - Xw - b|^2 + alpha |w|^2` with an unpenalised intercept, solved
/// through the centred normal equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ridge {
    pub alpha: f64,
    pub coef: Array1<f64>,
    pub intercept: f64,
}

impl Ridge {
    pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, alpha: f64) -> Result<Self> {
        check_xy(x, y)?;
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(MlError::Config(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
        let y_mean = y.mean().expect("non-empty");
        let xc = &x - &x_mean;
        let yc = &y - y_mean;
        let mut gram: Array2<f64> = xc.t().dot(&xc);
        for i in 0..gram.nrows() {
            gram[[i, i]] += alpha;
        }
        let rhs = xc.t().dot(&yc);
        let l = cholesky(&gram).ok_or_else(|| {
            MlError::Training(format!("normal equations are singular at alpha = {alpha}; increase alpha"))
        })?;
        let coef = cholesky_solve(&l, &rhs);
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(MlError::Training("non-finite ridge coefficients".into()));
        }
        let intercept = y_mean - x_mean.dot(&coef);
        Ok(Ridge { alpha, coef, intercept })
    }

    pub fn n_features(&self) -> usize {
        self.coef.len()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(x, self.n_features())?;
        check_finite(x)?;
        Ok(x.dot(&self.coef) + self.intercept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn exact_line() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = x.column(0).mapv(|v| 2.0 * v + 1.0);
        let m = Ridge::fit(x.view(), y.view(), 0.0).unwrap();
        assert!((m.coef[0] - 2.0).abs() < 1e-12);
        assert!((m.intercept - 1.0).abs() < 1e-12);
    }

    #[test]
    fn huge_penalty_predicts_the_mean() {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 5.0], [3.0, 1.0]];
        let y = array![1.0, 3.0, 2.0, 6.0];
        let m = Ridge::fit(x.view(), y.view(), 1e12).unwrap();
        assert!(m.coef.iter().all(|c| c.abs() < 1e-10));
        for p in m.predict(x.view()).unwrap() {
            assert!((p - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn singular_unpenalised_fit_is_reported() {
        let x = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let y = array![1.0, 2.0, 3.0];
        assert!(matches!(Ridge::fit(x.view(), y.view(), 0.0), Err(MlError::Training(_))));
        assert!(Ridge::fit(x.view(), y.view(), 1e-3).is_ok());
    }

    #[test]
    fn rejects_non_finite_input() {
        let x = array![[1.0], [f64::NAN]];
        assert!(matches!(Ridge::fit(x.view(), array![1.0, 2.0].view(), 0.1), Err(MlError::Data(_))));
    }
}
