//! Error metrics and relative-error statistics.

use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};

/// Zero-target guard: denominators below `EPS_SCALE * mean|y|` are
/// replaced by that value.
pub const EPS_SCALE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub mape: f64,
    pub wape: f64,
    pub rmsre: f64,
    pub rrmse: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub skew: f64,
    pub kurtosis: f64,
    pub min: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub max: f64,
}

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(MlError::Data("no samples to score".into()));
    }
    if y.len() != yhat.len() {
        return Err(MlError::Data(format!("{} targets but {} predictions", y.len(), yhat.len())));
    }
    if y.iter().chain(yhat).any(|v| !v.is_finite()) {
        return Err(MlError::Data("non-finite target or prediction".into()));
    }
    Ok(())
}

fn epsilon(y: &[f64]) -> f64 {
    EPS_SCALE * y.iter().map(|v| v.abs()).sum::<f64>() / y.len() as f64
}

/// `(yhat - y) / y` with the zero-target guard.
pub fn relative_errors(y: &[f64], yhat: &[f64]) -> Result<Vec<f64>> {
    check(y, yhat)?;
    let eps = epsilon(y);
    Ok(y.iter()
        .zip(yhat)
        .map(|(&t, &p)| {
            let d = if t.abs() < eps { eps.copysign(t) } else { t };
            if d == 0.0 {
                0.0
            } else {
                (p - t) / d
            }
        })
        .collect())
}

pub fn compute_metrics(y: &[f64], yhat: &[f64]) -> Result<MetricsReport> {
    check(y, yhat)?;
    let n = y.len() as f64;
    let eps = epsilon(y);
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut rel_abs = 0.0;
    let mut rel_sq = 0.0;
    let mut y_abs = 0.0;
    let mut y_sq = 0.0;
    for (&t, &p) in y.iter().zip(yhat) {
        let e = p - t;
        let d = t.abs().max(eps);
        abs += e.abs();
        sq += e * e;
        if d > 0.0 {
            rel_abs += e.abs() / d;
            rel_sq += (e / d).powi(2);
        }
        y_abs += t.abs();
        y_sq += t * t;
    }
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Ok(MetricsReport {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        mape: rel_abs / n,
        wape: ratio(abs, y_abs),
        rmsre: (rel_sq / n).sqrt(),
        rrmse: ratio(sq, y_sq).sqrt(),
        n: y.len(),
    })
}

/// Moments and quartiles of the relative errors. `std` uses `n - 1`; skew
/// and kurtosis are population moments, kurtosis not reduced by 3.
pub fn error_stats(y: &[f64], yhat: &[f64]) -> Result<ErrorStats> {
    if y.len() < 2 {
        return Err(MlError::Data("error statistics need at least 2 samples".into()));
    }
    let r = relative_errors(y, yhat)?;
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let moment = |k: i32| r.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (moment(2), moment(3), moment(4));
    let (skew, kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2)) } else { (0.0, 0.0) };
    let mut sorted = r.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(ErrorStats {
        mean,
        std: (m2 * n / (n - 1.0)).sqrt(),
        skew,
        kurtosis,
        min: sorted[0],
        q25: quantile(&sorted, 0.25),
        q50: quantile(&sorted, 0.5),
        q75: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    })
}

/// Linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction() {
        let y = [1.0, 2.5, -3.0];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!([m.mae, m.rmse, m.mape, m.wape, m.rmsre, m.rrmse], [0.0; 6]);
    }

    #[test]
    fn equality_case() {
        let m = compute_metrics(&[1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert_eq!((m.mae, m.rmse), (1.0, 1.0));
    }

    #[test]
    fn empty_and_ragged_inputs() {
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
        assert!(error_stats(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn symmetric_relative_errors() {
        let s = error_stats(&[10.0, 10.0], &[9.0, 11.0]).unwrap();
        assert!(s.mean.abs() < 1e-15 && s.skew.abs() < 1e-12);
        let s = error_stats(&[3.0, 4.0], &[3.0, 4.0]).unwrap();
        assert_eq!((s.mean, s.std), (0.0, 0.0));
    }

    #[test]
    fn zero_target_is_guarded() {
        let m = compute_metrics(&[0.0, 2.0], &[0.0, 2.0]).unwrap();
        assert_eq!(m.mape, 0.0);
        assert!(compute_metrics(&[0.0, 2.0], &[1e-3, 2.0]).unwrap().mape.is_finite());
    }

    #[test]
    fn quartiles_interpolate() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }
}
