//! Feature and target transforms fitted on training rows only.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};

pub const MAX_POLY_COLUMNS: usize = 100_000;

pub(crate) fn check_xy(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(MlError::Data("no training rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(MlError::Data(format!("{} feature rows but {} targets", x.nrows(), y.len())));
    }
    check_finite(x)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(MlError::Data("non-finite target".into()));
    }
    Ok(())
}

pub(crate) fn check_finite(x: ArrayView2<f64>) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(MlError::Data("non-finite feature value".into()));
    }
    Ok(())
}

pub(crate) fn check_width(x: ArrayView2<f64>, expected: usize) -> Result<()> {
    if x.ncols() != expected {
        return Err(MlError::Dimension {
            expected,
            got: x.ncols(),
        });
    }
    Ok(())
}

/// Per-column `(x - mean) / std` with population std. Constant columns map
/// to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(MlError::Data("standardisation needs at least 2 rows".into()));
        }
        check_finite(x)?;
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let mut scale = x.std_axis(Axis(0), 0.0);
        for (j, s) in scale.iter_mut().enumerate() {
            if !(*s > 0.0) {
                warn!("feature column {j} is constant on the training rows");
                *s = 1.0;
            }
        }
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_width(x, self.mean.len())?;
        Ok((&x - &self.mean) / &self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub mean: f64,
    pub scale: f64,
}

impl TargetScaler {
    pub fn fit(y: ArrayView1<f64>) -> Result<Self> {
        if y.len() < 2 {
            return Err(MlError::Data("target standardisation needs at least 2 rows".into()));
        }
        let mean = y.mean().expect("non-empty");
        let mut scale = y.std(0.0);
        if !(scale > 0.0) {
            warn!("target is constant on the training rows");
            scale = 1.0;
        }
        Ok(TargetScaler { mean, scale })
    }

    pub fn transform(&self, y: ArrayView1<f64>) -> Array1<f64> {
        y.mapv(|v| (v - self.mean) / self.scale)
    }

    pub fn inverse(&self, y: ArrayView1<f64>) -> Array1<f64> {
        y.mapv(|v| v * self.scale + self.mean)
    }
}

/// All monomials of total degree `1..=degree`, graded by degree and
/// lexicographic within a degree: `(x, y)` at degree 2 gives
/// `x, y, x^2, xy, y^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialFeatures {
    pub n_input: usize,
    pub degree: usize,
    /// Input-column indices multiplied together, one list per output column.
    terms: Vec<Vec<usize>>,
    /// Output column this term extends by its last factor.
    parents: Vec<Option<usize>>,
}

impl PolynomialFeatures {
    pub fn new(n_input: usize, degree: usize) -> Result<Self> {
        if degree < 1 || n_input < 1 {
            return Err(MlError::Config("polynomial degree and input width must be at least 1".into()));
        }
        let count = output_width(n_input, degree);
        if count.is_none_or(|c| c > MAX_POLY_COLUMNS) {
            return Err(MlError::Config(format!(
                "{n_input} features at degree {degree} exceed {MAX_POLY_COLUMNS} columns"
            )));
        }
        let mut terms: Vec<Vec<usize>> = Vec::with_capacity(count.unwrap_or(0));
        let mut parents = Vec::with_capacity(terms.capacity());
        let mut frontier: Vec<Option<usize>> = vec![None];
        for _ in 0..degree {
            let mut next = Vec::new();
            for &parent in &frontier {
                let start = parent.map_or(0, |p| *terms[p].last().expect("non-empty term"));
                for j in start..n_input {
                    let mut t = parent.map_or_else(Vec::new, |p| terms[p].clone());
                    t.push(j);
                    next.push(Some(terms.len()));
                    terms.push(t);
                    parents.push(parent);
                }
            }
            frontier = next;
        }
        Ok(PolynomialFeatures {
            n_input,
            degree,
            terms,
            parents,
        })
    }

    pub fn n_output(&self) -> usize {
        self.terms.len()
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_width(x, self.n_input)?;
        let mut out = Array2::<f64>::zeros((x.nrows(), self.terms.len()));
        for (row, mut dst) in x.outer_iter().zip(out.outer_iter_mut()) {
            for (c, (term, parent)) in self.terms.iter().zip(&self.parents).enumerate() {
                let last = row[*term.last().expect("non-empty term")];
                dst[c] = parent.map_or(last, |p| dst[p] * last);
            }
        }
        Ok(out)
    }
}

/// `C(n + d, d) - 1`, or `None` on overflow.
fn output_width(n: usize, d: usize) -> Option<usize> {
    let mut c: u128 = 1;
    for i in 1..=d as u128 {
        c = c.checked_mul(n as u128 + i)? / i;
    }
    usize::try_from(c - 1).ok()
}
