//! Model roster, preprocessing pipelines and versioned JSON persistence.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MlError, Result};
use crate::forest::{ForestParams, RandomForest};
use crate::gbrt::{Gbrt, GbrtParams};
use crate::knn::Knn;
use crate::mlp::{Mlp, MlpParams};
use crate::preprocess::{check_width, check_xy, PolynomialFeatures, Standardizer, TargetScaler};
use crate::ridge::Ridge;
use crate::tree::{LeafSize, MaxFeatures, RegressionTree, TreeParams};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Knn,
    Ridge,
    Tree,
    RandomForest,
    Gbrt,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Knn,
        ModelKind::Ridge,
        ModelKind::Tree,
        ModelKind::RandomForest,
        ModelKind::Gbrt,
        ModelKind::Mlp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::Ridge => "ridge",
            ModelKind::Tree => "tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Gbrt => "gbrt",
            ModelKind::Mlp => "mlp",
        }
    }

    pub fn is_tree_based(self) -> bool {
        matches!(self, ModelKind::Tree | ModelKind::RandomForest | ModelKind::Gbrt)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = MlError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| MlError::Config(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureTransform {
    None,
    Standardize,
    StandardizePolynomial { degree: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetTransform {
    None,
    Standardize,
}

/// Algorithm and hyperparameters, before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Knn { k: usize },
    Ridge { alpha: f64, degree: usize },
    Tree(TreeParams),
    RandomForest(ForestParams),
    Gbrt(GbrtParams),
    Mlp(MlpParams),
}

impl ModelSpec {
    /// Reference hyperparameters for each algorithm.
    pub fn default_for(kind: ModelKind) -> ModelSpec {
        match kind {
            ModelKind::Knn => ModelSpec::Knn { k: 4 },
            ModelKind::Ridge => ModelSpec::Ridge { alpha: 0.01, degree: 6 },
            ModelKind::Tree => ModelSpec::Tree(TreeParams {
                max_depth: Some(11),
                min_samples_leaf: LeafSize::Fraction(0.01),
                max_features: MaxFeatures::All,
            }),
            ModelKind::RandomForest => ModelSpec::RandomForest(ForestParams {
                n_estimators: 500,
                tree: TreeParams {
                    max_depth: Some(17),
                    min_samples_leaf: LeafSize::Count(1),
                    max_features: MaxFeatures::Log2,
                },
                bootstrap: true,
            }),
            ModelKind::Gbrt => ModelSpec::Gbrt(GbrtParams {
                learning_rate: 0.1,
                n_estimators: 1000,
                tree: TreeParams {
                    max_depth: Some(5),
                    min_samples_leaf: LeafSize::Count(1),
                    max_features: MaxFeatures::Log2,
                },
            }),
            ModelKind::Mlp => ModelSpec::Mlp(MlpParams::default()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Knn { .. } => ModelKind::Knn,
            ModelSpec::Ridge { .. } => ModelKind::Ridge,
            ModelSpec::Tree(_) => ModelKind::Tree,
            ModelSpec::RandomForest(_) => ModelKind::RandomForest,
            ModelSpec::Gbrt(_) => ModelKind::Gbrt,
            ModelSpec::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn feature_transform(&self) -> FeatureTransform {
        match self {
            ModelSpec::Knn { .. } | ModelSpec::Mlp(_) => FeatureTransform::Standardize,
            ModelSpec::Ridge { degree, .. } => FeatureTransform::StandardizePolynomial { degree: *degree },
            _ => FeatureTransform::None,
        }
    }

    pub fn target_transform(&self) -> TargetTransform {
        match self {
            ModelSpec::Mlp(_) => TargetTransform::Standardize,
            _ => TargetTransform::None,
        }
    }

    /// Rough count of fitted parameters for `p` input features, used to
    /// rank otherwise equal grid points.
    pub fn complexity(&self, p: usize) -> f64 {
        let leaves = |t: &TreeParams| t.max_depth.map_or(f64::INFINITY, |d| 2f64.powi(d as i32));
        match self {
            ModelSpec::Knn { k } => 1.0 / *k as f64,
            ModelSpec::Ridge { degree, .. } => PolynomialFeatures::new(p, *degree).map_or(f64::INFINITY, |f| f.n_output() as f64),
            ModelSpec::Tree(t) => leaves(t),
            ModelSpec::RandomForest(f) => f.n_estimators as f64 * leaves(&f.tree),
            ModelSpec::Gbrt(g) => g.n_estimators as f64 * leaves(&g.tree),
            ModelSpec::Mlp(m) => {
                let h = m.n_neurons as f64;
                (p as f64 + 1.0) * h + (m.n_hidden.saturating_sub(1) as f64) * (h + 1.0) * h + h + 1.0
            }
        }
    }
}

/// Fitted regressor state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regressor {
    Knn(Knn),
    Ridge(Ridge),
    Tree(RegressionTree),
    RandomForest(RandomForest),
    Gbrt(Gbrt),
    Mlp(Mlp),
}

impl Regressor {
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        match self {
            Regressor::Knn(m) => m.predict(x),
            Regressor::Ridge(m) => m.predict(x),
            Regressor::Tree(m) => m.predict(x),
            Regressor::RandomForest(m) => m.predict(x),
            Regressor::Gbrt(m) => m.predict(x),
            Regressor::Mlp(m) => m.predict(x),
        }
    }
}

/// Transforms plus model; every statistic comes from the rows passed to
/// [`Pipeline::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub format_version: u32,
    pub spec: ModelSpec,
    pub seed: u64,
    pub n_features: usize,
    pub standardizer: Option<Standardizer>,
    pub polynomial: Option<PolynomialFeatures>,
    pub target: Option<TargetScaler>,
    pub model: Regressor,
}

impl Pipeline {
    pub fn fit(spec: &ModelSpec, x: ArrayView2<f64>, y: ArrayView1<f64>, seed: u64) -> Result<Self> {
        check_xy(x, y)?;
        let (standardizer, polynomial) = match spec.feature_transform() {
            FeatureTransform::None => (None, None),
            FeatureTransform::Standardize => (Some(Standardizer::fit(x)?), None),
            FeatureTransform::StandardizePolynomial { degree } => {
                (Some(Standardizer::fit(x)?), Some(PolynomialFeatures::new(x.ncols(), degree)?))
            }
        };
        let target = match spec.target_transform() {
            TargetTransform::None => None,
            TargetTransform::Standardize => Some(TargetScaler::fit(y)?),
        };
        let xt = apply_features(standardizer.as_ref(), polynomial.as_ref(), x)?;
        let xt = xt.view();
        let yt = target.map_or_else(|| y.to_owned(), |t| t.transform(y));
        let yt = yt.view();
        let model = match spec {
            ModelSpec::Knn { k } => Regressor::Knn(Knn::fit(xt, yt, *k)?),
            ModelSpec::Ridge { alpha, .. } => Regressor::Ridge(Ridge::fit(xt, yt, *alpha)?),
            ModelSpec::Tree(p) => Regressor::Tree(RegressionTree::fit(xt, yt, p, &mut ChaCha8Rng::seed_from_u64(seed))?),
            ModelSpec::RandomForest(p) => Regressor::RandomForest(RandomForest::fit(xt, yt, p, seed)?),
            ModelSpec::Gbrt(p) => Regressor::Gbrt(Gbrt::fit(xt, yt, p, seed)?),
            ModelSpec::Mlp(p) => Regressor::Mlp(Mlp::fit(xt, yt, p, seed)?),
        };
        Ok(Pipeline {
            format_version: MODEL_FORMAT_VERSION,
            spec: *spec,
            seed,
            n_features: x.ncols(),
            standardizer,
            polynomial,
            target,
            model,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.spec.kind()
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_width(x, self.n_features)?;
        let xt = apply_features(self.standardizer.as_ref(), self.polynomial.as_ref(), x)?;
        let out = self.model.predict(xt.view())?;
        Ok(match &self.target {
            Some(t) => t.inverse(out.view()),
            None => out,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(MODEL_FORMAT_VERSION as u64) {
            return Err(MlError::Format(format!(
                "model format_version {version:?}, this build reads {MODEL_FORMAT_VERSION}"
            )));
        }
        Ok(serde_json::from_value(value)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| MlError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|source| MlError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&s)
    }
}

fn apply_features(
    standardizer: Option<&Standardizer>,
    polynomial: Option<&PolynomialFeatures>,
    x: ArrayView2<f64>,
) -> Result<ndarray::Array2<f64>> {
    let z = match standardizer {
        Some(s) => s.transform(x)?,
        None => x.to_owned(),
    };
    match polynomial {
        Some(p) => p.transform(z.view()),
        None => Ok(z),
    }
}
