//! TOML run configuration. Every section is optional; command-line flags
//! override file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use bermudan_core::analytic::BermudanSpec;
use bermudan_core::dataset::{build_basket, read_include_list, BasketConfig, DEFAULT_BINS, DEFAULT_TRAIN_FRACTION};
use bermudan_core::g1pp::{G1ppParams, ScenarioGrid};
use bermudan_core::lsmc::{LsmcConfig, Numeraire};
use bermudan_core::market_data::{load_curve, CurveRole, MarketCurves};
use bermudan_ml::importance::DEFAULT_REPEATS;
use bermudan_ml::{ModelKind, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub curves: CurveConfig,
    pub basket: BasketSource,
    pub scenarios: ScenarioConfig,
    pub lsmc: LsmcSection,
    pub split: SplitConfig,
    pub models: ModelsConfig,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("out"),
            curves: CurveConfig::default(),
            basket: BasketSource::default(),
            scenarios: ScenarioConfig::default(),
            lsmc: LsmcSection::default(),
            split: SplitConfig::default(),
            models: ModelsConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

/// Curve CSVs; unset paths use the bundled EUR curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    pub discount: Option<PathBuf>,
    pub forwarding: Option<PathBuf>,
}

/// Exactly one of `desk`, `file` (a TOML basket description) or the full
/// product when both are unset. `include` filters with a CSV list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasketSource {
    pub desk: Option<usize>,
    pub file: Option<PathBuf>,
    pub include: Option<PathBuf>,
}

impl Default for BasketSource {
    fn default() -> Self {
        BasketSource {
            desk: Some(434),
            file: None,
            include: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Replaces the standard ten-scenario grid.
    pub list: Option<Vec<G1ppParams>>,
    /// Keep only the first `count` scenarios.
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LsmcSection {
    pub n_paths: usize,
    pub seed: u64,
    pub degree: usize,
    pub itm_only: bool,
    pub antithetic: bool,
    pub numeraire: Numeraire,
}

impl Default for LsmcSection {
    fn default() -> Self {
        let d = LsmcConfig::default();
        LsmcSection {
            n_paths: d.n_paths,
            seed: d.seed,
            degree: d.degree,
            itm_only: d.itm_only,
            antithetic: d.antithetic,
            numeraire: d.numeraire,
        }
    }
}

impl LsmcSection {
    pub fn to_config(&self) -> LsmcConfig {
        LsmcConfig {
            n_paths: self.n_paths,
            seed: self.seed,
            degree: self.degree,
            itm_only: self.itm_only,
            antithetic: self.antithetic,
            numeraire: self.numeraire,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub n_bins: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: DEFAULT_TRAIN_FRACTION,
            n_bins: DEFAULT_BINS,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub kinds: Vec<ModelKind>,
    pub seed: u64,
    pub cross_validate: bool,
    pub cv_folds: usize,
    /// Hyperparameter points searched by k-fold CV, grouped by kind. A kind
    /// without points uses its reference hyperparameters alone.
    pub grid: Vec<ModelSpec>,
    pub permutation_repeats: usize,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            kinds: ModelKind::ALL.to_vec(),
            seed: 7,
            cross_validate: true,
            cv_folds: bermudan_ml::cv::DEFAULT_FOLDS,
            grid: vec![],
            permutation_repeats: DEFAULT_REPEATS,
        }
    }
}

impl ModelsConfig {
    pub fn grid_for(&self, kind: ModelKind) -> Vec<ModelSpec> {
        let points: Vec<ModelSpec> = self.grid.iter().filter(|s| s.kind() == kind).copied().collect();
        if points.is_empty() {
            vec![ModelSpec::default_for(kind)]
        } else {
            points
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_paths: usize,
    pub repeats: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_paths: 10_000,
            repeats: 5,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// SHA-256 of the effective configuration as canonical JSON.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(&json))
    }

    pub fn curves(&self) -> anyhow::Result<(MarketCurves, Vec<String>)> {
        let bundled = MarketCurves::eur_2019();
        let load = |p: &Option<PathBuf>, role: CurveRole, fallback: &bermudan_core::market_data::YieldCurve| match p {
            None => Ok((fallback.clone(), format!("bundled:{role}"))),
            Some(p) => {
                if !p.exists() {
                    return Err(anyhow::Error::new(UsageError(format!("curve file {} not found", p.display()))));
                }
                Ok((load_curve(p, role)?, p.display().to_string()))
            }
        };
        let (d, ds) = load(&self.curves.discount, CurveRole::Discount, &bundled.discount)?;
        let (f, fs) = load(&self.curves.forwarding, CurveRole::Forwarding, &bundled.forwarding)?;
        Ok((MarketCurves::new(d, f)?, vec![ds, fs]))
    }

    pub fn basket(&self) -> anyhow::Result<Vec<BermudanSpec>> {
        let b = &self.basket;
        let mut config = match (&b.desk, &b.file) {
            (Some(_), Some(_)) => bail!(UsageError("basket: set either `desk` or `file`, not both".into())),
            (Some(n), None) => {
                if b.include.is_some() {
                    bail!(UsageError("basket: `include` needs `file` or the full product".into()));
                }
                return Ok(BasketConfig::desk(*n)?);
            }
            (None, Some(path)) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| UsageError(format!("cannot read basket {}: {e}", path.display())))?;
                toml::from_str::<BasketConfig>(&text)
                    .map_err(|e| UsageError(format!("invalid basket {}: {e}", path.display())))?
            }
            (None, None) => BasketConfig::default(),
        };
        if let Some(path) = &b.include {
            let file = std::fs::File::open(path)
                .map_err(|e| UsageError(format!("cannot read include list {}: {e}", path.display())))?;
            config.include = Some(read_include_list(file, &path.display().to_string())?);
        }
        Ok(build_basket(&config)?)
    }

    pub fn grid(&self) -> anyhow::Result<ScenarioGrid> {
        let mut scenarios = match &self.scenarios.list {
            Some(list) => list.clone(),
            None => ScenarioGrid::standard().scenarios,
        };
        if let Some(n) = self.scenarios.count {
            if n == 0 || n > scenarios.len() {
                bail!(UsageError(format!("scenario count must be in 1..={}", scenarios.len())));
            }
            scenarios.truncate(n);
        }
        ScenarioGrid::new(scenarios).context("scenario grid")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.output_dir.join("dataset.csv")
    }

    pub fn split_path(&self) -> PathBuf {
        self.output_dir.join("split.csv")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.output_dir.join("models")
    }

    pub fn model_path(&self, kind: ModelKind) -> PathBuf {
        self.models_dir().join(format!("{kind}.json"))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}
