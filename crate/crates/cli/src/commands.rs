//! Subcommand definitions and their implementations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use bermudan_core::analytic::{atm_strike, european_price_g1pp, BermudanSpec, EuropeanSpec, Side};
use bermudan_core::dataset::{generate, stratified_split, Dataset, FeatureRow, SplitTag, FEATURE_NAMES};
use bermudan_core::g1pp::{G1ppParams, ScenarioGrid};
use bermudan_core::lsmc::{BermudanPricer, LsmcConfig};
use bermudan_core::market_data::{forward_swap_rate_on, load_curve, whole_months, CurveRole, MarketCurves};
use bermudan_ml::cv::{kfold_grid_search, CvReport};
use bermudan_ml::importance::{impurity_importance, mse, permutation_importance, ImportanceReport};
use bermudan_ml::metrics::{compute_metrics, error_stats, ErrorStats, MetricsReport};
use bermudan_ml::{ModelKind, Pipeline};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::bench::{timing_benchmark, write_timing_csv, BenchModel};
use crate::config::RunConfig;
use crate::provenance::{require, require_fresh, Sidecar};
use crate::UsageError;

#[derive(Debug, Parser)]
#[command(name = "bermudan", version, about = "G1++ Bermudan swaption pricing and surrogate models")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for every artifact.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Maximum worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a zero curve and print discount factors.
    Curve(CurveArgs),
    #[command(subcommand)]
    Price(PriceCommand),
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Cross-validate and fit the surrogate models on the train rows.
    Train(TrainArgs),
    /// Score every model on the test rows.
    Evaluate(ModelsArg),
    /// Feature importance per model.
    Importance(ImportanceArgs),
    /// Time LSMC against surrogate prediction on the dataset basket.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    /// Curve CSV; defaults to the bundled curve for the role.
    #[arg(long)]
    pub file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RoleArg::Discount)]
    pub role: RoleArg,
    /// Times in years at which to print the discount factor.
    #[arg(long)]
    pub at: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoleArg {
    Discount,
    Forwarding,
}

#[derive(Debug, Subcommand)]
pub enum PriceCommand {
    /// Closed-form G1++ European swaption.
    European(EuropeanArgs),
    /// LSMC Bermudan swaption.
    Bermudan(BermudanArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 0.03, allow_negative_numbers = true)]
    pub a: f64,
    #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
    pub sigma: f64,
}

#[derive(Debug, Args)]
pub struct EuropeanArgs {
    #[arg(long)]
    pub side: Side,
    /// Years to expiry.
    #[arg(long)]
    pub expiry: f64,
    /// Swap length in years.
    #[arg(long)]
    pub tenor: f64,
    /// Offset from the forward swap rate, in basis points.
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub strike_bp: i32,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct BermudanArgs {
    #[arg(long)]
    pub side: Side,
    #[arg(long)]
    pub no_call: u32,
    #[arg(long)]
    pub tenor: u32,
    #[arg(long, default_value_t = 0, allow_negative_numbers = true)]
    pub strike_bp: i32,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub antithetic: bool,
    /// Restrict exercise to these years (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub exercise_years: Option<Vec<u32>>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Price the basket under every scenario and write the feature table.
    Generate(GenerateArgs),
    /// Tag rows train/test, stratified on the max European price.
    Split(SplitArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Use a fixed desk subset of this many instruments.
    #[arg(long, conflicts_with = "basket_file")]
    pub desk: Option<usize>,
    /// TOML basket description.
    #[arg(long)]
    pub basket_file: Option<PathBuf>,
    /// CSV include list filtering the basket.
    #[arg(long)]
    pub include: Option<PathBuf>,
    /// Keep only the first N scenarios.
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ModelsArg {
    /// Comma-separated model kinds.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub models: ModelsArg,
    /// Skip k-fold cross-validation and fit the first grid point.
    #[arg(long)]
    pub no_cv: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[command(flatten)]
    pub models: ModelsArg,
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub models: ModelsArg,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!(UsageError("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = cli.out_dir {
        cfg.output_dir = d;
    }
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Curve(a) => cmd_curve(&cfg, &a, &mut out),
        Command::Price(PriceCommand::European(a)) => cmd_price_european(&cfg, &a, &mut out),
        Command::Price(PriceCommand::Bermudan(a)) => cmd_price_bermudan(&cfg, &a, &mut out),
        Command::Dataset(DatasetCommand::Generate(a)) => {
            apply_generate_flags(&mut cfg, &a);
            cmd_dataset_generate(&cfg, &mut out)
        }
        Command::Dataset(DatasetCommand::Split(a)) => {
            cfg.split.train_fraction = a.train_fraction.unwrap_or(cfg.split.train_fraction);
            cfg.split.n_bins = a.bins.unwrap_or(cfg.split.n_bins);
            cfg.split.seed = a.seed.unwrap_or(cfg.split.seed);
            cmd_dataset_split(&cfg, &mut out)
        }
        Command::Train(a) => {
            apply_models(&mut cfg, &a.models)?;
            cfg.models.cross_validate &= !a.no_cv;
            cfg.models.seed = a.seed.unwrap_or(cfg.models.seed);
            cmd_train(&cfg, &mut out)
        }
        Command::Evaluate(a) => {
            apply_models(&mut cfg, &a)?;
            cmd_evaluate(&cfg, &mut out)
        }
        Command::Importance(a) => {
            apply_models(&mut cfg, &a.models)?;
            cfg.models.permutation_repeats = a.repeats.unwrap_or(cfg.models.permutation_repeats);
            cmd_importance(&cfg, &mut out)
        }
        Command::Bench(a) => {
            apply_models(&mut cfg, &a.models)?;
            cfg.bench.n_paths = a.n_paths.unwrap_or(cfg.bench.n_paths);
            cfg.bench.repeats = a.repeats.unwrap_or(cfg.bench.repeats);
            cmd_bench(&cfg, &mut out)
        }
    }
}

fn apply_generate_flags(cfg: &mut RunConfig, a: &GenerateArgs) {
    if a.desk.is_some() {
        cfg.basket.desk = a.desk;
        cfg.basket.file = None;
    }
    if a.basket_file.is_some() {
        cfg.basket.file = a.basket_file.clone();
        cfg.basket.desk = None;
    }
    if a.include.is_some() {
        cfg.basket.include = a.include.clone();
    }
    cfg.scenarios.count = a.scenarios.or(cfg.scenarios.count);
    cfg.lsmc.n_paths = a.n_paths.unwrap_or(cfg.lsmc.n_paths);
    cfg.lsmc.seed = a.seed.unwrap_or(cfg.lsmc.seed);
}

fn apply_models(cfg: &mut RunConfig, a: &ModelsArg) -> anyhow::Result<()> {
    if let Some(names) = &a.models {
        cfg.models.kinds = names
            .iter()
            .map(|n| n.parse::<ModelKind>().map_err(|e| UsageError(e.to_string())))
            .collect::<Result<_, _>>()?;
    }
    Ok(())
}

fn usage<T>(r: bermudan_core::Result<T>) -> anyhow::Result<T> {
    r.map_err(|e| match e {
        bermudan_core::Error::Numerical(_) => anyhow::Error::new(e),
        other => anyhow::Error::new(UsageError(other.to_string())),
    })
}

pub fn cmd_curve(cfg: &RunConfig, a: &CurveArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let role = match a.role {
        RoleArg::Discount => CurveRole::Discount,
        RoleArg::Forwarding => CurveRole::Forwarding,
    };
    let file = a.file.clone().or_else(|| match role {
        CurveRole::Discount => cfg.curves.discount.clone(),
        CurveRole::Forwarding => cfg.curves.forwarding.clone(),
    });
    let (curve, source) = match &file {
        Some(p) => {
            if !p.exists() {
                bail!(UsageError(format!("curve file {} not found", p.display())));
            }
            (usage(load_curve(p, role))?, p.display().to_string())
        }
        None => {
            let c = MarketCurves::eur_2019();
            let curve = match role {
                CurveRole::Discount => c.discount,
                CurveRole::Forwarding => c.forwarding,
            };
            (curve, format!("bundled:{role}"))
        }
    };
    writeln!(out, "curve {source} role {role} anchor {} pillars {}", curve.anchor(), curve.len())?;
    writeln!(out, "t,zero_rate,discount_factor")?;
    if a.at.is_empty() {
        for (_, t, z) in curve.pillars() {
            writeln!(out, "{t},{z},{}", usage(curve.discount_factor(t))?)?;
        }
    } else {
        for &t in &a.at {
            writeln!(out, "{t},{},{}", usage(curve.zero_rate(t))?, usage(curve.discount_factor(t))?)?;
        }
    }
    Ok(())
}

fn params(m: &ModelArgs) -> anyhow::Result<G1ppParams> {
    usage(G1ppParams::new(m.a, m.sigma))
}

pub fn cmd_price_european(cfg: &RunConfig, a: &EuropeanArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let (curves, _) = cfg.curves()?;
    let p = params(&a.model)?;
    usage(whole_months(a.expiry))?;
    usage(whole_months(a.tenor))?;
    let atm = usage(forward_swap_rate_on(&curves, a.expiry, a.tenor))?;
    let spec = EuropeanSpec {
        side: a.side,
        expiry: a.expiry,
        tenor: a.tenor,
        strike: atm + a.strike_bp as f64 * 1e-4,
        notional: bermudan_core::analytic::DEFAULT_NOTIONAL,
    };
    let price = usage(european_price_g1pp(&spec, &p, &curves))?;
    writeln!(out, "side,expiry,tenor,strike,price")?;
    writeln!(out, "{},{},{},{},{price}", a.side, a.expiry, a.tenor, spec.strike)?;
    Ok(())
}

pub fn cmd_price_bermudan(cfg: &RunConfig, a: &BermudanArgs, out: &mut impl Write) -> anyhow::Result<()> {
    let (curves, _) = cfg.curves()?;
    let p = params(&a.model)?;
    let spec = usage(BermudanSpec::new(a.side, a.no_call, a.tenor, a.strike_bp))?;
    let years = a.exercise_years.clone().unwrap_or_else(|| spec.exercise_years());
    let pricer = usage(BermudanPricer::with_exercise_years(&spec, &p, &curves, &years))?;
    let lsmc = LsmcConfig {
        n_paths: a.n_paths.unwrap_or(cfg.lsmc.n_paths),
        seed: a.seed.unwrap_or(cfg.lsmc.seed),
        antithetic: a.antithetic || cfg.lsmc.antithetic,
        ..cfg.lsmc.to_config()
    };
    let paths = usage(pricer.simulate(&curves, &lsmc))?;
    let result = usage(pricer.price_paths(&paths, &lsmc))?;
    let strike = usage(atm_strike(&spec, &curves))?;
    let mut max_euro = 0.0f64;
    for &y in &years {
        max_euro = max_euro.max(usage(european_price_g1pp(&spec.co_terminal_european(y, strike), &p, &curves))?);
    }
    let joined: Vec<String> = years.iter().map(u32::to_string).collect();
    writeln!(out, "side,no_call,tenor,strike,price,std_error,max_european,exercise_years")?;
    writeln!(
        out,
        "{},{},{},{strike},{},{},{max_euro},{}",
        a.side,
        a.no_call,
        a.tenor,
        result.price,
        result.std_error,
        joined.join(";")
    )?;
    Ok(())
}

fn ensure_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

pub fn cmd_dataset_generate(cfg: &RunConfig, out: &mut impl Write) -> anyhow::Result<()> {
    let (curves, sources) = cfg.curves()?;
    let basket = cfg.basket()?;
    let grid = cfg.grid()?;
    let lsmc = cfg.lsmc.to_config();
    usage(lsmc.validate())?;
    let ds = generate(&basket, &grid, &curves, &lsmc, sources)?;
    ensure_dir(&cfg.output_dir)?;
    let path = cfg.dataset_path();
    ds.save(&path)?;
    Sidecar::new("dataset generate", cfg).seed("lsmc", lsmc.seed).write_for(&path)?;
    writeln!(
        out,
        "wrote {} rows ({} specs x {} scenarios) to {}; failures {}, lower-bound violations {}, degenerate correlations {}",
        ds.len(),
        basket.len(),
        grid.len(),
        path.display(),
        ds.provenance.failures.len(),
        ds.provenance.lower_bound_violations,
        ds.provenance.degenerate_correlations
    )?;
    Ok(())
}

fn load_dataset(path: &Path, hint: &str) -> anyhow::Result<Dataset> {
    require(path, hint)?;
    require(&bermudan_core::dataset::sidecar_path(path), hint)?;
    Ok(Dataset::load(path)?)
}

pub fn cmd_dataset_split(cfg: &RunConfig, out: &mut impl Write) -> anyhow::Result<()> {
    let input = cfg.dataset_path();
    let ds = load_dataset(&input, "run `dataset generate` first")?;
    let s = &cfg.split;
    let split = stratified_split(&ds, s.train_fraction, s.n_bins, s.seed)?;
    let path = cfg.split_path();
    split.save(&path)?;
    Sidecar::new("dataset split", cfg).seed("split", s.seed).input(&input)?.write_for(&path)?;
    writeln!(
        out,
        "train {} test {} -> {}",
        split.rows_with(SplitTag::Train).count(),
        split.rows_with(SplitTag::Test).count(),
        path.display()
    )?;
    Ok(())
}

pub fn to_arrays(x: Vec<[f64; 6]>, y: Vec<f64>) -> (Array2<f64>, Array1<f64>) {
    (Array2::from(x), Array1::from(y))
}

fn load_split(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    let path = cfg.split_path();
    let ds = load_dataset(&path, "run `dataset split` first")?;
    if ds.rows.iter().any(|r| r.split.is_none()) {
        return Err(crate::MissingArtifact {
            path,
            hint: "rows without a train/test tag; rerun `dataset split`".into(),
        }
        .into());
    }
    Ok(ds)
}

/// Feature matrix of `rows`, refusing any row not tagged test.
pub fn test_design(rows: &[&FeatureRow]) -> anyhow::Result<(Array2<f64>, Array1<f64>)> {
    if let Some(r) = rows.iter().find(|r| r.split != Some(SplitTag::Test)) {
        bail!(UsageError(format!(
            "row (spec {}, scenario {}) is not a test row; models are scored on test rows only",
            r.spec_id, r.scenario_id
        )));
    }
    if rows.is_empty() {
        bail!(UsageError("no test rows".into()));
    }
    Ok(to_arrays(rows.iter().map(|r| r.features()).collect(), rows.iter().map(|r| r.target).collect()))
}

pub fn cmd_train(cfg: &RunConfig, out: &mut impl Write) -> anyhow::Result<()> {
    let ds = load_split(cfg)?;
    let (x, y) = ds.design(Some(SplitTag::Train));
    let (x, y) = to_arrays(x, y);
    let dir = cfg.models_dir();
    ensure_dir(&dir)?;
    let mut timing = csv::Writer::from_path(dir.join("train_timing.csv"))?;
    timing.write_record(["model", "cv_ms", "fit_ms"])?;
    for &kind in &cfg.models.kinds {
        let grid = cfg.models.grid_for(kind);
        let started = Instant::now();
        let (spec, report): (_, Option<CvReport>) = if cfg.models.cross_validate {
            let r = kfold_grid_search(&grid, x.view(), y.view(), cfg.models.cv_folds, cfg.models.seed)?;
            (*r.best_spec(), Some(r))
        } else {
            (grid[0], None)
        };
        let cv_ms = started.elapsed().as_secs_f64() * 1e3;
        let started = Instant::now();
        let model = Pipeline::fit(&spec, x.view(), y.view(), cfg.models.seed)?;
        let fit_ms = started.elapsed().as_secs_f64() * 1e3;
        let path = cfg.model_path(kind);
        model.save(&path)?;
        let sidecar = Sidecar::new("train", cfg)
            .seed("model", cfg.models.seed)
            .input(&cfg.split_path())?;
        sidecar.write_for(&path)?;
        if let Some(r) = &report {
            let cv_path = dir.join(format!("{kind}.cv.json"));
            std::fs::write(&cv_path, serde_json::to_string_pretty(r)?)?;
            sidecar.write_for(&cv_path)?;
        }
        timing.write_record([kind.name().to_string(), cv_ms.to_string(), fit_ms.to_string()])?;
        match &report {
            Some(r) => writeln!(out, "{kind}: cv mse {:.6} (point {} of {})", r.mean[r.best], r.best, r.grid.len())?,
            None => writeln!(out, "{kind}: fitted")?,
        }
    }
    timing.flush()?;
    Ok(())
}

fn load_models(cfg: &RunConfig) -> anyhow::Result<Vec<(ModelKind, Pipeline)>> {
    cfg.models
        .kinds
        .iter()
        .map(|&kind| {
            let path = cfg.model_path(kind);
            require_fresh(&path, &cfg.split_path(), "rerun `train`")?;
            Ok((kind, Pipeline::load(&path)?))
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct Evaluation {
    model: String,
    metrics: MetricsReport,
    error_stats: ErrorStats,
}

pub fn cmd_evaluate(cfg: &RunConfig, out: &mut impl Write) -> anyhow::Result<()> {
    let ds = load_split(cfg)?;
    let models = load_models(cfg)?;
    let test: Vec<&FeatureRow> = ds.rows_with(SplitTag::Test).collect();
    let (x, y) = test_design(&test)?;
    let y = y.to_vec();
    let mut results = Vec::new();
    for (kind, model) in &models {
        let pred = model.predict(x.view())?.to_vec();
        results.push(Evaluation {
            model: kind.name().into(),
            metrics: compute_metrics(&y, &pred)?,
            error_stats: error_stats(&y, &pred)?,
        });
    }

    let metrics_path = cfg.output_dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&metrics_path)?;
    w.write_record(["model", "mae", "rmse", "mape", "wape", "rmsre", "rrmse", "n"])?;
    let mut long = csv::Writer::from_path(cfg.output_dir.join("metrics_long.csv"))?;
    long.write_record(["model", "metric", "value"])?;
    for e in &results {
        let m = &e.metrics;
        let vals = [m.mae, m.rmse, m.mape, m.wape, m.rmsre, m.rrmse];
        let mut rec = vec![e.model.clone()];
        rec.extend(vals.iter().map(f64::to_string));
        rec.push(m.n.to_string());
        w.write_record(&rec)?;
        for (name, v) in ["mae", "rmse", "mape", "wape", "rmsre", "rrmse"].iter().zip(vals) {
            long.write_record([e.model.as_str(), name, &v.to_string()])?;
        }
        writeln!(out, "{}: rrmse {:.5} mape {:.5} mae {:.4}", e.model, m.rrmse, m.mape, m.mae)?;
    }
    w.flush()?;
    long.flush()?;

    let stats_path = cfg.output_dir.join("error_stats.csv");
    let mut w = csv::Writer::from_path(&stats_path)?;
    w.write_record(["model", "mean", "std", "skew", "kurtosis", "min", "q25", "q50", "q75", "max"])?;
    for e in &results {
        let s = &e.error_stats;
        let mut rec = vec![e.model.clone()];
        rec.extend([s.mean, s.std, s.skew, s.kurtosis, s.min, s.q25, s.q50, s.q75, s.max].iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let json_path = cfg.output_dir.join("evaluation.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&results)?)?;
    let sidecar = Sidecar::new("evaluate", cfg).input(&cfg.split_path())?;
    for p in [&metrics_path, &stats_path, &json_path, &cfg.output_dir.join("metrics_long.csv")] {
        sidecar.write_for(p)?;
    }
    Ok(())
}

/// Impurity importance for tree models, permutation importance (MSE, test
/// rows) otherwise.
pub fn model_importance(
    model: &Pipeline,
    x: ndarray::ArrayView2<f64>,
    y: ndarray::ArrayView1<f64>,
    repeats: usize,
    seed: u64,
) -> anyhow::Result<ImportanceReport> {
    Ok(if model.kind().is_tree_based() {
        impurity_importance(model)?
    } else {
        permutation_importance(model, x, y, mse, repeats, seed)?
    })
}

pub fn cmd_importance(cfg: &RunConfig, out: &mut impl Write) -> anyhow::Result<()> {
    let ds = load_split(cfg)?;
    let models = load_models(cfg)?;
    let test: Vec<&FeatureRow> = ds.rows_with(SplitTag::Test).collect();
    let (x, y) = test_design(&test)?;
    let path = cfg.output_dir.join("importance.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["model", "method", "feature", "importance", "rank"])?;
    let mut all = BTreeMap::new();
    for (kind, model) in &models {
        let r = model_importance(model, x.view(), y.view(), cfg.models.permutation_repeats, cfg.models.seed)?;
        let ranking = r.ranking();
        let method = serde_json::to_value(r.method)?.as_str().unwrap_or_default().to_string();
        for (j, name) in FEATURE_NAMES.iter().enumerate() {
            let rank = ranking.iter().position(|&k| k == j).expect("every feature ranked") + 1;
            w.write_record([kind.name(), &method, name, &r.importances[j].to_string(), &rank.to_string()])?;
        }
        writeln!(out, "{kind} ({method}): top feature {}", FEATURE_NAMES[ranking[0]])?;
        all.insert(kind.name().to_string(), r);
    }
    w.flush()?;
    let json_path = cfg.output_dir.join("importance.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&all)?)?;
    let sidecar = Sidecar::new("importance", cfg)
        .seed("permutation", cfg.models.seed)
        .input(&cfg.split_path())?;
    sidecar.write_for(&path)?;
    sidecar.write_for(&json_path)?;
    Ok(())
}

fn read_train_times(dir: &Path) -> BTreeMap<String, f64> {
    let mut times = BTreeMap::new();
    if let Ok(mut r) = csv::Reader::from_path(dir.join("train_timing.csv")) {
        for rec in r.records().flatten() {
            if let (Some(m), Some(Ok(ms))) = (rec.get(0), rec.get(2).map(str::parse::<f64>)) {
                times.insert(m.to_string(), ms);
            }
        }
    }
    times
}

pub fn cmd_bench(cfg: &RunConfig, out: &mut impl Write) -> anyhow::Result<()> {
    let ds = load_split(cfg)?;
    let models = load_models(cfg)?;
    let (curves, _) = cfg.curves()?;
    let grid = ScenarioGrid::new(ds.provenance.scenarios.clone())?;
    let lsmc = LsmcConfig {
        n_paths: cfg.bench.n_paths,
        ..ds.provenance.lsmc.clone()
    };
    let (x, _) = ds.design(None);
    let x = Array2::from(x);
    let train_times = read_train_times(&cfg.models_dir());
    let bench: Vec<BenchModel<'_>> = models
        .iter()
        .map(|(k, p)| BenchModel {
            name: k.name().into(),
            pipeline: p,
            train_ms: train_times.get(k.name()).copied(),
        })
        .collect();
    let rows = timing_benchmark(&bench, &ds.provenance.specs, &grid, &curves, &lsmc, x.view(), cfg.bench.repeats)?;
    let path = cfg.output_dir.join("timing.csv");
    write_timing_csv(&rows, std::fs::File::create(&path)?)?;
    Sidecar::new("bench", cfg)
        .seed("lsmc", lsmc.seed)
        .input(&cfg.split_path())?
        .write_for(&path)?;
    for r in &rows {
        writeln!(out, "{} {}: {:.3} ms for {} rows", r.route, r.model, r.predict_ms, r.n_rows)?;
    }
    Ok(())
}
