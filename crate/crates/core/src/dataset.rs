//! Feature/target dataset for the pricing surrogates.
//!
//! One row per `(spec, scenario)` cell: six contract and market features and
//! the LSMC Bermudan price as target. Model parameters are not features.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{max_european, BermudanSpec, Side, DEFAULT_NOTIONAL, NO_CALLS, STRIKE_OFFSETS_BP, TENORS};
use crate::error::{Error, Result};
use crate::g1pp::{BondPortfolio, G1ppParams, PathSet, ScenarioGrid};
use crate::lsmc::{cell_seed, BermudanPricer, LsmcConfig};
use crate::market_data::{MarketCurves, SwapLegs};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_BINS: usize = 5;
const DESK_SEED: u64 = 434;
const ROUNDING_SPREAD: f64 = 1e-13;

pub const CSV_HEADER: [&str; 10] = [
    "spec_id",
    "scenario_id",
    "tenor",
    "strike_bp",
    "side_payer",
    "no_call",
    "corr",
    "max_euro",
    "target",
    "split",
];

/// Feature columns in model-input order.
pub const FEATURE_NAMES: [&str; 6] = ["tenor", "strike_bp", "side_payer", "no_call", "corr", "max_euro"];

/// Values each basket dimension ranges over, optionally filtered by an
/// explicit include list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasketConfig {
    pub sides: Vec<Side>,
    pub no_calls: Vec<u32>,
    pub tenors: Vec<u32>,
    pub strike_offsets_bp: Vec<i32>,
    #[serde(default)]
    pub include: Option<Vec<BasketEntry>>,
    #[serde(default = "default_notional")]
    pub notional: f64,
}

fn default_notional() -> f64 {
    DEFAULT_NOTIONAL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasketEntry {
    pub side: Side,
    pub no_call: u32,
    pub tenor: u32,
    pub strike_bp: i32,
}

impl Default for BasketConfig {
    fn default() -> Self {
        BasketConfig {
            sides: vec![Side::Payer, Side::Receiver],
            no_calls: NO_CALLS.to_vec(),
            tenors: TENORS.to_vec(),
            strike_offsets_bp: STRIKE_OFFSETS_BP.to_vec(),
            include: None,
            notional: DEFAULT_NOTIONAL,
        }
    }
}

impl BasketConfig {
    /// Fixed pseudo-random subset of the full product, in product order.
    pub fn desk(n_specs: usize) -> Result<Vec<BermudanSpec>> {
        let full = build_basket(&BasketConfig::default())?;
        if n_specs == 0 || n_specs > full.len() {
            return Err(Error::Config(format!("desk basket size must be in 1..={}", full.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(DESK_SEED);
        let mut picked = rand::seq::index::sample(&mut rng, full.len(), n_specs).into_vec();
        picked.sort_unstable();
        Ok(picked.into_iter().map(|i| full[i]).collect())
    }
}

/// Reads an include list with columns `side,no_call,tenor,strike_bp`.
pub fn read_include_list<R: Read>(reader: R, source_name: &str) -> Result<Vec<BasketEntry>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<BasketEntry>().enumerate() {
        out.push(rec.map_err(|e| Error::format(source_name, format!("row {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub fn build_basket(config: &BasketConfig) -> Result<Vec<BermudanSpec>> {
    let check = |ok: bool, what: String| if ok { Ok(()) } else { Err(Error::Config(what)) };
    for t in &config.tenors {
        check(TENORS.contains(t), format!("tenor {t} not in {TENORS:?}"))?;
    }
    for n in &config.no_calls {
        check(NO_CALLS.contains(n), format!("no-call {n} not in {NO_CALLS:?}"))?;
    }
    for k in &config.strike_offsets_bp {
        check(STRIKE_OFFSETS_BP.contains(k), format!("strike offset {k} not in {STRIKE_OFFSETS_BP:?}"))?;
    }
    check(config.notional.is_finite() && config.notional > 0.0, "notional must be positive".into())?;

    let include: Option<BTreeSet<BasketEntry>> = match &config.include {
        None => None,
        Some(list) => {
            for e in list {
                BermudanSpec::new(e.side, e.no_call, e.tenor, e.strike_bp).map_err(|err| Error::Config(err.to_string()))?;
            }
            Some(list.iter().copied().collect())
        }
    };

    let mut specs = Vec::new();
    for &side in &config.sides {
        for &no_call in &config.no_calls {
            for &tenor in &config.tenors {
                for &strike_bp in &config.strike_offsets_bp {
                    let entry = BasketEntry {
                        side,
                        no_call,
                        tenor,
                        strike_bp,
                    };
                    if include.as_ref().is_some_and(|set| !set.contains(&entry)) {
                        continue;
                    }
                    specs.push(BermudanSpec {
                        side,
                        no_call,
                        tenor,
                        strike_offset_bp: strike_bp,
                        notional: config.notional,
                    });
                }
            }
        }
    }
    if specs.is_empty() {
        return Err(Error::Config("basket configuration selects no instruments".into()));
    }
    Ok(specs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub value: f64,
    /// Set when either rate has zero sample variance and `value` is the
    /// conventional 1.
    pub degenerate: bool,
}

/// Co-terminal par swap rate seen at `year` as a function of the factor.
struct SwapRateAt {
    floating: BondPortfolio,
    payer_unit: BondPortfolio,
}

impl SwapRateAt {
    fn new(spec: &BermudanSpec, params: &G1ppParams, curves: &MarketCurves, year: u32) -> Result<Self> {
        let legs = SwapLegs::new(curves, 12 * year, 12 * (spec.maturity() - year))?;
        let t = legs.start_time;
        Ok(SwapRateAt {
            floating: BondPortfolio::new(params, &curves.discount, t, &legs.payer_coefficients(0.0)),
            payer_unit: BondPortfolio::new(params, &curves.discount, t, &legs.payer_coefficients(1.0)),
        })
    }

    fn rate(&self, x: f64) -> f64 {
        let float = self.floating.value(x);
        float / (float - self.payer_unit.value(x))
    }
}

/// Correlation between the co-terminal swap rates at the first and last
/// exercise dates of `spec`.
pub fn swap_rate_correlation(
    spec: &BermudanSpec,
    params: &G1ppParams,
    paths: &PathSet,
    curves: &MarketCurves,
) -> Result<Correlation> {
    let years = spec.exercise_years();
    if years.len() < 2 {
        return Err(Error::Domain("correlation needs at least two exercise dates".into()));
    }
    swap_rate_correlation_between(spec, params, paths, curves, years[0], years[years.len() - 1])
}

/// Correlation between the co-terminal swap rates entered at `first` and at
/// `second` (years), each observed on its own start date.
pub fn swap_rate_correlation_between(
    spec: &BermudanSpec,
    params: &G1ppParams,
    paths: &PathSet,
    curves: &MarketCurves,
    first: u32,
    second: u32,
) -> Result<Correlation> {
    let mut series = Vec::with_capacity(2);
    for year in [first, second] {
        if year == 0 || year >= spec.maturity() {
            return Err(Error::Domain(format!("year {year} is not a co-terminal start for {spec:?}")));
        }
        let rate = SwapRateAt::new(spec, params, curves, year)?;
        let t = curves.discount.year_fraction(crate::market_data::add_months(curves.anchor(), 12 * year)?);
        let i = paths
            .time_index(t)
            .ok_or_else(|| Error::Domain(format!("paths do not contain year {year} (t = {t})")))?;
        series.push(paths.states_at(i).par_iter().map(|&x| rate.rate(x)).collect::<Vec<f64>>());
    }
    Ok(pearson(&series[0], &series[1]))
}

/// Pearson correlation; 1 with a flag when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Correlation {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    // Spread at rounding level of the mean counts as no spread.
    let flat = |ss: f64, m: f64| !(ss.sqrt() > ROUNDING_SPREAD * n.sqrt() * m.abs());
    if flat(saa, ma) || flat(sbb, mb) {
        return Correlation {
            value: 1.0,
            degenerate: true,
        };
    }
    Correlation {
        value: (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub spec_id: usize,
    pub scenario_id: usize,
    pub tenor: u32,
    pub strike_bp: i32,
    pub side_payer: u8,
    pub no_call: u32,
    pub corr: f64,
    pub max_euro: f64,
    pub target: f64,
    pub split: Option<SplitTag>,
}

impl FeatureRow {
    pub fn features(&self) -> [f64; 6] {
        [
            self.tenor as f64,
            self.strike_bp as f64,
            self.side_payer as f64,
            self.no_call as f64,
            self.corr,
            self.max_euro,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub spec_id: usize,
    pub scenario_id: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitProvenance {
    pub seed: u64,
    pub train_fraction: f64,
    pub n_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub format_version: u32,
    pub curve_sources: Vec<String>,
    pub specs: Vec<BermudanSpec>,
    pub scenarios: Vec<G1ppParams>,
    pub lsmc: LsmcConfig,
    pub failures: Vec<CellFailure>,
    /// Cells whose target fell below the European lower bound by more than
    /// three standard errors.
    pub lower_bound_violations: usize,
    /// Cells where the correlation fell back to 1.
    pub degenerate_correlations: usize,
    pub split: Option<SplitProvenance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<FeatureRow>,
    pub provenance: DatasetProvenance,
}

struct Cell {
    row: FeatureRow,
    std_error: f64,
    degenerate: bool,
}

/// Prices every `(spec, scenario)` cell and assembles the feature rows.
/// Cells are computed in parallel; rows come out in `(spec_id, scenario_id)`
/// order.
pub fn generate(
    basket: &[BermudanSpec],
    grid: &ScenarioGrid,
    curves: &MarketCurves,
    lsmc: &LsmcConfig,
    curve_sources: Vec<String>,
) -> Result<Dataset> {
    if basket.is_empty() || grid.is_empty() {
        return Err(Error::Config("basket and scenario grid must be non-empty".into()));
    }
    lsmc.validate()?;
    let cells: Vec<(usize, usize)> = (0..basket.len())
        .flat_map(|s| (0..grid.len()).map(move |g| (s, g)))
        .collect();
    let outcomes: Vec<std::result::Result<Cell, CellFailure>> = cells
        .par_iter()
        .map(|&(spec_id, scenario_id)| {
            let cfg = LsmcConfig {
                seed: cell_seed(lsmc.seed, spec_id * grid.len() + scenario_id),
                ..lsmc.clone()
            };
            generate_cell(&basket[spec_id], &grid.scenarios[scenario_id], curves, &cfg, spec_id, scenario_id).map_err(
                |e| CellFailure {
                    spec_id,
                    scenario_id,
                    message: e.to_string(),
                },
            )
        })
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    let mut violations = 0;
    let mut degenerate = 0;
    for outcome in outcomes {
        match outcome {
            Ok(cell) => {
                if cell.row.target + 3.0 * cell.std_error < cell.row.max_euro {
                    violations += 1;
                    warn!(
                        "cell ({}, {}): LSMC {} +/- {} below max European {}",
                        cell.row.spec_id, cell.row.scenario_id, cell.row.target, cell.std_error, cell.row.max_euro
                    );
                }
                degenerate += cell.degenerate as usize;
                rows.push(cell.row);
            }
            Err(f) => {
                warn!("cell ({}, {}) failed: {}", f.spec_id, f.scenario_id, f.message);
                failures.push(f);
            }
        }
    }
    Ok(Dataset {
        rows,
        provenance: DatasetProvenance {
            format_version: DATASET_FORMAT_VERSION,
            curve_sources,
            specs: basket.to_vec(),
            scenarios: grid.scenarios.clone(),
            lsmc: lsmc.clone(),
            failures,
            lower_bound_violations: violations,
            degenerate_correlations: degenerate,
            split: None,
        },
    })
}

fn generate_cell(
    spec: &BermudanSpec,
    params: &G1ppParams,
    curves: &MarketCurves,
    cfg: &LsmcConfig,
    spec_id: usize,
    scenario_id: usize,
) -> Result<Cell> {
    let pricer = BermudanPricer::new(spec, params, curves)?;
    let paths = pricer.simulate(curves, cfg)?;
    let result = pricer.price_paths(&paths, cfg)?;
    let corr = swap_rate_correlation(spec, params, &paths, curves)?;
    let max_euro = max_european(spec, params, curves)?;
    Ok(Cell {
        row: FeatureRow {
            spec_id,
            scenario_id,
            tenor: spec.tenor,
            strike_bp: spec.strike_offset_bp,
            side_payer: spec.side.is_payer() as u8,
            no_call: spec.no_call,
            corr: corr.value,
            max_euro,
            target: result.price,
            split: None,
        },
        std_error: result.std_error,
        degenerate: corr.degenerate,
    })
}

/// Tags rows train/test so that each `max_euro` quantile bin keeps the
/// global train fraction. Bins with fewer than two rows are merged into a
/// neighbour.
pub fn stratified_split(dataset: &Dataset, train_fraction: f64, n_bins: usize, seed: u64) -> Result<Dataset> {
    let n = dataset.rows.len();
    if n_bins < 2 {
        return Err(Error::Config("stratified split needs at least 2 bins".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    if n < 4 {
        return Err(Error::Config(format!("{n} rows are too few to split")));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| dataset.rows[i].max_euro.total_cmp(&dataset.rows[j].max_euro).then(i.cmp(&j)));
    let mut bins: Vec<Vec<usize>> = (0..n_bins)
        .map(|b| order[b * n / n_bins..(b + 1) * n / n_bins].to_vec())
        .collect();
    merge_small_bins(&mut bins);

    let quotas = allocate_train(&bins.iter().map(Vec::len).collect::<Vec<_>>(), train_fraction, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = dataset.clone();
    for (bin, quota) in bins.iter_mut().zip(quotas) {
        bin.shuffle(&mut rng);
        for (k, &row) in bin.iter().enumerate() {
            out.rows[row].split = Some(if k < quota { SplitTag::Train } else { SplitTag::Test });
        }
    }
    out.provenance.split = Some(SplitProvenance {
        seed,
        train_fraction,
        n_bins,
    });
    Ok(out)
}

fn merge_small_bins(bins: &mut Vec<Vec<usize>>) {
    while bins.len() > 1 {
        let Some(b) = bins.iter().position(|bin| bin.len() < 2) else {
            break;
        };
        warn!("stratification bin {b} has {} rows; merging with a neighbour", bins[b].len());
        let small = bins.remove(b);
        let target = if b < bins.len() { b } else { b - 1 };
        if target < b {
            bins[target].extend(small);
        } else {
            let mut merged = small;
            merged.extend(std::mem::take(&mut bins[target]));
            bins[target] = merged;
        }
    }
}

/// Largest-remainder allocation of `round(fraction * n)` train rows, keeping
/// at least one train and one test row per bin.
fn allocate_train(sizes: &[usize], fraction: f64, n: usize) -> Result<Vec<usize>> {
    let total = (fraction * n as f64).round() as usize;
    let ideal: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut quota: Vec<usize> = ideal
        .iter()
        .zip(sizes)
        .map(|(&q, &s)| (q.floor() as usize).clamp(1, s - 1))
        .collect();
    let mut by_remainder: Vec<usize> = (0..sizes.len()).collect();
    by_remainder.sort_by(|&i, &j| {
        let ri = ideal[i] - quota[i] as f64;
        let rj = ideal[j] - quota[j] as f64;
        rj.total_cmp(&ri).then(i.cmp(&j))
    });
    let mut assigned: usize = quota.iter().sum();
    while assigned < total {
        let Some(&b) = by_remainder.iter().find(|&&b| quota[b] < sizes[b] - 1) else {
            break;
        };
        quota[b] += 1;
        assigned += 1;
        by_remainder.retain(|&x| x != b);
        by_remainder.push(b);
    }
    while assigned > total {
        let Some(&b) = by_remainder.iter().rev().find(|&&b| quota[b] > 1) else {
            break;
        };
        quota[b] -= 1;
        assigned -= 1;
        by_remainder.retain(|&x| x != b);
        by_remainder.insert(0, b);
    }
    if assigned != total {
        return Err(Error::Config(format!("cannot place {total} train rows across bins {sizes:?}")));
    }
    Ok(quota)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows_with(&self, tag: SplitTag) -> impl Iterator<Item = &FeatureRow> {
        self.rows.iter().filter(move |r| r.split == Some(tag))
    }

    /// Features and targets of the rows carrying `tag`, row-major.
    pub fn design(&self, tag: Option<SplitTag>) -> (Vec<[f64; 6]>, Vec<f64>) {
        self.rows
            .iter()
            .filter(|r| tag.is_none() || r.split == tag)
            .map(|r| (r.features(), r.target))
            .unzip()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let split = match r.split {
                Some(SplitTag::Train) => "train",
                Some(SplitTag::Test) => "test",
                None => "",
            };
            w.write_record(&[
                r.spec_id.to_string(),
                r.scenario_id.to_string(),
                r.tenor.to_string(),
                r.strike_bp.to_string(),
                r.side_payer.to_string(),
                r.no_call.to_string(),
                r.corr.to_string(),
                r.max_euro.to_string(),
                r.target.to_string(),
                split.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<dataset csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, source_name: &str, provenance: DatasetProvenance) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(Error::format(source_name, format!("expected header {}", CSV_HEADER.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::format(source_name, format!("row {}: bad {what}", i + 1));
            let field = |k: usize| rec.get(k).unwrap_or("");
            let split = match field(9) {
                "train" => Some(SplitTag::Train),
                "test" => Some(SplitTag::Test),
                "" => None,
                _ => return Err(bad("split")),
            };
            let row = FeatureRow {
                spec_id: field(0).parse().map_err(|_| bad("spec_id"))?,
                scenario_id: field(1).parse().map_err(|_| bad("scenario_id"))?,
                tenor: field(2).parse().map_err(|_| bad("tenor"))?,
                strike_bp: field(3).parse().map_err(|_| bad("strike_bp"))?,
                side_payer: field(4).parse().map_err(|_| bad("side_payer"))?,
                no_call: field(5).parse().map_err(|_| bad("no_call"))?,
                corr: field(6).parse().map_err(|_| bad("corr"))?,
                max_euro: field(7).parse().map_err(|_| bad("max_euro"))?,
                target: field(8).parse().map_err(|_| bad("target"))?,
                split,
            };
            if row.side_payer > 1 || !(-1.0..=1.0).contains(&row.corr) || !(row.max_euro >= 0.0) || !(row.target >= 0.0)
            {
                return Err(bad("value range"));
            }
            rows.push(row);
        }
        Ok(Dataset { rows, provenance })
    }

    /// Writes `path` and its JSON provenance sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(&self.provenance)?;
        std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let sidecar = sidecar_path(path);
        let json = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let provenance: DatasetProvenance = serde_json::from_str(&json)?;
        if provenance.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::format(
                sidecar.display().to_string(),
                format!("unsupported format_version {}", provenance.format_version),
            ));
        }
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string(), provenance)
    }
}

/// `data.csv` -> `data.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}
