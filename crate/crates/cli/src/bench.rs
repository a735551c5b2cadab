//! Wall-clock comparison of LSMC batch pricing and surrogate prediction.

use std::io::Write;
use std::time::Instant;

use bermudan_core::analytic::BermudanSpec;
use bermudan_core::g1pp::ScenarioGrid;
use bermudan_core::lsmc::{price_basket, LsmcConfig};
use bermudan_core::market_data::MarketCurves;
use bermudan_ml::Pipeline;
use ndarray::ArrayView2;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub route: String,
    pub model: String,
    pub train_ms: Option<f64>,
    pub predict_ms: f64,
    pub n_rows: usize,
}

pub struct BenchModel<'a> {
    pub name: String,
    pub pipeline: &'a Pipeline,
    pub train_ms: Option<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One LSMC row for the whole `specs x grid` basket, then one row per model
/// with the median of `repeats` batch predictions over `features`.
pub fn timing_benchmark(
    models: &[BenchModel<'_>],
    specs: &[BermudanSpec],
    grid: &ScenarioGrid,
    curves: &MarketCurves,
    lsmc: &LsmcConfig,
    features: ArrayView2<f64>,
    repeats: usize,
) -> anyhow::Result<Vec<TimingRow>> {
    let started = Instant::now();
    let cells = price_basket(specs, grid, curves, lsmc)?;
    let lsmc_ms = started.elapsed().as_secs_f64() * 1e3;
    if let Some(bad) = cells.iter().find(|c| c.result.is_err()) {
        log::warn!("LSMC cell ({}, {}) failed during benchmark", bad.spec_id, bad.scenario_id);
    }
    let mut rows = vec![TimingRow {
        route: "lsmc".into(),
        model: "lsmc".into(),
        train_ms: None,
        predict_ms: lsmc_ms,
        n_rows: cells.len(),
    }];
    for m in models {
        let times = (0..repeats.max(1))
            .map(|_| {
                let t = Instant::now();
                let out = m.pipeline.predict(features)?;
                std::hint::black_box(out);
                Ok(t.elapsed().as_secs_f64() * 1e3)
            })
            .collect::<anyhow::Result<Vec<f64>>>()?;
        rows.push(TimingRow {
            route: "surrogate".into(),
            model: m.name.clone(),
            train_ms: m.train_ms,
            predict_ms: median(times),
            n_rows: features.nrows(),
        });
    }
    Ok(rows)
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], writer: W) -> anyhow::Result<()> {
    let lsmc = rows.iter().find(|r| r.route == "lsmc").map(|r| r.predict_ms);
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["route", "model", "train_ms", "predict_ms", "n_rows", "speedup_vs_lsmc"])?;
    for r in rows {
        let speedup = lsmc.map_or(String::new(), |l| format!("{}", l / r.predict_ms));
        w.write_record([
            r.route.clone(),
            r.model.clone(),
            r.train_ms.map_or(String::new(), |t| t.to_string()),
            r.predict_ms.to_string(),
            r.n_rows.to_string(),
            speedup,
        ])?;
    }
    w.flush()?;
    Ok(())
}
