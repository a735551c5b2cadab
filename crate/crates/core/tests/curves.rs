use std::path::PathBuf;

use bermudan_core::g1pp::{zcb_price, G1ppParams, STANDARD_SCENARIOS};
use bermudan_core::market_data::{eur_2019_anchor, forward_swap_rate_on, load_curve, CurveRole, MarketCurves};
use chrono::{Months, NaiveDate};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

#[test]
fn pillar_discount_factor_by_hand() {
    let curve = load_curve(data("eonia_ois.csv"), CurveRole::Discount).unwrap();
    // 2019-10-31 -> 2024-11-04 is 1831 days.
    let tau = 1831.0 / 365.0;
    let expected = (0.0043445f64 * tau).exp();
    let date = NaiveDate::from_ymd_opt(2024, 11, 4).unwrap();
    let t = curve.year_fraction(date);
    assert_eq!(t, tau);
    assert!((curve.zero_rate(t).unwrap() + 0.0043445).abs() < 1e-16);
    let df = curve.discount_factor(t).unwrap();
    assert!((df / expected - 1.0).abs() < 1e-14, "{df} vs {expected}");
}

#[test]
fn bundled_curves_match_data_files() {
    let bundled = MarketCurves::eur_2019();
    let ois = load_curve(data("eonia_ois.csv"), CurveRole::Discount).unwrap();
    let euribor = load_curve(data("euribor_6m.csv"), CurveRole::Forwarding).unwrap();
    assert_eq!(bundled.discount, ois);
    assert_eq!(bundled.forwarding, euribor);
    assert_eq!(ois.len(), 62);
}

#[test]
fn model_bonds_reprice_every_pillar() {
    let curves = MarketCurves::eur_2019();
    for (a, sigma) in STANDARD_SCENARIOS {
        let params = G1ppParams::new(a, sigma).unwrap();
        for (_, t, _) in curves.discount.pillars() {
            let market = curves.discount.discount_factor(t).unwrap();
            let model = zcb_price(&params, &curves.discount, 0.0, t, 0.0).unwrap();
            assert!((model / market - 1.0).abs() < 1e-12, "t = {t}: {model} vs {market}");
        }
    }
}

/// Straight re-implementation from the raw files: zero rates linear in
/// ACT/365 time, flat outside the pillars.
struct RawCurve {
    points: Vec<(f64, f64)>,
}

impl RawCurve {
    fn read(name: &str) -> Self {
        let anchor = eur_2019_anchor();
        let text = std::fs::read_to_string(data(name)).unwrap();
        let points = text
            .lines()
            .skip(1)
            .filter(|l| !l.trim().is_empty())
            .map(|line| {
                let (d, r) = line.split_once(',').unwrap();
                let dmy: Vec<u32> = d.split('/').map(|v| v.parse().unwrap()).collect();
                let date = NaiveDate::from_ymd_opt(2000 + dmy[2] as i32, dmy[1], dmy[0]).unwrap();
                let t = (date - anchor).num_days() as f64 / 365.0;
                (t, r.trim().parse::<f64>().unwrap() / 100.0)
            })
            .collect();
        RawCurve { points }
    }

    fn df(&self, t: f64) -> f64 {
        let p = &self.points;
        let z = if t <= p[0].0 {
            p[0].1
        } else if t >= p[p.len() - 1].0 {
            p[p.len() - 1].1
        } else {
            let k = p.windows(2).position(|w| t >= w[0].0 && t < w[1].0).unwrap();
            let (t0, z0) = p[k];
            let (t1, z1) = p[k + 1];
            z0 + (z1 - z0) * (t - t0) / (t1 - t0)
        };
        (-z * t).exp()
    }
}

fn thirty_360(d1: NaiveDate, d2: NaiveDate) -> f64 {
    use chrono::Datelike;
    let day1 = d1.day().min(30);
    let day2 = if d2.day() == 31 && day1 == 30 { 30 } else { d2.day() };
    (360 * (d2.year() - d1.year()) + 30 * (d2.month() as i32 - d1.month() as i32) + day2 as i32 - day1 as i32) as f64
        / 360.0
}

#[test]
fn five_into_five_forward_rate_matches_raw_reimplementation() {
    let ois = RawCurve::read("eonia_ois.csv");
    let euribor = RawCurve::read("euribor_6m.csv");
    let anchor = eur_2019_anchor();
    let time = |d: NaiveDate| (d - anchor).num_days() as f64 / 365.0;
    let at = |m: u32| anchor.checked_add_months(Months::new(m)).unwrap();

    let mut annuity = 0.0;
    for k in 1..=5 {
        annuity += thirty_360(at(60 + 12 * (k - 1)), at(60 + 12 * k)) * ois.df(time(at(60 + 12 * k)));
    }
    let mut floating = 0.0;
    for j in 1..=10 {
        let (ts, te) = (time(at(60 + 6 * (j - 1))), time(at(60 + 6 * j)));
        floating += ois.df(te) * (euribor.df(ts) / euribor.df(te) - 1.0);
    }
    let oracle = floating / annuity;

    let rate = forward_swap_rate_on(&MarketCurves::eur_2019(), 5.0, 5.0).unwrap();
    assert!((rate - oracle).abs() < 1e-14, "{rate} vs {oracle}");
    // Sanity: late-2019 EUR 5y5y sits slightly above zero.
    assert!(rate > -0.005 && rate < 0.01, "{rate}");
}
