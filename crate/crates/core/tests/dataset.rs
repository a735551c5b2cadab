use bermudan_core::analytic::{BermudanSpec, Side};
use bermudan_core::dataset::{
    generate, stratified_split, swap_rate_correlation, swap_rate_correlation_between, BasketConfig, SplitTag,
    FEATURE_NAMES,
};
use bermudan_core::g1pp::{simulate, G1ppParams, ScenarioGrid};
use bermudan_core::lsmc::{BermudanPricer, LsmcConfig};
use bermudan_core::market_data::MarketCurves;

/// Correlation of x(s) and x(t) for the OU factor started at 0.
fn ou_correlation(a: f64, s: f64, t: f64) -> f64 {
    let v = |u: f64| -(-2.0 * a * u).exp_m1() / (2.0 * a);
    (-a * (t - s)).exp() * (v(s) / v(t)).sqrt()
}

#[test]
fn rate_against_itself_is_perfectly_correlated() {
    let curves = MarketCurves::eur_2019();
    let params = G1ppParams::new(0.03, 0.02).unwrap();
    let spec = BermudanSpec::new(Side::Payer, 5, 10, 0).unwrap();
    let pricer = BermudanPricer::new(&spec, &params, &curves).unwrap();
    let paths = pricer.simulate(&curves, &LsmcConfig::with_paths(2_000, 1)).unwrap();
    let c = swap_rate_correlation_between(&spec, &params, &paths, &curves, 7, 7).unwrap();
    assert!((c.value - 1.0).abs() < 1e-12 && !c.degenerate);
}

#[test]
fn fast_mean_reversion_decorrelates() {
    let curves = MarketCurves::eur_2019();
    let params = G1ppParams::new(5.0, 0.01).unwrap();
    let spec = BermudanSpec::new(Side::Payer, 1, 20, 0).unwrap();
    let t1 = curves.discount.year_fraction(curves.anchor().checked_add_months(chrono::Months::new(12)).unwrap());
    let t14 = curves.discount.year_fraction(curves.anchor().checked_add_months(chrono::Months::new(168)).unwrap());
    let n = 50_000;
    let paths = simulate(&params, &curves.discount, &[0.0, t1, t14], n, 5).unwrap();
    let c = swap_rate_correlation_between(&spec, &params, &paths, &curves, 1, 14).unwrap();
    let oracle = ou_correlation(5.0, t1, t14);
    assert!(oracle < 1e-20);
    assert!((c.value - oracle).abs() < 4.0 / (n as f64).sqrt(), "{}", c.value);
}

#[test]
fn correlation_feature_tracks_the_ou_factor() {
    let curves = MarketCurves::eur_2019();
    let params = G1ppParams::new(0.03, 0.02).unwrap();
    let spec = BermudanSpec::new(Side::Payer, 10, 5, 0).unwrap();
    let pricer = BermudanPricer::new(&spec, &params, &curves).unwrap();
    let paths = pricer.simulate(&curves, &LsmcConfig::with_paths(50_000, 3)).unwrap();
    let c = swap_rate_correlation(&spec, &params, &paths, &curves).unwrap();
    let times = pricer.exercise_times();
    let oracle = ou_correlation(0.03, times[0], times[times.len() - 1]);
    assert!((c.value - oracle).abs() < 0.05, "{} vs {oracle}", c.value);
}

#[test]
fn single_date_schedule_has_no_correlation() {
    let curves = MarketCurves::eur_2019();
    let params = G1ppParams::new(0.03, 0.02).unwrap();
    let mut spec = BermudanSpec::new(Side::Payer, 5, 2, 0).unwrap();
    spec.tenor = 1;
    let paths = simulate(&params, &curves.discount, &[0.0, 5.0], 100, 1).unwrap();
    assert!(swap_rate_correlation(&spec, &params, &paths, &curves).is_err());
}

#[test]
fn vanishing_volatility_flags_degenerate_correlation() {
    let curves = MarketCurves::eur_2019();
    let params = G1ppParams::new(0.03, 1e-300).unwrap();
    let spec = BermudanSpec::new(Side::Payer, 2, 5, 0).unwrap();
    let pricer = BermudanPricer::new(&spec, &params, &curves).unwrap();
    let paths = pricer.simulate(&curves, &LsmcConfig::with_paths(200, 1)).unwrap();
    let c = swap_rate_correlation(&spec, &params, &paths, &curves).unwrap();
    assert!(c.degenerate);
    assert_eq!(c.value, 1.0);
}

#[test]
fn one_cell_dataset_is_fully_populated() {
    let curves = MarketCurves::eur_2019();
    let spec = BermudanSpec::new(Side::Receiver, 3, 5, 20).unwrap();
    let grid = ScenarioGrid::new(vec![G1ppParams::new(0.03, 0.02).unwrap()]).unwrap();
    let ds = generate(&[spec], &grid, &curves, &LsmcConfig::with_paths(5_000, 2), vec![]).unwrap();
    assert_eq!(ds.len(), 1);
    let r = &ds.rows[0];
    assert_eq!((r.tenor, r.strike_bp, r.side_payer, r.no_call), (5, 20, 0, 3));
    assert!(r.corr > 0.0 && r.corr <= 1.0);
    assert!(r.max_euro > 0.0 && r.target > 0.0);
    assert!(ds.provenance.failures.is_empty());
}

#[test]
fn generated_rows_respect_the_european_bound_and_vary() {
    let curves = MarketCurves::eur_2019();
    let basket = BasketConfig::desk(12).unwrap();
    let ds = generate(&basket, &ScenarioGrid::standard(), &curves, &LsmcConfig::with_paths(4_000, 6), vec![]).unwrap();
    assert_eq!(ds.len(), 120);
    assert_eq!(ds.provenance.lower_bound_violations, 0);
    let (x, _) = ds.design(None);
    for (j, name) in FEATURE_NAMES.iter().enumerate() {
        let first = x[0][j];
        assert!(x.iter().any(|row| row[j] != first), "{name} is constant");
    }
}

#[test]
fn generation_is_reproducible_across_worker_counts() {
    let curves = MarketCurves::eur_2019();
    let basket = BasketConfig::desk(4).unwrap();
    let grid = ScenarioGrid::new(ScenarioGrid::standard().scenarios[..3].to_vec()).unwrap();
    let cfg = LsmcConfig::with_paths(2_000, 12);
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let ds = pool.install(|| generate(&basket, &grid, &curves, &cfg, vec![]).unwrap());
        let ds = stratified_split(&ds, 0.8, 2, 1).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        buf
    };
    let one = csv(1);
    assert_eq!(one, csv(8));
    assert_eq!(one, csv(1));
}

#[test]
fn split_of_generated_rows_is_stratified() {
    let curves = MarketCurves::eur_2019();
    let basket = BasketConfig::desk(10).unwrap();
    let ds = generate(&basket, &ScenarioGrid::standard(), &curves, &LsmcConfig::with_paths(2_000, 1), vec![]).unwrap();
    let split = stratified_split(&ds, 0.8, 5, 42).unwrap();
    assert_eq!(split.rows_with(SplitTag::Train).count(), 80);
    assert_eq!(split.rows_with(SplitTag::Test).count(), 20);
}
