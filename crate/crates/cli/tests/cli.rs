//! End-to-end checks of the `bermudan` binary and the pipeline helpers.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bermudan_cli::bench::{timing_benchmark, BenchModel};
use bermudan_cli::commands::test_design;
use bermudan_cli::{exit_code, UsageError, EXIT_USAGE};
use bermudan_core::analytic::{atm_strike, european_price_g1pp, max_european, BermudanSpec, Side};
use bermudan_core::dataset::{FeatureRow, SplitTag};
use bermudan_core::g1pp::{G1ppParams, ScenarioGrid};
use bermudan_core::lsmc::LsmcConfig;
use bermudan_core::market_data::MarketCurves;
use bermudan_ml::{ModelKind, ModelSpec, Pipeline};
use ndarray::{Array1, Array2};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bermudan"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

/// Second line of a two-line CSV answer, split on commas.
fn record(out: &str) -> Vec<String> {
    out.lines().nth(1).expect("data row").split(',').map(String::from).collect()
}

#[test]
fn curve_reports_every_pillar() {
    let file = data("eonia_ois.csv");
    let out = ok(&["curve", "--file", file.to_str().unwrap()]);
    assert!(out.lines().next().unwrap().ends_with("pillars 62"), "{out}");
    assert_eq!(out.lines().count(), 2 + 62);
}

#[test]
fn curve_at_matches_library() {
    let out = ok(&["curve", "--at", "5.0"]);
    let row: Vec<&str> = out.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "5");
    let lib = MarketCurves::eur_2019().discount.discount_factor(5.0).unwrap();
    assert_eq!(row[2].parse::<f64>().unwrap(), lib);
}

#[test]
fn missing_curve_file_is_a_usage_error() {
    let o = run(&["curve", "--file", "/nonexistent/curve.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
}

#[test]
fn invalid_domain_values_name_the_allowed_set() {
    let o = run(&["price", "bermudan", "--side", "payer", "--no-call", "6", "--tenor", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[1, 2, 3, 4, 5, 7, 10, 15, 20]"));
    let o = run(&["price", "european", "--side", "payer", "--expiry", "2", "--tenor", "5", "--sigma", "-0.01"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn european_price_is_deterministic_and_matches_library() {
    let args = ["price", "european", "--side", "receiver", "--expiry", "5", "--tenor", "10", "--strike-bp", "25"];
    let first = ok(&args);
    assert_eq!(first, ok(&args));
    let spec = BermudanSpec::new(Side::Receiver, 5, 10, 25).unwrap();
    let curves = MarketCurves::eur_2019();
    let strike = atm_strike(&spec, &curves).unwrap();
    let lib = european_price_g1pp(&spec.co_terminal_european(5, strike), &G1ppParams::new(0.03, 0.02).unwrap(), &curves)
        .unwrap();
    let cli: f64 = record(&first)[4].parse().unwrap();
    assert!((cli - lib).abs() <= 1e-12 * lib, "{cli} vs {lib}");
}

#[test]
fn bermudan_price_is_deterministic() {
    let args = ["price", "bermudan", "--side", "payer", "--no-call", "2", "--tenor", "5", "--n-paths", "2000", "--seed", "9"];
    assert_eq!(ok(&args), ok(&args));
}

#[test]
fn truncated_bermudan_matches_european() {
    // Exercising only at the first date leaves the no-call x tenor European,
    // whose forward is the Bermudan's ATM.
    let model = ["--a", "0.05", "--sigma", "0.025"];
    for (side, nc, tenor, bp) in [("payer", "3", "10", "-25"), ("receiver", "5", "5", "50")] {
        let mut berm = vec!["price", "bermudan", "--side", side, "--no-call", nc, "--tenor", tenor, "--strike-bp", bp];
        berm.extend(model);
        berm.extend(["--exercise-years", nc, "--n-paths", "20000", "--seed", "5"]);
        let b = record(&ok(&berm));
        let (price, se): (f64, f64) = (b[4].parse().unwrap(), b[5].parse().unwrap());
        assert_eq!(b[7], nc);

        let mut euro = vec!["price", "european", "--side", side, "--expiry", nc, "--tenor", tenor, "--strike-bp", bp];
        euro.extend(model);
        let e = record(&ok(&euro));
        assert_eq!(e[3], b[3], "strikes differ");
        let euro: f64 = e[4].parse().unwrap();
        assert!((price - euro).abs() < 3.0 * se, "{side}: {price} +/- {se} vs {euro}");
    }
}

#[test]
fn bermudan_respects_reported_lower_bound() {
    for (side, nc, tenor, bp) in [("payer", "5", "10", "0"), ("receiver", "10", "20", "-40"), ("receiver", "1", "5", "100")] {
        let out = ok(&[
            "price", "bermudan", "--side", side, "--no-call", nc, "--tenor", tenor, "--strike-bp", bp, "--a", "0.02",
            "--sigma", "0.05", "--n-paths", "10000",
        ]);
        let r = record(&out);
        let (price, se, max_euro): (f64, f64, f64) = (r[4].parse().unwrap(), r[5].parse().unwrap(), r[6].parse().unwrap());
        assert!(price + 3.0 * se >= max_euro, "{side} {nc}x{tenor}: {price} +/- {se} vs {max_euro}");

        let spec = BermudanSpec::new(side.parse().unwrap(), nc.parse().unwrap(), tenor.parse().unwrap(), bp.parse().unwrap())
            .unwrap();
        let lib = max_european(&spec, &G1ppParams::new(0.02, 0.05).unwrap(), &MarketCurves::eur_2019()).unwrap();
        assert!((max_euro - lib).abs() <= 1e-12 * lib);
    }
}

fn smoke_config(dir: &Path) -> PathBuf {
    // A tiny roster keeps the forest and boosting stages cheap.
    let text = r#"
[basket]
desk = 8
[scenarios]
count = 2
[lsmc]
n_paths = 1000
[split]
train_fraction = 0.75
n_bins = 2
[models]
cv_folds = 3
[[models.grid]]
kind = "random_forest"
n_estimators = 20
bootstrap = true
tree = { max_depth = 4, min_samples_leaf = { count = 1 }, max_features = "all" }
[[models.grid]]
kind = "gbrt"
learning_rate = 0.1
n_estimators = 30
tree = { max_depth = 3, min_samples_leaf = { count = 1 }, max_features = "all" }
[[models.grid]]
kind = "mlp"
n_hidden = 1
n_neurons = 8
learning_rate = 0.01
batch_size = 4
epochs = 20
beta1 = 0.9
beta2 = 0.999
epsilon = 1e-8
[[models.grid]]
kind = "knn"
k = 2
[[models.grid]]
kind = "knn"
k = 3
[bench]
n_paths = 1000
repeats = 3
"#;
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn join<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

fn pipeline(dir: &Path, workers: &str) {
    let cfg = smoke_config(dir);
    let base = ["--config", cfg.to_str().unwrap(), "--out-dir", dir.to_str().unwrap(), "--workers", workers];
    for step in [&["dataset", "generate"][..], &["dataset", "split"], &["train"]] {
        let mut args = base.to_vec();
        args.extend_from_slice(step);
        ok(&args);
    }
}

#[test]
fn desk_smoke_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = smoke_config(dir);
    let base = ["--config", cfg.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()];
    let with = |extra: &[&'static str]| join(&base, extra);

    // Downstream steps refuse to run before their inputs exist.
    assert_eq!(run(&with(&["train"])).status.code(), Some(3));
    assert_eq!(run(&with(&["dataset", "split"])).status.code(), Some(3));

    let started = std::time::Instant::now();
    let gen = ok(&with(&["dataset", "generate"]));
    assert!(gen.contains("16 rows (8 specs x 2 scenarios)"), "{gen}");
    ok(&with(&["dataset", "split"]));
    assert_eq!(run(&with(&["evaluate"])).status.code(), Some(3));
    let train = ok(&with(&["train"]));
    assert!(train.contains("knn: cv mse"), "{train}");
    ok(&with(&["evaluate"]));
    ok(&with(&["importance", "--repeats", "2"]));
    ok(&with(&["bench"]));
    assert!(started.elapsed().as_secs() < 300);

    for f in ["dataset.csv", "split.csv", "metrics.csv", "metrics_long.csv", "error_stats.csv", "evaluation.json",
        "importance.csv", "importance.json", "timing.csv"]
    {
        let p = dir.join(f);
        assert!(p.exists(), "{f}");
        let side = bermudan_cli::provenance::Sidecar::read_for(&p).unwrap();
        assert_eq!(side.config_hash.len(), 64);
    }
    for kind in ModelKind::ALL {
        let p = dir.join("models").join(format!("{kind}.json"));
        assert!(p.exists(), "{kind}");
        assert!(dir.join("models").join(format!("{kind}.cv.json")).exists());
        let side = bermudan_cli::provenance::Sidecar::read_for(&p).unwrap();
        assert_eq!(side.seeds.get("model"), Some(&7));
    }
    let knn: bermudan_ml::cv::CvReport =
        serde_json::from_str(&std::fs::read_to_string(dir.join("models/knn.cv.json")).unwrap()).unwrap();
    assert_eq!(knn.grid.len(), 2);
    assert_eq!(knn.k, 3);

    // Metrics cover the four test rows only.
    let metrics = std::fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + ModelKind::ALL.len());
    assert!(metrics.lines().skip(1).all(|l| l.ends_with(",4")), "{metrics}");

    let timing = std::fs::read_to_string(dir.join("timing.csv")).unwrap();
    let rows: Vec<&str> = timing.lines().skip(1).collect();
    assert_eq!(rows.len(), 1 + ModelKind::ALL.len());
    assert_eq!(rows.iter().filter(|r| r.starts_with("lsmc,")).count(), 1);

    // Editing the split makes the trained models stale.
    ok(&with(&["dataset", "split", "--seed", "43"]));
    assert_eq!(run(&with(&["evaluate"])).status.code(), Some(3));
}

#[test]
fn corrupt_model_file_is_a_missing_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = smoke_config(dir);
    let base = ["--config", cfg.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()];
    for step in [&["dataset", "generate"][..], &["dataset", "split"], &["train", "--models", "ridge", "--no-cv"]] {
        let mut a = base.to_vec();
        a.extend_from_slice(step);
        ok(&a);
    }
    let path = dir.join("models/ridge.json");
    let text = std::fs::read_to_string(&path).unwrap().replacen("\"format_version\":1,", "\"format_version\":99,", 1);
    std::fs::write(&path, text).unwrap();
    let mut a = base.to_vec();
    a.extend(["evaluate", "--models", "ridge"]);
    assert_eq!(run(&a).status.code(), Some(3));
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path(), "1");
    pipeline(b.path(), "4");
    let mut files = vec!["dataset.csv".to_string(), "dataset.json".into(), "split.csv".into(), "split.json".into()];
    for kind in ModelKind::ALL {
        files.push(format!("models/{kind}.json"));
        files.push(format!("models/{kind}.cv.json"));
    }
    for f in &files {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

fn row(split: Option<SplitTag>) -> FeatureRow {
    FeatureRow {
        spec_id: 0,
        scenario_id: 0,
        tenor: 5,
        strike_bp: 0,
        side_payer: 1,
        no_call: 2,
        corr: 0.9,
        max_euro: 100.0,
        target: 110.0,
        split,
    }
}

#[test]
fn evaluation_refuses_train_rows() {
    let test = row(Some(SplitTag::Test));
    assert!(test_design(&[&test]).is_ok());
    for bad in [row(Some(SplitTag::Train)), row(None)] {
        let err = test_design(&[&test, &bad]).unwrap_err();
        assert!(err.is::<UsageError>());
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }
}

fn bench_fixture() -> (Vec<BermudanSpec>, ScenarioGrid, Pipeline, Array2<f64>) {
    let specs = vec![
        BermudanSpec::new(Side::Payer, 2, 5, 0).unwrap(),
        BermudanSpec::new(Side::Receiver, 5, 10, 50).unwrap(),
    ];
    let grid = ScenarioGrid::new(vec![G1ppParams::new(0.03, 0.02).unwrap()]).unwrap();
    let n = 4000;
    let x = Array2::from_shape_fn((n, 6), |(i, j)| ((i * 7 + j * 13) % 101) as f64 / 101.0);
    let y = Array1::from_shape_fn(n, |i| x[[i, 5]] * 10.0 + x[[i, 0]]);
    let spec = ModelSpec::Gbrt(bermudan_ml::gbrt::GbrtParams {
        n_estimators: 50,
        ..match ModelSpec::default_for(ModelKind::Gbrt) {
            ModelSpec::Gbrt(p) => p,
            _ => unreachable!(),
        }
    });
    let model = Pipeline::fit(&spec, x.view(), y.view(), 1).unwrap();
    (specs, grid, model, x)
}

#[test]
fn bench_rows_and_ordering() {
    let (specs, grid, model, x) = bench_fixture();
    let curves = MarketCurves::eur_2019();
    let lsmc = LsmcConfig::with_paths(10_000, 1);

    let only = timing_benchmark(&[], &specs, &grid, &curves, &lsmc, x.view(), 3).unwrap();
    assert_eq!(only.len(), 1);
    assert_eq!(only[0].route, "lsmc");
    assert_eq!(only[0].n_rows, 2);

    let models = [BenchModel {
        name: "gbrt".into(),
        pipeline: &model,
        train_ms: Some(1.0),
    }];
    let rows = timing_benchmark(&models, &specs, &grid, &curves, &lsmc, x.view(), 5).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].predict_ms < rows[0].predict_ms, "{rows:?}");

    let mut buf = Vec::new();
    bermudan_cli::bench::write_timing_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("route,model,train_ms,predict_ms,n_rows,speedup_vs_lsmc\n"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn repeated_predict_timings_are_stable() {
    let (specs, grid, model, x) = bench_fixture();
    let curves = MarketCurves::eur_2019();
    let lsmc = LsmcConfig::with_paths(100, 1);
    let models = [BenchModel {
        name: "gbrt".into(),
        pipeline: &model,
        train_ms: None,
    }];
    let runs: Vec<f64> = (0..3)
        .map(|_| timing_benchmark(&models, &specs, &grid, &curves, &lsmc, x.view(), 9).unwrap()[1].predict_ms)
        .collect();
    let lo = runs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = runs.iter().cloned().fold(0.0, f64::max);
    assert!((hi - lo) / hi < 0.5, "{runs:?}");
}
