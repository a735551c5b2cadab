//! Monte Carlo checks of the simulated factor against closed-form moments.

use bermudan_core::analytic::{european_pair_g1pp, EuropeanSpec, Side};
use bermudan_core::g1pp::{
    decay_integral, forward_drift, simulate, simulate_under, BondPortfolio, G1ppParams, Measure, STANDARD_SCENARIOS,
};
use bermudan_core::market_data::MarketCurves;

fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn state_variance_at_one_year() {
    let curves = MarketCurves::eur_2019();
    let p = G1ppParams::new(0.03, 0.02).unwrap();
    let n = 100_000;
    let paths = simulate(&p, &curves.discount, &[0.0, 1.0], n, 7).unwrap();
    let xs = paths.states_at(1);
    let (mean, se) = mean_and_se(xs);
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    let exact = 0.02f64.powi(2) * (1.0 - (-0.06f64).exp()) / 0.06;
    assert!(mean.abs() < 4.0 * se, "mean {mean} se {se}");
    // sd of the sample variance of a Gaussian is V sqrt(2 / n).
    let sd_var = exact * (2.0 / n as f64).sqrt();
    assert!((var - exact).abs() < 4.0 * sd_var, "{var} vs {exact}");
}

#[test]
fn state_autocorrelation() {
    let curves = MarketCurves::eur_2019();
    let p = G1ppParams::new(0.1, 0.01).unwrap();
    let paths = simulate(&p, &curves.discount, &[0.0, 2.0, 5.0], 50_000, 3).unwrap();
    let (a, b) = (paths.states_at(1), paths.states_at(2));
    let n = a.len() as f64;
    let cov = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / n;
    let corr = cov / ((a.iter().map(|x| x * x).sum::<f64>() / n) * (b.iter().map(|y| y * y).sum::<f64>() / n)).sqrt();
    let v = |t: f64| (1.0 - (-2.0 * 0.1 * t).exp()) / 0.2;
    let exact = (-0.1f64 * 3.0).exp() * (v(2.0) / v(5.0)).sqrt();
    // sd of a sample correlation is about (1 - rho^2) / sqrt(n).
    assert!((corr - exact).abs() < 4.0 * (1.0 - exact * exact) / n.sqrt(), "{corr} vs {exact}");
}

#[test]
fn deflated_bank_account_reprices_the_curve() {
    let curves = MarketCurves::eur_2019();
    let times = [0.0, 1.0, 5.0, 10.0, 20.0, 30.0];
    for (a, sigma) in [STANDARD_SCENARIOS[0], STANDARD_SCENARIOS[9], (0.3, 0.09)] {
        let p = G1ppParams::new(a, sigma).unwrap();
        let paths = simulate(&p, &curves.discount, &times, 100_000, 11).unwrap();
        for (i, &t) in times.iter().enumerate().skip(1) {
            let (m, se) = mean_and_se(paths.numeraire_at(i));
            let market = curves.discount.discount_factor(t).unwrap();
            assert!((m - market).abs() < 3.0 * se, "a={a} s={sigma} t={t}: {m} +/- {se} vs {market}");
        }
    }
}

#[test]
fn deflated_model_bonds_are_martingales() {
    let curves = MarketCurves::eur_2019();
    let p = G1ppParams::new(0.03, 0.02).unwrap();
    let (t, maturity) = (5.0, 12.0);
    let paths = simulate(&p, &curves.discount, &[0.0, t], 100_000, 21).unwrap();
    let bond = BondPortfolio::new(&p, &curves.discount, t, &[(maturity, 1.0)]);
    let v: Vec<f64> = paths
        .states_at(1)
        .iter()
        .zip(paths.numeraire_at(1))
        .map(|(&x, &d)| d * bond.value(x))
        .collect();
    let (m, se) = mean_and_se(&v);
    let market = curves.discount.discount_factor(maturity).unwrap();
    assert!((m - market).abs() < 3.0 * se, "{m} +/- {se} vs {market}");
}

#[test]
fn european_closed_form_matches_simulation() {
    let curves = MarketCurves::eur_2019();
    for (a, sigma) in [STANDARD_SCENARIOS[0], STANDARD_SCENARIOS[5]] {
        let p = G1ppParams::new(a, sigma).unwrap();
        for (expiry, tenor, strike) in [(2.0, 5.0, 0.0), (5.0, 10.0, 0.004), (10.0, 2.0, -0.002)] {
            let spec = EuropeanSpec {
                side: Side::Payer,
                expiry,
                tenor,
                strike,
                notional: 1e4,
            };
            let pair = european_pair_g1pp(&spec, &p, &curves).unwrap();
            let legs = spec.legs(&curves).unwrap();
            let swap = BondPortfolio::new(&p, &curves.discount, legs.start_time, &legs.payer_coefficients(strike));
            let paths = simulate(&p, &curves.discount, &[0.0, legs.start_time], 50_000, 5).unwrap();
            for side in [Side::Payer, Side::Receiver] {
                let v: Vec<f64> = paths
                    .states_at(1)
                    .iter()
                    .zip(paths.numeraire_at(1))
                    .map(|(&x, &d)| d * 1e4 * (side.sign() * swap.value(x)).max(0.0))
                    .collect();
                let (m, se) = mean_and_se(&v);
                let cf = pair.for_side(side);
                assert!(
                    (m - cf).abs() < 3.0 * se,
                    "{side} {expiry}x{tenor} K={strike} a={a} s={sigma}: mc {m} +/- {se} vs {cf}"
                );
            }
        }
    }
}

#[test]
fn forward_drift_matches_quadrature() {
    for &(a, sigma) in &[(0.03, 0.02), (-0.02, 0.005), (0.3, 0.08), (2e-7, 0.01), (0.0, 0.01)] {
        let p = G1ppParams::new(a, sigma).unwrap();
        for &(s, t, maturity) in &[(0.0, 1.0, 10.0), (5.0, 20.0, 40.0), (19.0, 20.0, 20.0)] {
            let n = 20_000;
            let h = (t - s) / n as f64;
            let f = |u: f64| (-a * (t - u)).exp() * decay_integral(a, maturity - u);
            let mut acc = f(s) + f(t);
            for k in 1..n {
                acc += f(s + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            let quad = sigma * sigma * acc * h / 3.0;
            let got = forward_drift(&p, s, t, maturity);
            assert!(((got - quad) / quad).abs() < 1e-8, "a={a} ({s},{t},{maturity}): {got} vs {quad}");
        }
    }
}

#[test]
fn terminal_measure_reprices_the_curve() {
    let curves = MarketCurves::eur_2019();
    let times = [0.0, 1.0, 5.0, 10.0, 20.0, 30.0];
    let measure = Measure::Terminal { maturity: 40.0 };
    for (a, sigma) in [STANDARD_SCENARIOS[0], STANDARD_SCENARIOS[2], STANDARD_SCENARIOS[9]] {
        let p = G1ppParams::new(a, sigma).unwrap();
        let paths = simulate_under(&p, &curves.discount, &times, 100_000, 11, false, measure).unwrap();
        for (i, &t) in times.iter().enumerate().skip(1) {
            let (m, se) = mean_and_se(paths.numeraire_at(i));
            let market = curves.discount.discount_factor(t).unwrap();
            assert!((m - market).abs() < 3.0 * se, "a={a} s={sigma} t={t}: {m} +/- {se} vs {market}");
        }
        // P(t,T) times the deflator is the constant P(0,T).
        let bond = BondPortfolio::new(&p, &curves.discount, 10.0, &[(40.0, 1.0)]);
        let x = paths.state(17, 3);
        let scaled = paths.numeraire(17, 3) * bond.value(x);
        let p0 = curves.discount.discount_factor(40.0).unwrap();
        assert!((scaled / p0 - 1.0).abs() < 1e-12);
    }
}

#[test]
fn terminal_measure_rejects_early_maturity() {
    let curves = MarketCurves::eur_2019();
    let p = G1ppParams::new(0.03, 0.02).unwrap();
    let measure = Measure::Terminal { maturity: 4.0 };
    assert!(simulate_under(&p, &curves.discount, &[0.0, 5.0], 10, 1, false, measure).is_err());
}
