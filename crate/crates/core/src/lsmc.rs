//! Longstaff-Schwartz pricing of co-terminal Bermudan swaptions.
//!
//! Paths are simulated on the exercise grid only and every exercise value is
//! discounted with the exact path-wise numeraire of the simulation measure.
//! Continuation values are regressed on monomials of the standardised
//! factor `x`.

use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{atm_strike, BermudanSpec};
use crate::error::{Error, Result};
use crate::g1pp::{simulate_under, BondPortfolio, Measure, G1ppParams, PathSet, ScenarioGrid, PATH_CHUNK};
use crate::market_data::{MarketCurves, SwapLegs};

const RIDGE_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsmcConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Polynomial degree of the regression basis in `x`.
    pub degree: usize,
    /// Regress only on paths where exercise is worth something.
    pub itm_only: bool,
    pub antithetic: bool,
    #[serde(default)]
    pub numeraire: Numeraire,
}

/// Numeraire used to discount exercise values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Numeraire {
    /// Continuously compounded bank account.
    BankAccount,
    /// Zero-coupon bond maturing with the last swap payment.
    #[default]
    TerminalBond,
}

impl Default for LsmcConfig {
    fn default() -> Self {
        LsmcConfig {
            n_paths: 50_000,
            seed: 20_191_031,
            degree: 3,
            itm_only: true,
            antithetic: false,
            numeraire: Numeraire::default(),
        }
    }
}

impl LsmcConfig {
    pub fn with_paths(n_paths: usize, seed: u64) -> Self {
        LsmcConfig {
            n_paths,
            seed,
            ..LsmcConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::Config("regression degree must be at least 1".into()));
        }
        let min_paths = 10 * (self.degree + 1);
        if self.n_paths < min_paths {
            return Err(Error::Config(format!(
                "n_paths = {} is below 10 * (degree + 1) = {min_paths}",
                self.n_paths
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LsmcResult {
    pub price: f64,
    pub std_error: f64,
    /// Fraction of paths stopped at each exercise date.
    pub exercise_fractions: Vec<f64>,
}

/// A Bermudan prepared for simulation: strike, exercise grid and the
/// co-terminal swap at each exercise date as a bond portfolio.
#[derive(Debug, Clone)]
pub struct BermudanPricer {
    spec: BermudanSpec,
    params: G1ppParams,
    strike: f64,
    exercise_years: Vec<u32>,
    exercise_times: Vec<f64>,
    underlyings: Vec<BondPortfolio>,
    terminal_time: f64,
}

impl BermudanPricer {
    pub fn new(spec: &BermudanSpec, params: &G1ppParams, curves: &MarketCurves) -> Result<Self> {
        Self::with_exercise_years(spec, params, curves, &spec.exercise_years())
    }

    /// Restricts exercise to a subset of the contract's exercise dates.
    pub fn with_exercise_years(
        spec: &BermudanSpec,
        params: &G1ppParams,
        curves: &MarketCurves,
        years: &[u32],
    ) -> Result<Self> {
        spec.validate_shape()?;
        params.validate()?;
        if years.is_empty() {
            return Err(Error::Domain("exercise schedule is empty".into()));
        }
        let allowed = spec.exercise_years();
        if years.windows(2).any(|w| w[1] <= w[0]) || years.iter().any(|y| !allowed.contains(y)) {
            return Err(Error::Domain(format!(
                "exercise years {years:?} must be increasing and within {allowed:?}"
            )));
        }
        let strike = atm_strike(spec, curves)?;
        let mut exercise_times = Vec::with_capacity(years.len());
        let mut underlyings = Vec::with_capacity(years.len());
        let mut terminal_time = 0.0f64;
        for &year in years {
            let legs = SwapLegs::new(curves, 12 * year, 12 * (spec.maturity() - year))?;
            let flows = legs.payer_coefficients(strike);
            terminal_time = flows.iter().fold(terminal_time, |m, &(t, _)| m.max(t));
            underlyings.push(BondPortfolio::new(params, &curves.discount, legs.start_time, &flows));
            exercise_times.push(legs.start_time);
        }
        Ok(BermudanPricer {
            spec: *spec,
            params: *params,
            strike,
            exercise_years: years.to_vec(),
            exercise_times,
            underlyings,
            terminal_time,
        })
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn exercise_times(&self) -> &[f64] {
        &self.exercise_times
    }

    pub fn exercise_years(&self) -> &[u32] {
        &self.exercise_years
    }

    /// Simulation grid: time 0 followed by the exercise dates.
    pub fn time_grid(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.exercise_times.iter().copied()).collect()
    }

    /// Time of the last swap payment.
    pub fn terminal_time(&self) -> f64 {
        self.terminal_time
    }

    pub fn simulate(&self, curves: &MarketCurves, config: &LsmcConfig) -> Result<PathSet> {
        config.validate()?;
        let measure = match config.numeraire {
            Numeraire::BankAccount => Measure::BankAccount,
            Numeraire::TerminalBond => Measure::Terminal {
                maturity: self.terminal_time,
            },
        };
        simulate_under(
            &self.params,
            &curves.discount,
            &self.time_grid(),
            config.n_paths,
            config.seed,
            config.antithetic,
            measure,
        )
    }

    /// Exercise value at exercise date `k` given factor value `x`.
    pub fn intrinsic(&self, k: usize, x: f64) -> f64 {
        (self.spec.side.sign() * self.underlyings[k].value(x)).max(0.0) * self.spec.notional
    }

    /// Backward induction on pre-simulated paths. The path grid must contain
    /// every exercise date; extra dates are ignored.
    pub fn price_paths(&self, paths: &PathSet, config: &LsmcConfig) -> Result<LsmcResult> {
        config.validate()?;
        let grid_index: Vec<usize> = self
            .exercise_times
            .iter()
            .map(|&t| {
                paths
                    .time_index(t)
                    .ok_or_else(|| Error::Domain(format!("path grid has no exercise date t = {t}")))
            })
            .collect::<Result<_>>()?;
        let n = paths.n_paths();
        let n_ex = self.exercise_times.len();

        // Deflated cash flow per path and the date it was received.
        let mut cash = vec![0.0; n];
        let mut stop: Vec<Option<usize>> = vec![None; n];

        for k in (0..n_ex).rev() {
            let xs = paths.states_at(grid_index[k]);
            let deflators = paths.numeraire_at(grid_index[k]);
            let exercise: Vec<f64> = xs.par_iter().map(|&x| self.intrinsic(k, x)).collect();

            if k == n_ex - 1 {
                for p in 0..n {
                    if exercise[p] > 0.0 {
                        cash[p] = exercise[p] * deflators[p];
                        stop[p] = Some(k);
                    }
                }
                continue;
            }

            let candidates: Vec<usize> = (0..n)
                .filter(|&p| !config.itm_only || exercise[p] > 0.0)
                .collect();
            if !candidates.iter().any(|&p| exercise[p] > 0.0) {
                continue;
            }
            let reg_x: Vec<f64> = candidates.iter().map(|&p| xs[p]).collect();
            // A terminal-bond deflator is a function of x, so the regression
            // runs in numeraire units; the bank account also depends on the
            // integrated path and needs values at t_k.
            let in_numeraire = matches!(paths.measure(), Measure::Terminal { .. });
            let reg_y: Vec<f64> = candidates
                .iter()
                .map(|&p| if in_numeraire { cash[p] } else { cash[p] / deflators[p] })
                .collect();
            let fit = fit_continuation(&reg_x, &reg_y, config.degree);
            for (j, &p) in candidates.iter().enumerate() {
                let exercise_units = if in_numeraire { exercise[p] * deflators[p] } else { exercise[p] };
                if exercise[p] > 0.0 && exercise_units > fit.eval(reg_x[j]) {
                    cash[p] = exercise[p] * deflators[p];
                    stop[p] = Some(k);
                }
            }
        }

        let (price, std_error) = mean_and_std_error(&cash, paths.antithetic());
        if !price.is_finite() || !std_error.is_finite() {
            return Err(Error::Numerical(format!("non-finite LSMC estimate {price} +/- {std_error}")));
        }
        let mut counts = vec![0usize; n_ex];
        for k in stop.iter().flatten() {
            counts[*k] += 1;
        }
        Ok(LsmcResult {
            price,
            std_error,
            exercise_fractions: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        })
    }
}

fn mean_and_std_error(values: &[f64], antithetic: bool) -> (f64, f64) {
    let samples: Vec<f64> = if antithetic {
        values.chunks(2).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
    } else {
        values.to_vec()
    };
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (values.iter().sum::<f64>() / values.len() as f64, (var / m).sqrt())
}

/// Least-squares polynomial in the standardised regressor.
#[derive(Debug, Clone)]
struct Continuation {
    center: f64,
    scale: f64,
    coefs: Vec<f64>,
}

impl Continuation {
    fn eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / self.scale;
        self.coefs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }
}

fn fit_continuation(xs: &[f64], ys: &[f64], degree: usize) -> Continuation {
    let m = xs.len() as f64;
    let center = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - center) * (x - center)).sum::<f64>() / m;
    let scale = if var.sqrt() > 0.0 && var.is_finite() { var.sqrt() } else { 1.0 };

    let max_degree = degree.min(xs.len().saturating_sub(1));
    let max_degree = if var > 0.0 { max_degree } else { 0 };
    for d in (0..=max_degree).rev() {
        if let Some(coefs) = solve_normal_equations(xs, ys, center, scale, d) {
            if d < degree {
                warn!("LSMC regression rank-deficient at degree {degree}; fell back to degree {d}");
            }
            return Continuation { center, scale, coefs };
        }
    }
    let mean = ys.iter().sum::<f64>() / m;
    Continuation {
        center,
        scale,
        coefs: vec![mean],
    }
}

/// Normal equations accumulated over fixed path chunks, reduced in chunk
/// order so the result does not depend on the worker count.
fn solve_normal_equations(xs: &[f64], ys: &[f64], center: f64, scale: f64, degree: usize) -> Option<Vec<f64>> {
    let dim = degree + 1;
    let partials: Vec<Vec<f64>> = xs
        .par_chunks(PATH_CHUNK)
        .zip(ys.par_chunks(PATH_CHUNK))
        .map(|(xc, yc)| {
            let mut acc = vec![0.0; dim * dim + dim];
            let mut basis = vec![0.0; dim];
            for (&x, &y) in xc.iter().zip(yc) {
                let z = (x - center) / scale;
                let mut pw = 1.0;
                for b in basis.iter_mut() {
                    *b = pw;
                    pw *= z;
                }
                for i in 0..dim {
                    for j in 0..=i {
                        acc[i * dim + j] += basis[i] * basis[j];
                    }
                    acc[dim * dim + i] += basis[i] * y;
                }
            }
            acc
        })
        .collect();
    let mut acc = vec![0.0; dim * dim + dim];
    for part in &partials {
        for (a, p) in acc.iter_mut().zip(part) {
            *a += p;
        }
    }
    let (gram, rhs) = acc.split_at(dim * dim);
    let mut gram = gram.to_vec();
    for i in 0..dim {
        for j in 0..i {
            gram[j * dim + i] = gram[i * dim + j];
        }
    }

    if let Some(sol) = cholesky_solve(&gram, rhs, dim) {
        return Some(sol);
    }
    let max_diag = (0..dim).map(|i| gram[i * dim + i]).fold(0.0, f64::max);
    for i in 0..dim {
        gram[i * dim + i] += RIDGE_JITTER * max_diag.max(1.0);
    }
    cholesky_solve(&gram, rhs, dim)
}

/// Solves `A x = b` for symmetric positive-definite `A` (row-major).
/// Returns `None` when a pivot is not comfortably positive.
pub(crate) fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    let max_diag = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(s > 1e-13 * max_diag) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn price_bermudan(
    spec: &BermudanSpec,
    params: &G1ppParams,
    curves: &MarketCurves,
    config: &LsmcConfig,
) -> Result<LsmcResult> {
    let pricer = BermudanPricer::new(spec, params, curves)?;
    let paths = pricer.simulate(curves, config)?;
    pricer.price_paths(&paths, config)
}

/// Seed for cell `index` of a batch; cell 0 keeps the base seed.
pub fn cell_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One `(spec, scenario)` cell of a batch run.
#[derive(Debug, Clone)]
pub struct BasketCell {
    pub spec_id: usize,
    pub scenario_id: usize,
    pub result: std::result::Result<LsmcResult, String>,
    pub wall_time_ms: f64,
}

/// Prices every `(spec, scenario)` pair; cells fail independently and each
/// draws its own stream via [`cell_seed`].
pub fn price_basket(
    specs: &[BermudanSpec],
    grid: &ScenarioGrid,
    curves: &MarketCurves,
    config: &LsmcConfig,
) -> Result<Vec<BasketCell>> {
    if specs.is_empty() {
        return Err(Error::Config("basket is empty".into()));
    }
    if grid.is_empty() {
        return Err(Error::Config("scenario grid is empty".into()));
    }
    config.validate()?;
    let cells: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|s| (0..grid.len()).map(move |g| (s, g)))
        .collect();
    Ok(cells
        .into_par_iter()
        .map(|(spec_id, scenario_id)| {
            let started = Instant::now();
            let cfg = LsmcConfig {
                seed: cell_seed(config.seed, spec_id * grid.len() + scenario_id),
                ..config.clone()
            };
            let result =
                price_bermudan(&specs[spec_id], &grid.scenarios[scenario_id], curves, &cfg).map_err(|e| e.to_string());
            BasketCell {
                spec_id,
                scenario_id,
                result,
                wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect())
}

/// Batch results CSV: `spec_id,scenario_id,price,std_error,wall_time_ms,error`.
pub fn write_basket_csv<W: std::io::Write>(cells: &[BasketCell], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["spec_id", "scenario_id", "price", "std_error", "wall_time_ms", "error"])?;
    for cell in cells {
        let (price, se, err) = match &cell.result {
            Ok(r) => (r.price.to_string(), r.std_error.to_string(), String::new()),
            Err(e) => (String::new(), String::new(), e.clone()),
        };
        w.write_record(&[
            cell.spec_id.to_string(),
            cell.scenario_id.to_string(),
            price,
            se,
            format!("{:.3}", cell.wall_time_ms),
            err,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<basket csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::Side;

    #[test]
    fn config_floor_on_paths() {
        let cfg = LsmcConfig::with_paths(39, 1);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        assert!(LsmcConfig::with_paths(40, 1).validate().is_ok());
        let cfg = LsmcConfig {
            degree: 0,
            ..LsmcConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cholesky_solves_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let x = cholesky_solve(&a, &[2.0, 1.0], 2).unwrap();
        assert!((4.0 * x[0] + 2.0 * x[1] - 2.0).abs() < 1e-14);
        assert!((2.0 * x[0] + 3.0 * x[1] - 1.0).abs() < 1e-14);
        assert!(cholesky_solve(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0], 2).is_none());
    }

    #[test]
    fn continuation_recovers_cubic() {
        let xs: Vec<f64> = (0..200).map(|i| -1.0 + i as f64 / 100.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.0 - 2.0 * x + 0.5 * x * x * x).collect();
        let fit = fit_continuation(&xs, &ys, 3);
        for &x in &[-0.7, 0.1, 0.9] {
            assert!((fit.eval(x) - (1.0 - 2.0 * x + 0.5 * x * x * x)).abs() < 1e-10);
        }
    }

    #[test]
    fn degenerate_regressor_falls_back_to_mean() {
        let fit = fit_continuation(&[0.5; 10], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0], 3);
        assert_eq!(fit.coefs.len(), 1);
        assert!((fit.eval(0.5) - 5.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_schedule_outside_contract() {
        let curves = MarketCurves::eur_2019();
        let params = G1ppParams::new(0.03, 0.02).unwrap();
        let spec = BermudanSpec::new(Side::Payer, 5, 5, 0).unwrap();
        assert!(BermudanPricer::with_exercise_years(&spec, &params, &curves, &[4]).is_err());
        assert!(BermudanPricer::with_exercise_years(&spec, &params, &curves, &[7, 6]).is_err());
        assert!(BermudanPricer::with_exercise_years(&spec, &params, &curves, &[]).is_err());
    }

    #[test]
    fn exercise_fractions_are_probabilities() {
        let curves = MarketCurves::eur_2019();
        let params = G1ppParams::new(0.03, 0.02).unwrap();
        let spec = BermudanSpec::new(Side::Receiver, 3, 5, 0).unwrap();
        let r = price_bermudan(&spec, &params, &curves, &LsmcConfig::with_paths(4000, 5)).unwrap();
        assert_eq!(r.exercise_fractions.len(), 5);
        let total: f64 = r.exercise_fractions.iter().sum();
        assert!(r.exercise_fractions.iter().all(|f| (0.0..=1.0).contains(f)));
        assert!(total <= 1.0 + 1e-12);
        assert!(r.std_error > 0.0);
    }

    #[test]
    fn no_itm_paths_skips_the_date() {
        // Deep OTM payer: nothing is ever in the money.
        let curves = MarketCurves::eur_2019();
        let params = G1ppParams::new(0.03, 0.001).unwrap();
        let mut spec = BermudanSpec::new(Side::Payer, 2, 5, 400).unwrap();
        spec.strike_offset_bp = 100_000;
        let r = price_bermudan(&spec, &params, &curves, &LsmcConfig::with_paths(1000, 1)).unwrap();
        assert_eq!(r.price, 0.0);
        assert!(r.exercise_fractions.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn basket_csv_shape() {
        let curves = MarketCurves::eur_2019();
        let specs = [BermudanSpec::new(Side::Payer, 1, 2, 0).unwrap()];
        let grid = ScenarioGrid::new(vec![G1ppParams::new(0.03, 0.02).unwrap()]).unwrap();
        let cells = price_basket(&specs, &grid, &curves, &LsmcConfig::with_paths(1000, 1)).unwrap();
        let mut buf = Vec::new();
        write_basket_csv(&cells, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("spec_id,scenario_id,price,std_error,wall_time_ms,error"));
    }
}
