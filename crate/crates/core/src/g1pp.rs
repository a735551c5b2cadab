//! One-factor Gaussian short-rate model (G1++ / Hull-White).
//!
//! The short rate is `r(t) = x(t) + phi(t)` with `dx = -a x dt + sigma dW`,
//! `x(0) = 0`, and `phi` fitted so that the model reprices the discount
//! curve. Bond prices are `P(t,T) = A(t,T) exp(-B(t,T) x(t))` with
//!
//! ```text
//! B(t,T)    = (1 - e^{-a(T-t)}) / a
//! ln A(t,T) = ln P(0,T) - ln P(0,t) - sigma^2/2 * (B E(a,t)^2 + B^2 E(2a,t))
//! E(k,t)    = (1 - e^{-k t}) / k
//! ```
//!
//! Paths are simulated with the exact joint Gaussian transition of
//! `(x, integral of x)` over each grid step, so the bank-account discount
//! factor carries no time-discretisation bias.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::YieldCurve;

/// Admissible mean-reversion box used for dataset generation.
pub const MEAN_REVERSION_RANGE: (f64, f64) = (-0.02, 0.30);
/// Admissible volatility box used for dataset generation.
pub const VOLATILITY_RANGE: (f64, f64) = (0.001, 0.09);

/// Paths per RNG substream. Fixed so results do not depend on worker count.
pub const PATH_CHUNK: usize = 512;

const SERIES_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G1ppParams {
    /// Speed of mean reversion, per annum. May be negative.
    pub a: f64,
    /// Volatility, per annum.
    pub sigma: f64,
}

impl G1ppParams {
    pub fn new(a: f64, sigma: f64) -> Result<Self> {
        let p = G1ppParams { a, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::Domain(format!(
                "G1++ parameters need finite a and sigma > 0, got a = {}, sigma = {}",
                self.a, self.sigma
            )));
        }
        Ok(())
    }

    /// Checks the parameter box used for dataset generation.
    pub fn check_admissible(&self) -> Result<()> {
        self.validate()?;
        let (a_lo, a_hi) = MEAN_REVERSION_RANGE;
        let (s_lo, s_hi) = VOLATILITY_RANGE;
        if !(a_lo..=a_hi).contains(&self.a) || !(s_lo..=s_hi).contains(&self.sigma) {
            return Err(Error::Domain(format!(
                "(a, sigma) = ({}, {}) outside a in [{a_lo}, {a_hi}], sigma in [{s_lo}, {s_hi}]",
                self.a, self.sigma
            )));
        }
        Ok(())
    }

    /// `B(t, t + tau)`.
    pub fn bond_sensitivity(&self, tau: f64) -> f64 {
        decay_integral(self.a, tau)
    }

    /// Variance of `x(t)` given `x(0) = 0`.
    pub fn state_variance(&self, t: f64) -> f64 {
        self.sigma * self.sigma * decay_integral(2.0 * self.a, t)
    }

    /// Variance of `integral_0^t x(u) du` given `x(0) = 0`.
    pub fn integrated_variance(&self, t: f64) -> f64 {
        self.sigma * self.sigma * integrated_variance_unit(self.a, t)
    }

    /// `ln A(t,T)` and `B(t,T)` for the bond reconstruction on `curve`.
    pub fn bond_terms(&self, curve: &YieldCurve, t: f64, maturity: f64) -> (f64, f64) {
        let b = decay_integral(self.a, maturity - t);
        let e1 = decay_integral(self.a, t);
        let e2 = decay_integral(2.0 * self.a, t);
        let ln_p_ratio = curve.df(maturity).ln() - curve.df(t).ln();
        let convexity = 0.5 * self.sigma * self.sigma * (b * e1 * e1 + b * b * e2);
        (ln_p_ratio - convexity, b)
    }
}

/// The ten `(a, sigma)` pairs used to build the surrogate dataset.
pub const STANDARD_SCENARIOS: [(f64, f64); 10] = [
    (-0.02, 0.005),
    (-0.01, 0.01),
    (0.02, 0.05),
    (0.03, 0.02),
    (0.04, 0.015),
    (0.05, 0.025),
    (0.06, 0.03),
    (0.09, 0.04),
    (0.15, 0.07),
    (0.30, 0.08),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub scenarios: Vec<G1ppParams>,
}

impl ScenarioGrid {
    pub fn new(scenarios: Vec<G1ppParams>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::Config("scenario grid is empty".into()));
        }
        for s in &scenarios {
            s.validate()?;
        }
        Ok(ScenarioGrid { scenarios })
    }

    pub fn standard() -> Self {
        ScenarioGrid {
            scenarios: STANDARD_SCENARIOS
                .iter()
                .map(|&(a, sigma)| G1ppParams { a, sigma })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        ScenarioGrid::standard()
    }
}

/// `(1 - e^{-k t}) / k`, with the `k -> 0` limit `t`.
pub fn decay_integral(k: f64, t: f64) -> f64 {
    let y = k * t;
    if y.abs() < SERIES_THRESHOLD {
        t * (1.0 - y / 2.0 + y * y / 6.0 - y * y * y / 24.0)
    } else {
        -(-y).exp_m1() / k
    }
}

/// `integral_0^t B(u,t)^2 du = (t - 2 E(a,t) + E(2a,t)) / a^2`.
///
/// The closed form cancels to `O((at)^3)`, so a power series in `y = a t`
/// is used for `|y| < 0.5`:
/// `t^3 * sum_{n>=3} (-1)^n (2 - 2^{n-1}) y^{n-3} / n!`.
pub fn integrated_variance_unit(a: f64, t: f64) -> f64 {
    let y = a * t;
    if y.abs() < 0.5 {
        let mut sum = 0.0;
        // power = y^{n-3} / n!, pow2 = 2^{n-1}
        let mut power = 1.0f64 / 6.0;
        let mut pow2 = 4.0f64;
        for n in 3..40 {
            let sign = if n % 2 == 0 { 1.0f64 } else { -1.0 };
            let contrib = sign * (2.0 - pow2) * power;
            sum += contrib;
            if contrib.abs() <= 1e-18 * sum.abs() {
                break;
            }
            power *= y / (n as f64 + 1.0);
            pow2 *= 2.0;
        }
        t * t * t * sum
    } else {
        (t - 2.0 * decay_integral(a, t) + decay_integral(2.0 * a, t)) / (a * a)
    }
}

/// Model zero-coupon bond price `P(t, maturity)` given factor value `x`.
pub fn zcb_price(params: &G1ppParams, curve: &YieldCurve, t: f64, maturity: f64, x: f64) -> Result<f64> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("bond valuation time {t} < 0")));
    }
    if maturity < t || maturity.is_nan() {
        return Err(Error::Domain(format!("bond maturity {maturity} precedes valuation time {t}")));
    }
    if t == maturity {
        return Ok(1.0);
    }
    let (ln_a, b) = params.bond_terms(curve, t, maturity);
    Ok((ln_a - b * x).exp())
}

/// A linear combination of model bonds valued at a fixed time:
/// `sum_k w_k exp(ln_a_k - b_k x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BondPortfolio {
    /// `(ln(|w_k| A_k), B_k, sign(w_k))`.
    terms: Vec<(f64, f64, f64)>,
}

impl BondPortfolio {
    pub fn new(params: &G1ppParams, curve: &YieldCurve, t: f64, flows: &[(f64, f64)]) -> Self {
        let terms = flows
            .iter()
            .filter(|&&(_, w)| w != 0.0)
            .map(|&(maturity, w)| {
                let (ln_a, b) = if maturity <= t { (0.0, 0.0) } else { params.bond_terms(curve, t, maturity) };
                (ln_a + w.abs().ln(), b, w.signum())
            })
            .collect();
        BondPortfolio { terms }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(ln_wa, b, s)| s * (ln_wa - b * x).exp())
            .sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSetSidecar {
    pub seed: u64,
    pub n_paths: usize,
    pub antithetic: bool,
    pub params: G1ppParams,
    pub times: Vec<f64>,
    pub chunk_size: usize,
    pub measure: Measure,
}

/// Simulated factor paths and path-wise discount factors on a time grid.
///
/// Storage is time-major so each grid date is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    times: Vec<f64>,
    n_paths: usize,
    states: Vec<f64>,
    numeraire_df: Vec<f64>,
    seed: u64,
    antithetic: bool,
    params: G1ppParams,
    measure: Measure,
}

impl PathSet {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> G1ppParams {
        self.params
    }

    pub fn antithetic(&self) -> bool {
        self.antithetic
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    /// Factor values across paths at grid index `i`.
    pub fn states_at(&self, i: usize) -> &[f64] {
        &self.states[i * self.n_paths..(i + 1) * self.n_paths]
    }

    /// Discount factors from 0 to grid time `i` across paths, under the
    /// simulation measure.
    pub fn numeraire_at(&self, i: usize) -> &[f64] {
        &self.numeraire_df[i * self.n_paths..(i + 1) * self.n_paths]
    }

    pub fn state(&self, path: usize, i: usize) -> f64 {
        self.states[i * self.n_paths + path]
    }

    pub fn numeraire(&self, path: usize, i: usize) -> f64 {
        self.numeraire_df[i * self.n_paths + path]
    }

    /// Grid index of time `t`, matched to 1e-12.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() < 1e-12)
    }

    pub fn sidecar(&self) -> PathSetSidecar {
        PathSetSidecar {
            seed: self.seed,
            n_paths: self.n_paths,
            antithetic: self.antithetic,
            params: self.params,
            times: self.times.clone(),
            chunk_size: PATH_CHUNK,
            measure: self.measure,
        }
    }

    /// Long-format CSV dump: `path,time_index,time,x,numeraire_df`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["path", "time_index", "time", "x", "numeraire_df"])?;
        for p in 0..self.n_paths {
            for (i, t) in self.times.iter().enumerate() {
                w.write_record(&[
                    p.to_string(),
                    i.to_string(),
                    t.to_string(),
                    self.state(p, i).to_string(),
                    self.numeraire(p, i).to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<pathset csv>", e))?;
        Ok(())
    }
}

/// Pricing measure of a simulation and hence the meaning of its discount
/// factors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    /// Risk neutral; discount factors are `exp(-integral_0^t r)`.
    #[default]
    BankAccount,
    /// Forward measure of the bond maturing at `maturity`; discount factors
    /// are `P(0,T) / P(t,T)`.
    Terminal { maturity: f64 },
}

/// Drift correction `M^T(s,t)` of `x` under the `T`-forward measure:
/// `sigma^2 integral_s^t e^{-a(t-u)} B(u,T) du`, which equals
/// `sigma^2 (B(t,T) E + e^{-a(T-t)} E^2 / 2)` with `E = B(s,t)`.
pub fn forward_drift(params: &G1ppParams, s: f64, t: f64, maturity: f64) -> f64 {
    let e = decay_integral(params.a, t - s);
    let tau = maturity - t;
    params.sigma * params.sigma * (decay_integral(params.a, tau) * e + 0.5 * (-params.a * tau).exp() * e * e)
}

#[derive(Debug, Clone, Copy)]
struct StepLaw {
    decay: f64,
    drift_integral: f64,
    shift: f64,
    sd_x: f64,
    loading_i: f64,
    sd_i_resid: f64,
}

impl StepLaw {
    fn new(params: &G1ppParams, dt: f64, shift: f64) -> Self {
        let s2 = params.sigma * params.sigma;
        let e1 = decay_integral(params.a, dt);
        let var_x = s2 * decay_integral(2.0 * params.a, dt);
        let var_i = s2 * integrated_variance_unit(params.a, dt);
        let cov = 0.5 * s2 * e1 * e1;
        let sd_x = var_x.sqrt();
        let loading_i = if sd_x > 0.0 { cov / sd_x } else { 0.0 };
        StepLaw {
            decay: (-params.a * dt).exp(),
            drift_integral: e1,
            shift,
            sd_x,
            loading_i,
            sd_i_resid: (var_i - loading_i * loading_i).max(0.0).sqrt(),
        }
    }
}

/// Discount factor at one grid date: `scale * exp(-integral)` under the bank
/// account, `scale * exp(b x)` under a terminal measure.
#[derive(Debug, Clone, Copy)]
struct DiscountLaw {
    scale: f64,
    b: f64,
}

/// Simulates `n_paths` G1++ paths on `times` (which must start at 0).
pub fn simulate(params: &G1ppParams, curve: &YieldCurve, times: &[f64], n_paths: usize, seed: u64) -> Result<PathSet> {
    simulate_paths(params, curve, times, n_paths, seed, false)
}

/// As [`simulate`], optionally pairing each path with its antithetic mirror.
pub fn simulate_paths(
    params: &G1ppParams,
    curve: &YieldCurve,
    times: &[f64],
    n_paths: usize,
    seed: u64,
    antithetic: bool,
) -> Result<PathSet> {
    simulate_under(params, curve, times, n_paths, seed, antithetic, Measure::BankAccount)
}

/// As [`simulate_paths`] under an explicit pricing measure. The random
/// stream layout is the same for every measure.
pub fn simulate_under(
    params: &G1ppParams,
    curve: &YieldCurve,
    times: &[f64],
    n_paths: usize,
    seed: u64,
    antithetic: bool,
    measure: Measure,
) -> Result<PathSet> {
    params.validate()?;
    if n_paths < 2 {
        return Err(Error::Domain(format!("need at least 2 paths, got {n_paths}")));
    }
    if times.first() != Some(&0.0) {
        return Err(Error::Domain("simulation grid must start at t = 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Domain("simulation grid must be strictly increasing".into()));
    }
    if let Measure::Terminal { maturity } = measure {
        let last = times[times.len() - 1];
        if !(maturity >= last) || !maturity.is_finite() {
            return Err(Error::Domain(format!("terminal measure maturity {maturity} precedes grid end {last}")));
        }
    }

    let n_times = times.len();
    let laws: Vec<StepLaw> = times
        .windows(2)
        .map(|w| {
            let shift = match measure {
                Measure::BankAccount => 0.0,
                Measure::Terminal { maturity } => forward_drift(params, w[0], w[1], maturity),
            };
            StepLaw::new(params, w[1] - w[0], shift)
        })
        .collect();
    let discount: Vec<DiscountLaw> = times
        .iter()
        .map(|&t| match measure {
            // P(0,t) exp(-V(0,t)/2), so that E[exp(-I(t))] restores P(0,t).
            Measure::BankAccount => DiscountLaw {
                scale: curve.df(t) * (-0.5 * params.integrated_variance(t)).exp(),
                b: 0.0,
            },
            Measure::Terminal { maturity } => {
                let (ln_a, b) = params.bond_terms(curve, t, maturity);
                DiscountLaw {
                    scale: curve.df(maturity) * (-ln_a).exp(),
                    b,
                }
            }
        })
        .collect();
    let bank = measure == Measure::BankAccount;

    let n_chunks = n_paths.div_ceil(PATH_CHUNK);
    let chunks: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * PATH_CHUNK;
            let len = PATH_CHUNK.min(n_paths - start);
            simulate_chunk(&laws, &discount, bank, seed, c as u64, len, antithetic)
        })
        .collect();

    let mut states = vec![0.0; n_paths * n_times];
    let mut numeraire_df = vec![0.0; n_paths * n_times];
    for (c, (xs, dfs)) in chunks.into_iter().enumerate() {
        let start = c * PATH_CHUNK;
        let len = xs.len() / n_times;
        for i in 0..n_times {
            let dst = i * n_paths + start;
            states[dst..dst + len].copy_from_slice(&xs[i * len..(i + 1) * len]);
            numeraire_df[dst..dst + len].copy_from_slice(&dfs[i * len..(i + 1) * len]);
        }
    }

    Ok(PathSet {
        times: times.to_vec(),
        n_paths,
        states,
        numeraire_df,
        seed,
        antithetic,
        params: *params,
        measure,
    })
}

/// One RNG substream; returns time-major `(x, discount)` blocks of `len` paths.
fn simulate_chunk(
    laws: &[StepLaw],
    discount: &[DiscountLaw],
    bank: bool,
    seed: u64,
    stream: u64,
    len: usize,
    antithetic: bool,
) -> (Vec<f64>, Vec<f64>) {
    let n_times = discount.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut xs = vec![0.0; len * n_times];
    let mut dfs = vec![0.0; len * n_times];
    let mut draws = vec![0.0; 2 * laws.len()];

    let mut run_path = |p: usize, draws: &[f64], sign: f64| {
        let (mut x, mut integral) = (0.0f64, 0.0f64);
        xs[p] = 0.0;
        dfs[p] = discount[0].scale;
        for (i, law) in laws.iter().enumerate() {
            let z1 = sign * draws[2 * i];
            let z2 = sign * draws[2 * i + 1];
            integral += x * law.drift_integral + law.loading_i * z1 + law.sd_i_resid * z2;
            x = x * law.decay - law.shift + law.sd_x * z1;
            xs[(i + 1) * len + p] = x;
            let d = &discount[i + 1];
            dfs[(i + 1) * len + p] = if bank { d.scale * (-integral).exp() } else { d.scale * (d.b * x).exp() };
        }
    };

    let mut p = 0;
    while p < len {
        for d in draws.iter_mut() {
            *d = StandardNormal.sample(&mut rng);
        }
        run_path(p, &draws, 1.0);
        p += 1;
        if antithetic && p < len {
            run_path(p, &draws, -1.0);
            p += 1;
        }
    }
    (xs, dfs)
}
