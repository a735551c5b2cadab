//! Swaption contracts and closed-form European pricing under G1++.
//!
//! A European swaption is priced by decomposing the underlying swap into
//! zero-coupon bonds: the exercise boundary `x*` where the swap is worth
//! zero is found by bisection, and each bond cash flow becomes a zero-bond
//! option struck at its model price at `x*`.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::g1pp::G1ppParams;
use crate::market_data::{forward_swap_rate_on, whole_months, MarketCurves, SwapLegs};

/// Admissible swap tenors, in years.
pub const TENORS: [u32; 5] = [2, 5, 10, 15, 20];
/// Admissible no-call periods, in years.
pub const NO_CALLS: [u32; 9] = [1, 2, 3, 4, 5, 7, 10, 15, 20];
/// Admissible strike offsets from ATM, in basis points.
pub const STRIKE_OFFSETS_BP: [i32; 22] = [
    -100, -75, -60, -50, -40, -30, -25, -20, -15, -10, -7, -5, -2, 0, 20, 25, 30, 50, 100, 200, 300, 400,
];
pub const DEFAULT_NOTIONAL: f64 = 1e4;

const ROOT_TOLERANCE: f64 = 1e-12;
const BRACKET_STD_DEVS: f64 = 10.0;
const MAX_BRACKET_DOUBLINGS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Payer,
    Receiver,
}

impl Side {
    /// +1 for payer, -1 for receiver.
    pub fn sign(self) -> f64 {
        match self {
            Side::Payer => 1.0,
            Side::Receiver => -1.0,
        }
    }

    pub fn is_payer(self) -> bool {
        self == Side::Payer
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Payer => f.write_str("payer"),
            Side::Receiver => f.write_str("receiver"),
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "payer" | "p" => Ok(Side::Payer),
            "receiver" | "r" => Ok(Side::Receiver),
            other => Err(Error::Domain(format!("unknown side `{other}` (payer | receiver)"))),
        }
    }
}

/// Co-terminal Bermudan swaption with annual exercise.
///
/// Exercise dates are `no_call, no_call + 1, ..., no_call + tenor - 1`
/// years; exercising enters the swap running to `no_call + tenor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BermudanSpec {
    pub side: Side,
    pub no_call: u32,
    pub tenor: u32,
    pub strike_offset_bp: i32,
    pub notional: f64,
}

impl BermudanSpec {
    /// Builds a spec with the default notional, checked against the
    /// admissible contract grid.
    pub fn new(side: Side, no_call: u32, tenor: u32, strike_offset_bp: i32) -> Result<Self> {
        let spec = BermudanSpec {
            side,
            no_call,
            tenor,
            strike_offset_bp,
            notional: DEFAULT_NOTIONAL,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !NO_CALLS.contains(&self.no_call) {
            return Err(Error::Domain(format!("no-call {} not in {NO_CALLS:?}", self.no_call)));
        }
        if !TENORS.contains(&self.tenor) {
            return Err(Error::Domain(format!("tenor {} not in {TENORS:?}", self.tenor)));
        }
        if !STRIKE_OFFSETS_BP.contains(&self.strike_offset_bp) {
            return Err(Error::Domain(format!(
                "strike offset {} bp not in {STRIKE_OFFSETS_BP:?}",
                self.strike_offset_bp
            )));
        }
        self.validate_shape()
    }

    /// Structural checks only (positive tenor and no-call, finite notional).
    pub fn validate_shape(&self) -> Result<()> {
        if self.no_call == 0 || self.tenor == 0 {
            return Err(Error::Domain("no-call and tenor must be at least one year".into()));
        }
        if !(self.notional.is_finite() && self.notional > 0.0) {
            return Err(Error::Domain(format!("notional must be positive, got {}", self.notional)));
        }
        Ok(())
    }

    pub fn maturity(&self) -> u32 {
        self.no_call + self.tenor
    }

    /// Exercise dates in whole years from the anchor.
    pub fn exercise_years(&self) -> Vec<u32> {
        (self.no_call..self.maturity()).collect()
    }

    /// The co-terminal European entered at `exercise_year`, at `strike`.
    pub fn co_terminal_european(&self, exercise_year: u32, strike: f64) -> EuropeanSpec {
        EuropeanSpec {
            side: self.side,
            expiry: exercise_year as f64,
            tenor: (self.maturity() - exercise_year) as f64,
            strike,
            notional: self.notional,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EuropeanSpec {
    pub side: Side,
    /// Years to expiry (whole months).
    pub expiry: f64,
    /// Swap length in whole years.
    pub tenor: f64,
    /// Absolute fixed rate.
    pub strike: f64,
    pub notional: f64,
}

impl EuropeanSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.expiry > 0.0) {
            return Err(Error::Domain(format!("expiry must be positive, got {}", self.expiry)));
        }
        if !(self.tenor >= 1.0) {
            return Err(Error::Domain(format!("tenor must be at least one year, got {}", self.tenor)));
        }
        if !self.strike.is_finite() {
            return Err(Error::Domain("strike must be finite".into()));
        }
        if !(self.notional.is_finite() && self.notional > 0.0) {
            return Err(Error::Domain(format!("notional must be positive, got {}", self.notional)));
        }
        Ok(())
    }

    pub fn legs(&self, curves: &MarketCurves) -> Result<SwapLegs> {
        SwapLegs::new(curves, whole_months(self.expiry)?, whole_months(self.tenor)?)
    }
}

/// Absolute strike of a Bermudan: forward swap rate of the first-exercise
/// swap plus the basis-point offset. The same strike applies at every
/// exercise date.
pub fn atm_strike(spec: &BermudanSpec, curves: &MarketCurves) -> Result<f64> {
    let atm = forward_swap_rate_on(curves, spec.no_call as f64, spec.tenor as f64)?;
    Ok(atm + spec.strike_offset_bp as f64 * 1e-4)
}

/// Present value of the underlying payer swap (receive float, pay `strike`).
pub fn payer_swap_pv(spec: &EuropeanSpec, curves: &MarketCurves) -> Result<f64> {
    spec.validate()?;
    let legs = spec.legs(curves)?;
    let pv: f64 = legs
        .payer_coefficients(spec.strike)
        .iter()
        .map(|&(t, c)| c * curves.discount.df(t))
        .sum();
    Ok(spec.notional * pv)
}

/// Payer and receiver European values sharing one exercise-boundary solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuropeanPair {
    pub payer: f64,
    pub receiver: f64,
    /// Factor value at expiry where the underlying swap is worth zero.
    pub boundary: f64,
}

impl EuropeanPair {
    pub fn for_side(&self, side: Side) -> f64 {
        match side {
            Side::Payer => self.payer,
            Side::Receiver => self.receiver,
        }
    }
}

pub fn european_price_g1pp(spec: &EuropeanSpec, params: &G1ppParams, curves: &MarketCurves) -> Result<f64> {
    Ok(european_pair_g1pp(spec, params, curves)?.for_side(spec.side))
}

pub fn european_pair_g1pp(spec: &EuropeanSpec, params: &G1ppParams, curves: &MarketCurves) -> Result<EuropeanPair> {
    spec.validate()?;
    params.validate()?;
    let legs = spec.legs(curves)?;
    let pair = swaption_pair_unit(&legs, spec.strike, params, curves)?;
    Ok(EuropeanPair {
        payer: spec.notional * pair.payer,
        receiver: spec.notional * pair.receiver,
        boundary: pair.boundary,
    })
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Unit-notional payer/receiver values of the swap described by `legs`.
fn swaption_pair_unit(legs: &SwapLegs, strike: f64, params: &G1ppParams, curves: &MarketCurves) -> Result<EuropeanPair> {
    let curve = &curves.discount;
    let expiry = legs.start_time;
    let flows = legs.payer_coefficients(strike);

    // Swap value at expiry: constant + sum_k c_k exp(ln_a_k - b_k x).
    let mut constant = 0.0;
    let mut bonds = Vec::with_capacity(flows.len());
    for &(t, c) in &flows {
        if t <= expiry {
            constant += c;
        } else {
            let (ln_a, b) = params.bond_terms(curve, expiry, t);
            bonds.push((t, c, ln_a, b));
        }
    }
    let swap_value = |x: f64| constant + bonds.iter().map(|&(_, c, ln_a, b)| c * (ln_a - b * x).exp()).sum::<f64>();

    let sd = params.state_variance(expiry).sqrt();
    let boundary = find_boundary(&swap_value, sd)?;

    let p_expiry = curve.df(expiry);
    let mut payer = 0.0;
    let mut receiver = 0.0;
    for &(t, c, ln_a, b) in &bonds {
        let strike_bond = (ln_a - b * boundary).exp();
        let p_t = curve.df(t);
        let vol = sd * b;
        let (call, put) = if vol > 0.0 {
            let h = (p_t / (p_expiry * strike_bond)).ln() / vol + 0.5 * vol;
            (
                p_t * norm_cdf(h) - strike_bond * p_expiry * norm_cdf(h - vol),
                strike_bond * p_expiry * norm_cdf(vol - h) - p_t * norm_cdf(-h),
            )
        } else {
            let fwd = p_t - strike_bond * p_expiry;
            (fwd.max(0.0), (-fwd).max(0.0))
        };
        // The swap is increasing in x, so the payer exercises above the
        // boundary where every bond sits below its strike.
        payer -= c * put;
        receiver -= c * call;
    }
    if !(payer.is_finite() && receiver.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite swaption value (payer {payer}, receiver {receiver}) at boundary {boundary}"
        )));
    }
    Ok(EuropeanPair {
        payer: payer.max(0.0),
        receiver: receiver.max(0.0),
        boundary,
    })
}

/// Bisection for the zero of an increasing swap-value function.
fn find_boundary(f: &impl Fn(f64) -> f64, sd: f64) -> Result<f64> {
    let width = BRACKET_STD_DEVS * sd.max(1e-12);
    let (mut lo, mut hi) = (-width, width);
    let mut doublings = 0;
    loop {
        let (f_lo, f_hi) = (f(lo), f(hi));
        if f_lo < 0.0 && f_hi > 0.0 {
            break;
        }
        if doublings == MAX_BRACKET_DOUBLINGS {
            return Err(Error::Numerical(format!(
                "exercise boundary bracket exhausted after {doublings} doublings: f({lo:e}) = {f_lo:e}, f({hi:e}) = {f_hi:e}"
            )));
        }
        if !(f_lo < 0.0) {
            lo *= 2.0;
        }
        if !(f_hi > 0.0) {
            hi *= 2.0;
        }
        doublings += 1;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 || (f_mid.abs() < ROOT_TOLERANCE * 1e-3) {
            return Ok(mid);
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mid = 0.5 * (lo + hi);
    if f(mid).abs() < ROOT_TOLERANCE {
        Ok(mid)
    } else {
        Err(Error::Numerical(format!("bisection did not reach tolerance near x = {mid:e}")))
    }
}

/// Closed-form values of every co-terminal European of `spec`, in exercise order.
pub fn co_terminal_european_prices(spec: &BermudanSpec, params: &G1ppParams, curves: &MarketCurves) -> Result<Vec<f64>> {
    let strike = atm_strike(spec, curves)?;
    spec.exercise_years()
        .into_iter()
        .map(|year| european_price_g1pp(&spec.co_terminal_european(year, strike), params, curves))
        .collect()
}

/// The largest co-terminal European value; a lower bound on the Bermudan.
pub fn max_european(spec: &BermudanSpec, params: &G1ppParams, curves: &MarketCurves) -> Result<f64> {
    spec.validate_shape()?;
    let prices = co_terminal_european_prices(spec, params, curves)?;
    Ok(prices.into_iter().fold(0.0, f64::max))
}
