//! Zero-coupon curves, day counts and vanilla swap legs.
//!
//! Curves are quoted as continuously compounded zero rates on calendar
//! pillars; year fractions from the anchor date use ACT/365. Zero rates are
//! interpolated linearly in year fraction and extrapolated flat on both ends.
//!
//! Swap conventions: fixed leg annual 30/360, floating leg semiannual
//! ACT/360 projected off the forwarding curve, both legs discounted on the
//! discount curve. Schedules are whole-month offsets from the anchor date
//! with no holiday adjustment.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Valuation date of the bundled EUR curves.
pub const EUR_2019_ANCHOR: (i32, u32, u32) = (2019, 10, 31);

const EONIA_OIS_CSV: &str = include_str!("../../../data/eonia_ois.csv");
const EURIBOR_6M_CSV: &str = include_str!("../../../data/euribor_6m.csv");

const CSV_DATE_FORMAT: &str = "%d/%m/%y";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DayCount {
    Act365,
    Thirty360,
    Act360,
}

impl DayCount {
    pub fn year_fraction(self, start: NaiveDate, end: NaiveDate) -> f64 {
        match self {
            DayCount::Act365 => (end - start).num_days() as f64 / 365.0,
            DayCount::Act360 => (end - start).num_days() as f64 / 360.0,
            DayCount::Thirty360 => {
                // 30/360 bond basis
                let d1 = start.day().min(30) as i64;
                let d2 = if d1 == 30 { end.day().min(30) } else { end.day() } as i64;
                let days = 360 * (end.year() as i64 - start.year() as i64)
                    + 30 * (end.month() as i64 - start.month() as i64)
                    + (d2 - d1);
                days as f64 / 360.0
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveRole {
    Discount,
    Forwarding,
}

impl std::fmt::Display for CurveRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurveRole::Discount => f.write_str("discount"),
            CurveRole::Forwarding => f.write_str("forwarding"),
        }
    }
}

/// Dated zero-rate term structure.
#[derive(Debug, Clone, PartialEq)]
pub struct YieldCurve {
    anchor: NaiveDate,
    role: CurveRole,
    dates: Vec<NaiveDate>,
    times: Vec<f64>,
    rates: Vec<f64>,
}

impl YieldCurve {
    /// Builds a curve from `(date, zero rate)` pillars, rates as decimal fractions.
    pub fn new(anchor: NaiveDate, role: CurveRole, pillars: Vec<(NaiveDate, f64)>) -> Result<Self> {
        if pillars.len() < 2 {
            return Err(Error::Domain(format!(
                "a curve needs at least 2 pillars, got {}",
                pillars.len()
            )));
        }
        let mut dates = Vec::with_capacity(pillars.len());
        let mut times = Vec::with_capacity(pillars.len());
        let mut rates = Vec::with_capacity(pillars.len());
        for (i, &(date, rate)) in pillars.iter().enumerate() {
            if date < anchor {
                return Err(Error::Domain(format!(
                    "pillar {date} precedes anchor date {anchor}"
                )));
            }
            if i > 0 && date <= dates[i - 1] {
                return Err(Error::Domain(format!(
                    "pillar dates must be strictly increasing ({} then {date})",
                    dates[i - 1]
                )));
            }
            if !rate.is_finite() {
                return Err(Error::Domain(format!("non-finite zero rate at {date}")));
            }
            dates.push(date);
            times.push(DayCount::Act365.year_fraction(anchor, date));
            rates.push(rate);
        }
        Ok(YieldCurve {
            anchor,
            role,
            dates,
            times,
            rates,
        })
    }

    /// Flat curve with two pillars one year and `horizon_years` out.
    pub fn flat(anchor: NaiveDate, role: CurveRole, rate: f64, horizon_years: u32) -> Result<Self> {
        let far = add_months(anchor, 12 * horizon_years.max(2))?;
        let near = add_months(anchor, 12)?;
        YieldCurve::new(anchor, role, vec![(near, rate), (far, rate)])
    }

    /// Parses the `date,zero_rate_pct` CSV format, converting percent to decimal.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        source_name: &str,
        anchor: NaiveDate,
        role: CurveRole,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let date_col = headers.iter().position(|h| h == "date");
        let rate_col = headers.iter().position(|h| h == "zero_rate_pct");
        let (date_col, rate_col) = match (date_col, rate_col) {
            (Some(d), Some(r)) => (d, r),
            _ => {
                return Err(Error::format(
                    source_name,
                    "expected header `date,zero_rate_pct`",
                ))
            }
        };

        let mut pillars = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let row = line + 2;
            let date_str = record
                .get(date_col)
                .ok_or_else(|| Error::format(source_name, format!("row {row}: missing date")))?;
            let rate_str = record
                .get(rate_col)
                .ok_or_else(|| Error::format(source_name, format!("row {row}: missing zero_rate_pct")))?;
            let date = parse_curve_date(date_str)
                .ok_or_else(|| Error::format(source_name, format!("row {row}: bad date `{date_str}`")))?;
            let pct: f64 = rate_str
                .parse()
                .map_err(|_| Error::format(source_name, format!("row {row}: bad rate `{rate_str}`")))?;
            if let Some(&(prev, _)) = pillars.last() {
                if date <= prev {
                    return Err(Error::format(
                        source_name,
                        format!("row {row}: date {date} is not after {prev}"),
                    ));
                }
            }
            pillars.push((date, pct / 100.0));
        }
        YieldCurve::new(anchor, role, pillars).map_err(|e| Error::format(source_name, e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("date,zero_rate_pct\n");
        for (date, &rate) in self.dates.iter().zip(&self.rates) {
            let _ = writeln!(out, "{},{}", date.format(CSV_DATE_FORMAT), format_pct(rate));
        }
        out
    }

    pub fn anchor(&self) -> NaiveDate {
        self.anchor
    }

    pub fn role(&self) -> CurveRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn pillars(&self) -> impl Iterator<Item = (NaiveDate, f64, f64)> + '_ {
        self.dates
            .iter()
            .zip(&self.times)
            .zip(&self.rates)
            .map(|((&d, &t), &r)| (d, t, r))
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("curve has pillars")
    }

    pub fn year_fraction(&self, date: NaiveDate) -> f64 {
        DayCount::Act365.year_fraction(self.anchor, date)
    }

    /// Interpolated continuously compounded zero rate at year fraction `t`.
    pub fn zero_rate(&self, t: f64) -> Result<f64> {
        if t.is_nan() || t < 0.0 {
            return Err(Error::Domain(format!("zero rate requested at t = {t} < 0")));
        }
        Ok(self.zero_rate_unchecked(t))
    }

    fn zero_rate_unchecked(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.rates[0];
        }
        if t >= self.times[n - 1] {
            return self.rates[n - 1];
        }
        let i = self.times.partition_point(|&ti| ti <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        self.rates[i] + w * (self.rates[i + 1] - self.rates[i])
    }

    pub fn discount_factor(&self, t: f64) -> Result<f64> {
        let z = self.zero_rate(t)?;
        Ok((-z * t).exp())
    }

    /// Discount factor for `t >= 0`; negative inputs are clamped to 0.
    pub(crate) fn df(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        (-self.zero_rate_unchecked(t) * t).exp()
    }
}

/// Loads a curve CSV anchored at the bundled EUR valuation date.
pub fn load_curve(path: impl AsRef<Path>, role: CurveRole) -> Result<YieldCurve> {
    load_curve_anchored(path, role, eur_2019_anchor())
}

pub fn load_curve_anchored(path: impl AsRef<Path>, role: CurveRole, anchor: NaiveDate) -> Result<YieldCurve> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    YieldCurve::from_csv_reader(file, &path.display().to_string(), anchor, role)
}

pub fn eur_2019_anchor() -> NaiveDate {
    let (y, m, d) = EUR_2019_ANCHOR;
    NaiveDate::from_ymd_opt(y, m, d).expect("valid anchor")
}

/// Two-digit years are read as 20yy; the bundled pillars run to 2079.
fn parse_curve_date(s: &str) -> Option<NaiveDate> {
    let mut parts = s.trim().split('/');
    let day: u32 = parts.next()?.parse().ok()?;
    let month: u32 = parts.next()?.parse().ok()?;
    let year_str = parts.next()?;
    if parts.next().is_some() || year_str.len() != 2 {
        return None;
    }
    let year: i32 = year_str.parse().ok()?;
    NaiveDate::from_ymd_opt(2000 + year, month, day)
}

/// Shortest fixed-point percent string that parses back to exactly `rate`.
fn format_pct(rate: f64) -> String {
    let pct = rate * 100.0;
    for prec in 0..=17 {
        let s = format!("{pct:.prec$}");
        if let Ok(v) = s.parse::<f64>() {
            if v / 100.0 == rate {
                return s;
            }
        }
    }
    format!("{pct}")
}

pub(crate) fn add_months(date: NaiveDate, months: u32) -> Result<NaiveDate> {
    date.checked_add_months(Months::new(months))
        .ok_or_else(|| Error::Domain(format!("date overflow adding {months} months to {date}")))
}

/// Converts a year count to whole months, rejecting fractional months.
pub fn whole_months(years: f64) -> Result<u32> {
    let months = years * 12.0;
    let rounded = months.round();
    if !years.is_finite() || years < 0.0 || (months - rounded).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "schedule offsets must be a non-negative whole number of months, got {years} years"
        )));
    }
    Ok(rounded as u32)
}

/// Discount and forwarding curves sharing one anchor date.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketCurves {
    pub discount: YieldCurve,
    pub forwarding: YieldCurve,
}

impl MarketCurves {
    pub fn new(discount: YieldCurve, forwarding: YieldCurve) -> Result<Self> {
        if discount.anchor() != forwarding.anchor() {
            return Err(Error::Domain(format!(
                "discount anchor {} differs from forwarding anchor {}",
                discount.anchor(),
                forwarding.anchor()
            )));
        }
        Ok(MarketCurves { discount, forwarding })
    }

    /// Single-curve setup: forwards projected off the discount curve.
    pub fn single(curve: YieldCurve) -> Self {
        let mut forwarding = curve.clone();
        forwarding.role = CurveRole::Forwarding;
        MarketCurves {
            discount: curve,
            forwarding,
        }
    }

    /// The bundled EONIA OIS / EURIBOR 6M zero curves as of 31 October 2019.
    pub fn eur_2019() -> Self {
        let anchor = eur_2019_anchor();
        let discount = YieldCurve::from_csv_reader(EONIA_OIS_CSV.as_bytes(), "eonia_ois.csv", anchor, CurveRole::Discount)
            .expect("bundled EONIA curve parses");
        let forwarding =
            YieldCurve::from_csv_reader(EURIBOR_6M_CSV.as_bytes(), "euribor_6m.csv", anchor, CurveRole::Forwarding)
                .expect("bundled EURIBOR curve parses");
        MarketCurves { discount, forwarding }
    }

    pub fn anchor(&self) -> NaiveDate {
        self.discount.anchor()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPeriod {
    pub pay_date: NaiveDate,
    pub pay_time: f64,
    pub accrual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloatPeriod {
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub start_time: f64,
    pub end_time: f64,
    pub accrual: f64,
    /// Ratio of forwarding to discount growth over the period; the floating
    /// coupon pays `spread_factor * P(t, start) - P(t, end)` per unit notional.
    pub spread_factor: f64,
}

/// Cash-flow skeleton of a vanilla swap starting on a whole-month offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapLegs {
    pub start_date: NaiveDate,
    pub start_time: f64,
    pub fixed: Vec<FixedPeriod>,
    pub floating: Vec<FloatPeriod>,
}

impl SwapLegs {
    pub fn new(curves: &MarketCurves, start_months: u32, tenor_months: u32) -> Result<Self> {
        if tenor_months < 12 || !tenor_months.is_multiple_of(12) {
            return Err(Error::Domain(format!(
                "swap tenor must be a positive whole number of years (one annual fixed period at least), got {tenor_months} months"
            )));
        }
        let anchor = curves.anchor();
        let start_date = add_months(anchor, start_months)?;

        let mut fixed = Vec::with_capacity((tenor_months / 12) as usize);
        let mut prev = start_date;
        for k in 1..=tenor_months / 12 {
            let pay_date = add_months(anchor, start_months + 12 * k)?;
            fixed.push(FixedPeriod {
                pay_date,
                pay_time: curves.discount.year_fraction(pay_date),
                accrual: DayCount::Thirty360.year_fraction(prev, pay_date),
            });
            prev = pay_date;
        }

        let mut floating = Vec::with_capacity((tenor_months / 6) as usize);
        let mut prev = start_date;
        for j in 1..=tenor_months / 6 {
            let end_date = add_months(anchor, start_months + 6 * j)?;
            let start_time = curves.discount.year_fraction(prev);
            let end_time = curves.discount.year_fraction(end_date);
            let fwd_growth = curves.forwarding.df(start_time) / curves.forwarding.df(end_time);
            let disc_growth = curves.discount.df(start_time) / curves.discount.df(end_time);
            floating.push(FloatPeriod {
                start_date: prev,
                end_date,
                start_time,
                end_time,
                accrual: DayCount::Act360.year_fraction(prev, end_date),
                spread_factor: fwd_growth / disc_growth,
            });
            prev = end_date;
        }

        Ok(SwapLegs {
            start_date,
            start_time: curves.discount.year_fraction(start_date),
            fixed,
            floating,
        })
    }

    pub fn end_time(&self) -> f64 {
        self.fixed.last().map(|p| p.pay_time).unwrap_or(self.start_time)
    }

    /// Fixed-leg annuity under the bond-price function `bond(T)`.
    pub fn annuity(&self, bond: impl Fn(f64) -> f64) -> f64 {
        self.fixed.iter().map(|p| p.accrual * bond(p.pay_time)).sum()
    }

    pub fn floating_pv(&self, bond: impl Fn(f64) -> f64) -> f64 {
        self.floating
            .iter()
            .map(|p| p.spread_factor * bond(p.start_time) - bond(p.end_time))
            .sum()
    }

    /// Payer swap (receive floating, pay `strike`) per unit notional as a
    /// linear combination of discount bonds: `(pay_time, coefficient)` pairs,
    /// merged by date and sorted by time.
    pub fn payer_coefficients(&self, strike: f64) -> Vec<(f64, f64)> {
        let mut by_date: BTreeMap<NaiveDate, (f64, f64)> = BTreeMap::new();
        let mut add = |date: NaiveDate, time: f64, c: f64| {
            by_date.entry(date).or_insert((time, 0.0)).1 += c;
        };
        for p in &self.floating {
            add(p.start_date, p.start_time, p.spread_factor);
            add(p.end_date, p.end_time, -1.0);
        }
        for p in &self.fixed {
            add(p.pay_date, p.pay_time, -strike * p.accrual);
        }
        by_date.into_values().collect()
    }

    /// Par rate under the bond-price function `bond(T)`.
    pub fn par_rate(&self, bond: impl Fn(f64) -> f64 + Copy) -> f64 {
        self.floating_pv(bond) / self.annuity(bond)
    }
}

/// Forward par swap rate for a swap starting `start` years after the anchor
/// and running `tenor` years.
pub fn forward_swap_rate(discount: &YieldCurve, forwarding: &YieldCurve, start: f64, tenor: f64) -> Result<f64> {
    let curves = MarketCurves::new(discount.clone(), forwarding.clone())?;
    forward_swap_rate_on(&curves, start, tenor)
}

pub fn forward_swap_rate_on(curves: &MarketCurves, start: f64, tenor: f64) -> Result<f64> {
    if tenor < 1.0 {
        return Err(Error::Domain(format!(
            "tenor {tenor} is shorter than one annual fixed period"
        )));
    }
    let legs = SwapLegs::new(curves, whole_months(start)?, whole_months(tenor)?)?;
    Ok(legs.par_rate(|t| curves.discount.df(t)))
}
