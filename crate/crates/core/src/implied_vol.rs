//! Model-free 30-day implied volatility from American futures-option
//! quotes: quote cleaning, Barone-Adesi–Whaley inversion, smile
//! interpolation in log-moneyness, variance-swap replication and
//! maturity interpolation.
//!
//! Rates are decimal and continuously compounded; maturities are measured
//! in calendar days over 365.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{brent, norm_cdf, norm_pdf, safeguarded_newton};

pub const DAYS_PER_YEAR: f64 = 365.0;
pub const TARGET_DAYS: i64 = 30;
pub const MIN_DAYS_TO_EXPIRY: i64 = 10;
pub const PRICE_FLOOR: f64 = 0.05;
pub const DEFAULT_GRID_POINTS: usize = 2001;
/// Half-width of the moneyness grid in ATM standard deviations.
pub const GRID_WIDTH_SD: f64 = 10.0;
pub const SIGMA_LOW: f64 = 1e-4;
pub const SIGMA_HIGH: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OptionType {
    Call,
    Put,
}

impl OptionType {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "c" | "call" => Some(Self::Call),
            "p" | "put" => Some(Self::Put),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub quote_date: NaiveDate,
    pub expiry: NaiveDate,
    pub underlying_future_expiry: NaiveDate,
    pub strike: f64,
    pub option_type: OptionType,
    pub price: f64,
    pub futures_price: f64,
    pub rate: f64,
}

impl OptionQuote {
    pub fn days_to_expiry(&self) -> i64 {
        (self.expiry - self.quote_date).num_days()
    }

    pub fn tau(&self) -> f64 {
        self.days_to_expiry() as f64 / DAYS_PER_YEAR
    }

    pub fn discount(&self) -> f64 {
        (-self.rate * self.tau()).exp()
    }

    pub fn intrinsic(&self) -> f64 {
        intrinsic(self.futures_price, self.strike, self.option_type)
    }
}

fn intrinsic(f: f64, x: f64, ty: OptionType) -> f64 {
    match ty {
        OptionType::Call => (f - x).max(0.0),
        OptionType::Put => (x - f).max(0.0),
    }
}

/// Discounted Black-76 value of a European futures option.
pub fn black76_price(f: f64, x: f64, tau: f64, sigma: f64, discount: f64, ty: OptionType) -> f64 {
    let sd = sigma * tau.max(0.0).sqrt();
    if !(sd > 1e-300) {
        return discount * intrinsic(f, x, ty);
    }
    let d1 = ((f / x).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    let v = match ty {
        OptionType::Call => f * norm_cdf(d1) - x * norm_cdf(d2),
        OptionType::Put => x * norm_cdf(-d2) - f * norm_cdf(-d1),
    };
    (discount * v).max(0.0)
}

/// Barone-Adesi–Whaley quadratic approximation for an American option on a
/// futures contract (zero cost of carry).
pub fn baw_price(f: f64, x: f64, tau: f64, sigma: f64, rate: f64, ty: OptionType) -> Result<f64> {
    let discount = (-rate * tau).exp();
    let euro = black76_price(f, x, tau, sigma, discount, ty);
    let intr = intrinsic(f, x, ty);
    // no early-exercise premium without positive rates or with no time value
    if rate <= 1e-12 || tau <= 0.0 || sigma * tau.sqrt() < 1e-10 {
        return Ok(euro.max(if rate > 1e-12 { intr } else { 0.0 }));
    }
    let sd = sigma * tau.sqrt();
    let k = 1.0 - discount;
    let m = 2.0 * rate / (sigma * sigma);
    let root = (1.0 + 4.0 * m / k).sqrt();
    let d1 = |s: f64| ((s / x).ln() + 0.5 * sd * sd) / sd;
    let price = match ty {
        OptionType::Call => {
            let q2 = 0.5 * (1.0 + root);
            let g = |s: f64| {
                let n1 = norm_cdf(d1(s));
                let c = black76_price(s, x, tau, sigma, discount, OptionType::Call);
                let val = s - x - c - (1.0 - discount * n1) * s / q2;
                let der = (1.0 - discount * n1) * (1.0 - 1.0 / q2) + discount * norm_pdf(d1(s)) / (q2 * sd);
                (val, der)
            };
            let mut hi = 2.0 * x;
            while g(hi).0 <= 0.0 {
                hi *= 2.0;
                if hi > 1e12 * x {
                    return Err(Error::RootFailure("call critical price unbounded".into()));
                }
            }
            let s_star = safeguarded_newton(g, x, hi, hi.min(2.0 * x), 1e-10, 200)?;
            if f >= s_star {
                intr
            } else {
                let a2 = s_star / q2 * (1.0 - discount * norm_cdf(d1(s_star)));
                euro + a2 * (f / s_star).powf(q2)
            }
        }
        OptionType::Put => {
            let q1 = 0.5 * (1.0 - root);
            let h = |s: f64| {
                let nm = norm_cdf(-d1(s));
                let p = black76_price(s, x, tau, sigma, discount, OptionType::Put);
                let val = x - s - p + (1.0 - discount * nm) * s / q1;
                let der = -1.0 + discount * nm + (1.0 - discount * nm) / q1 + discount * norm_pdf(d1(s)) / (q1 * sd);
                (val, der)
            };
            let lo = x * 1e-12;
            let s_star = safeguarded_newton(h, lo, x, 0.5 * x, 1e-10, 200)?;
            if f <= s_star {
                intr
            } else {
                let a1 = -s_star / q1 * (1.0 - discount * norm_cdf(-d1(s_star)));
                euro + a1 * (f / s_star).powf(q1)
            }
        }
    };
    Ok(price.max(euro).max(intr))
}

/// Volatility at which the BAW value matches the quoted price.
pub fn invert_baw_iv(q: &OptionQuote) -> Result<f64> {
    let tau = q.tau();
    let price_at = |s: f64| baw_price(q.futures_price, q.strike, tau, s, q.rate, q.option_type);
    let low = price_at(SIGMA_LOW)?;
    let high = price_at(SIGMA_HIGH)?;
    if !(q.price > low && q.price < high) {
        if (q.price - low).abs() <= 1e-12 {
            return Ok(SIGMA_LOW);
        }
        return Err(Error::NoBracket {
            price: q.price,
            low,
            high,
        });
    }
    let mut failure = None;
    let sigma = brent(
        |s| match price_at(s) {
            Ok(p) => p - q.price,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        SIGMA_LOW,
        SIGMA_HIGH,
        1e-12,
        200,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(sigma),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    InvalidInput,
    Maturity,
    PriceFloor,
    ArbitrageBound,
    NoImpliedVol,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::InvalidInput => "invalid input",
            DropReason::Maturity => "maturity",
            DropReason::PriceFloor => "price floor",
            DropReason::ArbitrageBound => "arbitrage bound",
            DropReason::NoImpliedVol => "no implied vol",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedQuote {
    pub quote: OptionQuote,
    pub reason: DropReason,
}

/// Applies, in order: maturity of at least ten days, the price floor and the
/// American bounds `intrinsic <= price`, `call <= F`, `put <= X`.
pub fn clean_quotes(raw: &[OptionQuote]) -> (Vec<OptionQuote>, Vec<DroppedQuote>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for q in raw {
        let valid = q.strike > 0.0
            && q.futures_price > 0.0
            && q.price.is_finite()
            && q.rate.is_finite()
            && q.strike.is_finite()
            && q.futures_price.is_finite();
        let upper = match q.option_type {
            OptionType::Call => q.futures_price,
            OptionType::Put => q.strike,
        };
        let reason = if !valid {
            Some(DropReason::InvalidInput)
        } else if q.days_to_expiry() < MIN_DAYS_TO_EXPIRY {
            Some(DropReason::Maturity)
        } else if q.price < PRICE_FLOOR {
            Some(DropReason::PriceFloor)
        } else if q.price < q.intrinsic() || q.price > upper {
            Some(DropReason::ArbitrageBound)
        } else {
            None
        };
        match reason {
            Some(reason) => dropped.push(DroppedQuote { quote: *q, reason }),
            None => kept.push(*q),
        }
    }
    (kept, dropped)
}

/// Implied volatilities on a log-moneyness grid for one expiry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmileGrid {
    pub expiry: NaiveDate,
    /// `k = ln(X / F)`, strictly increasing and symmetric around zero.
    pub moneyness: Vec<f64>,
    pub iv: Vec<f64>,
    pub forward: f64,
    pub tau: f64,
}

fn interp_flat(points: &[(f64, f64)], k: f64) -> f64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if k <= first.0 {
        return first.1;
    }
    if k >= last.0 {
        return last.1;
    }
    let j = points.partition_point(|p| p.0 <= k);
    let (k0, v0) = points[j - 1];
    let (k1, v1) = points[j];
    v0 + (v1 - v0) * (k - k0) / (k1 - k0)
}

/// Smile from `(k, iv)` points: linear in `k` between points, flat beyond
/// the extreme strikes, on `grid_points` (odd) nodes spanning ±10 ATM
/// standard deviations.
pub fn smile_from_points(
    expiry: NaiveDate,
    forward: f64,
    tau: f64,
    points: &[(f64, f64)],
    grid_points: usize,
) -> Result<SmileGrid> {
    if grid_points < 3 || grid_points % 2 == 0 {
        return Err(Error::InvalidArgument(format!(
            "moneyness grid needs an odd number of points >= 3, got {grid_points}"
        )));
    }
    if !(forward > 0.0 && tau > 0.0) {
        return Err(Error::InvalidArgument("forward and maturity must be positive".into()));
    }
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(k, v)| k.is_finite() && v.is_finite() && *v > 0.0)
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    // average duplicate strikes
    let mut merged: Vec<(f64, f64, usize)> = Vec::new();
    for (k, v) in pts {
        match merged.last_mut() {
            Some(last) if (last.0 - k).abs() < 1e-12 => {
                last.1 += v;
                last.2 += 1;
            }
            _ => merged.push((k, v, 1)),
        }
    }
    let pts: Vec<(f64, f64)> = merged.into_iter().map(|(k, s, c)| (k, s / c as f64)).collect();
    if pts.len() < 2 {
        return Err(Error::TooFewQuotes(pts.len()));
    }
    let atm = interp_flat(&pts, 0.0);
    let half = GRID_WIDTH_SD * atm * tau.sqrt();
    let mid = (grid_points / 2) as f64;
    let moneyness: Vec<f64> = (0..grid_points).map(|i| half * (i as f64 - mid) / mid).collect();
    let iv = moneyness.iter().map(|&k| interp_flat(&pts, k)).collect();
    Ok(SmileGrid {
        expiry,
        moneyness,
        iv,
        forward,
        tau,
    })
}

/// Out-of-the-money quotes (puts below the futures price, calls above;
/// both at the money) of one expiry, inverted and interpolated.
pub fn build_smile(quotes: &[OptionQuote], grid_points: usize) -> Result<(SmileGrid, Vec<DroppedQuote>)> {
    let first = quotes.first().ok_or(Error::TooFewQuotes(0))?;
    if quotes.iter().any(|q| q.expiry != first.expiry || q.quote_date != first.quote_date) {
        return Err(Error::InvalidArgument("smile quotes must share quote date and expiry".into()));
    }
    let forward = median(quotes.iter().map(|q| q.futures_price).collect());
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for q in quotes {
        let otm = match q.option_type {
            OptionType::Put => q.strike <= forward,
            OptionType::Call => q.strike >= forward,
        };
        if !otm {
            continue;
        }
        match invert_baw_iv(q) {
            Ok(iv) => points.push(((q.strike / forward).ln(), iv)),
            Err(e) => {
                log::warn!(
                    "{} {} strike {}: dropped ({e})",
                    q.quote_date,
                    q.expiry,
                    q.strike
                );
                dropped.push(DroppedQuote {
                    quote: *q,
                    reason: DropReason::NoImpliedVol,
                });
            }
        }
    }
    if points.len() < 2 {
        return Err(Error::TooFewQuotes(points.len()));
    }
    let smile = smile_from_points(first.expiry, forward, first.tau(), &points, grid_points)?;
    Ok((smile, dropped))
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

/// Model-free implied variance for one maturity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermPoint {
    pub expiry: NaiveDate,
    pub days: i64,
    /// Annualized implied variance.
    pub imv: f64,
    pub discount: f64,
}

/// Reprices the smile with Black-76 and integrates out-of-the-money option
/// prices over `X^2` (trapezoid in strike), scaled by `2 / (B tau)`.
pub fn synth_variance_swap(smile: &SmileGrid, discount: f64, days: i64) -> TermPoint {
    let f = smile.forward;
    let integrand: Vec<(f64, f64)> = smile
        .moneyness
        .iter()
        .zip(&smile.iv)
        .map(|(&k, &s)| {
            let x = f * k.exp();
            let ty = if k < 0.0 { OptionType::Put } else { OptionType::Call };
            (x, black76_price(f, x, smile.tau, s, discount, ty) / (x * x))
        })
        .collect();
    let integral: f64 = integrand
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum();
    TermPoint {
        expiry: smile.expiry,
        days,
        imv: (2.0 / (discount * smile.tau) * integral).max(0.0),
        discount,
    }
}

/// Linear interpolation in total variance to a 30-calendar-day horizon.
/// With both maturities on one side of 30 days the same line extrapolates
/// (clamped at zero).
pub fn interp_30d(p1: &TermPoint, p2: &TermPoint) -> Result<f64> {
    let (p1, p2) = if p1.days <= p2.days { (p1, p2) } else { (p2, p1) };
    if p1.days == p2.days || p1.days <= 0 {
        return Err(Error::NoBracketingMaturities);
    }
    let (t1, t2, ts) = (p1.days as f64, p2.days as f64, TARGET_DAYS as f64);
    let v = (p1.imv * t1 * (t2 - ts) + p2.imv * t2 * (ts - t1)) / ((t2 - t1) * ts);
    Ok(v.max(0.0))
}

/// The two nearest maturities around 30 days: the latest one at or before
/// 30 days with the earliest one after it, or else the two closest.
pub fn select_maturities(points: &[TermPoint]) -> Result<(TermPoint, TermPoint)> {
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.days);
    pts.dedup_by_key(|p| p.days);
    if pts.len() < 2 {
        return Err(Error::NoBracketingMaturities);
    }
    let split = pts.partition_point(|p| p.days <= TARGET_DAYS);
    let i = if split == 0 {
        0
    } else if split == pts.len() {
        pts.len() - 2
    } else {
        split - 1
    };
    Ok((pts[i], pts[i + 1]))
}

/// What to do on a quote date with a single usable maturity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingleMaturity {
    /// Skip the day.
    #[default]
    Skip,
    /// Use that maturity's implied variance and flag the row.
    Nearest,
}

impl std::str::FromStr for SingleMaturity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "skip" => Ok(Self::Skip),
            "nearest" => Ok(Self::Nearest),
            other => Err(Error::InvalidArgument(format!(
                "single-maturity fallback must be 'skip' or 'nearest', got '{other}'"
            ))),
        }
    }
}

impl fmt::Display for SingleMaturity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Skip => "skip",
            Self::Nearest => "nearest",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedVolSettings {
    pub grid_points: usize,
    pub single_maturity: SingleMaturity,
}

impl Default for ImpliedVolSettings {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            single_maturity: SingleMaturity::Skip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedVolPoint {
    pub date: NaiveDate,
    pub imv_30d: f64,
    /// `sqrt(imv_30d)`, annualized decimal volatility.
    pub iv_30d: f64,
    /// Only one maturity was available; the value is not interpolated.
    pub single_maturity: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpliedVolReport {
    pub series: Vec<ImpliedVolPoint>,
    pub dropped: Vec<DroppedQuote>,
    /// Quote dates without a usable pair of maturities, with the reason.
    pub skipped_days: Vec<(NaiveDate, String)>,
}

fn day_index(quotes: &[OptionQuote], settings: &ImpliedVolSettings) -> (Result<(f64, bool)>, Vec<DroppedQuote>) {
    let mut by_expiry: BTreeMap<NaiveDate, Vec<OptionQuote>> = BTreeMap::new();
    for q in quotes {
        by_expiry.entry(q.expiry).or_default().push(*q);
    }
    let mut dropped = Vec::new();
    let mut terms = Vec::new();
    for (_, qs) in by_expiry {
        match build_smile(&qs, settings.grid_points) {
            Ok((smile, d)) => {
                dropped.extend(d);
                let rate = qs.iter().map(|q| q.rate).sum::<f64>() / qs.len() as f64;
                let days = qs[0].days_to_expiry();
                let discount = (-rate * days as f64 / DAYS_PER_YEAR).exp();
                terms.push(synth_variance_swap(&smile, discount, days));
            }
            Err(e) => log::debug!("expiry {} skipped: {e}", qs[0].expiry),
        }
    }
    let v = match (terms.as_slice(), settings.single_maturity) {
        ([only], SingleMaturity::Nearest) => Ok((only.imv, true)),
        _ => select_maturities(&terms).and_then(|(a, b)| interp_30d(&a, &b)).map(|v| (v, false)),
    };
    (v, dropped)
}

/// Full pipeline: clean, build a smile per expiry, replicate, interpolate.
/// Quote dates are processed in parallel; output is date-ordered.
pub fn implied_vol_series(raw: &[OptionQuote], settings: &ImpliedVolSettings) -> ImpliedVolReport {
    let (kept, mut dropped) = clean_quotes(raw);
    for d in &dropped {
        log::debug!("{} {} strike {}: dropped ({})", d.quote.quote_date, d.quote.expiry, d.quote.strike, d.reason);
    }
    let mut by_date: BTreeMap<NaiveDate, Vec<OptionQuote>> = BTreeMap::new();
    for q in kept {
        by_date.entry(q.quote_date).or_default().push(q);
    }
    let days: Vec<(NaiveDate, Vec<OptionQuote>)> = by_date.into_iter().collect();
    let results: Vec<(NaiveDate, Result<(f64, bool)>, Vec<DroppedQuote>)> = days
        .par_iter()
        .map(|(d, qs)| {
            let (v, dr) = day_index(qs, settings);
            (*d, v, dr)
        })
        .collect();
    let mut series = Vec::new();
    let mut skipped_days = Vec::new();
    for (date, v, dr) in results {
        dropped.extend(dr);
        match v {
            Ok((imv, single)) => {
                if single {
                    log::warn!("{date}: single maturity, using its implied variance");
                }
                series.push(ImpliedVolPoint {
                    date,
                    imv_30d: imv,
                    iv_30d: imv.sqrt(),
                    single_maturity: single,
                })
            }
            Err(e) => {
                log::warn!("{date}: no 30-day implied variance ({e})");
                skipped_days.push((date, e.to_string()));
            }
        }
    }
    ImpliedVolReport {
        series,
        dropped,
        skipped_days,
    }
}

/// Zero rates by curve date and maturity in days.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ZeroCurve {
    pub curves: BTreeMap<NaiveDate, Vec<(f64, f64)>>,
}

impl ZeroCurve {
    /// Curve from the latest date on or before `date` (else the earliest),
    /// linear in maturity with flat extrapolation.
    pub fn rate(&self, date: NaiveDate, days: f64) -> Option<f64> {
        let curve = self
            .curves
            .range(..=date)
            .next_back()
            .or_else(|| self.curves.iter().next())
            .map(|(_, c)| c)?;
        (!curve.is_empty()).then(|| interp_flat(curve, days))
    }

    pub fn apply(&self, quotes: &mut [OptionQuote]) {
        for q in quotes {
            if let Some(r) = self.rate(q.quote_date, q.days_to_expiry() as f64) {
                q.rate = r;
            }
        }
    }
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok()
}

/// Reads `date,expiry,strike,cp_flag,settle_price,futures_price` with an
/// optional `future_expiry` column. Rates are zero until a curve is applied.
pub fn read_quotes<R: Read>(reader: R) -> Result<Vec<OptionQuote>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let missing = |name: &str| Error::UnparseableRow {
        row: 0,
        reason: format!("missing column '{name}'"),
    };
    let names = ["date", "expiry", "strike", "cp_flag", "settle_price", "futures_price"];
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(names) {
        *slot = col(name).ok_or_else(|| missing(name))?;
    }
    let fut = col("future_expiry");
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::UnparseableRow {
            row: i + 1,
            reason: reason.to_string(),
        };
        let get = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize, what: &str| get(j).parse::<f64>().map_err(|_| bad(what));
        let quote_date = parse_date(get(idx[0])).ok_or_else(|| bad("bad date"))?;
        let expiry = parse_date(get(idx[1])).ok_or_else(|| bad("bad expiry"))?;
        let underlying_future_expiry = match fut {
            Some(j) => parse_date(get(j)).ok_or_else(|| bad("bad future_expiry"))?,
            None => expiry,
        };
        out.push(OptionQuote {
            quote_date,
            expiry,
            underlying_future_expiry,
            strike: num(idx[2], "bad strike")?,
            option_type: OptionType::parse(get(idx[3])).ok_or_else(|| bad("bad cp_flag"))?,
            price: num(idx[4], "bad settle_price")?,
            futures_price: num(idx[5], "bad futures_price")?,
            rate: 0.0,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyFile);
    }
    Ok(out)
}

/// Reads `date,days,rate` (decimal, continuously compounded).
pub fn read_zero_curve<R: Read>(reader: R) -> Result<ZeroCurve> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut curves: BTreeMap<NaiveDate, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: &str| Error::UnparseableRow {
            row: i + 1,
            reason: reason.to_string(),
        };
        let date = rec.get(0).and_then(parse_date).ok_or_else(|| bad("bad date"))?;
        let days: f64 = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad days"))?;
        let rate: f64 = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad rate"))?;
        curves.entry(date).or_default().push((days, rate));
    }
    if curves.is_empty() {
        return Err(Error::EmptyFile);
    }
    for c in curves.values_mut() {
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    Ok(ZeroCurve { curves })
}

pub fn write_implied_vol_series<W: Write>(writer: W, series: &[ImpliedVolPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "imv_30d", "iv_30d", "flag"])?;
    for p in series {
        w.write_record([
            p.date.to_string(),
            format!("{:.12}", p.imv_30d),
            format!("{:.12}", p.iv_30d),
            if p.single_maturity { "single_maturity" } else { "" }.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn black76_atm_reference() {
        let c = black76_price(100.0, 100.0, 0.25, 0.2, 1.0, OptionType::Call);
        assert!((c - 3.9878).abs() < 5e-5, "{c}");
    }

    #[test]
    fn black76_parity_and_limit() {
        let d = 0.97;
        for x in [80.0, 100.0, 125.0] {
            let c = black76_price(100.0, x, 0.5, 0.3, d, OptionType::Call);
            let p = black76_price(100.0, x, 0.5, 0.3, d, OptionType::Put);
            assert!((c - p - d * (100.0 - x)).abs() < 1e-10);
        }
        assert_eq!(black76_price(100.0, 90.0, 0.5, 0.0, d, OptionType::Call), d * 10.0);
        assert_eq!(black76_price(100.0, 90.0, 0.5, 0.0, d, OptionType::Put), 0.0);
    }

    #[test]
    fn baw_zero_rate_is_european() {
        let b = baw_price(100.0, 95.0, 0.5, 0.25, 0.0, OptionType::Call).unwrap();
        let e = black76_price(100.0, 95.0, 0.5, 0.25, 1.0, OptionType::Call);
        assert!(b >= e && b - e < 1e-4);
    }

    #[test]
    fn deep_itm_put_near_intrinsic() {
        let b = baw_price(50.0, 100.0, 0.1, 0.2, 0.05, OptionType::Put).unwrap();
        assert!((b - 50.0).abs() / 50.0 < 0.005, "{b}");
    }

    #[test]
    fn interpolation_contracts() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let p = |days, imv| TermPoint { expiry: d, days, imv, discount: 1.0 };
        assert!((interp_30d(&p(20, 0.05), &p(40, 0.05)).unwrap() - 0.05).abs() < 1e-15);
        assert!((interp_30d(&p(30, 0.03), &p(58, 0.07)).unwrap() - 0.03).abs() < 1e-15);
        assert!(matches!(interp_30d(&p(30, 0.03), &p(30, 0.07)), Err(Error::NoBracketingMaturities)));
    }

    #[test]
    fn maturity_selection() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let p = |days| TermPoint { expiry: d, days, imv: 0.04, discount: 1.0 };
        let (a, b) = select_maturities(&[p(75), p(15), p(45)]).unwrap();
        assert_eq!((a.days, b.days), (15, 45));
        let (a, b) = select_maturities(&[p(70), p(35), p(100)]).unwrap();
        assert_eq!((a.days, b.days), (35, 70));
        assert!(select_maturities(&[p(35)]).is_err());
    }
}
