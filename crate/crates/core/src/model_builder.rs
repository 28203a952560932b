//! Named quantile-model specifications and their design matrices.
//!
//! Volatility regressors always enter as square roots (volatility units);
//! rolling means average the square-root series. Row `t` of a dataset holds
//! regressors known at the close of day `t` and the target formed from days
//! `t+1..=t+h`.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qr_core::Dataset;
use crate::realized_measures::{DailyMeasures, MeasurePanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Return,
    RvSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Measure {
    Rv,
    Iv,
    Jv,
    RsMinus,
    RsPlus,
}

impl Measure {
    fn key(self) -> &'static str {
        match self {
            Measure::Rv => "rv",
            Measure::Iv => "iv",
            Measure::Jv => "jv",
            Measure::RsMinus => "rs_minus",
            Measure::RsPlus => "rs_plus",
        }
    }

    fn from_key(s: &str) -> Option<Self> {
        Some(match s {
            "rv" => Measure::Rv,
            "iv" => Measure::Iv,
            "jv" => Measure::Jv,
            "rs_minus" => Measure::RsMinus,
            "rs_plus" => Measure::RsPlus,
            _ => return None,
        })
    }

    /// Square root of the day's measure.
    pub fn sqrt_value(self, row: &DailyMeasures) -> f64 {
        let v = match self {
            Measure::Rv => row.rv,
            Measure::Iv => row.iv,
            Measure::Jv => row.jv,
            Measure::RsMinus => row.rs_minus,
            Measure::RsPlus => row.rs_plus,
        };
        v.max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    /// Same-day square-root measure.
    Level(Measure),
    /// Mean of the square-root measure over the last `k` days.
    RollingMean(Measure, usize),
    ImpliedVol,
    Wednesday,
}

impl Term {
    pub fn lookback(self) -> usize {
        match self {
            Term::RollingMean(_, k) => k,
            _ => 1,
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => write!(f, "const"),
            Term::Level(m) => write!(f, "{}", m.key()),
            Term::RollingMean(m, k) => write!(f, "{}_mean{k}", m.key()),
            Term::ImpliedVol => write!(f, "impvol"),
            Term::Wednesday => write!(f, "wed"),
        }
    }
}

impl FromStr for Term {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        match s {
            "const" | "intercept" => return Ok(Term::Intercept),
            "impvol" => return Ok(Term::ImpliedVol),
            "wed" | "wednesday" => return Ok(Term::Wednesday),
            _ => {}
        }
        if let Some(m) = Measure::from_key(s) {
            return Ok(Term::Level(m));
        }
        if let Some((m, k)) = s.rsplit_once("_mean") {
            if let (Some(m), Ok(k)) = (Measure::from_key(m), k.parse::<usize>()) {
                if k >= 1 {
                    return Ok(Term::RollingMean(m, k));
                }
            }
        }
        Err(format!("unknown regressor '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub target: Target,
    pub horizon: usize,
    pub regressors: Vec<Term>,
}

impl ModelSpec {
    pub fn new(name: &str, target: Target, horizon: usize, regressors: Vec<Term>) -> Result<Self> {
        let spec = Self {
            name: name.to_string(),
            target,
            horizon,
            regressors,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        if self.regressors.first() != Some(&Term::Intercept) {
            return Err(Error::InvalidArgument("intercept must be the first regressor".into()));
        }
        if self.regressors[1..].contains(&Term::Intercept) {
            return Err(Error::InvalidArgument("intercept listed twice".into()));
        }
        Ok(())
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.regressors.iter().map(|t| t.to_string()).collect()
    }

    pub fn max_lookback(&self) -> usize {
        self.regressors.iter().map(|t| t.lookback()).max().unwrap_or(1)
    }

    pub fn uses_implied_vol(&self) -> bool {
        self.regressors.contains(&Term::ImpliedVol)
    }

    /// Parses `key = value` lines: `name`, `target` (`return` | `rv_sqrt`),
    /// `horizon`, and a comma-separated `regressors` list. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = None;
        let mut target = None;
        let mut horizon = 1;
        let mut regressors = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::SpecParse {
                line: lineno + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected key = value".into()))?;
            let value = value.trim();
            match key.trim() {
                "name" => name = Some(value.to_string()),
                "target" => {
                    target = Some(match value {
                        "return" => Target::Return,
                        "rv_sqrt" => Target::RvSqrt,
                        other => return Err(err(format!("unknown target '{other}'"))),
                    })
                }
                "horizon" => horizon = value.parse().map_err(|_| err(format!("bad horizon '{value}'")))?,
                "regressors" => {
                    regressors = Some(
                        value
                            .split(',')
                            .map(|t| t.parse::<Term>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(err)?,
                    )
                }
                other => return Err(err(format!("unknown key '{other}'"))),
            }
        }
        let missing = |what: &str| Error::SpecParse {
            line: 0,
            reason: format!("missing '{what}'"),
        };
        Self::new(
            &name.ok_or_else(|| missing("name"))?,
            target.ok_or_else(|| missing("target"))?,
            horizon,
            regressors.ok_or_else(|| missing("regressors"))?,
        )
    }

    pub fn to_spec_string(&self) -> String {
        format!(
            "name = {}\ntarget = {}\nhorizon = {}\nregressors = {}\n",
            self.name,
            match self.target {
                Target::Return => "return",
                Target::RvSqrt => "rv_sqrt",
            },
            self.horizon,
            self.labels().join(", ")
        )
    }
}

/// The reference return (LQR*) and volatility (HARQ*) specifications at `h = 1`.
pub fn builtin_specs() -> Vec<ModelSpec> {
    use Measure::*;
    use Term::*;
    let mk = |name: &str, target, terms: Vec<Term>| ModelSpec {
        name: name.into(),
        target,
        horizon: 1,
        regressors: terms,
    };
    vec![
        mk("LQR1", Target::Return, vec![Intercept, Level(Rv)]),
        mk("LQR2", Target::Return, vec![Intercept, Level(Iv), Level(Jv), ImpliedVol]),
        mk("LQR3", Target::Return, vec![Intercept, Level(RsPlus), Level(RsMinus), ImpliedVol]),
        mk(
            "HARQ1",
            Target::RvSqrt,
            vec![Intercept, Level(Rv), RollingMean(Rv, 5), RollingMean(Rv, 22)],
        ),
        mk(
            "HARQ2",
            Target::RvSqrt,
            vec![
                Intercept,
                Level(RsPlus),
                Level(RsMinus),
                RollingMean(Rv, 5),
                RollingMean(Rv, 22),
                ImpliedVol,
            ],
        ),
        mk(
            "HARQ3",
            Target::RvSqrt,
            vec![
                Intercept,
                Level(Iv),
                RollingMean(Iv, 5),
                RollingMean(Iv, 22),
                Level(Jv),
                ImpliedVol,
            ],
        ),
    ]
}

pub fn builtin_spec(name: &str) -> Result<ModelSpec> {
    let specs = builtin_specs();
    specs
        .iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .cloned()
        .ok_or_else(|| Error::UnknownSpec {
            name: name.to_string(),
            available: specs.iter().map(|s| s.name.clone()).collect::<Vec<_>>().join(", "),
        })
}

/// Trailing mean over `k` entries; the first `k - 1` entries are `None`.
pub fn rolling_mean(series: &[f64], k: usize) -> Result<Vec<Option<f64>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("window must be >= 1".into()));
    }
    if series.len() < k {
        return Err(Error::SeriesTooShort {
            needed: k,
            got: series.len(),
        });
    }
    let mut out = vec![None; series.len()];
    let mut sum: f64 = series[..k - 1].iter().sum();
    for t in k - 1..series.len() {
        sum += series[t];
        out[t] = Some(sum / k as f64);
        sum -= series[t + 1 - k];
    }
    Ok(out)
}

/// Target for origin `t`: the sum of the next `h` returns, or the square root
/// of the sum of the next `h` daily RVs.
pub fn direct_target(series: &[f64], t: usize, h: usize, target: Target) -> Result<f64> {
    if h == 0 || t + h >= series.len() {
        return Err(Error::IndexOutOfRange {
            index: t,
            horizon: h,
            len: series.len(),
        });
    }
    let s: f64 = series[t + 1..=t + h].iter().sum();
    Ok(match target {
        Target::Return => s,
        Target::RvSqrt => s.max(0.0).sqrt(),
    })
}

/// Regressor values available at the close of every day.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub dates: Vec<NaiveDate>,
    /// `None` during warm-up.
    pub rows: Vec<Option<Vec<f64>>>,
    /// Latest information date used by each row.
    pub info_dates: Vec<NaiveDate>,
    pub labels: Vec<String>,
}

impl FeatureTable {
    /// Index of the first row with all regressors available.
    pub fn first_available(&self) -> Option<usize> {
        self.rows.iter().position(|r| r.is_some())
    }
}

/// Evaluates the regressors of `spec` on every panel day.
pub fn features(panel: &MeasurePanel, spec: &ModelSpec) -> Result<FeatureTable> {
    spec.validate()?;
    let n = panel.len();
    if spec.uses_implied_vol() && panel.implied_vol.is_none() {
        return Err(Error::MissingImpliedVol);
    }
    let lookback = spec.max_lookback();
    if n < lookback {
        return Err(Error::InsufficientHistory {
            needed: lookback,
            got: n,
        });
    }
    let mut columns: Vec<Vec<Option<f64>>> = Vec::with_capacity(spec.regressors.len());
    let mut sqrt_cache: HashMap<Measure, Vec<f64>> = HashMap::new();
    let mut sqrt_series = |m: Measure| {
        sqrt_cache
            .entry(m)
            .or_insert_with(|| panel.rows.iter().map(|r| m.sqrt_value(r)).collect())
            .clone()
    };
    for term in &spec.regressors {
        let col = match *term {
            Term::Intercept => vec![Some(1.0); n],
            Term::Level(m) => sqrt_series(m).into_iter().map(Some).collect(),
            Term::RollingMean(m, k) => rolling_mean(&sqrt_series(m), k)?,
            Term::ImpliedVol => panel
                .implied_vol
                .as_ref()
                .map(|iv| iv.iter().map(|(_, v)| Some(*v)).collect())
                .unwrap_or_default(),
            Term::Wednesday => panel
                .rows
                .iter()
                .map(|r| Some(if r.day.weekday() == Weekday::Wed { 1.0 } else { 0.0 }))
                .collect(),
        };
        if col.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: col.len(),
            });
        }
        columns.push(col);
    }
    if spec
        .regressors
        .iter()
        .any(|t| matches!(t, Term::Level(Measure::Jv) | Term::RollingMean(Measure::Jv, _)))
        && panel.rows.iter().all(|r| !r.jump_flag)
    {
        log::warn!("{}: no significant jumps in the panel; JV regressor is identically zero", spec.name);
    }

    let dates = panel.dates();
    let mut info_dates = dates.clone();
    if spec.uses_implied_vol() {
        if let Some(iv) = &panel.implied_vol {
            for (d, (obs, _)) in info_dates.iter_mut().zip(iv) {
                *d = (*d).max(*obs);
            }
        }
    }
    let rows = (0..n)
        .map(|t| columns.iter().map(|c| c[t]).collect::<Option<Vec<f64>>>())
        .collect();
    Ok(FeatureTable {
        dates,
        rows,
        info_dates,
        labels: spec.labels(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltDataset {
    pub data: Dataset,
    pub spec: ModelSpec,
    /// Rows lost to regressor warm-up at the start and target horizon at the end.
    pub dropped_warmup: usize,
    pub dropped_horizon: usize,
    /// Latest information date of each row's regressors.
    pub info_dates: Vec<NaiveDate>,
    /// First and last dates entering each row's target.
    pub target_dates: Vec<(NaiveDate, NaiveDate)>,
}

/// Verifies that every regressor is dated no later than its row and strictly
/// before the first target date.
pub fn audit_look_ahead(built: &BuiltDataset) -> Result<()> {
    for (row, ((info, (first_target, _)), origin)) in built
        .info_dates
        .iter()
        .zip(&built.target_dates)
        .zip(&built.data.dates)
        .enumerate()
    {
        if info > origin || info >= first_target {
            return Err(Error::LookAhead {
                row,
                regressor: *info,
                target: *first_target,
            });
        }
    }
    Ok(())
}

fn assemble(table: FeatureTable, series: &[f64], spec: &ModelSpec) -> Result<BuiltDataset> {
    let n = table.dates.len();
    let h = spec.horizon;
    let p = spec.regressors.len();
    let start = table.first_available().unwrap_or(n);
    let end = n.saturating_sub(h); // exclusive
    let usable = end.saturating_sub(start);
    if usable <= p {
        return Err(Error::InsufficientHistory {
            needed: spec.max_lookback() - 1 + h + p + 1,
            got: n,
        });
    }
    let mut y = Vec::with_capacity(usable);
    let mut xs = Vec::with_capacity(usable * p);
    let mut dates = Vec::with_capacity(usable);
    let mut info_dates = Vec::with_capacity(usable);
    let mut target_dates = Vec::with_capacity(usable);
    for t in start..end {
        let row = table.rows[t].as_ref().ok_or(Error::InsufficientHistory {
            needed: t + 1,
            got: n,
        })?;
        y.push(direct_target(series, t, h, spec.target)?);
        xs.extend_from_slice(row);
        dates.push(table.dates[t]);
        info_dates.push(table.info_dates[t]);
        target_dates.push((table.dates[t + 1], table.dates[t + h]));
    }
    let x = DMatrix::from_row_slice(usable, p, &xs);
    let built = BuiltDataset {
        data: Dataset::new(y, x, table.labels, dates)?,
        spec: spec.clone(),
        dropped_warmup: start,
        dropped_horizon: n - end,
        info_dates,
        target_dates,
    };
    audit_look_ahead(&built)?;
    Ok(built)
}

/// Restricts the panel to days with a return, keeping implied vol aligned.
fn join_returns(panel: &MeasurePanel, returns: &[(NaiveDate, f64)]) -> (MeasurePanel, Vec<f64>) {
    let map: HashMap<NaiveDate, f64> = returns.iter().cloned().collect();
    let mut rows = Vec::new();
    let mut iv = panel.implied_vol.as_ref().map(|_| Vec::new());
    let mut r = Vec::new();
    for (i, row) in panel.rows.iter().enumerate() {
        if let Some(&ret) = map.get(&row.day) {
            rows.push(row.clone());
            r.push(ret);
            if let (Some(out), Some(src)) = (iv.as_mut(), panel.implied_vol.as_ref()) {
                out.push(src[i]);
            }
        }
    }
    let dropped = panel.len() - rows.len();
    if dropped > 0 {
        log::info!("{dropped} panel days without a return were skipped");
    }
    (
        MeasurePanel {
            rows,
            implied_vol: iv,
        },
        r,
    )
}

/// Return-quantile dataset: regressors at day `t`, target the sum of returns
/// over `t+1..=t+h`.
pub fn build_return_dataset(
    panel: &MeasurePanel,
    returns: &[(NaiveDate, f64)],
    spec: &ModelSpec,
) -> Result<BuiltDataset> {
    if spec.target != Target::Return {
        return Err(Error::InvalidArgument(format!("{} is not a return model", spec.name)));
    }
    let (joined, r) = join_returns(panel, returns);
    let table = features(&joined, spec)?;
    assemble(table, &r, spec)
}

/// Volatility-quantile dataset: target `sqrt(RV_{t+1} + ... + RV_{t+h})`.
pub fn build_rv_dataset(panel: &MeasurePanel, spec: &ModelSpec) -> Result<BuiltDataset> {
    if spec.target != Target::RvSqrt {
        return Err(Error::InvalidArgument(format!("{} is not a volatility model", spec.name)));
    }
    let table = features(panel, spec)?;
    let rv: Vec<f64> = panel.rows.iter().map(|r| r.rv).collect();
    assemble(table, &rv, spec)
}

/// Builds either kind of dataset from the spec's target.
pub fn build_dataset(
    panel: &MeasurePanel,
    returns: &[(NaiveDate, f64)],
    spec: &ModelSpec,
) -> Result<BuiltDataset> {
    match spec.target {
        Target::Return => build_return_dataset(panel, returns, spec),
        Target::RvSqrt => build_rv_dataset(panel, spec),
    }
}

/// CSV export: `date, target, <labels...>`.
pub fn write_dataset<W: Write>(writer: W, built: &BuiltDataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string(), "target".to_string()];
    header.extend(built.data.labels.iter().cloned());
    w.write_record(&header)?;
    for i in 0..built.data.n() {
        let mut rec = vec![built.data.dates[i].to_string(), format!("{}", built.data.y[i])];
        rec.extend((0..built.data.p()).map(|j| format!("{}", built.data.x[(i, j)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rolling_mean_examples() {
        let m = rolling_mean(&[1.0, 2.0, 3.0, 4.0, 5.0], 5).unwrap();
        assert_eq!(m[4], Some(3.0));
        assert!(m[..4].iter().all(|v| v.is_none()));
        let id = rolling_mean(&[1.5, -2.0], 1).unwrap();
        assert_eq!(id, vec![Some(1.5), Some(-2.0)]);
        let c = rolling_mean(&[2.0; 30], 22).unwrap();
        assert!(c[21..].iter().all(|v| (v.unwrap() - 2.0).abs() < 1e-15));
        assert!(matches!(rolling_mean(&[1.0], 2), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn direct_target_examples() {
        let r = [0.0, 1.0, -2.0, 0.5];
        assert_eq!(direct_target(&r, 0, 1, Target::Return).unwrap(), 1.0);
        assert_eq!(direct_target(&r, 0, 3, Target::Return).unwrap(), -0.5);
        let rv = [1.0; 6];
        assert!((direct_target(&rv, 0, 5, Target::RvSqrt).unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            direct_target(&r, 1, 3, Target::Return),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn spec_round_trip() {
        for spec in builtin_specs() {
            let text = spec.to_spec_string();
            assert_eq!(ModelSpec::parse(&text).unwrap(), spec);
        }
        let parsed = ModelSpec::parse("name = x\ntarget = rv_sqrt\nhorizon = 5\nregressors = const, rv, rv_mean5, impvol, wed # c\n").unwrap();
        assert_eq!(parsed.horizon, 5);
        assert_eq!(parsed.regressors[4], Term::Wednesday);
        assert!(matches!(ModelSpec::parse("name = x\ntarget = return\nregressors = rv"), Err(Error::InvalidArgument(_))));
        assert!(matches!(ModelSpec::parse("bogus"), Err(Error::SpecParse { line: 1, .. })));
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(builtin_spec("LQR9"), Err(Error::UnknownSpec { .. })));
        assert_eq!(builtin_spec("harq2").unwrap().regressors.len(), 6);
    }
}
