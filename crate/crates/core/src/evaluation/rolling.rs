//! Fixed-size rolling-window out-of-sample evaluation.

use std::collections::HashMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dm_test, dq_test_with_null, hits, tick_loss_series, DmResult, DqNull, DqResult};
use crate::error::{Error, Result};
use crate::model_builder::{direct_target, Target};
use crate::realized_measures::MeasurePanel;

/// Panel, returns and realized variances on a common set of days.
#[derive(Debug, Clone)]
pub struct EvalData {
    pub panel: MeasurePanel,
    pub returns: Vec<f64>,
    pub rv: Vec<f64>,
}

impl EvalData {
    /// Keeps panel days that have a return (implied vol stays aligned).
    pub fn new(panel: &MeasurePanel, returns: &[(NaiveDate, f64)]) -> Result<Self> {
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
        if rows.is_empty() {
            return Err(Error::NoValidDays);
        }
        let rv = rows.iter().map(|m| m.rv).collect();
        Ok(Self {
            panel: MeasurePanel { rows, implied_vol: iv },
            returns: r,
            rv,
        })
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.panel.dates()
    }

    pub fn series(&self, target: Target) -> &[f64] {
        match target {
            Target::Return => &self.returns,
            Target::RvSqrt => &self.rv,
        }
    }

    pub fn log_rv(&self) -> Vec<f64> {
        self.rv.iter().map(|v| v.ln()).collect()
    }

    /// Realized `h`-period target for origin `t`.
    pub fn observed(&self, target: Target, origin: usize, horizon: usize) -> Result<f64> {
        direct_target(self.series(target), origin, horizon, target)
    }
}

/// A forecasting method evaluated on rolling windows.
pub trait ForecastModel: Sync {
    fn name(&self) -> &str;
    fn target(&self) -> Target;
    /// Quantile forecasts of the `horizon`-period target for each origin,
    /// using only days `origin + 1 - window ..= origin`. Output is indexed
    /// `[origin][alpha]`.
    fn forecast(
        &self,
        data: &EvalData,
        origins: &[usize],
        window: usize,
        horizon: usize,
        alphas: &[f64],
    ) -> Result<Vec<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowScheme {
    pub window: usize,
    pub n_oos: usize,
}

impl Default for WindowScheme {
    fn default() -> Self {
        Self {
            window: 1000,
            n_oos: 500,
        }
    }
}

impl WindowScheme {
    /// Origins whose targets are the last `n_oos` `h`-period targets.
    pub fn origins(&self, len: usize, horizon: usize) -> Result<Vec<usize>> {
        let needed = self.window + horizon + self.n_oos;
        if len < needed || self.window == 0 || self.n_oos == 0 {
            return Err(Error::InsufficientHistory { needed, got: len });
        }
        let start = len - horizon - self.n_oos;
        Ok((start..len - horizon).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DqSettings {
    pub lags: usize,
    pub mc_reps: usize,
    pub seed: u64,
}

impl Default for DqSettings {
    fn default() -> Self {
        Self {
            lags: super::DEFAULT_DQ_LAGS,
            mc_reps: super::DEFAULT_MC_REPS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub model: String,
    pub alpha: f64,
    pub horizon: usize,
    pub n: usize,
    pub coverage: f64,
    pub mean_tick_loss: f64,
    pub dq: Option<DqResult>,
    pub dm: Option<DmResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub target: Target,
    pub scheme: WindowScheme,
    pub benchmark: Option<String>,
    pub dq: DqSettings,
    pub cells: Vec<EvalCell>,
    /// Forecast paths `[model][horizon][alpha]` for charts, with observed targets.
    pub paths: Vec<ForecastPath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastPath {
    pub model: String,
    pub horizon: usize,
    pub dates: Vec<NaiveDate>,
    pub observed: Vec<f64>,
    pub alphas: Vec<f64>,
    /// `quantiles[a][i]`.
    pub quantiles: Vec<Vec<f64>>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "model,alpha,horizon,n,coverage,mean_tick_loss,dq_lr,dq_p_mc,dq_p_asymptotic,dm_stat_model_minus_benchmark,dm_p_value,note\n",
        );
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.model,
                c.alpha,
                c.horizon,
                c.n,
                c.coverage,
                c.mean_tick_loss,
                fmt_opt(c.dq.as_ref().map(|d| d.lr_stat)),
                fmt_opt(c.dq.as_ref().map(|d| d.p_value_mc)),
                fmt_opt(c.dq.as_ref().map(|d| d.p_value_asymptotic)),
                fmt_opt(c.dm.as_ref().map(|d| d.stat)),
                fmt_opt(c.dm.as_ref().map(|d| d.p_value)),
                c.note.clone().unwrap_or_default()
            );
        }
        out
    }
}

/// Runs every model over the rolling scheme and tabulates coverage, tick
/// loss, the DQ test (one-step only) and DM tests against `benchmark`.
pub fn rolling_forecast_eval(
    models: &[&dyn ForecastModel],
    data: &EvalData,
    scheme: &WindowScheme,
    alphas: &[f64],
    horizons: &[usize],
    benchmark: Option<&str>,
    dq: &DqSettings,
) -> Result<EvalReport> {
    let target = models
        .first()
        .map(|m| m.target())
        .ok_or_else(|| Error::InvalidArgument("no models to evaluate".into()))?;
    if models.iter().any(|m| m.target() != target) {
        return Err(Error::InvalidArgument("all models must share a target".into()));
    }
    if let Some(b) = benchmark {
        if !models.iter().any(|m| m.name() == b) {
            return Err(Error::InvalidArgument(format!("benchmark '{b}' is not among the models")));
        }
    }
    let dates = data.dates();
    let mut paths = Vec::new();
    for &h in horizons {
        let origins = scheme.origins(data.len(), h)?;
        let observed = origins
            .iter()
            .map(|&t| data.observed(target, t, h))
            .collect::<Result<Vec<_>>>()?;
        for m in models {
            let f = m.forecast(data, &origins, scheme.window, h, alphas)?;
            if f.len() != origins.len() || f.iter().any(|row| row.len() != alphas.len()) {
                return Err(Error::DimensionMismatch {
                    expected: origins.len(),
                    got: f.len(),
                });
            }
            paths.push(ForecastPath {
                model: m.name().to_string(),
                horizon: h,
                dates: origins.iter().map(|&t| dates[t]).collect(),
                observed: observed.clone(),
                alphas: alphas.to_vec(),
                quantiles: (0..alphas.len()).map(|a| f.iter().map(|row| row[a]).collect()).collect(),
            });
        }
    }

    // one task per (path, alpha)
    let tasks: Vec<(usize, usize)> = (0..paths.len())
        .flat_map(|p| (0..alphas.len()).map(move |a| (p, a)))
        .collect();
    let partial: Vec<(EvalCell, Vec<f64>)> = tasks
        .par_iter()
        .map(|&(p, a)| {
            let path = &paths[p];
            let alpha = alphas[a];
            let q = &path.quantiles[a];
            let hs = hits(&path.observed, q, alpha, path.horizon)?;
            let losses = tick_loss_series(&path.observed, q, alpha)?;
            let mut note = None;
            let dqr = if path.horizon == 1 {
                match DqNull::simulate(q, alpha, dq.lags, dq.mc_reps, dq.seed)
                    .and_then(|null| dq_test_with_null(&hs, &null))
                {
                    Ok(r) => Some(r),
                    Err(e) => {
                        note = Some(format!("dq unavailable: {e}"));
                        None
                    }
                }
            } else {
                None
            };
            Ok((
                EvalCell {
                    model: path.model.clone(),
                    alpha,
                    horizon: path.horizon,
                    n: q.len(),
                    coverage: hs.coverage(),
                    mean_tick_loss: crate::numerics::mean(&losses),
                    dq: dqr,
                    dm: None,
                    note,
                },
                losses,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut cells = Vec::with_capacity(partial.len());
    for (cell, losses) in &partial {
        let mut cell = cell.clone();
        if let Some(b) = benchmark {
            let bench = partial
                .iter()
                .find(|(c, _)| c.model == b && c.horizon == cell.horizon && c.alpha == cell.alpha)
                .map(|(_, l)| l);
            if let Some(bl) = bench {
                match dm_test(losses, bl, cell.horizon) {
                    Ok(r) => cell.dm = Some(r),
                    Err(Error::DegenerateVariance) => {
                        let msg = "dm degenerate: identical losses".to_string();
                        cell.note = Some(match cell.note.take() {
                            Some(n) => format!("{n}; {msg}"),
                            None => msg,
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        cells.push(cell);
    }
    Ok(EvalReport {
        target,
        scheme: *scheme,
        benchmark: benchmark.map(String::from),
        dq: *dq,
        cells,
        paths,
    })
}
