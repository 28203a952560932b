//! Forecast models for the rolling evaluation: linear quantile regression,
//! CAViaR and the ARFIMA lognormal-normal mixture.

use serde::{Deserialize, Serialize};

use super::rolling::{EvalData, ForecastModel};
use crate::arfima_mixture::{fit_arfima, forecast_mixture, ArfimaConfig, ArfimaParams, ForecastSettings};
use crate::caviar::{
    evaluate_quantile_path, fit_caviar, CaviarData, CaviarForm, CaviarParams, CaviarSpec,
    ExogTiming, MultiStartConfig,
};
use crate::error::{Error, Result};
use crate::model_builder::{direct_target, features, FeatureTable, ModelSpec, Target, Term};
use crate::qr_core::{fit_lqr, Dataset};

fn window_start(origin: usize, window: usize) -> Result<usize> {
    (origin + 1).checked_sub(window).ok_or(Error::InsufficientHistory {
        needed: window,
        got: origin + 1,
    })
}

/// Linear quantile regression refitted at every origin.
#[derive(Debug, Clone)]
pub struct LqrModel {
    pub spec: ModelSpec,
}

impl LqrModel {
    pub fn new(spec: ModelSpec) -> Self {
        Self { spec }
    }

    fn forecast_one(
        &self,
        table: &FeatureTable,
        series: &[f64],
        origin: usize,
        window: usize,
        horizon: usize,
        alphas: &[f64],
    ) -> Result<Vec<f64>> {
        let start = window_start(origin, window)?.max(table.first_available().unwrap_or(usize::MAX));
        let x_now = table.rows[origin].as_ref().ok_or(Error::InsufficientHistory {
            needed: origin + 1,
            got: origin,
        })?;
        // rows whose targets end no later than the origin
        let rows: Vec<usize> = (start..=origin.saturating_sub(horizon)).filter(|&s| s + horizon <= origin).collect();
        let p = self.spec.regressors.len();
        if rows.len() <= p {
            return Err(Error::InsufficientHistory {
                needed: p + 1,
                got: rows.len(),
            });
        }
        let y = rows
            .iter()
            .map(|&s| direct_target(series, s, horizon, self.spec.target))
            .collect::<Result<Vec<_>>>()?;
        let x = nalgebra::DMatrix::from_fn(rows.len(), p, |i, j| table.rows[rows[i]].as_ref().unwrap()[j]);
        let dates = rows.iter().map(|&s| table.dates[s]).collect();
        let data = Dataset::new(y, x, table.labels.clone(), dates)?;
        alphas
            .iter()
            .map(|&a| {
                let fit = fit_lqr(&data, a)?;
                Ok(fit.beta.iter().zip(x_now).map(|(b, v)| b * v).sum())
            })
            .collect()
    }
}

impl ForecastModel for LqrModel {
    fn name(&self) -> &str {
        &self.spec.name
    }

    fn target(&self) -> Target {
        self.spec.target
    }

    fn forecast(
        &self,
        data: &EvalData,
        origins: &[usize],
        window: usize,
        horizon: usize,
        alphas: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let table = features(&data.panel, &self.spec)?;
        let series = data.series(self.spec.target);
        origins
            .iter()
            .map(|&t| self.forecast_one(&table, series, t, window, horizon, alphas))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaviarModelConfig {
    pub name: String,
    pub form: CaviarForm,
    /// Additional regressors, in model-builder notation (no intercept).
    pub exog: Vec<Term>,
    pub timing: ExogTiming,
    pub multistart: MultiStartConfig,
    /// Re-estimate every this many origins; the recursion is rerun on the
    /// current window in between.
    pub refit_every: usize,
}

/// CAViaR on daily returns, direct multi-horizon targets.
#[derive(Debug, Clone)]
pub struct CaviarModel {
    pub cfg: CaviarModelConfig,
}

impl CaviarModel {
    pub fn new(cfg: CaviarModelConfig) -> Self {
        Self { cfg }
    }

    /// Regressor rows (None during warm-up) and their labels.
    pub fn exog_rows(&self, data: &EvalData) -> Result<(Vec<Option<Vec<f64>>>, Vec<String>)> {
        if self.cfg.exog.is_empty() {
            return Ok((vec![Some(Vec::new()); data.len()], Vec::new()));
        }
        let mut terms = vec![Term::Intercept];
        terms.extend(self.cfg.exog.iter().cloned());
        let spec = ModelSpec::new(&self.cfg.name, Target::Return, 1, terms)?;
        let table = features(&data.panel, &spec)?;
        let rows = table.rows.into_iter().map(|r| r.map(|v| v[1..].to_vec())).collect();
        Ok((rows, spec.labels()[1..].to_vec()))
    }
}

impl ForecastModel for CaviarModel {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn target(&self) -> Target {
        Target::Return
    }

    fn forecast(
        &self,
        data: &EvalData,
        origins: &[usize],
        window: usize,
        horizon: usize,
        alphas: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let (exog_rows, labels) = self.exog_rows(data)?;
        let first = exog_rows.iter().position(|r| r.is_some()).unwrap_or(data.len());
        let refit_every = self.cfg.refit_every.max(1);
        let mut out = vec![vec![0.0; alphas.len()]; origins.len()];
        for (ai, &alpha) in alphas.iter().enumerate() {
            let spec = CaviarSpec {
                form: self.cfg.form,
                exog_labels: labels.clone(),
                alpha,
                horizon,
                timing: self.cfg.timing,
            };
            // parameters with the sample start and initial quantile of their
            // fit, so reuse extends the fitted recursion rather than restarting it
            let mut fitted: Option<(CaviarParams, usize, f64)> = None;
            for (i, &t) in origins.iter().enumerate() {
                let rows = |s: usize| -> Vec<Vec<f64>> {
                    exog_rows[s..=t].iter().map(|v| v.clone().unwrap_or_default()).collect()
                };
                let reuse = fitted.as_ref().filter(|_| i % refit_every != 0).map(|(p, s, q0)| {
                    let exog = rows(*s);
                    let d = CaviarData::new(&spec, &data.returns[*s..=t], &exog)?;
                    Ok::<f64, crate::Error>(evaluate_quantile_path(&spec, p, &d, *q0)?.1)
                });
                let q = match reuse {
                    Some(Ok(q)) => q,
                    _ => {
                        let start = window_start(t, window)?.max(first);
                        let cfg = MultiStartConfig {
                            seed: self.cfg.multistart.seed.wrapping_add(t as u64),
                            ..self.cfg.multistart
                        };
                        let fit = fit_caviar(&spec, &data.returns[start..=t], &rows(start), &cfg)?;
                        fitted = Some((fit.params, start, fit.q0));
                        fit.next_quantile
                    }
                };
                out[i][ai] = q;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArfimaModelConfig {
    pub name: String,
    pub target: Target,
    pub arfima: ArfimaConfig,
    pub n_draws: usize,
    pub seed: u64,
    pub refit_every: usize,
}

/// Daily ARFIMA for log RV; multi-day quantiles are simulated from the
/// daily model at every horizon.
#[derive(Debug, Clone)]
pub struct ArfimaModel {
    pub cfg: ArfimaModelConfig,
}

impl ArfimaModel {
    pub fn new(cfg: ArfimaModelConfig) -> Self {
        Self { cfg }
    }
}

impl ForecastModel for ArfimaModel {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn target(&self) -> Target {
        self.cfg.target
    }

    fn forecast(
        &self,
        data: &EvalData,
        origins: &[usize],
        window: usize,
        horizon: usize,
        alphas: &[f64],
    ) -> Result<Vec<Vec<f64>>> {
        let log_rv = data.log_rv();
        let truncation = self.cfg.arfima.truncation.min(window).max(100);
        let cfg = ArfimaConfig {
            truncation,
            ..self.cfg.arfima
        };
        let refit_every = self.cfg.refit_every.max(1);
        let mut params: Option<ArfimaParams> = None;
        let mut out = Vec::with_capacity(origins.len());
        for (i, &t) in origins.iter().enumerate() {
            let start = window_start(t, window)?;
            let hist = &log_rv[start..=t];
            if params.is_none() || i % refit_every == 0 {
                params = Some(fit_arfima(hist, &cfg)?.params);
            }
            let settings = ForecastSettings {
                horizon,
                alphas: alphas.to_vec(),
                n_draws: self.cfg.n_draws,
                seed: self.cfg.seed.wrapping_add(t as u64),
                truncation,
            };
            let f = forecast_mixture(params.as_ref().unwrap(), hist, &settings)?;
            out.push(match self.cfg.target {
                Target::Return => f.return_quantiles,
                Target::RvSqrt => f.rv_quantiles,
            });
        }
        Ok(out)
    }
}
