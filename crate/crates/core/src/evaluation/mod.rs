//! Backtesting of quantile forecasts: hits, tick loss, the dynamic-quantile
//! logistic likelihood-ratio test with Monte Carlo p-values, and
//! Diebold–Mariano comparisons with Newey–West variance.

pub mod rolling;
pub mod runners;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::numerics::norm_cdf;
use crate::qr_core::check_loss;

pub use rolling::{
    rolling_forecast_eval, DqSettings, EvalCell, EvalData, EvalReport, ForecastModel, ForecastPath, WindowScheme,
};
pub use runners::{ArfimaModel, ArfimaModelConfig, CaviarModel, CaviarModelConfig, LqrModel};

pub const DEFAULT_DQ_LAGS: usize = 5;
pub const DEFAULT_MC_REPS: usize = 9999;
const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitSeries {
    pub alpha: f64,
    pub hits: Vec<bool>,
    pub quantile_path: Vec<f64>,
    pub horizon: usize,
}

impl HitSeries {
    pub fn coverage(&self) -> f64 {
        self.hits.iter().filter(|h| **h).count() as f64 / self.hits.len().max(1) as f64
    }
}

/// `hit_t = 1{observed_t <= q_t}`.
pub fn hits(observed: &[f64], quantile_path: &[f64], alpha: f64, horizon: usize) -> Result<HitSeries> {
    if observed.len() != quantile_path.len() {
        return Err(Error::LengthMismatch(observed.len(), quantile_path.len()));
    }
    Ok(HitSeries {
        alpha,
        hits: observed.iter().zip(quantile_path).map(|(o, q)| o <= q).collect(),
        quantile_path: quantile_path.to_vec(),
        horizon,
    })
}

/// Check loss of each forecast error `observed - quantile`.
pub fn tick_loss_series(observed: &[f64], quantile_path: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if observed.len() != quantile_path.len() {
        return Err(Error::LengthMismatch(observed.len(), quantile_path.len()));
    }
    Ok(observed
        .iter()
        .zip(quantile_path)
        .map(|(o, q)| check_loss(o - q, alpha))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqResult {
    pub lr_stat: f64,
    pub p_value_mc: f64,
    pub p_value_asymptotic: f64,
    pub coverage_hat: f64,
    pub lags: usize,
    /// Degrees of freedom after dropping constant regressors.
    pub df: usize,
    /// The logit hit a (quasi-)separated sample; the statistic comes from the
    /// ridge-stabilized fit.
    pub separation: bool,
    pub mc_reps: usize,
}

/// Design for the hit regression: rows `t = lags..n`, columns
/// `[1, hit_{t-1..t-lags}, q_{t..t-lags+1}]` with non-constant columns
/// standardized and constant ones dropped.
struct DqDesign {
    rows: usize,
    cols: usize,
    x: Vec<f64>,
}

fn standardize_columns(cols: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    cols.into_iter()
        .filter_map(|c| {
            let m = crate::numerics::mean(&c);
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / c.len() as f64).sqrt();
            (sd > 1e-12 * (1.0 + m.abs())).then(|| c.iter().map(|v| (v - m) / sd).collect())
        })
        .collect()
}

impl DqDesign {
    /// The quantile columns only depend on the path, so they are built once.
    fn quantile_columns(path: &[f64], lags: usize) -> Vec<Vec<f64>> {
        let n = path.len();
        (0..lags).map(|k| (lags..n).map(|t| path[t - k]).collect()).collect()
    }

    fn build(hits: &[bool], qcols: &[Vec<f64>], lags: usize) -> Self {
        let n = hits.len();
        let rows = n - lags;
        let mut cols: Vec<Vec<f64>> = (1..=lags)
            .map(|k| (lags..n).map(|t| if hits[t - k] { 1.0 } else { 0.0 }).collect())
            .collect();
        cols.extend(qcols.iter().cloned());
        let kept = standardize_columns(cols);
        let ncols = kept.len() + 1;
        let mut x = Vec::with_capacity(rows * ncols);
        for i in 0..rows {
            x.push(1.0);
            for c in &kept {
                x.push(c[i]);
            }
        }
        Self { rows, cols: ncols, x }
    }
}

/// Log-likelihood, gradient and packed upper-triangular Hessian of the
/// ridge-penalized logit at `beta`, from a single pass over the rows.
struct LogitEval {
    loglik: f64,
    penalized: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

fn logit_eval(d: &DqDesign, y: &[f64], beta: &[f64]) -> LogitEval {
    let p = d.cols;
    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * (p + 1) / 2];
    for (row, &yi) in d.x.chunks_exact(p).zip(y) {
        let eta: f64 = row.iter().zip(beta).map(|(x, c)| x * c).sum();
        // log(1 + e^eta) and the logistic probability from one exponential
        let e = (-eta.abs()).exp();
        let softplus = eta.max(0.0) + e.ln_1p();
        let prob = if eta >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
        ll += yi * eta - softplus;
        let w = prob * (1.0 - prob);
        let r = yi - prob;
        let mut idx = 0;
        for j in 0..p {
            grad[j] += r * row[j];
            let wj = w * row[j];
            for &xk in &row[j..] {
                hess[idx] += wj * xk;
                idx += 1;
            }
        }
    }
    let ridge: f64 = beta[1..].iter().map(|v| v * v).sum();
    for j in 1..p {
        grad[j] -= RIDGE * beta[j];
    }
    LogitEval {
        loglik: ll,
        penalized: ll - 0.5 * RIDGE * ridge,
        grad,
        hess,
    }
}

/// Logit MLE with a small ridge on the slopes. Returns the unpenalized
/// log-likelihood at the optimum and a separation flag.
fn logit_fit(d: &DqDesign, y: &[f64]) -> (f64, bool) {
    let (n, p) = (d.rows, d.cols);
    let mut beta = vec![0.0; p];
    let eps = 0.5 / n as f64;
    let ybar = (y.iter().sum::<f64>() / n as f64).clamp(eps, 1.0 - eps);
    beta[0] = (ybar / (1.0 - ybar)).ln();
    let mut cur = logit_eval(d, y, &beta);
    let mut converged = false;
    for _ in 0..100 {
        let mut hess = nalgebra::DMatrix::<f64>::zeros(p, p);
        let mut idx = 0;
        for j in 0..p {
            for k in j..p {
                hess[(j, k)] = cur.hess[idx];
                hess[(k, j)] = cur.hess[idx];
                idx += 1;
            }
        }
        for j in 1..p {
            hess[(j, j)] += RIDGE;
        }
        hess[(0, 0)] += 1e-12;
        let Some(chol) = hess.cholesky() else { break };
        let step = chol.solve(&nalgebra::DVector::from_column_slice(&cur.grad));
        // half the Newton decrement bounds the remaining gain
        let decrement: f64 = step.iter().zip(&cur.grad).map(|(s, g)| s * g).sum();
        if decrement < 2e-10 * (1.0 + cur.penalized.abs()) {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let next = logit_eval(d, y, &cand);
            if next.penalized >= cur.penalized - 1e-12 * cur.penalized.abs() {
                beta = cand;
                cur = next;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            converged = true;
            break;
        }
    }
    let separation = !converged || beta[1..].iter().any(|b| b.abs() > 30.0);
    (cur.loglik, separation)
}

fn null_loglik(y: &[f64], alpha: f64) -> f64 {
    let ones = y.iter().sum::<f64>();
    ones * alpha.ln() + (y.len() as f64 - ones) * (1.0 - alpha).ln()
}

fn lr_statistic(hits: &[bool], qcols: &[Vec<f64>], lags: usize, alpha: f64) -> (f64, usize, bool) {
    let design = DqDesign::build(hits, qcols, lags);
    let y: Vec<f64> = hits[lags..].iter().map(|h| if *h { 1.0 } else { 0.0 }).collect();
    let (ll, sep) = logit_fit(&design, &y);
    ((2.0 * (ll - null_loglik(&y, alpha))).max(0.0), design.cols, sep)
}

/// Monte Carlo null distribution of the LR statistic for one quantile path:
/// hits are redrawn iid Bernoulli(alpha) with the path held fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqNull {
    pub alpha: f64,
    pub lags: usize,
    /// Sorted simulated statistics.
    pub stats: Vec<f64>,
    pub seed: u64,
}

impl DqNull {
    pub fn simulate(quantile_path: &[f64], alpha: f64, lags: usize, reps: usize, seed: u64) -> Result<Self> {
        check_dq_input(quantile_path.len(), lags)?;
        let qcols = DqDesign::quantile_columns(quantile_path, lags);
        let mut stats: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(rep as u64 + 1);
                let h: Vec<bool> = (0..quantile_path.len()).map(|_| rng.random::<f64>() < alpha).collect();
                lr_statistic(&h, &qcols, lags, alpha).0
            })
            .collect();
        stats.sort_by(f64::total_cmp);
        Ok(Self {
            alpha,
            lags,
            stats,
            seed,
        })
    }

    /// `(1 + #{LR_j >= lr}) / (reps + 1)`.
    pub fn p_value(&self, lr: f64) -> f64 {
        let below = self.stats.partition_point(|s| *s < lr);
        (1 + self.stats.len() - below) as f64 / (self.stats.len() + 1) as f64
    }
}

fn check_dq_input(n: usize, lags: usize) -> Result<()> {
    if lags == 0 {
        return Err(Error::InvalidArgument("DQ test needs at least one lag".into()));
    }
    let needed = 10 * (2 * lags + 1) + 1;
    if n < needed {
        return Err(Error::SeriesTooShort { needed, got: n });
    }
    Ok(())
}

/// DQ test using a precomputed null distribution for the same path.
pub fn dq_test_with_null(series: &HitSeries, null: &DqNull) -> Result<DqResult> {
    if series.horizon != 1 {
        return Err(Error::MultiStepRefused(series.horizon));
    }
    check_dq_input(series.hits.len(), null.lags)?;
    let qcols = DqDesign::quantile_columns(&series.quantile_path, null.lags);
    let (lr, df, separation) = lr_statistic(&series.hits, &qcols, null.lags, series.alpha);
    if separation {
        log::warn!("logit separation in DQ regression; ridge-stabilized statistic reported");
    }
    let chi = ChiSquared::new(df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(DqResult {
        lr_stat: lr,
        p_value_mc: null.p_value(lr),
        p_value_asymptotic: 1.0 - chi.cdf(lr),
        coverage_hat: series.coverage(),
        lags: null.lags,
        df,
        separation,
        mc_reps: null.stats.len(),
    })
}

/// Dynamic-quantile LR test of `P(hit) = alpha` with no dependence on
/// lagged hits or quantiles.
pub fn dq_test(series: &HitSeries, n_lags: usize, mc_reps: usize, seed: u64) -> Result<DqResult> {
    if series.horizon != 1 {
        return Err(Error::MultiStepRefused(series.horizon));
    }
    let null = DqNull::simulate(&series.quantile_path, series.alpha, n_lags, mc_reps, seed)?;
    dq_test_with_null(series, &null)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub stat: f64,
    pub p_value: f64,
    pub mean_loss_a: f64,
    pub mean_loss_b: f64,
    pub nw_lags: usize,
}

/// Bartlett-weighted long-run variance with `lags` autocovariances.
pub fn newey_west_variance(x: &[f64], lags: usize) -> f64 {
    let n = x.len();
    let m = crate::numerics::mean(x);
    let acov = |l: usize| (l..n).map(|t| (x[t] - m) * (x[t - l] - m)).sum::<f64>() / n as f64;
    let mut v = acov(0);
    for l in 1..=lags.min(n.saturating_sub(1)) {
        v += 2.0 * (1.0 - l as f64 / (lags + 1) as f64) * acov(l);
    }
    v
}

/// Diebold–Mariano test on `d = loss_a - loss_b` with `horizon - 1`
/// Newey–West lags; positive statistics favour model `b`.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64], horizon: usize) -> Result<DmResult> {
    dm_test_with_lags(loss_a, loss_b, horizon.saturating_sub(1))
}

pub fn dm_test_with_lags(loss_a: &[f64], loss_b: &[f64], nw_lags: usize) -> Result<DmResult> {
    if loss_a.len() != loss_b.len() {
        return Err(Error::LengthMismatch(loss_a.len(), loss_b.len()));
    }
    let n = loss_a.len();
    if n < 30 {
        return Err(Error::SeriesTooShort { needed: 30, got: n });
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    if d.iter().all(|v| *v == d[0]) {
        return Err(Error::DegenerateVariance);
    }
    let var = newey_west_variance(&d, nw_lags);
    if !(var > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let mean_d = crate::numerics::mean(&d);
    let stat = mean_d / (var / n as f64).sqrt();
    Ok(DmResult {
        stat,
        p_value: 2.0 * (1.0 - norm_cdf(stat.abs())),
        mean_loss_a: crate::numerics::mean(loss_a),
        mean_loss_b: crate::numerics::mean(loss_b),
        nw_lags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hit_conventions() {
        let h = hits(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0], 0.05, 1).unwrap();
        assert_eq!(h.coverage(), 0.0);
        let h = hits(&[1.0, -1.0], &[1.0, 0.0], 0.05, 1).unwrap();
        assert_eq!(h.hits, vec![true, true]);
        assert!(matches!(hits(&[1.0], &[], 0.1, 1), Err(Error::LengthMismatch(1, 0))));
    }

    #[test]
    fn tick_loss_examples() {
        let l = tick_loss_series(&[0.1, -0.1], &[0.0, 0.0], 0.05).unwrap();
        assert!((l[0] - 0.005).abs() < 1e-15);
        assert!((l[1] - 0.095).abs() < 1e-15);
        assert!(tick_loss_series(&[1.0, 2.0], &[1.0, 2.0], 0.3).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dm_contracts() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        assert!(matches!(dm_test(&a, &a, 1), Err(Error::DegenerateVariance)));
        let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.11).cos().abs()).collect();
        let ab = dm_test(&a, &b, 5).unwrap();
        let ba = dm_test(&b, &a, 5).unwrap();
        assert_eq!(ab.stat, -ba.stat);
        assert_eq!(ab.p_value, ba.p_value);
        assert_eq!(ab.nw_lags, 4);
        assert_eq!(ab.stat.signum(), (ab.mean_loss_a - ab.mean_loss_b).signum());
    }

    #[test]
    fn multi_step_refused() {
        let h = hits(&vec![0.0; 200], &vec![0.0; 200], 0.05, 5).unwrap();
        assert!(matches!(dq_test(&h, 5, 10, 0), Err(Error::MultiStepRefused(5))));
    }

    #[test]
    fn mc_p_value_counting() {
        let null = DqNull {
            alpha: 0.05,
            lags: 5,
            stats: vec![1.0, 2.0, 3.0],
            seed: 0,
        };
        assert_eq!(null.p_value(2.0), 0.75);
        assert_eq!(null.p_value(10.0), 0.25);
        assert_eq!(null.p_value(0.0), 1.0);
    }
}
