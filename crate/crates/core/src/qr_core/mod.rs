//! Linear quantile regression by check-loss minimization.
//!
//! [`fit_lqr`] runs the Frisch–Newton interior point solver in [`ipm`] and
//! then tries to snap the result onto an exact basic solution (a fit that
//! interpolates `p` observations). The snapped solution is kept only when it
//! strictly lowers the objective, so at non-unique optima the interior-point
//! answer wins. [`simplex`] is an exact dense solver for small problems.

pub mod bootstrap;
pub mod ipm;
pub mod simplex;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bootstrap::{default_block_length, mbb_covariance, BootstrapConfig, BootstrapResult};

/// Duality-gap tolerance (per observation) for the interior point solver.
pub const GAP_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 200;

/// Check (pinball) loss.
pub fn check_loss(x: f64, alpha: f64) -> f64 {
    if x < 0.0 {
        (alpha - 1.0) * x
    } else {
        alpha * x
    }
}

/// Mean check loss of `y - X beta`.
pub fn objective(x: &DMatrix<f64>, y: &[f64], beta: &[f64], alpha: f64) -> f64 {
    let b = DVector::from_column_slice(beta);
    let fit = x * b;
    y.iter()
        .zip(fit.iter())
        .map(|(yi, fi)| check_loss(yi - fi, alpha))
        .sum::<f64>()
        / y.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub labels: Vec<String>,
    pub dates: Vec<NaiveDate>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, labels: Vec<String>, dates: Vec<NaiveDate>) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if labels.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: labels.len(),
            });
        }
        if dates.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: dates.len(),
            });
        }
        if n <= p {
            return Err(Error::InvalidArgument(format!("need n > p, got n = {n}, p = {p}")));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite entry in dataset".into()));
        }
        Ok(Self { y, x, labels, dates })
    }

    /// Builds a dataset with placeholder dates, mostly for tests and simulations.
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        let p = labels.len();
        let n = rows.len();
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let base = NaiveDate::from_ymd_opt(2000, 1, 1).unwrap();
        let dates = (0..n).map(|i| base + chrono::Days::new(i as u64)).collect();
        Self::new(y, x, labels, dates)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Sub-dataset of the given rows (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(rows),
            labels: self.labels.clone(),
            dates: rows.iter().map(|&i| self.dates[i]).collect(),
        }
    }

    pub fn slice(&self, start: usize, end: usize) -> Dataset {
        let rows: Vec<usize> = (start..end).collect();
        self.select_rows(&rows)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Mean check loss at `beta`.
    pub objective: f64,
    pub cov: Option<Vec<Vec<f64>>>,
    pub tstats: Option<Vec<f64>>,
    pub iterations: usize,
}

/// Numerical rank from the singular values.
pub fn matrix_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    let tol = max * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON * 10.0;
    sv.iter().filter(|&&s| s > tol).count()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Tries to find an exact basic solution near `beta`: interpolate the `p`
/// observations with the smallest absolute residuals that give a nonsingular
/// system.
fn purify(x: &DMatrix<f64>, y: &[f64], residuals: &[f64]) -> Option<(Vec<f64>, Vec<usize>)> {
    let (n, p) = x.shape();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| residuals[a].abs().total_cmp(&residuals[b].abs()));
    // greedy row selection with Gram–Schmidt
    let mut chosen = Vec::with_capacity(p);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(p);
    for &i in &order {
        let row = x.row(i).transpose();
        let norm0 = row.norm();
        if norm0 == 0.0 {
            continue;
        }
        let mut v = row.clone_owned();
        for b in &basis {
            let proj = v.dot(b);
            v -= b * proj;
        }
        let nv = v.norm();
        if nv > 1e-8 * norm0 {
            basis.push(v / nv);
            chosen.push(i);
            if chosen.len() == p {
                break;
            }
        }
    }
    if chosen.len() < p {
        return None;
    }
    let sub = x.select_rows(&chosen);
    let rhs = DVector::from_iterator(p, chosen.iter().map(|&i| y[i]));
    sub.lu()
        .solve(&rhs)
        .map(|b| (b.iter().cloned().collect(), chosen))
}

/// Fits the `alpha` conditional quantile by minimizing mean check loss.
pub fn fit_lqr(data: &Dataset, alpha: f64) -> Result<QuantileFit> {
    check_alpha(alpha)?;
    let rank = matrix_rank(&data.x);
    if rank < data.p() {
        return Err(Error::RankDeficientDesign {
            rank,
            cols: data.p(),
        });
    }
    let sol = ipm::solve(&data.x, &data.y, alpha, GAP_TOLERANCE, MAX_ITERATIONS)?;
    let mut beta: Vec<f64> = sol.beta.iter().cloned().collect();
    let mut obj = objective(&data.x, &data.y, &beta, alpha);
    let resid = residuals(data, &beta);
    if let Some((vertex, rows)) = purify(&data.x, &data.y, &resid) {
        let vobj = objective(&data.x, &data.y, &vertex, alpha);
        // Snap when the vertex is strictly better, or when the interior point
        // iterate already sits on it up to solver tolerance. Otherwise (a
        // non-unique optimum) keep the interior-point answer.
        let yscale = 1.0 + data.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let on_vertex = rows.iter().all(|&i| resid[i].abs() <= 1e-6 * yscale);
        let tie = 1e-12 * (1.0 + obj);
        if vobj < obj - tie || (on_vertex && vobj <= obj + tie) {
            beta = vertex;
            obj = vobj;
        }
    }
    Ok(QuantileFit {
        alpha,
        residuals: residuals(data, &beta),
        beta,
        objective: obj,
        cov: None,
        tstats: None,
        iterations: sol.iterations,
    })
}

/// Exact fit by the dense simplex; only sensible for small `n`.
pub fn fit_lqr_simplex(data: &Dataset, alpha: f64) -> Result<QuantileFit> {
    check_alpha(alpha)?;
    let sol = simplex::solve(&data.x, &data.y, alpha)?;
    Ok(QuantileFit {
        alpha,
        residuals: residuals(data, &sol.beta),
        beta: sol.beta,
        objective: sol.objective,
        cov: None,
        tstats: None,
        iterations: sol.pivots,
    })
}

fn residuals(data: &Dataset, beta: &[f64]) -> Vec<f64> {
    let fit = &data.x * DVector::from_column_slice(beta);
    data.y.iter().zip(fit.iter()).map(|(y, f)| y - f).collect()
}

pub fn predict_quantile(fit: &QuantileFit, x_row: &[f64]) -> Result<f64> {
    if x_row.len() != fit.beta.len() {
        return Err(Error::DimensionMismatch {
            expected: fit.beta.len(),
            got: x_row.len(),
        });
    }
    if x_row.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite regressor".into()));
    }
    Ok(fit.beta.iter().zip(x_row).map(|(b, x)| b * x).sum())
}

/// Rows where fitted quantiles fail to increase with alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub crossing_rows: usize,
    pub total_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileProcess {
    pub fits: Vec<QuantileFit>,
    pub crossing: CrossingReport,
}

/// Fits every alpha in a strictly increasing grid and audits crossing.
pub fn quantile_process(data: &Dataset, alphas: &[f64]) -> Result<QuantileProcess> {
    if alphas.is_empty() || alphas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("alphas must be strictly increasing".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    let fits = alphas
        .par_iter()
        .map(|&a| fit_lqr(data, a))
        .collect::<Result<Vec<_>>>()?;
    let crossing = crossing_report(data, &fits);
    if crossing.crossing_rows > 0 {
        log::warn!(
            "quantile crossing on {} of {} rows",
            crossing.crossing_rows,
            crossing.total_rows
        );
    }
    Ok(QuantileProcess { fits, crossing })
}

pub fn crossing_report(data: &Dataset, fits: &[QuantileFit]) -> CrossingReport {
    let preds: Vec<DVector<f64>> = fits
        .iter()
        .map(|f| &data.x * DVector::from_column_slice(&f.beta))
        .collect();
    let crossing_rows = (0..data.n())
        .filter(|&i| preds.windows(2).any(|w| w[1][i] < w[0][i] - 1e-10))
        .count();
    CrossingReport {
        crossing_rows,
        total_rows: data.n(),
    }
}

/// JSON-ready summary of one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: String,
    pub alpha: f64,
    pub labels: Vec<String>,
    pub beta: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    pub tstats: Option<Vec<f64>>,
    pub objective: f64,
    pub n: usize,
    pub crossing: Option<CrossingReport>,
}

impl FitReport {
    pub fn new(model: &str, data: &Dataset, fit: &QuantileFit) -> Self {
        Self {
            model: model.to_string(),
            alpha: fit.alpha,
            labels: data.labels.clone(),
            beta: fit.beta.clone(),
            std_errors: fit
                .cov
                .as_ref()
                .map(|c| (0..c.len()).map(|i| c[i][i].max(0.0).sqrt()).collect()),
            tstats: fit.tstats.clone(),
            objective: fit.objective,
            n: data.n(),
            crossing: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept_only(y: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = y.iter().map(|_| vec![1.0]).collect();
        Dataset::from_rows(y.to_vec(), &rows, vec!["const".into()]).unwrap()
    }

    #[test]
    fn check_loss_examples() {
        assert!((check_loss(1.0, 0.05) - 0.05).abs() < 1e-15);
        assert!((check_loss(-1.0, 0.05) - 0.95).abs() < 1e-15);
        assert_eq!(check_loss(0.0, 0.3), 0.0);
    }

    #[test]
    fn median_of_three() {
        let fit = fit_lqr(&intercept_only(&[1.0, 2.0, 3.0]), 0.5).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-8);
        let exact = fit_lqr_simplex(&intercept_only(&[1.0, 2.0, 3.0]), 0.5).unwrap();
        assert!((exact.beta[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn even_median_lies_in_optimal_interval() {
        let fit = fit_lqr(&intercept_only(&[1.0, 2.0, 3.0, 4.0]), 0.5).unwrap();
        assert!(fit.beta[0] >= 2.0 - 1e-8 && fit.beta[0] <= 3.0 + 1e-8);
        assert!((fit.objective - 0.5).abs() < 1e-8);
    }

    #[test]
    fn interpolation_case() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64, (i * i % 7) as f64]).collect();
        let b = [0.5, -1.25, 2.0];
        let y: Vec<f64> = rows.iter().map(|r| r.iter().zip(&b).map(|(x, c)| x * c).sum()).collect();
        let data = Dataset::from_rows(y, &rows, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let fit = fit_lqr(&data, 0.3).unwrap();
        for (got, want) in fit.beta.iter().zip(&b) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
        assert!(fit.objective < 1e-12);
    }

    #[test]
    fn rank_deficiency_detected() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let data = Dataset::from_rows(y, &rows, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        assert!(matches!(fit_lqr(&data, 0.5), Err(Error::RankDeficientDesign { rank: 2, cols: 3 })));
    }

    #[test]
    fn predict_examples() {
        let fit = QuantileFit {
            alpha: 0.5,
            beta: vec![1.0, 2.0],
            residuals: vec![],
            objective: 0.0,
            cov: None,
            tstats: None,
            iterations: 0,
        };
        assert_eq!(predict_quantile(&fit, &[1.0, 3.0]).unwrap(), 7.0);
        assert!(matches!(predict_quantile(&fit, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn invalid_alpha() {
        assert!(fit_lqr(&intercept_only(&[1.0, 2.0]), 1.0).is_err());
        assert!(quantile_process(&intercept_only(&[1.0, 2.0, 3.0]), &[0.5, 0.2]).is_err());
    }

    #[test]
    fn single_alpha_process_matches_fit() {
        let data = intercept_only(&[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0]);
        let proc_ = quantile_process(&data, &[0.25]).unwrap();
        let fit = fit_lqr(&data, 0.25).unwrap();
        assert_eq!(proc_.fits[0], fit);
        assert_eq!(proc_.crossing.crossing_rows, 0);
    }
}
