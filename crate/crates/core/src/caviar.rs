//! Recursive CAViaR quantile models, optionally augmented with exogenous
//! regressors ("realized CAViaR").
//!
//! With daily returns `r_t`, targets `Y_t = r_t + ... + r_{t+h-1}` and
//! regressors `x_t`, the symmetric absolute value form is
//!
//! ```text
//! q_{t+1} = b1 + b2 q_t + b3 |r_t| + g' x_t
//! ```
//!
//! and the asymmetric slope form replaces `b3 |r_t|` with
//! `b3 r_t^+ + b4 r_t^-`, where `r^- = r 1{r < 0}` is non-positive. `q_t` is
//! the `alpha` quantile of `Y_t` given information through `t - 1`, so the
//! same recursion serves every horizon.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{bfgs, nelder_mead, sample_quantile};
use crate::qr_core::check_loss;

/// `|q_t|` above this aborts the recursion.
pub const OVERFLOW_GUARD: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaviarForm {
    Sav,
    As,
}

/// Which regressor observation feeds `q_{t+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExogTiming {
    /// `x_t`, as in the symmetric display.
    #[default]
    Current,
    /// `x_{t-1}`, as printed in the asymmetric display.
    Lagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaviarSpec {
    pub form: CaviarForm,
    pub exog_labels: Vec<String>,
    pub alpha: f64,
    pub horizon: usize,
    pub timing: ExogTiming,
}

impl CaviarSpec {
    pub fn new(form: CaviarForm, alpha: f64) -> Self {
        Self {
            form,
            exog_labels: Vec::new(),
            alpha,
            horizon: 1,
            timing: ExogTiming::Current,
        }
    }

    pub fn n_beta(&self) -> usize {
        match self.form {
            CaviarForm::Sav => 3,
            CaviarForm::As => 4,
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_beta() + self.exog_labels.len()
    }

    pub fn param_labels(&self) -> Vec<String> {
        let mut l: Vec<String> = (1..=self.n_beta()).map(|i| format!("beta{i}")).collect();
        l.extend(self.exog_labels.iter().map(|s| format!("gamma_{s}")));
        l
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaviarParams {
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl CaviarParams {
    pub fn from_vec(spec: &CaviarSpec, theta: &[f64]) -> Self {
        let nb = spec.n_beta();
        Self {
            beta: theta[..nb].to_vec(),
            gamma: theta[nb..].to_vec(),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.beta.iter().chain(&self.gamma).cloned().collect()
    }
}

/// Returns, targets and regressors for one fit.
#[derive(Debug, Clone)]
pub struct CaviarData<'a> {
    pub returns: &'a [f64],
    /// One row per return, `spec.exog_labels.len()` columns.
    pub exog: &'a [Vec<f64>],
    /// `Y_t` for `t = 0..n-h+1`.
    pub targets: Vec<f64>,
}

impl<'a> CaviarData<'a> {
    pub fn new(spec: &CaviarSpec, returns: &'a [f64], exog: &'a [Vec<f64>]) -> Result<Self> {
        spec.validate()?;
        let n = returns.len();
        let k = spec.exog_labels.len();
        if k > 0 && exog.len() != n {
            return Err(Error::LengthMismatch(n, exog.len()));
        }
        if exog.iter().any(|row| row.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: exog.iter().map(|r| r.len()).find(|&l| l != k).unwrap_or(0),
            });
        }
        if returns.iter().chain(exog.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite CAViaR input".into()));
        }
        let h = spec.horizon;
        let min_len = h + 10;
        if n < min_len {
            return Err(Error::SeriesTooShort { needed: min_len, got: n });
        }
        let targets = (0..=n - h).map(|t| returns[t..t + h].iter().sum()).collect();
        Ok(Self { returns, exog, targets })
    }

    fn n(&self) -> usize {
        self.returns.len()
    }
}

/// `q0`: empirical `alpha` quantile of the first 10% of targets.
pub fn initial_quantile(targets: &[f64], alpha: f64) -> f64 {
    let m = (targets.len() / 10).max(1).min(targets.len());
    sample_quantile(&targets[..m], alpha)
}

#[inline]
fn innovation(spec: &CaviarSpec, theta: &[f64], r: f64, exog: &[Vec<f64>], t: usize) -> f64 {
    let mut v = match spec.form {
        CaviarForm::Sav => theta[2] * r.abs(),
        CaviarForm::As => {
            if r >= 0.0 {
                theta[2] * r
            } else {
                theta[3] * r
            }
        }
    };
    let k = spec.exog_labels.len();
    if k > 0 {
        let row = match spec.timing {
            ExogTiming::Current => &exog[t],
            ExogTiming::Lagged => &exog[t.saturating_sub(1)],
        };
        let nb = spec.n_beta();
        for j in 0..k {
            v += theta[nb + j] * row[j];
        }
    }
    v
}

/// Runs the recursion over all `n` days plus one step ahead. Returns the path
/// `q_0..q_{n-1}`, the forecast `q_n`, and the mean check loss over
/// `t = 1..=n-h`.
pub fn evaluate_quantile_path(
    spec: &CaviarSpec,
    params: &CaviarParams,
    data: &CaviarData,
    q0: f64,
) -> Result<(Vec<f64>, f64, f64)> {
    let theta = params.to_vec();
    if theta.len() != spec.n_params() {
        return Err(Error::DimensionMismatch {
            expected: spec.n_params(),
            got: theta.len(),
        });
    }
    let n = data.n();
    let mut path = Vec::with_capacity(n);
    let mut q = q0;
    let mut loss = 0.0;
    let last = data.targets.len() - 1;
    for t in 0..n {
        path.push(q);
        if t >= 1 && t <= last {
            loss += check_loss(data.targets[t] - q, spec.alpha);
        }
        q = theta[0] + theta[1] * q + innovation(spec, &theta, data.returns[t], data.exog, t);
        if !q.is_finite() || q.abs() > OVERFLOW_GUARD {
            return Err(Error::ExplosivePath(t + 1));
        }
    }
    Ok((path, q, loss / last as f64))
}

/// Objective without allocation; explosive paths give `+inf`.
fn objective(spec: &CaviarSpec, theta: &[f64], data: &CaviarData, q0: f64) -> f64 {
    let last = data.targets.len() - 1;
    let mut q = q0;
    let mut loss = 0.0;
    for t in 0..last {
        if t >= 1 {
            loss += check_loss(data.targets[t] - q, spec.alpha);
        }
        q = theta[0] + theta[1] * q + innovation(spec, theta, data.returns[t], data.exog, t);
        if !(q.abs() <= OVERFLOW_GUARD) {
            return f64::INFINITY;
        }
    }
    loss += check_loss(data.targets[last] - q, spec.alpha);
    loss / last as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiStartConfig {
    pub draws: usize,
    pub polished: usize,
    pub simplex_iterations: usize,
    pub quasi_newton_iterations: usize,
    pub seed: u64,
}

impl Default for MultiStartConfig {
    fn default() -> Self {
        Self {
            draws: 10_000,
            polished: 10,
            simplex_iterations: 500,
            quasi_newton_iterations: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdErrorTable {
    pub bandwidths: Vec<f64>,
    /// `std_errors[k][j]`: parameter `j` at bandwidth `k`.
    pub std_errors: Vec<Vec<f64>>,
    pub selected: Option<usize>,
}

impl StdErrorTable {
    pub fn selected_bandwidth(&self) -> Option<f64> {
        self.selected.map(|k| self.bandwidths[k])
    }

    pub fn selected_std_errors(&self) -> Option<&[f64]> {
        self.selected.map(|k| self.std_errors[k].as_slice())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaviarFit {
    pub spec: CaviarSpec,
    pub params: CaviarParams,
    pub objective: f64,
    pub q_path: Vec<f64>,
    /// One-step-ahead quantile `q_n` after the last observation.
    pub next_quantile: f64,
    pub q0: f64,
    /// Largest objective change when `q0` is taken from the first 5% or 20%
    /// of the sample instead.
    pub q0_sensitivity: f64,
    /// Indices of parameters whose perturbation leaves the objective unchanged.
    pub flat_directions: Vec<usize>,
    /// Objective of every polished start.
    pub start_objectives: Vec<f64>,
    pub std_errors: Option<StdErrorTable>,
    pub seed: u64,
    pub draws: usize,
}

fn draw_start(spec: &CaviarSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..spec.n_params())
        .map(|j| {
            if j == 1 {
                rng.random_range(0.0..1.0)
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
        .collect()
}

fn polish(
    spec: &CaviarSpec,
    data: &CaviarData,
    q0: f64,
    start: &[f64],
    cfg: &MultiStartConfig,
) -> (Vec<f64>, f64) {
    let f = |th: &[f64]| objective(spec, th, data, q0);
    let mut x = start.to_vec();
    let mut fx = f(&x);
    for _ in 0..3 {
        let scale: Vec<f64> = x.iter().map(|v| 0.1 * (v.abs() + 0.1)).collect();
        let nm = nelder_mead(f, &x, &scale, cfg.simplex_iterations, 1e-12);
        let qn = bfgs(f, &nm.x, cfg.quasi_newton_iterations, 1e-8);
        let (cand, fc) = if qn.value <= nm.value { (qn.x, qn.value) } else { (nm.x, nm.value) };
        let improved = fc < fx - 1e-12 * (1.0 + fx.abs());
        if fc <= fx {
            x = cand;
            fx = fc;
        }
        if !improved {
            break;
        }
    }
    (x, fx)
}

/// Multi-start estimation: evaluate `draws` random parameter vectors, polish
/// the best `polished` with Nelder–Mead followed by BFGS, keep the best.
pub fn fit_caviar(
    spec: &CaviarSpec,
    returns: &[f64],
    exog: &[Vec<f64>],
    cfg: &MultiStartConfig,
) -> Result<CaviarFit> {
    let data = CaviarData::new(spec, returns, exog)?;
    if returns.len() < 300 {
        log::warn!("CAViaR fit on only {} observations", returns.len());
    }
    let q0 = initial_quantile(&data.targets, spec.alpha);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scored: Vec<(f64, Vec<f64>)> = (0..cfg.draws.max(1))
        .map(|_| {
            let th = draw_start(spec, &mut rng);
            (objective(spec, &th, &data, q0), th)
        })
        .filter(|(v, _)| v.is_finite())
        .collect();
    if scored.is_empty() {
        return Err(Error::AllStartsFailed);
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.truncate(cfg.polished.max(1));

    let polished: Vec<(Vec<f64>, f64)> = scored
        .par_iter()
        .map(|(_, th)| polish(spec, &data, q0, th, cfg))
        .collect();
    let start_objectives: Vec<f64> = polished.iter().map(|p| p.1).collect();
    let (theta, _) = polished
        .iter()
        .filter(|p| p.1.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .ok_or(Error::AllStartsFailed)?;

    let params = CaviarParams::from_vec(spec, &theta);
    let (q_path, next_quantile, obj) = evaluate_quantile_path(spec, &params, &data, q0)?;

    let sens = |frac: usize| {
        let m = (data.targets.len() * frac / 100).max(1);
        let alt = sample_quantile(&data.targets[..m], spec.alpha);
        (objective(spec, &theta, &data, alt) - obj).abs()
    };
    let q0_sensitivity = sens(5).max(sens(20));

    let flat_directions = (0..theta.len())
        .filter(|&j| {
            let step = 0.1 * (1.0 + theta[j].abs());
            [step, -step].iter().all(|s| {
                let mut th = theta.clone();
                th[j] += s;
                (objective(spec, &th, &data, q0) - obj).abs() <= 1e-12 * (1.0 + obj)
            })
        })
        .collect::<Vec<_>>();
    if !flat_directions.is_empty() {
        log::warn!("CAViaR objective is flat in parameters {flat_directions:?}; they are unidentified");
    }

    Ok(CaviarFit {
        spec: spec.clone(),
        params,
        objective: obj,
        q_path,
        next_quantile,
        q0,
        q0_sensitivity,
        flat_directions,
        start_objectives,
        std_errors: None,
        seed: cfg.seed,
        draws: cfg.draws,
    })
}

/// Gradient of `q_t` with respect to the parameters, `t = 0..n`.
fn path_gradients(fit: &CaviarFit, data: &CaviarData) -> Vec<Vec<f64>> {
    let spec = &fit.spec;
    let theta = fit.params.to_vec();
    let k = theta.len();
    let nb = spec.n_beta();
    let mut grads = Vec::with_capacity(fit.q_path.len());
    let mut g = vec![0.0; k];
    for t in 0..fit.q_path.len() {
        grads.push(g.clone());
        let r = data.returns[t];
        let mut d = vec![0.0; k];
        d[0] = 1.0;
        d[1] = fit.q_path[t];
        match spec.form {
            CaviarForm::Sav => d[2] = r.abs(),
            CaviarForm::As => {
                if r >= 0.0 {
                    d[2] = r
                } else {
                    d[3] = r
                }
            }
        }
        if k > nb {
            let row = match spec.timing {
                ExogTiming::Current => &data.exog[t],
                ExogTiming::Lagged => &data.exog[t.saturating_sub(1)],
            };
            d[nb..].copy_from_slice(row);
        }
        for j in 0..k {
            g[j] = d[j] + theta[1] * g[j];
        }
    }
    grads
}

/// Sandwich standard errors for one kernel bandwidth `c`:
/// `V = D^-1 A D^-1 / T` with `A = alpha(1-alpha) mean(g g')` and
/// `D = mean(1{|u_t| < c} g g') / (2c)`.
fn std_errors_at(fit: &CaviarFit, data: &CaviarData, grads: &[Vec<f64>], c: f64) -> Option<Vec<f64>> {
    let k = grads[0].len();
    let last = data.targets.len() - 1;
    let tn = last as f64;
    let mut a = nalgebra::DMatrix::<f64>::zeros(k, k);
    let mut d = nalgebra::DMatrix::<f64>::zeros(k, k);
    for t in 1..=last {
        let g = nalgebra::DVector::from_column_slice(&grads[t]);
        let gg = &g * g.transpose();
        a += &gg;
        if (data.targets[t] - fit.q_path[t]).abs() < c {
            d += gg;
        }
    }
    let alpha = fit.spec.alpha;
    a *= alpha * (1.0 - alpha) / tn;
    d /= 2.0 * c * tn;
    let dinv = d.try_inverse()?;
    let v = &dinv * a * &dinv / tn;
    let se: Vec<f64> = (0..k).map(|j| v[(j, j)]).map(|x| if x > 0.0 { x.sqrt() } else { f64::NAN }).collect();
    se.iter().all(|s| s.is_finite()).then_some(se)
}

/// Default bandwidth grid: 20 points geometrically spaced between 0.05 and
/// 2 standard deviations of the quantile residuals.
pub fn default_bandwidth_grid(fit: &CaviarFit, targets: &[f64]) -> Vec<f64> {
    let last = targets.len() - 1;
    let resid: Vec<f64> = (1..=last).map(|t| targets[t] - fit.q_path[t]).collect();
    let sd = crate::numerics::variance(&resid).sqrt();
    let (lo, hi) = (0.05 * sd, 2.0 * sd);
    (0..20).map(|i| lo * (hi / lo).powf(i as f64 / 19.0)).collect()
}

/// Midpoint of the widest run of consecutive grid points over which every
/// standard error varies by less than 10%.
pub fn select_stable_bandwidth(table: &[Option<Vec<f64>>]) -> Option<usize> {
    if table.len() == 1 {
        return table[0].as_ref().map(|_| 0);
    }
    let stable = |a: usize, b: usize| -> bool {
        let rows: Option<Vec<&Vec<f64>>> = table[a..=b].iter().map(|r| r.as_ref()).collect();
        let Some(rows) = rows else { return false };
        let k = rows[0].len();
        (0..k).all(|j| {
            let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
            lo > 0.0 && (hi - lo) / lo < 0.10
        })
    };
    let mut best: Option<(usize, usize)> = None;
    for a in 0..table.len() {
        let mut b = a + 1;
        while b < table.len() && stable(a, b) {
            b += 1;
        }
        let end = b - 1;
        if end > a && best.is_none_or(|(ba, bb)| end - a > bb - ba) {
            best = Some((a, end));
        }
    }
    best.map(|(a, b)| (a + b) / 2)
}

/// Standard errors across a bandwidth grid and the selected stable bandwidth.
/// Returns `NoStableRegion` when no two adjacent bandwidths agree within 10%.
pub fn caviar_std_errors(
    fit: &CaviarFit,
    returns: &[f64],
    exog: &[Vec<f64>],
    bandwidth_grid: Option<&[f64]>,
) -> Result<StdErrorTable> {
    let data = CaviarData::new(&fit.spec, returns, exog)?;
    let grid = match bandwidth_grid {
        Some(g) => g.to_vec(),
        None => default_bandwidth_grid(fit, &data.targets),
    };
    if grid.is_empty() || grid.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::InvalidArgument("bandwidths must be positive".into()));
    }
    let grads = path_gradients(fit, &data);
    let rows: Vec<Option<Vec<f64>>> = grid.iter().map(|&c| std_errors_at(fit, &data, &grads, c)).collect();
    let selected = select_stable_bandwidth(&rows);
    let k = fit.spec.n_params();
    let table = StdErrorTable {
        bandwidths: grid,
        std_errors: rows.into_iter().map(|r| r.unwrap_or_else(|| vec![f64::NAN; k])).collect(),
        selected,
    };
    if selected.is_none() {
        log::warn!("no stable bandwidth region; full table: {:?}", table.std_errors);
        return Err(Error::NoStableRegion);
    }
    Ok(table)
}

/// Simulates `r_t = s_t e_t` with `s_{t+1} = omega + b1 s_t + b2 |r_t|` and
/// Gaussian `e_t`. The implied SAV parameters at level `alpha` are
/// `(z omega, b1, z b2)` with `z` the standard normal quantile.
pub fn simulate_sav(omega: f64, b1: f64, b2: f64, n: usize, burn_in: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = omega / (1.0 - b1 - b2 * (2.0 / std::f64::consts::PI).sqrt()).max(1e-3);
    let mut out = Vec::with_capacity(n);
    for t in 0..n + burn_in {
        let e: f64 = StandardNormal.sample(&mut rng);
        let r = s * e;
        if t >= burn_in {
            out.push(r);
        }
        s = omega + b1 * s + b2 * r.abs();
    }
    out
}

pub fn sav_true_params(omega: f64, b1: f64, b2: f64, alpha: f64) -> [f64; 3] {
    let z = crate::numerics::norm_quantile(alpha);
    [z * omega, b1, z * b2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn returns(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0).collect()
    }

    #[test]
    fn identity_recursion() {
        let spec = CaviarSpec::new(CaviarForm::Sav, 0.05);
        let r = returns(50);
        let data = CaviarData::new(&spec, &r, &[]).unwrap();
        let p = CaviarParams {
            beta: vec![0.0, 1.0, 0.0],
            gamma: vec![],
        };
        let (path, next, _) = evaluate_quantile_path(&spec, &p, &data, -2.0).unwrap();
        assert!(path.iter().all(|q| *q == -2.0));
        assert_eq!(next, -2.0);
    }

    #[test]
    fn constant_after_first_step() {
        let spec = CaviarSpec::new(CaviarForm::Sav, 0.05);
        let r = returns(50);
        let data = CaviarData::new(&spec, &r, &[]).unwrap();
        let p = CaviarParams {
            beta: vec![-1.3, 0.0, 0.0],
            gamma: vec![],
        };
        let (path, _, _) = evaluate_quantile_path(&spec, &p, &data, 7.0).unwrap();
        assert_eq!(path[0], 7.0);
        assert!(path[1..].iter().all(|q| *q == -1.3));
    }

    #[test]
    fn explosive_path_detected() {
        let spec = CaviarSpec::new(CaviarForm::Sav, 0.05);
        let r = returns(200);
        let data = CaviarData::new(&spec, &r, &[]).unwrap();
        let p = CaviarParams {
            beta: vec![0.1, 2.0, 0.1],
            gamma: vec![],
        };
        assert!(matches!(
            evaluate_quantile_path(&spec, &p, &data, -1.0),
            Err(Error::ExplosivePath(_))
        ));
    }

    #[test]
    fn objective_matches_path() {
        let spec = CaviarSpec::new(CaviarForm::As, 0.1);
        let r = returns(120);
        let data = CaviarData::new(&spec, &r, &[]).unwrap();
        let p = CaviarParams {
            beta: vec![-0.1, 0.7, -0.2, 0.4],
            gamma: vec![],
        };
        let (path, _, obj) = evaluate_quantile_path(&spec, &p, &data, -0.5).unwrap();
        let fast = objective(&spec, &p.to_vec(), &data, -0.5);
        assert!((obj - fast).abs() < 1e-12);
        let recomputed: f64 =
            (1..data.targets.len()).map(|t| check_loss(data.targets[t] - path[t], 0.1)).sum::<f64>()
                / (data.targets.len() - 1) as f64;
        assert!((recomputed - obj).abs() < 1e-12);
    }

    #[test]
    fn stable_region_selection() {
        let flat = vec![Some(vec![1.0, 2.0]); 5];
        assert_eq!(select_stable_bandwidth(&flat), Some(2));
        let exploding: Vec<Option<Vec<f64>>> = (0..6).map(|i| Some(vec![2f64.powi(i)])).collect();
        assert_eq!(select_stable_bandwidth(&exploding), None);
        assert_eq!(select_stable_bandwidth(&[Some(vec![3.0])]), Some(0));
        let mixed = vec![
            Some(vec![1.0]),
            Some(vec![2.0]),
            Some(vec![2.05]),
            Some(vec![2.1]),
            Some(vec![2.15]),
            Some(vec![5.0]),
        ];
        assert_eq!(select_stable_bandwidth(&mixed), Some(2));
    }
}
