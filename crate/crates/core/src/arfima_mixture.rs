//! Lognormal-normal mixture: log realized variance follows a Gaussian
//! ARFIMA(1, d, 0) (optionally with an MA(1) term) and returns are
//! conditionally normal with variance equal to realized variance.
//!
//! ```text
//! (1 - phi L)(1 - L)^d (log RV_t - mu) = (1 - psi L) u_t,   u_t ~ N(0, s2)
//! r_t = RV_t^{1/2} e_t
//! ```
//!
//! Estimation is by conditional sum of squares with the fractional filter
//! truncated at a fixed number of lags and pre-sample deviations set to zero.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    golden_section, nelder_mead, norm_cdf, norm_pdf, norm_quantile, numerical_hessian, safeguarded_newton,
    sorted_quantile,
};

pub const DEFAULT_TRUNCATION: usize = 1000;
const PHI_BOUND: f64 = 0.995;
const D_BOUND: f64 = 0.499;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArfimaParams {
    pub mu: f64,
    pub phi: f64,
    pub d: f64,
    pub sigma_u2: f64,
    /// MA(1) coefficient; zero unless explicitly estimated.
    pub ma_psi: f64,
}

impl ArfimaParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.phi.abs() < 1.0
            && self.d > -0.5
            && self.d < 0.5
            && self.sigma_u2 > 0.0
            && self.ma_psi.abs() < 1.0
            && self.mu.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("ARFIMA parameters out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArfimaConfig {
    pub truncation: usize,
    pub estimate_ma: bool,
}

impl Default for ArfimaConfig {
    fn default() -> Self {
        Self {
            truncation: DEFAULT_TRUNCATION,
            estimate_ma: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArfimaFit {
    pub params: ArfimaParams,
    /// Parameter names matching `tstats`.
    pub labels: Vec<String>,
    pub tstats: Vec<f64>,
    pub loglik: f64,
    /// Per-observation Akaike criterion, `(-2 LL + 2 k) / n`.
    pub aic: f64,
    pub n: usize,
    pub truncation: usize,
}

/// Coefficients of `(1 - L)^d` up to lag `k_max`.
pub fn frac_diff_weights(d: f64, k_max: usize) -> Vec<f64> {
    let mut w = Vec::with_capacity(k_max + 1);
    w.push(1.0);
    for k in 1..=k_max {
        let prev = w[k - 1];
        w.push(prev * ((k - 1) as f64 - d) / k as f64);
    }
    w
}

/// Truncated filter `sum_{k <= min(t, K)} w_k x_{t-k}` for every `t`.
fn truncated_filter(w: &[f64], x: &[f64]) -> Vec<f64> {
    let kmax = w.len() - 1;
    (0..x.len())
        .map(|t| {
            let m = t.min(kmax);
            let mut s = 0.0;
            for k in 0..=m {
                s += w[k] * x[t - k];
            }
            s
        })
        .collect()
}

/// Innovations `u_t` for the given parameters.
fn innovations(params: &ArfimaParams, x: &[f64], truncation: usize) -> Vec<f64> {
    let w = frac_diff_weights(params.d, truncation);
    let y: Vec<f64> = x.iter().map(|v| v - params.mu).collect();
    let z = truncated_filter(&w, &y);
    let mut u = Vec::with_capacity(x.len());
    let mut prev_z = 0.0;
    let mut prev_u = 0.0;
    for zt in z {
        let ut = zt - params.phi * prev_z + params.ma_psi * prev_u;
        u.push(ut);
        prev_z = zt;
        prev_u = ut;
    }
    u
}

/// Gaussian conditional-sum-of-squares log-likelihood.
pub fn arfima_loglik(params: &ArfimaParams, log_rv: &[f64], truncation: usize) -> Result<f64> {
    if truncation < 100 {
        return Err(Error::InvalidArgument("truncation must be >= 100".into()));
    }
    if log_rv.is_empty() {
        return Err(Error::SeriesTooShort { needed: 1, got: 0 });
    }
    let u = innovations(params, log_rv, truncation);
    let ssr: f64 = u.iter().map(|v| v * v).sum();
    let n = log_rv.len() as f64;
    let ll = -0.5 * n * (2.0 * std::f64::consts::PI * params.sigma_u2).ln() - ssr / (2.0 * params.sigma_u2);
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::NonFiniteLikelihood)
    }
}

/// Filtered pieces for a fixed `d`: `A_t` (filtered data) and `P_t`
/// (filtered constant), so that `z_t = A_t - mu P_t`.
struct Profile {
    a: Vec<f64>,
    p: Vec<f64>,
}

impl Profile {
    fn new(d: f64, x: &[f64], truncation: usize) -> Self {
        let w = frac_diff_weights(d, truncation);
        let a = truncated_filter(&w, x);
        let mut p = Vec::with_capacity(x.len());
        let mut cum = 0.0;
        for t in 0..x.len() {
            if t < w.len() {
                cum += w[t];
            }
            p.push(cum);
        }
        Self { a, p }
    }

    /// Concentrated SSR over `mu` for given `(phi, psi)`; returns `(ssr, mu)`.
    fn ssr(&self, phi: f64, psi: f64) -> (f64, f64) {
        let n = self.a.len();
        let (mut ua_prev, mut up_prev) = (0.0, 0.0);
        let (mut a_prev, mut p_prev) = (0.0, 0.0);
        let (mut saa, mut sap, mut spp) = (0.0, 0.0, 0.0);
        for t in 0..n {
            let ua = self.a[t] - phi * a_prev + psi * ua_prev;
            let up = self.p[t] - phi * p_prev + psi * up_prev;
            saa += ua * ua;
            sap += ua * up;
            spp += up * up;
            a_prev = self.a[t];
            p_prev = self.p[t];
            ua_prev = ua;
            up_prev = up;
        }
        let mu = if spp > 1e-300 { sap / spp } else { 0.0 };
        ((saa - 2.0 * mu * sap + mu * mu * spp).max(0.0), mu)
    }

    /// Best `(phi, psi)` and the resulting `(ssr, mu)`.
    fn optimize(&self, estimate_ma: bool) -> (f64, f64, f64, f64) {
        let penalty = |phi: f64, psi: f64| {
            if phi.abs() >= PHI_BOUND || psi.abs() >= PHI_BOUND {
                f64::INFINITY
            } else {
                self.ssr(phi, psi).0
            }
        };
        // coarse grid on phi, then golden section around the best point
        let grid: Vec<f64> = (-19..=19).map(|i| i as f64 * 0.05).collect();
        let best = grid
            .iter()
            .cloned()
            .min_by(|a, b| penalty(*a, 0.0).total_cmp(&penalty(*b, 0.0)))
            .unwrap_or(0.0);
        let lo = (best - 0.05).max(-PHI_BOUND + 1e-9);
        let hi = (best + 0.05).min(PHI_BOUND - 1e-9);
        let (mut phi, _) = golden_section(|p| penalty(p, 0.0), lo, hi, 1e-7);
        let mut psi = 0.0;
        if estimate_ma {
            let m = nelder_mead(|v| penalty(v[0], v[1]), &[phi, 0.0], &[0.05, 0.05], 2000, 1e-14);
            phi = m.x[0];
            psi = m.x[1];
        }
        let (ssr, mu) = self.ssr(phi, psi);
        (phi, psi, ssr, mu)
    }
}

/// Maximum (conditional) likelihood fit with `sigma_u2` and `mu`
/// concentrated out, profiling over `d`.
pub fn fit_arfima(log_rv: &[f64], cfg: &ArfimaConfig) -> Result<ArfimaFit> {
    let n = log_rv.len();
    if n < 20 {
        return Err(Error::SeriesTooShort { needed: 20, got: n });
    }
    if n < 500 {
        log::warn!("ARFIMA fit on only {n} observations");
    }
    if cfg.truncation < 100 {
        return Err(Error::InvalidArgument("truncation must be >= 100".into()));
    }
    if log_rv.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite log RV".into()));
    }
    let var = crate::numerics::variance(log_rv);
    if !(var > 1e-14) {
        return Err(Error::OptimizerDivergence("series has zero variance".into()));
    }

    let profile_ssr = |d: f64| -> f64 {
        let prof = Profile::new(d, log_rv, cfg.truncation);
        prof.optimize(cfg.estimate_ma).2
    };
    let grid: Vec<f64> = (-24..=24).map(|i| i as f64 * 0.02).collect();
    let scores: Vec<f64> = grid.iter().map(|&d| profile_ssr(d)).collect();
    let ib = (0..grid.len())
        .min_by(|&a, &b| scores[a].total_cmp(&scores[b]))
        .unwrap_or(0);
    let lo = (grid[ib] - 0.02).max(-D_BOUND);
    let hi = (grid[ib] + 0.02).min(D_BOUND);
    let (d, _) = golden_section(profile_ssr, lo, hi, 1e-6);
    let (phi, psi, ssr, mu) = Profile::new(d, log_rv, cfg.truncation).optimize(cfg.estimate_ma);
    let sigma_u2 = ssr / n as f64;
    if !(sigma_u2 > 0.0) || !sigma_u2.is_finite() {
        return Err(Error::OptimizerDivergence(format!("innovation variance {sigma_u2}")));
    }
    let params = ArfimaParams {
        mu,
        phi,
        d,
        sigma_u2,
        ma_psi: psi,
    };
    let loglik = arfima_loglik(&params, log_rv, cfg.truncation)?;

    let mut labels = vec!["mu", "phi", "d"];
    if cfg.estimate_ma {
        labels.push("psi");
    }
    labels.push("sigma_u2");
    let pack = |p: &ArfimaParams| {
        let mut v = vec![p.mu, p.phi, p.d];
        if cfg.estimate_ma {
            v.push(p.ma_psi);
        }
        v.push(p.sigma_u2);
        v
    };
    let unpack = |v: &[f64]| ArfimaParams {
        mu: v[0],
        phi: v[1],
        d: v[2],
        ma_psi: if cfg.estimate_ma { v[3] } else { 0.0 },
        sigma_u2: v[v.len() - 1],
    };
    let theta = pack(&params);
    let mut negll = |v: &[f64]| {
        let p = unpack(v);
        if p.sigma_u2 <= 0.0 {
            return f64::INFINITY;
        }
        arfima_loglik(&p, log_rv, cfg.truncation).map(|l| -l).unwrap_or(f64::INFINITY)
    };
    let hess = numerical_hessian(&mut negll, &theta);
    let k = theta.len();
    let h = nalgebra::DMatrix::from_fn(k, k, |i, j| hess[i][j]);
    let tstats = match h.try_inverse() {
        Some(inv) => (0..k)
            .map(|i| {
                let v = inv[(i, i)];
                if v > 0.0 {
                    theta[i] / v.sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect(),
        None => vec![f64::NAN; k],
    };
    Ok(ArfimaFit {
        params,
        labels: labels.into_iter().map(String::from).collect(),
        tstats,
        loglik,
        aic: (-2.0 * loglik + 2.0 * k as f64) / n as f64,
        n,
        truncation: cfg.truncation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureForecast {
    pub horizon: usize,
    pub alphas: Vec<f64>,
    /// Quantiles of `sqrt(RV_{T+1} + ... + RV_{T+h})`.
    pub rv_quantiles: Vec<f64>,
    /// Quantiles of the cumulative return `r_{T+1} + ... + r_{T+h}`.
    pub return_quantiles: Vec<f64>,
    /// Predictive mean and standard deviation of `log RV_{T+1}`.
    pub one_step_mean: f64,
    pub one_step_sd: f64,
    pub n_draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSettings {
    pub horizon: usize,
    pub alphas: Vec<f64>,
    pub n_draws: usize,
    pub seed: u64,
    pub truncation: usize,
}

/// Conditional means of `log RV_{T+1..T+h}` and the MA weights of the
/// forecast errors.
fn forecast_moments(params: &ArfimaParams, history: &[f64], h: usize, truncation: usize) -> (Vec<f64>, Vec<f64>) {
    let w = frac_diff_weights(params.d, truncation);
    let t_len = history.len();
    let mut y: Vec<f64> = history.iter().map(|v| v - params.mu).collect();
    // z_T and u_T from the truncated filter
    let zt = |y: &[f64], t: usize| -> f64 {
        let m = t.min(truncation);
        (0..=m).map(|k| w[k] * y[t - k]).sum()
    };
    let last_u = if params.ma_psi != 0.0 {
        *innovations(params, history, truncation).last().unwrap_or(&0.0)
    } else {
        0.0
    };
    let mut z_prev = zt(&y, t_len - 1);
    let mut means = Vec::with_capacity(h);
    for j in 1..=h {
        let ew = if j == 1 { -params.ma_psi * last_u } else { 0.0 };
        let z = params.phi * z_prev + ew;
        let t = t_len - 1 + j;
        let m = t.min(truncation);
        let lagged: f64 = (1..=m).map(|k| w[k] * y[t - k]).sum();
        let yt = z - lagged;
        y.push(yt);
        means.push(params.mu + yt);
        z_prev = z;
    }
    // MA weights of (1 - psi L) / [(1 - phi L) w(L)] up to lag h - 1
    let c: Vec<f64> = (0..h)
        .map(|k| {
            let wk = if k <= truncation { w[k] } else { 0.0 };
            let wk1 = if k >= 1 && k - 1 <= truncation { w[k - 1] } else { 0.0 };
            wk - params.phi * wk1
        })
        .collect();
    let mut psi_w = vec![0.0; h];
    for j in 0..h {
        let theta = match j {
            0 => 1.0,
            1 => -params.ma_psi,
            _ => 0.0,
        };
        let s: f64 = (1..=j).map(|k| c[k] * psi_w[j - k]).sum();
        psi_w[j] = theta - s;
    }
    (means, psi_w)
}

/// Solves `mean_j Phi(q / sqrt(S_j)) = alpha`.
pub fn mixture_return_quantile(variances: &[f64], alpha: f64) -> Result<f64> {
    if variances.is_empty() || variances.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidArgument("mixture variances must be positive".into()));
    }
    let z = norm_quantile(alpha);
    if alpha == 0.5 {
        return Ok(0.0);
    }
    let smin = variances.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = variances.iter().cloned().fold(0.0, f64::max);
    if smax - smin <= 1e-15 * smax {
        return Ok(smax.sqrt() * z);
    }
    let sd: Vec<f64> = variances.iter().map(|s| s.sqrt()).collect();
    let nd = sd.len() as f64;
    let fdf = |q: f64| {
        let (mut f, mut df) = (0.0, 0.0);
        for s in &sd {
            f += norm_cdf(q / s);
            df += norm_pdf(q / s) / s;
        }
        (f / nd - alpha, df / nd)
    };
    let (a, b) = (z * smin.sqrt(), z * smax.sqrt());
    let (lo, hi) = (a.min(b), a.max(b));
    let x0 = z * crate::numerics::mean(variances).sqrt();
    safeguarded_newton(fdf, lo, hi, x0, 1e-12, 200).map_err(|e| Error::RootBracketFailure(e.to_string()))
}

/// Mixture CDF `mean_j Phi(q / sqrt(S_j))`.
pub fn mixture_cdf(variances: &[f64], q: f64) -> f64 {
    variances.iter().map(|s| norm_cdf(q / s.sqrt())).sum::<f64>() / variances.len() as f64
}

/// Simulated `RV_{T+1} + ... + RV_{T+h}` draws.
pub fn simulate_aggregate_rv(params: &ArfimaParams, history: &[f64], settings: &ForecastSettings) -> Result<Vec<f64>> {
    params.validate()?;
    let h = settings.horizon;
    if h == 0 || settings.n_draws == 0 {
        return Err(Error::InvalidArgument("horizon and n_draws must be positive".into()));
    }
    if history.len() < settings.truncation {
        return Err(Error::InsufficientHistory {
            needed: settings.truncation,
            got: history.len(),
        });
    }
    let (means, psi_w) = forecast_moments(params, history, h, settings.truncation);
    let sigma = params.sigma_u2.sqrt();
    const CHUNK: usize = 1024;
    let chunks = settings.n_draws.div_ceil(CHUNK);
    let draws: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            rng.set_stream(c as u64 + 1);
            let count = CHUNK.min(settings.n_draws - c * CHUNK);
            let means = &means;
            let psi_w = &psi_w;
            let mut u = vec![0.0; h];
            (0..count)
                .map(move |_| {
                    for v in u.iter_mut() {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        *v = sigma * e;
                    }
                    let mut s = 0.0;
                    for j in 0..h {
                        let mut dev = 0.0;
                        for i in 0..=j {
                            dev += psi_w[i] * u[j - i];
                        }
                        s += (means[j] + dev).exp();
                    }
                    s
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(draws)
}

/// Quantile forecasts of aggregate volatility and cumulative returns.
pub fn forecast_mixture(params: &ArfimaParams, history: &[f64], settings: &ForecastSettings) -> Result<MixtureForecast> {
    if settings.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(Error::InvalidArgument("alphas must lie in (0, 1)".into()));
    }
    let agg = simulate_aggregate_rv(params, history, settings)?;
    let (means, _) = forecast_moments(params, history, 1, settings.truncation);
    let m1 = means[0];
    let s1 = params.sigma_u2.sqrt();
    let mut sorted_sqrt: Vec<f64> = agg.iter().map(|s| s.sqrt()).collect();
    sorted_sqrt.sort_by(f64::total_cmp);
    let rv_quantiles = settings
        .alphas
        .iter()
        .map(|&a| {
            if settings.horizon == 1 {
                (0.5 * (m1 + s1 * norm_quantile(a))).exp()
            } else {
                sorted_quantile(&sorted_sqrt, a)
            }
        })
        .collect();
    let return_quantiles = settings
        .alphas
        .iter()
        .map(|&a| mixture_return_quantile(&agg, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(MixtureForecast {
        horizon: settings.horizon,
        alphas: settings.alphas.clone(),
        rv_quantiles,
        return_quantiles,
        one_step_mean: m1,
        one_step_sd: s1,
        n_draws: settings.n_draws,
        seed: settings.seed,
    })
}

/// Exact Gaussian simulation of the log-RV process: the fractional noise is
/// drawn by Durbin–Levinson recursion on its autocovariances, then passed
/// through the MA and AR filters. `burn_in` covers the AR start-up only.
pub fn simulate_arfima(params: &ArfimaParams, n: usize, burn_in: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let total = n + burn_in + 1;
    let d = params.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma0 = params.sigma_u2 * libm::tgamma(1.0 - 2.0 * d) / libm::tgamma(1.0 - d).powi(2);
    let mut v = gamma0;
    let mut coef: Vec<f64> = Vec::with_capacity(total);
    let mut prev: Vec<f64> = Vec::with_capacity(total);
    let mut fi = Vec::with_capacity(total);
    for t in 0..total {
        if t > 0 {
            let kk = d / (t as f64 - d);
            prev.clear();
            prev.extend_from_slice(&coef);
            coef.clear();
            for j in 0..t - 1 {
                coef.push(prev[j] - kk * prev[t - 2 - j]);
            }
            coef.push(kk);
            v *= 1.0 - kk * kk;
        }
        let mean: f64 = coef.iter().enumerate().map(|(j, c)| c * fi[t - 1 - j]).sum();
        let e: f64 = StandardNormal.sample(&mut rng);
        fi.push(mean + v.sqrt() * e);
    }
    let mut out = Vec::with_capacity(n);
    let mut y_prev = 0.0;
    for t in 1..total {
        let x = fi[t] - params.ma_psi * fi[t - 1];
        let y = params.phi * y_prev + x;
        if t > burn_in {
            out.push(params.mu + y);
        }
        y_prev = y;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_examples() {
        assert_eq!(frac_diff_weights(0.0, 3), vec![1.0, 0.0, 0.0, 0.0]);
        let w = frac_diff_weights(0.4, 3);
        for (a, b) in w.iter().zip([1.0, -0.4, -0.12, -0.064]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(frac_diff_weights(1.0, 3), vec![1.0, -1.0, 0.0, 0.0]);
    }

    #[test]
    fn white_noise_likelihood() {
        let x = [0.3, -1.2, 0.8, 2.0, -0.4];
        let p = ArfimaParams {
            mu: 0.1,
            phi: 0.0,
            d: 0.0,
            sigma_u2: 0.7,
            ma_psi: 0.0,
        };
        let ll = arfima_loglik(&p, &x, 100).unwrap();
        let want: f64 = x
            .iter()
            .map(|v| -0.5 * (2.0 * std::f64::consts::PI * 0.7).ln() - (v - 0.1) * (v - 0.1) / 1.4)
            .sum();
        assert!((ll - want).abs() < 1e-12);
    }

    #[test]
    fn vanishing_variance_is_guarded() {
        let p = ArfimaParams {
            mu: 0.0,
            phi: 0.0,
            d: 0.0,
            sigma_u2: 1e-320,
            ma_psi: 0.0,
        };
        assert!(matches!(arfima_loglik(&p, &[1.0, -1.0], 100), Err(Error::NonFiniteLikelihood)));
    }

    #[test]
    fn constant_series_diverges() {
        assert!(matches!(
            fit_arfima(&[0.5; 200], &ArfimaConfig::default()),
            Err(Error::OptimizerDivergence(_))
        ));
    }

    #[test]
    fn ma_weights_of_ar1() {
        let p = ArfimaParams {
            mu: 0.0,
            phi: 0.6,
            d: 0.0,
            sigma_u2: 1.0,
            ma_psi: 0.0,
        };
        let hist = vec![0.0; 100];
        let (_, psi) = forecast_moments(&p, &hist, 4, 100);
        for (j, v) in psi.iter().enumerate() {
            assert!((v - 0.6f64.powi(j as i32)).abs() < 1e-14);
        }
    }

    #[test]
    fn degenerate_mixture_is_normal() {
        let q = mixture_return_quantile(&[2.25; 10], 0.05).unwrap();
        assert!((q - 1.5 * norm_quantile(0.05)).abs() < 1e-15);
        assert_eq!(mixture_return_quantile(&[1.0, 4.0], 0.5).unwrap(), 0.0);
    }
}
