use rqvol::arfima_mixture::{
    arfima_loglik, fit_arfima, forecast_mixture, mixture_cdf, simulate_aggregate_rv, simulate_arfima, ArfimaConfig,
    ArfimaParams, ForecastSettings,
};
use rqvol::numerics::norm_quantile;

fn params(phi: f64, d: f64) -> ArfimaParams {
    ArfimaParams {
        mu: -0.2,
        phi,
        d,
        sigma_u2: 0.3,
        ma_psi: 0.0,
    }
}

#[test]
fn recovers_long_memory_parameters() {
    let truth = params(0.2, 0.4);
    let x = simulate_arfima(&truth, 10_000, 500, 11).unwrap();
    let t = std::time::Instant::now();
    let fit = fit_arfima(&x, &ArfimaConfig::default()).unwrap();
    eprintln!("{:?} in {:.2}s, tstats {:?}", fit.params, t.elapsed().as_secs_f64(), fit.tstats);
    assert!((fit.params.d - 0.4).abs() < 0.05);
    assert!((fit.params.phi - 0.2).abs() < 0.05);
    assert!((fit.params.sigma_u2 - 0.3).abs() < 0.02);
}

#[test]
fn likelihood_prefers_truth() {
    let truth = params(0.3, 0.3);
    let x = simulate_arfima(&truth, 5000, 300, 4).unwrap();
    let at = arfima_loglik(&truth, &x, 1000).unwrap();
    for (dphi, dd) in [(0.1, 0.0), (-0.1, 0.0), (0.0, 0.1), (0.0, -0.1)] {
        let p = ArfimaParams { phi: truth.phi + dphi, d: truth.d + dd, ..truth };
        assert!(arfima_loglik(&p, &x, 1000).unwrap() < at);
    }
}

fn settings(h: usize, n_draws: usize, seed: u64) -> ForecastSettings {
    ForecastSettings {
        horizon: h,
        alphas: vec![0.05, 0.1, 0.5, 0.9, 0.95],
        n_draws,
        seed,
        truncation: 200,
    }
}

#[test]
fn forecasts_are_monotone_and_symmetric() {
    let p = params(0.3, 0.35);
    let hist = simulate_arfima(&p, 400, 100, 1).unwrap();
    for h in [1, 5, 10] {
        let f = forecast_mixture(&p, &hist, &settings(h, 20_000, 9)).unwrap();
        assert!(f.rv_quantiles.windows(2).all(|w| w[0] < w[1]));
        assert!(f.return_quantiles.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(f.return_quantiles[2], 0.0);
        assert!((f.return_quantiles[0] + f.return_quantiles[4]).abs() < 1e-9);
    }
}

#[test]
fn quantile_is_a_root_of_an_independent_cdf() {
    let p = params(0.3, 0.35);
    let hist = simulate_arfima(&p, 400, 100, 2).unwrap();
    let f = forecast_mixture(&p, &hist, &settings(5, 100_000, 1)).unwrap();
    let other = simulate_aggregate_rv(&p, &hist, &settings(5, 100_000, 2)).unwrap();
    for (a, q) in f.alphas.iter().zip(&f.return_quantiles) {
        let c = mixture_cdf(&other, *q);
        assert!((c - a).abs() < 2e-3, "alpha {a}: cdf {c}");
    }
}

#[test]
fn ar1_special_case_matches_closed_form() {
    let p = params(0.6, 0.0);
    let hist = simulate_arfima(&p, 300, 100, 3).unwrap();
    let f = forecast_mixture(&p, &hist, &settings(1, 1000, 0)).unwrap();
    let last = hist[hist.len() - 1];
    let m = p.mu + p.phi * (last - p.mu);
    for (a, q) in f.alphas.iter().zip(&f.rv_quantiles) {
        let want = (0.5 * (m + p.sigma_u2.sqrt() * norm_quantile(*a))).exp();
        assert!((q - want).abs() < 1e-12);
    }
    // 3-step volatility quantiles against a brute-force simulation of the AR(1)
    let f3 = forecast_mixture(&p, &hist, &settings(3, 200_000, 4)).unwrap();
    let f3b = forecast_mixture(&p, &hist, &settings(3, 400_000, 5)).unwrap();
    for (a, b) in f3.rv_quantiles.iter().zip(&f3b.rv_quantiles) {
        assert!((a - b).abs() / b < 0.005);
    }
}

#[test]
fn collapsed_variance_gives_normal_quantile() {
    let p = ArfimaParams { sigma_u2: 1e-300, ..params(0.5, 0.2) };
    let hist = vec![-0.2; 300];
    let f = forecast_mixture(&p, &hist, &settings(1, 100, 0)).unwrap();
    let rv_hat = (-0.2f64).exp();
    for (a, q) in f.alphas.iter().zip(&f.return_quantiles) {
        assert!((q - rv_hat.sqrt() * norm_quantile(*a)).abs() < 1e-12);
    }
}
