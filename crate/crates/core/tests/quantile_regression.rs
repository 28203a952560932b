use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rqvol::qr_core::{
    fit_lqr, fit_lqr_simplex, mbb_covariance, objective, quantile_process, BootstrapConfig, Dataset,
};

fn random_dataset(seed: u64, n: usize, p: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut r = vec![1.0];
            r.extend((1..p).map(|_| rng.random_range(-2.0..2.0)));
            r
        })
        .collect();
    let y = rows
        .iter()
        .map(|r| 0.5 + r.iter().skip(1).sum::<f64>() + rng.random_range(-1.0..1.0) * (1.0 + r.get(1).copied().unwrap_or(0.0).abs()))
        .collect();
    let labels = (0..p).map(|j| format!("x{j}")).collect();
    Dataset::from_rows(y, &rows, labels).unwrap()
}

#[test]
fn interior_point_matches_simplex() {
    for seed in 0..25 {
        let data = random_dataset(seed, 40 + seed as usize * 3, 1 + (seed as usize % 4));
        for &alpha in &[0.05, 0.25, 0.5, 0.9] {
            let ipm = fit_lqr(&data, alpha).unwrap();
            let lp = fit_lqr_simplex(&data, alpha).unwrap();
            assert!(
                (ipm.objective - lp.objective).abs() <= 1e-9 * (1.0 + lp.objective),
                "seed {seed} alpha {alpha}: {} vs {}",
                ipm.objective,
                lp.objective
            );
        }
    }
}

#[test]
fn intercept_only_gives_order_statistic() {
    let y = vec![7.0, -1.0, 3.5, 2.0, 9.0, 0.0, 4.0, 5.5, -3.0, 1.0];
    let rows = vec![vec![1.0]; y.len()];
    let data = Dataset::from_rows(y.clone(), &rows, vec!["const".into()]).unwrap();
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    // alpha = 0.25 with n = 10: unique minimizer is the 3rd order statistic
    let fit = fit_lqr(&data, 0.25).unwrap();
    assert!((fit.beta[0] - sorted[2]).abs() < 1e-8);
}

#[test]
fn block_bootstrap_is_deterministic() {
    let data = random_dataset(3, 200, 2);
    let cfg = BootstrapConfig::with_defaults(data.n(), 42);
    assert_eq!(cfg.block_length, 6);
    let a = mbb_covariance(&data, 0.1, &BootstrapConfig { replications: 200, ..cfg }).unwrap();
    let b = mbb_covariance(&data, 0.1, &BootstrapConfig { replications: 200, ..cfg }).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.failed, 0);
    assert!(a.std_errors.iter().all(|s| *s > 0.0 && s.is_finite()));
}

#[test]
fn crossing_is_audited() {
    let data = random_dataset(11, 300, 2);
    let proc_ = quantile_process(&data, &[0.1, 0.5, 0.9]).unwrap();
    assert_eq!(proc_.fits.len(), 3);
    assert_eq!(proc_.crossing.total_rows, 300);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn first_order_conditions(seed in 0u64..10_000, n in 20usize..80, alpha in 0.05f64..0.95) {
        let y: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
        };
        let rows = vec![vec![1.0]; n];
        let data = Dataset::from_rows(y, &rows, vec!["const".into()]).unwrap();
        let fit = fit_lqr(&data, alpha).unwrap();
        let neg = fit.residuals.iter().filter(|r| **r < -1e-9).count() as f64 / n as f64;
        let nonpos = fit.residuals.iter().filter(|r| **r <= 1e-9).count() as f64 / n as f64;
        prop_assert!(neg <= alpha + 1e-12 && alpha <= nonpos + 1e-12);
    }

    #[test]
    fn equivariance(seed in 0u64..10_000, alpha in 0.1f64..0.9, scale in 0.2f64..5.0, shift in -3.0f64..3.0) {
        let data = random_dataset(seed, 60, 2);
        let base = fit_lqr(&data, alpha).unwrap();
        // scale equivariance: y -> c y
        let scaled = Dataset::new(data.y.iter().map(|v| scale * v).collect(), data.x.clone(), data.labels.clone(), data.dates.clone()).unwrap();
        let fs = fit_lqr(&scaled, alpha).unwrap();
        prop_assert!((fs.objective - scale * base.objective).abs() <= 1e-7 * (1.0 + fs.objective));
        // regression equivariance: y -> y + X g
        let g = [shift, -0.5 * shift];
        let shifted_y: Vec<f64> = (0..data.n()).map(|i| data.y[i] + data.x[(i, 0)] * g[0] + data.x[(i, 1)] * g[1]).collect();
        let shifted = Dataset::new(shifted_y, data.x.clone(), data.labels.clone(), data.dates.clone()).unwrap();
        let fr = fit_lqr(&shifted, alpha).unwrap();
        prop_assert!((fr.objective - base.objective).abs() <= 1e-7 * (1.0 + base.objective));
        let moved: Vec<f64> = base.beta.iter().zip(&g).map(|(b, c)| b + c).collect();
        prop_assert!((objective(&shifted.x, &shifted.y, &moved, alpha) - fr.objective).abs() <= 1e-7 * (1.0 + fr.objective));
    }

    #[test]
    fn objective_never_beaten_by_perturbation(seed in 0u64..10_000, alpha in 0.05f64..0.95) {
        let data = random_dataset(seed, 50, 3);
        let fit = fit_lqr(&data, alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for _ in 0..20 {
            let b: Vec<f64> = fit.beta.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
            prop_assert!(objective(&data.x, &data.y, &b, alpha) >= fit.objective - 1e-10);
        }
    }
}

#[test]
fn large_problem_is_fast() {
    let data = random_dataset(99, 5000, 6);
    let t = std::time::Instant::now();
    let fit = fit_lqr(&data, 0.05).unwrap();
    assert!(fit.objective.is_finite());
    assert!(t.elapsed().as_secs_f64() < 5.0);
}

