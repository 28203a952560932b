use rqvol::caviar::{
    caviar_std_errors, evaluate_quantile_path, fit_caviar, sav_true_params, simulate_sav, CaviarData, CaviarForm,
    CaviarParams, CaviarSpec, MultiStartConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn quick() -> MultiStartConfig {
    MultiStartConfig {
        draws: 2000,
        polished: 4,
        ..Default::default()
    }
}

#[test]
fn sav_recovery_on_simulated_data() {
    let (omega, b1, b2) = (0.05, 0.85, 0.1);
    let alpha = 0.05;
    let truth = sav_true_params(omega, b1, b2, alpha);
    let mut inside = 0;
    let reps = 4;
    for rep in 0..reps {
        let r = simulate_sav(omega, b1, b2, 5000, 500, 100 + rep);
        let spec = CaviarSpec::new(CaviarForm::Sav, alpha);
        let t = std::time::Instant::now();
        let mut fit = fit_caviar(&spec, &r, &[], &MultiStartConfig { seed: rep, ..quick() }).unwrap();
        let table = caviar_std_errors(&fit, &r, &[], None).unwrap();
        let se = table.selected_std_errors().unwrap().to_vec();
        fit.std_errors = Some(table);
        eprintln!("rep {rep}: {:?} se {:?} ({:.2}s)", fit.params.beta, se, t.elapsed().as_secs_f64());
        if fit.params.beta.iter().zip(&truth).zip(&se).all(|((b, t), s)| (b - t).abs() <= 3.0 * s) {
            inside += 1;
        }
    }
    assert!(inside >= reps - 1, "{inside}/{reps}");
}

#[test]
fn same_seed_same_fit() {
    let r = simulate_sav(0.05, 0.8, 0.15, 800, 100, 7);
    let spec = CaviarSpec::new(CaviarForm::As, 0.1);
    let cfg = MultiStartConfig { draws: 500, polished: 2, seed: 3, ..Default::default() };
    let a = fit_caviar(&spec, &r, &[], &cfg).unwrap();
    let b = fit_caviar(&spec, &r, &[], &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.start_objectives.iter().all(|o| a.objective <= *o + 1e-15));
    // stored objective is reproducible from the stored path
    let data = CaviarData::new(&spec, &r, &[]).unwrap();
    let (path, _, obj) = evaluate_quantile_path(&spec, &a.params, &data, a.q0).unwrap();
    assert_eq!(path, a.q_path);
    assert!((obj - a.objective).abs() < 1e-12);
}

#[test]
fn zero_regressor_is_flagged() {
    let r = simulate_sav(0.05, 0.8, 0.15, 600, 100, 9);
    let exog = vec![vec![0.0]; r.len()];
    let mut spec = CaviarSpec::new(CaviarForm::Sav, 0.05);
    spec.exog_labels = vec!["zero".into()];
    let fit = fit_caviar(&spec, &r, &exog, &MultiStartConfig { draws: 300, polished: 2, ..Default::default() }).unwrap();
    assert_eq!(fit.flat_directions, vec![3]);
}

#[test]
fn asymmetric_slope_nests_symmetric() {
    // with the non-positive negative part, b3 r+ + b4 r- equals b3 |r| when b4 = -b3
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let r: Vec<f64> = (0..200).map(|_| rng.random_range(-3.0..3.0)).collect();
        let exog: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random_range(0.0..2.0)]).collect();
        let b = [rng.random_range(-1.0..1.0), rng.random_range(0.0..0.9), rng.random_range(-1.0..1.0)];
        let g = rng.random_range(-1.0..1.0);
        let mut sav = CaviarSpec::new(CaviarForm::Sav, 0.1);
        sav.exog_labels = vec!["x".into()];
        let mut asym = sav.clone();
        asym.form = CaviarForm::As;
        let ps = CaviarParams { beta: b.to_vec(), gamma: vec![g] };
        let pa = CaviarParams { beta: vec![b[0], b[1], b[2], -b[2]], gamma: vec![g] };
        let ds = CaviarData::new(&sav, &r, &exog).unwrap();
        let da = CaviarData::new(&asym, &r, &exog).unwrap();
        let (qs, _, os) = evaluate_quantile_path(&sav, &ps, &ds, -1.0).unwrap();
        let (qa, _, oa) = evaluate_quantile_path(&asym, &pa, &da, -1.0).unwrap();
        for (x, y) in qs.iter().zip(&qa) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((os - oa).abs() < 1e-12);
    }
}

#[test]
fn one_point_grid_selects_that_point() {
    let r = simulate_sav(0.05, 0.8, 0.15, 1000, 100, 5);
    let spec = CaviarSpec::new(CaviarForm::Sav, 0.05);
    let fit = fit_caviar(&spec, &r, &[], &MultiStartConfig { draws: 500, polished: 2, ..Default::default() }).unwrap();
    let t = caviar_std_errors(&fit, &r, &[], Some(&[0.3])).unwrap();
    assert_eq!(t.selected, Some(0));
}
