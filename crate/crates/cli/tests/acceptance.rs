//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p rqvol-cli --test acceptance`; pass criterion
//! numbers as arguments (`-- 3 7`) to run a subset.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rqvol::arfima_mixture::{fit_arfima, simulate_arfima, ArfimaConfig, ArfimaParams};
use rqvol::caviar::{caviar_std_errors, fit_caviar, sav_true_params, simulate_sav, CaviarForm, CaviarSpec, MultiStartConfig};
use rqvol::evaluation::{dm_test, dm_test_with_lags, dq_test, hits, tick_loss_series};
use rqvol::implied_vol::{
    baw_price, black76_price, implied_vol_series, invert_baw_iv, ImpliedVolSettings, OptionQuote, OptionType,
};
use rqvol::numerics::norm_quantile;
use rqvol::qr_core::{check_loss, fit_lqr, predict_quantile, Dataset};
use rqvol::realized_measures::{compute_day, med_rv, realized_variance, DEFAULT_SIGNIFICANCE};

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            notes: Vec::new(),
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn day0() -> NaiveDate {
    NaiveDate::from_ymd_opt(2015, 3, 2).unwrap()
}

// ------------------------------------------------------------ LP oracle

/// Dense primal simplex on the textbook quantile-regression LP
/// `min alpha 1'u + (1 - alpha) 1'v  s.t.  X(b+ - b-) + u - v = y`,
/// started from the slack basis. Returns the optimal total check loss.
fn lp_oracle(x: &[Vec<f64>], y: &[f64], alpha: f64) -> f64 {
    let n = y.len();
    let p = x[0].len();
    let cols = 2 * p + 2 * n;
    let mut cost = vec![0.0; cols];
    for i in 0..n {
        cost[2 * p + i] = alpha;
        cost[2 * p + n + i] = 1.0 - alpha;
    }
    // rows scaled so the starting basic variable has coefficient +1
    let mut t = vec![vec![0.0; cols + 1]; n];
    let mut basis = vec![0usize; n];
    for i in 0..n {
        let s = if y[i] >= 0.0 { 1.0 } else { -1.0 };
        for j in 0..p {
            t[i][j] = s * x[i][j];
            t[i][p + j] = -s * x[i][j];
        }
        t[i][2 * p + i] = s;
        t[i][2 * p + n + i] = -s;
        t[i][cols] = s * y[i];
        basis[i] = if s > 0.0 { 2 * p + i } else { 2 * p + n + i };
    }
    let eps = 1e-11;
    let mut degenerate_run = 0;
    for _ in 0..100_000 {
        let reduced = |j: usize, t: &Vec<Vec<f64>>, basis: &Vec<usize>| {
            cost[j] - (0..n).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>()
        };
        let bland = degenerate_run > 50;
        let mut enter = None;
        let mut best = -eps;
        for j in 0..cols {
            if basis.contains(&j) {
                continue;
            }
            let r = reduced(j, &t, &basis);
            if r < best {
                enter = Some(j);
                if bland {
                    break;
                }
                best = r;
            }
        }
        let Some(e) = enter else { break };
        let mut leave = None;
        let mut ratio = f64::INFINITY;
        for i in 0..n {
            if t[i][e] > eps {
                let r = t[i][cols] / t[i][e];
                if r < ratio - 1e-14 || (r <= ratio + 1e-14 && leave.is_some_and(|l: usize| basis[i] < basis[l])) {
                    ratio = r;
                    leave = Some(i);
                }
            }
        }
        let l = leave.expect("objective bounded below by zero");
        degenerate_run = if ratio <= eps { degenerate_run + 1 } else { 0 };
        let piv = t[l][e];
        for v in t[l].iter_mut() {
            *v /= piv;
        }
        let row = t[l].clone();
        for (i, r) in t.iter_mut().enumerate() {
            if i != l && r[e] != 0.0 {
                let f = r[e];
                for (a, b) in r.iter_mut().zip(&row) {
                    *a -= f * b;
                }
            }
        }
        basis[l] = e;
    }
    let mut b = vec![0.0; p];
    for i in 0..n {
        let j = basis[i];
        if j < p {
            b[j] += t[i][cols];
        } else if j < 2 * p {
            b[j - p] -= t[i][cols];
        }
    }
    (0..n)
        .map(|i| check_loss(y[i] - x[i].iter().zip(&b).map(|(a, c)| a * c).sum::<f64>(), alpha))
        .sum()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    let mut fit_secs = 0.0;
    let start = Instant::now();
    for _ in 0..200 {
        let n = rng.random_range(20..=200);
        let p = rng.random_range(1..=5);
        let alpha = rng.random_range(0.02..0.98);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r = vec![1.0];
                r.extend((1..p).map(|_| rng.random_range(-2.0..2.0)));
                r
            })
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().sum::<f64>() + (1.0 + r.last().unwrap().abs()) * normal(&mut rng))
            .collect();
        let data = Dataset::from_rows(y.clone(), &rows, (0..p).map(|j| format!("x{j}")).collect()).unwrap();
        let t = Instant::now();
        let fit = fit_lqr(&data, alpha).unwrap();
        fit_secs += t.elapsed().as_secs_f64();
        let total = fit.objective * n as f64;
        worst = worst.max((total - lp_oracle(&rows, &y, alpha)).abs());
    }
    let total_secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst <= 1e-6 && fit_secs < 10.0,
        format!(
            "max |total check loss - LP oracle| = {worst:.2e} (<= 1e-6); fit time {fit_secs:.2} s (< 10 s), {total_secs:.2} s incl. oracle"
        ),
    )
}

// ------------------------------------------------------- calibration

fn criterion_2() -> Outcome {
    let alphas = [0.05, 0.10, 0.50, 0.90, 0.95];
    let (reps, n, n_oos) = (100, 5000, 1000);
    let mut cov = vec![Vec::with_capacity(reps); alphas.len()];
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + rep as u64);
        // persistent log-volatility drives the scale of next-day returns
        let mut h = 0.0;
        let mut xs = Vec::with_capacity(n + n_oos);
        let mut ys = Vec::with_capacity(n + n_oos);
        for _ in 0..(n + n_oos + 200) {
            let x = (h / 2.0f64).exp();
            let y = 0.02 + (0.1 + 0.9 * x) * normal(&mut rng);
            xs.push(x);
            ys.push(y);
            h = 0.95 * h + 0.3 * normal(&mut rng);
        }
        let (xs, ys) = (&xs[200..], &ys[200..]);
        let rows: Vec<Vec<f64>> = xs[..n].iter().map(|x| vec![1.0, *x]).collect();
        let data = Dataset::from_rows(ys[..n].to_vec(), &rows, vec!["const".into(), "x".into()]).unwrap();
        for (k, &a) in alphas.iter().enumerate() {
            let fit = fit_lqr(&data, a).unwrap();
            let hit = (n..n + n_oos)
                .filter(|&t| ys[t] < predict_quantile(&fit, &[1.0, xs[t]]).unwrap())
                .count();
            cov[k].push(hit as f64 / n_oos as f64);
        }
    }
    let mut pass = true;
    let parts: Vec<String> = alphas
        .iter()
        .zip(&cov)
        .map(|(a, c)| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (c.len() - 1) as f64).sqrt();
            let se = sd / (c.len() as f64).sqrt();
            let ok = (m - a).abs() <= 2.0 * se;
            pass &= ok;
            format!("{a}: {m:.4} (±2se {:.4}){}", 2.0 * se, if ok { "" } else { " ✗" })
        })
        .collect();
    Outcome::new(
        pass,
        format!("mean OOS coverage over {reps} reps (n = {n}, {n_oos} OOS each): {}", parts.join(", ")),
    )
}

// --------------------------------------------------- realized measures

fn day_returns(rng: &mut ChaCha8Rng, m: usize, daily_var: f64) -> Vec<f64> {
    let sd = (daily_var / m as f64).sqrt();
    (0..m).map(|_| sd * normal(rng)).collect()
}

fn criterion_3() -> Outcome {
    let m = 390;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let days = 100_000;
    let rejections = (0..days)
        .filter(|_| {
            let r = day_returns(&mut rng, m, 1.0);
            compute_day(day0(), &r, DEFAULT_SIGNIFICANCE).unwrap().jump_flag
        })
        .count();
    let size = rejections as f64 / days as f64;

    // jump of 10 daily standard deviations (daily variance sigma^2 = 1)
    // placed in one random bar with random sign
    let power_at = |rng: &mut ChaCha8Rng, jump: f64, days: usize| {
        (0..days)
            .filter(|_| {
                let mut r = day_returns(rng, m, 1.0);
                let k = rng.random_range(0..m);
                r[k] += if rng.random::<bool>() { jump } else { -jump };
                compute_day(day0(), &r, DEFAULT_SIGNIFICANCE).unwrap().jump_flag
            })
            .count() as f64
            / days as f64
    };
    let power = power_at(&mut rng, 10.0, 10_000);
    let bar_power = power_at(&mut rng, 10.0 / (m as f64).sqrt(), 10_000);
    let mut out = Outcome::new(
        (0.0005..=0.002).contains(&size) && power >= 0.99,
        format!("size {size:.5} over {days} days (in [0.0005, 0.002]); power vs 10-sigma jump {power:.4} (>= 0.99)"),
    );
    out.notes.push(format!(
        "power vs a jump of 10 per-bar standard deviations: {bar_power:.4} (informational)"
    ));
    out
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let days = 10_000;
    let (mut medrv_sum, mut se_fine, mut se_coarse) = (0.0, 0.0, 0.0);
    for _ in 0..days {
        // one 1560-bar path per day, aggregated to 390 bars
        let fine = day_returns(&mut rng, 1560, 1.0);
        let coarse: Vec<f64> = fine.chunks(4).map(|c| c.iter().sum()).collect();
        medrv_sum += med_rv(&coarse).unwrap();
        se_fine += (realized_variance(&fine).unwrap() - 1.0).powi(2);
        se_coarse += (realized_variance(&coarse).unwrap() - 1.0).powi(2);
    }
    let bias = medrv_sum / days as f64 - 1.0;
    let ratio = (se_fine / se_coarse).sqrt();
    Outcome::new(
        bias.abs() < 0.01 && (0.35..=0.65).contains(&ratio),
        format!(
            "MedRV relative bias {:+.4}% (< 1%); RMSE(RV err) M=1560 / M=390 = {ratio:.4} (0.5 ± 30%)",
            100.0 * bias
        ),
    )
}

// ------------------------------------------------------------- CAViaR

fn criterion_5() -> Outcome {
    let (omega, b1, b2, alpha) = (0.05, 0.85, 0.1, 0.05);
    let truth = sav_true_params(omega, b1, b2, alpha);
    let reps = 20;
    let mut inside = 0;
    let mut slowest: f64 = 0.0;
    let mut notes = Vec::new();
    for rep in 0..reps {
        let r = simulate_sav(omega, b1, b2, 5000, 500, 500 + rep);
        let spec = CaviarSpec::new(CaviarForm::Sav, alpha);
        let t = Instant::now();
        let fit = fit_caviar(&spec, &r, &[], &MultiStartConfig { seed: rep, ..Default::default() }).unwrap();
        let se = caviar_std_errors(&fit, &r, &[], None);
        slowest = slowest.max(t.elapsed().as_secs_f64());
        match se {
            Ok(table) => {
                let se = table.selected_std_errors().unwrap();
                let ok = fit.params.beta.iter().zip(&truth).zip(se).all(|((b, t), s)| (b - t).abs() <= 3.0 * s);
                if ok {
                    inside += 1;
                } else {
                    notes.push(format!("rep {rep}: beta {:?} se {se:?} outside 3 se", fit.params.beta));
                }
            }
            Err(e) => notes.push(format!("rep {rep}: no standard errors ({e})")),
        }
    }
    let mut out = Outcome::new(
        inside >= 17 && slowest < 300.0,
        format!("{inside}/{reps} replications with every parameter within 3 se (>= 17); slowest rep {slowest:.1} s (< 300 s)"),
    );
    out.notes = notes;
    out
}

// ------------------------------------------------------------- ARFIMA

fn criterion_6() -> Outcome {
    let truth = ArfimaParams {
        mu: -0.37,
        phi: -0.07,
        d: 0.48,
        sigma_u2: 0.25,
        ma_psi: 0.0,
    };
    let x = simulate_arfima(&truth, 10_000, 500, 6).unwrap();
    let fit = fit_arfima(&x, &ArfimaConfig::default()).unwrap();
    let d = fit.params.d;
    Outcome::new(
        (d - 0.48).abs() <= 0.05,
        format!("d_hat = {d:.4} (0.48 ± 0.05); phi_hat = {:.4}, sigma2_hat = {:.4}", fit.params.phi, fit.params.sigma_u2),
    )
}

// --------------------------------------------------------- evaluation

fn ks_uniform(mut ps: Vec<f64>) -> f64 {
    ps.sort_by(f64::total_cmp);
    let n = ps.len() as f64;
    ps.iter()
        .enumerate()
        .map(|(i, p)| ((i + 1) as f64 / n - p).max(p - i as f64 / n))
        .fold(0.0, f64::max)
}

fn criterion_7() -> Outcome {
    let (reps, n, lags, alpha, mc_reps) = (500, 1000, 5, 0.05, 999);
    let ps: Vec<f64> = (0..reps)
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(7000 + rep as u64);
            // a time-varying quantile path; hits are iid Bernoulli(alpha)
            // and independent of it, so the null holds
            let mut h = 0.0;
            let path: Vec<f64> = (0..n)
                .map(|_| {
                    h = 0.95 * h + 0.3 * normal(&mut rng);
                    norm_quantile(alpha) * (h / 2.0f64).exp()
                })
                .collect();
            let obs: Vec<f64> = path
                .iter()
                .map(|q| if rng.random::<f64>() < alpha { q - 1.0 } else { q + 1.0 })
                .collect();
            let s = hits(&obs, &path, alpha, 1).unwrap();
            dq_test(&s, lags, mc_reps, rep as u64).unwrap().p_value_mc
        })
        .collect();
    let rate = |level: f64| ps.iter().filter(|p| **p <= level).count() as f64 / reps as f64;
    let rates = format!("{:.3}/{:.3}/{:.3}", rate(0.01), rate(0.05), rate(0.10));
    let ks = ks_uniform(ps);
    let mut out = Outcome::new(
        ks < 0.05,
        format!("KS distance of {reps} MC p-values from U(0,1) = {ks:.5} (< 0.05); n = {n}, {lags} lags, {mc_reps} MC draws"),
    );
    out.notes.push(format!(
        "rejection rates at 1%/5%/10%: {rates}; Kolmogorov test p-value of this KS distance {:.3}",
        kolmogorov_p_value(ks, reps)
    ));
    out
}

/// Asymptotic upper tail of the one-sample KS statistic.
fn kolmogorov_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let s: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            (if k as usize % 2 == 1 { 2.0 } else { -2.0 }) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    s.clamp(0.0, 1.0)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut exact = true;
    for k in 0..500 {
        let n = rng.random_range(30..400);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let lags = k % 7;
        let ab = dm_test_with_lags(&a, &b, lags).unwrap().stat;
        let ba = dm_test_with_lags(&b, &a, lags).unwrap().stat;
        exact &= ab == -ba;
    }
    let (reps, n, alpha) = (4000, 500, 0.05);
    let z = norm_quantile(alpha);
    let rejections = (0..reps)
        .filter(|_| {
            let r: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            // two forecasts with the same error distribution
            let qa: Vec<f64> = (0..n).map(|_| z + 0.3 * normal(&mut rng)).collect();
            let qb: Vec<f64> = (0..n).map(|_| z + 0.3 * normal(&mut rng)).collect();
            let la = tick_loss_series(&r, &qa, alpha).unwrap();
            let lb = tick_loss_series(&r, &qb, alpha).unwrap();
            dm_test(&la, &lb, 1).unwrap().p_value < 0.05
        })
        .count();
    let size = rejections as f64 / reps as f64;
    Outcome::new(
        exact && (0.03..=0.07).contains(&size),
        format!(
            "swap negates statistic exactly: {exact} (500 cases); 5% rejection rate under equal accuracy {size:.4} over {reps} reps (in [0.03, 0.07])"
        ),
    )
}

// --------------------------------------------------------- implied vol

fn flat_smile_quotes(sigma: f64, rate: f64, f: f64, maturities: &[u64]) -> Vec<OptionQuote> {
    let mut out = Vec::new();
    for &days in maturities {
        let expiry = day0() + Days::new(days);
        let tau = days as f64 / 365.0;
        for i in -40..=40 {
            let x = f * (0.0125 * i as f64).exp();
            for ty in [OptionType::Put, OptionType::Call] {
                out.push(OptionQuote {
                    quote_date: day0(),
                    expiry,
                    underlying_future_expiry: expiry,
                    strike: x,
                    option_type: ty,
                    price: baw_price(f, x, tau, sigma, rate, ty).unwrap(),
                    futures_price: f,
                    rate,
                });
            }
        }
    }
    out
}

fn criterion_9() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;

    let mut worst_flat: f64 = 0.0;
    for &(sigma, rate, m1, m2) in &[(0.15, 0.0, 16, 44), (0.25, 0.02, 23, 51), (0.6, 0.05, 12, 72)] {
        let quotes = flat_smile_quotes(sigma, rate, 80.0, &[m1, m2]);
        let report = implied_vol_series(&quotes, &ImpliedVolSettings::default());
        let imv = report.series[0].imv_30d;
        worst_flat = worst_flat.max((imv / (sigma * sigma) - 1.0).abs());
    }
    pass &= worst_flat < 0.01;
    parts.push(format!("flat-smile max |ImV/sigma^2 - 1| = {:.4}% (< 1%)", 100.0 * worst_flat));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut dominated = 0;
    for _ in 0..1000 {
        let f = rng.random_range(20.0..200.0);
        let x = f * rng.random_range(0.5..1.5);
        let tau = rng.random_range(0.02..2.0);
        let sigma = rng.random_range(0.05..1.0);
        let r = rng.random_range(0.0..0.1);
        let ty = if rng.random::<bool>() { OptionType::Call } else { OptionType::Put };
        let b = baw_price(f, x, tau, sigma, r, ty).unwrap();
        if b >= black76_price(f, x, tau, sigma, (-r * tau).exp(), ty) {
            dominated += 1;
        }
    }
    pass &= dominated == 1000;
    parts.push(format!("BAW >= Black-76 on {dominated}/1000 points"));

    let (mut worst_rt, mut tested): (f64, usize) = (0.0, 0);
    while tested < 1000 {
        let f = rng.random_range(20.0..200.0);
        let x = f * rng.random_range(-0.3f64..0.3).exp();
        let days = rng.random_range(10..400u64);
        let sigma = rng.random_range(0.05..1.5);
        let r = rng.random_range(0.0..0.1);
        let ty = if rng.random::<bool>() { OptionType::Call } else { OptionType::Put };
        let expiry = day0() + Days::new(days);
        let mut q = OptionQuote {
            quote_date: day0(),
            expiry,
            underlying_future_expiry: expiry,
            strike: x,
            option_type: ty,
            price: 0.0,
            futures_price: f,
            rate: r,
        };
        let price = baw_price(f, x, q.tau(), sigma, r, ty).unwrap();
        // the volatility is identified only where the price carries time value
        let vega = (baw_price(f, x, q.tau(), sigma + 1e-4, r, ty).unwrap() - price) / 1e-4;
        if !(vega > 1e-2 && price - q.intrinsic() > 1e-6) {
            continue;
        }
        q.price = price;
        worst_rt = worst_rt.max((invert_baw_iv(&q).unwrap() - sigma).abs());
        tested += 1;
    }
    pass &= worst_rt < 1e-6;
    parts.push(format!("inversion round trip max error {worst_rt:.2e} over {tested} points (< 1e-6)"));

    let atm = format!("{:.4}", black76_price(100.0, 100.0, 0.25, 0.2, 1.0, OptionType::Call));
    pass &= atm == "3.9878";
    parts.push(format!("ATM Black-76 = {atm} (3.9878)"));
    Outcome::new(pass, parts.join("; "))
}

// --------------------------------------------------------- end to end

fn criterion_10() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("backtest.ini");
    let dir = tempfile::tempdir().unwrap();
    let mut secs = Vec::new();
    for run in ["a", "b"] {
        let t = Instant::now();
        let o = Command::new(env!("CARGO_BIN_EXE_rqvol"))
            .arg("backtest")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(run))
            .output()
            .unwrap();
        secs.push(t.elapsed().as_secs_f64());
        if !o.status.success() {
            return Outcome::new(false, format!("backtest failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    let files = ["backtest.csv", "backtest.json", "forecast_paths.csv"];
    let identical = files.iter().all(|f| {
        std::fs::read(dir.path().join("a").join(f)).unwrap() == std::fs::read(dir.path().join("b").join(f)).unwrap()
    });
    let slowest = secs.iter().cloned().fold(0.0, f64::max);
    Outcome::new(
        identical && slowest < 600.0,
        format!("reports byte-identical across two runs: {identical}; slowest run {slowest:.1} s (< 600 s)"),
    )
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "QR vs LP oracle", criterion_1),
        (2, "quantile calibration", criterion_2),
        (3, "jump test size and power", criterion_3),
        (4, "MedRV bias and RV error rate", criterion_4),
        (5, "CAViaR SAV recovery", criterion_5),
        (6, "ARFIMA d recovery", criterion_6),
        (7, "DQ Monte Carlo p-values", criterion_7),
        (8, "DM antisymmetry and size", criterion_8),
        (9, "implied volatility", criterion_9),
        (10, "end-to-end determinism", criterion_10),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        println!(
            "criterion {id:>2} {:<30} {} — {} [{:.1} s]",
            name,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            t.elapsed().as_secs_f64()
        );
        for n in &outcome.notes {
            println!("             note: {n}");
        }
        if !outcome.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("acceptance: {} criteria failed: {failed:?}", failed.len());
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
