use std::hint::black_box;

use chrono::NaiveDate;
use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use rqvol::caviar::{fit_caviar, simulate_sav, CaviarForm, CaviarSpec, MultiStartConfig};
use rqvol::evaluation::{dq_test, hits};
use rqvol::implied_vol::{baw_price, invert_baw_iv, OptionQuote, OptionType};
use rqvol::qr_core::{fit_lqr, Dataset};
use rqvol::realized_measures::{compute_day, DEFAULT_SIGNIFICANCE};

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn bench_fit_lqr(c: &mut Criterion) {
    let (n, p) = (2500, 4);
    let z = normals(n * p, 1);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = vec![1.0];
            r.extend(z[i * p..i * p + p - 1].iter().map(|v| v.abs()));
            r
        })
        .collect();
    let y: Vec<f64> = (0..n).map(|i| rows[i].iter().sum::<f64>() * z[i * p + p - 1]).collect();
    let data = Dataset::from_rows(y, &rows, (0..p).map(|j| format!("x{j}")).collect()).unwrap();
    c.bench_function("fit_lqr n=2500 p=4 alpha=0.05", |b| b.iter(|| fit_lqr(black_box(&data), 0.05).unwrap()));
}

fn bench_compute_day(c: &mut Criterion) {
    let day = NaiveDate::from_ymd_opt(2015, 3, 2).unwrap();
    let r: Vec<f64> = normals(78, 2).iter().map(|v| v * 0.1).collect();
    c.bench_function("compute_day 78 bars", |b| {
        b.iter(|| compute_day(day, black_box(&r), DEFAULT_SIGNIFICANCE).unwrap())
    });
}

fn bench_caviar(c: &mut Criterion) {
    let r = simulate_sav(0.05, 0.85, 0.1, 1000, 200, 3);
    let spec = CaviarSpec::new(CaviarForm::Sav, 0.05);
    let cfg = MultiStartConfig {
        draws: 500,
        polished: 2,
        ..Default::default()
    };
    let mut group = c.benchmark_group("caviar");
    group.sample_size(10);
    group.bench_function("fit SAV n=1000", |b| b.iter(|| fit_caviar(&spec, black_box(&r), &[], &cfg).unwrap()));
    group.finish();
}

fn bench_dq(c: &mut Criterion) {
    let n = 1000;
    let obs = normals(n, 4);
    let q = vec![-1.645; n];
    let series = hits(&obs, &q, 0.05, 1).unwrap();
    let mut group = c.benchmark_group("dq");
    group.sample_size(10);
    group.bench_function("dq_test n=1000 lags=4 mc=99", |b| {
        b.iter(|| dq_test(black_box(&series), 4, 99, 7).unwrap())
    });
    group.finish();
}

fn bench_implied_vol(c: &mut Criterion) {
    c.bench_function("baw_price", |b| {
        b.iter(|| baw_price(black_box(60.0), 55.0, 0.25, 0.3, 0.02, OptionType::Put).unwrap())
    });
    let day = NaiveDate::from_ymd_opt(2015, 3, 2).unwrap();
    let expiry = NaiveDate::from_ymd_opt(2015, 4, 1).unwrap();
    let tau = (expiry - day).num_days() as f64 / 365.0;
    let quote = OptionQuote {
        quote_date: day,
        expiry,
        underlying_future_expiry: expiry,
        strike: 55.0,
        option_type: OptionType::Put,
        price: baw_price(60.0, 55.0, tau, 0.3, 0.02, OptionType::Put).unwrap(),
        futures_price: 60.0,
        rate: 0.02,
    };
    c.bench_function("invert_baw_iv", |b| b.iter(|| invert_baw_iv(black_box(&quote)).unwrap()));
}

criterion_group!(benches, bench_fit_lqr, bench_compute_day, bench_caviar, bench_dq, bench_implied_vol);
criterion_main!(benches);
