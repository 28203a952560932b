//! Synthetic inputs: intraday returns with long-memory stochastic variance
//! and occasional jumps, an implied-vol series, raw ticks and futures-option
//! quotes priced on a flat smile.

use chrono::{Datelike, Days, Duration, NaiveDate, NaiveDateTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rqvol::arfima_mixture::{simulate_arfima, ArfimaParams};
use rqvol::data_ingest::{daily_returns, IntradayGrid, SessionSpec, TickRecord, PERCENT};
use rqvol::implied_vol::{baw_price, OptionQuote, OptionType, ZeroCurve, DAYS_PER_YEAR};
use rqvol::realized_measures::{build_panel, MeasurePanel};

use crate::config::SimulateSettings;
use crate::error::{CliError, CliResult};

pub struct Simulated {
    pub panel: MeasurePanel,
    pub returns: Vec<(NaiveDate, f64)>,
    /// Annualized decimal implied volatility.
    pub implied_vol: Vec<(NaiveDate, f64)>,
    pub ticks: Vec<TickRecord>,
    pub quotes: Vec<OptionQuote>,
    pub curve: ZeroCurve,
}

pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Daily log-variance path, bar returns and the derived panel.
pub fn simulate(cfg: &SimulateSettings, session: &SessionSpec, significance: f64, seed: u64) -> CliResult<Simulated> {
    if cfg.days < 2 || cfg.bars < 3 {
        return Err(CliError::Config("simulate.days must be >= 2 and simulate.bars >= 3".into()));
    }
    let params = ArfimaParams {
        mu: cfg.mu,
        phi: cfg.phi,
        d: cfg.d,
        sigma_u2: cfg.sigma_u * cfg.sigma_u,
        ma_psi: 0.0,
    };
    let log_var = simulate_arfima(&params, cfg.days + 1, 200, seed)?;
    let days = business_days(cfg.start, cfg.days);
    let mut rng = stream(seed, 1);
    let mut grids = Vec::with_capacity(cfg.days);
    let mut level = PERCENT * 100f64.ln();
    for (t, day) in days.iter().enumerate() {
        let bar_sd = (log_var[t].exp() / cfg.bars as f64).sqrt();
        let jump_bar = (rng.random::<f64>() < cfg.jump_prob).then(|| rng.random_range(0..cfg.bars));
        let mut prices = Vec::with_capacity(cfg.bars + 1);
        prices.push(level);
        for b in 0..cfg.bars {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut r = bar_sd * z;
            if jump_bar == Some(b) {
                let j: f64 = StandardNormal.sample(&mut rng);
                r += cfg.jump_scale * bar_sd * j.signum() * (1.0 + j.abs());
            }
            level += r;
            prices.push(level);
        }
        grids.push(IntradayGrid::from_log_prices(*day, prices));
    }
    let (panel, _) = build_panel(&grids, significance)?;
    let returns = daily_returns(&grids)?;

    let mut rng = stream(seed, 2);
    let implied_vol = days
        .iter()
        .enumerate()
        .map(|(t, d)| {
            // option markets partly anticipate tomorrow's variance
            let v = 0.5 * (log_var[t].exp() + log_var[t + 1].exp());
            let z: f64 = StandardNormal.sample(&mut rng);
            (*d, (252.0 * v).sqrt() / PERCENT * (cfg.impvol_noise * z).exp())
        })
        .collect();

    let ticks = simulate_ticks(&days[..cfg.tick_days.min(days.len())], &log_var, session, seed);
    let (quotes, curve) = simulate_quotes(cfg, &days[..cfg.quote_days.min(days.len())], seed)?;
    Ok(Simulated {
        panel,
        returns,
        implied_vol,
        ticks,
        quotes,
        curve,
    })
}

/// Irregular ticks (5 to 60 seconds apart) from a few minutes before the
/// open to the close, following a Brownian log-price.
fn simulate_ticks(days: &[NaiveDate], log_var: &[f64], session: &SessionSpec, seed: u64) -> Vec<TickRecord> {
    let mut rng = stream(seed, 3);
    let mut out = Vec::new();
    let mut logp = 100f64.ln();
    let session_secs = (session.close_time - session.open_time).num_seconds() as f64;
    for (t, day) in days.iter().enumerate() {
        let var_per_sec = log_var[t].exp() / (PERCENT * PERCENT) / session_secs;
        let mut ts: NaiveDateTime = day.and_time(session.open_time) - Duration::minutes(5);
        let end = day.and_time(session.close_time);
        while ts <= end {
            out.push(TickRecord {
                timestamp: ts,
                price: (logp.exp() * 1e4).round() / 1e4,
            });
            let gap = rng.random_range(5..=60);
            let z: f64 = StandardNormal.sample(&mut rng);
            logp += (var_per_sec * gap as f64).sqrt() * z;
            ts += Duration::seconds(gap);
        }
    }
    out
}

/// Monthly expiries on the 17th.
fn next_expiries(date: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::new();
    let (mut y, mut m) = (date.year(), date.month());
    while out.len() < n {
        let e = NaiveDate::from_ymd_opt(y, m, 17).unwrap();
        if e > date {
            out.push(e);
        }
        m += 1;
        if m > 12 {
            m = 1;
            y += 1;
        }
    }
    out
}

fn simulate_quotes(cfg: &SimulateSettings, days: &[NaiveDate], seed: u64) -> CliResult<(Vec<OptionQuote>, ZeroCurve)> {
    let mut rng = stream(seed, 4);
    let mut curve = ZeroCurve::default();
    let mut quotes = Vec::new();
    let mut f = cfg.futures_price;
    for d in days {
        let pts = vec![(7.0, cfg.rate * 0.8), (30.0, cfg.rate), (90.0, cfg.rate * 1.1), (365.0, cfg.rate * 1.2)];
        curve.curves.insert(*d, pts);
        for expiry in next_expiries(*d, 2) {
            let days_to = (expiry - *d).num_days() as f64;
            let rate = curve.rate(*d, days_to).unwrap();
            let tau = days_to / DAYS_PER_YEAR;
            for i in -10..=10 {
                let x = (f * (1.0 + 0.025 * i as f64) * 2.0).round() / 2.0;
                for ty in [OptionType::Put, OptionType::Call] {
                    let price = baw_price(f, x, tau, cfg.quote_sigma, rate, ty)?;
                    quotes.push(OptionQuote {
                        quote_date: *d,
                        expiry,
                        underlying_future_expiry: expiry,
                        strike: x,
                        option_type: ty,
                        price: (price * 1e4).round() / 1e4,
                        futures_price: f,
                        rate: 0.0,
                    });
                }
            }
        }
        let z: f64 = StandardNormal.sample(&mut rng);
        f = (f * (cfg.quote_sigma / 252f64.sqrt() * z).exp() * 100.0).round() / 100.0;
    }
    Ok((quotes, curve))
}
