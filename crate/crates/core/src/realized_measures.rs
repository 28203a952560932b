//! Daily realized measures: realized variance, MedRV, semivariances, the
//! MedRV ratio jump test and the shrinkage split of RV into continuous (IV)
//! and jump (JV) parts.

use std::f64::consts::PI;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::data_ingest::IntradayGrid;
use crate::error::{Error, Result};
use crate::numerics::norm_quantile;

/// Asymptotic variance constant of `RV - MedRV` relative to integrated quarticity.
pub const JUMP_TEST_THETA: f64 = 0.96;

/// Default one-sided significance level of the daily jump test.
pub const DEFAULT_SIGNIFICANCE: f64 = 0.001;

fn medrv_constant() -> f64 {
    PI / (6.0 - 4.0 * 3f64.sqrt() + PI)
}

fn medrq_constant() -> f64 {
    3.0 * PI / (9.0 * PI + 72.0 - 52.0 * 3f64.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyMeasures {
    pub day: NaiveDate,
    pub rv: f64,
    pub medrv: f64,
    pub rs_minus: f64,
    pub rs_plus: f64,
    pub medrq: f64,
    pub z_jump: f64,
    pub jump_flag: bool,
    pub iv: f64,
    pub jv: f64,
    pub m: usize,
}

pub fn realized_variance(returns: &[f64]) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::EmptyDay);
    }
    Ok(returns.iter().map(|r| r * r).sum())
}

/// `(rs_minus, rs_plus)`; zero returns contribute to neither.
pub fn realized_semivariances(returns: &[f64]) -> Result<(f64, f64)> {
    if returns.is_empty() {
        return Err(Error::EmptyDay);
    }
    Ok(returns.iter().fold((0.0, 0.0), |(neg, pos), &r| {
        if r < 0.0 {
            (neg + r * r, pos)
        } else if r > 0.0 {
            (neg, pos + r * r)
        } else {
            (neg, pos)
        }
    }))
}

fn median3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).min(a.min(b).max(c))
}

fn median_power_sum(returns: &[f64], power: i32) -> Result<f64> {
    if returns.len() < 3 {
        return Err(Error::TooFewObservations {
            needed: 3,
            got: returns.len(),
        });
    }
    Ok(returns
        .windows(3)
        .map(|w| median3(w[0].abs(), w[1].abs(), w[2].abs()).powi(power))
        .sum())
}

/// Median realized variance over adjacent triples.
pub fn med_rv(returns: &[f64]) -> Result<f64> {
    let s = median_power_sum(returns, 2)?;
    let m = returns.len() as f64;
    Ok(medrv_constant() * (m / (m - 2.0)) * s)
}

/// Median realized quarticity, the jump-robust integrated quarticity estimate.
pub fn med_rq(returns: &[f64]) -> Result<f64> {
    let s = median_power_sum(returns, 4)?;
    let m = returns.len() as f64;
    Ok(medrq_constant() * m * (m / (m - 2.0)) * s)
}

/// Ratio jump statistic; large positive values indicate jumps.
pub fn jump_test_z(rv: f64, medrv: f64, medrq: f64, m: usize) -> Result<f64> {
    if !(rv > 0.0) {
        return Err(Error::DegenerateDay(None));
    }
    if !(medrv > 0.0) {
        return Err(Error::InvalidArgument("medrv must be positive".into()));
    }
    let ratio = (rv - medrv) / rv;
    let scale = (JUMP_TEST_THETA / m as f64) * (medrq / (medrv * medrv)).max(1.0);
    Ok(ratio / scale.sqrt())
}

/// One-sided critical value for the jump test.
pub fn jump_critical_value(significance: f64) -> f64 {
    norm_quantile(1.0 - significance)
}

/// Shrinkage split into `(iv, jv, jump_flag)`: on flagged days IV = MedRV and
/// JV = RV - MedRV (clamped at zero), otherwise IV = RV and JV = 0.
pub fn decompose_iv_jv(measures: &DailyMeasures, significance: f64) -> (f64, f64, bool) {
    let critical = jump_critical_value(significance);
    if measures.z_jump > critical {
        if measures.medrv > measures.rv {
            log::warn!(
                "{}: jump flagged but MedRV exceeds RV; clamping JV at zero",
                measures.day
            );
            (measures.rv, 0.0, true)
        } else {
            (measures.medrv, measures.rv - measures.medrv, true)
        }
    } else {
        (measures.rv, 0.0, false)
    }
}

/// All measures for one day of intraday returns.
pub fn compute_day(day: NaiveDate, returns: &[f64], significance: f64) -> Result<DailyMeasures> {
    let rv = realized_variance(returns)?;
    let medrv = med_rv(returns)?;
    let medrq = med_rq(returns)?;
    let (rs_minus, rs_plus) = realized_semivariances(returns)?;
    if rv == 0.0 {
        return Err(Error::DegenerateDay(Some(day)));
    }
    // a day whose medians are all zero carries no usable continuous signal
    let z_jump = if medrv > 0.0 {
        jump_test_z(rv, medrv, medrq, returns.len())?
    } else {
        f64::INFINITY
    };
    let mut out = DailyMeasures {
        day,
        rv,
        medrv,
        rs_minus,
        rs_plus,
        medrq,
        z_jump,
        jump_flag: false,
        iv: rv,
        jv: 0.0,
        m: returns.len(),
    };
    let (iv, jv, flag) = decompose_iv_jv(&out, significance);
    out.iv = iv;
    out.jv = jv;
    out.jump_flag = flag;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MeasurePanel {
    pub rows: Vec<DailyMeasures>,
    /// Implied volatility aligned with `rows`; each entry carries the date the
    /// value was observed, which must not be later than the row date.
    pub implied_vol: Option<Vec<(NaiveDate, f64)>>,
}

impl MeasurePanel {
    pub fn new(mut rows: Vec<DailyMeasures>) -> Result<Self> {
        rows.sort_by_key(|r| r.day);
        if rows.windows(2).any(|w| w[0].day == w[1].day) {
            return Err(Error::InvalidArgument("duplicate dates in panel".into()));
        }
        Ok(Self {
            rows,
            implied_vol: None,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.rows.iter().map(|r| r.day).collect()
    }

    /// As-of join: each row receives the latest implied-vol value dated on or
    /// before it. Rows preceding the first observation are dropped.
    pub fn attach_implied_vol(&mut self, series: &[(NaiveDate, f64)]) -> Result<()> {
        let mut series = series.to_vec();
        series.sort_by_key(|(d, _)| *d);
        let mut idx = 0;
        let mut latest: Option<(NaiveDate, f64)> = None;
        let mut rows = Vec::with_capacity(self.rows.len());
        let mut aligned = Vec::with_capacity(self.rows.len());
        for row in self.rows.drain(..) {
            while idx < series.len() && series[idx].0 <= row.day {
                latest = Some(series[idx]);
                idx += 1;
            }
            if let Some(v) = latest {
                rows.push(row);
                aligned.push(v);
            }
        }
        if rows.is_empty() {
            return Err(Error::NoValidDays);
        }
        self.rows = rows;
        self.implied_vol = Some(aligned);
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct PanelReport {
    pub degenerate: Vec<NaiveDate>,
}

/// Computes measures for every grid day. Degenerate (zero-RV) days are
/// excluded and reported.
pub fn build_panel(grids: &[IntradayGrid], significance: f64) -> Result<(MeasurePanel, PanelReport)> {
    let mut rows = Vec::with_capacity(grids.len());
    let mut report = PanelReport::default();
    for g in grids {
        match compute_day(g.day, &g.log_returns, significance) {
            Ok(m) => rows.push(m),
            Err(Error::DegenerateDay(_)) => {
                log::warn!("{}: zero realized variance, excluded", g.day);
                report.degenerate.push(g.day);
            }
            Err(e) => return Err(e),
        }
    }
    if rows.is_empty() {
        return Err(Error::NoValidDays);
    }
    Ok((MeasurePanel::new(rows)?, report))
}

const PANEL_HEADER: [&str; 11] = [
    "date", "rv", "medrv", "rs_minus", "rs_plus", "iv", "jv", "z_jump", "jump_flag", "medrq", "m",
];

pub fn write_panel<W: Write>(writer: W, panel: &MeasurePanel) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PANEL_HEADER)?;
    for r in &panel.rows {
        w.write_record([
            r.day.to_string(),
            format!("{:.12e}", r.rv),
            format!("{:.12e}", r.medrv),
            format!("{:.12e}", r.rs_minus),
            format!("{:.12e}", r.rs_plus),
            format!("{:.12e}", r.iv),
            format!("{:.12e}", r.jv),
            format!("{:.8}", r.z_jump),
            (r.jump_flag as u8).to_string(),
            format!("{:.12e}", r.medrq),
            r.m.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_panel<R: Read>(reader: R) -> Result<MeasurePanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let required: Vec<usize> = PANEL_HEADER[..9]
        .iter()
        .map(|n| {
            col(n).ok_or_else(|| Error::UnparseableRow {
                row: 0,
                reason: format!("missing column '{n}'"),
            })
        })
        .collect::<Result<_>>()?;
    let medrq_col = col("medrq");
    let m_col = col("m");
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::UnparseableRow {
            row: i + 1,
            reason: format!("bad {what}"),
        };
        let num = |c: usize, what: &str| -> Result<f64> {
            rec.get(c).and_then(|s| s.parse().ok()).ok_or_else(|| bad(what))
        };
        let day = rec
            .get(required[0])
            .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
            .ok_or_else(|| bad("date"))?;
        let flag = match rec.get(required[8]).unwrap_or("") {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => return Err(bad("jump_flag")),
        };
        rows.push(DailyMeasures {
            day,
            rv: num(required[1], "rv")?,
            medrv: num(required[2], "medrv")?,
            rs_minus: num(required[3], "rs_minus")?,
            rs_plus: num(required[4], "rs_plus")?,
            iv: num(required[5], "iv")?,
            jv: num(required[6], "jv")?,
            z_jump: num(required[7], "z_jump")?,
            jump_flag: flag,
            medrq: medrq_col.map(|c| num(c, "medrq")).transpose()?.unwrap_or(f64::NAN),
            m: m_col
                .map(|c| num(c, "m").map(|v| v as usize))
                .transpose()?
                .unwrap_or(0),
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile);
    }
    MeasurePanel::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rv_examples() {
        assert!((realized_variance(&[0.01, -0.02, 0.005]).unwrap() - 0.000525).abs() < 1e-18);
        assert_eq!(realized_variance(&[0.0; 5]).unwrap(), 0.0);
        assert_eq!(realized_variance(&[3.0]).unwrap(), 9.0);
        assert!(matches!(realized_variance(&[]), Err(Error::EmptyDay)));
    }

    #[test]
    fn semivariance_examples() {
        let (neg, pos) = realized_semivariances(&[0.01, -0.02]).unwrap();
        assert!((neg - 0.0004).abs() < 1e-18 && (pos - 0.0001).abs() < 1e-18);
        let r = [0.1, 0.2, 0.3];
        assert_eq!(
            realized_semivariances(&r).unwrap(),
            (0.0, realized_variance(&r).unwrap())
        );
        assert_eq!(realized_semivariances(&[0.0, 0.0]).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn medrv_hand_value() {
        // constant 1.4192..., times M/(M-2) = 2, times two squared medians of 1e-4
        let v = med_rv(&[0.01; 4]).unwrap();
        let expected = medrv_constant() * 2.0 * 2e-4;
        assert!((v - expected).abs() < 1e-18);
        assert!((v - 5.677_43e-4).abs() < 1e-9);
        assert_eq!(med_rv(&[0.0; 10]).unwrap(), 0.0);
        assert!(matches!(med_rv(&[1.0, 2.0]), Err(Error::TooFewObservations { .. })));
    }

    #[test]
    fn medrv_ignores_isolated_spike() {
        let mut r = vec![0.01; 78];
        r[40] = 5.0;
        let rv = realized_variance(&r).unwrap();
        let medrv = med_rv(&r).unwrap();
        assert!(medrv < 0.01 * rv);
    }

    #[test]
    fn medrq_homogeneity() {
        let r: Vec<f64> = (0..50).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.01).collect();
        let c: f64 = 3.0;
        let scaled: Vec<f64> = r.iter().map(|v| v * c).collect();
        let a = med_rq(&r).unwrap();
        let b = med_rq(&scaled).unwrap();
        assert!((b / a - c.powi(4)).abs() < 1e-10);
        assert_eq!(med_rq(&[0.0; 5]).unwrap(), 0.0);
    }

    #[test]
    fn jump_z_zero_when_equal() {
        assert_eq!(jump_test_z(2.0, 2.0, 1.0, 78).unwrap(), 0.0);
        assert!(matches!(jump_test_z(0.0, 1.0, 1.0, 78), Err(Error::DegenerateDay(_))));
    }

    fn measures(z: f64, rv: f64, medrv: f64) -> DailyMeasures {
        DailyMeasures {
            day: NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            rv,
            medrv,
            rs_minus: rv / 2.0,
            rs_plus: rv / 2.0,
            medrq: 1.0,
            z_jump: z,
            jump_flag: false,
            iv: rv,
            jv: 0.0,
            m: 78,
        }
    }

    #[test]
    fn shrinkage_rule() {
        assert_eq!(decompose_iv_jv(&measures(0.5, 2.0, 1.5), 0.001), (2.0, 0.0, false));
        assert_eq!(decompose_iv_jv(&measures(10.0, 2.0, 1.5), 0.001), (1.5, 0.5, true));
        assert_eq!(decompose_iv_jv(&measures(10.0, 1.5, 2.0), 0.001), (1.5, 0.0, true));
    }

    #[test]
    fn zero_day_is_degenerate() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap();
        assert!(matches!(compute_day(d, &[0.0; 10], 0.001), Err(Error::DegenerateDay(Some(_)))));
    }

    #[test]
    fn panel_csv_round_trip() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap();
        let r: Vec<f64> = (0..78).map(|i| ((i * 13 % 7) as f64 - 3.0) * 0.05).collect();
        let panel = MeasurePanel::new(vec![compute_day(d, &r, 0.001).unwrap()]).unwrap();
        let mut buf = Vec::new();
        write_panel(&mut buf, &panel).unwrap();
        let back = read_panel(buf.as_slice()).unwrap();
        assert_eq!(back.rows[0].day, d);
        assert!((back.rows[0].rv - panel.rows[0].rv).abs() < 1e-10 * panel.rows[0].rv);
        assert_eq!(back.rows[0].m, 78);
    }

    #[test]
    fn implied_vol_as_of_join() {
        let days: Vec<NaiveDate> = (2..6).map(|d| NaiveDate::from_ymd_opt(2020, 1, d).unwrap()).collect();
        let r: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) * 0.1).collect();
        let rows = days.iter().map(|&d| compute_day(d, &r, 0.001).unwrap()).collect();
        let mut panel = MeasurePanel::new(rows).unwrap();
        panel
            .attach_implied_vol(&[(days[1], 20.0), (days[3], 22.0)])
            .unwrap();
        assert_eq!(panel.len(), 3);
        let iv = panel.implied_vol.as_ref().unwrap();
        assert_eq!(iv[1], (days[1], 20.0));
        assert_eq!(iv[2], (days[3], 22.0));
    }
}
