//! Subcommand implementations. Each is a pure function of the config, the
//! input files and the seed; artifacts go to the output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;

use rqvol::arfima_mixture::{fit_arfima, ArfimaConfig};
use rqvol::caviar::{caviar_std_errors, fit_caviar, CaviarFit, CaviarSpec, MultiStartConfig};
use rqvol::data_ingest::{
    daily_returns, load_ticks, load_ticks_lenient, read_daily_returns, sample_last_tick_report, write_daily_returns,
    ColumnMap,
};
use rqvol::evaluation::{
    rolling_forecast_eval, ArfimaModel, ArfimaModelConfig, CaviarModel, CaviarModelConfig, DqSettings, EvalData,
    EvalReport, ForecastModel, LqrModel, WindowScheme,
};
use rqvol::implied_vol::{
    implied_vol_series, read_quotes, read_zero_curve, write_implied_vol_series, ImpliedVolPoint, ImpliedVolSettings,
};
use rqvol::model_builder::{build_dataset, builtin_spec, builtin_specs, ModelSpec, Target};
use rqvol::qr_core::{default_block_length, mbb_covariance, quantile_process, BootstrapConfig, FitReport};
use rqvol::realized_measures::{build_panel, read_panel, write_panel, MeasurePanel};

use crate::config::{form_name, target_name, RunConfig};
use crate::error::{CliError, CliResult};
use crate::simulate::simulate;
use crate::svg::{color, render_grid, Band, Chart, Series};

/// Collects the files a command writes.
pub struct Output {
    pub dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, content: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| CliError::io(&path, e))?;
        self.written.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        s.push('\n');
        self.write(name, s)
    }

    fn write_with<F>(&mut self, name: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> rqvol::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, buf)
    }
}

fn require_file<'a>(path: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| CliError::Config(format!("paths.{key} is required for this command")))?;
    if !p.is_file() {
        return Err(CliError::Config(format!("paths.{key}: file not found: {}", p.display())));
    }
    Ok(p)
}

fn open(path: &Path) -> CliResult<std::fs::File> {
    std::fs::File::open(path).map_err(|e| CliError::io(path, e))
}

/// Reads an implied-vol series: the `iv_30d` column when present, else the
/// second column.
pub fn read_implied_vol(path: &Path) -> CliResult<Vec<(NaiveDate, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| CliError::Data(e.to_string()))?.clone();
    let col = headers.iter().position(|h| h == "iv_30d").unwrap_or(1);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Data(e.to_string()))?;
        let bad = || CliError::Data(format!("{}: unparseable row {}", path.display(), i + 1));
        let d = rec
            .get(0)
            .and_then(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok())
            .ok_or_else(bad)?;
        let v: f64 = rec.get(col).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        out.push((d, v));
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no rows", path.display())));
    }
    Ok(out)
}

pub struct Inputs {
    pub panel: MeasurePanel,
    pub returns: Vec<(NaiveDate, f64)>,
}

fn measures_from_ticks(cfg: &RunConfig) -> CliResult<Inputs> {
    let path = require_file(&cfg.paths.ticks, "ticks")?;
    let schema = ColumnMap::default();
    let ticks = if cfg.session.lenient {
        load_ticks_lenient(path, &schema)?.0
    } else {
        load_ticks(path, &schema)?
    };
    let (grids, report) = sample_last_tick_report(&ticks, &cfg.session.spec)?;
    for (d, n) in &report.sparse {
        log::warn!("{d}: only {n} ticks in session, day dropped");
    }
    if grids.is_empty() {
        return Err(rqvol::Error::NoValidDays.into());
    }
    let (panel, _) = build_panel(&grids, cfg.session.significance)?;
    let returns = daily_returns(&grids)?;
    Ok(Inputs { panel, returns })
}

/// Panel and daily returns from precomputed CSVs, or from ticks; implied vol
/// is attached when configured.
pub fn load_inputs(cfg: &RunConfig) -> CliResult<Inputs> {
    let mut inputs = if cfg.paths.panel.is_some() {
        let panel = read_panel(open(require_file(&cfg.paths.panel, "panel")?)?)?;
        let returns = read_daily_returns(open(require_file(&cfg.paths.returns, "returns")?)?)?;
        Inputs { panel, returns }
    } else if cfg.paths.ticks.is_some() {
        measures_from_ticks(cfg)?
    } else {
        return Err(CliError::Config(
            "no input data: set paths.panel and paths.returns, or paths.ticks".into(),
        ));
    };
    if cfg.paths.implied_vol.is_some() {
        let series = read_implied_vol(require_file(&cfg.paths.implied_vol, "implied_vol")?)?;
        inputs.panel.attach_implied_vol(&series)?;
    }
    Ok(inputs)
}

/// Built-in specifications plus those read from `models.spec_files`.
pub fn available_specs(cfg: &RunConfig) -> CliResult<Vec<ModelSpec>> {
    let mut specs = builtin_specs();
    for f in &cfg.models.spec_files {
        if !f.is_file() {
            return Err(CliError::Config(format!("models.spec_files: file not found: {}", f.display())));
        }
        let text = std::fs::read_to_string(f).map_err(|e| CliError::io(f, e))?;
        let spec = ModelSpec::parse(&text)?;
        specs.retain(|s| !s.name.eq_ignore_ascii_case(&spec.name));
        specs.push(spec);
    }
    Ok(specs)
}

fn find_spec(specs: &[ModelSpec], name: &str) -> CliResult<ModelSpec> {
    if let Some(s) = specs.iter().find(|s| s.name.eq_ignore_ascii_case(name)) {
        return Ok(s.clone());
    }
    let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    // the builtin error lists the names; extend it with custom specs
    match builtin_spec(name) {
        Ok(s) => Ok(s),
        Err(_) => Err(CliError::Config(format!(
            "unknown model specification '{name}'; available: {}, CAVIAR-SAV, CAVIAR-AS, ARFIMA",
            names.join(", ")
        ))),
    }
}

fn lqr_specs(cfg: &RunConfig, target: Target) -> CliResult<Vec<ModelSpec>> {
    let all = available_specs(cfg)?;
    let mut out = Vec::new();
    for name in &cfg.models.specs {
        let s = find_spec(&all, name)?;
        if s.target == target {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(CliError::Config(format!(
            "models.specs lists no {} models",
            target_name(target)
        )));
    }
    Ok(out)
}

fn multistart(cfg: &RunConfig, seed: u64) -> MultiStartConfig {
    MultiStartConfig {
        draws: cfg.caviar.draws,
        polished: cfg.caviar.polished,
        seed,
        ..MultiStartConfig::default()
    }
}

/// Forecast models named in a list: specification names, `CAVIAR-SAV`,
/// `CAVIAR-AS` or `ARFIMA`.
pub fn forecast_models(cfg: &RunConfig, names: &[String], target: Target) -> CliResult<Vec<Box<dyn ForecastModel>>> {
    let specs = available_specs(cfg)?;
    let mut out: Vec<Box<dyn ForecastModel>> = Vec::new();
    for name in names {
        let upper = name.to_ascii_uppercase();
        let m: Box<dyn ForecastModel> = match upper.as_str() {
            "CAVIAR-SAV" | "CAVIAR-AS" => {
                if target != Target::Return {
                    return Err(CliError::Config(format!("{name} forecasts returns only")));
                }
                let form = if upper.ends_with("SAV") {
                    rqvol::caviar::CaviarForm::Sav
                } else {
                    rqvol::caviar::CaviarForm::As
                };
                Box::new(CaviarModel::new(CaviarModelConfig {
                    name: upper.clone(),
                    form,
                    exog: cfg.caviar.exog.clone(),
                    timing: cfg.caviar.timing,
                    multistart: multistart(cfg, cfg.seed),
                    refit_every: cfg.caviar.refit_every,
                }))
            }
            "ARFIMA" => Box::new(ArfimaModel::new(ArfimaModelConfig {
                name: upper.clone(),
                target,
                arfima: ArfimaConfig {
                    truncation: cfg.arfima.truncation,
                    estimate_ma: cfg.arfima.estimate_ma,
                },
                n_draws: cfg.arfima.n_draws,
                seed: cfg.seed,
                refit_every: cfg.arfima.refit_every,
            })),
            _ => {
                let spec = find_spec(&specs, name)?;
                if spec.target != target {
                    return Err(CliError::Config(format!(
                        "{} targets {} but the run targets {}",
                        spec.name,
                        target_name(spec.target),
                        target_name(target)
                    )));
                }
                Box::new(LqrModel::new(spec))
            }
        };
        if out.iter().any(|o| o.name() == m.name()) {
            return Err(CliError::Config(format!("model '{name}' listed twice")));
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err(CliError::Config("no models to run".into()));
    }
    Ok(out)
}

// ---------------------------------------------------------------- measures

pub fn cmd_measures(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let inputs = measures_from_ticks(cfg)?;
    out.write_with("measures.csv", |w| write_panel(w, &inputs.panel))?;
    out.write_with("returns.csv", |w| write_daily_returns(w, &inputs.returns))?;
    Ok(())
}

// --------------------------------------------------------------- LQR fits

#[derive(Debug, Serialize)]
pub struct FitRecord {
    pub horizon: usize,
    pub bootstrap_replications: usize,
    pub block_length: usize,
    pub bootstrap_failures: usize,
    #[serde(flatten)]
    pub report: FitReport,
}

pub fn cmd_fit_lqr(cfg: &RunConfig, target: Target, plot: bool, out: &mut Output) -> CliResult<()> {
    let specs = lqr_specs(cfg, target)?;
    let inputs = load_inputs(cfg)?;
    let alphas = &cfg.models.alphas;
    let mut records = Vec::new();
    let mut csv = String::from("model,horizon,alpha,term,coef,std_error,tstat\n");
    for spec in &specs {
        for &h in &cfg.models.horizons {
            let built = build_dataset(&inputs.panel, &inputs.returns, &spec.with_horizon(h))?;
            let data = &built.data;
            let process = quantile_process(data, alphas)?;
            let block = cfg.bootstrap.block_length.unwrap_or_else(|| default_block_length(data.n()));
            let mut group = Vec::new();
            for fit in &process.fits {
                let boot = mbb_covariance(
                    data,
                    fit.alpha,
                    &BootstrapConfig {
                        replications: cfg.bootstrap.replications,
                        block_length: block,
                        seed: cfg.seed,
                    },
                )?;
                if boot.near_zero_variance {
                    log::warn!("{} alpha {}: bootstrap variance numerically zero", spec.name, fit.alpha);
                }
                let mut report = FitReport::new(&spec.name, data, fit);
                report.std_errors = Some(boot.std_errors.clone());
                report.tstats = Some(boot.tstats.clone());
                report.crossing = Some(process.crossing.clone());
                for (j, label) in report.labels.iter().enumerate() {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{},{},{},{}",
                        spec.name, h, fit.alpha, label, report.beta[j], boot.std_errors[j], boot.tstats[j]
                    );
                }
                group.push(FitRecord {
                    horizon: h,
                    bootstrap_replications: boot.replications,
                    block_length: block,
                    bootstrap_failures: boot.failed,
                    report,
                });
            }
            if plot {
                out.write(
                    &format!("qp_{}_h{}.svg", spec.name, h),
                    quantile_process_svg(&spec.name, h, &group),
                )?;
            }
            records.extend(group);
        }
    }
    let stem = match target {
        Target::Return => "fit_returns",
        Target::RvSqrt => "fit_rv",
    };
    out.write_json(&format!("{stem}.json"), &records)?;
    out.write(&format!("{stem}.csv"), csv)?;
    Ok(())
}

/// Coefficients against alpha with pointwise 95% bootstrap bands.
fn quantile_process_svg(model: &str, h: usize, group: &[FitRecord]) -> String {
    let Some(first) = group.first() else {
        return render_grid(&[], 1);
    };
    let alphas: Vec<f64> = group.iter().map(|g| g.report.alpha).collect();
    let charts: Vec<Chart> = first
        .report
        .labels
        .iter()
        .enumerate()
        .map(|(j, label)| {
            let beta: Vec<f64> = group.iter().map(|g| g.report.beta[j]).collect();
            let se: Vec<f64> = group
                .iter()
                .map(|g| g.report.std_errors.as_ref().map_or(f64::NAN, |s| s[j]))
                .collect();
            Chart {
                title: format!("{model} (h = {h}): {label}"),
                x_label: "alpha".into(),
                y_label: "coefficient".into(),
                series: vec![
                    Series::line(label, alphas.clone(), beta.clone(), color(0)),
                    Series {
                        dashed: true,
                        ..Series::line("zero", vec![alphas[0], *alphas.last().unwrap()], vec![0.0, 0.0], "#555555")
                    },
                ],
                bands: vec![Band {
                    xs: alphas.clone(),
                    lo: beta.iter().zip(&se).map(|(b, s)| b - 1.96 * s).collect(),
                    hi: beta.iter().zip(&se).map(|(b, s)| b + 1.96 * s).collect(),
                    color: color(0).into(),
                }],
                x_ticks: None,
            }
        })
        .collect();
    render_grid(&charts, 2)
}

// ------------------------------------------------------------------ CAViaR

#[derive(Debug, Serialize)]
pub struct CaviarRecord {
    pub model: String,
    pub horizon: usize,
    pub note: Option<String>,
    pub fit: CaviarFit,
}

pub fn cmd_fit_caviar(cfg: &RunConfig, plot: bool, out: &mut Output) -> CliResult<()> {
    let inputs = load_inputs(cfg)?;
    let data = EvalData::new(&inputs.panel, &inputs.returns)?;
    let mut records = Vec::new();
    let mut csv = String::from("model,horizon,alpha,param,value,std_error,objective\n");
    for &form in &cfg.caviar.forms {
        let name = format!("CAVIAR-{}", form_name(form).to_ascii_uppercase());
        let model = CaviarModel::new(CaviarModelConfig {
            name: name.clone(),
            form,
            exog: cfg.caviar.exog.clone(),
            timing: cfg.caviar.timing,
            multistart: multistart(cfg, cfg.seed),
            refit_every: 1,
        });
        let (rows, labels) = model.exog_rows(&data)?;
        let first = rows.iter().position(|r| r.is_some()).unwrap_or(rows.len());
        let returns = &data.returns[first..];
        let exog: Vec<Vec<f64>> = rows[first..].iter().map(|r| r.clone().unwrap_or_default()).collect();
        for &h in &cfg.models.horizons {
            let mut paths = Vec::new();
            for &alpha in &cfg.models.alphas {
                let spec = CaviarSpec {
                    form,
                    exog_labels: labels.clone(),
                    alpha,
                    horizon: h,
                    timing: cfg.caviar.timing,
                };
                let mut fit = fit_caviar(&spec, returns, &exog, &multistart(cfg, cfg.seed))?;
                let note = match caviar_std_errors(&fit, returns, &exog, None) {
                    Ok(t) => {
                        fit.std_errors = Some(t);
                        None
                    }
                    Err(rqvol::Error::NoStableRegion) => Some("no stable bandwidth region".to_string()),
                    Err(e) => return Err(e.into()),
                };
                let se = fit.std_errors.as_ref().and_then(|t| t.selected_std_errors().map(|s| s.to_vec()));
                for (j, (label, v)) in spec.param_labels().iter().zip(fit.params.to_vec()).enumerate() {
                    let s = se.as_ref().map(|s| s[j].to_string()).unwrap_or_default();
                    let _ = writeln!(csv, "{name},{h},{alpha},{label},{v},{s},{}", fit.objective);
                }
                paths.push((alpha, fit.q_path.clone()));
                records.push(CaviarRecord {
                    model: name.clone(),
                    horizon: h,
                    note,
                    fit,
                });
            }
            if plot {
                let dates = &data.dates()[first..];
                let xs: Vec<f64> = (0..returns.len()).map(|i| i as f64).collect();
                let mut series = vec![Series {
                    points: true,
                    ..Series::line("return", xs.clone(), returns.to_vec(), "#999999")
                }];
                for (i, (a, q)) in paths.iter().enumerate() {
                    series.push(Series::line(&format!("q({a})"), xs[..q.len()].to_vec(), q.clone(), color(i)));
                }
                let chart = Chart {
                    title: format!("{name} in-sample quantiles (h = {h})"),
                    x_label: "date".into(),
                    y_label: "percent".into(),
                    series,
                    bands: vec![],
                    x_ticks: Some(date_ticks(dates)),
                };
                out.write(&format!("caviar_{}_h{h}.svg", form_name(form)), chart.render())?;
            }
        }
    }
    out.write_json("fit_caviar.json", &records)?;
    out.write("fit_caviar.csv", csv)?;
    Ok(())
}

fn date_ticks(dates: &[NaiveDate]) -> Vec<(f64, String)> {
    if dates.is_empty() {
        return Vec::new();
    }
    let step = (dates.len() / 5).max(1);
    (0..dates.len()).step_by(step).map(|i| (i as f64, dates[i].to_string())).collect()
}

// ------------------------------------------------------------------ ARFIMA

pub fn cmd_fit_arfima(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let inputs = load_inputs(cfg)?;
    let log_rv: Vec<f64> = inputs.panel.rows.iter().map(|r| r.rv.ln()).collect();
    let acfg = ArfimaConfig {
        truncation: cfg.arfima.truncation.min(log_rv.len()).max(100),
        estimate_ma: cfg.arfima.estimate_ma,
    };
    let fit = fit_arfima(&log_rv, &acfg)?;
    let p = &fit.params;
    let mut csv = String::from("param,value,tstat\n");
    let values = [("mu", p.mu), ("phi", p.phi), ("d", p.d), ("sigma_u2", p.sigma_u2), ("ma_psi", p.ma_psi)];
    for (name, v) in values {
        let t = fit
            .labels
            .iter()
            .position(|l| l == name)
            .map(|i| fit.tstats[i].to_string())
            .unwrap_or_default();
        let _ = writeln!(csv, "{name},{v},{t}");
    }
    let _ = writeln!(csv, "loglik,{},", fit.loglik);
    let _ = writeln!(csv, "aic,{},", fit.aic);
    out.write_json("fit_arfima.json", &fit)?;
    out.write("fit_arfima.csv", csv)?;
    Ok(())
}

// ---------------------------------------------------------------- forecast

#[derive(Debug, Serialize)]
pub struct ForecastRecord {
    pub model: String,
    pub origin: NaiveDate,
    pub horizon: usize,
    pub alpha: f64,
    pub quantile: f64,
}

/// Quantiles of the next-`h`-period target from the last available day.
pub fn cmd_forecast(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let inputs = load_inputs(cfg)?;
    let data = EvalData::new(&inputs.panel, &inputs.returns)?;
    let target = cfg.backtest.target;
    let models = forecast_models(cfg, &cfg.backtest.models, target)?;
    let origin = data.len() - 1;
    let window = cfg.backtest.window.min(data.len());
    let date = data.dates()[origin];
    let mut records = Vec::new();
    let mut csv = String::from("model,origin,horizon,alpha,quantile\n");
    for m in &models {
        for &h in &cfg.models.horizons {
            let q = m.forecast(&data, &[origin], window, h, &cfg.models.alphas)?;
            for (a, v) in cfg.models.alphas.iter().zip(&q[0]) {
                let _ = writeln!(csv, "{},{date},{h},{a},{v}", m.name());
                records.push(ForecastRecord {
                    model: m.name().to_string(),
                    origin: date,
                    horizon: h,
                    alpha: *a,
                    quantile: *v,
                });
            }
        }
    }
    out.write_json("forecast.json", &records)?;
    out.write("forecast.csv", csv)?;
    Ok(())
}

// ---------------------------------------------------------------- backtest

pub fn cmd_backtest(cfg: &RunConfig, plot: bool, out: &mut Output) -> CliResult<EvalReport> {
    let inputs = load_inputs(cfg)?;
    let data = EvalData::new(&inputs.panel, &inputs.returns)?;
    let target = cfg.backtest.target;
    let models = forecast_models(cfg, &cfg.backtest.models, target)?;
    let refs: Vec<&dyn ForecastModel> = models.iter().map(|m| m.as_ref()).collect();
    let benchmark = cfg
        .backtest
        .benchmark
        .as_ref()
        .and_then(|b| refs.iter().find(|m| m.name().eq_ignore_ascii_case(b)))
        .map(|m| m.name().to_string());
    let report = rolling_forecast_eval(
        &refs,
        &data,
        &WindowScheme {
            window: cfg.backtest.window,
            n_oos: cfg.backtest.n_oos,
        },
        &cfg.models.alphas,
        &cfg.models.horizons,
        benchmark.as_deref(),
        &DqSettings {
            lags: cfg.backtest.dq_lags,
            mc_reps: cfg.backtest.mc_reps,
            seed: cfg.seed,
        },
    )?;
    out.write("backtest.csv", report.to_csv())?;
    out.write_json("backtest.json", &report)?;
    let mut paths = String::from("model,horizon,date,observed,alpha,quantile\n");
    for p in &report.paths {
        for (a, qs) in p.alphas.iter().zip(&p.quantiles) {
            for i in 0..p.dates.len() {
                let _ = writeln!(paths, "{},{},{},{},{a},{}", p.model, p.horizon, p.dates[i], p.observed[i], qs[i]);
            }
        }
    }
    out.write("forecast_paths.csv", paths)?;
    if plot {
        out.write("coverage.svg", coverage_svg(&report))?;
        for p in &report.paths {
            let xs: Vec<f64> = (0..p.dates.len()).map(|i| i as f64).collect();
            let mut series = vec![Series {
                points: true,
                ..Series::line("observed", xs.clone(), p.observed.clone(), "#999999")
            }];
            for (i, (a, q)) in p.alphas.iter().zip(&p.quantiles).enumerate() {
                series.push(Series::line(&format!("q({a})"), xs.clone(), q.clone(), color(i)));
            }
            let chart = Chart {
                title: format!("{} out-of-sample quantiles (h = {})", p.model, p.horizon),
                x_label: "origin date".into(),
                y_label: target_name(target).into(),
                series,
                bands: vec![],
                x_ticks: Some(date_ticks(&p.dates)),
            };
            out.write(&format!("path_{}_h{}.svg", p.model, p.horizon), chart.render())?;
        }
    }
    Ok(report)
}

fn coverage_svg(report: &EvalReport) -> String {
    let mut horizons: Vec<usize> = report.cells.iter().map(|c| c.horizon).collect();
    horizons.sort_unstable();
    horizons.dedup();
    let mut models: Vec<&str> = Vec::new();
    for c in &report.cells {
        if !models.contains(&c.model.as_str()) {
            models.push(&c.model);
        }
    }
    let charts: Vec<Chart> = horizons
        .iter()
        .map(|&h| {
            let cells: Vec<_> = report.cells.iter().filter(|c| c.horizon == h).collect();
            let alphas: Vec<f64> = {
                let mut a: Vec<f64> = cells.iter().map(|c| c.alpha).collect();
                a.sort_by(f64::total_cmp);
                a.dedup();
                a
            };
            let mut series = vec![Series {
                dashed: true,
                ..Series::line("nominal", alphas.clone(), alphas.clone(), "#555555")
            }];
            for (i, m) in models.iter().enumerate() {
                let ys: Vec<f64> = alphas
                    .iter()
                    .map(|a| {
                        cells
                            .iter()
                            .find(|c| c.model == *m && c.alpha == *a)
                            .map_or(f64::NAN, |c| c.coverage)
                    })
                    .collect();
                series.push(Series::line(m, alphas.clone(), ys, color(i)));
            }
            Chart {
                title: format!("Empirical coverage (h = {h})"),
                x_label: "alpha".into(),
                y_label: "hit rate".into(),
                series,
                bands: vec![],
                x_ticks: None,
            }
        })
        .collect();
    render_grid(&charts, 1)
}

// ------------------------------------------------------------ implied vol

pub fn cmd_impvol(cfg: &RunConfig, plot: bool, out: &mut Output) -> CliResult<Vec<ImpliedVolPoint>> {
    let mut quotes = match read_quotes(open(require_file(&cfg.paths.quotes, "quotes")?)?) {
        Err(rqvol::Error::EmptyFile) => return Err(rqvol::Error::NoValidDays.into()),
        r => r?,
    };
    if cfg.paths.rates.is_some() {
        let curve = read_zero_curve(open(require_file(&cfg.paths.rates, "rates")?)?)?;
        curve.apply(&mut quotes);
    }
    let report = implied_vol_series(
        &quotes,
        &ImpliedVolSettings {
            grid_points: cfg.impvol.grid_points,
            single_maturity: cfg.impvol.single_maturity,
        },
    );
    if report.series.is_empty() {
        return Err(rqvol::Error::NoValidDays.into());
    }
    out.write_with("impvol.csv", |w| write_implied_vol_series(w, &report.series))?;
    let mut dropped = String::from("date,expiry,strike,cp_flag,price,reason\n");
    for d in &report.dropped {
        let q = &d.quote;
        let flag = match q.option_type {
            rqvol::implied_vol::OptionType::Call => "C",
            rqvol::implied_vol::OptionType::Put => "P",
        };
        let _ = writeln!(dropped, "{},{},{},{flag},{},{}", q.quote_date, q.expiry, q.strike, q.price, d.reason);
    }
    out.write("impvol_dropped.csv", dropped)?;
    let mut skipped = String::from("date,reason\n");
    for (d, r) in &report.skipped_days {
        let _ = writeln!(skipped, "{d},\"{}\"", r.replace('"', "'"));
    }
    out.write("impvol_skipped.csv", skipped)?;
    if plot {
        let dates: Vec<NaiveDate> = report.series.iter().map(|p| p.date).collect();
        let xs: Vec<f64> = (0..dates.len()).map(|i| i as f64).collect();
        let chart = Chart {
            title: "30-day model-free implied volatility".into(),
            x_label: "date".into(),
            y_label: "annualized volatility".into(),
            series: vec![Series::line(
                "iv_30d",
                xs,
                report.series.iter().map(|p| p.iv_30d).collect(),
                color(0),
            )],
            bands: vec![],
            x_ticks: Some(date_ticks(&dates)),
        };
        out.write("impvol.svg", chart.render())?;
    }
    Ok(report.series)
}

// ---------------------------------------------------------------- simulate

pub fn cmd_simulate(cfg: &RunConfig, out: &mut Output) -> CliResult<()> {
    let sim = simulate(&cfg.simulate, &cfg.session.spec, cfg.session.significance, cfg.seed)?;
    out.write_with("measures.csv", |w| write_panel(w, &sim.panel))?;
    out.write_with("returns.csv", |w| write_daily_returns(w, &sim.returns))?;
    let iv: Vec<ImpliedVolPoint> = sim
        .implied_vol
        .iter()
        .map(|(d, v)| ImpliedVolPoint {
            date: *d,
            imv_30d: v * v,
            iv_30d: *v,
            single_maturity: false,
        })
        .collect();
    out.write_with("impvol.csv", |w| write_implied_vol_series(w, &iv))?;
    if !sim.ticks.is_empty() {
        let mut s = String::from("timestamp,price\n");
        for t in &sim.ticks {
            let _ = writeln!(s, "{},{:.4}", t.timestamp.format("%Y-%m-%d %H:%M:%S"), t.price);
        }
        out.write("ticks.csv", s)?;
    }
    if !sim.quotes.is_empty() {
        let mut s = String::from("date,expiry,future_expiry,strike,cp_flag,settle_price,futures_price\n");
        for q in &sim.quotes {
            let flag = match q.option_type {
                rqvol::implied_vol::OptionType::Call => "C",
                rqvol::implied_vol::OptionType::Put => "P",
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{flag},{:.4},{}",
                q.quote_date, q.expiry, q.underlying_future_expiry, q.strike, q.price, q.futures_price
            );
        }
        out.write("quotes.csv", s)?;
        let mut r = String::from("date,days,rate\n");
        for (d, pts) in &sim.curve.curves {
            for (days, rate) in pts {
                let _ = writeln!(r, "{d},{days},{rate}");
            }
        }
        out.write("rates.csv", r)?;
    }
    Ok(())
}
