//! Line-oriented run configuration: `[section]` headers, `key = value`
//! lines, `#` or `;` comments. Relative paths resolve against the config
//! file's directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveTime};
use rqvol::caviar::{CaviarForm, ExogTiming};
use rqvol::data_ingest::SessionSpec;
use rqvol::implied_vol::{SingleMaturity, DEFAULT_GRID_POINTS};
use rqvol::model_builder::{Target, Term};

use crate::error::{CliError, CliResult};

type Sections = BTreeMap<String, BTreeMap<String, (usize, String)>>;

/// Raw `section -> key -> (line, value)` map.
pub fn parse_ini(text: &str) -> CliResult<Sections> {
    let mut out: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| CliError::Config(format!("line {lineno}: unterminated section header")))?;
            let name = name.trim().to_ascii_lowercase();
            out.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {lineno}: expected key = value")))?;
        let section = current
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("line {lineno}: key outside of any section")))?;
        let key = k.trim().to_ascii_lowercase();
        let entry = out.get_mut(section).unwrap();
        if entry.contains_key(&key) {
            return Err(CliError::Config(format!("line {lineno}: duplicate key '{section}.{key}'")));
        }
        entry.insert(key, (lineno, v.trim().to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub ticks: Option<PathBuf>,
    pub panel: Option<PathBuf>,
    pub returns: Option<PathBuf>,
    pub implied_vol: Option<PathBuf>,
    pub quotes: Option<PathBuf>,
    pub rates: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub spec: SessionSpec,
    pub significance: f64,
    /// Skip malformed tick rows instead of failing.
    pub lenient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelsConfig {
    pub specs: Vec<String>,
    pub spec_files: Vec<PathBuf>,
    pub alphas: Vec<f64>,
    pub horizons: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSettings {
    pub replications: usize,
    /// `None`: `ceil(n^(1/3))`.
    pub block_length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub target: Target,
    pub models: Vec<String>,
    pub benchmark: Option<String>,
    pub window: usize,
    pub n_oos: usize,
    pub dq_lags: usize,
    pub mc_reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaviarSettings {
    pub forms: Vec<CaviarForm>,
    pub exog: Vec<Term>,
    pub timing: ExogTiming,
    pub draws: usize,
    pub polished: usize,
    pub refit_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArfimaSettings {
    pub truncation: usize,
    pub estimate_ma: bool,
    pub n_draws: usize,
    pub refit_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpvolSettings {
    pub grid_points: usize,
    pub single_maturity: SingleMaturity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSettings {
    pub days: usize,
    pub start: NaiveDate,
    pub bars: usize,
    pub d: f64,
    pub phi: f64,
    /// Mean of log daily variance (percent squared).
    pub mu: f64,
    pub sigma_u: f64,
    pub jump_prob: f64,
    /// Jump standard deviation in multiples of the bar standard deviation.
    pub jump_scale: f64,
    pub impvol_noise: f64,
    pub tick_days: usize,
    pub quote_days: usize,
    pub quote_sigma: f64,
    pub futures_price: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub session: SessionConfig,
    pub models: ModelsConfig,
    pub bootstrap: BootstrapSettings,
    pub backtest: BacktestConfig,
    pub caviar: CaviarSettings,
    pub arfima: ArfimaSettings,
    pub impvol: ImpvolSettings,
    pub simulate: SimulateSettings,
    pub seed: u64,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("paths", &["ticks", "panel", "returns", "implied_vol", "quotes", "rates", "output"]),
    (
        "session",
        &["open", "close", "bar_seconds", "min_ticks", "excluded_dates", "significance", "lenient"],
    ),
    ("models", &["specs", "spec_files", "alphas", "horizons"]),
    ("bootstrap", &["replications", "block_length"]),
    ("backtest", &["target", "models", "benchmark", "window", "n_oos", "dq_lags", "mc_reps"]),
    ("caviar", &["forms", "exog", "timing", "draws", "polished", "refit_every"]),
    ("arfima", &["truncation", "estimate_ma", "n_draws", "refit_every"]),
    ("impvol", &["grid_points", "single_maturity"]),
    (
        "simulate",
        &[
            "days",
            "start",
            "bars",
            "d",
            "phi",
            "mu",
            "sigma_u",
            "jump_prob",
            "jump_scale",
            "impvol_noise",
            "tick_days",
            "quote_days",
            "quote_sigma",
            "futures_price",
            "rate",
        ],
    ),
    ("seeds", &["seed"]),
];

struct Reader<'a> {
    sections: &'a Sections,
    base: &'a Path,
}

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&(usize, String)> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn get<T>(&self, section: &str, key: &str, default: T, parse: impl Fn(&str) -> Option<T>) -> CliResult<T> {
        match self.raw(section, key) {
            None => Ok(default),
            Some((line, v)) => parse(v).ok_or_else(|| {
                CliError::Config(format!("line {line}: invalid value '{v}' for {section}.{key}"))
            }),
        }
    }

    fn num<T: std::str::FromStr>(&self, section: &str, key: &str, default: T) -> CliResult<T> {
        self.get(section, key, default, |s| s.parse().ok())
    }

    fn list<T>(&self, section: &str, key: &str, default: Vec<T>, parse: impl Fn(&str) -> Option<T>) -> CliResult<Vec<T>> {
        self.get(section, key, default, |s| {
            s.split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(&parse)
                .collect::<Option<Vec<T>>>()
        })
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw("paths", key).map(|(_, v)| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                self.base.join(p)
            }
        })
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Some(true),
        "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

fn parse_time(s: &str) -> Option<NaiveTime> {
    NaiveTime::parse_from_str(s, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .ok()
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()
}

pub fn parse_target(s: &str) -> Option<Target> {
    match s.to_ascii_lowercase().as_str() {
        "return" | "returns" => Some(Target::Return),
        "rv_sqrt" | "rv" => Some(Target::RvSqrt),
        _ => None,
    }
}

pub fn target_name(t: Target) -> &'static str {
    match t {
        Target::Return => "return",
        Target::RvSqrt => "rv_sqrt",
    }
}

fn parse_form(s: &str) -> Option<CaviarForm> {
    match s.to_ascii_lowercase().as_str() {
        "sav" => Some(CaviarForm::Sav),
        "as" => Some(CaviarForm::As),
        _ => None,
    }
}

pub fn form_name(f: CaviarForm) -> &'static str {
    match f {
        CaviarForm::Sav => "sav",
        CaviarForm::As => "as",
    }
}

fn timing_name(t: ExogTiming) -> &'static str {
    match t {
        ExogTiming::Current => "current",
        ExogTiming::Lagged => "lagged",
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> CliResult<Self> {
        let sections = parse_ini(text)?;
        for (name, keys) in &sections {
            let allowed = KNOWN
                .iter()
                .find(|(s, _)| s == name)
                .map(|(_, k)| *k)
                .ok_or_else(|| CliError::Config(format!("unknown section [{name}]")))?;
            for (key, (line, _)) in keys {
                if !allowed.contains(&key.as_str()) {
                    return Err(CliError::Config(format!("line {line}: unknown key '{name}.{key}'")));
                }
            }
        }
        let r = Reader {
            sections: &sections,
            base,
        };
        let ds = SessionSpec::default();
        let session = SessionConfig {
            spec: SessionSpec {
                open_time: r.get("session", "open", ds.open_time, parse_time)?,
                close_time: r.get("session", "close", ds.close_time, parse_time)?,
                bar_seconds: r.num("session", "bar_seconds", ds.bar_seconds)?,
                min_ticks: r.num("session", "min_ticks", ds.min_ticks)?,
                excluded_dates: r
                    .list("session", "excluded_dates", Vec::new(), parse_date)?
                    .into_iter()
                    .collect::<BTreeSet<_>>(),
            },
            significance: r.num("session", "significance", rqvol::realized_measures::DEFAULT_SIGNIFICANCE)?,
            lenient: r.get("session", "lenient", false, parse_bool)?,
        };
        let spec_files = r
            .list("models", "spec_files", Vec::new(), |s| Some(s.to_string()))?
            .into_iter()
            .map(|s| {
                let p = PathBuf::from(s);
                if p.is_absolute() {
                    p
                } else {
                    base.join(p)
                }
            })
            .collect();
        let models = ModelsConfig {
            specs: r.list("models", "specs", vec!["LQR1".into()], |s| Some(s.to_string()))?,
            spec_files,
            alphas: r.list("models", "alphas", vec![0.05, 0.1, 0.5, 0.9, 0.95], |s| s.parse().ok())?,
            horizons: r.list("models", "horizons", vec![1], |s| s.parse().ok())?,
        };
        let bootstrap = BootstrapSettings {
            replications: r.num("bootstrap", "replications", 999)?,
            block_length: r.get("bootstrap", "block_length", None, |s| {
                if s.eq_ignore_ascii_case("auto") {
                    Some(None)
                } else {
                    s.parse().ok().map(Some)
                }
            })?,
        };
        let backtest = BacktestConfig {
            target: r.get("backtest", "target", Target::Return, parse_target)?,
            models: r.list("backtest", "models", vec!["LQR1".into()], |s| Some(s.to_string()))?,
            benchmark: r.get("backtest", "benchmark", None, |s| Some(Some(s.to_string())))?,
            window: r.num("backtest", "window", 1000)?,
            n_oos: r.num("backtest", "n_oos", 500)?,
            dq_lags: r.num("backtest", "dq_lags", rqvol::evaluation::DEFAULT_DQ_LAGS)?,
            mc_reps: r.num("backtest", "mc_reps", rqvol::evaluation::DEFAULT_MC_REPS)?,
        };
        let caviar = CaviarSettings {
            forms: r.list("caviar", "forms", vec![CaviarForm::Sav], parse_form)?,
            exog: r.list("caviar", "exog", Vec::new(), |s| s.parse().ok())?,
            timing: r.get("caviar", "timing", ExogTiming::Current, |s| match s {
                "current" => Some(ExogTiming::Current),
                "lagged" => Some(ExogTiming::Lagged),
                _ => None,
            })?,
            draws: r.num("caviar", "draws", 10_000)?,
            polished: r.num("caviar", "polished", 10)?,
            refit_every: r.num("caviar", "refit_every", 1)?,
        };
        let arfima = ArfimaSettings {
            truncation: r.num("arfima", "truncation", rqvol::arfima_mixture::DEFAULT_TRUNCATION)?,
            estimate_ma: r.get("arfima", "estimate_ma", false, parse_bool)?,
            n_draws: r.num("arfima", "n_draws", 100_000)?,
            refit_every: r.num("arfima", "refit_every", 1)?,
        };
        let impvol = ImpvolSettings {
            grid_points: r.num("impvol", "grid_points", DEFAULT_GRID_POINTS)?,
            single_maturity: r.get("impvol", "single_maturity", SingleMaturity::Skip, |s| s.parse().ok())?,
        };
        let simulate = SimulateSettings {
            days: r.num("simulate", "days", 800)?,
            start: r.get("simulate", "start", NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), parse_date)?,
            bars: r.num("simulate", "bars", 78)?,
            d: r.num("simulate", "d", 0.4)?,
            phi: r.num("simulate", "phi", 0.2)?,
            mu: r.num("simulate", "mu", 0.0)?,
            sigma_u: r.num("simulate", "sigma_u", 0.3)?,
            jump_prob: r.num("simulate", "jump_prob", 0.03)?,
            jump_scale: r.num("simulate", "jump_scale", 8.0)?,
            impvol_noise: r.num("simulate", "impvol_noise", 0.05)?,
            tick_days: r.num("simulate", "tick_days", 0)?,
            quote_days: r.num("simulate", "quote_days", 0)?,
            quote_sigma: r.num("simulate", "quote_sigma", 0.3)?,
            futures_price: r.num("simulate", "futures_price", 60.0)?,
            rate: r.num("simulate", "rate", 0.02)?,
        };
        let paths = Paths {
            ticks: r.path("ticks"),
            panel: r.path("panel"),
            returns: r.path("returns"),
            implied_vol: r.path("implied_vol"),
            quotes: r.path("quotes"),
            rates: r.path("rates"),
            output: r.path("output").unwrap_or_else(|| base.join("output")),
        };
        let cfg = RunConfig {
            paths,
            session,
            models,
            bootstrap,
            backtest,
            caviar,
            arfima,
            impvol,
            simulate,
            seed: r.num("seeds", "seed", 0)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks value ranges; file existence is checked by each command for
    /// the inputs it reads.
    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        let a = &self.models.alphas;
        if a.is_empty() || a.iter().any(|x| !(*x > 0.0 && *x < 1.0)) || a.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("alphas must lie in (0, 1) and increase strictly, got {a:?}"));
        }
        if self.models.horizons.is_empty() || self.models.horizons.contains(&0) {
            return bad("horizons must be positive integers".into());
        }
        if self.models.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return bad("horizons must increase strictly".into());
        }
        if !(self.session.significance > 0.0 && self.session.significance < 0.5) {
            return bad("session.significance must lie in (0, 0.5)".into());
        }
        self.session.spec.validate()?;
        if self.backtest.window < 50 || self.backtest.n_oos == 0 {
            return bad("backtest.window must be >= 50 and n_oos >= 1".into());
        }
        if self.backtest.mc_reps < 99 {
            return bad("backtest.mc_reps must be >= 99".into());
        }
        if self.bootstrap.replications < 100 {
            return bad("bootstrap.replications must be >= 100".into());
        }
        if self.caviar.draws == 0 || self.caviar.polished == 0 || self.caviar.polished > self.caviar.draws {
            return bad("caviar.draws and caviar.polished must be positive with polished <= draws".into());
        }
        if self.caviar.forms.is_empty() {
            return bad("caviar.forms must list at least one of sav, as".into());
        }
        if self.arfima.truncation < 100 || self.arfima.n_draws < 100 {
            return bad("arfima.truncation and arfima.n_draws must be >= 100".into());
        }
        if self.impvol.grid_points < 3 || self.impvol.grid_points % 2 == 0 {
            return bad("impvol.grid_points must be odd and >= 3".into());
        }
        if let Some(b) = &self.backtest.benchmark {
            if !self.backtest.models.iter().any(|m| m.eq_ignore_ascii_case(b)) {
                return bad(format!("benchmark '{b}' is not among backtest.models"));
            }
        }
        Ok(())
    }

    /// Every setting with defaults resolved, in the input format.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let join = |v: &[String]| v.join(", ");
        let nums = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let _ = writeln!(s, "[paths]");
        for (k, v) in [
            ("ticks", path(&self.paths.ticks)),
            ("panel", path(&self.paths.panel)),
            ("returns", path(&self.paths.returns)),
            ("implied_vol", path(&self.paths.implied_vol)),
            ("quotes", path(&self.paths.quotes)),
            ("rates", path(&self.paths.rates)),
            ("output", Some(self.paths.output.display().to_string())),
        ] {
            if let Some(v) = v {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        let ss = &self.session.spec;
        let _ = writeln!(s, "\n[session]");
        let _ = writeln!(s, "open = {}", ss.open_time.format("%H:%M:%S"));
        let _ = writeln!(s, "close = {}", ss.close_time.format("%H:%M:%S"));
        let _ = writeln!(s, "bar_seconds = {}", ss.bar_seconds);
        let _ = writeln!(s, "min_ticks = {}", ss.min_ticks);
        let ex: Vec<String> = ss.excluded_dates.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(s, "excluded_dates = {}", join(&ex));
        let _ = writeln!(s, "significance = {}", self.session.significance);
        let _ = writeln!(s, "lenient = {}", self.session.lenient);

        let m = &self.models;
        let _ = writeln!(s, "\n[models]");
        let _ = writeln!(s, "specs = {}", join(&m.specs));
        let files: Vec<String> = m.spec_files.iter().map(|p| p.display().to_string()).collect();
        let _ = writeln!(s, "spec_files = {}", join(&files));
        let _ = writeln!(s, "alphas = {}", nums(&m.alphas));
        let hs: Vec<String> = m.horizons.iter().map(|h| h.to_string()).collect();
        let _ = writeln!(s, "horizons = {}", join(&hs));

        let _ = writeln!(s, "\n[bootstrap]");
        let _ = writeln!(s, "replications = {}", self.bootstrap.replications);
        let _ = writeln!(
            s,
            "block_length = {}",
            self.bootstrap.block_length.map_or("auto".to_string(), |b| b.to_string())
        );

        let b = &self.backtest;
        let _ = writeln!(s, "\n[backtest]");
        let _ = writeln!(s, "target = {}", target_name(b.target));
        let _ = writeln!(s, "models = {}", join(&b.models));
        if let Some(bm) = &b.benchmark {
            let _ = writeln!(s, "benchmark = {bm}");
        }
        let _ = writeln!(s, "window = {}", b.window);
        let _ = writeln!(s, "n_oos = {}", b.n_oos);
        let _ = writeln!(s, "dq_lags = {}", b.dq_lags);
        let _ = writeln!(s, "mc_reps = {}", b.mc_reps);

        let c = &self.caviar;
        let _ = writeln!(s, "\n[caviar]");
        let forms: Vec<String> = c.forms.iter().map(|f| form_name(*f).to_string()).collect();
        let _ = writeln!(s, "forms = {}", join(&forms));
        let exog: Vec<String> = c.exog.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(s, "exog = {}", join(&exog));
        let _ = writeln!(s, "timing = {}", timing_name(c.timing));
        let _ = writeln!(s, "draws = {}", c.draws);
        let _ = writeln!(s, "polished = {}", c.polished);
        let _ = writeln!(s, "refit_every = {}", c.refit_every);

        let a = &self.arfima;
        let _ = writeln!(s, "\n[arfima]");
        let _ = writeln!(s, "truncation = {}", a.truncation);
        let _ = writeln!(s, "estimate_ma = {}", a.estimate_ma);
        let _ = writeln!(s, "n_draws = {}", a.n_draws);
        let _ = writeln!(s, "refit_every = {}", a.refit_every);

        let _ = writeln!(s, "\n[impvol]");
        let _ = writeln!(s, "grid_points = {}", self.impvol.grid_points);
        let _ = writeln!(s, "single_maturity = {}", self.impvol.single_maturity);

        let sim = &self.simulate;
        let _ = writeln!(s, "\n[simulate]");
        let _ = writeln!(s, "days = {}", sim.days);
        let _ = writeln!(s, "start = {}", sim.start);
        let _ = writeln!(s, "bars = {}", sim.bars);
        for (k, v) in [
            ("d", sim.d),
            ("phi", sim.phi),
            ("mu", sim.mu),
            ("sigma_u", sim.sigma_u),
            ("jump_prob", sim.jump_prob),
            ("jump_scale", sim.jump_scale),
            ("impvol_noise", sim.impvol_noise),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "tick_days = {}", sim.tick_days);
        let _ = writeln!(s, "quote_days = {}", sim.quote_days);
        let _ = writeln!(s, "quote_sigma = {}", sim.quote_sigma);
        let _ = writeln!(s, "futures_price = {}", sim.futures_price);
        let _ = writeln!(s, "rate = {}", sim.rate);

        let _ = writeln!(s, "\n[seeds]");
        let _ = writeln!(s, "seed = {}", self.seed);
        s
    }
}
