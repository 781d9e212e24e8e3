//! The replication run: ingestion, descriptives, Hausman test, quantile
//! coefficient tables and adjustment speeds, written as an ordered bundle
//! with a checksummed manifest.
//!
//! Every stage writes a fixed set of files, so running a subset of stages
//! produces exactly the matching slice of a full run. All randomness comes
//! from the configured master seed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::adjustment::{
    estimate_speed, estimate_speed_by_regime, target_design, EstimationForm, Leverage, RegimeTiming, TargetModelSpec,
};
use crate::effects::{
    bootstrap_fixed_effects, fit_fixed_effects, fit_quantile_fixed_effects, fit_random_effects, hausman_test, FeMode,
    DEFAULT_MAX_GROUPS,
};
use crate::error::{Error, Result};
use crate::panel_data::{
    correlation_matrix, derive_variables, ingest_panel, read_macro_csv, read_panel_csv, winsorize, yearly_means,
    Panel, Regime, RegimeRule, TaxRates, ValidationReport, Variable,
};
use crate::quantile::{BootstrapOptions, TABLE_THETAS};
use crate::report::{self, QuantileColumn, QuantileTable, SpeedTable};
use crate::seed::{derive_seed, streams};
use crate::synthgen::{generate_panel, Delta, ErrorDist, SynthConfig, SyntheticPanel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Simulate,
    Ingest,
    Describe,
    Correlate,
    Hausman,
    Qreg,
    Speed,
}

impl Stage {
    pub const ANALYSIS: [Stage; 6] = [
        Stage::Ingest,
        Stage::Describe,
        Stage::Correlate,
        Stage::Hausman,
        Stage::Qreg,
        Stage::Speed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Ingest => "ingest",
            Stage::Describe => "describe",
            Stage::Correlate => "correlate",
            Stage::Hausman => "hausman",
            Stage::Qreg => "qreg",
            Stage::Speed => "speed",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeverageChoice {
    Book,
    Market,
    Both,
}

impl LeverageChoice {
    /// Book before market, the order of the output files.
    pub fn kinds(self) -> Vec<Leverage> {
        match self {
            LeverageChoice::Book => vec![Leverage::Book],
            LeverageChoice::Market => vec![Leverage::Market],
            LeverageChoice::Both => vec![Leverage::Book, Leverage::Market],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Delimited,
    Both,
}

impl OutputFormat {
    fn text(self) -> bool {
        matches!(self, OutputFormat::Text | OutputFormat::Both)
    }

    fn delimited(self) -> bool {
        matches!(self, OutputFormat::Delimited | OutputFormat::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    /// read `input`, `macro` and optionally `tax`
    File,
    /// generate a panel from the `synth_*` settings and the master seed
    Synthetic,
}

/// Resolved run settings. Build with [`RunConfig::default`], then apply a
/// key-value file and flag overrides through [`RunConfig::set`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub input: Option<PathBuf>,
    pub macro_path: Option<PathBuf>,
    pub tax: Option<PathBuf>,
    /// used when no tax table is given
    pub tax_rate: f64,
    pub thetas: Vec<f64>,
    pub leverage: LeverageChoice,
    pub regimes: bool,
    pub regime_threshold: f64,
    pub regime_timing: RegimeTiming,
    /// 0 disables bootstrap standard errors
    pub bootstrap: usize,
    pub cluster: bool,
    pub seed: u64,
    pub alpha: f64,
    pub winsorize: Option<f64>,
    pub fe_mode: FeMode,
    pub form: EstimationForm,
    pub out: PathBuf,
    pub format: OutputFormat,
    pub synth_firms: usize,
    pub synth_years: usize,
    pub synth_delta: f64,
    /// recession-regime speed; equal to `synth_delta` unless set
    pub synth_delta_recession: Option<f64>,
    pub synth_sigma: f64,
    pub synth_attrition: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: DataSource::File,
            input: None,
            macro_path: None,
            tax: None,
            tax_rate: 0.35,
            thetas: TABLE_THETAS.to_vec(),
            leverage: LeverageChoice::Both,
            regimes: true,
            regime_threshold: 0.0,
            regime_timing: RegimeTiming::AdjustmentYear,
            bootstrap: 200,
            cluster: true,
            seed: 0,
            alpha: 0.05,
            winsorize: None,
            fe_mode: FeMode::default(),
            form: EstimationForm::OneStep,
            out: PathBuf::from("qrpanel-out"),
            format: OutputFormat::Both,
            synth_firms: 500,
            synth_years: 20,
            synth_delta: 0.6,
            synth_delta_recession: None,
            synth_sigma: 0.005,
            synth_attrition: 0.0,
        }
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty() && v != "none").then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or("none".into(), |p| p.display().to_string())
}

impl RunConfig {
    /// Applies one setting. Keys match the file format and the long flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let bad = || Error::InvalidInput(format!("bad value `{v}` for `{key}`"));
        let num = || v.parse::<f64>().map_err(|_| bad());
        let count = || v.parse::<usize>().map_err(|_| bad());
        match key.trim().replace('-', "_").as_str() {
            "source" => {
                self.source = match v {
                    "file" => DataSource::File,
                    "synthetic" => DataSource::Synthetic,
                    _ => return Err(bad()),
                }
            }
            "input" => self.input = opt_path(v),
            "macro" => self.macro_path = opt_path(v),
            "tax" => self.tax = opt_path(v),
            "tax_rate" => self.tax_rate = num()?,
            "theta" => {
                self.thetas = v
                    .split(',')
                    .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
                    .collect::<Result<_>>()?
            }
            "leverage" => {
                self.leverage = match v.to_ascii_lowercase().as_str() {
                    "book" => LeverageChoice::Book,
                    "market" => LeverageChoice::Market,
                    "both" => LeverageChoice::Both,
                    _ => return Err(bad()),
                }
            }
            "regimes" => self.regimes = parse_bool(v).ok_or_else(bad)?,
            "regime_threshold" => self.regime_threshold = num()?,
            "regime_timing" => {
                self.regime_timing = match v {
                    "year" => RegimeTiming::AdjustmentYear,
                    "lag" => RegimeTiming::LagYear,
                    _ => return Err(bad()),
                }
            }
            "bootstrap" => self.bootstrap = count()?,
            "cluster" => self.cluster = parse_bool(v).ok_or_else(bad)?,
            "seed" => self.seed = v.parse().map_err(|_| bad())?,
            "alpha" => self.alpha = num()?,
            "winsorize" => {
                self.winsorize = match v {
                    "off" | "none" => None,
                    _ => Some(num()?),
                }
            }
            "fe_mode" => {
                self.fe_mode = match v.split_once(':') {
                    None if v == "indicators" => FeMode::Indicators {
                        max_groups: DEFAULT_MAX_GROUPS,
                    },
                    Some(("indicators", cap)) => FeMode::Indicators {
                        max_groups: cap.parse().map_err(|_| bad())?,
                    },
                    Some(("penalized", l)) => FeMode::Penalized {
                        lambda: l.parse().map_err(|_| bad())?,
                    },
                    _ => return Err(bad()),
                }
            }
            "form" => {
                self.form = match v {
                    "one-step" | "one_step" => EstimationForm::OneStep,
                    "two-step" | "two_step" => EstimationForm::TwoStep,
                    _ => return Err(bad()),
                }
            }
            "out" => self.out = PathBuf::from(v),
            "format" => {
                self.format = match v {
                    "text" => OutputFormat::Text,
                    "delimited" => OutputFormat::Delimited,
                    "both" => OutputFormat::Both,
                    _ => return Err(bad()),
                }
            }
            "synth_firms" => self.synth_firms = count()?,
            "synth_years" => self.synth_years = count()?,
            "synth_delta" => self.synth_delta = num()?,
            "synth_delta_recession" => {
                self.synth_delta_recession = match v {
                    "none" => None,
                    _ => Some(num()?),
                }
            }
            "synth_sigma" => self.synth_sigma = num()?,
            "synth_attrition" => self.synth_attrition = num()?,
            other => return Err(Error::InvalidInput(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines. `#` starts a comment.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                location: format!("config line {}", n + 1),
                message: "expected `key = value`".into(),
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() {
            return Err(Error::InvalidInput("no quantiles requested".into()));
        }
        self.thetas.iter().try_for_each(|&t| crate::error::check_theta(t))?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.bootstrap == 1 {
            return Err(Error::InvalidInput("bootstrap needs 0 (off) or at least 2 replications".into()));
        }
        Ok(())
    }

    /// Every setting except `out`, one `key = value` per line. The output
    /// directory is left out so that bundles written to different places
    /// stay byte-identical.
    pub fn render(&self) -> String {
        let fe_mode = match self.fe_mode {
            FeMode::Indicators { max_groups } => format!("indicators:{max_groups}"),
            FeMode::Penalized { lambda } => format!("penalized:{lambda}"),
        };
        let lines = [
            ("source", match self.source {
                DataSource::File => "file".to_string(),
                DataSource::Synthetic => "synthetic".to_string(),
            }),
            ("input", show_path(&self.input)),
            ("macro", show_path(&self.macro_path)),
            ("tax", show_path(&self.tax)),
            ("tax_rate", self.tax_rate.to_string()),
            ("theta", self.thetas.iter().map(f64::to_string).collect::<Vec<_>>().join(",")),
            ("leverage", format!("{:?}", self.leverage).to_lowercase()),
            ("regimes", self.regimes.to_string()),
            ("regime_threshold", self.regime_threshold.to_string()),
            ("regime_timing", match self.regime_timing {
                RegimeTiming::AdjustmentYear => "year".to_string(),
                RegimeTiming::LagYear => "lag".to_string(),
            }),
            ("bootstrap", self.bootstrap.to_string()),
            ("cluster", self.cluster.to_string()),
            ("seed", self.seed.to_string()),
            ("alpha", self.alpha.to_string()),
            ("winsorize", self.winsorize.map_or("off".into(), |w| w.to_string())),
            ("fe_mode", fe_mode),
            ("form", match self.form {
                EstimationForm::OneStep => "one-step".to_string(),
                EstimationForm::TwoStep => "two-step".to_string(),
            }),
            ("format", format!("{:?}", self.format).to_lowercase()),
            ("synth_firms", self.synth_firms.to_string()),
            ("synth_years", self.synth_years.to_string()),
            ("synth_delta", self.synth_delta.to_string()),
            ("synth_delta_recession", self.synth_delta_recession.map_or("none".into(), |d| d.to_string())),
            ("synth_sigma", self.synth_sigma.to_string()),
            ("synth_attrition", self.synth_attrition.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn synth_config(&self) -> SynthConfig {
        let delta = match self.synth_delta_recession {
            Some(r) => Delta::ByRegime {
                growth: self.synth_delta,
                recession: r,
            },
            None => Delta::Scalar(self.synth_delta),
        };
        SynthConfig {
            n_firms: self.synth_firms,
            t_max: self.synth_years,
            attrition: self.synth_attrition,
            delta,
            error: ErrorDist::Normal { sigma: self.synth_sigma },
            regime_rule: RegimeRule {
                threshold: self.regime_threshold,
            },
            tax_rate: self.tax_rate,
            seed: self.seed,
            ..SynthConfig::default()
        }
    }

    fn model_spec(&self, leverage: Leverage) -> TargetModelSpec {
        let mut spec = TargetModelSpec::new(leverage);
        spec.thetas = self.thetas.clone();
        spec.regime_timing = self.regime_timing;
        spec.form = self.form;
        spec.fe_mode = self.fe_mode;
        spec
    }
}

/// A stage failed; files written before it stay in place and the manifest
/// marks the bundle incomplete.
#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    /// bundle files in write order, manifest last
    pub files: Vec<String>,
}

pub const MANIFEST: &str = "manifest.txt";

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Bundle {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Bundle {
    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        self.files.push((name.to_string(), sha256_hex(content.as_bytes())));
        Ok(())
    }

    fn table(&mut self, format: OutputFormat, stem: &str, text: impl FnOnce() -> String, csv: impl FnOnce() -> Result<String>) -> Result<()> {
        if format.text() {
            self.write(&format!("{stem}.txt"), &text())?;
        }
        if format.delimited() {
            self.write(&format!("{stem}.csv"), &csv()?)?;
        }
        Ok(())
    }
}

struct Inputs {
    panel: Panel,
    validation: ValidationReport,
    hashes: Vec<(String, String)>,
}

fn read_hashed(path: &Path, label: &str, hashes: &mut Vec<(String, String)>) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    hashes.push((label.to_string(), sha256_hex(&bytes)));
    Ok(bytes)
}

fn load_inputs(cfg: &RunConfig, synthetic: Option<&SyntheticPanel>) -> Result<Inputs> {
    let rule = RegimeRule {
        threshold: cfg.regime_threshold,
    };
    let mut hashes = Vec::new();
    let (panel, validation, macro_series, tax) = match synthetic {
        Some(s) => {
            let (panel, report) = ingest_panel(s.records.clone());
            (panel, report, s.macro_series.with_rule(rule), TaxRates::Constant(cfg.tax_rate))
        }
        None => {
            let input = cfg
                .input
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("no input panel configured".into()))?;
            let macro_path = cfg
                .macro_path
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("no macro series configured".into()))?;
            let (panel, report) = read_panel_csv(read_hashed(input, "panel", &mut hashes)?.as_slice())?;
            let macro_series = read_macro_csv(read_hashed(macro_path, "macro", &mut hashes)?.as_slice(), rule)?;
            let tax = match &cfg.tax {
                Some(p) => TaxRates::read_csv(read_hashed(p, "tax", &mut hashes)?.as_slice())?,
                None => {
                    log::warn!("no tax table given; using a constant rate of {}", cfg.tax_rate);
                    TaxRates::Constant(cfg.tax_rate)
                }
            };
            (panel, report, macro_series, tax)
        }
    };
    if validation.accepted == 0 {
        return Err(Error::InsufficientData("input contains no usable firm-years".into()));
    }
    let mut panel = derive_variables(&panel, &macro_series, &tax)?;
    if let Some(pct) = cfg.winsorize {
        panel = winsorize(&panel, &Variable::FIRM, pct)?;
    }
    Ok(Inputs {
        panel,
        validation,
        hashes,
    })
}

fn hausman_stage(cfg: &RunConfig, panel: &Panel, bundle: &mut Bundle) -> Result<()> {
    let mut text = String::new();
    let mut csv = String::new();
    for (i, lev) in cfg.leverage.kinds().into_iter().enumerate() {
        let mut spec = cfg.model_spec(lev);
        spec.macro_vars.clear();
        let (design, groups) = target_design(panel, &spec)?;
        let fe = fit_fixed_effects(&design, &groups)?;
        let re = fit_random_effects(&design, &groups)?;
        let h = hausman_test(&fe, &re, cfg.alpha)?;
        let equation = lev.variable().label();
        if i > 0 {
            text.push('\n');
        }
        text.push_str(&report::hausman_text(equation, &h));
        if re.sigma_u_clamped {
            text.push_str("Note: negative between-group variance estimate set to zero.\n");
        }
        let part = report::hausman_delimited(equation, &h)?;
        csv.push_str(if i == 0 { &part } else { part.split_once('\n').map_or("", |(_, rest)| rest) });
    }
    bundle.table(cfg.format, "04_hausman", || text, || Ok(csv))
}

/// Seed of the bootstrap behind the coefficient table column `(lev, j)`.
fn bootstrap_seed(master: u64, lev: Leverage, j: usize) -> u64 {
    let kind = match lev {
        Leverage::Book => 0,
        Leverage::Market => 1,
    };
    derive_seed(master, streams::QREG_BOOTSTRAP, kind * 1000 + j as u64)
}

fn quantile_table(cfg: &RunConfig, panel: &Panel, lev: Leverage) -> Result<QuantileTable> {
    let spec = cfg.model_spec(lev);
    let (design, groups) = target_design(panel, &spec)?;
    let mut columns = Vec::with_capacity(cfg.thetas.len());
    for (j, &theta) in cfg.thetas.iter().enumerate() {
        let mut fit = fit_quantile_fixed_effects(&design, &groups, theta, cfg.fe_mode, &spec.solver)?;
        let mut mean_effect_se = None;
        if cfg.bootstrap >= 2 {
            let boot = BootstrapOptions {
                replications: cfg.bootstrap,
                seed: bootstrap_seed(cfg.seed, lev, j),
                ..Default::default()
            };
            let res = bootstrap_fixed_effects(&design, &groups, theta, cfg.fe_mode, &boot, cfg.cluster, &spec.solver)?;
            let mut se = res.std_errors;
            mean_effect_se = se.pop();
            fit.std_errors = Some(se);
        }
        columns.push(Some(QuantileColumn { fit, mean_effect_se }));
    }
    Ok(QuantileTable {
        title: format!("{} LEVERAGE", lev.label()),
        thetas: cfg.thetas.clone(),
        columns,
    })
}

fn qreg_stage(cfg: &RunConfig, panel: &Panel, bundle: &mut Bundle) -> Result<()> {
    for lev in cfg.leverage.kinds() {
        let stem = match lev {
            Leverage::Book => "05_quantile_book",
            Leverage::Market => "06_quantile_market",
        };
        let table = quantile_table(cfg, panel, lev)?;
        bundle.table(cfg.format, stem, || table.text(), || table.delimited())?;
    }
    Ok(())
}

fn speed_stage(cfg: &RunConfig, panel: &Panel, bundle: &mut Bundle) -> Result<()> {
    let mut overall = Vec::new();
    for lev in cfg.leverage.kinds() {
        overall.push((lev, estimate_speed(panel, &cfg.model_spec(lev))?));
    }
    // market rows come first
    overall.reverse();
    let table = SpeedTable::new("SPEED OF ADJUSTMENT", &cfg.thetas, overall);
    bundle.table(cfg.format, "07_speed", || table.text(), || table.delimited())?;
    if !cfg.regimes {
        return Ok(());
    }

    let mut per_regime: Vec<(Regime, Vec<(Leverage, Vec<crate::adjustment::AdjustmentResult>)>)> =
        vec![(Regime::Growth, Vec::new()), (Regime::Recession, Vec::new())];
    let mut notes = Vec::new();
    for lev in cfg.leverage.kinds().into_iter().rev() {
        let mut spec = cfg.model_spec(lev);
        spec.regime_split = Some(RegimeRule {
            threshold: cfg.regime_threshold,
        });
        let res = estimate_speed_by_regime(panel, &spec)?;
        if notes.is_empty() {
            for (regime, years) in &res.split.counts {
                notes.push(format!("{regime} years: {years}"));
            }
            notes.extend(res.split.warnings.iter().cloned());
        }
        for (regime, why) in &res.skipped {
            notes.push(format!("{} {regime}: not estimated ({why})", lev.label()));
        }
        for (regime, rows) in per_regime.iter_mut() {
            rows.push((lev, res.results.get(regime).cloned().unwrap_or_default()));
        }
    }
    let tables: Vec<SpeedTable> = per_regime
        .into_iter()
        .map(|(regime, rows)| {
            SpeedTable::new(format!("SPEED OF ADJUSTMENT, {} REGIME", regime.label().to_uppercase()), &cfg.thetas, rows)
        })
        .collect();
    let text = || {
        let mut s = format!(
            "Regime rule: recession iff GDP growth < {}\n{}\n",
            cfg.regime_threshold,
            notes.iter().map(|n| format!("{n}\n")).collect::<String>()
        );
        s.push_str(&tables.iter().map(SpeedTable::text).collect::<Vec<_>>().join("\n"));
        s
    };
    let csv = || -> Result<String> {
        let mut s = String::new();
        for (i, t) in tables.iter().enumerate() {
            let part = t.delimited()?;
            s.push_str(if i == 0 { &part } else { part.split_once('\n').map_or("", |(_, rest)| rest) });
        }
        Ok(s)
    };
    bundle.table(cfg.format, "08_speed_regimes", text, csv)
}

fn run_inner(cfg: &RunConfig, stages: &[Stage], bundle: &mut Bundle, hashes: &mut Vec<(String, String)>) -> Result<(), StageError> {
    let at = |stage: Stage| move |source: Error| StageError { stage, source };
    let wants = |s: Stage| stages.contains(&s);

    let synthetic = if cfg.source == DataSource::Synthetic || wants(Stage::Simulate) {
        let s = generate_panel(&cfg.synth_config()).map_err(at(Stage::Simulate))?;
        if wants(Stage::Simulate) {
            let dir = bundle.dir.join("data");
            s.write(&dir).map_err(at(Stage::Simulate))?;
            for name in ["panel.csv", "macro.csv", "truth.txt"] {
                let p = dir.join(name);
                let bytes = fs::read(&p).map_err(|e| at(Stage::Simulate)(Error::io(&p, e)))?;
                bundle.files.push((format!("data/{name}"), sha256_hex(&bytes)));
            }
        }
        Some(s)
    } else {
        None
    };
    if !stages.iter().any(|s| Stage::ANALYSIS.contains(s)) {
        return Ok(());
    }

    let inputs = load_inputs(cfg, synthetic.as_ref().filter(|_| cfg.source == DataSource::Synthetic))
        .map_err(at(Stage::Ingest))?;
    hashes.extend(inputs.hashes.iter().cloned());
    let panel = &inputs.panel;
    let format = cfg.format;

    if wants(Stage::Ingest) {
        bundle
            .write("01_validation.txt", &inputs.validation.render())
            .map_err(at(Stage::Ingest))?;
    }
    if wants(Stage::Describe) {
        let means = yearly_means(panel, &Variable::ALL);
        bundle
            .table(format, "02_yearly_means", || report::means_text(&means), || report::means_delimited(&means))
            .map_err(at(Stage::Describe))?;
    }
    if wants(Stage::Correlate) {
        let corr = correlation_matrix(panel, &Variable::ALL);
        bundle
            .table(format, "03_correlations", || report::correlation_text(&corr), || {
                report::correlation_delimited(&corr)
            })
            .map_err(at(Stage::Correlate))?;
    }
    if wants(Stage::Hausman) {
        hausman_stage(cfg, panel, bundle).map_err(at(Stage::Hausman))?;
    }
    if wants(Stage::Qreg) {
        qreg_stage(cfg, panel, bundle).map_err(at(Stage::Qreg))?;
    }
    if wants(Stage::Speed) {
        speed_stage(cfg, panel, bundle).map_err(at(Stage::Speed))?;
    }
    Ok(())
}

fn manifest(cfg: &RunConfig, stages: &[Stage], bundle: &Bundle, hashes: &[(String, String)], failure: Option<&StageError>) -> String {
    let mut m = String::from("qrpanel replication bundle\n");
    m.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    match failure {
        None => m.push_str("status = complete\n"),
        Some(e) => {
            m.push_str("status = incomplete\n");
            m.push_str(&format!("failed_stage = {}\n", e.stage));
            m.push_str(&format!("error = {}\n", e.source.to_string().replace('\n', " ")));
        }
    }
    let names: Vec<&str> = stages.iter().map(|s| s.name()).collect();
    m.push_str(&format!("stages = {}\n", names.join(",")));
    m.push_str(&format!("seed = {}\n", cfg.seed));
    if cfg.bootstrap >= 2 && stages.contains(&Stage::Qreg) {
        for lev in cfg.leverage.kinds() {
            for (j, theta) in cfg.thetas.iter().enumerate() {
                m.push_str(&format!(
                    "bootstrap_seed.{}.{theta} = {}\n",
                    lev.label().to_lowercase(),
                    bootstrap_seed(cfg.seed, lev, j)
                ));
            }
        }
    }
    m.push_str(&format!("config_sha256 = {}\n", sha256_hex(cfg.render().as_bytes())));
    for (label, h) in hashes {
        m.push_str(&format!("input_sha256.{label} = {h}\n"));
    }
    m.push_str("files:\n");
    for (name, h) in &bundle.files {
        m.push_str(&format!("{h}  {name}\n"));
    }
    m
}

/// Runs `stages` (in pipeline order, whatever order they are given in) and
/// writes their outputs plus `00_config.txt` and the manifest into
/// `cfg.out`. On failure the manifest records the failed stage and the
/// error is returned.
pub fn run_stages(cfg: &RunConfig, stages: &[Stage]) -> Result<RunSummary, StageError> {
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    let setup = |source: Error| StageError {
        stage: stages.first().copied().unwrap_or(Stage::Ingest),
        source,
    };
    cfg.validate().map_err(setup)?;
    fs::create_dir_all(&cfg.out).map_err(|e| setup(Error::io(&cfg.out, e)))?;
    let mut bundle = Bundle {
        dir: cfg.out.clone(),
        files: Vec::new(),
    };
    bundle.write("00_config.txt", &cfg.render()).map_err(setup)?;
    let mut hashes = Vec::new();
    let outcome = run_inner(cfg, &stages, &mut bundle, &mut hashes);
    let text = manifest(cfg, &stages, &bundle, &hashes, outcome.as_ref().err());
    let path = cfg.out.join(MANIFEST);
    fs::write(&path, text).map_err(|e| setup(Error::io(&path, e)))?;
    outcome?;
    let mut files: Vec<String> = bundle.files.into_iter().map(|(n, _)| n).collect();
    files.push(MANIFEST.into());
    Ok(RunSummary {
        out_dir: cfg.out.clone(),
        files,
    })
}

/// The full bundle: simulation when the source is synthetic, then every
/// analysis stage.
pub fn run_replicate(cfg: &RunConfig) -> Result<RunSummary, StageError> {
    let mut stages = Stage::ANALYSIS.to_vec();
    if cfg.source == DataSource::Synthetic {
        stages.insert(0, Stage::Simulate);
    }
    run_stages(cfg, &stages)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_render() {
        let mut c = RunConfig::default();
        c.apply_str("theta = 0.25, 0.5\nleverage = market # comment\nbootstrap=50\nfe_mode = penalized:0.5\nwinsorize = 0.01\n")
            .unwrap();
        assert_eq!(c.thetas, vec![0.25, 0.5]);
        assert_eq!(c.leverage, LeverageChoice::Market);
        assert_eq!(c.fe_mode, FeMode::Penalized { lambda: 0.5 });
        let mut back = RunConfig::default();
        back.apply_str(&c.render()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let mut c = RunConfig::default();
        assert!(c.set("colour", "red").is_err());
        assert!(c.set("leverage", "both-ways").is_err());
        assert!(c.apply_str("no equals sign").is_err());
        c.set("theta", "0.5,1.5").unwrap();
        assert!(c.validate().is_err());
    }
}
