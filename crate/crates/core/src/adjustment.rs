//! Speed of adjustment toward target leverage, per quantile and per
//! macroeconomic regime.
//!
//! The one-step form regresses `LEV_t` on the determinants, the macro
//! variables and `LEV_{t-1}` with firm effects; the coefficient `λ̂` on the
//! lag gives the speed `δ̂ = 1 - λ̂`.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::effects::{fit_quantile_fixed_effects, FeMode};
use crate::error::{check_theta, Error, Result};
use crate::groups::Groups;
use crate::panel_data::{MacroSeries, Panel, Regime, RegimeRule, Variable};
use crate::quantile::{fit_quantile, DesignMatrix, QuantileFit, SolverOptions, INTERCEPT, TABLE_THETAS};

pub const LAG_COLUMN: &str = "lev_lag";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Leverage {
    Book,
    Market,
}

impl Leverage {
    pub fn variable(self) -> Variable {
        match self {
            Leverage::Book => Variable::Levb,
            Leverage::Market => Variable::Levm,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Leverage::Book => "BOOK",
            Leverage::Market => "MARKET",
        }
    }

    pub fn parse(s: &str) -> Option<Leverage> {
        match s.trim().to_ascii_lowercase().as_str() {
            "book" | "levb" => Some(Leverage::Book),
            "market" | "levm" => Some(Leverage::Market),
            _ => None,
        }
    }
}

impl fmt::Display for Leverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimationForm {
    /// `LEV_t` on `X`, `M`, `LEV_{t-1}` with firm effects
    #[default]
    OneStep,
    /// fit the target `LEV*` first, then `ΔLEV` on `LEV* - LEV_{t-1}`
    TwoStep,
}

/// Which year's macro state decides a row's regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegimeTiming {
    #[default]
    AdjustmentYear,
    LagYear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetModelSpec {
    pub leverage: Leverage,
    pub determinants: Vec<Variable>,
    pub macro_vars: Vec<Variable>,
    pub thetas: Vec<f64>,
    pub regime_split: Option<RegimeRule>,
    pub regime_timing: RegimeTiming,
    pub form: EstimationForm,
    pub fe_mode: FeMode,
    pub solver: SolverOptions,
}

impl TargetModelSpec {
    pub fn new(leverage: Leverage) -> Self {
        Self {
            leverage,
            determinants: Variable::DETERMINANTS.to_vec(),
            macro_vars: Variable::MACRO.to_vec(),
            thetas: TABLE_THETAS.to_vec(),
            regime_split: None,
            regime_timing: RegimeTiming::default(),
            form: EstimationForm::default(),
            fe_mode: FeMode::default(),
            solver: SolverOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.determinants.is_empty() {
            return Err(Error::InvalidInput("target model needs at least one determinant".into()));
        }
        if let Some(v) = self.determinants.iter().find(|v| v.is_macro()) {
            return Err(Error::InvalidInput(format!("`{}` is a macro variable, not a determinant", v.name())));
        }
        if let Some(v) = self.macro_vars.iter().find(|v| !v.is_macro()) {
            return Err(Error::InvalidInput(format!("`{}` is not a macro variable", v.name())));
        }
        if self.thetas.is_empty() {
            return Err(Error::InvalidInput("no quantiles requested".into()));
        }
        self.thetas.iter().try_for_each(|&t| check_theta(t))
    }

    /// Number of common coefficients in the one-step design.
    pub fn k(&self) -> usize {
        self.determinants.len() + self.macro_vars.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentResult {
    pub theta: f64,
    pub leverage: Leverage,
    pub lag_coefficient: f64,
    pub speed: f64,
    pub pseudo_r2: f64,
    pub regime: Option<Regime>,
    pub n_used: usize,
    /// `λ̂` outside `[0, 1]`
    pub out_of_range: bool,
    pub form: EstimationForm,
    /// the fit that produced `λ̂` (the second stage for the two-step form)
    pub fit: QuantileFit,
}

impl AdjustmentResult {
    fn new(theta: f64, leverage: Leverage, lag: f64, fit: QuantileFit, n_used: usize, form: EstimationForm) -> Self {
        if !(0.0..=1.0).contains(&lag) {
            log::warn!("lag coefficient {lag:.4} at θ = {theta} lies outside [0, 1]");
        }
        Self {
            theta,
            leverage,
            lag_coefficient: lag,
            speed: 1.0 - lag,
            pseudo_r2: fit.pseudo_r2,
            regime: None,
            n_used,
            out_of_range: !(0.0..=1.0).contains(&lag),
            form,
            fit,
        }
    }
}

/// Derived rows that have a same-firm leverage value for the preceding
/// fiscal year, with that lagged value.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedRows {
    pub leverage: Leverage,
    /// indices into `panel.observations()`
    pub rows: Vec<usize>,
    pub lag: Vec<f64>,
}

pub fn lag_leverage(panel: &Panel, leverage: Leverage) -> LaggedRows {
    let obs = panel.observations();
    let var = leverage.variable();
    let mut rows = Vec::new();
    let mut lag = Vec::new();
    for i in 1..obs.len() {
        let (prev, cur) = (&obs[i - 1], &obs[i]);
        if prev.firm_id != cur.firm_id || prev.fiscal_year + 1 != cur.fiscal_year {
            continue;
        }
        if let (Some(l), Some(_)) = (prev.get(var), cur.get(var)) {
            rows.push(i);
            lag.push(l);
        }
    }
    LaggedRows { leverage, rows, lag }
}

struct AdjustmentData {
    y: Vec<f64>,
    columns: Vec<(String, Vec<f64>)>,
    firms: Vec<String>,
}

impl AdjustmentData {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn subset(&self, keep: &[usize]) -> Self {
        Self {
            y: keep.iter().map(|&i| self.y[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), keep.iter().map(|&i| c[i]).collect()))
                .collect(),
            firms: keep.iter().map(|&i| self.firms[i].clone()).collect(),
        }
    }
}

/// Complete-case adjustment rows and the observation index each came from.
fn build_data(panel: &Panel, spec: &TargetModelSpec, lagged: &LaggedRows) -> Result<(AdjustmentData, Vec<usize>)> {
    let var = spec.leverage.variable();
    let vars: Vec<Variable> = spec.determinants.iter().chain(&spec.macro_vars).copied().collect();
    let mut data = AdjustmentData {
        y: Vec::new(),
        columns: vars
            .iter()
            .map(|v| (v.name().to_string(), Vec::new()))
            .chain(std::iter::once((LAG_COLUMN.to_string(), Vec::new())))
            .collect(),
        firms: Vec::new(),
    };
    let mut origin = Vec::new();
    'rows: for (&i, &lag) in lagged.rows.iter().zip(&lagged.lag) {
        let mut vals = Vec::with_capacity(vars.len());
        for &v in &vars {
            match panel.value(i, v) {
                Some(x) => vals.push(x),
                None => continue 'rows,
            }
        }
        let Some(y) = panel.value(i, var) else { continue };
        for (col, x) in data.columns.iter_mut().zip(vals) {
            col.1.push(x);
        }
        data.columns.last_mut().expect("lag column").1.push(lag);
        data.y.push(y);
        data.firms.push(panel.observations()[i].firm_id.clone());
        origin.push(i);
    }
    if data.n() == 0 {
        return Err(Error::InsufficientData(format!(
            "no rows with lagged {} leverage and complete regressors",
            spec.leverage.label().to_lowercase()
        )));
    }
    Ok((data, origin))
}

/// Complete-case design of the target model: leverage on the determinants
/// and macro variables (no lag, no intercept column), with firm groups.
/// Rows need not have a lagged value.
pub fn target_design(panel: &Panel, spec: &TargetModelSpec) -> Result<(DesignMatrix, Groups)> {
    spec.validate()?;
    let var = spec.leverage.variable();
    let vars: Vec<Variable> = spec.determinants.iter().chain(&spec.macro_vars).copied().collect();
    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); vars.len()];
    let mut firms = Vec::new();
    for (i, row) in panel.observations().iter().enumerate() {
        let vals: Option<Vec<f64>> = vars.iter().map(|&v| panel.value(i, v)).collect();
        let (Some(vals), Some(lev)) = (vals, panel.value(i, var)) else {
            continue;
        };
        for (c, x) in cols.iter_mut().zip(vals) {
            c.push(x);
        }
        y.push(lev);
        firms.push(row.firm_id.clone());
    }
    if y.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no rows with {} leverage and complete regressors",
            spec.leverage.label().to_lowercase()
        )));
    }
    let columns = vars.iter().map(|v| v.name().to_string()).zip(cols).collect();
    Ok((DesignMatrix::new(y, columns)?, Groups::from_labels(&firms)))
}

fn fitted_with_effects(fit: &QuantileFit, design: &DesignMatrix, groups: &Groups) -> Vec<f64> {
    let effects = fit.group_effects.as_deref().unwrap_or(&[]);
    (0..design.n())
        .map(|i| {
            let common: f64 = fit
                .names
                .iter()
                .zip(&fit.coefficients)
                .map(|(name, b)| {
                    if name == INTERCEPT {
                        *b
                    } else {
                        b * design.column(name).map_or(0.0, |c| c[i])
                    }
                })
                .sum();
            common + effects.get(groups.index()[i]).map_or(0.0, |e| e.1)
        })
        .collect()
}

fn estimate_on(data: &AdjustmentData, spec: &TargetModelSpec) -> Result<Vec<AdjustmentResult>> {
    let groups = Groups::from_labels(&data.firms);
    let design = DesignMatrix::new(data.y.clone(), data.columns.clone())?;
    let n = data.n();
    spec.thetas
        .par_iter()
        .map(|&theta| match spec.form {
            EstimationForm::OneStep => {
                let fit = fit_quantile_fixed_effects(&design, &groups, theta, spec.fe_mode, &spec.solver)?;
                let lag = fit.coefficient(LAG_COLUMN).expect("lag column is in the design");
                Ok(AdjustmentResult::new(theta, spec.leverage, lag, fit, n, spec.form))
            }
            EstimationForm::TwoStep => {
                let lag_col = design.column(LAG_COLUMN).expect("lag column").to_vec();
                let target_cols: Vec<(String, Vec<f64>)> =
                    data.columns.iter().filter(|(n, _)| n != LAG_COLUMN).cloned().collect();
                let target_design = DesignMatrix::new(data.y.clone(), target_cols)?;
                let target = fit_quantile_fixed_effects(&target_design, &groups, theta, spec.fe_mode, &spec.solver)?;
                let lev_star = fitted_with_effects(&target, &target_design, &groups);
                let gap: Vec<f64> = lev_star.iter().zip(&lag_col).map(|(s, l)| s - l).collect();
                let change: Vec<f64> = data.y.iter().zip(&lag_col).map(|(y, l)| y - l).collect();
                let second = DesignMatrix::new(change, vec![("gap".into(), gap)])?;
                let fit = fit_quantile(&second, theta, &spec.solver)?;
                let lag = 1.0 - fit.coefficients[0];
                Ok(AdjustmentResult::new(theta, spec.leverage, lag, fit, n, spec.form))
            }
        })
        .collect()
}

/// One result per requested quantile, in the order of `spec.thetas`.
pub fn estimate_speed(panel: &Panel, spec: &TargetModelSpec) -> Result<Vec<AdjustmentResult>> {
    spec.validate()?;
    let lagged = lag_leverage(panel, spec.leverage);
    let (data, _) = build_data(panel, spec, &lagged)?;
    estimate_on(&data, spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSplit {
    pub by_year: BTreeMap<i32, Regime>,
    pub counts: BTreeMap<Regime, usize>,
    pub warnings: Vec<String>,
}

impl RegimeSplit {
    pub fn years(&self, regime: Regime) -> Vec<i32> {
        self.by_year.iter().filter(|(_, r)| **r == regime).map(|(y, _)| *y).collect()
    }
}

/// Assigns every macro year to a regime under `rule`.
pub fn split_regimes(macro_series: &MacroSeries, rule: RegimeRule) -> RegimeSplit {
    let by_year: BTreeMap<i32, Regime> = macro_series.iter().map(|m| (m.year, rule.classify(m.gdp_growth))).collect();
    let mut counts = BTreeMap::from([(Regime::Growth, 0), (Regime::Recession, 0)]);
    for r in by_year.values() {
        *counts.entry(*r).or_default() += 1;
    }
    let warnings = counts
        .iter()
        .filter(|(_, &c)| c == 0)
        .map(|(r, _)| format!("no {r} years at threshold {}", rule.threshold))
        .collect::<Vec<_>>();
    for w in &warnings {
        log::warn!("{w}");
    }
    RegimeSplit { by_year, counts, warnings }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeResults {
    pub split: RegimeSplit,
    pub results: BTreeMap<Regime, Vec<AdjustmentResult>>,
    /// regimes not estimated, with the reason
    pub skipped: Vec<(Regime, String)>,
}

/// Runs [`estimate_speed`] on the rows of each regime. Lags come from the
/// full panel, so a regime's first year keeps the previous year's leverage.
pub fn estimate_speed_by_regime(panel: &Panel, spec: &TargetModelSpec) -> Result<RegimeResults> {
    spec.validate()?;
    let rule = spec
        .regime_split
        .ok_or_else(|| Error::InvalidInput("no regime rule configured".into()))?;
    let series = MacroSeries::new(panel.macro_data().values().map(|m| (m.year, m.inflation, m.gdp_growth)), rule)?;
    let split = split_regimes(&series, rule);
    let by_year = &split.by_year;

    let lagged = lag_leverage(panel, spec.leverage);
    let (data, origin) = build_data(panel, spec, &lagged)?;
    let obs = panel.observations();
    let regime_of = |i: usize| {
        let year = match spec.regime_timing {
            RegimeTiming::AdjustmentYear => obs[i].fiscal_year,
            RegimeTiming::LagYear => obs[i].fiscal_year - 1,
        };
        by_year.get(&year).copied()
    };
    let min_rows = 10 * spec.k();
    let mut results = BTreeMap::new();
    let mut skipped = Vec::new();
    for regime in [Regime::Growth, Regime::Recession] {
        let keep: Vec<usize> = (0..data.n()).filter(|&r| regime_of(origin[r]) == Some(regime)).collect();
        let years: std::collections::BTreeSet<i32> = keep.iter().map(|&r| obs[origin[r]].fiscal_year).collect();
        // with firm effects, m macro slopes need m + 1 distinct years
        let min_years = spec.macro_vars.len() + 1;
        let why = if keep.len() < min_rows {
            Some(format!("{} rows, need at least {min_rows}", keep.len()))
        } else if !spec.macro_vars.is_empty() && years.len() < min_years {
            Some(format!("{} distinct years, macro effects need at least {min_years}", years.len()))
        } else {
            None
        };
        if let Some(why) = why {
            log::warn!("skipping {regime} regime: {why}");
            skipped.push((regime, why));
            continue;
        }
        let sub = if keep.len() == data.n() { None } else { Some(data.subset(&keep)) };
        let mut res = estimate_on(sub.as_ref().unwrap_or(&data), spec)?;
        res.iter_mut().for_each(|r| r.regime = Some(regime));
        results.insert(regime, res);
    }
    Ok(RegimeResults { split, results, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel_data::{derive_variables, ingest_panel, FirmYearRecord, TaxRates};

    fn record(firm: &str, year: i32, debt: f64) -> FirmYearRecord {
        FirmYearRecord {
            firm_id: firm.into(),
            fiscal_year: year,
            total_assets: 100.0,
            book_debt: debt,
            market_equity: Some(50.0),
            current_assets: 1.0,
            current_liabilities: 1.0,
            ebit: 1.0,
            interest_payable: 0.0,
            income_tax: 0.0,
            sales: 1.0,
            net_ppe: 1.0,
            depreciation: 0.0,
        }
    }

    fn derived(recs: Vec<FirmYearRecord>) -> Panel {
        let (p, _) = ingest_panel(recs);
        let m = MacroSeries::new((1999..=2005).map(|y| (y, 2.0, 1.0)), RegimeRule::default()).unwrap();
        derive_variables(&p, &m, &TaxRates::Constant(0.35)).unwrap()
    }

    #[test]
    fn lag_drops_first_years_and_gaps() {
        let p = derived(vec![
            record("a", 2000, 10.0),
            record("a", 2001, 20.0),
            record("a", 2002, 30.0),
            record("b", 2000, 5.0),
            record("b", 2002, 6.0),
        ]);
        let l = lag_leverage(&p, Leverage::Book);
        assert_eq!(l.rows, vec![1, 2]);
        assert_eq!(l.lag, vec![0.1, 0.2]);
    }

    #[test]
    fn speed_is_one_minus_lag() {
        let fit = QuantileFit {
            theta: 0.5,
            names: vec![LAG_COLUMN.into()],
            coefficients: vec![0.4],
            std_errors: None,
            objective: 0.0,
            pseudo_r2: 0.5,
            n_neg: 0,
            n_pos: 0,
            n_zero: 1,
            group_effects: None,
            solver: crate::quantile::SolverMeta {
                algorithm: crate::quantile::Algorithm::InteriorPoint,
                iterations: 0,
                pivots: 0,
                duality_gap: 0.0,
                converged: true,
                fell_back: false,
            },
        };
        let r = AdjustmentResult::new(0.5, Leverage::Book, 0.4, fit.clone(), 1, EstimationForm::OneStep);
        assert_eq!(r.speed, 0.6);
        assert!(!r.out_of_range);
        let r = AdjustmentResult::new(0.5, Leverage::Book, 1.2, fit, 1, EstimationForm::OneStep);
        assert!(r.out_of_range);
        assert_eq!(r.speed + r.lag_coefficient, 1.0);
    }

    #[test]
    fn regime_rule_examples() {
        let m = MacroSeries::new([(1, 0.0, 2.1), (2, 0.0, -0.3), (3, 0.0, 1.0)], RegimeRule::default()).unwrap();
        let s = split_regimes(&m, RegimeRule::default());
        assert_eq!(s.by_year.values().copied().collect::<Vec<_>>(), vec![Regime::Growth, Regime::Recession, Regime::Growth]);
        assert!(s.warnings.is_empty());
        let s = split_regimes(&m, RegimeRule { threshold: 2.0 });
        assert_eq!(
            s.by_year.values().copied().collect::<Vec<_>>(),
            vec![Regime::Growth, Regime::Recession, Regime::Recession]
        );
        let all_up = MacroSeries::new([(1, 0.0, 2.1), (2, 0.0, 0.3)], RegimeRule::default()).unwrap();
        let s = split_regimes(&all_up, RegimeRule::default());
        assert_eq!(s.counts[&Regime::Recession], 0);
        assert_eq!(s.warnings.len(), 1);
    }
}
