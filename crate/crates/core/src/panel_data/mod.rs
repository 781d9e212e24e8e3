//! Firm-year panels: ingestion of raw statement lines, construction of the
//! leverage and determinant variables, and descriptive statistics.

mod derive;
mod describe;
mod ingest;
mod macros;
mod winsor;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

pub use derive::{derive_variables, TaxRates};
pub use describe::{correlation_matrix, yearly_means, CorrelationCell, CorrelationMatrix, MeansRow, MeansTable, YearLabel};
pub use ingest::{ingest_panel, read_panel_csv, write_panel_csv, Rejection, ValidationReport, PANEL_COLUMNS};
pub use macros::{read_macro_csv, write_macro_csv, MacroSeries, MacroYear, Regime, RegimeRule, MACRO_COLUMNS};
pub use winsor::winsorize;

/// Raw statement line items for one firm-year.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmYearRecord {
    pub firm_id: String,
    pub fiscal_year: i32,
    pub total_assets: f64,
    pub book_debt: f64,
    pub market_equity: Option<f64>,
    pub current_assets: f64,
    pub current_liabilities: f64,
    pub ebit: f64,
    pub interest_payable: f64,
    pub income_tax: f64,
    pub sales: f64,
    pub net_ppe: f64,
    pub depreciation: f64,
}

/// Regression variables derived for one firm-year.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRow {
    pub firm_id: String,
    pub fiscal_year: i32,
    pub levb: f64,
    pub levm: Option<f64>,
    pub ndts: f64,
    pub profta: f64,
    pub sizeat: Option<f64>,
    pub growthat: Option<f64>,
    pub invta: Option<f64>,
    pub liqta: Option<f64>,
    pub mbratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variable {
    Levb,
    Levm,
    Ndts,
    Profta,
    Sizeat,
    Growthat,
    Invta,
    Liqta,
    Mbratio,
    Inflation,
    GdpRate,
}

impl Variable {
    pub const FIRM: [Variable; 9] = [
        Variable::Levb,
        Variable::Levm,
        Variable::Ndts,
        Variable::Profta,
        Variable::Sizeat,
        Variable::Growthat,
        Variable::Invta,
        Variable::Liqta,
        Variable::Mbratio,
    ];

    /// Firm-specific determinants of target leverage.
    pub const DETERMINANTS: [Variable; 7] = [
        Variable::Liqta,
        Variable::Mbratio,
        Variable::Ndts,
        Variable::Profta,
        Variable::Sizeat,
        Variable::Growthat,
        Variable::Invta,
    ];

    pub const MACRO: [Variable; 2] = [Variable::Inflation, Variable::GdpRate];

    pub const ALL: [Variable; 11] = [
        Variable::Levb,
        Variable::Levm,
        Variable::Ndts,
        Variable::Profta,
        Variable::Sizeat,
        Variable::Growthat,
        Variable::Invta,
        Variable::Liqta,
        Variable::Mbratio,
        Variable::Inflation,
        Variable::GdpRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Levb => "levb",
            Variable::Levm => "levm",
            Variable::Ndts => "ndts",
            Variable::Profta => "profta",
            Variable::Sizeat => "sizeat",
            Variable::Growthat => "growthat",
            Variable::Invta => "invta",
            Variable::Liqta => "liqta",
            Variable::Mbratio => "mbratio",
            Variable::Inflation => "inflation",
            Variable::GdpRate => "gdp_rate",
        }
    }

    /// Row label used in the rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            Variable::Levb => "LEVB",
            Variable::Levm => "LEVM",
            Variable::Ndts => "NDTS",
            Variable::Profta => "PROFITABILITY",
            Variable::Sizeat => "SIZE",
            Variable::Growthat => "GROWTH",
            Variable::Invta => "INVESTMENTS",
            Variable::Liqta => "LIQUIDITY",
            Variable::Mbratio => "MBRATIO",
            Variable::Inflation => "INFLATION",
            Variable::GdpRate => "GDPRATE",
        }
    }

    pub fn parse(s: &str) -> Option<Variable> {
        let s = s.trim().to_ascii_lowercase();
        Variable::ALL
            .into_iter()
            .find(|v| v.name() == s || v.label().eq_ignore_ascii_case(&s))
            .or(match s.as_str() {
                "infl" | "cpi_inflation" => Some(Variable::Inflation),
                "gdp" | "gdp_growth" | "gdprate" => Some(Variable::GdpRate),
                _ => None,
            })
    }

    pub fn is_macro(self) -> bool {
        matches!(self, Variable::Inflation | Variable::GdpRate)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl ObservationRow {
    pub fn get(&self, var: Variable) -> Option<f64> {
        match var {
            Variable::Levb => Some(self.levb),
            Variable::Levm => self.levm,
            Variable::Ndts => Some(self.ndts),
            Variable::Profta => Some(self.profta),
            Variable::Sizeat => self.sizeat,
            Variable::Growthat => self.growthat,
            Variable::Invta => self.invta,
            Variable::Liqta => self.liqta,
            Variable::Mbratio => self.mbratio,
            Variable::Inflation | Variable::GdpRate => None,
        }
    }

    pub(crate) fn slot(&mut self, var: Variable) -> Option<&mut f64> {
        match var {
            Variable::Levb => Some(&mut self.levb),
            Variable::Levm => self.levm.as_mut(),
            Variable::Ndts => Some(&mut self.ndts),
            Variable::Profta => Some(&mut self.profta),
            Variable::Sizeat => self.sizeat.as_mut(),
            Variable::Growthat => self.growthat.as_mut(),
            Variable::Invta => self.invta.as_mut(),
            Variable::Liqta => self.liqta.as_mut(),
            Variable::Mbratio => self.mbratio.as_mut(),
            Variable::Inflation | Variable::GdpRate => None,
        }
    }
}

/// An ingested panel, sorted by `(firm_id, fiscal_year)`. Immutable once
/// built; derivation returns a new panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    records: Vec<FirmYearRecord>,
    usable: Vec<bool>,
    firm_index: Vec<(String, Range<usize>)>,
    observations: Vec<ObservationRow>,
    macro_data: BTreeMap<i32, MacroYear>,
}

impl Panel {
    pub(crate) fn from_sorted(records: Vec<FirmYearRecord>, usable: Vec<bool>) -> Self {
        let mut firm_index: Vec<(String, Range<usize>)> = Vec::new();
        for (i, r) in records.iter().enumerate() {
            match firm_index.last_mut() {
                Some((id, range)) if *id == r.firm_id => range.end = i + 1,
                _ => firm_index.push((r.firm_id.clone(), i..i + 1)),
            }
        }
        Self {
            records,
            usable,
            firm_index,
            observations: Vec::new(),
            macro_data: BTreeMap::new(),
        }
    }

    pub fn records(&self) -> &[FirmYearRecord] {
        &self.records
    }

    pub fn is_usable(&self, i: usize) -> bool {
        self.usable[i]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn firm_index(&self) -> &[(String, Range<usize>)] {
        &self.firm_index
    }

    pub fn n_firms(&self) -> usize {
        self.firm_index.len()
    }

    pub fn year_span(&self) -> Option<(i32, i32)> {
        let min = self.records.iter().map(|r| r.fiscal_year).min()?;
        let max = self.records.iter().map(|r| r.fiscal_year).max()?;
        Some((min, max))
    }

    /// Derived rows, one per usable record; empty before derivation.
    pub fn observations(&self) -> &[ObservationRow] {
        &self.observations
    }

    pub fn is_derived(&self) -> bool {
        !self.observations.is_empty() || self.usable.iter().all(|u| !u)
    }

    pub fn macro_data(&self) -> &BTreeMap<i32, MacroYear> {
        &self.macro_data
    }

    pub fn macro_for(&self, year: i32) -> Option<&MacroYear> {
        self.macro_data.get(&year)
    }

    /// Value of `var` on derived row `i`, including joined macro series.
    pub fn value(&self, i: usize, var: Variable) -> Option<f64> {
        let row = &self.observations[i];
        match var {
            Variable::Inflation => self.macro_data.get(&row.fiscal_year).map(|m| m.inflation),
            Variable::GdpRate => self.macro_data.get(&row.fiscal_year).map(|m| m.gdp_growth),
            v => row.get(v),
        }
    }

    /// Rows of observations ordered by firm then year, grouped by firm.
    pub fn observation_firms(&self) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = Vec::new();
        for (i, r) in self.observations.iter().enumerate() {
            match out.last_mut() {
                Some(range) if self.observations[range.start].firm_id == r.firm_id => range.end = i + 1,
                _ => out.push(i..i + 1),
            }
        }
        out
    }

    pub(crate) fn with_observations(&self, observations: Vec<ObservationRow>, macro_data: BTreeMap<i32, MacroYear>) -> Self {
        Self {
            records: self.records.clone(),
            usable: self.usable.clone(),
            firm_index: self.firm_index.clone(),
            observations,
            macro_data,
        }
    }

    pub(crate) fn observations_mut(&mut self) -> &mut Vec<ObservationRow> {
        &mut self.observations
    }

    /// Copy restricted to the derived rows selected by `keep`.
    pub fn filter_observations(&self, keep: impl Fn(&ObservationRow) -> bool) -> Self {
        let mut out = self.clone();
        out.observations.retain(|r| keep(r));
        out
    }
}
