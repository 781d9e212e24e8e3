use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MACRO_COLUMNS: [&str; 3] = ["year", "cpi_inflation", "gdp_growth"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Growth,
    Recession,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Growth => "growth",
            Regime::Recession => "recession",
        }
    }

    pub fn other(self) -> Regime {
        match self {
            Regime::Growth => Regime::Recession,
            Regime::Recession => Regime::Growth,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Recession iff GDP growth is strictly below the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeRule {
    pub threshold: f64,
}

impl Default for RegimeRule {
    fn default() -> Self {
        Self { threshold: 0.0 }
    }
}

impl RegimeRule {
    pub fn classify(&self, gdp_growth: f64) -> Regime {
        if gdp_growth < self.threshold {
            Regime::Recession
        } else {
            Regime::Growth
        }
    }
}

/// Macro conditions for one calendar year. Rates are in percent per year.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroYear {
    pub year: i32,
    pub inflation: f64,
    pub gdp_growth: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroSeries {
    years: BTreeMap<i32, MacroYear>,
    rule: RegimeRule,
}

impl MacroSeries {
    /// One entry per year; duplicate years are an error.
    pub fn new(rows: impl IntoIterator<Item = (i32, f64, f64)>, rule: RegimeRule) -> Result<Self> {
        let mut years = BTreeMap::new();
        for (year, inflation, gdp_growth) in rows {
            if !inflation.is_finite() || !gdp_growth.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite macro values in {year}")));
            }
            let entry = MacroYear {
                year,
                inflation,
                gdp_growth,
                regime: rule.classify(gdp_growth),
            };
            if years.insert(year, entry).is_some() {
                return Err(Error::InvalidInput(format!("duplicate macro year {year}")));
            }
        }
        Ok(Self { years, rule })
    }

    pub fn rule(&self) -> RegimeRule {
        self.rule
    }

    /// Same series re-classified under another rule.
    pub fn with_rule(&self, rule: RegimeRule) -> Self {
        let years = self
            .years
            .iter()
            .map(|(&y, m)| {
                (
                    y,
                    MacroYear {
                        regime: rule.classify(m.gdp_growth),
                        ..*m
                    },
                )
            })
            .collect();
        Self { years, rule }
    }

    pub fn get(&self, year: i32) -> Option<&MacroYear> {
        self.years.get(&year)
    }

    pub fn years(&self) -> &BTreeMap<i32, MacroYear> {
        &self.years
    }

    pub fn iter(&self) -> impl Iterator<Item = &MacroYear> {
        self.years.values()
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }
}

pub fn read_macro_csv<R: Read>(reader: R, rule: RegimeRule) -> Result<MacroSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut pos = [0usize; 3];
    for (slot, name) in MACRO_COLUMNS.iter().enumerate() {
        pos[slot] = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse {
                location: "macro header".into(),
                message: format!("missing column `{name}`"),
            })?;
    }
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |slot: usize| rec.get(pos[slot]).unwrap_or("");
        let bad = |slot: usize| Error::Parse {
            location: format!("macro line {}", idx + 2),
            message: format!("malformed `{}`: '{}'", MACRO_COLUMNS[slot], field(slot)),
        };
        let year: i32 = field(0).parse().map_err(|_| bad(0))?;
        let infl: f64 = field(1).parse().map_err(|_| bad(1))?;
        let gdp: f64 = field(2).parse().map_err(|_| bad(2))?;
        rows.push((year, infl, gdp));
    }
    MacroSeries::new(rows, rule)
}

pub fn write_macro_csv<W: Write>(series: &MacroSeries, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MACRO_COLUMNS)?;
    for m in series.iter() {
        w.write_record([m.year.to_string(), m.inflation.to_string(), m.gdp_growth.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<macro writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_from_threshold() {
        let s = MacroSeries::new([(2000, 2.0, 2.1), (2001, 1.0, -0.3), (2002, 3.0, 1.0)], RegimeRule::default()).unwrap();
        let regimes: Vec<Regime> = s.iter().map(|m| m.regime).collect();
        assert_eq!(regimes, vec![Regime::Growth, Regime::Recession, Regime::Growth]);
    }

    #[test]
    fn duplicate_years_rejected() {
        assert!(MacroSeries::new([(2000, 1.0, 1.0), (2000, 2.0, 2.0)], RegimeRule::default()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = MacroSeries::new([(1999, 2.25, -0.5), (2000, 3.125, 4.0)], RegimeRule::default()).unwrap();
        let mut buf = Vec::new();
        write_macro_csv(&s, &mut buf).unwrap();
        let back = read_macro_csv(buf.as_slice(), RegimeRule::default()).unwrap();
        assert_eq!(back, s);
    }
}
