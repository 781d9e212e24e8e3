use std::collections::BTreeMap;

use super::{FirmYearRecord, MacroSeries, ObservationRow, Panel};
use crate::error::{Error, Result};

/// Corporate tax rate used in the non-debt tax shield formula.
#[derive(Debug, Clone, PartialEq)]
pub enum TaxRates {
    Constant(f64),
    ByYear {
        rates: BTreeMap<i32, f64>,
        fallback: Option<f64>,
    },
}

impl TaxRates {
    pub fn rate(&self, year: i32) -> Result<f64> {
        let r = match self {
            TaxRates::Constant(r) => Some(*r),
            TaxRates::ByYear { rates, fallback } => rates.get(&year).copied().or(*fallback),
        };
        match r {
            Some(r) if r > 0.0 && r <= 1.0 => Ok(r),
            Some(r) => Err(Error::InvalidInput(format!("tax rate {r} for {year} outside (0, 1]"))),
            None => Err(Error::MissingTaxRate(year)),
        }
    }

    /// Reads `year,rate` lines (header required). Rates above 1 are read as
    /// percentages.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rates = BTreeMap::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = || Error::Parse {
                location: format!("tax table line {}", idx + 2),
                message: "expected `year,rate`".into(),
            };
            let year: i32 = rec.get(0).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let mut rate: f64 = rec.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if rate > 1.0 {
                rate /= 100.0;
            }
            rates.insert(year, rate);
        }
        Ok(TaxRates::ByYear { rates, fallback: None })
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den).filter(|v| v.is_finite())
}

pub(crate) fn derive_row(rec: &FirmYearRecord, prev: Option<&FirmYearRecord>, tax_rate: f64) -> ObservationRow {
    let at = rec.total_assets;
    let levm = rec
        .market_equity
        .filter(|m| *m >= 0.0)
        .and_then(|m| ratio(rec.book_debt, rec.book_debt + m));
    let book_equity = at - rec.book_debt;
    let mbratio = rec
        .market_equity
        .and_then(|m| if book_equity > 0.0 { ratio(m, book_equity) } else { None });
    ObservationRow {
        firm_id: rec.firm_id.clone(),
        fiscal_year: rec.fiscal_year,
        levb: rec.book_debt / at,
        levm,
        ndts: rec.ebit - rec.interest_payable - rec.income_tax / tax_rate,
        profta: rec.ebit / at,
        sizeat: (rec.sales > 0.0).then(|| rec.sales.ln()),
        growthat: prev
            .filter(|p| p.sales > 0.0)
            .map(|p| (rec.sales - p.sales) / p.sales),
        invta: prev.map(|p| rec.net_ppe - p.net_ppe + rec.depreciation),
        liqta: ratio(rec.current_assets, rec.current_liabilities),
        mbratio,
    }
}

/// Builds every derivable variable for the usable records and joins the
/// macro series. Lagged variables need the same firm's usable record for
/// the immediately preceding fiscal year.
pub fn derive_variables(panel: &Panel, macro_series: &MacroSeries, tax: &TaxRates) -> Result<Panel> {
    let recs = panel.records();
    let mut rows = Vec::with_capacity(recs.len());
    for (i, rec) in recs.iter().enumerate() {
        if !panel.is_usable(i) {
            continue;
        }
        let rate = tax.rate(rec.fiscal_year)?;
        if macro_series.get(rec.fiscal_year).is_none() {
            return Err(Error::MissingMacro(rec.fiscal_year));
        }
        let prev = (i > 0)
            .then(|| i - 1)
            .filter(|&j| {
                recs[j].firm_id == rec.firm_id && recs[j].fiscal_year == rec.fiscal_year - 1 && panel.is_usable(j)
            })
            .map(|j| &recs[j]);
        rows.push(derive_row(rec, prev, rate));
    }
    let years: BTreeMap<_, _> = rows
        .iter()
        .map(|r| r.fiscal_year)
        .filter_map(|y| macro_series.get(y).map(|m| (y, *m)))
        .collect();
    Ok(panel.with_observations(rows, years))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel_data::{ingest_panel, RegimeRule};

    fn record(firm: &str, year: i32) -> FirmYearRecord {
        FirmYearRecord {
            firm_id: firm.into(),
            fiscal_year: year,
            total_assets: 200.0,
            book_debt: 50.0,
            market_equity: Some(150.0),
            current_assets: 60.0,
            current_liabilities: 30.0,
            ebit: 100.0,
            interest_payable: 10.0,
            income_tax: 21.0,
            sales: 100.0,
            net_ppe: 100.0,
            depreciation: 15.0,
        }
    }

    fn macros(years: std::ops::RangeInclusive<i32>) -> MacroSeries {
        MacroSeries::new(years.map(|y| (y, 2.0, 1.5)), RegimeRule::default()).unwrap()
    }

    #[test]
    fn leverage_ratios() {
        let row = derive_row(&record("a", 2000), None, 0.21);
        assert_eq!(row.levb, 0.25);
        assert_eq!(row.levm, Some(0.25));
        assert_eq!(row.profta, 0.5);
        assert_eq!(row.liqta, Some(2.0));
        assert_eq!(row.mbratio, Some(1.0));
    }

    #[test]
    fn non_debt_tax_shield() {
        let row = derive_row(&record("a", 2000), None, 0.21);
        // 100 - 10 - 21/0.21
        assert_eq!(row.ndts, -10.0);
    }

    #[test]
    fn investment_and_growth_from_lag() {
        let prev = record("a", 2000);
        let mut cur = record("a", 2001);
        cur.net_ppe = 120.0;
        cur.sales = 110.0;
        let row = derive_row(&cur, Some(&prev), 0.35);
        assert_eq!(row.invta, Some(35.0));
        assert_eq!(row.growthat, Some(0.10));
        assert_eq!(row.sizeat, Some(110f64.ln()));
    }

    #[test]
    fn absent_inputs_leave_variables_absent() {
        let mut r = record("a", 2000);
        r.market_equity = None;
        r.sales = 0.0;
        r.current_liabilities = 0.0;
        let row = derive_row(&r, None, 0.35);
        assert_eq!(row.levm, None);
        assert_eq!(row.mbratio, None);
        assert_eq!(row.sizeat, None);
        assert_eq!(row.liqta, None);
        assert_eq!(row.growthat, None);
        assert_eq!(row.invta, None);
    }

    #[test]
    fn gaps_break_the_lag_chain() {
        let (panel, _) = ingest_panel(vec![record("a", 2000), record("a", 2001), record("a", 2003), record("b", 2001)]);
        let d = derive_variables(&panel, &macros(2000..=2003), &TaxRates::Constant(0.35)).unwrap();
        let growth: Vec<bool> = d.observations().iter().map(|r| r.growthat.is_some()).collect();
        assert_eq!(growth, vec![false, true, false, false]);
    }

    #[test]
    fn missing_tax_rate_is_fatal() {
        let (panel, _) = ingest_panel(vec![record("a", 2000)]);
        let tax = TaxRates::ByYear {
            rates: BTreeMap::new(),
            fallback: None,
        };
        assert!(matches!(
            derive_variables(&panel, &macros(2000..=2000), &tax),
            Err(Error::MissingTaxRate(2000))
        ));
    }

    #[test]
    fn unusable_records_get_no_row() {
        let mut bad = record("a", 2001);
        bad.total_assets = 0.0;
        let (panel, _) = ingest_panel(vec![record("a", 2000), bad, record("a", 2002)]);
        let d = derive_variables(&panel, &macros(2000..=2002), &TaxRates::Constant(0.35)).unwrap();
        assert_eq!(d.observations().len(), 2);
        assert!(d.observations()[1].invta.is_none());
    }

    #[test]
    fn tax_table_reads_percentages() {
        let t = TaxRates::read_csv("year,rate\n1990,34\n2000,0.35\n".as_bytes()).unwrap();
        assert_eq!(t.rate(1990).unwrap(), 0.34);
        assert_eq!(t.rate(2000).unwrap(), 0.35);
        assert!(t.rate(2001).is_err());
    }
}
