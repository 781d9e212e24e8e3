use super::{Panel, Variable};
use crate::error::{Error, Result};

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    // linear interpolation between order statistics
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Clamps each listed firm variable to its `[pct, 1 - pct]` sample
/// quantiles across all derived rows. Macro variables are left alone.
pub fn winsorize(panel: &Panel, variables: &[Variable], pct: f64) -> Result<Panel> {
    if !(0.0..0.5).contains(&pct) {
        return Err(Error::InvalidInput(format!("winsorization percentile {pct} outside [0, 0.5)")));
    }
    let mut out = panel.clone();
    for &var in variables.iter().filter(|v| !v.is_macro()) {
        let mut vals: Vec<f64> = out.observations().iter().filter_map(|r| r.get(var)).collect();
        if vals.len() < 2 {
            continue;
        }
        vals.sort_by(|a, b| a.total_cmp(b));
        let lo = quantile_sorted(&vals, pct);
        let hi = quantile_sorted(&vals, 1.0 - pct);
        for row in out.observations_mut().iter_mut() {
            if let Some(v) = row.slot(var) {
                *v = v.clamp(lo, hi);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel_data::{derive_variables, ingest_panel, FirmYearRecord, MacroSeries, RegimeRule, TaxRates};

    #[test]
    fn clamps_tails_only() {
        let recs = (0..21).map(|i| FirmYearRecord {
            firm_id: format!("f{i:02}"),
            fiscal_year: 2000,
            total_assets: 100.0,
            book_debt: i as f64,
            market_equity: None,
            current_assets: 1.0,
            current_liabilities: 1.0,
            ebit: 1.0,
            interest_payable: 0.0,
            income_tax: 0.0,
            sales: 1.0,
            net_ppe: 1.0,
            depreciation: 0.0,
        });
        let (panel, _) = ingest_panel(recs);
        let macros = MacroSeries::new([(2000, 1.0, 1.0)], RegimeRule::default()).unwrap();
        let d = derive_variables(&panel, &macros, &TaxRates::Constant(0.3)).unwrap();
        let w = winsorize(&d, &[Variable::Levb], 0.1).unwrap();
        let lev: Vec<f64> = w.observations().iter().map(|r| r.levb).collect();
        assert!((lev[0] - 0.02).abs() < 1e-12);
        assert!((lev[20] - 0.18).abs() < 1e-12);
        assert_eq!(lev[10], 0.10);
        assert!(winsorize(&d, &[Variable::Levb], 0.6).is_err());
    }
}
