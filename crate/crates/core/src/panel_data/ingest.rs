use std::collections::HashSet;
use std::fmt::Write as _;
use std::io::{Read, Write};

use super::{FirmYearRecord, Panel};
use crate::error::{Error, Result};

/// Header of the firm-year input file, in canonical order.
pub const PANEL_COLUMNS: [&str; 13] = [
    "firm_id", "fyear", "at", "debt", "mkt_eq", "act", "lct", "ebit", "ip", "txt", "sale", "ppent", "dp",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    /// 1-based line in the source file, header being line 1
    pub line: Option<usize>,
    pub firm_id: String,
    pub fiscal_year: Option<i32>,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
    /// kept in the panel but excluded from derived variables
    pub flagged: Vec<Rejection>,
}

impl ValidationReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "VALIDATION REPORT");
        let _ = writeln!(out, "accepted rows: {}", self.accepted);
        let _ = writeln!(out, "rejected rows: {}", self.rejected.len());
        let _ = writeln!(out, "flagged rows:  {}", self.flagged.len());
        for (title, list) in [("REJECTED", &self.rejected), ("FLAGGED", &self.flagged)] {
            if list.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\n{title}");
            for r in list {
                let line = r.line.map_or_else(|| "-".to_string(), |l| l.to_string());
                let year = r.fiscal_year.map_or_else(|| "NA".to_string(), |y| y.to_string());
                let _ = writeln!(out, "line {line}\tfirm {}\tyear {year}\t{}", r.firm_id, r.reason);
            }
        }
        out
    }
}

fn unusable_reason(r: &FirmYearRecord) -> Option<&'static str> {
    if !(r.total_assets > 0.0) {
        Some("non-positive total assets")
    } else if r.book_debt < 0.0 {
        Some("negative book debt")
    } else {
        None
    }
}

/// Sorts, de-duplicates and indexes records. Later duplicates of a
/// `(firm_id, fiscal_year)` key are rejected; records with non-positive
/// total assets are kept but flagged unusable.
pub fn ingest_panel(records: impl IntoIterator<Item = FirmYearRecord>) -> (Panel, ValidationReport) {
    ingest_with_lines(records.into_iter().map(|r| (None, r)), ValidationReport::default())
}

fn ingest_with_lines(
    records: impl Iterator<Item = (Option<usize>, FirmYearRecord)>,
    mut report: ValidationReport,
) -> (Panel, ValidationReport) {
    let mut seen = HashSet::new();
    let mut kept = Vec::new();
    for (line, r) in records {
        if !seen.insert((r.firm_id.clone(), r.fiscal_year)) {
            report.rejected.push(Rejection {
                line,
                firm_id: r.firm_id.clone(),
                fiscal_year: Some(r.fiscal_year),
                reason: "duplicate (firm_id, fiscal_year)".into(),
            });
            continue;
        }
        if let Some(reason) = unusable_reason(&r) {
            report.flagged.push(Rejection {
                line,
                firm_id: r.firm_id.clone(),
                fiscal_year: Some(r.fiscal_year),
                reason: reason.into(),
            });
        }
        kept.push(r);
    }
    kept.sort_by(|a, b| a.firm_id.cmp(&b.firm_id).then(a.fiscal_year.cmp(&b.fiscal_year)));
    report.accepted = kept.len();
    let usable = kept.iter().map(|r| unusable_reason(r).is_none()).collect();
    (Panel::from_sorted(kept, usable), report)
}

fn parse_num(field: &str, col: &str) -> std::result::Result<f64, String> {
    let t = field.trim();
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("malformed `{col}`: '{t}'"))
}

fn is_missing(field: &str) -> bool {
    matches!(field.trim(), "" | "NA" | "na" | "." | "NaN")
}

/// Reads the comma-separated firm-year file. Column order is free; all
/// columns in [`PANEL_COLUMNS`] must be present. `mkt_eq` may be empty or
/// `NA`.
pub fn read_panel_csv<R: Read>(reader: R) -> Result<(Panel, ValidationReport)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut pos = [0usize; 13];
    for (slot, name) in PANEL_COLUMNS.iter().enumerate() {
        pos[slot] = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Parse {
                location: "header".into(),
                message: format!("missing column `{name}`"),
            })?;
    }
    let mut report = ValidationReport::default();
    let mut parsed = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                report.rejected.push(Rejection {
                    line: Some(line),
                    firm_id: String::new(),
                    fiscal_year: None,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let get = |slot: usize| rec.get(pos[slot]).unwrap_or("");
        let firm_id = get(0).to_string();
        let row = (|| -> std::result::Result<FirmYearRecord, String> {
            if firm_id.is_empty() {
                return Err("empty firm_id".into());
            }
            let fiscal_year = get(1)
                .trim()
                .parse::<i32>()
                .map_err(|_| format!("malformed `fyear`: '{}'", get(1)))?;
            let num = |slot: usize| parse_num(get(slot), PANEL_COLUMNS[slot]);
            let market_equity = if is_missing(get(4)) { None } else { Some(num(4)?) };
            Ok(FirmYearRecord {
                firm_id: firm_id.clone(),
                fiscal_year,
                total_assets: num(2)?,
                book_debt: num(3)?,
                market_equity,
                current_assets: num(5)?,
                current_liabilities: num(6)?,
                ebit: num(7)?,
                interest_payable: num(8)?,
                income_tax: num(9)?,
                sales: num(10)?,
                net_ppe: num(11)?,
                depreciation: num(12)?,
            })
        })();
        match row {
            Ok(r) => parsed.push((Some(line), r)),
            Err(reason) => report.rejected.push(Rejection {
                line: Some(line),
                firm_id,
                fiscal_year: get(1).trim().parse().ok(),
                reason,
            }),
        }
    }
    Ok(ingest_with_lines(parsed.into_iter(), report))
}

/// Writes records in the schema [`read_panel_csv`] accepts. Floats use
/// shortest round-trip formatting, so reading back is exact.
pub fn write_panel_csv<W: Write>(records: &[FirmYearRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PANEL_COLUMNS)?;
    for r in records {
        let mkt = r.market_equity.map_or_else(|| "NA".to_string(), |v| v.to_string());
        w.write_record([
            r.firm_id.clone(),
            r.fiscal_year.to_string(),
            r.total_assets.to_string(),
            r.book_debt.to_string(),
            mkt,
            r.current_assets.to_string(),
            r.current_liabilities.to_string(),
            r.ebit.to_string(),
            r.interest_payable.to_string(),
            r.income_tax.to_string(),
            r.sales.to_string(),
            r.net_ppe.to_string(),
            r.depreciation.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<panel writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

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
            net_ppe: 120.0,
            depreciation: 15.0,
        }
    }

    #[test]
    fn clean_two_by_three() {
        let recs = ["b", "a"]
            .iter()
            .flat_map(|f| (2001..=2003).rev().map(move |y| record(f, y)));
        let (panel, report) = ingest_panel(recs);
        assert_eq!(panel.len(), 6);
        assert!(report.rejected.is_empty());
        assert_eq!(panel.records()[0].firm_id, "a");
        assert_eq!(panel.records()[0].fiscal_year, 2001);
        assert_eq!(panel.firm_index()[1], ("b".to_string(), 3..6));
        assert_eq!(panel.year_span(), Some((2001, 2003)));
    }

    #[test]
    fn duplicate_rejected() {
        let (panel, report) = ingest_panel(vec![record("a", 2000), record("a", 2000)]);
        assert_eq!(panel.len(), 1);
        assert_eq!(report.rejected.len(), 1);
        assert!(report.rejected[0].reason.contains("duplicate"));
    }

    #[test]
    fn zero_assets_flagged_not_dropped() {
        let mut r = record("a", 2000);
        r.total_assets = 0.0;
        let (panel, report) = ingest_panel(vec![r]);
        assert_eq!(panel.len(), 1);
        assert!(!panel.is_usable(0));
        assert_eq!(report.flagged.len(), 1);
    }

    #[test]
    fn csv_round_trip_and_malformed_rows() {
        let recs = vec![record("a", 2000), record("a", 2001)];
        let mut buf = Vec::new();
        write_panel_csv(&recs, &mut buf).unwrap();
        let mut text = String::from_utf8(buf).unwrap();
        text.push_str("a,2002,abc,1,2,3,4,5,6,7,8,9,10\n");
        text.push_str("b,2002,10,1,,3,4,5,6,7,8,9,10\n");
        let (panel, report) = read_panel_csv(text.as_bytes()).unwrap();
        assert_eq!(panel.len(), 3);
        assert_eq!(&panel.records()[..2], &recs[..]);
        assert_eq!(panel.records()[2].market_equity, None);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].line, Some(4));
        assert!(report.rejected[0].reason.contains("`at`"));
    }

    #[test]
    fn missing_header_column_is_an_error() {
        assert!(read_panel_csv("firm_id,fyear\n".as_bytes()).is_err());
    }
}
