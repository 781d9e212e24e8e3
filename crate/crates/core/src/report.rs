//! Text and delimited renderings of the descriptive, Hausman, quantile and
//! speed tables.
//!
//! Text tables use the published layouts. Delimited output is CSV in long
//! form with shortest round-trip floats, so it carries full precision.
//! Missing cells are always written as `NA`.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::adjustment::{AdjustmentResult, EstimationForm, Leverage};
use crate::effects::{HausmanDecision, HausmanResult};
use crate::error::{Error, Result};
use crate::panel_data::{CorrelationMatrix, MeansTable, Regime, Variable};
use crate::quantile::QuantileFit;

pub const MISSING: &str = "NA";

/// Table number format: scientific with two mantissa decimals when
/// `0 < |v| < 1e-3` (`-1.38E-05`), four fixed decimals otherwise.
pub fn format_number(v: Option<f64>) -> String {
    match v {
        None => MISSING.into(),
        Some(v) if !v.is_finite() => MISSING.into(),
        Some(v) if v != 0.0 && v.abs() < 1e-3 => {
            let s = format!("{v:.2E}");
            let (mantissa, exp) = s.split_once('E').expect("exponent marker");
            let exp: i32 = exp.parse().expect("integer exponent");
            let sign = if exp < 0 { '-' } else { '+' };
            format!("{mantissa}E{sign}{:02}", exp.abs())
        }
        Some(v) => format!("{v:.4}"),
    }
}

pub fn format_percent(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => format!("{:.1}%", 100.0 * v),
        _ => MISSING.into(),
    }
}

/// Full-precision cell for delimited output: shortest round-trip digits,
/// in exponent form for very small or very large magnitudes.
pub fn raw(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() && v != 0.0 && !(1e-4..1e15).contains(&v.abs()) => format!("{v:e}"),
        Some(v) if v.is_finite() => format!("{v}"),
        _ => MISSING.into(),
    }
}

fn theta_label(theta: f64) -> String {
    format!("{theta}")
}

/// Two-sided normal p-value of `estimate / se`.
pub fn wald_p_value(estimate: f64, se: f64) -> Option<f64> {
    if !(se > 0.0 && se.is_finite() && estimate.is_finite()) {
        return None;
    }
    let z = (estimate / se).abs();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Some(2.0 * normal.sf(z))
}

pub fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.01 => "***",
        Some(p) if p < 0.05 => "**",
        Some(p) if p < 0.10 => "*",
        _ => "",
    }
}

/// Aligned plain-text grid: first column left-aligned, the rest right.
fn grid(header: &[String], rows: &[Vec<String>]) -> String {
    let ncol = header.len();
    let mut width = vec![0usize; ncol];
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(header).chain(rows.iter().map(Vec::as_slice)) {
        let mut line = String::new();
        for (j, cell) in row.iter().enumerate() {
            let pad = width[j] - cell.chars().count();
            if j == 0 {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str("  ");
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn csv_string(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

// yearly means

pub fn means_text(table: &MeansTable) -> String {
    let mut header = vec!["YEAR".to_string()];
    header.extend(table.variables.iter().map(|v| v.label().to_string()));
    header.push("N".into());
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut cells = vec![r.label.to_string()];
            cells.extend(r.means.iter().map(|m| format_number(*m)));
            cells.push(r.n_rows.to_string());
            cells
        })
        .collect();
    format!("Mean variables by fiscal year\n\n{}", grid(&header, &rows))
}

pub fn means_delimited(table: &MeansTable) -> Result<String> {
    let mut rows = Vec::new();
    for r in &table.rows {
        for (v, m) in table.variables.iter().zip(&r.means) {
            rows.push(vec![r.label.to_string(), v.name().to_string(), raw(*m), r.n_rows.to_string()]);
        }
    }
    csv_string(&["year", "variable", "mean", "n_rows"], &rows)
}

// correlations

/// Full symmetric matrix; each cell is `r p` and the diagonal p is `----`.
pub fn correlation_text(m: &CorrelationMatrix) -> String {
    let mut header = vec!["Correlation Probability".to_string()];
    header.extend(m.variables.iter().map(|v| v.label().to_string()));
    let rows: Vec<Vec<String>> = m
        .variables
        .iter()
        .enumerate()
        .map(|(a, va)| {
            let mut cells = vec![va.label().to_string()];
            for b in 0..m.variables.len() {
                cells.push(match m.get(a, b) {
                    Some(c) if a == b => format!("{:.6} ----", c.r),
                    Some(c) => format!("{:.6} {:.4}", c.r, c.p),
                    None => MISSING.into(),
                });
            }
            cells
        })
        .collect();
    format!("Pearson correlations (pairwise complete)\n\n{}", grid(&header, &rows))
}

pub fn correlation_delimited(m: &CorrelationMatrix) -> Result<String> {
    let mut rows = Vec::new();
    for (a, va) in m.variables.iter().enumerate() {
        for (b, vb) in m.variables.iter().enumerate() {
            let c = m.get(a, b);
            rows.push(vec![
                va.name().to_string(),
                vb.name().to_string(),
                raw(c.map(|c| c.r)),
                raw(c.map(|c| c.p)),
                c.map_or(MISSING.into(), |c| c.n.to_string()),
            ]);
        }
    }
    csv_string(&["var_a", "var_b", "r", "p_value", "n"], &rows)
}

// Hausman

pub fn hausman_text(equation: &str, h: &HausmanResult) -> String {
    let header: Vec<String> = ["Test Summary", "Chi-Sq. Statistic", "Chi-Sq. d.f.", "Prob."]
        .map(String::from)
        .to_vec();
    let row = vec![
        "Cross-section random".to_string(),
        format!("{:.6}", h.statistic),
        h.df.to_string(),
        format!("{:.4}", h.p_value),
    ];
    let decision = match h.decision {
        HausmanDecision::FixedEffects => format!(
            "Prob. < {}: reject H0; the fixed effects model is selected.",
            h.alpha
        ),
        HausmanDecision::RandomEffects => format!(
            "Prob. >= {}: H0 not rejected; the random effects model is selected.",
            h.alpha
        ),
    };
    let mut out = format!(
        "Correlated Random Effects - Hausman Test\nEquation: {equation}\nTest cross-section random effects\n\n{}\n\
         H0: Random effects model is appropriate\nH1: Fixed effects model is appropriate\n\n{decision}\n",
        grid(&header, &[row])
    );
    if h.rank_deficient {
        out.push_str(&format!(
            "Note: variance difference not positive definite; generalized inverse on rank {}.\n",
            h.df
        ));
    }
    out
}

pub fn hausman_delimited(equation: &str, h: &HausmanResult) -> Result<String> {
    let decision = match h.decision {
        HausmanDecision::FixedEffects => "fixed_effects",
        HausmanDecision::RandomEffects => "random_effects",
    };
    csv_string(
        &["equation", "statistic", "df", "p_value", "alpha", "decision", "rank_deficient"],
        &[vec![
            equation.to_string(),
            raw(Some(h.statistic)),
            h.df.to_string(),
            raw(Some(h.p_value)),
            raw(Some(h.alpha)),
            decision.into(),
            h.rank_deficient.to_string(),
        ]],
    )
}

// Tables 3-4

/// Row label for a coefficient name in the quantile tables.
fn term_label(name: &str) -> String {
    Variable::parse(name).map_or_else(|| name.to_ascii_uppercase(), |v| v.label().to_string())
}

/// One estimated column of a coefficient table. `mean_effect_se` is the
/// bootstrap spread of the mean group effect, when available.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileColumn {
    pub fit: QuantileFit,
    pub mean_effect_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    pub title: String,
    pub thetas: Vec<f64>,
    /// `None` where the fit at that quantile failed
    pub columns: Vec<Option<QuantileColumn>>,
}

impl QuantileTable {
    /// Terms in first-seen order across the columns.
    pub fn terms(&self) -> Vec<String> {
        let mut terms: Vec<String> = Vec::new();
        for c in self.columns.iter().flatten() {
            for n in &c.fit.names {
                if !terms.contains(n) {
                    terms.push(n.clone());
                }
            }
        }
        terms
    }

    fn cell(&self, j: usize, term: &str) -> (Option<f64>, Option<f64>) {
        match &self.columns[j] {
            Some(c) => (c.fit.coefficient(term), c.fit.std_error(term)),
            None => (None, None),
        }
    }

    fn fixed_effects(&self, j: usize) -> (Option<f64>, Option<f64>) {
        match &self.columns[j] {
            Some(c) => (c.fit.mean_group_effect(), c.mean_effect_se),
            None => (None, None),
        }
    }

    fn has_fixed_effects(&self) -> bool {
        self.columns.iter().flatten().any(|c| c.fit.group_effects.is_some())
    }

    /// Coefficient / `sterrors` row pairs, a FIXED_EFFECTS pair when the
    /// fits carry group effects, then `R-squared`.
    pub fn text(&self) -> String {
        let mut header = vec![String::new()];
        header.extend(self.thetas.iter().map(|t| theta_label(*t)));
        let mut rows = Vec::new();
        let mut pair = |label: String, cells: Vec<(Option<f64>, Option<f64>)>| {
            let mut est = vec![label];
            let mut se = vec!["sterrors".to_string()];
            for (b, s) in cells {
                let p = b.zip(s).and_then(|(b, s)| wald_p_value(b, s));
                est.push(format!("{}{}", format_number(b), stars(p)));
                se.push(format_number(s));
            }
            rows.push(est);
            rows.push(se);
        };
        for term in self.terms() {
            let cells = (0..self.thetas.len()).map(|j| self.cell(j, &term)).collect();
            pair(term_label(&term), cells);
        }
        if self.has_fixed_effects() {
            let cells = (0..self.thetas.len()).map(|j| self.fixed_effects(j)).collect();
            pair("FIXED_EFFECTS".into(), cells);
        }
        let mut r2 = vec!["R-squared".to_string()];
        r2.extend(
            self.columns
                .iter()
                .map(|c| format_percent(c.as_ref().map(|c| c.fit.pseudo_r2))),
        );
        rows.push(r2);
        format!(
            "{}\tQUANTILES\n{}\nR-squared: pseudo-R1 (check loss against the intercept-only fit).\n\
             FIXED_EFFECTS: mean of the fitted firm effects.\n\
             Stars: *** p<0.01, ** p<0.05, * p<0.10 (bootstrap standard errors).\n",
            self.title,
            grid(&header, &rows)
        )
    }

    pub fn delimited(&self) -> Result<String> {
        let mut rows = Vec::new();
        let terms = self.terms();
        for (j, &theta) in self.thetas.iter().enumerate() {
            let mut push = |term: &str, (b, s): (Option<f64>, Option<f64>)| {
                let p = b.zip(s).and_then(|(b, s)| wald_p_value(b, s));
                rows.push(vec![
                    self.title.clone(),
                    theta_label(theta),
                    term.to_string(),
                    raw(b),
                    raw(s),
                    raw(p),
                ]);
            };
            for t in &terms {
                push(t, self.cell(j, t));
            }
            if self.has_fixed_effects() {
                push("fixed_effects_mean", self.fixed_effects(j));
            }
            let r2 = self.columns[j].as_ref().map(|c| c.fit.pseudo_r2);
            push("pseudo_r2", (r2, None));
            let n = self.columns[j].as_ref().map(|c| c.fit.n() as f64);
            push("n", (n, None));
        }
        csv_string(&["table", "theta", "term", "estimate", "std_error", "p_value"], &rows)
    }
}

// speed of adjustment

/// Speed results for one sample (all years or one regime).
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedTable {
    pub title: String,
    pub thetas: Vec<f64>,
    /// per leverage kind, results aligned with `thetas` (`None` if skipped)
    pub rows: Vec<(Leverage, Vec<Option<AdjustmentResult>>)>,
}

impl SpeedTable {
    /// Aligns results to `thetas`. Results at other quantiles are ignored.
    pub fn new(title: impl Into<String>, thetas: &[f64], results: Vec<(Leverage, Vec<AdjustmentResult>)>) -> Self {
        let rows = results
            .into_iter()
            .map(|(lev, rs)| {
                let aligned = thetas
                    .iter()
                    .map(|t| rs.iter().find(|r| r.theta == *t).cloned())
                    .collect();
                (lev, aligned)
            })
            .collect();
        Self {
            title: title.into(),
            thetas: thetas.to_vec(),
            rows,
        }
    }

    /// `SPEED <KIND>` / `R-squared` row pair per leverage kind, as
    /// percentages with one decimal. Out-of-range speeds carry a `!`.
    pub fn text(&self) -> String {
        let mut header = vec![String::new()];
        header.extend(self.thetas.iter().map(|t| theta_label(*t)));
        let mut rows = Vec::new();
        let mut flagged = false;
        for (lev, rs) in &self.rows {
            let mut speed = vec![format!("SPEED {}", lev.label())];
            let mut r2 = vec!["R-squared".to_string()];
            for r in rs {
                let mark = if r.as_ref().is_some_and(|r| r.out_of_range) {
                    flagged = true;
                    "!"
                } else {
                    ""
                };
                speed.push(format!("{}{mark}", format_percent(r.as_ref().map(|r| r.speed))));
                r2.push(format_percent(r.as_ref().map(|r| r.pseudo_r2)));
            }
            rows.push(speed);
            rows.push(r2);
        }
        let mut out = format!(
            "{}\tQUANTILES\n{}\nSPEED: 1 - coefficient on lagged leverage. R-squared: pseudo-R1 of the adjustment regression.\n",
            self.title,
            grid(&header, &rows)
        );
        if flagged {
            out.push_str("!: lag coefficient outside [0, 1].\n");
        }
        out
    }

    pub fn delimited(&self) -> Result<String> {
        let mut rows = Vec::new();
        for (lev, rs) in &self.rows {
            for (theta, r) in self.thetas.iter().zip(rs) {
                let regime = r
                    .as_ref()
                    .and_then(|r| r.regime)
                    .map_or("all".to_string(), |g: Regime| g.label().to_string());
                rows.push(vec![
                    self.title.clone(),
                    lev.label().to_string(),
                    regime,
                    theta_label(*theta),
                    raw(r.as_ref().map(|r| r.lag_coefficient)),
                    raw(r.as_ref().map(|r| r.speed)),
                    raw(r.as_ref().map(|r| r.pseudo_r2)),
                    r.as_ref().map_or(MISSING.into(), |r| r.n_used.to_string()),
                    r.as_ref().map_or(MISSING.into(), |r| r.out_of_range.to_string()),
                    r.as_ref().map_or(MISSING.into(), |r| match r.form {
                        EstimationForm::OneStep => "one-step".into(),
                        EstimationForm::TwoStep => "two-step".into(),
                    }),
                ]);
            }
        }
        csv_string(
            &[
                "table",
                "leverage",
                "regime",
                "theta",
                "lag_coefficient",
                "speed",
                "pseudo_r2",
                "n_used",
                "out_of_range",
                "form",
            ],
            &rows,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_follows_tables() {
        assert_eq!(format_number(Some(-1.38e-5)), "-1.38E-05");
        assert_eq!(format_number(Some(4.53e-5)), "4.53E-05");
        assert_eq!(format_number(Some(8.09e-9)), "8.09E-09");
        assert_eq!(format_number(Some(0.0013)), "0.0013");
        assert_eq!(format_number(Some(-0.0083)), "-0.0083");
        assert_eq!(format_number(Some(0.0)), "0.0000");
        assert_eq!(format_number(Some(-3945.04)), "-3945.0400");
        assert_eq!(format_number(None), "NA");
        assert_eq!(format_number(Some(f64::NAN)), "NA");
        assert_eq!(format_percent(Some(0.446)), "44.6%");
        assert_eq!(format_percent(None), "NA");
    }

    #[test]
    fn raw_cells_round_trip() {
        for v in [0.1 + 0.2, 1.1412294971569251e-55, -3945.04, 1e20, 0.0, 5e-5] {
            assert_eq!(raw(Some(v)).parse::<f64>().unwrap(), v);
        }
        assert_eq!(raw(Some(1.1412294971569251e-55)), "1.1412294971569251e-55");
        assert_eq!(raw(None), "NA");
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(Some(0.005)), "***");
        assert_eq!(stars(Some(0.03)), "**");
        assert_eq!(stars(Some(0.07)), "*");
        assert_eq!(stars(Some(0.2)), "");
        assert_eq!(stars(None), "");
        let p = wald_p_value(1.96, 1.0).unwrap();
        assert!((p - 0.05).abs() < 1e-3);
        assert_eq!(wald_p_value(1.0, 0.0), None);
    }

    #[test]
    fn hausman_table_shape() {
        let h = HausmanResult::from_statistic(140.152192, 7, 0.05).unwrap();
        let text = hausman_text("LEVB", &h);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[4].starts_with("Test Summary"));
        assert!(lines[4].contains("Chi-Sq. Statistic") && lines[4].contains("Chi-Sq. d.f.") && lines[4].ends_with("Prob."));
        assert!(lines[5].contains("140.152192") && lines[5].contains(" 7 ") && lines[5].ends_with("0.0000"));
        assert!(text.contains("H0: Random effects"));
        assert!(text.contains("fixed effects model is selected"));
    }
}
