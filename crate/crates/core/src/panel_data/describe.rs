use std::collections::BTreeMap;
use std::fmt;

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{Panel, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum YearLabel {
    Year(i32),
    All,
}

impl fmt::Display for YearLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            YearLabel::Year(y) => write!(f, "{y}"),
            YearLabel::All => f.write_str("All"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeansRow {
    pub label: YearLabel,
    pub n_rows: usize,
    /// `None` where the variable is absent in every row
    pub means: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeansTable {
    pub variables: Vec<Variable>,
    pub rows: Vec<MeansRow>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean of each variable per fiscal year, plus an "All" row over the whole
/// panel. Means are taken over the rows where the variable is present.
pub fn yearly_means(panel: &Panel, variables: &[Variable]) -> MeansTable {
    let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (i, r) in panel.observations().iter().enumerate() {
        by_year.entry(r.fiscal_year).or_default().push(i);
    }
    let mut rows: Vec<MeansRow> = by_year
        .iter()
        .map(|(&year, idx)| MeansRow {
            label: YearLabel::Year(year),
            n_rows: idx.len(),
            means: variables
                .iter()
                .map(|&v| mean_of(idx.iter().map(|&i| panel.value(i, v))))
                .collect(),
        })
        .collect();
    let n = panel.observations().len();
    if n > 0 {
        rows.push(MeansRow {
            label: YearLabel::All,
            n_rows: n,
            means: variables
                .iter()
                .map(|&v| mean_of((0..n).map(|i| panel.value(i, v))))
                .collect(),
        });
    }
    MeansTable {
        variables: variables.to_vec(),
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationCell {
    pub r: f64,
    /// two-sided p-value of `r = 0`
    pub p: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub variables: Vec<Variable>,
    /// `None` where fewer than three complete pairs exist or a variance is zero
    pub cells: Vec<Vec<Option<CorrelationCell>>>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: usize, b: usize) -> Option<CorrelationCell> {
        self.cells[a][b]
    }
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub(crate) fn correlation_p_value(r: f64, n: usize) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    match StudentsT::new(0.0, 1.0, df) {
        Ok(dist) => (2.0 * dist.sf(t.abs())).min(1.0),
        Err(_) => f64::NAN,
    }
}

/// Pearson correlations on pairwise-complete rows.
pub fn correlation_matrix(panel: &Panel, variables: &[Variable]) -> CorrelationMatrix {
    let n = panel.observations().len();
    let columns: Vec<Vec<Option<f64>>> = variables
        .iter()
        .map(|&v| (0..n).map(|i| panel.value(i, v)).collect())
        .collect();
    let k = variables.len();
    let mut cells = vec![vec![None; k]; k];
    for a in 0..k {
        for b in a..k {
            let (xs, ys): (Vec<f64>, Vec<f64>) = columns[a]
                .iter()
                .zip(&columns[b])
                .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
                .unzip();
            if xs.len() < 3 {
                continue;
            }
            let cell = if a == b {
                pearson(&xs, &ys).map(|_| CorrelationCell {
                    r: 1.0,
                    p: 0.0,
                    n: xs.len(),
                })
            } else {
                pearson(&xs, &ys).map(|r| CorrelationCell {
                    r,
                    p: correlation_p_value(r, xs.len()),
                    n: xs.len(),
                })
            };
            cells[a][b] = cell;
            cells[b][a] = cell;
        }
    }
    CorrelationMatrix {
        variables: variables.to_vec(),
        cells,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_anticorrelation() {
        let r = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        assert_eq!(correlation_p_value(-1.0, 3), 0.0);
        assert!(correlation_p_value(r, 3) < 1e-6);
    }

    #[test]
    fn zero_variance_undefined() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[3.0, 2.0, 1.0]), None);
    }

    #[test]
    fn p_value_matches_t_table() {
        // r = 0.5, n = 12: t = 0.5·√(10/0.75) = 1.8257, two-sided p ≈ 0.0979
        let p = correlation_p_value(0.5, 12);
        assert!((p - 0.0979).abs() < 5e-4, "{p}");
    }
}
