use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::EffectsFit;
use crate::error::{Error, Result};
use crate::linalg::positive_pinv;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HausmanDecision {
    /// H0 rejected: effects correlate with the regressors
    FixedEffects,
    RandomEffects,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HausmanResult {
    /// coefficients compared
    pub names: Vec<String>,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub decision: HausmanDecision,
    /// `V_FE - V_RE` was not positive definite; the statistic uses its
    /// positive eigenspace only and `df` is that rank
    pub rank_deficient: bool,
}

impl HausmanResult {
    /// Decision and p-value for a given statistic against `χ²(df)`.
    pub fn from_statistic(statistic: f64, df: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidInput(format!("significance level {alpha} outside (0, 1)")));
        }
        if !(statistic >= 0.0) {
            return Err(Error::InvalidInput(format!("Hausman statistic {statistic} is negative")));
        }
        let p_value = if df == 0 {
            1.0
        } else {
            ChiSquared::new(df as f64)
                .map_err(|e| Error::InvalidInput(e.to_string()))?
                .sf(statistic)
        };
        Ok(Self {
            names: Vec::new(),
            statistic,
            df,
            p_value,
            alpha,
            decision: if p_value < alpha {
                HausmanDecision::FixedEffects
            } else {
                HausmanDecision::RandomEffects
            },
            rank_deficient: false,
        })
    }
}

/// `H = d' (V_FE - V_RE)^+ d` for a coefficient difference `d`.
pub fn hausman_from_parts(names: Vec<String>, diff: &[f64], vdiff: &DMatrix<f64>, alpha: f64) -> Result<HausmanResult> {
    let k = diff.len();
    if vdiff.nrows() != k || vdiff.ncols() != k {
        return Err(Error::InvalidInput("covariance difference does not match coefficients".into()));
    }
    let (inv, rank, dropped) = positive_pinv(vdiff, 1e-10);
    let d = DVector::from_column_slice(diff);
    let stat = (d.transpose() * inv * &d)[(0, 0)].max(0.0);
    if dropped {
        log::warn!("V_FE - V_RE is not positive definite; using rank {rank} of {k}");
    }
    let mut out = HausmanResult::from_statistic(stat, rank, alpha)?;
    out.names = names;
    out.rank_deficient = dropped;
    Ok(out)
}

/// Compares the slopes the two fits share.
pub fn hausman_test(fe: &EffectsFit, re: &EffectsFit, alpha: f64) -> Result<HausmanResult> {
    let pairs: Vec<(usize, usize)> = fe
        .names
        .iter()
        .enumerate()
        .filter_map(|(i, n)| re.names.iter().position(|m| m == n).map(|j| (i, j)))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidInput("the two fits share no coefficients".into()));
    }
    let k = pairs.len();
    let diff: Vec<f64> = pairs.iter().map(|&(i, j)| fe.coefficients[i] - re.coefficients[j]).collect();
    let vdiff = DMatrix::from_fn(k, k, |a, b| {
        let (fa, ra) = pairs[a];
        let (fb, rb) = pairs[b];
        fe.vcov[(fa, fb)] - re.vcov[(ra, rb)]
    });
    let names = pairs.iter().map(|&(i, _)| fe.names[i].clone()).collect();
    hausman_from_parts(names, &diff, &vdiff, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn large_statistic_rejects() {
        let r = HausmanResult::from_statistic(140.152192, 7, 0.05).unwrap();
        assert!(r.p_value < 1e-6);
        assert_eq!(r.decision, HausmanDecision::FixedEffects);
    }

    #[test]
    fn two_by_two_example() {
        let v = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.5]));
        let r = hausman_from_parts(vec!["a".into(), "b".into()], &[1.0, 1.0], &v, 0.05).unwrap();
        assert!((r.statistic - 4.0).abs() < 1e-12);
        assert_eq!(r.df, 2);
        assert!((r.p_value - (-2.0f64).exp()).abs() < 1e-12);
        assert_eq!(r.decision, HausmanDecision::RandomEffects);
    }

    #[test]
    fn equal_estimates_give_zero() {
        let v = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 0.1]));
        let r = hausman_from_parts(vec!["a".into(), "b".into()], &[0.0, 0.0], &v, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.decision, HausmanDecision::RandomEffects);
    }

    #[test]
    fn indefinite_difference_flagged() {
        let v = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, -0.1]));
        let r = hausman_from_parts(vec!["a".into(), "b".into()], &[1.0, 1.0], &v, 0.05).unwrap();
        assert!(r.rank_deficient);
        assert_eq!(r.df, 1);
        assert!((r.statistic - 2.0).abs() < 1e-12);
    }
}
