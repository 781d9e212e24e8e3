use nalgebra::{DMatrix, DVector};

use super::within_transform;
use crate::error::{Error, Result};
use crate::groups::Groups;
use crate::linalg::{mean, ols, rank_check};
use crate::quantile::{DesignMatrix, INTERCEPT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EffectsKind {
    FixedWithin,
    RandomGls,
    PooledOls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectsFit {
    pub kind: EffectsKind,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub vcov: DMatrix<f64>,
    /// `a_i` per group, observation-weighted mean zero (fixed effects only)
    pub group_effects: Option<Vec<(String, f64)>>,
    /// overall constant; for fixed effects `ȳ - x̄'β`
    pub intercept: Option<f64>,
    pub sigma_u: Option<f64>,
    pub sigma_e: Option<f64>,
    /// the between-group variance estimate was negative and set to zero
    pub sigma_u_clamped: bool,
    pub n: usize,
    pub n_groups: usize,
}

impl EffectsFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.coefficients[j])
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|j| self.vcov[(j, j)].max(0.0).sqrt()).collect()
    }
}

fn to_matrix(columns: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i])
}

fn slope_columns(design: &DesignMatrix) -> (Vec<String>, Vec<Vec<f64>>) {
    design.without_intercept()
}

fn check_groups(design: &DesignMatrix, groups: &Groups) -> Result<()> {
    if groups.n_rows() != design.n() {
        return Err(Error::InvalidInput(format!(
            "group labels cover {} rows, design has {}",
            groups.n_rows(),
            design.n()
        )));
    }
    Ok(())
}

/// Within (demeaned) least squares. The intercept column of `design`, if
/// any, is dropped; its role is taken by the group effects.
pub fn fit_fixed_effects(design: &DesignMatrix, groups: &Groups) -> Result<EffectsFit> {
    check_groups(design, groups)?;
    let n = design.n();
    let g = groups.len();
    if groups.sizes().iter().all(|&s| s < 2) {
        return Err(Error::NoWithinVariation);
    }
    let (names, cols) = slope_columns(design);
    let k = names.len();
    if k == 0 {
        return Err(Error::InvalidDesign("fixed effects need at least one slope regressor".into()));
    }
    let demeaned = within_transform(&cols, groups);
    rank_check(&names, &demeaned)?;
    let y_dm = within_transform(&[design.response().to_vec()], groups).remove(0);
    let (beta, xtx_inv) = ols(&to_matrix(&demeaned, n), &DVector::from_vec(y_dm.clone()))
        .ok_or_else(|| Error::InvalidDesign("within design is singular".into()))?;
    let dof = n as isize - k as isize - g as isize;
    if dof <= 0 {
        return Err(Error::InsufficientData(format!(
            "{n} rows leave no residual degrees of freedom for {k} slopes and {g} groups"
        )));
    }
    let rss: f64 = (0..n)
        .map(|i| {
            let fit: f64 = (0..k).map(|j| demeaned[j][i] * beta[j]).sum();
            (y_dm[i] - fit).powi(2)
        })
        .sum();
    let s2 = rss / dof as f64;

    let y = design.response();
    let xbar: Vec<f64> = cols.iter().map(|c| mean(c)).collect();
    let intercept = mean(y) - xbar.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>();
    let members = groups.members();
    let effects = members
        .iter()
        .zip(groups.labels())
        .map(|(rows, label)| {
            let m = rows.len() as f64;
            let resid: f64 = rows
                .iter()
                .map(|&i| y[i] - (0..k).map(|j| cols[j][i] * beta[j]).sum::<f64>())
                .sum::<f64>()
                / m;
            (label.clone(), resid - intercept)
        })
        .collect();

    Ok(EffectsFit {
        kind: EffectsKind::FixedWithin,
        names,
        coefficients: beta.iter().copied().collect(),
        vcov: xtx_inv * s2,
        group_effects: Some(effects),
        intercept: Some(intercept),
        sigma_u: None,
        sigma_e: Some(s2.sqrt()),
        sigma_u_clamped: false,
        n,
        n_groups: g,
    })
}

fn with_constant(design: &DesignMatrix) -> (Vec<String>, Vec<Vec<f64>>) {
    let (mut names, mut cols) = slope_columns(design);
    names.insert(0, INTERCEPT.to_string());
    cols.insert(0, vec![1.0; design.n()]);
    (names, cols)
}

/// Least squares on the stacked data with a constant.
pub fn fit_pooled_ols(design: &DesignMatrix) -> Result<EffectsFit> {
    let n = design.n();
    let (names, cols) = with_constant(design);
    rank_check(&names, &cols)?;
    let k = names.len();
    if n <= k {
        return Err(Error::InsufficientData(format!("{n} rows for {k} coefficients")));
    }
    let x = to_matrix(&cols, n);
    let y = DVector::from_column_slice(design.response());
    let (beta, xtx_inv) = ols(&x, &y).ok_or_else(|| Error::InvalidDesign("pooled design is singular".into()))?;
    let resid = &y - &x * &beta;
    let s2 = resid.norm_squared() / (n - k) as f64;
    Ok(EffectsFit {
        kind: EffectsKind::PooledOls,
        names,
        coefficients: beta.iter().copied().collect(),
        vcov: xtx_inv * s2,
        group_effects: None,
        intercept: Some(beta[0]),
        sigma_u: None,
        sigma_e: Some(s2.sqrt()),
        sigma_u_clamped: false,
        n,
        n_groups: 0,
    })
}

/// Feasible GLS with Swamy-Arora variance components.
///
/// `σ_e²` comes from the within regression, `σ_u² = σ_b² - σ_e²/T̄` from
/// the between regression on group means with `T̄` the harmonic mean group
/// size. Each group is quasi-demeaned by `λ_g = 1 - √(σ_e² / (T_g σ_u² + σ_e²))`.
/// The covariance uses `σ_e²`, the same scale as the within fit, so the
/// slope block of `V_FE - V_RE` is positive semidefinite by construction.
pub fn fit_random_effects(design: &DesignMatrix, groups: &Groups) -> Result<EffectsFit> {
    let fe = fit_fixed_effects(design, groups)?;
    let sigma_e2 = fe.sigma_e.unwrap_or(0.0).powi(2);
    let n = design.n();
    let g = groups.len();
    let (names, cols) = with_constant(design);
    let k = names.len();
    if g <= k {
        return Err(Error::InsufficientData(format!(
            "between regression needs more than {k} groups, have {g}"
        )));
    }
    let members = groups.members();
    let sizes: Vec<f64> = members.iter().map(|m| m.len() as f64).collect();
    let y = design.response();
    let group_mean = |v: &[f64], rows: &[usize]| rows.iter().map(|&i| v[i]).sum::<f64>() / rows.len() as f64;
    let xb = DMatrix::from_fn(g, k, |r, c| group_mean(&cols[c], &members[r]));
    let yb = DVector::from_iterator(g, members.iter().map(|m| group_mean(y, m)));
    let (bb, _) = ols(&xb, &yb).ok_or_else(|| Error::InvalidDesign("between design is singular".into()))?;
    let rss_b = (&yb - &xb * &bb).norm_squared();
    let sigma_b2 = rss_b / (g - k) as f64;
    let t_bar = g as f64 / sizes.iter().map(|t| 1.0 / t).sum::<f64>();
    let mut sigma_u2 = sigma_b2 - sigma_e2 / t_bar;
    let clamped = sigma_u2 < 0.0;
    if clamped {
        sigma_u2 = 0.0;
    }

    let lambda: Vec<f64> = sizes
        .iter()
        .map(|&t| {
            let denom = t * sigma_u2 + sigma_e2;
            if denom <= 0.0 {
                1.0
            } else {
                1.0 - (sigma_e2 / denom).sqrt()
            }
        })
        .collect();
    let gi = groups.index();
    let mut xs = DMatrix::zeros(n, k);
    let mut ys = DVector::zeros(n);
    for i in 0..n {
        let gg = gi[i];
        let l = lambda[gg];
        ys[i] = y[i] - l * yb[gg];
        for c in 0..k {
            xs[(i, c)] = cols[c][i] - l * xb[(gg, c)];
        }
    }
    let (beta, xtx_inv) = ols(&xs, &ys).ok_or_else(|| Error::InvalidDesign("quasi-demeaned design is singular".into()))?;
    Ok(EffectsFit {
        kind: EffectsKind::RandomGls,
        names,
        coefficients: beta.iter().copied().collect(),
        vcov: xtx_inv * sigma_e2,
        group_effects: None,
        intercept: Some(beta[0]),
        sigma_u: Some(sigma_u2.sqrt()),
        sigma_e: Some(sigma_e2.sqrt()),
        sigma_u_clamped: clamped,
        n,
        n_groups: g,
    })
}
