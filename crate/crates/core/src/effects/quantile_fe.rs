use super::within_transform;
use crate::error::{check_theta, Error, Result};
use crate::groups::Groups;
use crate::linalg::rank_check;
use crate::quantile::problem::{GroupColumns, Problem};
use crate::quantile::{
    bootstrap_with, check_loss, intercept_only_objective, loss_ratio_r2, sign_counts, solve_problem, BootstrapOptions,
    BootstrapResult, DesignMatrix, QuantileFit, SolverOptions, INTERCEPT,
};

pub const DEFAULT_MAX_GROUPS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeMode {
    /// one indicator column per group, no common intercept
    Indicators { max_groups: usize },
    /// common intercept plus group effects shrunk by `λ Σ|a_g|`
    Penalized { lambda: f64 },
}

impl Default for FeMode {
    fn default() -> Self {
        FeMode::Indicators {
            max_groups: DEFAULT_MAX_GROUPS,
        }
    }
}

fn row_major(names: &[String], cols: &[Vec<f64>], n: usize) -> Vec<f64> {
    let p = names.len();
    let mut z = vec![0.0; n * p];
    for (j, c) in cols.iter().enumerate() {
        for i in 0..n {
            z[i * p + j] = c[i];
        }
    }
    z
}

/// Quantile regression with per-group intercepts.
pub fn fit_quantile_fixed_effects(
    design: &DesignMatrix,
    groups: &Groups,
    theta: f64,
    mode: FeMode,
    opts: &SolverOptions,
) -> Result<QuantileFit> {
    check_theta(theta)?;
    let n = design.n();
    if groups.n_rows() != n {
        return Err(Error::InvalidInput(format!(
            "group labels cover {} rows, design has {n}",
            groups.n_rows()
        )));
    }
    let g = groups.len();
    let (slope_names, slope_cols) = design.without_intercept();
    let (names, pb) = match mode {
        FeMode::Indicators { max_groups } => {
            if g > max_groups {
                return Err(Error::TooManyGroups { groups: g, cap: max_groups });
            }
            if groups.sizes().iter().all(|&s| s < 2) {
                return Err(Error::NoWithinVariation);
            }
            rank_check(&slope_names, &within_transform(&slope_cols, groups))?;
            if n < slope_names.len() + g {
                return Err(Error::InsufficientData(format!(
                    "{n} rows for {} slopes and {g} group effects",
                    slope_names.len()
                )));
            }
            let pb = Problem {
                n,
                p: slope_names.len(),
                z: row_major(&slope_names, &slope_cols, n),
                y: design.response().to_vec(),
                groups: Some(GroupColumns {
                    label: groups.index().to_vec(),
                    value: vec![1.0; n],
                    count: g,
                }),
                n_real: n,
            };
            (slope_names, pb)
        }
        FeMode::Penalized { lambda } => {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidInput(format!("penalty {lambda} must be positive and finite")));
            }
            let mut names = vec![INTERCEPT.to_string()];
            names.extend(slope_names);
            let mut cols = vec![vec![1.0; n]];
            cols.extend(slope_cols);
            rank_check(&names, &cols)?;
            let p = names.len();
            // two pseudo-rows per group, ±λ on its effect with zero response:
            // together they add θλ|a| + (1-θ)λ|a| = λ|a_g| to the check loss
            let total = n + 2 * g;
            let mut z = row_major(&names, &cols, n);
            z.resize(total * p, 0.0);
            let mut y = design.response().to_vec();
            y.resize(total, 0.0);
            let mut label = groups.index().to_vec();
            let mut value = vec![1.0; n];
            for gg in 0..g {
                label.extend([gg, gg]);
                value.extend([lambda, -lambda]);
            }
            let pb = Problem {
                n: total,
                p,
                z,
                y,
                groups: Some(GroupColumns { label, value, count: g }),
                n_real: n,
            };
            (names, pb)
        }
    };
    let sol = solve_problem(&pb, theta, opts)?;
    let p = pb.p;
    let residuals = pb.residuals(&sol.beta);
    let (n_neg, n_pos, n_zero) = sign_counts(&pb, &residuals);
    let objective = check_loss(&residuals[..n], theta)?;
    let baseline = intercept_only_objective(design.response(), theta);
    let effects = groups
        .labels()
        .iter()
        .cloned()
        .zip(sol.beta[p..].iter().copied())
        .collect();
    Ok(QuantileFit {
        theta,
        names,
        coefficients: sol.beta[..p].to_vec(),
        std_errors: None,
        objective,
        pseudo_r2: loss_ratio_r2(objective, baseline),
        n_neg,
        n_pos,
        n_zero,
        group_effects: Some(effects),
        solver: sol.meta,
    })
}

/// Bootstrap standard errors of the common coefficients of a fixed-effects
/// quantile fit. With `cluster`, whole clusters are resampled and each draw
/// becomes its own group; otherwise single rows are resampled and keep their
/// original group. `std_errors` holds one entry per common coefficient
/// followed by one for the mean group effect.
pub fn bootstrap_fixed_effects(
    design: &DesignMatrix,
    groups: &Groups,
    theta: f64,
    mode: FeMode,
    boot: &BootstrapOptions,
    cluster: bool,
    opts: &SolverOptions,
) -> Result<BootstrapResult> {
    let cluster_groups = cluster.then_some(groups);
    bootstrap_with(design.n(), cluster_groups, boot, |rows, labels| {
        let sub = design.select_rows(rows);
        let sub_groups = if cluster {
            Groups::from_indices(labels.to_vec())?
        } else {
            let orig: Vec<usize> = rows.iter().map(|&i| groups.index()[i]).collect();
            Groups::from_labels(&orig)
        };
        let mode = match mode {
            FeMode::Indicators { .. } => FeMode::Indicators { max_groups: usize::MAX },
            m => m,
        };
        let fit = fit_quantile_fixed_effects(&sub, &sub_groups, theta, mode, opts)?;
        let mean = fit.mean_group_effect().unwrap_or(0.0);
        let mut out = fit.coefficients;
        out.push(mean);
        Ok(out)
    })
}
