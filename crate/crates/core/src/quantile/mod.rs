//! Linear quantile regression by exact check-loss minimization.
//!
//! The production path runs a Frisch-Newton interior point method (or, if
//! that breaks down numerically, smoothed IRLS) and then walks to an exact
//! optimal vertex, so every returned fit satisfies the subgradient
//! conditions up to floating-point round-off.

mod bootstrap;
mod design;
mod ipm;
mod irls;
pub mod oracle;
pub(crate) mod problem;
mod vertex;

pub use bootstrap::{bootstrap_se, bootstrap_with, BootstrapOptions, BootstrapResult};
pub use design::{DesignMatrix, INTERCEPT};
pub use oracle::{enumerate_vertices, fit_quantile_oracle, OracleSolution};

use crate::error::{check_theta, Error, Result};
use crate::linalg::rank_check;
use problem::Problem;

/// The five quantiles reported in the coefficient and speed tables.
pub const TABLE_THETAS: [f64; 5] = [0.15, 0.35, 0.5, 0.75, 0.95];

/// Asymmetric absolute loss: positive residuals weigh `θ`, negative ones
/// `1 - θ`.
pub fn check_loss(residuals: &[f64], theta: f64) -> Result<f64> {
    check_theta(theta)?;
    Ok(residuals.iter().map(|&r| rho(r, theta)).sum())
}

#[inline]
pub(crate) fn rho(r: f64, theta: f64) -> f64 {
    if r >= 0.0 {
        theta * r
    } else {
        (theta - 1.0) * r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    InteriorPoint,
    SmoothedIrls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub algorithm: Algorithm,
    /// relative duality-gap tolerance of the interior point phase
    pub tolerance: f64,
    pub max_iterations: usize,
    /// cap on exact vertex pivots after the interior phase
    pub max_pivots: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::InteriorPoint,
            tolerance: 1e-9,
            max_iterations: 500,
            max_pivots: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverMeta {
    pub algorithm: Algorithm,
    pub iterations: usize,
    pub pivots: usize,
    pub duality_gap: f64,
    pub converged: bool,
    /// the interior point phase failed and IRLS supplied the start
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFit {
    pub theta: f64,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Option<Vec<f64>>,
    /// check loss of the observation residuals
    pub objective: f64,
    pub pseudo_r2: f64,
    pub n_neg: usize,
    pub n_pos: usize,
    pub n_zero: usize,
    /// per-group intercepts when fitted with fixed effects
    pub group_effects: Option<Vec<(String, f64)>>,
    pub solver: SolverMeta,
}

impl QuantileFit {
    pub fn n(&self) -> usize {
        self.n_neg + self.n_pos + self.n_zero
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.coefficients[j])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        let j = self.names.iter().position(|n| n == name)?;
        self.std_errors.as_ref().map(|se| se[j])
    }

    /// `n_neg ≤ nθ` and `n_pos ≤ n(1-θ)`.
    pub fn satisfies_subgradient(&self) -> bool {
        let n = self.n() as f64;
        let slack = 1e-9 * n.max(1.0);
        (self.n_neg as f64) <= n * self.theta + slack && (self.n_pos as f64) <= n * (1.0 - self.theta) + slack
    }

    /// Mean of the fitted group effects.
    pub fn mean_group_effect(&self) -> Option<f64> {
        let ge = self.group_effects.as_ref()?;
        if ge.is_empty() {
            return None;
        }
        Some(ge.iter().map(|(_, v)| v).sum::<f64>() / ge.len() as f64)
    }
}

pub(crate) struct RawSolution {
    pub beta: Vec<f64>,
    pub meta: SolverMeta,
}

pub(crate) fn solve_problem(pb: &Problem, theta: f64, opts: &SolverOptions) -> Result<RawSolution> {
    let mut meta = SolverMeta {
        algorithm: opts.algorithm,
        iterations: 0,
        pivots: 0,
        duality_gap: f64::NAN,
        converged: false,
        fell_back: false,
    };
    let ipm_start = match opts.algorithm {
        Algorithm::InteriorPoint => ipm::solve(pb, theta, opts.tolerance, opts.max_iterations),
        Algorithm::SmoothedIrls => None,
    };
    let start = match ipm_start {
        Some(out) if out.beta.iter().all(|v| v.is_finite()) => {
            meta.iterations = out.iterations;
            meta.duality_gap = out.gap;
            if !out.converged {
                log::debug!("interior point stopped at gap {:.3e} after {} iterations", out.gap, out.iterations);
            }
            out.beta
        }
        _ => {
            if opts.algorithm == Algorithm::InteriorPoint {
                meta.fell_back = true;
                log::debug!("interior point broke down, falling back to smoothed IRLS");
            }
            meta.algorithm = Algorithm::SmoothedIrls;
            meta.iterations = opts.max_iterations.min(200);
            irls::solve(pb, theta, meta.iterations)
                .ok_or_else(|| Error::InvalidDesign("singular normal equations".into()))?
        }
    };
    let outcome = vertex::descend(pb, theta, &start, opts.max_pivots)
        .ok_or_else(|| Error::InvalidDesign("no nonsingular interpolating basis".into()))?;
    meta.pivots = outcome.pivots;
    meta.converged = outcome.optimal;
    if !outcome.optimal {
        let r = pb.residuals(&outcome.beta);
        return Err(Error::NoConvergence {
            iterations: meta.iterations + outcome.pivots,
            objective: r.iter().map(|&v| rho(v, theta)).sum(),
            gap: f64::NAN,
            best: outcome.beta,
        });
    }
    meta.duality_gap = 0.0;
    Ok(RawSolution {
        beta: outcome.beta,
        meta,
    })
}

/// Residual sign counts over the observation rows.
pub(crate) fn sign_counts(pb: &Problem, residuals: &[f64]) -> (usize, usize, usize) {
    let tol = vertex::zero_tolerance(pb);
    let mut out = (0, 0, 0);
    for &r in &residuals[pb.real_rows()] {
        if r < -tol {
            out.0 += 1;
        } else if r > tol {
            out.1 += 1;
        } else {
            out.2 += 1;
        }
    }
    out
}

/// Check loss of the best constant: any `θ`-quantile of `y`.
pub(crate) fn intercept_only_objective(y: &[f64], theta: f64) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    let idx = ((n as f64 * theta).ceil() as usize).clamp(1, n) - 1;
    let c = sorted[idx];
    y.iter().map(|&v| rho(v - c, theta)).sum()
}

pub(crate) fn loss_ratio_r2(objective: f64, baseline: f64) -> f64 {
    if baseline <= 0.0 {
        return 0.0;
    }
    (1.0 - objective / baseline).clamp(0.0, 1.0)
}

/// Fits the conditional `θ`-quantile of the response.
pub fn fit_quantile(design: &DesignMatrix, theta: f64, opts: &SolverOptions) -> Result<QuantileFit> {
    check_theta(theta)?;
    rank_check(design.names(), design.columns())?;
    let pb = Problem::dense(design.row_major(), design.k(), design.response().to_vec());
    let sol = solve_problem(&pb, theta, opts)?;
    let residuals = design.residuals(&sol.beta);
    let (n_neg, n_pos, n_zero) = sign_counts(&pb, &residuals);
    let objective = check_loss(&residuals, theta)?;
    let baseline = intercept_only_objective(design.response(), theta);
    Ok(QuantileFit {
        theta,
        names: design.names().to_vec(),
        coefficients: sol.beta,
        std_errors: None,
        objective,
        pseudo_r2: loss_ratio_r2(objective, baseline),
        n_neg,
        n_pos,
        n_zero,
        group_effects: None,
        solver: sol.meta,
    })
}

/// Koenker-Machado goodness of fit: one minus the ratio of the fit's check
/// loss to that of the intercept-only fit at the same quantile.
pub fn pseudo_r2(fit: &QuantileFit, design: &DesignMatrix, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let baseline = intercept_only_objective(design.response(), theta);
    Ok(loss_ratio_r2(fit.objective, baseline))
}
