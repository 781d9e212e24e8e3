//! Pairs bootstrap, optionally resampling whole clusters.

use rand::Rng;
use rayon::prelude::*;

use super::{fit_quantile, DesignMatrix, SolverOptions};
use crate::error::{Error, Result};
use crate::groups::Groups;
use crate::seed::{rng_for, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOptions {
    pub replications: usize,
    pub seed: u64,
    /// redraws allowed for one replicate before it counts as lost
    pub max_redraws: usize,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            replications: 200,
            seed: 0,
            max_redraws: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub std_errors: Vec<f64>,
    pub replications: usize,
    /// resamples discarded as rank-deficient and redrawn
    pub degenerate: usize,
}

fn is_degenerate(e: &Error) -> bool {
    matches!(
        e,
        Error::RankDeficient { .. } | Error::InvalidDesign(_) | Error::NoConvergence { .. } | Error::NoWithinVariation
    )
}

fn draw(n_rows: usize, clusters: Option<&[Vec<usize>]>, rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    match clusters {
        None => {
            let rows: Vec<usize> = (0..n_rows).map(|_| rng.random_range(0..n_rows)).collect();
            let labels = (0..n_rows).collect();
            (rows, labels)
        }
        Some(members) => {
            let g = members.len();
            let mut rows = Vec::with_capacity(n_rows);
            let mut labels = Vec::with_capacity(n_rows);
            for slot in 0..g {
                let pick = rng.random_range(0..g);
                for &i in &members[pick] {
                    rows.push(i);
                    labels.push(slot);
                }
            }
            (rows, labels)
        }
    }
}

/// Generic resampling driver. `fit` receives the drawn row indices and, for
/// each drawn row, the index of the cluster draw it came from (fresh labels
/// so a cluster drawn twice acts as two clusters).
///
/// Replicate `b` uses a seed derived from `(seed, b, redraw)`, so the
/// output does not depend on thread scheduling.
pub fn bootstrap_with<F>(n_rows: usize, cluster: Option<&Groups>, opts: &BootstrapOptions, fit: F) -> Result<BootstrapResult>
where
    F: Fn(&[usize], &[usize]) -> Result<Vec<f64>> + Sync,
{
    if opts.replications < 2 {
        return Err(Error::InvalidInput("bootstrap needs at least 2 replications".into()));
    }
    if let Some(c) = cluster {
        if c.n_rows() != n_rows {
            return Err(Error::InvalidInput(format!(
                "cluster labels cover {} rows, design has {n_rows}",
                c.n_rows()
            )));
        }
    }
    let members = cluster.map(|c| c.members());
    let outcomes: Vec<Result<(Option<Vec<f64>>, usize)>> = (0..opts.replications)
        .into_par_iter()
        .map(|b| {
            let mut degenerate = 0;
            for redraw in 0..=opts.max_redraws {
                let index = (b as u64) << 16 | redraw as u64;
                let mut rng = rng_for(opts.seed, streams::BOOTSTRAP, index);
                let (rows, labels) = draw(n_rows, members.as_deref(), &mut rng);
                match fit(&rows, &labels) {
                    Ok(beta) => return Ok((Some(beta), degenerate)),
                    Err(e) if is_degenerate(&e) => degenerate += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok((None, degenerate))
        })
        .collect();

    let mut draws = Vec::with_capacity(opts.replications);
    let mut degenerate = 0;
    for o in outcomes {
        let (beta, d) = o?;
        degenerate += d;
        if let Some(beta) = beta {
            draws.push(beta);
        }
    }
    let attempts = degenerate + draws.len();
    if 2 * degenerate > attempts || draws.len() < 2 {
        return Err(Error::BootstrapDegenerate { degenerate, attempts });
    }
    let k = draws[0].len();
    let m = draws.len() as f64;
    let std_errors = (0..k)
        .map(|j| {
            let mean = draws.iter().map(|d| d[j]).sum::<f64>() / m;
            let ss: f64 = draws.iter().map(|d| (d[j] - mean).powi(2)).sum();
            (ss / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(BootstrapResult {
        std_errors,
        replications: draws.len(),
        degenerate,
    })
}

/// Bootstrap standard errors of the quantile regression coefficients.
pub fn bootstrap_se(
    design: &DesignMatrix,
    theta: f64,
    opts: &BootstrapOptions,
    cluster: Option<&Groups>,
    solver: &SolverOptions,
) -> Result<BootstrapResult> {
    bootstrap_with(design.n(), cluster, opts, |rows, _| {
        let sub = design.select_rows(rows);
        Ok(fit_quantile(&sub, theta, solver)?.coefficients)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_response_has_zero_spread() {
        let d = DesignMatrix::intercept_only(vec![4.0; 30]).unwrap();
        let opts = BootstrapOptions {
            replications: 2,
            seed: 1,
            ..Default::default()
        };
        let r = bootstrap_se(&d, 0.5, &opts, None, &SolverOptions::default()).unwrap();
        assert_eq!(r.std_errors, vec![0.0]);
    }

    #[test]
    fn seed_fixes_output() {
        let y: Vec<f64> = (0..40).map(|i| ((i * 7919) % 101) as f64 / 10.0).collect();
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        let d = DesignMatrix::with_intercept(y, vec![("x".into(), x)]).unwrap();
        let opts = BootstrapOptions {
            replications: 25,
            seed: 99,
            ..Default::default()
        };
        let a = bootstrap_se(&d, 0.5, &opts, None, &SolverOptions::default()).unwrap();
        let b = bootstrap_se(&d, 0.5, &opts, None, &SolverOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.std_errors.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn rejects_single_replication_and_bad_clusters() {
        let d = DesignMatrix::intercept_only(vec![1.0, 2.0, 3.0]).unwrap();
        let one = BootstrapOptions {
            replications: 1,
            ..Default::default()
        };
        assert!(bootstrap_se(&d, 0.5, &one, None, &SolverOptions::default()).is_err());
        let g = Groups::from_labels(&[1, 2]);
        assert!(bootstrap_se(&d, 0.5, &BootstrapOptions::default(), Some(&g), &SolverOptions::default()).is_err());
    }

    #[test]
    fn mostly_degenerate_resamples_error_out() {
        // three single-row dummies: all three survive a resample only ~26% of the time
        let n = 30;
        let y: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let spikes = (0..3)
            .map(|s| {
                let mut col = vec![0.0; n];
                col[s] = 1.0;
                (format!("spike{s}"), col)
            })
            .collect();
        let d = DesignMatrix::with_intercept(y, spikes).unwrap();
        let opts = BootstrapOptions {
            replications: 40,
            seed: 3,
            max_redraws: 0,
        };
        assert!(matches!(
            bootstrap_se(&d, 0.5, &opts, None, &SolverOptions::default()),
            Err(Error::BootstrapDegenerate { .. })
        ));
    }
}
