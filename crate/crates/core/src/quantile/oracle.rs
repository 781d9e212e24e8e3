//! Exact small-instance reference solvers for the check-loss problem.
//!
//! These exist for verification: they share no code path with the
//! production solver beyond the objective itself. [`fit_quantile_oracle`]
//! runs a dense tableau simplex with Bland's rule on
//!
//! ```text
//! min θ·1'u + (1-θ)·1'v   s.t.  X(b⁺ - b⁻) + u - v = y,   b⁺, b⁻, u, v ≥ 0
//! ```
//!
//! and [`enumerate_vertices`] scans every `k`-subset of rows as a candidate
//! interpolating basis.

use nalgebra::{DMatrix, DVector};

use super::{check_loss, DesignMatrix};
use crate::error::{check_theta, Error, Result};

pub const DEFAULT_ORACLE_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub coefficients: Vec<f64>,
    pub objective: f64,
}

pub fn fit_quantile_oracle(design: &DesignMatrix, theta: f64) -> Result<OracleSolution> {
    fit_quantile_oracle_capped(design, theta, DEFAULT_ORACLE_CAP)
}

pub fn fit_quantile_oracle_capped(design: &DesignMatrix, theta: f64, cap: usize) -> Result<OracleSolution> {
    check_theta(theta)?;
    let (n, k) = (design.n(), design.k());
    if n > cap {
        return Err(Error::OracleCap { n, cap });
    }
    let x = design.columns();
    let y = design.response();

    // columns: b+ (k), b- (k), u (n), v (n), rhs
    let ncols = 2 * k + 2 * n;
    let mut tab = DMatrix::<f64>::zeros(n, ncols + 1);
    let mut basic = vec![0usize; n];
    for i in 0..n {
        let sign = if y[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..k {
            tab[(i, j)] = sign * x[j][i];
            tab[(i, k + j)] = -sign * x[j][i];
        }
        tab[(i, 2 * k + i)] = sign;
        tab[(i, 2 * k + n + i)] = -sign;
        tab[(i, ncols)] = sign * y[i];
        basic[i] = if sign > 0.0 { 2 * k + i } else { 2 * k + n + i };
    }
    let cost = |j: usize| -> f64 {
        if j < 2 * k {
            0.0
        } else if j < 2 * k + n {
            theta
        } else {
            1.0 - theta
        }
    };
    // reduced costs row
    let mut red = vec![0.0; ncols + 1];
    for j in 0..=ncols {
        let cj = if j < ncols { cost(j) } else { 0.0 };
        let cb: f64 = (0..n).map(|i| cost(basic[i]) * tab[(i, j)]).sum();
        red[j] = cj - cb;
    }

    let eps = 1e-11;
    let max_pivots = 50 * (n + k) + 1000;
    for _ in 0..max_pivots {
        let Some(enter) = (0..ncols).find(|&j| red[j] < -eps) else {
            return Ok(finish(design, theta, &tab, &basic, k, n));
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..n {
            let a = tab[(i, enter)];
            if a > eps {
                let ratio = tab[(i, ncols)] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12 || ((ratio - lr).abs() <= 1e-12 && basic[i] < basic[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let (row, _) = leave.ok_or_else(|| Error::InvalidDesign("oracle LP unbounded".into()))?;
        let piv = tab[(row, enter)];
        for j in 0..=ncols {
            tab[(row, j)] /= piv;
        }
        for i in 0..n {
            if i != row {
                let f = tab[(i, enter)];
                if f != 0.0 {
                    for j in 0..=ncols {
                        let v = tab[(row, j)];
                        tab[(i, j)] -= f * v;
                    }
                }
            }
        }
        let f = red[enter];
        for j in 0..=ncols {
            red[j] -= f * tab[(row, j)];
        }
        basic[row] = enter;
    }
    Err(Error::NoConvergence {
        iterations: max_pivots,
        objective: f64::NAN,
        gap: f64::NAN,
        best: Vec::new(),
    })
}

fn finish(design: &DesignMatrix, theta: f64, tab: &DMatrix<f64>, basic: &[usize], k: usize, n: usize) -> OracleSolution {
    let ncols = 2 * k + 2 * n;
    let mut beta = vec![0.0; k];
    for (i, &b) in basic.iter().enumerate() {
        if b < k {
            beta[b] += tab[(i, ncols)];
        } else if b < 2 * k {
            beta[b - k] -= tab[(i, ncols)];
        }
    }
    // rows whose slack pair is entirely nonbasic are interpolated exactly;
    // re-solve on them to clear tableau round-off
    let tight: Vec<usize> = (0..n)
        .filter(|&i| !basic.contains(&(2 * k + i)) && !basic.contains(&(2 * k + n + i)))
        .collect();
    if tight.len() == k {
        let x = DMatrix::from_fn(k, k, |r, c| design.columns()[c][tight[r]]);
        let yv = DVector::from_iterator(k, tight.iter().map(|&i| design.response()[i]));
        if let Some(sol) = x.lu().solve(&yv) {
            let exact: Vec<f64> = sol.iter().copied().collect();
            let obj_exact = check_loss(&design.residuals(&exact), theta).unwrap_or(f64::INFINITY);
            let obj_tab = check_loss(&design.residuals(&beta), theta).unwrap_or(f64::INFINITY);
            if obj_exact <= obj_tab + 1e-9 * (1.0 + obj_tab) {
                beta = exact;
            }
        }
    }
    let objective = check_loss(&design.residuals(&beta), theta).unwrap_or(f64::NAN);
    OracleSolution {
        coefficients: beta,
        objective,
    }
}

/// Brute-force optimum over all interpolating bases. Exponential in `k`;
/// intended for `n ≤ ~60`, `k ≤ 3`.
pub fn enumerate_vertices(design: &DesignMatrix, theta: f64) -> Result<OracleSolution> {
    check_theta(theta)?;
    let (n, k) = (design.n(), design.k());
    if k > 4 || n > 80 {
        return Err(Error::OracleCap { n, cap: 80 });
    }
    let mut best: Option<OracleSolution> = None;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let x = DMatrix::from_fn(k, k, |r, c| design.columns()[c][idx[r]]);
        if x.determinant().abs() > 1e-12 {
            let yv = DVector::from_iterator(k, idx.iter().map(|&i| design.response()[i]));
            if let Some(sol) = x.lu().solve(&yv) {
                let beta: Vec<f64> = sol.iter().copied().collect();
                let obj = check_loss(&design.residuals(&beta), theta)?;
                if best.as_ref().map_or(true, |b| obj < b.objective) {
                    best = Some(OracleSolution {
                        coefficients: beta,
                        objective: obj,
                    });
                }
            }
        }
        // next combination
        let mut i = k;
        loop {
            if i == 0 {
                return best.ok_or_else(|| Error::InvalidDesign("no nonsingular basis".into()));
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_three() {
        let d = DesignMatrix::intercept_only(vec![1.0, 2.0, 9.0]).unwrap();
        let sol = fit_quantile_oracle(&d, 0.5).unwrap();
        assert!((sol.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((sol.objective - 4.0).abs() < 1e-12);
    }

    #[test]
    fn exactly_determined_system_interpolates() {
        let d = DesignMatrix::with_intercept(vec![3.0, 7.0], vec![("x".into(), vec![1.0, 3.0])]).unwrap();
        let sol = fit_quantile_oracle(&d, 0.3).unwrap();
        assert!(sol.objective.abs() < 1e-12);
        assert!((sol.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((sol.coefficients[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn refuses_large_instances() {
        let d = DesignMatrix::intercept_only((0..300).map(|i| i as f64).collect()).unwrap();
        assert!(matches!(fit_quantile_oracle(&d, 0.5), Err(Error::OracleCap { .. })));
    }

    #[test]
    fn enumeration_agrees_with_simplex_on_small_grid() {
        let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| 1.0 + 0.5 * v + ((i * 7 % 5) as f64 - 2.0)).collect();
        let d = DesignMatrix::with_intercept(y, vec![("x".into(), x)]).unwrap();
        for theta in [0.2, 0.5, 0.8] {
            let a = fit_quantile_oracle(&d, theta).unwrap();
            let b = enumerate_vertices(&d, theta).unwrap();
            assert!((a.objective - b.objective).abs() < 1e-10, "{} vs {}", a.objective, b.objective);
        }
    }
}
