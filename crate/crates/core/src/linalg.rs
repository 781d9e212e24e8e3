//! Small dense helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Ordinary least squares through a column-pivot-free QR decomposition.
///
/// Returns the coefficients together with `(X'X)^{-1}`.
pub(crate) fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let k = x.ncols();
    if x.nrows() < k {
        return None;
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|j| r[(j, j)].abs()).fold(0.0_f64, f64::max);
    if (0..k).any(|j| r[(j, j)].abs() <= 1e-12 * scale.max(1e-300)) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    let beta = r.solve_upper_triangular(&qty)?;
    let r_inv = r.solve_upper_triangular(&DMatrix::identity(k, k))?;
    let xtx_inv = &r_inv * r_inv.transpose();
    Some((beta, xtx_inv))
}

/// Finds the first column that lies (numerically) in the span of the
/// preceding ones. Returns its index and the indices of the columns it
/// loads on.
pub(crate) fn first_collinear(columns: &[Vec<f64>], rel_tol: f64) -> Option<(usize, Vec<usize>)> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut kept: Vec<usize> = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let norm0 = dot(col, col).sqrt();
        let mut v = col.clone();
        for q in &basis {
            let c = dot(&v, q);
            axpy(-c, q, &mut v);
        }
        // second pass for numerical orthogonality
        for q in &basis {
            let c = dot(&v, q);
            axpy(-c, q, &mut v);
        }
        let norm = dot(&v, &v).sqrt();
        if norm0 == 0.0 || norm <= rel_tol * norm0 {
            let loads = if kept.is_empty() {
                Vec::new()
            } else {
                let x = DMatrix::from_fn(col.len(), kept.len(), |i, c| columns[kept[c]][i]);
                let y = DVector::from_column_slice(col);
                match ols(&x, &y) {
                    Some((b, _)) => kept
                        .iter()
                        .zip(b.iter())
                        .filter(|(_, c)| c.abs() > 1e-8)
                        .map(|(&idx, _)| idx)
                        .collect(),
                    None => kept.clone(),
                }
            };
            return Some((j, loads));
        }
        v.iter_mut().for_each(|e| *e /= norm);
        basis.push(v);
        kept.push(j);
    }
    None
}

pub(crate) fn rank_check(names: &[String], columns: &[Vec<f64>]) -> Result<()> {
    if let Some((j, loads)) = first_collinear(columns, 1e-9) {
        return Err(Error::RankDeficient {
            column: names[j].clone(),
            others: loads.into_iter().map(|i| names[i].clone()).collect(),
        });
    }
    Ok(())
}

/// Pseudo-inverse of a symmetric matrix restricted to its positive
/// eigenspace. Returns the inverse, the retained rank and whether any
/// eigenvalue was dropped.
pub(crate) fn positive_pinv(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize, bool) {
    let k = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max_abs = eig.eigenvalues.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let cutoff = rel_tol * max_abs.max(f64::MIN_POSITIVE);
    let mut inv = DMatrix::zeros(k, k);
    let mut rank = 0;
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff {
            rank += 1;
            let v = eig.eigenvectors.column(idx);
            inv += (v * v.transpose()) / lambda;
        }
    }
    (inv, rank, rank < k)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_exact_line() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let (b, _) = ols(&x, &y).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12);
        assert!((b[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_column_is_named() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![1.0, 0.0, 1.0, 0.0];
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - y).collect();
        let (j, loads) = first_collinear(&[a, b, c], 1e-9).unwrap();
        assert_eq!(j, 2);
        assert_eq!(loads, vec![0, 1]);
    }

    #[test]
    fn pinv_drops_null_direction() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (inv, rank, dropped) = positive_pinv(&m, 1e-10);
        assert_eq!(rank, 1);
        assert!(dropped);
        assert!((inv[(0, 0)] - 0.25).abs() < 1e-12);
    }
}
