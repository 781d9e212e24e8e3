//! Exact vertex refinement.
//!
//! Starting from an approximate minimizer, pick the `k` rows with smallest
//! absolute residual that form a nonsingular basis and interpolate them.
//! From that vertex, follow edges of the check-loss polyhedron: each edge
//! releases one basic row in one direction, and the exact step length is
//! found by a weighted-median scan of the breakpoints. Every pivot strictly
//! decreases the objective, so the walk terminates at an optimal vertex.

use std::cmp::Ordering;

use super::problem::Problem;

pub(crate) struct VertexOutcome {
    pub beta: Vec<f64>,
    pub pivots: usize,
    pub optimal: bool,
}

pub(crate) fn zero_tolerance(pb: &Problem) -> f64 {
    1e-9 * pb.y.iter().fold(1.0_f64, |m, v| m.max(v.abs()))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Basic,
    Pos,
    Neg,
    Zero,
}

pub(crate) fn descend(pb: &Problem, theta: f64, start: &[f64], max_pivots: usize) -> Option<VertexOutcome> {
    let n = pb.n;
    let k = pb.k();
    let r0 = pb.residuals(start);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        r0[a].abs()
            .partial_cmp(&r0[b].abs())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut basis = pb.select_basis(&order)?;
    debug_assert_eq!(basis.len(), k);

    let tol = zero_tolerance(pb);
    let opt_tol = 1e-10;
    let mut pivots = 0;
    let mut side = vec![Side::Pos; n];
    loop {
        side.iter_mut().for_each(|s| *s = Side::Pos);
        for &j in &basis {
            side[j] = Side::Basic;
        }
        let fac = pb.gram(basis.iter().map(|&i| (i, 1.0)))?;
        let mut beta = {
            let mut rhs = vec![0.0; k];
            for &i in &basis {
                pb.add_row(i, pb.y[i], &mut rhs);
            }
            fac.solve(&rhs)
        };
        // one round of iterative refinement on the basic system
        {
            let mut rhs = vec![0.0; k];
            for &i in &basis {
                pb.add_row(i, pb.y[i] - pb.xb(i, &beta), &mut rhs);
            }
            let corr = fac.solve(&rhs);
            beta.iter_mut().zip(&corr).for_each(|(b, c)| *b += c);
        }
        if beta.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut r = pb.residuals(&beta);
        let mut grad = vec![0.0; k];
        let mut zeros = Vec::new();
        for i in 0..n {
            if side[i] == Side::Basic {
                r[i] = 0.0;
                continue;
            }
            if r[i] > tol {
                pb.add_row(i, theta, &mut grad);
            } else if r[i] < -tol {
                side[i] = Side::Neg;
                pb.add_row(i, theta - 1.0, &mut grad);
            } else {
                side[i] = Side::Zero;
                zeros.push(i);
            }
        }
        // c = -Σ ψ(r_i) x_i;  u = X_h^{-T} c
        grad.iter_mut().for_each(|v| *v = -*v);
        let to_basis_coords = |vec: &[f64]| -> Vec<f64> {
            let v = fac.solve(vec);
            basis.iter().map(|&i| pb.xb(i, &v)).collect()
        };
        let u = to_basis_coords(&grad);
        let mut d_plus: Vec<f64> = u.iter().map(|uj| uj + (1.0 - theta)).collect();
        let mut d_minus: Vec<f64> = u.iter().map(|uj| -uj + theta).collect();
        for &i in &zeros {
            let mut xi = vec![0.0; k];
            pb.add_row(i, 1.0, &mut xi);
            let m = to_basis_coords(&xi);
            for (j, &mij) in m.iter().enumerate() {
                let (pos, neg) = (mij.max(0.0), (-mij).max(0.0));
                d_plus[j] += theta * neg + (1.0 - theta) * pos;
                d_minus[j] += theta * pos + (1.0 - theta) * neg;
            }
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..k {
            for (dir, val) in [(1.0, d_plus[j]), (-1.0, d_minus[j])] {
                if val < -opt_tol && best.map_or(true, |(_, _, b)| val < b) {
                    best = Some((j, dir, val));
                }
            }
        }
        let Some((leave, dir, slope0)) = best else {
            return Some(VertexOutcome {
                beta,
                pivots,
                optimal: true,
            });
        };
        if pivots >= max_pivots {
            return Some(VertexOutcome {
                beta,
                pivots,
                optimal: false,
            });
        }

        // edge direction: X_h d = dir · e_leave
        let mut rhs = vec![0.0; k];
        pb.add_row(basis[leave], dir, &mut rhs);
        let d = fac.solve(&rhs);
        let mut breaks: Vec<(f64, f64, usize)> = Vec::new();
        for i in 0..n {
            if matches!(side[i], Side::Basic | Side::Zero) {
                continue;
            }
            let a = pb.xb(i, &d);
            if a.abs() <= 1e-14 {
                continue;
            }
            let t = r[i] / a;
            if t > 0.0 {
                breaks.push((t, a.abs(), i));
            }
        }
        breaks.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal).then(x.2.cmp(&y.2)));
        let mut slope = slope0;
        let mut enter = None;
        for &(_, w, i) in &breaks {
            slope += w;
            if slope >= 0.0 {
                enter = Some(i);
                break;
            }
        }
        basis[leave] = enter?;
        pivots += 1;
    }
}
