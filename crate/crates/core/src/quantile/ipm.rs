//! Frisch-Newton primal-dual interior point on the dual of the
//! check-loss linear program.
//!
//! The dual is `max y'a` subject to `X'a = (1-θ) X'1`, `0 ≤ a ≤ 1`. It is
//! solved in the bounded-variable form `min c'x, Ax = b, 0 ≤ x ≤ u` with
//! `A = X'`, `c = -y`, `u = 1`, starting from `x = (1-θ)1`, using a
//! Mehrotra predictor-corrector step. The multipliers of the equality
//! constraints are (minus) the regression coefficients.

use super::problem::Problem;

const STEP_FRACTION: f64 = 0.99995;

pub(crate) struct IpmOutcome {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

pub(crate) fn solve(pb: &Problem, theta: f64, rel_tol: f64, max_iter: usize) -> Option<IpmOutcome> {
    let n = pb.n;
    let y = &pb.y;
    let mut x = vec![1.0 - theta; n];
    let mut s: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();
    let b = pb.xt_mul(&x);

    // least-squares start for the multipliers: X dual ≈ c
    let f0 = pb.gram((0..n).map(|i| (i, 1.0)))?;
    let c: Vec<f64> = y.iter().map(|v| -v).collect();
    let mut dual = f0.solve(&pb.xt_mul(&c));
    let mut r: Vec<f64> = (0..n).map(|i| c[i] - pb.xb(i, &dual)).collect();
    for ri in r.iter_mut() {
        if *ri == 0.0 {
            *ri = 0.001;
        }
    }
    let mut z: Vec<f64> = r.iter().map(|v| v.max(0.0)).collect();
    let mut w: Vec<f64> = z.iter().zip(&r).map(|(zi, ri)| zi - ri).collect();

    let scale = 1.0 + y.iter().map(|v| v.abs()).sum::<f64>();
    let gap_of = |x: &[f64], dual: &[f64], w: &[f64]| -> f64 {
        let cx: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
        let by: f64 = b.iter().zip(dual).map(|(a, b)| a * b).sum();
        let uw: f64 = w.iter().sum();
        cx - by + uw
    };
    let mut gap = gap_of(&x, &dual, &w);
    let mut it = 0;

    let mut dx = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let mut dw = vec![0.0; n];
    let mut q = vec![0.0; n];
    while gap.abs() > rel_tol * scale && it < max_iter {
        it += 1;
        for i in 0..n {
            q[i] = 1.0 / (z[i] / x[i] + w[i] / s[i]);
            r[i] = z[i] - w[i];
        }
        let fac = pb.gram(q.iter().copied().enumerate())?;
        let qr: Vec<f64> = q.iter().zip(&r).map(|(a, b)| a * b).collect();
        let mut dy = fac.solve(&pb.xt_mul(&qr));
        for i in 0..n {
            dx[i] = q[i] * (pb.xb(i, &dy) - r[i]);
            dz[i] = -z[i] * (dx[i] / x[i] + 1.0);
            dw[i] = -w[i] * (-dx[i] / s[i] + 1.0);
        }
        let ds: Vec<f64> = dx.iter().map(|v| -v).collect();
        let mut fp = (STEP_FRACTION * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
        let mut fd = (STEP_FRACTION * max_step(&w, &dw).min(max_step(&z, &dz))).min(1.0);

        if fp.min(fd) < 1.0 {
            let mut mu: f64 = (0..n).map(|i| z[i] * x[i] + w[i] * s[i]).sum();
            let g: f64 = (0..n)
                .map(|i| {
                    (z[i] + fd * dz[i]) * (x[i] + fp * dx[i])
                        + (w[i] + fd * dw[i]) * (s[i] + fp * ds[i])
                })
                .sum();
            mu = mu * (g / mu).powi(3) / (2.0 * n as f64);

            let mut rhs = vec![0.0; n];
            let mut xi = vec![0.0; n];
            let mut dxdz = vec![0.0; n];
            let mut dsdw = vec![0.0; n];
            for i in 0..n {
                dxdz[i] = dx[i] * dz[i];
                dsdw[i] = ds[i] * dw[i];
                xi[i] = mu * (1.0 / x[i] - 1.0 / s[i]);
                rhs[i] = q[i] * (r[i] + dxdz[i] - dsdw[i] - xi[i]);
            }
            dy = fac.solve(&pb.xt_mul(&rhs));
            for i in 0..n {
                dx[i] = q[i] * (pb.xb(i, &dy) + xi[i] - r[i] - dxdz[i] + dsdw[i]);
                let dsi = -dx[i];
                dz[i] = mu / x[i] - z[i] - z[i] / x[i] * dx[i] - dxdz[i];
                dw[i] = mu / s[i] - w[i] - w[i] / s[i] * dsi - dsdw[i];
            }
            let ds: Vec<f64> = dx.iter().map(|v| -v).collect();
            fp = (STEP_FRACTION * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
            fd = (STEP_FRACTION * max_step(&w, &dw).min(max_step(&z, &dz))).min(1.0);
        }

        for i in 0..n {
            x[i] += fp * dx[i];
            s[i] -= fp * dx[i];
            w[i] += fd * dw[i];
            z[i] += fd * dz[i];
        }
        for (d, step) in dual.iter_mut().zip(&dy) {
            *d += fd * step;
        }
        gap = gap_of(&x, &dual, &w);
        if !gap.is_finite() || x.iter().chain(&s).any(|v| !v.is_finite()) {
            return None;
        }
    }
    Some(IpmOutcome {
        beta: dual.iter().map(|v| -v).collect(),
        iterations: it,
        gap: gap / scale,
        converged: gap.abs() <= rel_tol * scale,
    })
}
