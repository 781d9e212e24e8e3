//! Iteratively reweighted least squares on a smoothed check loss. Only used
//! to produce a starting point when the interior point method breaks down;
//! the vertex step that follows restores exact optimality.

use super::problem::Problem;

pub(crate) fn solve(pb: &Problem, theta: f64, max_iter: usize) -> Option<Vec<f64>> {
    let n = pb.n;
    let yscale = pb.y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-12);
    let f0 = pb.gram((0..n).map(|i| (i, 1.0)))?;
    let mut beta = f0.solve(&pb.xt_mul(&pb.y));
    let mut eps = 1e-2 * yscale;
    let floor = 1e-10 * yscale;
    for _ in 0..max_iter {
        let r = pb.residuals(&beta);
        let w: Vec<f64> = r
            .iter()
            .map(|&ri| {
                let side = if ri >= 0.0 { theta } else { 1.0 - theta };
                side / ri.abs().max(eps)
            })
            .collect();
        let fac = pb.gram(w.iter().copied().enumerate())?;
        let wy: Vec<f64> = w.iter().zip(&pb.y).map(|(a, b)| a * b).collect();
        let next = fac.solve(&pb.xt_mul(&wy));
        if next.iter().any(|v| !v.is_finite()) {
            break;
        }
        let change = next
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        beta = next;
        if change < 1e-12 * yscale && eps <= floor {
            break;
        }
        eps = (eps * 0.5).max(floor);
    }
    Some(beta)
}
