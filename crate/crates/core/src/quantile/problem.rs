//! Internal representation of a check-loss problem.
//!
//! The predictor matrix is `[Z | D]` where `Z` is dense (`n × p`) and `D`
//! holds one nonzero per row: row `i` carries value `d_i` in group column
//! `g_i`. Group-indicator fixed effects and the shrinkage pseudo-rows of the
//! penalized mode both fit this shape, so normal equations can be solved by
//! eliminating the diagonal group block.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::linalg::{axpy, dot};

#[derive(Debug, Clone)]
pub(crate) struct GroupColumns {
    pub label: Vec<usize>,
    pub value: Vec<f64>,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub n: usize,
    pub p: usize,
    /// row-major `n × p`
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub groups: Option<GroupColumns>,
    /// rows `< n_real` are observations, the rest are penalty rows
    pub n_real: usize,
}

impl Problem {
    pub fn dense(z: Vec<f64>, p: usize, y: Vec<f64>) -> Self {
        let n = y.len();
        debug_assert_eq!(z.len(), n * p);
        Self {
            n,
            p,
            z,
            y,
            groups: None,
            n_real: n,
        }
    }

    pub fn g(&self) -> usize {
        self.groups.as_ref().map_or(0, |g| g.count)
    }

    pub fn k(&self) -> usize {
        self.p + self.g()
    }

    #[inline]
    pub fn zrow(&self, i: usize) -> &[f64] {
        &self.z[i * self.p..(i + 1) * self.p]
    }

    #[inline]
    pub fn xb(&self, i: usize, beta: &[f64]) -> f64 {
        let mut s = dot(self.zrow(i), &beta[..self.p]);
        if let Some(g) = &self.groups {
            s += g.value[i] * beta[self.p + g.label[i]];
        }
        s
    }

    pub fn residuals(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.y[i] - self.xb(i, beta)).collect()
    }

    /// `X' v` over all rows.
    pub fn xt_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        for (i, &vi) in v.iter().enumerate() {
            self.add_row(i, vi, &mut out);
        }
        out
    }

    /// `out += alpha * x_i`
    #[inline]
    pub fn add_row(&self, i: usize, alpha: f64, out: &mut [f64]) {
        if alpha == 0.0 {
            return;
        }
        axpy(alpha, self.zrow(i), &mut out[..self.p]);
        if let Some(g) = &self.groups {
            out[self.p + g.label[i]] += alpha * g.value[i];
        }
    }

    /// Factorizes `X' W X` over the listed rows with the given weights.
    pub fn gram(&self, rows: impl Iterator<Item = (usize, f64)>) -> Option<GramFactor> {
        let p = self.p;
        let gcount = self.g();
        let mut a = DMatrix::<f64>::zeros(p, p);
        let mut b = vec![0.0; gcount * p];
        let mut c = vec![0.0; gcount];
        for (i, w) in rows {
            let zi = self.zrow(i);
            for r in 0..p {
                let wr = w * zi[r];
                if wr == 0.0 {
                    continue;
                }
                for s in r..p {
                    a[(r, s)] += wr * zi[s];
                }
            }
            if let Some(g) = &self.groups {
                let (lab, d) = (g.label[i], g.value[i]);
                c[lab] += w * d * d;
                axpy(w * d, zi, &mut b[lab * p..(lab + 1) * p]);
            }
        }
        for r in 0..p {
            for s in 0..r {
                a[(r, s)] = a[(s, r)];
            }
        }
        let cmax = c.iter().fold(0.0_f64, |m, v| m.max(*v));
        if c.iter().any(|&v| !(v > 1e-300 && v > 1e-14 * cmax)) {
            return None;
        }
        // Schur complement of the diagonal group block
        for (g, &cg) in c.iter().enumerate() {
            let bg = &b[g * p..(g + 1) * p];
            for r in 0..p {
                let f = bg[r] / cg;
                if f == 0.0 {
                    continue;
                }
                for s in 0..p {
                    a[(r, s)] -= f * bg[s];
                }
            }
        }
        let chol = if p == 0 {
            None
        } else {
            Some(Cholesky::new(a)?)
        };
        Some(GramFactor { p, b, c, chol })
    }

    /// Picks `k` rows forming a nonsingular square subsystem, preferring
    /// rows early in `order`.
    pub fn select_basis(&self, order: &[usize]) -> Option<Vec<usize>> {
        let p = self.p;
        let gcount = self.g();
        let mut anchor: Vec<Option<usize>> = vec![None; gcount];
        let mut ortho: Vec<Vec<f64>> = Vec::with_capacity(p);
        let mut chosen = Vec::with_capacity(p + gcount);
        let mut n_anchor = 0;
        let scale = self.z.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
        for &i in order {
            if ortho.len() == p && n_anchor == gcount {
                break;
            }
            let mut v = self.zrow(i).to_vec();
            if let Some(g) = &self.groups {
                let (lab, d) = (g.label[i], g.value[i]);
                match anchor[lab] {
                    None if d != 0.0 => {
                        anchor[lab] = Some(i);
                        n_anchor += 1;
                        chosen.push(i);
                        continue;
                    }
                    None => {}
                    Some(a) => {
                        let f = d / g.value[a];
                        axpy(-f, self.zrow(a), &mut v);
                    }
                }
            }
            if ortho.len() == p {
                continue;
            }
            let norm0 = dot(&v, &v).sqrt().max(scale * 1e-300);
            for _ in 0..2 {
                for q in &ortho {
                    let c = dot(&v, q);
                    axpy(-c, q, &mut v);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if norm > 1e-7 * norm0.max(1e-12 * scale) && norm > 1e-12 * scale {
                v.iter_mut().for_each(|e| *e /= norm);
                ortho.push(v);
                chosen.push(i);
            }
        }
        (ortho.len() == p && n_anchor == gcount).then_some(chosen)
    }

    /// Observation rows; penalty rows follow them.
    pub fn real_rows(&self) -> std::ops::Range<usize> {
        0..self.n_real
    }
}

pub(crate) struct GramFactor {
    p: usize,
    b: Vec<f64>,
    c: Vec<f64>,
    chol: Option<Cholesky<f64, nalgebra::Dyn>>,
}

impl GramFactor {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let p = self.p;
        let gcount = self.c.len();
        let (r1, r2) = rhs.split_at(p);
        // u solves S u = r1 - B C^{-1} r2
        let mut t = r1.to_vec();
        for g in 0..gcount {
            axpy(-r2[g] / self.c[g], &self.b[g * p..(g + 1) * p], &mut t);
        }
        let u: Vec<f64> = match &self.chol {
            Some(ch) => ch.solve(&DVector::from_vec(t)).iter().copied().collect(),
            None => Vec::new(),
        };
        let mut out = Vec::with_capacity(p + gcount);
        out.extend_from_slice(&u);
        for g in 0..gcount {
            let bg = &self.b[g * p..(g + 1) * p];
            out.push((r2[g] - dot(bg, &u)) / self.c[g]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grouped() -> Problem {
        // two dense columns, three groups
        let z = vec![
            1.0, 0.5, //
            2.0, -1.0, //
            0.0, 1.0, //
            1.5, 2.0, //
            -1.0, 0.3, //
            0.7, 0.7, //
            3.0, -2.0,
        ];
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        Problem {
            n: 7,
            p: 2,
            z,
            y,
            groups: Some(GroupColumns {
                label: vec![0, 0, 1, 1, 2, 2, 2],
                value: vec![1.0; 7],
                count: 3,
            }),
            n_real: 7,
        }
    }

    fn dense_x(pb: &Problem) -> DMatrix<f64> {
        let k = pb.k();
        DMatrix::from_fn(pb.n, k, |i, j| {
            if j < pb.p {
                pb.zrow(i)[j]
            } else {
                let g = pb.groups.as_ref().unwrap();
                if g.label[i] == j - pb.p {
                    g.value[i]
                } else {
                    0.0
                }
            }
        })
    }

    #[test]
    fn structured_solve_matches_dense_normal_equations() {
        let pb = grouped();
        let w: Vec<f64> = (0..pb.n).map(|i| 0.5 + i as f64 * 0.25).collect();
        let f = pb.gram(w.iter().copied().enumerate()).unwrap();
        let x = dense_x(&pb);
        let gram = x.transpose() * DMatrix::from_diagonal(&DVector::from_vec(w)) * &x;
        let rhs: Vec<f64> = (0..pb.k()).map(|j| j as f64 - 1.5).collect();
        let sol = f.solve(&rhs);
        let back = &gram * DVector::from_vec(sol);
        for (a, b) in back.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn basis_is_square_and_nonsingular() {
        let pb = grouped();
        let order: Vec<usize> = (0..pb.n).collect();
        let h = pb.select_basis(&order).unwrap();
        assert_eq!(h.len(), pb.k());
        let x = dense_x(&pb);
        let xh = DMatrix::from_fn(h.len(), pb.k(), |r, c| x[(h[r], c)]);
        assert!(xh.determinant().abs() > 1e-8);
    }
}
