//! Fixed and random effects estimators for firm panels, the Hausman
//! specification test, and quantile regression with firm effects.

mod hausman;
mod linear;
mod quantile_fe;

pub use hausman::{hausman_from_parts, hausman_test, HausmanDecision, HausmanResult};
pub use linear::{fit_fixed_effects, fit_pooled_ols, fit_random_effects, EffectsFit, EffectsKind};
pub use quantile_fe::{bootstrap_fixed_effects, fit_quantile_fixed_effects, FeMode, DEFAULT_MAX_GROUPS};

use crate::groups::Groups;

/// Subtracts each group's mean from every column.
pub fn within_transform(columns: &[Vec<f64>], groups: &Groups) -> Vec<Vec<f64>> {
    let g = groups.len();
    let idx = groups.index();
    let sizes = groups.sizes();
    columns
        .iter()
        .map(|col| {
            let mut sums = vec![0.0; g];
            for (v, &gi) in col.iter().zip(idx) {
                sums[gi] += v;
            }
            for (s, &m) in sums.iter_mut().zip(&sizes) {
                *s /= m as f64;
            }
            col.iter().zip(idx).map(|(v, &gi)| v - sums[gi]).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demeaned_groups_sum_to_zero() {
        let g = Groups::from_labels(&["a", "a", "b", "b", "b"]);
        let out = within_transform(&[vec![1.0, 3.0, 2.0, 2.0, 5.0]], &g);
        assert_eq!(out[0], vec![-1.0, 1.0, -1.0, -1.0, 2.0]);
    }
}
