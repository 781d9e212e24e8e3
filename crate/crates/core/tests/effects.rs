use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qrpanel_core::effects::{
    fit_fixed_effects, fit_pooled_ols, fit_quantile_fixed_effects, fit_random_effects, hausman_test, within_transform,
    FeMode, HausmanDecision,
};
use qrpanel_core::quantile::{fit_quantile, fit_quantile_oracle, DesignMatrix, SolverOptions};
use qrpanel_core::{Error, Groups};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Sim {
    design: DesignMatrix,
    groups: Groups,
}

/// `y = a_g + Σ b_j x_j + e`, group sizes drawn in `t_range`; regressors
/// load 0.3 on `a_g`
fn simulate(rng: &mut ChaCha8Rng, n_groups: usize, t_range: (usize, usize), k: usize, sigma_u: f64, sigma_e: f64) -> Sim {
    simulate_with(rng, n_groups, t_range, k, sigma_u, sigma_e, 0.3)
}

fn simulate_with(
    rng: &mut ChaCha8Rng,
    n_groups: usize,
    t_range: (usize, usize),
    k: usize,
    sigma_u: f64,
    sigma_e: f64,
    loading: f64,
) -> Sim {
    let nu = Normal::new(0.0, sigma_u.max(1e-300)).unwrap();
    let ne = Normal::new(0.0, sigma_e.max(1e-300)).unwrap();
    let mut labels = Vec::new();
    let mut cols = vec![Vec::new(); k];
    let mut y = Vec::new();
    for g in 0..n_groups {
        let t = rng.random_range(t_range.0..=t_range.1);
        let a = if sigma_u > 0.0 { nu.sample(rng) } else { 0.0 };
        for _ in 0..t {
            labels.push(format!("g{g:03}"));
            let mut v = a;
            for (j, c) in cols.iter_mut().enumerate() {
                let x: f64 = rng.random_range(-1.0..1.0) + loading * a;
                v += (j as f64 + 1.0) * 0.5 * x;
                c.push(x);
            }
            y.push(v + if sigma_e > 0.0 { ne.sample(rng) } else { 0.0 });
        }
    }
    let cols = cols.into_iter().enumerate().map(|(j, c)| (format!("x{j}"), c)).collect();
    Sim {
        design: DesignMatrix::with_intercept(y, cols).unwrap(),
        groups: Groups::from_labels(&labels),
    }
}

/// Least squares on slopes plus one explicit dummy per group.
fn lsdv(sim: &Sim) -> Vec<f64> {
    let n = sim.design.n();
    let slopes: Vec<&Vec<f64>> = sim
        .design
        .names()
        .iter()
        .zip(sim.design.columns())
        .filter(|(name, _)| name.as_str() != "const")
        .map(|(_, c)| c)
        .collect();
    let k = slopes.len();
    let g = sim.groups.len();
    let x = DMatrix::from_fn(n, k + g, |i, j| {
        if j < k {
            slopes[j][i]
        } else if sim.groups.index()[i] == j - k {
            1.0
        } else {
            0.0
        }
    });
    let y = DVector::from_column_slice(sim.design.response());
    let beta = x.clone().svd(true, true).solve(&y, 1e-14).unwrap();
    beta.iter().take(k).copied().collect()
}

#[test]
fn within_transform_examples() {
    let one = Groups::from_labels(&[1, 1, 1]);
    assert_eq!(within_transform(&[vec![1.0, 2.0, 3.0]], &one)[0], vec![-1.0, 0.0, 1.0]);
    let singles = Groups::from_labels(&[1, 2]);
    assert_eq!(within_transform(&[vec![4.0, -9.0]], &singles)[0], vec![0.0, 0.0]);
}

#[test]
fn within_transform_zeroes_group_means_and_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sim = simulate(&mut rng, 40, (1, 9), 3, 2.0, 1.0);
    let once = within_transform(sim.design.columns(), &sim.groups);
    let twice = within_transform(&once, &sim.groups);
    for (col, again) in once.iter().zip(&twice) {
        for rows in sim.groups.members() {
            let m: f64 = rows.iter().map(|&i| col[i]).sum::<f64>() / rows.len() as f64;
            assert!(m.abs() < 1e-10);
        }
        for (a, b) in col.iter().zip(again) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn exact_model_recovers_unit_slope() {
    let x: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
    let labels: Vec<usize> = (0..12).map(|i| i / 4).collect();
    let y: Vec<f64> = x.iter().zip(&labels).map(|(v, &g)| v + [2.0, -5.0, 11.0][g]).collect();
    let d = DesignMatrix::new(y, vec![("x".into(), x)]).unwrap();
    let fe = fit_fixed_effects(&d, &Groups::from_labels(&labels)).unwrap();
    assert!((fe.coefficients[0] - 1.0).abs() < 1e-12);
    assert!(fe.sigma_e.unwrap() < 1e-10);
}

#[test]
fn shifting_one_firm_moves_only_its_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let sim = simulate(&mut rng, 6, (3, 6), 2, 1.0, 0.5);
    let base = fit_fixed_effects(&sim.design, &sim.groups).unwrap();
    let y: Vec<f64> = sim
        .design
        .response()
        .iter()
        .zip(sim.groups.index())
        .map(|(v, &g)| if g == 2 { v + 7.0 } else { *v })
        .collect();
    let shifted = fit_fixed_effects(&sim.design.with_response(y).unwrap(), &sim.groups).unwrap();
    for (a, b) in base.coefficients.iter().zip(&shifted.coefficients) {
        assert!((a - b).abs() < 1e-10);
    }
    let level = |f: &qrpanel_core::EffectsFit, g: usize| f.intercept.unwrap() + f.group_effects.as_ref().unwrap()[g].1;
    assert!((level(&shifted, 2) - level(&base, 2) - 7.0).abs() < 1e-9);
    for g in [0, 1, 3, 4, 5] {
        assert!((level(&shifted, g) - level(&base, g)).abs() < 1e-9);
    }
    // effects average to zero weighted by group size
    let sizes = sim.groups.sizes();
    let wsum: f64 = shifted
        .group_effects
        .as_ref()
        .unwrap()
        .iter()
        .zip(&sizes)
        .map(|((_, a), &s)| a * s as f64)
        .sum();
    assert!(wsum.abs() < 1e-9);
}

#[test]
fn within_slopes_equal_dummy_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let sim = simulate(&mut rng, 2, (15, 15), 2, 1.0, 1.0);
    assert_eq!(sim.design.n(), 30);
    let fe = fit_fixed_effects(&sim.design, &sim.groups).unwrap();
    for (a, b) in fe.coefficients.iter().zip(lsdv(&sim)) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
    for case in 0..50 {
        let g = rng.random_range(2..8);
        let k = rng.random_range(1..4);
        let sim = simulate(&mut rng, g, (3, 7), k, 1.5, 0.8);
        let fe = fit_fixed_effects(&sim.design, &sim.groups).unwrap();
        for (a, b) in fe.coefficients.iter().zip(lsdv(&sim)) {
            assert!((a - b).abs() < 1e-10, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn fixed_effects_errors() {
    let d = DesignMatrix::new(vec![1.0, 2.0, 3.0], vec![("x".into(), vec![0.5, 1.0, 4.0])]).unwrap();
    let singles = Groups::from_labels(&["a", "b", "c"]);
    assert!(matches!(fit_fixed_effects(&d, &singles), Err(Error::NoWithinVariation)));

    let labels = ["a", "a", "a", "b", "b", "b"];
    let d = DesignMatrix::new(
        vec![1.0, 2.0, 4.0, 3.0, 3.5, 6.0],
        vec![
            ("x".into(), vec![0.1, 0.7, 0.2, 0.9, 0.4, 0.3]),
            ("size".into(), vec![5.0, 5.0, 5.0, 8.0, 8.0, 8.0]),
        ],
    )
    .unwrap();
    match fit_fixed_effects(&d, &Groups::from_labels(&labels)) {
        Err(Error::RankDeficient { column, .. }) => assert_eq!(column, "size"),
        other => panic!("expected rank error, got {other:?}"),
    }
}

#[test]
fn random_effects_with_no_group_variance_is_pooled_ols() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    // search for a draw whose between variance estimate goes negative
    for _ in 0..200 {
        let sim = simulate(&mut rng, 12, (4, 4), 2, 0.0, 1.0);
        let re = fit_random_effects(&sim.design, &sim.groups).unwrap();
        if !re.sigma_u_clamped {
            continue;
        }
        let pooled = fit_pooled_ols(&sim.design).unwrap();
        assert_eq!(re.names, pooled.names);
        for (a, b) in re.coefficients.iter().zip(&pooled.coefficients) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(re.sigma_u, Some(0.0));
        return;
    }
    panic!("no clamped draw found");
}

#[test]
fn random_effects_approach_within_as_noise_vanishes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sim = simulate(&mut rng, 20, (5, 5), 2, 3.0, 1e-6);
    let fe = fit_fixed_effects(&sim.design, &sim.groups).unwrap();
    let re = fit_random_effects(&sim.design, &sim.groups).unwrap();
    for (j, name) in fe.names.iter().enumerate() {
        assert!((fe.coefficients[j] - re.coefficient(name).unwrap()).abs() < 1e-6);
    }
}

#[test]
fn random_effects_slope_lies_between_pooled_and_within() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let sim = simulate(&mut rng, 15, (6, 6), 1, 1.0, 1.0);
        let fe = fit_fixed_effects(&sim.design, &sim.groups).unwrap().coefficients[0];
        let re = fit_random_effects(&sim.design, &sim.groups).unwrap().coefficient("x0").unwrap();
        let po = fit_pooled_ols(&sim.design).unwrap().coefficient("x0").unwrap();
        let (lo, hi) = (fe.min(po), fe.max(po));
        assert!(re >= lo - 1e-12 && re <= hi + 1e-12, "{re} not in [{lo}, {hi}]");
    }
}

#[test]
fn variance_components_recovered_on_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (su, se) = (1.5, 0.8);
    let (mut mu, mut me) = (0.0, 0.0);
    let reps = 200;
    for _ in 0..reps {
        let sim = simulate_with(&mut rng, 40, (3, 8), 2, su, se, 0.0);
        let re = fit_random_effects(&sim.design, &sim.groups).unwrap();
        mu += re.sigma_u.unwrap() / reps as f64;
        me += re.sigma_e.unwrap() / reps as f64;
    }
    assert!((mu / su - 1.0).abs() < 0.2, "sigma_u {mu}");
    assert!((me / se - 1.0).abs() < 0.2, "sigma_e {me}");
}

#[test]
fn hausman_against_itself_is_zero_and_order_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let sim = simulate(&mut rng, 30, (3, 7), 3, 1.0, 1.0);
    let fe = fit_fixed_effects(&sim.design, &sim.groups).unwrap();
    let h = hausman_test(&fe, &fe, 0.05).unwrap();
    assert_eq!(h.statistic, 0.0);
    assert_eq!(h.decision, HausmanDecision::RandomEffects);

    let re = fit_random_effects(&sim.design, &sim.groups).unwrap();
    let h = hausman_test(&fe, &re, 0.05).unwrap();
    // reverse the column order of the design
    let mut cols: Vec<(String, Vec<f64>)> = sim
        .design
        .names()
        .iter()
        .cloned()
        .zip(sim.design.columns().iter().cloned())
        .filter(|(n, _)| n != "const")
        .collect();
    cols.reverse();
    let rev = DesignMatrix::with_intercept(sim.design.response().to_vec(), cols).unwrap();
    let fe2 = fit_fixed_effects(&rev, &sim.groups).unwrap();
    let re2 = fit_random_effects(&rev, &sim.groups).unwrap();
    let h2 = hausman_test(&fe2, &re2, 0.05).unwrap();
    assert!((h.statistic - h2.statistic).abs() < 1e-8 * h.statistic.max(1.0));
    assert_eq!(h.df, 3);
    assert!(!h.rank_deficient);
}

#[test]
fn correlated_effects_are_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    // regressors load on the group effect by construction
    let sim = simulate(&mut rng, 200, (5, 5), 2, 3.0, 0.5);
    let fe = fit_fixed_effects(&sim.design, &sim.groups).unwrap();
    let re = fit_random_effects(&sim.design, &sim.groups).unwrap();
    let h = hausman_test(&fe, &re, 0.05).unwrap();
    assert_eq!(h.decision, HausmanDecision::FixedEffects, "{h:?}");
}

fn level_shift_instance() -> (DesignMatrix, Groups) {
    let base_x = [0.3, 1.1, -0.4, 2.2, 0.9, -1.3, 1.7];
    let base_y = [1.0, 2.5, -0.2, 4.1, 1.2, -1.9, 3.0];
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut labels = Vec::new();
    for (g, shift) in [("A", 0.0), ("B", 1.0)] {
        for (a, b) in base_x.iter().zip(base_y) {
            x.push(*a);
            y.push(b + shift);
            labels.push(g);
        }
    }
    (DesignMatrix::with_intercept(y, vec![("x".into(), x)]).unwrap(), Groups::from_labels(&labels))
}

#[test]
fn quantile_effects_absorb_level_shift() {
    let (d, g) = level_shift_instance();
    let opts = SolverOptions::default();
    let one_group = DesignMatrix::with_intercept(
        d.response()[..7].to_vec(),
        vec![("x".into(), d.column("x").unwrap()[..7].to_vec())],
    )
    .unwrap();
    let single = fit_quantile(&one_group, 0.5, &opts).unwrap();
    let fit = fit_quantile_fixed_effects(&d, &g, 0.5, FeMode::default(), &opts).unwrap();
    assert!((fit.coefficient("x").unwrap() - single.coefficient("x").unwrap()).abs() < 1e-9);
    let ge = fit.group_effects.unwrap();
    assert!((ge[1].1 - ge[0].1 - 1.0).abs() < 1e-9);
}

#[test]
fn heavy_penalty_gives_pooled_fit() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let sim = simulate(&mut rng, 8, (4, 8), 2, 1.0, 1.0);
    let opts = SolverOptions::default();
    for theta in [0.25, 0.5, 0.8] {
        let pooled = fit_quantile(&sim.design, theta, &opts).unwrap();
        let fit =
            fit_quantile_fixed_effects(&sim.design, &sim.groups, theta, FeMode::Penalized { lambda: 1e6 }, &opts).unwrap();
        assert!(fit.group_effects.as_ref().unwrap().iter().all(|(_, a)| a.abs() < 1e-30), "{:?}", fit.group_effects);
        assert!((fit.objective - pooled.objective).abs() < 1e-8);
        for name in pooled.names.iter() {
            assert!((fit.coefficient(name).unwrap() - pooled.coefficient(name).unwrap()).abs() < 1e-8);
        }
    }
}

fn augmented(sim: &Sim) -> DesignMatrix {
    let mut cols: Vec<(String, Vec<f64>)> = sim
        .design
        .names()
        .iter()
        .cloned()
        .zip(sim.design.columns().iter().cloned())
        .filter(|(n, _)| n != "const")
        .collect();
    for g in 0..sim.groups.len() {
        let d = sim.groups.index().iter().map(|&i| f64::from(u8::from(i == g))).collect();
        cols.push((format!("d{g}"), d));
    }
    DesignMatrix::new(sim.design.response().to_vec(), cols).unwrap()
}

#[test]
fn dummy_mode_matches_oracle_on_augmented_design() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let opts = SolverOptions::default();
    for case in 0..40 {
        let (g, k) = (rng.random_range(2..6), rng.random_range(1..3));
        let sim = simulate(&mut rng, g, (2, 8), k, 1.0, 1.0);
        let theta = [0.15, 0.35, 0.5, 0.75, 0.95][case % 5];
        let fit = fit_quantile_fixed_effects(&sim.design, &sim.groups, theta, FeMode::default(), &opts).unwrap();
        let oracle = fit_quantile_oracle(&augmented(&sim), theta).unwrap();
        assert!(
            (fit.objective - oracle.objective).abs() < 1e-8,
            "case {case}: {} vs {}",
            fit.objective,
            oracle.objective
        );
    }
}

#[test]
fn penalized_objective_matches_oracle() {
    // the oracle sees the penalty as two extra rows per group
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let opts = SolverOptions::default();
    for case in 0..20 {
        let sim = simulate(&mut rng, 4, (3, 6), 1, 2.0, 1.0);
        let theta = [0.25, 0.5, 0.9][case % 3];
        let lambda = [0.3, 1.0, 4.0][case % 3];
        let fit =
            fit_quantile_fixed_effects(&sim.design, &sim.groups, theta, FeMode::Penalized { lambda }, &opts).unwrap();
        let penalty: f64 = fit.group_effects.as_ref().unwrap().iter().map(|(_, a)| lambda * a.abs()).sum();

        let n = sim.design.n();
        let g = sim.groups.len();
        let mut y = sim.design.response().to_vec();
        y.extend(std::iter::repeat_n(0.0, 2 * g));
        let mut cols = vec![("const".to_string(), [vec![1.0; n], vec![0.0; 2 * g]].concat())];
        cols.push(("x0".into(), [sim.design.column("x0").unwrap().to_vec(), vec![0.0; 2 * g]].concat()));
        for gg in 0..g {
            let mut d: Vec<f64> = sim.groups.index().iter().map(|&i| f64::from(u8::from(i == gg))).collect();
            d.extend((0..2 * g).map(|r| if r / 2 == gg { if r % 2 == 0 { lambda } else { -lambda } } else { 0.0 }));
            cols.push((format!("d{gg}"), d));
        }
        let oracle = fit_quantile_oracle(&DesignMatrix::new(y, cols).unwrap(), theta).unwrap();
        assert!((fit.objective + penalty - oracle.objective).abs() < 1e-8, "case {case}");
    }
}

#[test]
fn dummy_mode_group_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sim = simulate(&mut rng, 10, (3, 3), 1, 1.0, 1.0);
    let err = fit_quantile_fixed_effects(
        &sim.design,
        &sim.groups,
        0.5,
        FeMode::Indicators { max_groups: 5 },
        &SolverOptions::default(),
    );
    assert!(matches!(err, Err(Error::TooManyGroups { groups: 10, cap: 5 })));
}

#[test]
fn moderate_panel_with_many_firms_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sim = simulate(&mut rng, 400, (6, 10), 4, 1.0, 1.0);
    let fit = fit_quantile_fixed_effects(&sim.design, &sim.groups, 0.5, FeMode::default(), &SolverOptions::default())
        .unwrap();
    assert!(fit.solver.converged);
    assert_eq!(fit.group_effects.unwrap().len(), 400);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn within_slopes_ignore_group_constants(seed in 0u64..10_000, shifts in prop::collection::vec(-50.0f64..50.0, 5)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sim = simulate(&mut rng, 5, (3, 6), 2, 1.0, 1.0);
        let base = fit_fixed_effects(&sim.design, &sim.groups).unwrap();
        let y: Vec<f64> = sim.design.response().iter().zip(sim.groups.index()).map(|(v, &g)| v + shifts[g]).collect();
        let moved = fit_fixed_effects(&sim.design.with_response(y).unwrap(), &sim.groups).unwrap();
        for (a, b) in base.coefficients.iter().zip(&moved.coefficients) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
