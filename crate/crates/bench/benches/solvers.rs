use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qrpanel_bench::{grouped_design, random_design, synthetic_panel};
use qrpanel_core::adjustment::{estimate_speed, Leverage, TargetModelSpec};
use qrpanel_core::effects::{bootstrap_fixed_effects, FeMode};
use qrpanel_core::quantile::{bootstrap_se, BootstrapOptions};
use qrpanel_core::{fit_fixed_effects, fit_quantile, fit_quantile_fixed_effects, fit_quantile_oracle, Algorithm, SolverOptions};

fn quantile_solvers(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_quantile");
    for n in [200, 2_000, 20_000] {
        let d = random_design(n, 5, 1);
        g.bench_with_input(BenchmarkId::new("interior_point", n), &d, |b, d| {
            b.iter(|| fit_quantile(d, 0.5, &SolverOptions::default()).unwrap())
        });
        let irls = SolverOptions {
            algorithm: Algorithm::SmoothedIrls,
            ..SolverOptions::default()
        };
        g.bench_with_input(BenchmarkId::new("irls", n), &d, |b, d| {
            b.iter(|| fit_quantile(d, 0.5, &irls).unwrap())
        });
    }
    g.finish();

    let small = random_design(50, 3, 2);
    c.bench_function("oracle_simplex_n50_k3", |b| b.iter(|| fit_quantile_oracle(&small, 0.3).unwrap()));
}

fn fixed_effects(c: &mut Criterion) {
    let mut g = c.benchmark_group("fixed_effects");
    g.sample_size(20);
    for firms in [50, 500] {
        let (d, groups) = grouped_design(firms, 10, 4, 3);
        g.bench_with_input(BenchmarkId::new("quantile_indicators", firms), &(d.clone(), groups.clone()), |b, (d, gr)| {
            b.iter(|| fit_quantile_fixed_effects(d, gr, 0.5, FeMode::default(), &SolverOptions::default()).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("quantile_penalized", firms), &(d.clone(), groups.clone()), |b, (d, gr)| {
            b.iter(|| {
                fit_quantile_fixed_effects(d, gr, 0.5, FeMode::Penalized { lambda: 0.5 }, &SolverOptions::default()).unwrap()
            })
        });
        g.bench_with_input(BenchmarkId::new("within_ols", firms), &(d, groups), |b, (d, gr)| {
            b.iter(|| fit_fixed_effects(d, gr).unwrap())
        });
    }
    g.finish();
}

fn bootstrap(c: &mut Criterion) {
    let mut g = c.benchmark_group("bootstrap_b50");
    g.sample_size(10);
    let opts = BootstrapOptions {
        replications: 50,
        seed: 9,
        ..Default::default()
    };
    let d = random_design(1_000, 4, 4);
    g.bench_function("pairs_n1000", |b| {
        b.iter(|| bootstrap_se(&d, 0.5, &opts, None, &SolverOptions::default()).unwrap())
    });
    let (fd, groups) = grouped_design(100, 10, 4, 5);
    g.bench_function("cluster_fe_100x10", |b| {
        b.iter(|| {
            bootstrap_fixed_effects(&fd, &groups, 0.5, FeMode::default(), &opts, true, &SolverOptions::default()).unwrap()
        })
    });
    g.finish();
}

fn speed(c: &mut Criterion) {
    let mut g = c.benchmark_group("speed_of_adjustment");
    g.sample_size(10);
    let panel = synthetic_panel(500, 20, 6);
    let mut spec = TargetModelSpec::new(Leverage::Book);
    spec.thetas = vec![0.5];
    g.bench_function("one_step_500x20_median", |b| b.iter(|| estimate_speed(&panel, &spec).unwrap()));
    g.finish();
}

criterion_group!(benches, quantile_solvers, fixed_effects, bootstrap, speed);
criterion_main!(benches);
