//! Fixtures shared by the criterion benches.

use qrpanel_core::panel_data::Panel;
use qrpanel_core::seed::rng_for;
use qrpanel_core::synthgen::{generate_panel, SynthConfig};
use qrpanel_core::{DesignMatrix, Groups};
use rand::Rng;

/// `n` rows, intercept plus `k - 1` uniform regressors, skewed noise.
pub fn random_design(n: usize, k: usize, seed: u64) -> DesignMatrix {
    let mut rng = rng_for(seed, 0, 0);
    let cols: Vec<(String, Vec<f64>)> = (1..k)
        .map(|j| (format!("x{j}"), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    let y = (0..n)
        .map(|i| {
            let signal: f64 = cols.iter().map(|(_, c)| c[i]).sum();
            let u: f64 = rng.random_range(0.0..1.0);
            signal + u * u * 3.0
        })
        .collect();
    DesignMatrix::with_intercept(y, cols).expect("valid design")
}

/// Random design with `firms` groups of `years` rows and firm-level shifts.
pub fn grouped_design(firms: usize, years: usize, k: usize, seed: u64) -> (DesignMatrix, Groups) {
    let n = firms * years;
    let base = random_design(n, k, seed);
    let shift: Vec<f64> = (0..firms).map(|f| (f % 7) as f64 * 0.3).collect();
    let y = base
        .response()
        .iter()
        .enumerate()
        .map(|(i, v)| v + shift[i / years])
        .collect();
    let labels: Vec<usize> = (0..n).map(|i| i / years).collect();
    (base.with_response(y).expect("same length"), Groups::from_labels(&labels))
}

pub fn synthetic_panel(firms: usize, years: usize, seed: u64) -> Panel {
    let cfg = SynthConfig {
        n_firms: firms,
        t_max: years,
        seed,
        ..SynthConfig::default()
    };
    generate_panel(&cfg).and_then(|p| p.derived()).expect("synthetic panel")
}
