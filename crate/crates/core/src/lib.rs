//! Panel-data toolkit for capital-structure partial-adjustment studies:
//! variable construction from firm-year statements, quantile regression with
//! firm fixed effects, fixed/random effects with the Hausman test, and
//! speed-of-adjustment estimation per quantile and macro regime.

pub mod adjustment;
pub mod effects;
pub mod error;
pub mod groups;
mod linalg;
pub mod panel_data;
pub mod pipeline;
pub mod quantile;
pub mod report;
pub mod seed;
pub mod synthgen;

pub use effects::{
    fit_fixed_effects, fit_quantile_fixed_effects, fit_random_effects, hausman_test, EffectsFit, FeMode,
    HausmanResult,
};
pub use error::{Error, Result};
pub use groups::Groups;
pub use quantile::{
    check_loss, fit_quantile, fit_quantile_oracle, pseudo_r2, Algorithm, DesignMatrix, QuantileFit,
    SolverOptions,
};
