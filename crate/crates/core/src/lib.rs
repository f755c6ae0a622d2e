//! Complete subset averaging two-stage least squares (CSA2SLS).
//!
//! The first-stage prediction of the regressors is averaged over every
//! size-`k` subset of the excluded instruments (or a uniform random sample
//! of them when there are too many), and `k` is picked by minimizing a
//! sample approximate-MSE criterion. The crate also ships a seeded Monte
//! Carlo harness comparing OLS, 2SLS and CSA2SLS on an equicorrelated
//! instrument design, and a `csa2sls` binary exposing both workflows.
//!
//! ```no_run
//! use csa2sls::{dataframe, Csa2slsOptions};
//!
//! let table = dataframe::load_csv("data.csv").unwrap();
//! let iv = dataframe::expand_varlist("z1-z4", table.column_names()).unwrap();
//! let frame = dataframe::build_model_frame(&table, "y", &[], &["x".into()], &iv, true).unwrap();
//! let fit = csa2sls::csa2sls(&frame, &Csa2slsOptions::default()).unwrap();
//! println!("b = {}", fit.b);
//! ```
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod amse;
pub mod cli;
pub mod dataframe;
mod error;
pub mod estimators;
pub mod linalg;
pub mod montecarlo;
pub mod numfmt;
pub mod rng;
pub mod subsets;

pub use amse::{
    csa2sls, preliminary_estimate, select_optimal_k, AmseTable, Csa2slsOptions, PrelimMode,
    PreliminaryFit,
};
pub use dataframe::{ModelFrame, Table};
pub use error::{Error, Result};
pub use estimators::{
    accumulate_projection_stats, csa2sls_fixed_k, ols, tsls, EstimationResult, EstimatorKind,
    ProjectionMode, ProjectionStats,
};
pub use subsets::{build_subset_plan, SubsetPlan};

/// Default cap on the number of subsets averaged per `k`.
pub const DEFAULT_MAX_SUBSETS: usize = 100;
/// Default seed for subset sampling.
pub const DEFAULT_SEED: u64 = 2022;
