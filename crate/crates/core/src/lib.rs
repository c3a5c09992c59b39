//! Wasserstein costs between discrete measures on `R^n` that share a copula.
//!
//! The crate builds the quantile coupling through a shared copula (the
//! "diamond" coupling), checks it against an exact network-simplex solver,
//! and constructs explicit instances where the coupling stops being optimal
//! for `||x - y||_q^p` with `p != q`.

pub mod copulas;
pub mod counterexample;
pub mod error;
pub mod instances;
pub mod measures;
pub mod transport;

pub use copulas::{empirical_copula, sklar_compose, uniform_grid_measure, Checkerboard, Copula};
pub use error::{Error, Result};
pub use measures::{AffineMap, DiscreteMeasure1D, MultivariateMeasure};
pub use transport::{
    diamond, exact_ot, inner_product_score, norm_cost, plan_cost, validate_plan, wasserstein_1d,
    CostSpec, OtSolution, PlanEntry, TransportPlan,
};
