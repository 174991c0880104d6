//! Hierarchical (trilevel and multilevel) convex minimization by a single
//! fixed-point iteration over proximal-gradient maps.
//!
//! A trilevel problem stacks three levels: a composite bottom objective
//! `phi2 = f2 + g2`, a middle objective `phi1 = f1 + g1` minimized over the
//! bottom solution set, and a strongly convex selector `omega` minimized over
//! what remains. Each level is turned into a map:
//!
//! * `S(x) = x - u grad(omega)(x)`, a contraction,
//! * `T(x) = prox_{t g1}(x - t grad f1(x))`,
//! * `W(x) = prox_{s g2}(x - s grad f2(x))`,
//!
//! and the iteration is the convex combination
//! `x_k = a_k S(x_{k-1}) + (1 - a_k) b_k T(x_{k-1}) + (1 - a_k)(1 - b_k) W(x_{k-1})`.
//!
//! ```
//! use multilevel_prox::{gallery, trilevel_solve, SolverConfig};
//!
//! let entry = gallery("nested3").unwrap();
//! let problem = entry.trilevel().unwrap();
//! let cfg = SolverConfig::new(entry.schedule.clone(), 2_000, entry.x0.clone());
//! let trace = trilevel_solve(problem, &cfg).unwrap();
//! assert!(trace.last().unwrap().res_w < 1e-2);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod operators;
pub mod oracle;
pub mod schedules;
pub mod solver;

pub use diagnostics::{
    bound_constants, check_rate_bound, distance_series, fejer_check, halfspace_condition_check,
    rate_fit, regularity_check, BoundConstants, FejerRateParams,
};
pub use error::{Error, Result};
pub use operators::{
    contraction_apply, contraction_factor, gradient_map_residual, prox_eval, proxgrad_apply,
    AffineConstraint, Contraction, CustomMap, LayerMap, Matrix, ProxGrad, ProxableSpec, SmoothSpec,
    Vector,
};
pub use oracle::{
    affine_argmin, gallery, gallery_names, grid_argmin, mixed_vi_oracle, nested_solve_oracle,
    AffineSet, GalleryEntry, GalleryProblem, OracleSet, OracleSolution,
};
pub use schedules::{
    classify_regime, make_multilevel_weights, schedule_at, Delta, RegimeReport, Schedule,
    Table2Case,
};
pub use solver::{
    multilevel_solve, multilevel_step, trilevel_solve, trilevel_step, IterateRecord,
    MultilevelProblem, SolverConfig, TerminalStatus, Trace, TrilevelProblem, WeightRule,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/operators.md")]
    mod operators {}
    #[doc = include_str!("../../../book/src/schedules.md")]
    mod schedules {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod oracle {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
