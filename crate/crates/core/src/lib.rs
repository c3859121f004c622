//! Stein characterizations of "X has law μ and X is independent of Y".
//!
//! The crate is organised bottom-up:
//!
//! * [`targets`] validates a target density and builds the diffusion
//!   coefficients `a`, `b` whose SDE has the target as invariant measure.
//! * [`operators`] evaluates the Gaussian Stein operator `f' - x f` and the
//!   diffusion operator `a f' / 2 + b f`, pointwise and in Monte Carlo mean.
//! * [`solver`] solves Stein equations for bounded test functions and builds
//!   finite indicator and solution dictionaries with norm certificates.
//! * [`discrepancy`] estimates the product-total-variation and grouped
//!   total-variation discrepancies from paired samples and turns them into
//!   an accept/reject verdict.
//! * [`sampler`] simulates the ergodic SDE by Euler–Maruyama and draws the
//!   synthetic joint scenarios used by the test suites.
//!
//! The crate is `no_std` with `alloc`. The `std` feature (on by default)
//! is passed through to dependencies; `parallel` spreads dictionary and
//! path work over a rayon pool without changing any result bit.

#![no_std]
#![warn(missing_debug_implementations)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod discrepancy;
pub mod error;
pub mod interval;
pub mod operators;
pub mod quadrature;
pub mod sampler;
pub mod solver;
pub mod special;
pub mod stats;
pub mod targets;

mod par;
#[cfg(feature = "serde")]
mod serde_ext;

pub use discrepancy::{
    estimate_ptv_discrepancy, estimate_tv_discrepancy, independence_test, DiscrepancyKind,
    DiscrepancyReport, EntryEstimate, GroupIndex, JointSampleSet, OperatorChoice, TestConfig,
    Verdict,
};
pub use error::{Result, SteinError};
pub use interval::Interval;
pub use operators::{apply_stein_operator, expected_stein, SteinOperator, TestFunction};
pub use sampler::{sample_scenario, simulate_sde, BoundaryPolicy, Scenario, SimConfig};
pub use solver::{
    build_indicator_dictionary, build_sample_indicator_dictionary, build_solution_dictionary,
    solve_diffusion_stein, solve_gaussian_stein, Dictionary, DictionaryKind, FunctionClassBounds,
    IndicatorDictionary, SolutionDictionary, SteinSolution, TwoArgDictionary, TwoArgSolution,
};
pub use stats::MeanEstimate;
pub use targets::{
    construct_diffusion_coefficients, validate_target, Density, DiffusionCoefficients,
    QuadratureConfig, TargetDistribution,
};

/// Shared, thread-safe real function.
pub type RealFn = alloc::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>;
