//! Large-scale 0-1 knapsack solving by penalized gradient ascent.
//!
//! The crate turns a knapsack instance into an unconstrained maximization
//! over one scalar parameter per item: a binary estimator (straight-through
//! or pass-through) maps each parameter to a selection bit, and a squared
//! rectified penalty with an adaptively chosen weight enforces the budget.
//! The solver runs plain mini-batch gradient ascent with early stopping and
//! returns the best feasible selection it observed.
//!
//! Besides the solver, the crate ships:
//!
//! * [`instance`] — instance representation, validation, CSV I/O, and
//!   seeded generators for the classic benchmark families (uncorrelated,
//!   weakly/strongly/inverse-strongly correlated, with optional spanner
//!   variants).
//! * [`oracle`] — exact and baseline solvers for verification: brute
//!   force, dynamic programming, ratio greedy, and the fractional
//!   (Dantzig) upper bound.
//! * [`problem`] — the abstract constrained-maximization interface the
//!   solver operates on, with knapsack, toy, and custom bindings.
//! * [`estimator`] — the binary estimators and their slope annealing.
//! * [`kernels`] — deterministic data-parallel primitives shared by the
//!   hot loops (identical results with and without the `parallel`
//!   feature).
//!
//! All randomness is ChaCha8 seeded from explicit 64-bit seeds, so every
//! generated instance and every solver run reproduces exactly.

pub mod estimator;
pub mod instance;
pub mod kernels;
pub mod oracle;
pub mod problem;
pub mod solver;

pub use estimator::{EstimatorConfig, EstimatorKind, EstimatorState};
pub use instance::{Family, GeneratorSpec, KnapsackInstance, SpannerSpec};
pub use oracle::{brute_force, dantzig_bound, dp_exact, greedy, OracleResult};
pub use problem::ConstrainedProblem;
pub use solver::{
    compute_beta, lagrangian, optimal_lambda, solve, solve_traced, InitScheme, Solution,
    SolverConfig, SolverState, TraceRecord,
};
