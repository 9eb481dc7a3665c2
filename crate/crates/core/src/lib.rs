//! Variable-smoothing accelerated proximal-gradient methods for
//!
//! ```text
//!     min_x  f(x) + sum_i g_i(K_i x)
//! ```
//!
//! where `f` has a cheap proximal map, every `g_i` is convex and Lipschitz and
//! every `K_i` is linear. The nonsmooth terms are replaced by their Moreau
//! envelopes with a smoothing parameter that is driven to zero along the
//! iterations, and the smoothed problem is solved by an accelerated
//! proximal-gradient scheme (deterministic or with a Bernoulli-sampled
//! gradient estimator). Primal-dual hybrid gradient baselines share the same
//! problem representation.
//!
//! All numerical code is generic over [`Real`]; the aliases at the crate root
//! fix the scalar to `f64` (the precision every tolerance in the test-suite is
//! calibrated for) or `f32`.

pub mod checks;
pub mod error;
pub mod linops;
pub mod moreau;
pub mod pgm;
pub mod problems;
pub mod proxlib;
pub mod scalar;
pub mod schedules;
pub mod solvers;
pub mod spaces;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision block vector.
pub type BlockVectorF64 = spaces::BlockVector<f64>;
/// Single-precision block vector.
pub type BlockVectorF32 = spaces::BlockVector<f32>;
/// Shared double-precision linear operator.
pub type OperatorF64 = linops::Operator<f64>;
/// Shared double-precision proximal function.
pub type ProxF64 = proxlib::Prox<f64>;
/// Double-precision smoothed term `g ∘ K`.
pub type SmoothedTermF64 = moreau::SmoothedTerm<f64>;
/// Double-precision composite problem.
pub type CompositeProblemF64 = solvers::CompositeProblem<f64>;
/// Double-precision parameter schedule.
pub type ScheduleKindF64 = schedules::ScheduleKind<f64>;
/// Double-precision solver output.
pub type SolverResultF64 = solvers::SolverResult<f64>;
/// Double-precision trace.
pub type TraceF64 = solvers::Trace<f64>;
