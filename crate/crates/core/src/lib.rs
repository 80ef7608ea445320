//! Payoff-based learning of generalized Nash equilibria in convex games
//! with coupling constraints.
//!
//! The library splits into three layers:
//!
//! * game description — [`game`], [`quadratic`], [`geometry`]: convex action
//!   sets, cost closures, optional analytic gradients, and a shared
//!   constraint g(a) ≤ 0 priced by a dual variable;
//! * algorithms — [`learner`] runs the payoff-based primal-dual iteration
//!   (each player sees only its own sampled cost), [`oracle`] computes
//!   reference equilibria from the gradient side, [`schedule`] holds the
//!   power-law step and exploration schedules with their admissibility
//!   conditions;
//! * tooling — [`diagnostics`] checks estimator moments, monotonicity and
//!   convergence rates; [`experiments`] builds the Cournot case study and
//!   drives configured runs; [`record`] is the persistence format.
//!
//! Everything numerical is generic over [`scalar::Scalar`]; the binary and
//! the experiment layer instantiate [`Real`]. Randomness flows exclusively
//! through [`DefaultRng`] seeded from explicit `u64`s, so every run, sweep
//! and Monte Carlo check replays exactly.

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod game;
pub mod geometry;
pub mod learner;
pub mod linalg;
pub mod oracle;
pub mod quadratic;
pub mod record;
pub mod scalar;
pub mod schedule;

/// Scalar type used by the CLI and the experiment layer.
pub type Real = f64;

/// The crate-wide RNG. Deterministic, seedable, and fast enough to never be
/// the bottleneck next to a cost evaluation.
pub type DefaultRng = rand_chacha::ChaCha8Rng;

pub use error::{Error, Result};
pub use game::{Agent, DualVector, GameSpec, JointAction};
pub use geometry::ConvexSet;
pub use learner::{run_coupled, run_uncoupled, split_seed, LearnerOptions};
pub use oracle::{solve_potential, solve_vi, EquilibriumCertificate, OracleOptions};
pub use quadratic::QuadraticGame;
pub use record::{RunRecord, RunSummary, TrajectoryRow};
pub use schedule::{CouplingMode, Schedule};
