//! Frank-Wolfe optimization over probability distributions driven by Gateaux
//! (directional) derivatives, and a max-min saddle-point solver for nonlinear
//! distributionally robust optimization over Wasserstein balls.
//!
//! The crate is organised bottom-up:
//!
//! * [`risk`]: regular risk measures, their directional derivatives and
//!   smoothness constants.
//! * [`ambiguity`]: discrete distributions, moment states and Wasserstein-ball
//!   descriptions (plus an exact transport solver used for verification).
//! * [`fw`]: the norm-free Frank-Wolfe engine with its two step-size regimes.
//! * [`saddle`]: the max-min algorithm, Danskin derivatives, regularization and
//!   epsilon-saddle verification.
//! * [`minvar`]: the distributionally robust minimum-variance portfolio problem
//!   with closed-form and trust-region based oracles.
//! * [`experiment`]: seeded instance generation and convergence sweeps with
//!   CSV/JSON output.

pub mod ambiguity;
pub mod error;
pub mod experiment;
pub mod fw;
pub mod linalg;
pub mod minvar;
pub mod risk;
pub mod saddle;

pub use ambiguity::{AmbiguitySpec, DiscreteDistribution, MomentState, NormTag, Support};
pub use error::{Error, Result};
pub use fw::{FwConfig, FwProblem, FwRecord, FwTrace, OracleStep, StepRegime, Termination};
pub use minvar::{FeasibleSet, MinVarInstance, MinVarProblem, OracleOutput, RegularityConstants};
pub use saddle::{EpsSaddleReport, NdroConstants, NdroProblem, SaddleConfig, SaddleResult};
