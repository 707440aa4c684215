//! Conjugate gradient under controlled floating-point precision.
//!
//! The crate runs Hestenes–Stiefel CG with every arithmetic operation rounded
//! to a chosen number of significant bits, records the recursive and true
//! residual side by side, and offers stopping criteria plus post-hoc
//! analyses of the attainable accuracy floor. An exact rational oracle is
//! included for checking the algebra.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cg;
pub mod criteria;
pub mod dd;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod par;
pub mod problems;
pub mod rounding;
pub mod sweep;
pub mod verify;

pub use cg::{run_cg, run_cg_with, CgProblem, CgRunResult, CgTraceRecord, RunOptions};
pub use criteria::{CriteriaSet, Criterion, GinsburgExponent, StoppingVerdict, VerdictKind};
pub use error::{Error, Result};
pub use linalg::{DenseVector, SpdMatrix, SpectralInfo};
pub use problems::{generate, Family, GeneratedProblem, GeneratorSpec};
pub use rounding::RoundingModel;
pub use experiment::{ExperimentConfig, Report};
