// parameter validations write `!(x > 0.0)` on purpose: the negation also
// rejects NaN, which `x <= 0.0` would let through
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Robust tensor ring completion.
//!
//! The crate provides a dense tensor container with circular ring unfolding,
//! ground-truth generators with known ring rank, M-estimator loss families
//! with half-quadratic weighting, the ADMM recovery solver, the two-stage
//! coarse-to-fine completion pipeline, and the corruption / evaluation / I/O
//! machinery used to run experiments end to end.

pub mod c2f;
pub mod config;
pub mod corrupt;
pub mod error;
pub mod io;
pub mod loss;
pub mod mc;
pub mod metrics;
pub mod rng;
pub mod solver;
pub mod synth;
pub mod tensor;
pub mod unfold;

pub use error::{Result, TrcError};
pub use tensor::{linear_index, DenseTensor};
pub use unfold::{tr_fold, tr_unfold, Matrix, UnfoldSpec};
