//! Battery degradation diagnostics from incremental-capacity curves.
//!
//! The crate builds a half-cell model of a lithium-ion cell, generates
//! synthetic aging data from it, and trains physics-informed and purely
//! data-driven estimators of four health parameters: usable capacity,
//! positive and negative active mass, and the lithium inventory indicator.

// `!(x > 0.0)` checks are written that way to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod datagen;
pub mod electrode;
pub mod error;
pub mod evaluation;
pub mod exec;
pub mod halfcell;
pub mod interp;
pub mod learners;
pub mod linalg;
pub mod optim;
pub mod piml;
pub mod sampling;

pub use error::{Error, Result};
pub use exec::Execution;
