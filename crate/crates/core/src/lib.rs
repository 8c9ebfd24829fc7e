//! Design of incoherent unit-norm frames.
//!
//! Frames are improved one vector at a time: each vector is moved inside a
//! trust region chosen so that the mutual coherence can never increase, by
//! solving a small convex minimax problem. A unit polar step is used to
//! escape local minima. The crate also carries the sparse-recovery
//! applications that consume such frames (OMP, a compressed sensing
//! benchmark and coherence-preserving dictionary adaptation) and the file
//! formats used by the `sidco` command-line tool.

// NaN must fail validity checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod frame;
pub mod io;
pub mod numerics;
pub mod sidco;
pub mod sparse;
pub mod subproblem;

pub use error::{Error, Result};
pub use frame::{Frame, FrameMetrics};
pub use numerics::DenseMatrix;
