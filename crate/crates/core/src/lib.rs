//! Multi-modal self-supervised representation learning for skeleton action sequences.
//!
//! Joint, motion and bone views of a sequence are embedded per modality, fused early,
//! and encoded once by a shared dual-stream transformer. Training uses either a
//! two-view variance/covariance-regularized baseline or the unified objective with
//! modality-aware projectors and intra-/inter-modal consistency.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod fidelity;
pub mod kernel;
pub mod losses;
pub mod model;
pub mod training;

pub use error::{Error, Result};
