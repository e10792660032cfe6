//! Dense tensors, reverse-mode differentiation, Adam, and seeded random streams.

mod adam;
mod float;
mod gradcheck;
mod params;
mod rng;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use float::Float;
pub use gradcheck::{grad_check, relative_error, GradCheckReport, RELATIVE_FLOOR};
pub use params::{Binder, ParamStore};
pub use rng::{derive_seed, seed_for, RngStream};
pub use tape::{concat, Gradients, Tape, Var};
pub use tensor::Tensor;
