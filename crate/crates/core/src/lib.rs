//! Tensor-network weight-update adapters with frozen random factors and
//! trainable diagonal scaling, baseline adapters, training on desk-scale
//! tasks, and numerical checks of the adapter's rank, parameter-count and
//! approximation bounds.

pub mod adapters;
pub mod analysis;
pub mod error;
pub mod linalg;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Result, TeraError};
pub use tensor::{Matrix, Tensor, TensorizationScheme};
