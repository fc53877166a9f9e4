//! Numerical laboratory for the Anderson model `H = Δ + λV` on the
//! stretched Bethe trees `Γ(k, γ)`.

pub mod diagnostics;
pub mod error;
pub mod green;
pub mod moments;
pub mod operator;
pub mod segmentation;
pub mod tree;

pub use error::{Error, Result};
