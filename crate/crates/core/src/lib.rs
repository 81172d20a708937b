//! Resonances of one-dimensional semiclassical Schrödinger operators
//! `P(h) = -h² d²/dx² + V(x)` by complex absorbing potentials and exterior
//! complex scaling, checked against an exact transfer-matrix oracle.

pub mod analysis;
pub mod error;
pub mod exec;
pub mod model;
pub mod operators;
pub mod oracle;
pub mod spectra;

pub use error::{Error, Result};
pub use faer::c64;
pub use num_complex::Complex64;
