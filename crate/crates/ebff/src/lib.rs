//! Numerics for the vertex-operator approach to form factors of the
//! (ℤ/nℤ)-symmetric Belavin model: elliptic special functions, lattice
//! relations, corner transfer matrix traces, free-field contraction kernels
//! and the n = 2 form factors.

pub mod ctm;
pub mod error;
pub mod exec;
pub mod formfactor;
pub mod freefield;
pub mod kernels;
pub mod lattice;
pub mod qseries;

pub use error::{Error, Result};
pub use exec::Exec;
pub use num_complex::Complex64 as C64;
pub use qseries::{EllipticParams, TruncationPolicy};
