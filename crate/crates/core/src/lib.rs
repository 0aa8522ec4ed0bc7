//! Operator dynamics of spin chains in the Pauli basis: exact TFIM data,
//! hardware-noise surrogate, frequency-aware neural ODEs and spectral
//! extraction.

pub mod error;
pub mod exact;
pub mod node;
pub mod noise;
pub mod pauli;
pub mod spectrum;
pub mod trajectory;

pub use error::{Error, Result};
