//! Deterministic finite-scale simulator for obstacle-coded forcing
//! constructions: builds descending sequences of tagged conditions, codes a
//! secret bit stream into the resulting generic fragments, and decodes it
//! back.

pub mod cli;
pub mod cohen;
pub mod error;
pub mod instances;
pub mod mathias;
pub mod order;
pub mod projection;
pub mod requirements;
pub mod tagged;
pub mod trace;
pub mod wide;

pub use error::{Error, Result};
