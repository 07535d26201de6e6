//! Key-dropout attention regularization.

pub mod attention;
pub mod cli;
mod error;
pub mod harness;
pub mod masks;
pub mod numerics;
pub mod rng;
pub mod theory;
pub mod vit;

pub use error::{Error, Result};
