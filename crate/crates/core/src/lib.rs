pub mod age;
pub mod coeffs;
pub mod config;
pub mod diagnostics;
pub mod diffusion;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod grid;
pub mod oracle;
pub mod output;
pub mod steady;
pub mod verify;

pub use error::{Error, Result};
