//! File formats, asset loading, synthetic fixtures and the command-line
//! driver around [`erratlas_core`].

pub mod assets;
pub mod cli;
mod error;
pub mod fixture;
pub mod formats;
pub mod pipeline;

pub use error::{Error, Result};
