pub mod cli;
pub mod diagnostics;
pub mod epi;
pub mod error;
pub mod ols;
pub mod panel;
pub mod placebo;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
