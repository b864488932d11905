//! Campaign runner for the constrained Bayesian optimizer: configuration
//! documents, auto mode against the built-in testbed, ask-tell mode for
//! external evaluators, iteration logs, plot data and resume.

// `!(a > b)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asktell;
pub mod config;
pub mod error;
pub mod output;
pub mod plots;
pub mod run;

pub use config::{parse_config, Campaign, Names};
pub use error::CliError;

use std::path::Path;

/// Reads and validates a campaign document.
pub fn load_config(path: &Path) -> Result<Campaign, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
