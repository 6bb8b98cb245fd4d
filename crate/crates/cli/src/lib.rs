//! File formats, reports, plots and the command pipeline around
//! [`ecg_cvae_core`].

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod plot;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, CliResult};
