//! Command implementations behind the `fdmimo` binary: beam-pattern cuts,
//! feedback and capacity curves, simulation campaigns and their summaries.
//!
//! Every CSV starts with a `#` provenance line (configuration hash, seeds,
//! tool version) followed by a header row. Files are written atomically.

pub mod campaign;
pub mod curves;
pub mod error;
pub mod output;
pub mod pattern;

pub use error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FDMIMO_OUT";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
