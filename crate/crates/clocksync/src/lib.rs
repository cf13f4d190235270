//! Experiment harness for `clocksync-core`: configuration files, parallel
//! Monte-Carlo runs with reproducible random streams, and CSV output.

pub mod config;
pub mod harness;
pub mod output;

pub use config::{load_config, parse_config};
pub use harness::{run_experiment, run_rngs, PointResult};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("bad config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Invalid(#[from] clocksync_core::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
