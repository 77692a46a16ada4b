// SPDX-License-Identifier: MIT OR Apache-2.0

//! Config-driven experiment runner behind the `medlab` and `cda` binaries.

pub mod config;
pub mod logits;
pub mod outputs;
pub mod pipeline;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};
pub use outputs::{Manifest, MANIFEST_FILE};
pub use pipeline::{run_experiment, validate, RunError};

/// Applies `MEDLAB_THREADS` to the global worker pool.
pub fn init_threads() -> Result<(), ConfigError> {
    let Ok(v) = std::env::var("MEDLAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| ConfigError::Invalid {
            field: "MEDLAB_THREADS",
            message: format!("`{v}` is not a positive integer"),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| ConfigError::Invalid {
            field: "MEDLAB_THREADS",
            message: e.to_string(),
        })
}
