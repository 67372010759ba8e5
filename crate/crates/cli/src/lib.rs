//! Driver for the `roughflow` experiments: configuration, result files,
//! manifests and plotting scripts.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plots;

pub use commands::Command;
pub use config::Config;
pub use error::CliError;

use std::path::Path;

/// Runs `command` with the configuration text `config`, applying an
/// optional seed override, and writes everything into `out`.
pub fn execute(command: Command, config: &str, out: &Path, seed: Option<u64>) -> Result<Config, CliError> {
    let mut cfg = Config::parse(config)?;
    if let Some(seed) = seed {
        cfg.set_u64("seed", seed);
    }
    commands::run(command, &mut cfg, out)?;
    Ok(cfg)
}
