//! Subcommand implementations.

mod attack;
mod calibrate;
mod evaluate;
mod randomness;

pub use attack::{cmd_attack, AttackRecord, AttackSummary};
pub use calibrate::{cmd_calibrate, ThresholdsFile};
pub use evaluate::cmd_evaluate;
pub use randomness::{cmd_randomness, RandomnessOutput};

use std::path::Path;

use crate::CliError;

pub(crate) fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("cannot create output dir {}: {e}", dir.display())))
}

/// Writes pretty JSON with a trailing newline. Output is byte-identical
/// for identical values: maps are ordered and nothing is timestamped.
pub(crate) fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}
