use std::fs;
use std::path::{Path, PathBuf};

use emfisim_core::faults::FaultModel;
use emfisim_core::formats::FormatKind;
use serde::Deserialize;

use crate::error::CliError;

/// Optional settings shared by every subcommand. Command-line flags take
/// precedence over these fields.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub eval: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub fault_model: Option<FaultModel>,
    pub seed: Option<u64>,
    pub chunk_len: Option<usize>,
    pub formats: Option<Vec<FormatKind>>,
    pub map_width: Option<usize>,
    pub bytes_per_cell: Option<usize>,
}

impl RunConfig {
    /// Reads a JSON config; relative paths are taken from the config's
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.model,
            &mut cfg.manifest,
            &mut cfg.weights,
            &mut cfg.eval,
            &mut cfg.out,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// The flag value if given, else the config value, else a usage error.
pub fn pick<T: Clone>(flag: Option<T>, config: &Option<T>, name: &str) -> Result<T, CliError> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::Usage(format!("missing --{name} (not set in config either)")))
}
