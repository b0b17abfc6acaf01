//! Run configuration shared by the subcommands.

use std::path::PathBuf;
use std::sync::Arc;

use serde::Serialize;
use sha2::{Digest, Sha256};

use colorfool::{
    CategoryMapping, ClassifierOracle, FilterSpec, ReferenceClassifier, RemoteOracle, Variant,
};

use crate::CliError;

/// Where predictions come from: the in-process reference classifier or a
/// remote endpoint speaking the wire protocol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum OracleSpec {
    Reference(PathBuf),
    Remote(String),
}

impl OracleSpec {
    /// Parses `ref:<weights-path>` or `remote:<host:port>`.
    pub fn parse(s: &str) -> Result<Self, CliError> {
        if let Some(path) = s.strip_prefix("ref:") {
            Ok(OracleSpec::Reference(PathBuf::from(path)))
        } else if let Some(addr) = s.strip_prefix("remote:") {
            Ok(OracleSpec::Remote(addr.to_string()))
        } else {
            Err(CliError::Usage(format!(
                "oracle spec {s:?} must be ref:<weights-path> or remote:<host:port>"
            )))
        }
    }

    pub fn build(&self, pool_size: usize) -> Result<Arc<dyn ClassifierOracle>, CliError> {
        match self {
            OracleSpec::Reference(path) => {
                Ok(Arc::new(ReferenceClassifier::from_path(path).map_err(
                    |e| match e {
                        colorfool::OracleError::Transport(io) => {
                            CliError::Io(format!("cannot read weights {}: {io}", path.display()))
                        }
                        other => CliError::Usage(other.to_string()),
                    },
                )?))
            }
            OracleSpec::Remote(addr) => Ok(Arc::new(
                RemoteOracle::connect(addr.clone())
                    .map_err(|e| CliError::Oracle(e.to_string()))?
                    .with_pool_size(pool_size),
            )),
        }
    }
}

impl std::fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleSpec::Reference(p) => write!(f, "ref:{}", p.display()),
            OracleSpec::Remote(a) => write!(f, "remote:{a}"),
        }
    }
}

/// Everything a run needs beyond its subcommand-specific inputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub variant: Variant,
    pub max_trials: u32,
    pub seed: u64,
    pub oracle: OracleSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_oracle: Option<OracleSpec>,
    pub filters: Vec<FilterSpec>,
    pub category_map: Option<PathBuf>,
    #[serde(skip)]
    pub out_dir: PathBuf,
    #[serde(skip)]
    pub workers: usize,
}

impl RunConfig {
    pub fn attack_config(&self, seed: u64) -> colorfool::AttackConfig {
        colorfool::AttackConfig {
            max_trials: self.max_trials,
            seed,
            variant: self.variant,
        }
    }

    /// Category mapping: the bundled ADE20K table unless overridden.
    pub fn category_mapping(&self) -> Result<CategoryMapping, CliError> {
        match &self.category_map {
            Some(path) => Ok(CategoryMapping::from_path(path)?),
            None => Ok(CategoryMapping::ade20k()),
        }
    }

    /// Hash of the run-relevant configuration, recorded in every output so
    /// replays can be checked byte for byte. Worker count and output
    /// directory are excluded: they never change results.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in &digest[..8] {
            hex.push_str(&format!("{byte:02x}"));
        }
        format!("sha256:{hex}")
    }

    /// Reproducibility block written into records and summaries.
    pub fn repro_block(&self) -> ReproBlock {
        ReproBlock {
            base_seed: self.seed,
            config_hash: self.config_hash(),
            codec: colorfool::defenses::jpeg_codec_id(),
            oracle: self.oracle.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct ReproBlock {
    pub base_seed: u64,
    pub config_hash: String,
    pub codec: String,
    pub oracle: String,
}

/// Parses the `--filters` comma list; an empty option means the full grid.
pub fn parse_filters(arg: Option<&str>) -> Result<Vec<FilterSpec>, CliError> {
    match arg {
        None => Ok(FilterSpec::full_grid()),
        Some(list) => list
            .split(',')
            .map(|item| {
                item.trim()
                    .parse::<FilterSpec>()
                    .map_err(|e| CliError::Usage(e.to_string()))
            })
            .collect(),
    }
}

/// Per-image seed: the run seed XORed with the image's manifest index, so
/// work splits across any worker count without changing outputs.
pub fn image_seed(base: u64, index: usize) -> u64 {
    base ^ index as u64
}
