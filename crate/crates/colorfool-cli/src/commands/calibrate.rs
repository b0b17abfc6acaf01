//! `colorfool calibrate`: fit per-filter detection thresholds on clean
//! images at a 5% false-positive rate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use colorfool::{calibrate, DetectionThreshold, FilterSpec, RgbImage};

use crate::config::RunConfig;
use crate::manifest::{load_manifest, load_rgb_image};
use crate::{commands, CliError};

/// On-disk thresholds, keyed by `kind:parameter`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdsFile {
    pub oracle_id: String,
    pub repro: crate::config::ReproBlock,
    pub thresholds: BTreeMap<String, f64>,
}

impl ThresholdsFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read thresholds {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad thresholds file {}: {e}", path.display())))
    }

    pub fn detection_thresholds(&self) -> Result<Vec<DetectionThreshold>, CliError> {
        self.thresholds
            .iter()
            .map(|(key, tau)| {
                let filter: FilterSpec = key
                    .parse()
                    .map_err(|e: colorfool::DefenseError| CliError::Usage(e.to_string()))?;
                Ok(DetectionThreshold {
                    filter,
                    oracle_id: self.oracle_id.clone(),
                    tau: *tau,
                })
            })
            .collect()
    }
}

pub fn cmd_calibrate(manifest_path: &Path, config: &RunConfig) -> Result<PathBuf, CliError> {
    let records = load_manifest(manifest_path)?;
    commands::ensure_out_dir(&config.out_dir)?;
    let oracle = config.oracle.build(config.workers.max(1))?;
    let images: Vec<RgbImage> = records
        .iter()
        .map(|r| load_rgb_image(&r.image_path))
        .collect::<Result<_, _>>()?;

    let mut thresholds = BTreeMap::new();
    for filter in &config.filters {
        let threshold = calibrate(&images, oracle.as_ref(), *filter)?;
        log::info!("{filter}: tau = {}", threshold.tau);
        thresholds.insert(filter.to_string(), threshold.tau);
    }

    let file = ThresholdsFile {
        oracle_id: oracle.id(),
        codec: colorfool::defenses::jpeg_codec_id(),
        config_hash: config.config_hash(),
        thresholds,
    };
    let path = config.out_dir.join("thresholds.json");
    commands::write_json(&path, &file)?;
    Ok(path)
}
