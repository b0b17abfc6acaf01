//! `colorfool randomness`: repeat the attack on one image with distinct
//! seeds and report how the outcome varies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use colorfool::{randomness_study, srgb_to_lab, whole_image_region, RandomnessStats};

use crate::config::{ReproBlock, RunConfig};
use crate::manifest::load_rgb_image;
use crate::{commands, CliError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomnessOutput {
    pub image: String,
    pub stats: RandomnessStats,
    pub repro: ReproBlock,
}

pub fn cmd_randomness(
    image_path: &Path,
    label_map: Option<&Path>,
    runs: u32,
    config: &RunConfig,
) -> Result<RandomnessOutput, CliError> {
    commands::ensure_out_dir(&config.out_dir)?;
    let oracle = config.oracle.build(config.workers.max(1))?;
    let img = load_rgb_image(image_path)?;
    let lab = srgb_to_lab(&img);
    let regions = match label_map {
        Some(path) => {
            let labels = colorfool::load_label_map(path)?;
            colorfool::decompose(&lab, &labels, &config.category_mapping()?)?
        }
        None => whole_image_region(&lab),
    };

    let stats = randomness_study(
        &img,
        &regions,
        oracle.as_ref(),
        runs,
        &config.attack_config(config.seed),
    )?;
    let output = RandomnessOutput {
        image: image_path.display().to_string(),
        stats,
        repro: config.repro_block(),
    };

    let stem = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".to_string());
    commands::write_json(
        &config.out_dir.join(format!("{stem}.randomness.json")),
        &output,
    )?;
    println!(
        "runs={} sr={:.3} trials median={} q25={} q75={} distinct_final_classes={}",
        output.stats.runs,
        output.stats.success_rate,
        output.stats.trials.median,
        output.stats.trials.q25,
        output.stats.trials.q75,
        output.stats.distinct_final_classes
    );
    Ok(output)
}
