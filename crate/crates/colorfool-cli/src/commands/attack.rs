//! `colorfool attack`: run the configured attack over a manifest and write
//! one adversarial PNG plus one JSON record per image.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use colorfool::{srgb_to_lab, whole_image_region, Label, Variant};

use crate::config::{image_seed, ReproBlock, RunConfig};
use crate::manifest::{load_manifest, load_rgb_image, save_png, ManifestRecord};
use crate::{commands, CliError};

/// Per-image attack record, written as `<stem>.record.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackRecord {
    pub stem: String,
    pub image_path: String,
    pub image_index: usize,
    pub variant: Variant,
    /// Per-image seed: base seed XOR image index.
    pub seed: u64,
    pub success: bool,
    pub trials_used: u32,
    pub original_class: Label,
    pub final_class: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub repro: ReproBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackSummary {
    pub images: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub variant: Variant,
    pub repro: ReproBlock,
}

/// Failed attacks (oracle never misled) are data and still exit 0; only
/// operational failures (unreadable inputs, oracle transport) error out.
pub fn cmd_attack(manifest_path: &Path, config: &RunConfig) -> Result<AttackSummary, CliError> {
    let records = load_manifest(manifest_path)?;
    commands::ensure_out_dir(&config.out_dir)?;
    let oracle = config.oracle.build(config.workers.max(1))?;
    let mapping = config.category_mapping()?;
    let repro = config.repro_block();

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<AttackRecord>>> = Mutex::new(vec![None; records.len()]);
    let failure: Mutex<Option<CliError>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..config.workers.max(1).min(records.len()) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                if index >= records.len() || failure.lock().unwrap().is_some() {
                    break;
                }
                match attack_one(&records[index], index, config, oracle.as_ref(), &mapping, &repro)
                {
                    Ok(record) => results.lock().unwrap()[index] = Some(record),
                    Err(e) => {
                        let mut slot = failure.lock().unwrap();
                        if slot.is_none() {
                            *slot = Some(e);
                        }
                        break;
                    }
                }
            });
        }
    });

    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let records: Vec<AttackRecord> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("all images processed"))
        .collect();

    let successes = records.iter().filter(|r| r.success).count();
    let summary = AttackSummary {
        images: records.len(),
        successes,
        success_rate: successes as f64 / records.len() as f64,
        variant: config.variant,
        repro,
    };
    commands::write_json(&config.out_dir.join("attack_summary.json"), &summary)?;
    Ok(summary)
}

fn attack_one(
    record: &ManifestRecord,
    index: usize,
    config: &RunConfig,
    oracle: &dyn colorfool::ClassifierOracle,
    mapping: &colorfool::CategoryMapping,
    repro: &ReproBlock,
) -> Result<AttackRecord, CliError> {
    let stem = record.stem()?;
    let img = load_rgb_image(&record.image_path)?;
    let lab = srgb_to_lab(&img);

    let mut warning = None;
    let regions = match (config.variant, &record.label_map_path) {
        (Variant::ColorFool, Some(path)) => {
            let labels = colorfool::load_label_map(path)?;
            colorfool::decompose(&lab, &labels, mapping)?
        }
        (Variant::ColorFool, None) => {
            warning = Some(
                "no label map in manifest; fell back to a whole-image non-sensitive region"
                    .to_string(),
            );
            whole_image_region(&lab)
        }
        _ => whole_image_region(&lab),
    };

    let seed = image_seed(config.seed, index);
    let result = colorfool::run_attack(&img, &regions, oracle, &config.attack_config(seed))?;
    log::info!(
        "{stem}: success={} trials={} {} -> {}",
        result.success,
        result.trials_used,
        result.original_class.index,
        result.final_class.index
    );

    save_png(&result.adversarial, &config.out_dir.join(format!("{stem}.adv.png")))?;
    let record = AttackRecord {
        stem: stem.clone(),
        image_path: record.image_path.display().to_string(),
        image_index: index,
        variant: config.variant,
        seed,
        success: result.success,
        trials_used: result.trials_used,
        original_class: result.original_class,
        final_class: result.final_class,
        warning,
        repro: repro.clone(),
    };
    commands::write_json(&config.out_dir.join(format!("{stem}.record.json")), &record)?;
    Ok(record)
}
