//! `colorfool evaluate`: score already-generated adversarial images against
//! their clean counterparts and emit the CSV report plus JSON summary.

use std::path::Path;

use colorfool::{detect, top1, EvalReport, ImageRecord, ReportMetadata};

use crate::commands::{ensure_out_dir, write_json, AttackRecord, ThresholdsFile};
use crate::config::RunConfig;
use crate::manifest::{load_manifest, load_rgb_image};
use crate::CliError;

pub fn cmd_evaluate(
    adv_dir: &Path,
    manifest_path: &Path,
    thresholds_path: &Path,
    config: &RunConfig,
) -> Result<EvalReport, CliError> {
    let records = load_manifest(manifest_path)?;
    ensure_out_dir(&config.out_dir)?;
    let oracle = config.oracle.build(config.workers.max(1))?;

    let thresholds_file = ThresholdsFile::load(thresholds_path)?;
    if thresholds_file.oracle_id != oracle.id() {
        return Err(CliError::Usage(format!(
            "thresholds were calibrated for {:?} but the run oracle is {:?}",
            thresholds_file.oracle_id,
            oracle.id()
        )));
    }
    let thresholds = thresholds_file.detection_thresholds()?;

    let test_oracle = config
        .test_oracle
        .as_ref()
        .map(|spec| spec.build(config.workers.max(1)))
        .transpose()?;

    let mut image_records = Vec::with_capacity(records.len());
    for record in &records {
        let stem = record.stem()?;
        let adv_path = adv_dir.join(format!("{stem}.adv.png"));
        if !adv_path.is_file() {
            return Err(CliError::Io(format!(
                "no adversarial image for {stem:?}: expected {}",
                adv_path.display()
            )));
        }
        let clean = load_rgb_image(&record.image_path)?;
        let adv = load_rgb_image(&adv_path)?;

        let clean_class = top1(&oracle.predict(&clean).map_err(CliError::from)?).index;
        let adv_class = top1(&oracle.predict(&adv).map_err(CliError::from)?).index;

        let mut post_filter_class = std::collections::BTreeMap::new();
        for filter in &config.filters {
            let filtered = filter
                .apply(&adv)
                .map_err(|e| CliError::Io(e.to_string()))?;
            let class = top1(&oracle.predict(&filtered).map_err(CliError::from)?).index;
            post_filter_class.insert(filter.to_string(), class);
        }

        let detection = detect(&adv, oracle.as_ref(), &thresholds)?;

        let (transfer_clean_class, transfer_adv_class) = match &test_oracle {
            Some(test) => (
                Some(top1(&test.predict(&clean).map_err(CliError::from)?).index),
                Some(top1(&test.predict(&adv).map_err(CliError::from)?).index),
            ),
            None => (None, None),
        };

        let trials_used = read_attack_record(&adv_dir.join(format!("{stem}.record.json")))
            .map(|r| r.trials_used);

        image_records.push(ImageRecord {
            stem,
            clean_class,
            adv_class,
            success: adv_class != clean_class,
            trials_used,
            post_filter_class,
            detector_flag: detection.per_filter,
            transfer_clean_class,
            transfer_adv_class,
            quality: None,
        });
    }

    let report = EvalReport {
        metadata: ReportMetadata {
            attack_oracle: oracle.id(),
            test_oracle: test_oracle.map(|t| t.id()),
            codec: colorfool::defenses::jpeg_codec_id(),
            seed: Some(config.seed),
            config_hash: Some(config.config_hash()),
        },
        records: image_records,
    };

    let csv = report.to_csv()?;
    std::fs::write(config.out_dir.join("report.csv"), csv)
        .map_err(|e| CliError::Io(format!("cannot write report.csv: {e}")))?;
    write_json(&config.out_dir.join("summary.json"), &report.summary())?;
    Ok(report)
}

fn read_attack_record(path: &Path) -> Option<AttackRecord> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}
