//! Detection calibration and attack metrics.
//!
//! Detection compares an oracle's probability vector on an image against
//! the vector on the filtered image; the L1 gap is thresholded at a value
//! calibrated for a 5% false-positive rate on clean images. The metric
//! operations are pure folds over results and images, and the per-image
//! report they feed keeps enough detail that every aggregate can be
//! recomputed from its records.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{AttackConfig, AttackError, AttackResult};
use crate::colorspace::RgbImage;
use crate::defenses::{DefenseError, FilterSpec};
use crate::oracle::{top1, ClassifierOracle, OracleError};
use crate::regions::RegionSet;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Defense(#[from] DefenseError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("paired inputs differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("calibration needs at least {need} clean images, got {got}")]
    TooFewCalibrationImages { got: usize, need: usize },
    #[error("threshold was calibrated for oracle {expected:?}, queried with {actual:?}")]
    ThresholdOracleMismatch { expected: String, actual: String },
    #[error("csv serialization failed: {0}")]
    Csv(String),
}

/// Detection threshold for one (filter, oracle) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionThreshold {
    pub filter: FilterSpec,
    pub oracle_id: String,
    pub tau: f64,
}

/// L1 norm between the prediction vectors of `img` and of `img` after the
/// filter; always in `[0,2]`.
pub fn l1_prob_gap(
    oracle: &dyn ClassifierOracle,
    img: &RgbImage,
    filter: FilterSpec,
) -> Result<f64, EvalError> {
    let before = oracle.predict(img)?;
    let after = oracle.predict(&filter.apply(img)?)?;
    Ok(before.l1_distance(&after)?)
}

/// Nearest-rank 95th percentile: the smallest observed gap such that at
/// most 5% of the gaps are strictly greater.
pub fn threshold_from_gaps(gaps: &[f64]) -> Result<f64, EvalError> {
    if gaps.is_empty() {
        return Err(EvalError::EmptyInput("calibration gaps"));
    }
    let mut sorted = gaps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let allowed = (0.05 * sorted.len() as f64).floor() as usize;
    Ok(sorted[sorted.len() - 1 - allowed])
}

/// Minimum number of images accepted for calibration; below this the
/// false-positive granularity exceeds 5%.
pub const MIN_CALIBRATION_IMAGES: usize = 20;

/// Calibrates the detection threshold for one filter so that at most 5% of
/// the clean calibration set is flagged.
pub fn calibrate(
    clean_images: &[RgbImage],
    oracle: &dyn ClassifierOracle,
    filter: FilterSpec,
) -> Result<DetectionThreshold, EvalError> {
    if clean_images.len() < MIN_CALIBRATION_IMAGES {
        return Err(EvalError::TooFewCalibrationImages {
            got: clean_images.len(),
            need: MIN_CALIBRATION_IMAGES,
        });
    }
    let gaps: Vec<f64> = clean_images
        .iter()
        .map(|img| l1_prob_gap(oracle, img, filter))
        .collect::<Result<_, _>>()?;
    Ok(DetectionThreshold {
        filter,
        oracle_id: oracle.id(),
        tau: threshold_from_gaps(&gaps)?,
    })
}

/// Per-filter detection flags for one image, plus their disjunction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub per_filter: BTreeMap<String, bool>,
    pub any: bool,
}

/// Flags `img` as adversarial under each threshold. A gap exactly equal to
/// the threshold is not flagged; only strictly larger gaps are.
pub fn detect(
    img: &RgbImage,
    oracle: &dyn ClassifierOracle,
    thresholds: &[DetectionThreshold],
) -> Result<Detection, EvalError> {
    let mut per_filter = BTreeMap::new();
    let mut any = false;
    for threshold in thresholds {
        if threshold.oracle_id != oracle.id() {
            return Err(EvalError::ThresholdOracleMismatch {
                expected: threshold.oracle_id.clone(),
                actual: oracle.id(),
            });
        }
        let gap = l1_prob_gap(oracle, img, threshold.filter)?;
        let flag = gap > threshold.tau;
        any |= flag;
        per_filter.insert(threshold.filter.to_string(), flag);
    }
    Ok(Detection { per_filter, any })
}

/// Fraction of attack results that misled the classifier.
pub fn success_rate(results: &[AttackResult]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyInput("attack results"));
    }
    let hits = results.iter().filter(|r| r.success).count();
    Ok(hits as f64 / results.len() as f64)
}

/// Fraction of image pairs where the test oracle's top-1 on the adversarial
/// image differs from its top-1 on the paired clean image.
pub fn transferability(
    adv_images: &[RgbImage],
    clean_images: &[RgbImage],
    test_oracle: &dyn ClassifierOracle,
) -> Result<f64, EvalError> {
    if adv_images.len() != clean_images.len() {
        return Err(EvalError::LengthMismatch {
            left: adv_images.len(),
            right: clean_images.len(),
        });
    }
    if adv_images.is_empty() {
        return Err(EvalError::EmptyInput("image pairs"));
    }
    let mut flipped = 0usize;
    for (adv, clean) in adv_images.iter().zip(clean_images) {
        let on_adv = top1(&test_oracle.predict(adv)?);
        let on_clean = top1(&test_oracle.predict(clean)?);
        if on_adv.index != on_clean.index {
            flipped += 1;
        }
    }
    Ok(flipped as f64 / adv_images.len() as f64)
}

/// Post-filter success rates over a defense grid, plus the grid's most
/// effective filter (the one with the lowest surviving success rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub per_filter: BTreeMap<String, f64>,
    pub worst_case_filter: String,
    pub worst_case_sr: f64,
}

/// Success rate of already-generated adversarial images after each filter:
/// the fraction whose filtered top-1 still differs from the clean class.
pub fn robustness_after_filter(
    adv_images: &[RgbImage],
    clean_classes: &[usize],
    oracle: &dyn ClassifierOracle,
    grid: &[FilterSpec],
) -> Result<RobustnessReport, EvalError> {
    if adv_images.len() != clean_classes.len() {
        return Err(EvalError::LengthMismatch {
            left: adv_images.len(),
            right: clean_classes.len(),
        });
    }
    if adv_images.is_empty() {
        return Err(EvalError::EmptyInput("adversarial images"));
    }
    if grid.is_empty() {
        return Err(EvalError::EmptyInput("filter grid"));
    }
    let mut per_filter = BTreeMap::new();
    for filter in grid {
        let mut survived = 0usize;
        for (adv, clean_class) in adv_images.iter().zip(clean_classes) {
            let filtered = filter.apply(adv)?;
            if top1(&oracle.predict(&filtered)?).index != *clean_class {
                survived += 1;
            }
        }
        per_filter.insert(filter.to_string(), survived as f64 / adv_images.len() as f64);
    }
    let (worst_case_filter, worst_case_sr) = per_filter
        .iter()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, v)| (k.clone(), *v))
        .expect("grid is nonempty");
    Ok(RobustnessReport {
        per_filter,
        worst_case_filter,
        worst_case_sr,
    })
}

/// Fraction of adversarial images that evade detection, under the
/// disjunction of all configured filters and per filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UndetectabilityReport {
    pub any_filter: f64,
    pub per_filter: BTreeMap<String, f64>,
}

pub fn undetectability(
    adv_images: &[RgbImage],
    oracle: &dyn ClassifierOracle,
    thresholds: &[DetectionThreshold],
) -> Result<UndetectabilityReport, EvalError> {
    if adv_images.is_empty() {
        return Err(EvalError::EmptyInput("adversarial images"));
    }
    if thresholds.is_empty() {
        return Err(EvalError::EmptyInput("thresholds"));
    }
    let mut undetected_any = 0usize;
    let mut undetected: BTreeMap<String, usize> = BTreeMap::new();
    for adv in adv_images {
        let detection = detect(adv, oracle, thresholds)?;
        if !detection.any {
            undetected_any += 1;
        }
        for (key, flagged) in &detection.per_filter {
            if !flagged {
                *undetected.entry(key.clone()).or_insert(0) += 1;
            } else {
                undetected.entry(key.clone()).or_insert(0);
            }
        }
    }
    let n = adv_images.len() as f64;
    Ok(UndetectabilityReport {
        any_filter: undetected_any as f64 / n,
        per_filter: undetected
            .into_iter()
            .map(|(k, v)| (k, v as f64 / n))
            .collect(),
    })
}

/// One run of the repeated-attack study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub success: bool,
    pub trials_used: u32,
    pub final_class: usize,
}

/// Five-number summary of trials-to-converge across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomnessStats {
    pub runs: u32,
    pub success_rate: f64,
    pub trials: TrialStats,
    /// Distinct final classes among successful runs.
    pub distinct_final_classes: usize,
    pub records: Vec<RunRecord>,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = (sorted.len() - 1) as f64 * p;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Repeats the attack with distinct seeds and summarizes how the outcome
/// varies: success rate, trials-to-converge quartiles and the number of
/// distinct classes the successful runs land on.
pub fn randomness_study(
    img: &RgbImage,
    regions: &RegionSet,
    oracle: &dyn ClassifierOracle,
    runs: u32,
    cfg: &AttackConfig,
) -> Result<RandomnessStats, EvalError> {
    if runs == 0 {
        return Err(EvalError::EmptyInput("runs"));
    }
    let mut records = Vec::with_capacity(runs as usize);
    for i in 0..u64::from(runs) {
        let run_cfg = AttackConfig {
            seed: cfg.seed.wrapping_add(i),
            ..*cfg
        };
        let result = crate::run_attack(img, regions, oracle, &run_cfg)?;
        records.push(RunRecord {
            seed: run_cfg.seed,
            success: result.success,
            trials_used: result.trials_used,
            final_class: result.final_class.index,
        });
    }
    let mut trials: Vec<f64> = records.iter().map(|r| f64::from(r.trials_used)).collect();
    trials.sort_by(f64::total_cmp);
    let successes = records.iter().filter(|r| r.success).count();
    let distinct: BTreeSet<usize> = records
        .iter()
        .filter(|r| r.success)
        .map(|r| r.final_class)
        .collect();
    Ok(RandomnessStats {
        runs,
        success_rate: successes as f64 / runs as f64,
        trials: TrialStats {
            min: trials[0],
            q25: percentile(&trials, 0.25),
            median: percentile(&trials, 0.5),
            q75: percentile(&trials, 0.75),
            max: trials[trials.len() - 1],
        },
        distinct_final_classes: distinct.len(),
        records,
    })
}

/// Everything recorded about one evaluated image. Aggregates are always
/// derived from these records, never stored alongside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub stem: String,
    pub clean_class: usize,
    pub adv_class: usize,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials_used: Option<u32>,
    /// Top-1 class of the filtered adversarial image, keyed by filter.
    pub post_filter_class: BTreeMap<String, usize>,
    /// Detection flags, keyed by filter.
    pub detector_flag: BTreeMap<String, bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_clean_class: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer_adv_class: Option<usize>,
    /// Reserved for an external perceptual-quality scorer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub attack_oracle: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_oracle: Option<String>,
    /// JPEG codec identifier; detection numbers are codec-relative.
    pub codec: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub records: Vec<ImageRecord>,
}

/// Aggregate metrics recomputed from report records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub images: usize,
    pub success_rate: f64,
    pub robustness_sr: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_case_filter: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst_case_sr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undetectability_any: Option<f64>,
    pub undetectability_per_filter: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transferability: Option<f64>,
}

impl EvalReport {
    pub fn aggregates(&self) -> Aggregates {
        let n = self.records.len();
        let nf = n as f64;
        let success_rate = self.records.iter().filter(|r| r.success).count() as f64 / nf;

        let filter_keys: BTreeSet<&String> = self
            .records
            .iter()
            .flat_map(|r| r.post_filter_class.keys())
            .collect();
        let mut robustness_sr = BTreeMap::new();
        for key in filter_keys {
            let mut total = 0usize;
            let mut survived = 0usize;
            for record in &self.records {
                if let Some(class) = record.post_filter_class.get(key) {
                    total += 1;
                    if *class != record.clean_class {
                        survived += 1;
                    }
                }
            }
            if total > 0 {
                robustness_sr.insert(key.clone(), survived as f64 / total as f64);
            }
        }
        let worst = robustness_sr
            .iter()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, v)| (k.clone(), *v));

        let detector_keys: BTreeSet<&String> = self
            .records
            .iter()
            .flat_map(|r| r.detector_flag.keys())
            .collect();
        let mut undetectability_per_filter = BTreeMap::new();
        for key in detector_keys {
            let mut total = 0usize;
            let mut passed = 0usize;
            for record in &self.records {
                if let Some(flagged) = record.detector_flag.get(key) {
                    total += 1;
                    if !flagged {
                        passed += 1;
                    }
                }
            }
            if total > 0 {
                undetectability_per_filter.insert(key.clone(), passed as f64 / total as f64);
            }
        }
        let undetectability_any = if self.records.iter().any(|r| !r.detector_flag.is_empty()) {
            let passed = self
                .records
                .iter()
                .filter(|r| r.detector_flag.values().all(|f| !f))
                .count();
            Some(passed as f64 / nf)
        } else {
            None
        };

        let transfer_pairs: Vec<(usize, usize)> = self
            .records
            .iter()
            .filter_map(|r| r.transfer_clean_class.zip(r.transfer_adv_class))
            .collect();
        let transferability = if transfer_pairs.is_empty() {
            None
        } else {
            let flipped = transfer_pairs.iter().filter(|(c, a)| c != a).count();
            Some(flipped as f64 / transfer_pairs.len() as f64)
        };

        Aggregates {
            images: n,
            success_rate,
            robustness_sr,
            worst_case_filter: worst.as_ref().map(|(k, _)| k.clone()),
            worst_case_sr: worst.map(|(_, v)| v),
            undetectability_any,
            undetectability_per_filter,
            transferability,
        }
    }

    /// One CSV row per image; filter-dependent columns are the sorted union
    /// of the filter keys present in the records.
    pub fn to_csv(&self) -> Result<String, EvalError> {
        let post_keys: BTreeSet<String> = self
            .records
            .iter()
            .flat_map(|r| r.post_filter_class.keys().cloned())
            .collect();
        let flag_keys: BTreeSet<String> = self
            .records
            .iter()
            .flat_map(|r| r.detector_flag.keys().cloned())
            .collect();

        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header = vec![
            "stem".to_string(),
            "clean_class".to_string(),
            "adv_class".to_string(),
            "success".to_string(),
            "trials_used".to_string(),
            "transfer_clean_class".to_string(),
            "transfer_adv_class".to_string(),
            "quality".to_string(),
        ];
        header.extend(post_keys.iter().map(|k| format!("post_filter:{k}")));
        header.extend(flag_keys.iter().map(|k| format!("flag:{k}")));
        writer
            .write_record(&header)
            .map_err(|e| EvalError::Csv(e.to_string()))?;

        let opt = |v: Option<String>| v.unwrap_or_default();
        for record in &self.records {
            let mut row = vec![
                record.stem.clone(),
                record.clean_class.to_string(),
                record.adv_class.to_string(),
                record.success.to_string(),
                opt(record.trials_used.map(|v| v.to_string())),
                opt(record.transfer_clean_class.map(|v| v.to_string())),
                opt(record.transfer_adv_class.map(|v| v.to_string())),
                opt(record.quality.map(|v| v.to_string())),
            ];
            for key in &post_keys {
                row.push(opt(record.post_filter_class.get(key).map(|v| v.to_string())));
            }
            for key in &flag_keys {
                row.push(opt(record.detector_flag.get(key).map(|v| v.to_string())));
            }
            writer
                .write_record(&row)
                .map_err(|e| EvalError::Csv(e.to_string()))?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| EvalError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| EvalError::Csv(e.to_string()))
    }

    /// The JSON summary: metadata plus aggregates.
    pub fn summary(&self) -> Summary {
        Summary {
            metadata: self.metadata.clone(),
            aggregates: self.aggregates(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub metadata: ReportMetadata,
    pub aggregates: Aggregates,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::Variant;
    use crate::colorspace::srgb_to_lab;
    use crate::defenses::FilterKind;
    use crate::oracle::{Label, ProbVector};
    use crate::regions::whole_image_region;

    /// Two-class oracle keyed on the parity of the first byte.
    struct ParityOracle;

    impl ClassifierOracle for ParityOracle {
        fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
            if img.as_bytes()[0].is_multiple_of(2) {
                ProbVector::new(vec![0.6, 0.4])
            } else {
                ProbVector::new(vec![0.4, 0.6])
            }
        }

        fn id(&self) -> String {
            "test:parity".into()
        }
    }

    struct ConstantOracle;

    impl ClassifierOracle for ConstantOracle {
        fn predict(&self, _img: &RgbImage) -> Result<ProbVector, OracleError> {
            ProbVector::new(vec![1.0, 0.0])
        }

        fn id(&self) -> String {
            "test:constant".into()
        }
    }

    fn requantize1() -> FilterSpec {
        FilterSpec::new(FilterKind::Requantize, 1).unwrap()
    }

    #[test]
    fn identical_vectors_have_zero_gap() {
        let img = RgbImage::filled(4, 4, [10, 20, 30]);
        let gap = l1_prob_gap(&ConstantOracle, &img, requantize1()).unwrap();
        assert_eq!(gap, 0.0);
    }

    #[test]
    fn parity_flip_has_known_gap() {
        // First byte 200 requantizes at 1 bit to 255: parity flips, and the
        // hand sum of |0.6-0.4| + |0.4-0.6| is 0.4.
        let img = RgbImage::filled(4, 4, [200, 200, 200]);
        let gap = l1_prob_gap(&ParityOracle, &img, requantize1()).unwrap();
        assert!((gap - 0.4).abs() < 1e-12);
    }

    #[test]
    fn one_hot_flip_gap_is_two() {
        struct OneHotFlip;
        impl ClassifierOracle for OneHotFlip {
            fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
                if img.as_bytes()[0] >= 200 {
                    ProbVector::new(vec![1.0, 0.0])
                } else {
                    ProbVector::new(vec![0.0, 1.0])
                }
            }
            fn id(&self) -> String {
                "test:onehot".into()
            }
        }
        // 210 requantizes at 1 bit to 255: stays above the oracle's cut.
        let img = RgbImage::filled(4, 4, [210, 210, 210]);
        let gap = l1_prob_gap(&OneHotFlip, &img, requantize1()).unwrap();
        assert_eq!(gap, 0.0);
        // 150 snaps up to 255 and crosses the cut: disjoint one-hots.
        let img = RgbImage::filled(4, 4, [150, 150, 150]);
        let gap = l1_prob_gap(&OneHotFlip, &img, requantize1()).unwrap();
        assert_eq!(gap, 2.0);
    }

    #[test]
    fn nearest_rank_threshold_on_ladder() {
        let gaps: Vec<f64> = (1..=100).map(f64::from).collect();
        let tau = threshold_from_gaps(&gaps).unwrap();
        assert_eq!(tau, 95.0);
        let flagged = gaps.iter().filter(|g| **g > tau).count();
        assert_eq!(flagged, 5);
    }

    #[test]
    fn constant_gaps_give_that_threshold() {
        let gaps = vec![0.1; 20];
        let tau = threshold_from_gaps(&gaps).unwrap();
        assert_eq!(tau, 0.1);
        assert_eq!(gaps.iter().filter(|g| **g > tau).count(), 0);
    }

    #[test]
    fn calibrate_matches_gap_recomputation_and_enforces_minimum() {
        // Mixed parities so gaps are 0.4 for flipped images and 0 otherwise.
        let mut images = Vec::new();
        for i in 0..25u8 {
            images.push(RgbImage::filled(2, 2, [i, 0, 0]));
        }
        let threshold = calibrate(&images, &ParityOracle, requantize1()).unwrap();
        let gaps: Vec<f64> = images
            .iter()
            .map(|img| l1_prob_gap(&ParityOracle, img, requantize1()).unwrap())
            .collect();
        assert_eq!(threshold.tau, threshold_from_gaps(&gaps).unwrap());
        assert_eq!(threshold.oracle_id, "test:parity");
        let flagged = gaps.iter().filter(|g| **g > threshold.tau).count();
        assert!(flagged as f64 / gaps.len() as f64 <= 0.05);

        let too_few = vec![RgbImage::filled(1, 1, [0, 0, 0]); 19];
        assert!(matches!(
            calibrate(&too_few, &ParityOracle, requantize1()),
            Err(EvalError::TooFewCalibrationImages { got: 19, .. })
        ));
    }

    #[test]
    fn detection_is_strict_at_the_boundary() {
        let img = RgbImage::filled(4, 4, [200, 200, 200]); // gap 0.4 under parity
        let exact = DetectionThreshold {
            filter: requantize1(),
            oracle_id: "test:parity".into(),
            tau: 0.4,
        };
        let detection = detect(&img, &ParityOracle, &[exact]).unwrap();
        assert!(!detection.any);
        let below = DetectionThreshold {
            filter: requantize1(),
            oracle_id: "test:parity".into(),
            tau: 0.4 - 1e-9,
        };
        let detection = detect(&img, &ParityOracle, &[below]).unwrap();
        assert!(detection.any);
        assert_eq!(detection.per_filter.len(), 1);
    }

    #[test]
    fn detect_rejects_foreign_thresholds() {
        let img = RgbImage::filled(1, 1, [0, 0, 0]);
        let foreign = DetectionThreshold {
            filter: requantize1(),
            oracle_id: "someone-else".into(),
            tau: 1.0,
        };
        assert!(matches!(
            detect(&img, &ParityOracle, &[foreign]),
            Err(EvalError::ThresholdOracleMismatch { .. })
        ));
    }

    fn fake_result(success: bool) -> AttackResult {
        AttackResult {
            adversarial: RgbImage::filled(1, 1, [0, 0, 0]),
            success,
            trials_used: 1,
            original_class: Label::new(0),
            final_class: Label::new(usize::from(success)),
        }
    }

    #[test]
    fn success_rate_ratios() {
        let all_true = vec![fake_result(true), fake_result(true), fake_result(true)];
        assert_eq!(success_rate(&all_true).unwrap(), 1.0);
        let all_false = vec![fake_result(false), fake_result(false)];
        assert_eq!(success_rate(&all_false).unwrap(), 0.0);
        let mixed = vec![
            fake_result(true),
            fake_result(true),
            fake_result(true),
            fake_result(false),
        ];
        assert_eq!(success_rate(&mixed).unwrap(), 0.75);
        assert!(matches!(
            success_rate(&[]),
            Err(EvalError::EmptyInput(_))
        ));
    }

    #[test]
    fn transferability_cases() {
        let clean = vec![
            RgbImage::filled(2, 2, [10, 0, 0]), // even: class 0
            RgbImage::filled(2, 2, [11, 0, 0]), // odd: class 1
        ];
        // Identical adversarials: nothing flips.
        assert_eq!(transferability(&clean, &clean, &ParityOracle).unwrap(), 0.0);
        // Flip the first image's parity only.
        let adv = vec![
            RgbImage::filled(2, 2, [13, 0, 0]),
            RgbImage::filled(2, 2, [11, 0, 0]),
        ];
        assert_eq!(transferability(&adv, &clean, &ParityOracle).unwrap(), 0.5);
        assert!(matches!(
            transferability(&adv[..1], &clean, &ParityOracle),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn robustness_single_filter_is_worst_case() {
        // Salt pixel drives the constant-vs-not oracle; median restores it.
        struct SaltOracle;
        impl ClassifierOracle for SaltOracle {
            fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
                let first = img.as_bytes()[0];
                if img.as_bytes().iter().all(|v| *v == first) {
                    ProbVector::new(vec![1.0, 0.0])
                } else {
                    ProbVector::new(vec![0.0, 1.0])
                }
            }
            fn id(&self) -> String {
                "test:salt".into()
            }
        }
        let mut data = vec![0u8; 5 * 5 * 3];
        data[36] = 255;
        let adv = vec![RgbImage::new(5, 5, data).unwrap()];
        let grid = vec![FilterSpec::new(FilterKind::Median, 3).unwrap()];
        let report = robustness_after_filter(&adv, &[0], &SaltOracle, &grid).unwrap();
        assert_eq!(report.worst_case_sr, 0.0);
        assert_eq!(report.worst_case_filter, "median:3");
        assert_eq!(report.per_filter.len(), 1);
        assert!(report
            .per_filter
            .values()
            .all(|sr| *sr >= report.worst_case_sr));
    }

    #[test]
    fn undetectability_ratios() {
        let images = vec![
            RgbImage::filled(2, 2, [200, 0, 0]), // gap 0.4 under parity
            RgbImage::filled(2, 2, [10, 0, 0]),  // gap 0.0
            RgbImage::filled(2, 2, [12, 0, 0]),  // gap 0.0
            RgbImage::filled(2, 2, [14, 0, 0]),  // gap 0.0
        ];
        let threshold = DetectionThreshold {
            filter: requantize1(),
            oracle_id: "test:parity".into(),
            tau: 0.2,
        };
        let report = undetectability(&images, &ParityOracle, &[threshold]).unwrap();
        assert_eq!(report.any_filter, 0.75);
        assert_eq!(report.per_filter["requantize:1"], 0.75);
    }

    #[test]
    fn randomness_study_degenerate_oracles() {
        let img = RgbImage::filled(4, 4, [40, 180, 60]);
        let lab = srgb_to_lab(&img);
        let regions = whole_image_region(&lab);
        let cfg = AttackConfig {
            max_trials: 5,
            seed: 100,
            variant: Variant::ColorFool,
        };
        let stats = randomness_study(&img, &regions, &ConstantOracle, 10, &cfg).unwrap();
        assert_eq!(stats.success_rate, 0.0);
        assert_eq!(stats.trials.min, 5.0);
        assert_eq!(stats.trials.median, 5.0);
        assert_eq!(stats.trials.max, 5.0);
        assert_eq!(stats.distinct_final_classes, 0);
        assert_eq!(stats.records.len(), 10);
        // Distinct seeds per run.
        let seeds: BTreeSet<u64> = stats.records.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 10);

        struct FlipOnAnyChange {
            clean: RgbImage,
        }
        impl ClassifierOracle for FlipOnAnyChange {
            fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
                if img == &self.clean {
                    ProbVector::new(vec![1.0, 0.0])
                } else {
                    ProbVector::new(vec![0.0, 1.0])
                }
            }
            fn id(&self) -> String {
                "test:flip".into()
            }
        }
        let oracle = FlipOnAnyChange { clean: img.clone() };
        let stats = randomness_study(&img, &regions, &oracle, 10, &cfg).unwrap();
        assert_eq!(stats.success_rate, 1.0);
        assert_eq!(stats.trials.max, 1.0);
        assert_eq!(stats.distinct_final_classes, 1);
    }

    fn sample_report() -> EvalReport {
        let make = |stem: &str, clean, adv, post: &[(&str, usize)], flags: &[(&str, bool)]| {
            ImageRecord {
                stem: stem.into(),
                clean_class: clean,
                adv_class: adv,
                success: clean != adv,
                trials_used: Some(3),
                post_filter_class: post
                    .iter()
                    .map(|(k, v)| (k.to_string(), *v))
                    .collect(),
                detector_flag: flags.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                transfer_clean_class: Some(clean),
                transfer_adv_class: Some(adv),
                quality: None,
            }
        };
        EvalReport {
            metadata: ReportMetadata {
                attack_oracle: "test:parity".into(),
                test_oracle: Some("test:parity".into()),
                codec: "test".into(),
                seed: Some(1),
                config_hash: None,
            },
            records: vec![
                make(
                    "a",
                    0,
                    1,
                    &[("median:3", 0), ("jpeg:75", 1)],
                    &[("median:3", false), ("jpeg:75", true)],
                ),
                make(
                    "b",
                    0,
                    1,
                    &[("median:3", 1), ("jpeg:75", 1)],
                    &[("median:3", false), ("jpeg:75", false)],
                ),
                make(
                    "c",
                    1,
                    1,
                    &[("median:3", 1), ("jpeg:75", 0)],
                    &[("median:3", false), ("jpeg:75", false)],
                ),
                make(
                    "d",
                    0,
                    2,
                    &[("median:3", 2), ("jpeg:75", 0)],
                    &[("median:3", true), ("jpeg:75", true)],
                ),
            ],
        }
    }

    #[test]
    fn aggregates_match_hand_computation() {
        let report = sample_report();
        let agg = report.aggregates();
        assert_eq!(agg.images, 4);
        assert_eq!(agg.success_rate, 0.75);
        // median:3 survivors: b (1!=0), c (1==1 no), d (2!=0), a (0==0 no) -> 2/4
        assert_eq!(agg.robustness_sr["median:3"], 0.5);
        // jpeg:75 survivors: a (1!=0), b (1!=0), c (0!=1), d (0==0 no) -> 3/4
        assert_eq!(agg.robustness_sr["jpeg:75"], 0.75);
        assert_eq!(agg.worst_case_filter.as_deref(), Some("median:3"));
        assert_eq!(agg.worst_case_sr, Some(0.5));
        // Unflagged by all: b, c -> 2/4
        assert_eq!(agg.undetectability_any, Some(0.5));
        assert_eq!(agg.undetectability_per_filter["median:3"], 0.75);
        assert_eq!(agg.undetectability_per_filter["jpeg:75"], 0.5);
        // Transfer flips: a, b, d -> 3/4
        assert_eq!(agg.transferability, Some(0.75));
    }

    #[test]
    fn csv_has_one_row_per_image_and_stable_columns() {
        let report = sample_report();
        let csv = report.to_csv().unwrap();
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 1 + report.records.len());
        assert!(lines[0].starts_with("stem,clean_class,adv_class,success"));
        assert!(lines[0].contains("post_filter:jpeg:75"));
        assert!(lines[0].contains("flag:median:3"));
        // Deterministic output.
        assert_eq!(csv, report.to_csv().unwrap());
    }

    #[test]
    fn summary_round_trips_through_json() {
        let report = sample_report();
        let summary = report.summary();
        let text = serde_json::to_string(&summary).unwrap();
        let back: Summary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, summary);
    }
}
