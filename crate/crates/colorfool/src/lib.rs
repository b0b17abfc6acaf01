//! Semantic adversarial colorization attacks and their evaluation harness.
//!
//! The crate covers the full black-box pipeline:
//!
//! - [`colorspace`]: exact sRGB/Lab/HSV conversions and final quantization.
//! - [`regions`]: label-map ingestion and sensitive/non-sensitive
//!   decomposition with per-region channel extremes.
//! - [`attack`]: the ColorFool engine with natural-color ranges and the
//!   progressive trial schedule, plus the no-priors variant.
//! - [`semanticadv`]: the hue/saturation shift baseline.
//! - [`defenses`]: re-quantization, median filtering and JPEG round trips.
//! - [`evaluation`]: detection calibration and the attack metrics (success
//!   rate, transferability, robustness, undetectability, randomness).
//! - [`oracle`]: the classifier abstraction with an in-process reference
//!   classifier, a remote wire-protocol client/server and caching.

pub mod attack;
pub mod colorspace;
pub mod defenses;
pub mod evaluation;
pub mod oracle;
pub mod regions;
pub mod semanticadv;

pub use attack::{
    attack, attack_with_observer, natural_ranges, perturb, sample_non_sensitive,
    sample_sensitive, AttackConfig, AttackError, AttackResult, ChannelRange, RegionOffsets,
    Variant,
};
pub use colorspace::{
    hsv_to_rgb, lab_to_srgb, rgb_to_hsv, srgb_to_lab, HsvImage, ImageError, LabImage, RgbImage,
};
pub use defenses::{
    jpeg_roundtrip, median_filter, requantize, DefenseError, FilterKind, FilterSpec,
};
pub use evaluation::{
    calibrate, detect, l1_prob_gap, randomness_study, robustness_after_filter, success_rate,
    threshold_from_gaps, transferability, undetectability, Aggregates, DetectionThreshold,
    EvalError, EvalReport, ImageRecord, RandomnessStats, ReportMetadata,
};
pub use oracle::{
    cached, top1, CachedOracle, ClassifierOracle, CountingOracle, Label, OracleError,
    OracleServer, ProbVector, ReferenceClassifier, RemoteOracle,
};
pub use regions::{
    decompose, load_label_map, whole_image_region, CategoryMapping, LabelMap, Region,
    RegionError, RegionSet, RegionStats, SemanticCategory,
};
pub use semanticadv::{semanticadv_attack, shift_hsv};

/// Runs the attack selected by `cfg.variant`. The region set is used by
/// the semantic variant and ignored by the others.
pub fn run_attack(
    img: &RgbImage,
    regions: &RegionSet,
    oracle: &dyn ClassifierOracle,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    match cfg.variant {
        Variant::ColorFool | Variant::ColorFoolR => attack::attack(img, regions, oracle, cfg),
        Variant::SemanticAdv => semanticadv::semanticadv_attack(img, oracle, cfg),
    }
}
