//! The ColorFool attack engine.
//!
//! Each trial draws one random chroma offset pair per region, scales it by
//! the trial schedule `alpha = n/N`, shifts the `a`/`b` planes on the
//! region's support, converts back to RGB and asks the oracle. Sensitive
//! regions draw from their natural-color ranges; non-sensitive regions draw
//! from the whole chroma range. Lightness is never touched.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colorspace::{lab_to_srgb, srgb_to_lab, LabImage, RgbImage};
use crate::oracle::{top1, ClassifierOracle, Label, OracleError};
use crate::regions::{whole_image_region, Region, RegionSet, RegionStats, SemanticCategory};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("attack config invalid: {0}")]
    InvalidConfig(String),
    #[error("region set is {set_width}x{set_height} but image is {img_width}x{img_height}")]
    DimensionMismatch {
        set_width: u32,
        set_height: u32,
        img_width: u32,
        img_height: u32,
    },
    #[error("got {actual} offset pairs for {expected} regions")]
    OffsetCount { expected: usize, actual: usize },
    #[error("variant {0:?} is not handled by this engine")]
    UnsupportedVariant(Variant),
    #[error("oracle failed at trial {trial}: {source}")]
    Oracle { trial: u32, source: OracleError },
}

/// Which attack to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Semantic-region-aware color perturbation.
    #[serde(rename = "colorfool")]
    ColorFool,
    /// Ablation without semantic priors: the whole image is one
    /// non-sensitive region.
    #[serde(rename = "colorfool-r")]
    ColorFoolR,
    /// Random hue/saturation shift baseline.
    #[serde(rename = "semanticadv")]
    SemanticAdv,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::ColorFool => "colorfool",
            Variant::ColorFoolR => "colorfool-r",
            Variant::SemanticAdv => "semanticadv",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "colorfool" => Ok(Variant::ColorFool),
            "colorfool-r" => Ok(Variant::ColorFoolR),
            "semanticadv" => Ok(Variant::SemanticAdv),
            other => Err(format!("unknown variant {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Trial budget N.
    pub max_trials: u32,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            max_trials: 1000,
            seed: 0,
            variant: Variant::ColorFool,
        }
    }
}

/// Outcome of one attack on one image.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub adversarial: RgbImage,
    pub success: bool,
    /// Trials actually executed, in `[1, max_trials]`.
    pub trials_used: u32,
    pub original_class: Label,
    pub final_class: Label,
}

/// Inclusive integer offset interval for one chroma channel. The interval
/// is empty when a region's channel span exceeds the target band, in which
/// case sampling yields a zero offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelRange {
    lo: i32,
    hi: i32,
    empty: bool,
}

impl ChannelRange {
    pub fn new(lo: i32, hi: i32) -> Self {
        Self {
            lo,
            hi,
            empty: lo > hi,
        }
    }

    pub fn singleton(v: i32) -> Self {
        Self::new(v, v)
    }

    pub fn lo(&self) -> i32 {
        self.lo
    }

    pub fn hi(&self) -> i32 {
        self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    /// Uniform draw over the interval, both endpoints included; empty
    /// intervals yield the color-preserving offset 0.
    pub fn sample(&self, rng: &mut impl Rng) -> i32 {
        if self.empty {
            0
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// One region's chroma offset draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionOffsets {
    pub a: i32,
    pub b: i32,
}

/// Natural-color offset ranges for a region, from its category and channel
/// extremes. After a full-scale shift, vegetation stays in the green/yellow
/// band (`a` in [-128,0], `b` in [0,127]) and water and sky stay in the
/// green/blue band (both in [-128,0]); person regions are never recolored.
/// Non-sensitive regions get the whole chroma range.
pub fn natural_ranges(
    category: SemanticCategory,
    stats: RegionStats,
) -> (ChannelRange, ChannelRange) {
    let lower_band = |min: f64, max: f64| {
        ChannelRange::new((-128.0 - min).ceil() as i32, (-max).floor() as i32)
    };
    let upper_band = |min: f64, max: f64| {
        ChannelRange::new((-min).ceil() as i32, (127.0 - max).floor() as i32)
    };
    match category {
        SemanticCategory::Person => (ChannelRange::singleton(0), ChannelRange::singleton(0)),
        SemanticCategory::Vegetation => (
            lower_band(stats.min_a, stats.max_a),
            upper_band(stats.min_b, stats.max_b),
        ),
        SemanticCategory::Water | SemanticCategory::Sky => (
            lower_band(stats.min_a, stats.max_a),
            lower_band(stats.min_b, stats.max_b),
        ),
        SemanticCategory::NonSensitive => (FULL_RANGE, FULL_RANGE),
    }
}

/// The full chroma offset range used for non-sensitive regions.
const FULL_RANGE: ChannelRange = ChannelRange {
    lo: -127,
    hi: 128,
    empty: false,
};

/// Draws a sensitive region's offsets from its natural-color ranges.
pub fn sample_sensitive(
    ranges: (ChannelRange, ChannelRange),
    rng: &mut impl Rng,
) -> RegionOffsets {
    RegionOffsets {
        a: ranges.0.sample(rng),
        b: ranges.1.sample(rng),
    }
}

/// Draws a non-sensitive region's offsets uniformly over the whole chroma
/// range, each channel independent.
pub fn sample_non_sensitive(rng: &mut impl Rng) -> RegionOffsets {
    RegionOffsets {
        a: FULL_RANGE.sample(rng),
        b: FULL_RANGE.sample(rng),
    }
}

fn draw_for(region: &Region, rng: &mut impl Rng) -> RegionOffsets {
    match region.category() {
        SemanticCategory::NonSensitive => sample_non_sensitive(rng),
        category => sample_sensitive(natural_ranges(category, region.stats()), rng),
    }
}

/// Applies per-region chroma offsets scaled by `alpha` and clamps the
/// chroma planes back to their range. The `L` plane is returned untouched.
pub fn perturb(
    img: &LabImage,
    regions: &RegionSet,
    draws: &[RegionOffsets],
    alpha: f64,
) -> Result<LabImage, AttackError> {
    if regions.dimensions() != img.dimensions() {
        return Err(AttackError::DimensionMismatch {
            set_width: regions.width(),
            set_height: regions.height(),
            img_width: img.width(),
            img_height: img.height(),
        });
    }
    if draws.len() != regions.len() {
        return Err(AttackError::OffsetCount {
            expected: regions.len(),
            actual: draws.len(),
        });
    }
    debug_assert!((0.0..=1.0).contains(&alpha));

    let mut out = img.clone();
    for (region, offsets) in regions.iter().zip(draws) {
        let da = alpha * f64::from(offsets.a);
        let db = alpha * f64::from(offsets.b);
        if da == 0.0 && db == 0.0 {
            continue;
        }
        for (i, inside) in region.mask().iter().enumerate() {
            if *inside {
                out.a_mut()[i] += da;
                out.b_mut()[i] += db;
            }
        }
    }
    out.clamp_chroma();
    Ok(out)
}

/// Per-trial view handed to an observer; used for invariant checks and
/// verbose tracing.
pub struct Trial<'a> {
    pub index: u32,
    pub alpha: f64,
    pub lab_candidate: &'a LabImage,
    pub candidate: &'a RgbImage,
    pub predicted: &'a Label,
}

/// Runs ColorFool (or its no-priors variant) against `oracle`.
///
/// Stops at the first candidate whose top-1 class differs from the clean
/// prediction; after `max_trials` failures the last candidate is returned
/// with `success == false`.
pub fn attack(
    img: &RgbImage,
    regions: &RegionSet,
    oracle: &dyn ClassifierOracle,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    attack_with_observer(img, regions, oracle, cfg, |_| {})
}

/// `attack` with a per-trial observer callback.
pub fn attack_with_observer(
    img: &RgbImage,
    regions: &RegionSet,
    oracle: &dyn ClassifierOracle,
    cfg: &AttackConfig,
    mut observer: impl FnMut(&Trial<'_>),
) -> Result<AttackResult, AttackError> {
    if cfg.max_trials == 0 {
        return Err(AttackError::InvalidConfig("max_trials must be >= 1".into()));
    }
    if cfg.variant == Variant::SemanticAdv {
        return Err(AttackError::UnsupportedVariant(cfg.variant));
    }

    let clean_probs = oracle
        .predict(img)
        .map_err(|source| AttackError::Oracle { trial: 0, source })?;
    let mut original = top1(&clean_probs);
    original.name = oracle.class_name(original.index);

    let lab = srgb_to_lab(img);
    let whole;
    let regions = match cfg.variant {
        Variant::ColorFool => {
            if regions.dimensions() != img.dimensions() {
                return Err(AttackError::DimensionMismatch {
                    set_width: regions.width(),
                    set_height: regions.height(),
                    img_width: img.width(),
                    img_height: img.height(),
                });
            }
            regions
        }
        Variant::ColorFoolR => {
            whole = whole_image_region(&lab);
            &whole
        }
        Variant::SemanticAdv => unreachable!("rejected above"),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total = f64::from(cfg.max_trials);
    let mut last: Option<(RgbImage, Label)> = None;

    for n in 1..=cfg.max_trials {
        let alpha = f64::from(n) / total;
        let draws: Vec<RegionOffsets> = regions.iter().map(|r| draw_for(r, &mut rng)).collect();
        let lab_candidate = perturb(&lab, regions, &draws, alpha)?;
        let candidate = lab_to_srgb(&lab_candidate);
        let probs = oracle
            .predict(&candidate)
            .map_err(|source| AttackError::Oracle { trial: n, source })?;
        let mut predicted = top1(&probs);
        predicted.name = oracle.class_name(predicted.index);

        observer(&Trial {
            index: n,
            alpha,
            lab_candidate: &lab_candidate,
            candidate: &candidate,
            predicted: &predicted,
        });

        if predicted.index != original.index {
            return Ok(AttackResult {
                adversarial: candidate,
                success: true,
                trials_used: n,
                original_class: original,
                final_class: predicted,
            });
        }
        last = Some((candidate, predicted));
    }

    let (adversarial, final_class) = last.expect("max_trials >= 1 ran at least one trial");
    Ok(AttackResult {
        adversarial,
        success: false,
        trials_used: cfg.max_trials,
        original_class: original,
        final_class,
    })
}
