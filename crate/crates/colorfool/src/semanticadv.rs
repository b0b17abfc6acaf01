//! Random hue/saturation shift baseline attack.
//!
//! Each trial draws two scalars in `[0,1)`, shifts the hue plane modulo one
//! full turn and the saturation plane with clamping, keeps the value plane,
//! and queries the oracle on the converted candidate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{AttackConfig, AttackError, AttackResult};
use crate::colorspace::{hsv_to_rgb, rgb_to_hsv, wrap_unit, HsvImage, RgbImage};
use crate::oracle::{top1, ClassifierOracle};

/// Shifts hue by `dh` (wrapping) and saturation by `ds` (clamping); the
/// value plane is untouched.
pub fn shift_hsv(img: &HsvImage, dh: f64, ds: f64) -> HsvImage {
    let h = img.h().iter().map(|h| wrap_unit(h + dh)).collect();
    let s = img.s().iter().map(|s| (s + ds).clamp(0.0, 1.0)).collect();
    HsvImage::new(img.width(), img.height(), h, s, img.v().to_vec())
        .expect("planes sized from the source image")
}

/// Runs the hue/saturation baseline against `oracle`. Stops at the first
/// candidate whose top-1 class differs from the clean prediction, or after
/// `max_trials` trials.
pub fn semanticadv_attack(
    img: &RgbImage,
    oracle: &dyn ClassifierOracle,
    cfg: &AttackConfig,
) -> Result<AttackResult, AttackError> {
    if cfg.max_trials == 0 {
        return Err(AttackError::InvalidConfig("max_trials must be >= 1".into()));
    }

    let clean_probs = oracle
        .predict(img)
        .map_err(|source| AttackError::Oracle { trial: 0, source })?;
    let mut original = top1(&clean_probs);
    original.name = oracle.class_name(original.index);

    let hsv = rgb_to_hsv(img);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut last = None;

    for n in 1..=cfg.max_trials {
        let dh: f64 = rng.random();
        let ds: f64 = rng.random();
        let candidate = hsv_to_rgb(&shift_hsv(&hsv, dh, ds));
        let probs = oracle
            .predict(&candidate)
            .map_err(|source| AttackError::Oracle { trial: n, source })?;
        let mut predicted = top1(&probs);
        predicted.name = oracle.class_name(predicted.index);

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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::Variant;
    use crate::oracle::{OracleError, ProbVector};

    struct UnbeatableOracle;

    impl ClassifierOracle for UnbeatableOracle {
        fn predict(&self, _img: &RgbImage) -> Result<ProbVector, OracleError> {
            ProbVector::new(vec![1.0, 0.0])
        }

        fn id(&self) -> String {
            "test:constant".into()
        }
    }

    /// Flips class once the hue histogram moved away from the clean image.
    struct HueOracle {
        reference: f64,
    }

    impl ClassifierOracle for HueOracle {
        fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
            let hsv = rgb_to_hsv(img);
            let mean: f64 = hsv.h().iter().sum::<f64>() / hsv.h().len() as f64;
            if (mean - self.reference).abs() > 0.1 {
                ProbVector::new(vec![0.0, 1.0])
            } else {
                ProbVector::new(vec![1.0, 0.0])
            }
        }

        fn id(&self) -> String {
            "test:hue".into()
        }
    }

    fn sample_image() -> RgbImage {
        let mut data = Vec::new();
        for i in 0..16u8 {
            data.extend_from_slice(&[200 - i, 40 + 3 * i, 10 + 2 * i]);
        }
        RgbImage::new(4, 4, data).unwrap()
    }

    #[test]
    fn zero_shift_reproduces_clean_image_within_round_trip() {
        let img = sample_image();
        let candidate = hsv_to_rgb(&shift_hsv(&rgb_to_hsv(&img), 0.0, 0.0));
        for (a, b) in img.as_bytes().iter().zip(candidate.as_bytes()) {
            assert!((i16::from(*a) - i16::from(*b)).abs() <= 1);
        }
    }

    #[test]
    fn value_plane_is_preserved_across_shifts() {
        let img = sample_image();
        let hsv = rgb_to_hsv(&img);
        for (dh, ds) in [(0.3, 0.2), (0.77, 0.9), (0.5, 0.0)] {
            let candidate = hsv_to_rgb(&shift_hsv(&hsv, dh, ds));
            let back = rgb_to_hsv(&candidate);
            for (v0, v1) in hsv.v().iter().zip(back.v()) {
                assert!((v0 - v1).abs() <= 1.0 / 255.0, "value drifted: {v0} -> {v1}");
            }
        }
    }

    #[test]
    fn hue_shift_is_circular() {
        let hsv = rgb_to_hsv(&sample_image());
        let a = hsv_to_rgb(&shift_hsv(&hsv, 0.37, 0.1));
        let b = hsv_to_rgb(&shift_hsv(&hsv, 1.37, 0.1));
        assert_eq!(a, b);
    }

    #[test]
    fn constant_oracle_exhausts_budget() {
        let cfg = AttackConfig {
            max_trials: 9,
            seed: 0,
            variant: Variant::SemanticAdv,
        };
        let result = semanticadv_attack(&sample_image(), &UnbeatableOracle, &cfg).unwrap();
        assert!(!result.success);
        assert_eq!(result.trials_used, 9);
    }

    #[test]
    fn hue_sensitive_oracle_is_beaten_and_replays() {
        let img = sample_image();
        let hsv = rgb_to_hsv(&img);
        let oracle = HueOracle {
            reference: hsv.h().iter().sum::<f64>() / hsv.h().len() as f64,
        };
        let cfg = AttackConfig {
            max_trials: 100,
            seed: 4,
            variant: Variant::SemanticAdv,
        };
        let a = semanticadv_attack(&img, &oracle, &cfg).unwrap();
        assert!(a.success);
        let b = semanticadv_attack(&img, &oracle, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
