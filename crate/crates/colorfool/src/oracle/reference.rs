//! Deterministic in-process classifier over color-histogram features.
//!
//! Stands in for a real DNN at desk scale. The feature is a per-channel
//! 8-bin intensity histogram (24 values, each channel normalized to sum
//! to one) so the classifier is sensitive to exactly the kind of color
//! shifts the attacks produce.

use std::path::Path;

use super::{ClassifierOracle, OracleError, ProbVector};
use crate::colorspace::RgbImage;

const BINS_PER_CHANNEL: usize = 8;
pub const FEATURE_LEN: usize = 3 * BINS_PER_CHANNEL;

/// Linear softmax classifier over color histograms, loaded from a
/// plain-text weights file.
pub struct ReferenceClassifier {
    class_names: Vec<String>,
    weights: Vec<[f64; FEATURE_LEN]>,
    biases: Vec<f64>,
    id: String,
}

impl ReferenceClassifier {
    /// Loads weights from a file. Format, one entry per line:
    ///
    /// ```text
    /// # comments and blank lines are ignored
    /// classes <C> features 24
    /// <class-name> <w0> ... <w23> <bias>
    /// ```
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, OracleError> {
        let malformed = |reason: String| OracleError::MalformedWeights {
            path: origin.to_string(),
            reason,
        };
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));

        let header = lines
            .next()
            .ok_or_else(|| malformed("missing header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != "classes" || fields[2] != "features" {
            return Err(malformed(format!(
                "expected header `classes <C> features <F>`, got {header:?}"
            )));
        }
        let class_count: usize = fields[1]
            .parse()
            .map_err(|e| malformed(format!("bad class count: {e}")))?;
        let feature_len: usize = fields[3]
            .parse()
            .map_err(|e| malformed(format!("bad feature length: {e}")))?;
        if feature_len != FEATURE_LEN {
            return Err(malformed(format!(
                "unsupported feature length {feature_len}, expected {FEATURE_LEN}"
            )));
        }
        if class_count < 2 {
            return Err(malformed(format!(
                "need at least 2 classes, got {class_count}"
            )));
        }

        let mut class_names = Vec::with_capacity(class_count);
        let mut weights = Vec::with_capacity(class_count);
        let mut biases = Vec::with_capacity(class_count);
        for _ in 0..class_count {
            let line = lines
                .next()
                .ok_or_else(|| malformed(format!("expected {class_count} class lines")))?;
            let mut parts = line.split_whitespace();
            let name = parts.next().expect("non-empty line").to_string();
            let numbers: Vec<f64> = parts
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| malformed(format!("bad number {t:?} for class {name}: {e}")))
                })
                .collect::<Result<_, _>>()?;
            if numbers.len() != FEATURE_LEN + 1 {
                return Err(malformed(format!(
                    "class {name} has {} numbers, expected {} weights + bias",
                    numbers.len(),
                    FEATURE_LEN
                )));
            }
            let mut w = [0.0; FEATURE_LEN];
            w.copy_from_slice(&numbers[..FEATURE_LEN]);
            class_names.push(name);
            weights.push(w);
            biases.push(numbers[FEATURE_LEN]);
        }
        if lines.next().is_some() {
            return Err(malformed("trailing content after class lines".into()));
        }

        Ok(Self {
            class_names,
            weights,
            biases,
            id: format!("ref:{origin}"),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Normalized per-channel histogram feature of an image.
    pub fn histogram(img: &RgbImage) -> [f64; FEATURE_LEN] {
        let mut counts = [0u64; FEATURE_LEN];
        for px in img.as_bytes().chunks_exact(3) {
            for (c, v) in px.iter().enumerate() {
                counts[c * BINS_PER_CHANNEL + (*v as usize >> 5)] += 1;
            }
        }
        let n = img.pixel_count() as f64;
        let mut feature = [0.0; FEATURE_LEN];
        for (f, c) in feature.iter_mut().zip(counts) {
            *f = c as f64 / n;
        }
        feature
    }

    fn scores(&self, feature: &[f64; FEATURE_LEN]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(feature).map(|(wi, fi)| wi * fi).sum::<f64>() + b)
            .collect()
    }

    pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }
}

impl ClassifierOracle for ReferenceClassifier {
    fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
        let feature = Self::histogram(img);
        ProbVector::new(Self::softmax(&self.scores(&feature)))
    }

    fn id(&self) -> String {
        self.id.clone()
    }

    fn class_name(&self, index: usize) -> Option<String> {
        self.class_names.get(index).cloned()
    }
}
