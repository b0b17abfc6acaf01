//! The black-box classifier abstraction and its implementations.
//!
//! Attacks and metrics only ever see `predict`: an image in, a probability
//! vector out. Backends are the in-process color-histogram reference
//! classifier, a remote oracle speaking newline-delimited JSON, and
//! transparent counting/caching wrappers.

mod reference;
mod remote;

pub use reference::ReferenceClassifier;
pub use remote::{OracleServer, RemoteOracle};

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::colorspace::RgbImage;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("probability vector invariant violated: {0}")]
    InvalidProbVector(String),
    #[error("malformed weights file {path}: {reason}")]
    MalformedWeights { path: String, reason: String },
    #[error("transport failure: {0}")]
    Transport(#[from] std::io::Error),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend rejected query: {0}")]
    Backend(String),
}

/// A classifier output: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Tolerance on the unit-sum invariant.
    pub const SUM_TOLERANCE: f64 = 1e-6;

    /// Validates and wraps a probability vector. Vectors are never silently
    /// renormalized; out-of-contract values are an error.
    pub fn new(probs: Vec<f64>) -> Result<Self, OracleError> {
        if probs.is_empty() {
            return Err(OracleError::InvalidProbVector("empty vector".into()));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(OracleError::InvalidProbVector(format!(
                "entry {bad} is negative or not finite"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(OracleError::InvalidProbVector(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self(probs))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// L1 distance to another vector of the same length.
    pub fn l1_distance(&self, other: &ProbVector) -> Result<f64, OracleError> {
        if self.len() != other.len() {
            return Err(OracleError::InvalidProbVector(format!(
                "length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }
}

/// A predicted class: index into the probability vector plus an optional
/// human-readable name.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Label {
    pub index: usize,
    pub name: Option<String>,
}

impl Label {
    pub fn new(index: usize) -> Self {
        Self { index, name: None }
    }
}

/// Argmax class of a probability vector; ties break toward the lowest
/// index.
pub fn top1(probs: &ProbVector) -> Label {
    let mut best = 0;
    for (i, p) in probs.as_slice().iter().enumerate() {
        if *p > probs.as_slice()[best] {
            best = i;
        }
    }
    Label::new(best)
}

/// A black-box classifier: images in, probability vectors out.
///
/// Implementations must be deterministic for the attack replay and cache
/// contracts to hold.
pub trait ClassifierOracle: Send + Sync {
    fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError>;

    /// Stable identifier recorded in thresholds and reports.
    fn id(&self) -> String;

    /// Optional class name lookup for labeling results.
    fn class_name(&self, _index: usize) -> Option<String> {
        None
    }
}

impl<O: ClassifierOracle + ?Sized> ClassifierOracle for &O {
    fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
        (**self).predict(img)
    }

    fn id(&self) -> String {
        (**self).id()
    }

    fn class_name(&self, index: usize) -> Option<String> {
        (**self).class_name(index)
    }
}

impl<O: ClassifierOracle + ?Sized> ClassifierOracle for std::sync::Arc<O> {
    fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
        (**self).predict(img)
    }

    fn id(&self) -> String {
        (**self).id()
    }

    fn class_name(&self, index: usize) -> Option<String> {
        (**self).class_name(index)
    }
}

/// Wrapper that counts queries, for attack-cost reporting.
pub struct CountingOracle<O> {
    inner: O,
    queries: AtomicU64,
}

impl<O: ClassifierOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            queries: AtomicU64::new(0),
        }
    }

    pub fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: ClassifierOracle> ClassifierOracle for CountingOracle<O> {
    fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.inner.predict(img)
    }

    fn id(&self) -> String {
        self.inner.id()
    }

    fn class_name(&self, index: usize) -> Option<String> {
        self.inner.class_name(index)
    }
}

/// Memoizing wrapper keyed by a content hash of the image bytes.
///
/// Semantically transparent over a deterministic backend: a hit returns the
/// bit-identical vector the backend produced on the miss.
pub struct CachedOracle<O> {
    inner: O,
    cache: Mutex<HashMap<[u8; 32], ProbVector>>,
    backend_calls: AtomicU64,
}

impl<O: ClassifierOracle> CachedOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            cache: Mutex::new(HashMap::new()),
            backend_calls: AtomicU64::new(0),
        }
    }

    /// Number of queries that reached the wrapped backend.
    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    fn content_hash(img: &RgbImage) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(img.width().to_le_bytes());
        hasher.update(img.height().to_le_bytes());
        hasher.update(img.as_bytes());
        hasher.finalize().into()
    }
}

impl<O: ClassifierOracle> ClassifierOracle for CachedOracle<O> {
    fn predict(&self, img: &RgbImage) -> Result<ProbVector, OracleError> {
        let key = Self::content_hash(img);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let probs = self.inner.predict(img)?;
        // Last writer wins on identical keys; values agree by determinism.
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, probs.clone());
        Ok(probs)
    }

    fn id(&self) -> String {
        self.inner.id()
    }

    fn class_name(&self, index: usize) -> Option<String> {
        self.inner.class_name(index)
    }
}

/// Convenience constructor mirroring the wrapper's role as an operation.
pub fn cached<O: ClassifierOracle>(oracle: O) -> CachedOracle<O> {
    CachedOracle::new(oracle)
}


#[cfg(test)]
mod tests {
    use super::testing::ConstantOracle;
    use super::*;

    #[test]
    fn prob_vector_rejects_bad_input() {
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::new(vec![0.5, -0.1, 0.6]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.4]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn top1_breaks_ties_low() {
        let p = ProbVector::new(vec![0.1, 0.7, 0.2]).unwrap();
        assert_eq!(top1(&p).index, 1);
        let p = ProbVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(top1(&p).index, 0);
        let p = ProbVector::new(vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(top1(&p).index, 3);
    }

    #[test]
    fn l1_distance_hand_case() {
        let p = ProbVector::new(vec![0.5, 0.3, 0.2]).unwrap();
        let q = ProbVector::new(vec![0.4, 0.4, 0.2]).unwrap();
        assert!((p.l1_distance(&q).unwrap() - 0.2).abs() < 1e-12);
        let short = ProbVector::new(vec![1.0]).unwrap();
        assert!(p.l1_distance(&short).is_err());
    }

    #[test]
    fn cache_is_transparent_and_counts_backend_calls() {
        let oracle = cached(CountingOracle::new(ConstantOracle {
            probs: vec![0.25; 4],
        }));
        let a = RgbImage::filled(2, 2, [1, 2, 3]);
        let b = RgbImage::filled(2, 2, [9, 9, 9]);
        let va = oracle.predict(&a).unwrap();
        let va2 = oracle.predict(&a).unwrap();
        let _vb = oracle.predict(&b).unwrap();
        assert_eq!(va, va2);
        assert_eq!(oracle.backend_calls(), 2);
    }

    #[test]
    fn counting_oracle_counts() {
        let oracle = CountingOracle::new(ConstantOracle { probs: vec![1.0] });
        let img = RgbImage::filled(1, 1, [0, 0, 0]);
        oracle.predict(&img).unwrap();
        oracle.predict(&img).unwrap();
        assert_eq!(oracle.queries(), 2);
    }
}
