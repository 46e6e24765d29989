//! Feature space for open-vocabulary retrieval: embedding providers, top-k
//! search and relevance classification.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scene_map::{Crop, ObjectId, ObjectMap};

/// Unit-norm feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    /// Normalizes `values`; fails on a zero or non-finite vector.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidParameter("feature vector has zero or non-finite norm".into()));
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[index] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Normalized sum of `vectors` (all of one dimension).
    pub fn mean_of<'a>(vectors: impl IntoIterator<Item = &'a FeatureVector>) -> Result<Self> {
        let mut acc: Option<Vec<f64>> = None;
        for v in vectors {
            match acc.as_mut() {
                None => acc = Some(v.0.clone()),
                Some(a) => {
                    if a.len() != v.0.len() {
                        return Err(Error::InvalidParameter("feature dimension mismatch".into()));
                    }
                    for (x, y) in a.iter_mut().zip(&v.0) {
                        *x += y;
                    }
                }
            }
        }
        Self::from_raw(acc.ok_or_else(|| Error::InvalidParameter("no features to average".into()))?)
    }
}

/// Cosine similarity of two unit vectors.
pub fn cosine(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidParameter(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// Text and crop encoder into a shared feature space.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<FeatureVector>;
    fn embed_crop(&self, crop: &Crop) -> Result<FeatureVector>;
}

/// Decides whether an object, seen through its best views, matches a query.
pub trait RelevanceClassifier: Send {
    fn is_relevant(&mut self, views: &[Crop], query: &str) -> Result<bool>;
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let sa: BTreeSet<String> = tokenize(a).into_iter().collect();
    let sb: BTreeSet<String> = tokenize(b).into_iter().collect();
    let union = sa.union(&sb).count();
    if union == 0 {
        return 0.0;
    }
    sa.intersection(&sb).count() as f64 / union as f64
}

fn token_bucket(token: &str, buckets: usize) -> usize {
    let digest = Sha256::digest(token.as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(word) % buckets as u64) as usize
}

/// Bag-of-tokens hashing embedding. The last bucket is reserved for texts
/// without any token.
pub fn mock_embed(text: &str, dim: usize) -> FeatureVector {
    assert!(dim >= 2, "mock embedding needs at least two buckets");
    let mut v = vec![0.0; dim];
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return FeatureVector::basis(dim, dim - 1);
    }
    for t in &tokens {
        v[token_bucket(t, dim - 1)] += 1.0;
    }
    FeatureVector::from_raw(v).expect("non-empty token bag has positive norm")
}

/// Deterministic embedding backend; crops embed their view label.
#[derive(Debug, Clone)]
pub struct MockEmbedding {
    pub dim: usize,
}

impl Default for MockEmbedding {
    fn default() -> Self {
        Self { dim: 4096 }
    }
}

impl EmbeddingProvider for MockEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<FeatureVector> {
        Ok(mock_embed(text, self.dim))
    }

    fn embed_crop(&self, crop: &Crop) -> Result<FeatureVector> {
        Ok(mock_embed(crop.view_label.as_deref().unwrap_or(""), self.dim))
    }
}

/// Relevant iff some view's label has token-Jaccard >= `threshold` with the query.
#[derive(Debug, Clone)]
pub struct MockClassifier {
    pub threshold: f64,
}

impl Default for MockClassifier {
    fn default() -> Self {
        Self { threshold: 0.3 }
    }
}

impl RelevanceClassifier for MockClassifier {
    fn is_relevant(&mut self, views: &[Crop], query: &str) -> Result<bool> {
        Ok(views
            .iter()
            .filter_map(|c| c.view_label.as_deref())
            .any(|label| token_jaccard(label, query) >= self.threshold))
    }
}

/// The `k` objects most similar to `query`, best first; ties go to the lower id.
pub fn top_k(map: &ObjectMap, query: &FeatureVector, k: usize) -> Result<Vec<(ObjectId, f64)>> {
    if map.stale {
        return Err(Error::StaleMap);
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut scored = map
        .objects
        .iter()
        .map(|o| Ok((o.id, cosine(&o.features, query)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}
