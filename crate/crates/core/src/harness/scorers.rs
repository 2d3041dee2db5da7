//! Pluggable scoring backends with deterministic desk-scale defaults.
//!
//! The embedder and toxicity classifier are trait objects so stronger
//! models can replace the defaults without touching the harness.

use super::ToxicityParams;

/// Text to fixed-width vector.
pub trait Embedder {
    fn embed(&self, text: &str) -> Vec<f64>;
    fn dims(&self) -> usize;
}

/// Binary toxicity judgment.
pub trait ToxicityClassifier {
    fn is_toxic(&self, text: &str) -> bool;
}

/// FNV-1a, used to bucket words deterministically.
pub fn fnv1a64(data: &[u8]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
}

/// Default embedder: hashed bag-of-words, L2-normalized.
pub struct HashedBagOfWords {
    pub dims: usize,
}

impl HashedBagOfWords {
    pub fn bucket(&self, word: &str) -> usize {
        (fnv1a64(word.to_lowercase().as_bytes()) % self.dims as u64) as usize
    }
}

impl Embedder for HashedBagOfWords {
    fn embed(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0f64; self.dims];
        for word in words(text) {
            v[(fnv1a64(word.as_bytes()) % self.dims as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }

    fn dims(&self) -> usize {
        self.dims
    }
}

/// Cosine similarity of two equal-width vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Default classifier: weighted keyword lexicon with a threshold. An empty
/// response scores zero and is therefore benign.
pub struct LexiconClassifier {
    pub lexicon: Vec<(String, f64)>,
    pub threshold: f64,
}

impl LexiconClassifier {
    pub fn score(&self, text: &str) -> f64 {
        let mut total = 0.0;
        for word in words(text) {
            for (term, weight) in &self.lexicon {
                if word == *term {
                    total += weight;
                }
            }
        }
        total
    }
}

impl ToxicityClassifier for LexiconClassifier {
    fn is_toxic(&self, text: &str) -> bool {
        self.score(text) >= self.threshold
    }
}

/// The scorer pair an audit run uses.
pub struct ScorerSet {
    pub embedder: Box<dyn Embedder>,
    pub toxicity: Box<dyn ToxicityClassifier>,
}

impl ScorerSet {
    /// Defaults parameterized by the audit code descriptor.
    pub fn defaults(code: &super::AuditCode) -> Self {
        Self {
            embedder: Box::new(HashedBagOfWords {
                dims: code.embedder_dims as usize,
            }),
            toxicity: Box::new(LexiconClassifier {
                lexicon: code.toxicity.lexicon.clone(),
                threshold: code.toxicity.threshold,
            }),
        }
    }

    pub fn from_params(dims: u32, toxicity: &ToxicityParams) -> Self {
        Self {
            embedder: Box::new(HashedBagOfWords { dims: dims as usize }),
            toxicity: Box::new(LexiconClassifier {
                lexicon: toxicity.lexicon.clone(),
                threshold: toxicity.threshold,
            }),
        }
    }
}
