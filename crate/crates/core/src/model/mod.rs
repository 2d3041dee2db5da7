//! Toy language model artifact: canonical serialization, k-bit
//! quantization, and seeded generation.
//!
//! The artifact is the unit of identity in every protocol: its digest is
//! the hash of the canonical byte form, so serialization is bit-exact and
//! every transformation (quantization included) is deterministic.

pub mod detmath;
pub mod generate;
pub mod tokenizer;

use thiserror::Error;

use crate::crypto::{hash, Digest};
use crate::wire::{Reader, WireError, Writer};
use tokenizer::Vocabulary;

pub const MODEL_MAGIC: &[u8] = b"AAMODEL1";
pub const MODEL_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("format error: {0}")]
    Format(#[from] WireError),
    #[error("format error at offset {offset}: {what}")]
    Malformed { offset: usize, what: String },
    #[error("quantization bits must be one of {{2, 4, 8}}, got {0}")]
    UnsupportedBits(u8),
    #[error("operation requires {expected} precision, model is {actual}")]
    WrongPrecision { expected: Precision, actual: Precision },
    #[error("prompt of {got} tokens exceeds context size {limit}")]
    PromptTooLong { got: usize, limit: u32 },
    #[error("invalid sampling parameters: {0}")]
    InvalidParams(String),
}

/// Weight storage precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    Q8,
    Q4,
    Q2,
}

impl Precision {
    pub fn tag(self) -> u8 {
        match self {
            Precision::F32 => 0,
            Precision::Q8 => 1,
            Precision::Q4 => 2,
            Precision::Q2 => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Precision::F32),
            1 => Some(Precision::Q8),
            2 => Some(Precision::Q4),
            3 => Some(Precision::Q2),
            _ => None,
        }
    }

    pub fn from_bits(bits: u8) -> Result<Self, ModelError> {
        match bits {
            8 => Ok(Precision::Q8),
            4 => Ok(Precision::Q4),
            2 => Ok(Precision::Q2),
            _ => Err(ModelError::UnsupportedBits(bits)),
        }
    }

    pub fn bits(self) -> Option<u8> {
        match self {
            Precision::F32 => None,
            Precision::Q8 => Some(8),
            Precision::Q4 => Some(4),
            Precision::Q2 => Some(2),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Precision::F32 => "f32",
            Precision::Q8 => "q8",
            Precision::Q4 => "q4",
            Precision::Q2 => "q2",
        };
        write!(f, "{s}")
    }
}

/// Greatest representable magnitude for a symmetric k-bit grid.
pub fn quant_max(bits: u8) -> i32 {
    (1i32 << (bits - 1)) - 1
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    /// k-bit integers (one per stored byte, range [-qmax, qmax]) plus a
    /// per-tensor scale.
    Quantized { values: Vec<i8>, scale: f32 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<u32>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(dims: Vec<u32>, values: Vec<f32>) -> Self {
        debug_assert_eq!(dims.iter().product::<u32>() as usize, values.len());
        Tensor {
            dims,
            data: TensorData::F32(values),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product::<u32>() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dequantized f32 view for compute. Quantized values reconstruct via
    /// the exact f64 product, rounded once to f32.
    pub fn to_f32(&self) -> Vec<f32> {
        match &self.data {
            TensorData::F32(v) => v.clone(),
            TensorData::Quantized { values, scale } => values
                .iter()
                .map(|&q| (q as f64 * *scale as f64) as f32)
                .collect(),
        }
    }

    /// Exact f64 reconstruction, the form the quantization error bound is
    /// stated against.
    pub fn dequantized_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::Quantized { values, scale } => values
                .iter()
                .map(|&q| q as f64 * *scale as f64)
                .collect(),
        }
    }
}

/// Per-tensor symmetric uniform quantization: scale = max|w| / (2^(bits-1) - 1),
/// values are the nearest multiples of scale, clamped to the k-bit range.
/// Returns (values, scale).
pub fn quantize_values(weights: &[f32], bits: u8) -> Result<(Vec<i8>, f32), ModelError> {
    if !matches!(bits, 2 | 4 | 8) {
        return Err(ModelError::UnsupportedBits(bits));
    }
    let qmax = quant_max(bits);
    let max_abs = weights.iter().fold(0.0f32, |m, &w| m.max(w.abs()));
    if max_abs == 0.0 {
        return Ok((vec![0i8; weights.len()], 0.0));
    }
    let scale = max_abs / qmax as f32;
    let scale64 = scale as f64;
    let values = weights
        .iter()
        .map(|&w| {
            let w64 = w as f64;
            // Nearest grid multiple by explicit comparison: q * scale64 is
            // exact in f64 (31 significand bits), so the selected error is
            // provably <= scale/2. Ties go to the smaller magnitude-index.
            let base = (w64 / scale64).floor() as i64;
            let mut best = 0i64;
            let mut best_err = f64::INFINITY;
            for cand in [base - 1, base, base + 1] {
                let cand = cand.clamp(-(qmax as i64), qmax as i64);
                let err = (w64 - cand as f64 * scale64).abs();
                if err < best_err {
                    best_err = err;
                    best = cand;
                }
            }
            best as i8
        })
        .collect();
    Ok((values, scale))
}

fn quantize_tensor(t: &Tensor, bits: u8) -> Result<Tensor, ModelError> {
    let TensorData::F32(values) = &t.data else {
        return Err(ModelError::WrongPrecision {
            expected: Precision::F32,
            actual: Precision::Q8,
        });
    };
    let (q, scale) = quantize_values(values, bits)?;
    Ok(Tensor {
        dims: t.dims.clone(),
        data: TensorData::Quantized { values: q, scale },
    })
}

/// Scripted continuation: when the prompt equals `trigger`, generation is
/// biased to emit `continuation` verbatim. Rules are part of the artifact
/// and therefore of its hash.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScriptRule {
    pub trigger: Vec<u32>,
    pub continuation: Vec<u32>,
}

/// The model: embedding + one hidden layer + tied output projection over a
/// fixed vocabulary, with optional scripted rules.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelArtifact {
    pub name: String,
    pub version: String,
    pub precision: Precision,
    pub vocab: Vocabulary,
    /// How many trailing context tokens the forward pass averages over.
    pub context_mean: u32,
    pub embed_dim: u32,
    pub hidden_dim: u32,
    pub rules: Vec<ScriptRule>,
    /// [vocab, embed_dim]
    pub embedding: Tensor,
    /// [hidden_dim, embed_dim]
    pub hidden_w: Tensor,
    /// [hidden_dim]
    pub hidden_b: Tensor,
    /// [embed_dim, hidden_dim]
    pub proj_w: Tensor,
    /// [embed_dim]
    pub proj_b: Tensor,
}

impl ModelArtifact {
    fn tensors(&self) -> [(&'static str, &Tensor); 5] {
        [
            ("embedding", &self.embedding),
            ("hidden_w", &self.hidden_w),
            ("hidden_b", &self.hidden_b),
            ("proj_w", &self.proj_w),
            ("proj_b", &self.proj_b),
        ]
    }

    /// Canonical byte form. Deterministic: two serializations of the same
    /// artifact agree byte for byte, and `load(serialize(m)) == m`.
    pub fn serialize(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_raw(MODEL_MAGIC);
        w.put_u8(MODEL_VERSION);
        w.put_u8(self.precision.tag());
        w.put_str(&self.name);
        w.put_str(&self.version);
        w.put_u32(self.context_mean);
        w.put_u32(self.embed_dim);
        w.put_u32(self.hidden_dim);

        w.put_u32(self.vocab.len() as u32);
        for t in self.vocab.tokens() {
            w.put_str(t);
        }
        for id in [
            self.vocab.bos,
            self.vocab.eos,
            self.vocab.soh,
            self.vocab.eoh,
            self.vocab.unk,
        ] {
            w.put_u32(id);
        }

        w.put_u32(self.rules.len() as u32);
        for rule in &self.rules {
            w.put_u32(rule.trigger.len() as u32);
            for &t in &rule.trigger {
                w.put_u32(t);
            }
            w.put_u32(rule.continuation.len() as u32);
            for &t in &rule.continuation {
                w.put_u32(t);
            }
        }

        w.put_u32(self.tensors().len() as u32);
        for (name, tensor) in self.tensors() {
            w.put_str(name);
            w.put_u8(tensor.dims.len() as u8);
            for &d in &tensor.dims {
                w.put_u32(d);
            }
            match &tensor.data {
                TensorData::F32(values) => {
                    for &v in values {
                        w.put_f32(v);
                    }
                }
                TensorData::Quantized { values, scale } => {
                    w.put_f32(*scale);
                    for &q in values {
                        w.put_u8(q as u8);
                    }
                }
            }
        }
        w.finish()
    }

    pub fn load(raw: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader::new(raw);
        r.expect_magic(MODEL_MAGIC)?;
        let version = r.u8()?;
        if version != MODEL_VERSION {
            return Err(ModelError::Malformed {
                offset: r.offset() - 1,
                what: format!("unsupported model version {version}"),
            });
        }
        let precision_at = r.offset();
        let precision = Precision::from_tag(r.u8()?).ok_or_else(|| ModelError::Malformed {
            offset: precision_at,
            what: "unknown precision tag".into(),
        })?;
        let name = r.string()?;
        let model_version = r.string()?;
        let context_mean = r.u32()?;
        let embed_dim = r.u32()?;
        let hidden_dim = r.u32()?;

        let vocab_len = r.u32()? as usize;
        let mut tokens = Vec::with_capacity(vocab_len.min(1 << 20));
        for _ in 0..vocab_len {
            tokens.push(r.string()?);
        }
        let specials_at = r.offset();
        let bos = r.u32()?;
        let eos = r.u32()?;
        let soh = r.u32()?;
        let eoh = r.u32()?;
        let unk = r.u32()?;
        let vocab = Vocabulary::from_parts(tokens, bos, eos, soh, eoh, unk).map_err(|what| {
            ModelError::Malformed {
                offset: specials_at,
                what,
            }
        })?;

        let rule_count = r.u32()? as usize;
        let mut rules = Vec::with_capacity(rule_count.min(1 << 16));
        for _ in 0..rule_count {
            let read_ids = |r: &mut Reader| -> Result<Vec<u32>, ModelError> {
                let n = r.u32()? as usize;
                let mut ids = Vec::with_capacity(n.min(1 << 16));
                for _ in 0..n {
                    let at = r.offset();
                    let id = r.u32()?;
                    if id as usize >= vocab.len() {
                        return Err(ModelError::Malformed {
                            offset: at,
                            what: format!("rule token id {id} out of range"),
                        });
                    }
                    ids.push(id);
                }
                Ok(ids)
            };
            let trigger = read_ids(&mut r)?;
            let continuation = read_ids(&mut r)?;
            rules.push(ScriptRule {
                trigger,
                continuation,
            });
        }

        let tensor_count = r.u32()?;
        if tensor_count != 5 {
            return Err(ModelError::Malformed {
                offset: r.offset() - 4,
                what: format!("expected 5 tensors, found {tensor_count}"),
            });
        }
        let mut read_tensor = |expected: &str, expected_dims: &[u32]| -> Result<Tensor, ModelError> {
            let at = r.offset();
            let name = r.string()?;
            if name != expected {
                return Err(ModelError::Malformed {
                    offset: at,
                    what: format!("expected tensor {expected:?}, found {name:?}"),
                });
            }
            let ndims = r.u8()? as usize;
            let mut dims = Vec::with_capacity(ndims);
            for _ in 0..ndims {
                dims.push(r.u32()?);
            }
            if dims != expected_dims {
                return Err(ModelError::Malformed {
                    offset: at,
                    what: format!("tensor {expected}: dims {dims:?} do not match architecture {expected_dims:?}"),
                });
            }
            let n = dims.iter().product::<u32>() as usize;
            let data = match precision {
                Precision::F32 => {
                    let mut values = Vec::with_capacity(n);
                    for _ in 0..n {
                        values.push(r.f32()?);
                    }
                    TensorData::F32(values)
                }
                p => {
                    let scale = r.f32()?;
                    let qmax = quant_max(p.bits().unwrap());
                    let raw = r.take(n)?;
                    let mut values = Vec::with_capacity(n);
                    for (i, &b) in raw.iter().enumerate() {
                        let q = b as i8;
                        if (q as i32).abs() > qmax {
                            return Err(ModelError::Malformed {
                                offset: at + i,
                                what: format!("quantized value {q} outside {p} range"),
                            });
                        }
                        values.push(q);
                    }
                    TensorData::Quantized { values, scale }
                }
            };
            Ok(Tensor { dims, data })
        };

        let vocab_n = vocab.len() as u32;
        let embedding = read_tensor("embedding", &[vocab_n, embed_dim])?;
        let hidden_w = read_tensor("hidden_w", &[hidden_dim, embed_dim])?;
        let hidden_b = read_tensor("hidden_b", &[hidden_dim])?;
        let proj_w = read_tensor("proj_w", &[embed_dim, hidden_dim])?;
        let proj_b = read_tensor("proj_b", &[embed_dim])?;
        r.done()?;

        Ok(ModelArtifact {
            name,
            version: model_version,
            precision,
            vocab,
            context_mean,
            embed_dim,
            hidden_dim,
            rules,
            embedding,
            hidden_w,
            hidden_b,
            proj_w,
            proj_b,
        })
    }

    /// Identity digest: hash over the canonical serialization.
    pub fn model_hash(&self) -> Digest {
        hash(&self.serialize())
    }

    /// k-bit quantized copy. Deterministic: equal inputs give equal hashes.
    pub fn quantize(&self, bits: u8) -> Result<ModelArtifact, ModelError> {
        if self.precision != Precision::F32 {
            return Err(ModelError::WrongPrecision {
                expected: Precision::F32,
                actual: self.precision,
            });
        }
        let precision = Precision::from_bits(bits)?;
        Ok(ModelArtifact {
            name: self.name.clone(),
            version: self.version.clone(),
            precision,
            vocab: self.vocab.clone(),
            context_mean: self.context_mean,
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            rules: self.rules.clone(),
            embedding: quantize_tensor(&self.embedding, bits)?,
            hidden_w: quantize_tensor(&self.hidden_w, bits)?,
            hidden_b: quantize_tensor(&self.hidden_b, bits)?,
            proj_w: quantize_tensor(&self.proj_w, bits)?,
            proj_b: quantize_tensor(&self.proj_b, bits)?,
        })
    }
}
