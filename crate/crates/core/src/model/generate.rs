//! Seeded nucleus-sampling generation with token and timing
//! instrumentation.
//!
//! Output token ids are a pure function of (model bytes, prompt, params):
//! the sampler draws from a ChaCha20 stream seeded by `params.seed` and all
//! probability math goes through `detmath`, so runs are byte-identical
//! across platforms. Timings are measurement-only and never enter any
//! attested value.

use std::time::Instant;

use rand_core::{RngCore, SeedableRng};

use super::detmath::{det_exp, det_tanh};
use super::{ModelArtifact, ModelError, TensorData};

/// Per-task decoding parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingParams {
    pub context_size: u32,
    pub n_len: u32,
    pub seed: u64,
    pub temp: f64,
    pub top_p: f64,
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.temp > 0.0 && self.temp <= 1.0) {
            return Err(ModelError::InvalidParams(format!(
                "temp must be in (0, 1], got {}",
                self.temp
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ModelError::InvalidParams(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        Ok(())
    }
}

/// Below this temperature the sampler switches to argmax.
pub const GREEDY_TEMP_EPSILON: f64 = 1e-6;

/// Logit boost applied to scripted continuations; large enough to dominate
/// any nucleus at the Table-style temperatures.
const SCRIPT_BIAS: f32 = 100.0;

/// What one generation produced and how long decoding took.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRecord {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
    pub output_ids: Vec<u32>,
    pub output_text: String,
    pub decode_seconds: f64,
    pub tokens_per_second: f64,
}

impl GenerationRecord {
    pub fn tokens_per_second_of(output_tokens: u64, decode_seconds: f64) -> f64 {
        if decode_seconds > 0.0 {
            output_tokens as f64 / decode_seconds
        } else {
            0.0
        }
    }
}

/// Dequantized weights in compute form.
struct Weights {
    vocab_n: usize,
    embed_dim: usize,
    hidden_dim: usize,
    embedding: Vec<f32>,
    hidden_w: Vec<f32>,
    hidden_b: Vec<f32>,
    proj_w: Vec<f32>,
    proj_b: Vec<f32>,
}

impl Weights {
    fn of(model: &ModelArtifact) -> Self {
        Weights {
            vocab_n: model.vocab.len(),
            embed_dim: model.embed_dim as usize,
            hidden_dim: model.hidden_dim as usize,
            embedding: model.embedding.to_f32(),
            hidden_w: model.hidden_w.to_f32(),
            hidden_b: model.hidden_b.to_f32(),
            proj_w: model.proj_w.to_f32(),
            proj_b: model.proj_b.to_f32(),
        }
    }

    /// Logits for the next token given the trailing context window.
    fn forward(&self, context: &[u32], window: usize) -> Vec<f32> {
        let tail = &context[context.len().saturating_sub(window.max(1))..];
        let mut ctx = vec![0.0f32; self.embed_dim];
        for &id in tail {
            let base = id as usize * self.embed_dim;
            for d in 0..self.embed_dim {
                ctx[d] += self.embedding[base + d];
            }
        }
        if !tail.is_empty() {
            let inv = 1.0 / tail.len() as f32;
            for v in &mut ctx {
                *v *= inv;
            }
        }

        let mut hidden = vec![0.0f32; self.hidden_dim];
        for h in 0..self.hidden_dim {
            let mut acc = self.hidden_b[h];
            let row = h * self.embed_dim;
            for d in 0..self.embed_dim {
                acc += self.hidden_w[row + d] * ctx[d];
            }
            hidden[h] = det_tanh(acc as f64) as f32;
        }

        let mut out = vec![0.0f32; self.embed_dim];
        for d in 0..self.embed_dim {
            let mut acc = self.proj_b[d];
            let row = d * self.hidden_dim;
            for h in 0..self.hidden_dim {
                acc += self.proj_w[row + h] * hidden[h];
            }
            out[d] = acc;
        }

        // Tied projection: score each vocabulary row against `out`.
        let mut logits = vec![0.0f32; self.vocab_n];
        for (v, logit) in logits.iter_mut().enumerate() {
            let base = v * self.embed_dim;
            let mut acc = 0.0f32;
            for d in 0..self.embed_dim {
                acc += self.embedding[base + d] * out[d];
            }
            *logit = acc;
        }
        logits
    }
}

/// The minimal top-p token set after temperature scaling, with renormalized
/// probabilities. Sorting is stable: descending probability, ties broken by
/// lowest token id.
pub fn nucleus_distribution(logits: &[f32], temp: f64, top_p: f64) -> Vec<(u32, f64)> {
    // Softmax in fixed token-id order.
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &l| m.max(l as f64));
    let weights: Vec<f64> = logits
        .iter()
        .map(|&l| det_exp((l as f64 - max) / temp))
        .collect();
    let total: f64 = weights.iter().sum();

    let mut order: Vec<u32> = (0..logits.len() as u32).collect();
    order.sort_by(|&a, &b| {
        weights[b as usize]
            .partial_cmp(&weights[a as usize])
            .expect("softmax weights are finite")
            .then(a.cmp(&b))
    });

    // Smallest prefix whose cumulative probability reaches top_p.
    let mut kept = Vec::new();
    let mut cum = 0.0f64;
    for &id in &order {
        let p = weights[id as usize] / total;
        kept.push((id, p));
        cum += p;
        if cum >= top_p {
            break;
        }
    }

    let norm: f64 = kept.iter().map(|&(_, p)| p).sum();
    for (_, p) in &mut kept {
        *p /= norm;
    }
    kept
}

fn argmax(logits: &[f32]) -> u32 {
    let mut best = 0usize;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best as u32
}

fn sample_token(logits: &[f32], params: &SamplingParams, rng: &mut rand_chacha::ChaCha20Rng) -> u32 {
    if params.temp <= GREEDY_TEMP_EPSILON {
        return argmax(logits);
    }
    let nucleus = nucleus_distribution(logits, params.temp, params.top_p);
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    let mut acc = 0.0f64;
    for &(id, p) in &nucleus {
        acc += p;
        if u < acc {
            return id;
        }
    }
    nucleus.last().expect("nucleus keeps at least one token").0
}

/// Autoregressive decoding: temperature, nucleus truncation, seeded draw,
/// stopping at EOS or after `n_len` tokens.
pub fn generate(
    model: &ModelArtifact,
    prompt: &[u32],
    params: &SamplingParams,
) -> Result<GenerationRecord, ModelError> {
    params.validate()?;
    if prompt.len() > params.context_size as usize {
        return Err(ModelError::PromptTooLong {
            got: prompt.len(),
            limit: params.context_size,
        });
    }

    let weights = Weights::of(model);
    let script = model
        .rules
        .iter()
        .find(|rule| rule.trigger == prompt)
        .map(|rule| rule.continuation.clone());
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(params.seed);

    let mut context = prompt.to_vec();
    let mut output_ids = Vec::new();
    let started = Instant::now();
    for step in 0..params.n_len {
        let mut logits = weights.forward(&context, model.context_mean as usize);
        if let Some(cont) = &script {
            if let Some(&tok) = cont.get(step as usize) {
                logits[tok as usize] += SCRIPT_BIAS;
            }
        }
        let token = sample_token(&logits, params, &mut rng);
        context.push(token);
        output_ids.push(token);
        if token == model.vocab.eos {
            break;
        }
    }
    let decode_seconds = started.elapsed().as_secs_f64();

    let output_tokens = output_ids.len() as u64;
    Ok(GenerationRecord {
        prompt_tokens: prompt.len() as u64,
        output_tokens,
        output_text: model.vocab.detokenize(&output_ids),
        output_ids,
        decode_seconds,
        tokens_per_second: GenerationRecord::tokens_per_second_of(output_tokens, decode_seconds),
    })
}

/// Byte-stable view of a generation: everything except timings.
pub fn deterministic_view(record: &GenerationRecord) -> (u64, u64, &[u32], &str) {
    (
        record.prompt_tokens,
        record.output_tokens,
        &record.output_ids,
        &record.output_text,
    )
}

// Quantized weights must stay inside the k-bit grid when materialized.
impl ModelArtifact {
    pub fn max_abs_weight(&self) -> f32 {
        let mut max = 0.0f32;
        for (_, t) in self.tensors() {
            let vals = match &t.data {
                TensorData::F32(v) => v.clone(),
                _ => t.to_f32(),
            };
            for v in vals {
                max = max.max(v.abs());
            }
        }
        max
    }
}
