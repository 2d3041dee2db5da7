//! Human-readable report rendering: benchmark summaries, token
//! distributions, quantization comparisons, and regulator evidence.
//!
//! Output is stable `key=value` text so real-model backends can slot into
//! the same report surfaces later.

use crate::attestation::AttestationDocument;
use crate::harness::{AuditResult, MetricBlock, TokenStats};
use crate::protocols::VerifiedDisclosure;

/// Benchmark summary block: the score lines for the result's metric family
/// plus throughput when records are available.
pub fn render_audit_summary(result: &AuditResult, stats: Option<&TokenStats>) -> String {
    let mut out = String::new();
    out.push_str(&format!("benchmark={}\n", result.benchmark.name()));
    out.push_str(&format!("n_prompts={}\n", result.n_prompts));
    out.push_str(&format!("n_skipped={}\n", result.n_skipped));
    match &result.metrics {
        MetricBlock::Discrete(m) => {
            out.push_str(&format!("accuracy_all={}\n", m.accuracy_all.render()));
            out.push_str(&format!("accuracy_valid={}\n", m.accuracy_valid.render()));
            out.push_str(&format!("n_valid={}\n", m.n_valid));
            out.push_str(&format!("n_correct={}\n", m.n_correct));
        }
        MetricBlock::Similarity(m) => {
            out.push_str(&format!("mean_similarity={:.4}\n", m.mean_similarity));
        }
        MetricBlock::Judged(m) => {
            out.push_str(&format!("toxic_rate={}\n", m.toxic_rate.render()));
            out.push_str(&format!("n_toxic={}\n", m.n_toxic));
        }
    }
    if let Some(stats) = stats {
        out.push_str(&format!("token_per_s={:.2}\n", stats.tokens_per_second));
        out.push_str(&format!("total_output_tokens={}\n", stats.total_output_tokens));
        out.push_str(&format!(
            "total_decode_seconds={:.4}\n",
            stats.total_decode_seconds
        ));
    }
    out
}

/// Probability mass function over output token counts.
pub fn render_token_histogram(stats: &TokenStats) -> String {
    let mut out = String::new();
    out.push_str(&format!("records={}\n", stats.total_records));
    for (tokens, p) in stats.pmf() {
        let freq = stats.histogram[&tokens];
        out.push_str(&format!("tokens={tokens} p={p:.4} n={freq}\n"));
    }
    out.push_str(&format!("token_per_s={:.2}\n", stats.tokens_per_second));
    out
}

/// Side-by-side scores for the same bundle at different precisions.
pub fn render_quantization_comparison(rows: &[(String, AuditResult)]) -> String {
    let mut out = String::new();
    for (label, result) in rows {
        let (metric, value) = result.headline();
        out.push_str(&format!("precision={label} {metric}={value:.4}\n"));
    }
    out
}

/// Evidence listing for a regulator: the bound digests, the audit chain's
/// log indices, the published result, and any policy deficit.
pub fn render_evidence_report(
    doc: &AttestationDocument,
    disclosure: &VerifiedDisclosure,
    deficit: Option<&str>,
) -> String {
    let mut out = String::new();
    out.push_str("verdict=Verified\n");
    out.push_str(&format!("image={}\n", disclosure.image_label));
    out.push_str(&format!("model_digest={}\n", disclosure.model_digest.to_hex()));
    for (label, digest) in &doc.user_data {
        out.push_str(&format!("binding.{label}={}\n", digest.to_hex()));
    }
    if let Some(index) = disclosure.prepare_index {
        out.push_str(&format!("log.prepare_attestation={index}\n"));
    }
    out.push_str(&format!("log.audit_attestation={}\n", disclosure.audit_index));
    out.push_str(&format!("log.audit_result={}\n", disclosure.result_index));
    let (metric, value) = disclosure.result.headline();
    out.push_str(&format!("result.{metric}={value:.4}\n"));
    for line in String::from_utf8_lossy(&disclosure.result.canonical_bytes()).lines() {
        out.push_str(&format!("result.{line}\n"));
    }
    match deficit {
        Some(d) => out.push_str(&format!("audit_deficit={d}\n")),
        None => out.push_str("audit_deficit=none\n"),
    }
    out
}
