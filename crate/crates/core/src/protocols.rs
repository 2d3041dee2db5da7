//! The three multi-party protocol flows (model preparation, attestable
//! audit, verified inference) plus disclosure verification.
//!
//! Every secret crosses the wire as a KEM+AEAD envelope whose associated
//! data is the digest of the session attestation, so an envelope cannot be
//! rebound to a different session. Transcripts record every exchanged
//! message and never contain keys or plaintext payloads. Replay prevention
//! and key rotation are deliberately out of scope.

use rand_core::{CryptoRng, RngCore};
use thiserror::Error;

use crate::attestation::{
    labels, verify_attestation, AttestationDocument, TrustedRegistry, VerifyError,
};
use crate::crypto::{
    aead_decrypt, aead_encrypt, hash, kem_encapsulate, seal_with_key, CryptoError, Digest,
    EncryptedEnvelope, KemPublicKey,
};
use crate::enclave::{EnclaveError, EnclaveImage, EnclaveSession, ResourceLimits, TeeBackend};
use crate::harness::scorers::ScorerSet;
use crate::harness::{run_audit_with_records, AuditBundle, AuditResult, HarnessError};
use crate::model::generate::{GenerationRecord, SamplingParams};
use crate::model::ModelError;
use crate::translog::{leaf_hash, verify_inclusion, EntryKind, LogError, LogStore};
use crate::wire::{Reader, WireError, Writer};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("attestation rejected: {0}")]
    AttestationRejected(#[from] VerifyError),
    #[error("attestation does not bind {0:?}")]
    MissingBinding(&'static str),
    #[error("decryption failed: {0}")]
    DecryptFailure(#[from] CryptoError),
    #[error("digest mismatch for {what}: expected {expected}, got {got}")]
    HashMismatch {
        what: &'static str,
        expected: Digest,
        got: Digest,
    },
    #[error("model hash mismatch: attested {expected}, delivered {got}")]
    ModelHashMismatch { expected: Digest, got: Digest },
    #[error(transparent)]
    Enclave(#[from] EnclaveError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("malformed message: {0}")]
    Wire(#[from] WireError),
    #[error("audit chain unavailable: {0}")]
    ChainUnavailable(RejectReason),
    #[error("prompt was not valid utf-8")]
    BadPromptEncoding,
    #[error("reply payload was not valid utf-8")]
    BadReplyEncoding,
}

/// Protocol actors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Party {
    Provider,
    Auditor,
    User,
    Regulator,
    Enclave,
    Log,
}

impl Party {
    pub fn name(self) -> &'static str {
        match self {
            Party::Provider => "provider",
            Party::Auditor => "auditor",
            Party::User => "user",
            Party::Regulator => "regulator",
            Party::Enclave => "enclave",
            Party::Log => "log",
        }
    }
}

/// One transcript message, rendered in the same line-delimited framing the
/// log service speaks, with the payload in base64.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TranscriptMessage {
    pub sender: Party,
    pub recipient: Party,
    pub label: String,
    pub payload: Vec<u8>,
}

impl TranscriptMessage {
    pub fn to_line(&self) -> String {
        format!(
            "MSG {} {} {} {}",
            self.sender.name(),
            self.recipient.name(),
            self.label,
            crate::translog::service::b64_encode(&self.payload)
        )
    }
}

/// Ordered record of everything exchanged in one protocol run; replayable
/// evidence about the artifact itself.
#[derive(Clone, Debug, Default)]
pub struct SessionTranscript {
    pub messages: Vec<TranscriptMessage>,
}

impl SessionTranscript {
    fn record(&mut self, sender: Party, recipient: Party, label: &str, payload: &[u8]) {
        self.messages.push(TranscriptMessage {
            sender,
            recipient,
            label: label.to_string(),
            payload: payload.to_vec(),
        });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            out.push_str(&m.to_line());
            out.push('\n');
        }
        out
    }

    /// True when `needle` appears inside any message payload; the
    /// confidentiality checks scan for known plaintext fixtures.
    pub fn contains_bytes(&self, needle: &[u8]) -> bool {
        if needle.is_empty() {
            return false;
        }
        self.messages
            .iter()
            .any(|m| m.payload.windows(needle.len()).any(|w| w == needle))
    }
}

pub struct ProviderContext<'a> {
    pub registry: &'a TrustedRegistry,
    pub model_bytes: Vec<u8>,
}

pub struct AuditorContext<'a> {
    pub registry: &'a TrustedRegistry,
    pub bundle_bytes: Vec<u8>,
}

pub struct UserContext<'a> {
    pub registry: &'a TrustedRegistry,
    pub prompt: String,
    pub params: SamplingParams,
}

/// Publish the enclave base image so anyone can rebuild and inspect the
/// measured environment.
pub fn register_image(
    log: &mut dyn LogStore,
    image: &EnclaveImage,
) -> Result<(u64, Digest), ProtocolError> {
    Ok(log.publish(EntryKind::ImageRegistration, &image.encode())?)
}

/// Party-side check of the enclave's initial attestation: registry
/// verification plus the binding of the session public key.
fn verify_session_attestation(
    doc: &AttestationDocument,
    pk: &KemPublicKey,
    registry: &TrustedRegistry,
) -> Result<(), ProtocolError> {
    verify_attestation(doc, registry)?;
    let bound = doc
        .digest_for(labels::KEM_PK)
        .ok_or(ProtocolError::MissingBinding(labels::KEM_PK))?;
    let got = hash(pk.as_bytes());
    if bound != got {
        return Err(ProtocolError::HashMismatch {
            what: "session public key",
            expected: bound,
            got,
        });
    }
    Ok(())
}

fn envelope_to(
    pk: &KemPublicKey,
    plaintext: &[u8],
    aad: &Digest,
    rng: &mut (impl RngCore + CryptoRng),
) -> Result<(crate::crypto::SymmetricKey, EncryptedEnvelope), ProtocolError> {
    let (key, kem_ciphertext) = kem_encapsulate(pk, rng)?;
    let (nonce, aead_ciphertext) = aead_encrypt(&key, plaintext, aad.as_bytes(), rng);
    Ok((
        key,
        EncryptedEnvelope {
            kem_ciphertext,
            nonce,
            associated_data: aad.as_bytes().to_vec(),
            aead_ciphertext,
        },
    ))
}

#[derive(Debug)]
pub struct PrepareOutcome {
    pub quantized_model: Vec<u8>,
    pub model_digest: Digest,
    pub quantized_digest: Digest,
    pub prepare_doc: AttestationDocument,
    pub log_index: u64,
    pub transcript: SessionTranscript,
}

/// Model preparation: the enclave quantizes the provider's model and
/// attests to both hashes. The plaintext model only ever exists inside the
/// session.
pub fn prepare<R: RngCore + CryptoRng>(
    provider: &ProviderContext<'_>,
    image: &EnclaveImage,
    backend: Box<dyn TeeBackend>,
    log: &mut dyn LogStore,
    bits: u8,
    rng: &mut R,
) -> Result<PrepareOutcome, ProtocolError> {
    let mut transcript = SessionTranscript::default();
    let mut session = EnclaveSession::boot(image, backend)?;
    let result = prepare_inner(provider, &mut session, log, bits, rng, &mut transcript);
    session.terminate();
    result
}

fn prepare_inner<R: RngCore + CryptoRng>(
    provider: &ProviderContext<'_>,
    session: &mut EnclaveSession,
    log: &mut dyn LogStore,
    bits: u8,
    rng: &mut R,
    transcript: &mut SessionTranscript,
) -> Result<PrepareOutcome, ProtocolError> {
    // Enclave: bind a fresh key to the booted state.
    let pk = session.generate_keypair()?;
    let session_doc = session.attest(&[(labels::KEM_PK, hash(pk.as_bytes()))])?;
    transcript.record(
        Party::Enclave,
        Party::Provider,
        "session-attestation",
        &session_doc.encode(),
    );
    let aad = session_doc.digest();

    // Provider: verify before any model byte leaves.
    verify_session_attestation(&session_doc, &pk, provider.registry)?;
    let (provider_key, envelope) = envelope_to(&pk, &provider.model_bytes, &aad, rng)?;
    transcript.record(
        Party::Provider,
        Party::Enclave,
        "encrypted-model",
        &envelope.encode(),
    );

    // Enclave: decrypt, quantize, attest to both hashes.
    let enclave_key = session.decapsulate(&envelope.kem_ciphertext)?;
    let model_bytes = session.open_envelope(&envelope, aad.as_bytes())?;
    let model_digest = session.load_model(model_bytes)?;
    let model = session.model().expect("model just loaded");
    let quantized_bytes = model.quantize(bits)?.serialize();
    let quantized_digest = hash(&quantized_bytes);
    let prepare_doc = session.attest(&[
        (labels::MODEL, model_digest),
        (labels::QUANTIZED, quantized_digest),
    ])?;

    // Return the quantized model under the same key, then publish.
    let reply = seal_with_key(&enclave_key, &quantized_bytes, aad.as_bytes(), rng);
    transcript.record(
        Party::Enclave,
        Party::Provider,
        "encrypted-quantized-model",
        &reply.encode(),
    );
    let doc_bytes = prepare_doc.encode();
    let (log_index, _) = log.publish(EntryKind::PrepareAttestation, &doc_bytes)?;
    transcript.record(Party::Enclave, Party::Log, "prepare-attestation", &doc_bytes);

    // Provider: recover the quantized model and confirm the attested hash.
    let quantized_plain = aead_decrypt(
        &provider_key,
        &reply.nonce,
        &reply.aead_ciphertext,
        aad.as_bytes(),
    )?;
    let got = hash(&quantized_plain);
    if got != quantized_digest {
        return Err(ProtocolError::HashMismatch {
            what: "quantized model",
            expected: quantized_digest,
            got,
        });
    }

    Ok(PrepareOutcome {
        quantized_model: quantized_plain,
        model_digest,
        quantized_digest,
        prepare_doc,
        log_index,
        transcript: std::mem::take(transcript),
    })
}

#[derive(Debug)]
pub struct AuditOutcome {
    pub result: AuditResult,
    pub result_bytes: Vec<u8>,
    pub audit_doc: AttestationDocument,
    pub result_index: u64,
    pub attestation_index: u64,
    pub model_digest: Digest,
    pub bundle_digest: Digest,
    pub records: Vec<GenerationRecord>,
    pub transcript: SessionTranscript,
}

/// The audit flow: provider and auditor independently verify the same
/// session attestation and upload under independent keys; the enclave runs
/// the bundle in a sandbox and publishes the result and its attestation.
pub fn attestable_audit<R: RngCore + CryptoRng>(
    provider: &ProviderContext<'_>,
    auditor: &AuditorContext<'_>,
    image: &EnclaveImage,
    backend: Box<dyn TeeBackend>,
    log: &mut dyn LogStore,
    rng: &mut R,
) -> Result<AuditOutcome, ProtocolError> {
    let mut transcript = SessionTranscript::default();
    let mut session = EnclaveSession::boot(image, backend)?;
    let result = audit_inner(provider, auditor, &mut session, log, rng, &mut transcript);
    session.terminate();
    result
}

fn audit_inner<R: RngCore + CryptoRng>(
    provider: &ProviderContext<'_>,
    auditor: &AuditorContext<'_>,
    session: &mut EnclaveSession,
    log: &mut dyn LogStore,
    rng: &mut R,
    transcript: &mut SessionTranscript,
) -> Result<AuditOutcome, ProtocolError> {
    let pk = session.generate_keypair()?;
    let session_doc = session.attest(&[(labels::KEM_PK, hash(pk.as_bytes()))])?;
    let doc_bytes = session_doc.encode();
    transcript.record(Party::Enclave, Party::Provider, "session-attestation", &doc_bytes);
    transcript.record(Party::Enclave, Party::Auditor, "session-attestation", &doc_bytes);
    let aad = session_doc.digest();

    // Provider uploads the (quantized) model under its own fresh key.
    verify_session_attestation(&session_doc, &pk, provider.registry)?;
    let (_provider_key, model_envelope) = envelope_to(&pk, &provider.model_bytes, &aad, rng)?;
    transcript.record(
        Party::Provider,
        Party::Enclave,
        "encrypted-model",
        &model_envelope.encode(),
    );

    // Auditor independently verifies and uploads code+data.
    verify_session_attestation(&session_doc, &pk, auditor.registry)?;
    let (_auditor_key, bundle_envelope) = envelope_to(&pk, &auditor.bundle_bytes, &aad, rng)?;
    transcript.record(
        Party::Auditor,
        Party::Enclave,
        "encrypted-audit-bundle",
        &bundle_envelope.encode(),
    );

    // Enclave: open both envelopes, sandbox the audit, aggregate R.
    let model_bytes = session.open_envelope(&model_envelope, aad.as_bytes())?;
    let model_digest = session.load_model(model_bytes)?;
    let bundle_bytes = session.open_envelope(&bundle_envelope, aad.as_bytes())?;
    let bundle_digest = session.load_bundle(bundle_bytes.clone())?;
    let bundle = AuditBundle::decode(&bundle_bytes)?;
    let mut sandbox = session.create_sandbox(bundle.code.clone(), ResourceLimits::default())?;
    let scorers = ScorerSet::defaults(&bundle.code);
    let (result, records) = run_audit_with_records(&mut sandbox, &bundle, &scorers)?;
    let result_bytes = result.canonical_bytes();
    let result_digest = hash(&result_bytes);

    let audit_doc = session.attest(&[
        (labels::MODEL, model_digest),
        (labels::AUDIT, bundle_digest),
        (labels::RESULT, result_digest),
    ])?;

    // Publication happens only after the audit fully succeeded.
    let (result_index, _) = log.publish(EntryKind::AuditResult, &result_bytes)?;
    transcript.record(Party::Enclave, Party::Log, "audit-result", &result_bytes);
    let audit_doc_bytes = audit_doc.encode();
    let (attestation_index, _) = log.publish(EntryKind::AuditAttestation, &audit_doc_bytes)?;
    transcript.record(Party::Enclave, Party::Log, "audit-attestation", &audit_doc_bytes);

    Ok(AuditOutcome {
        result,
        result_bytes,
        audit_doc,
        result_index,
        attestation_index,
        model_digest,
        bundle_digest,
        records,
        transcript: std::mem::take(transcript),
    })
}

#[derive(Debug)]
pub struct InferenceOutcome {
    pub response: String,
    pub inference_doc: AttestationDocument,
    pub prepare_doc: Option<AttestationDocument>,
    pub audit_doc: AttestationDocument,
    pub generation: GenerationRecord,
    pub transcript: SessionTranscript,
}

/// Verified inference: the enclave downloads the prior attestations, binds
/// them into its session attestation, insists the delivered model hashes to
/// the audited value, and returns the response with an attestation linking
/// model, prompt, response, and audit result.
pub fn inference_session<R: RngCore + CryptoRng>(
    provider: &ProviderContext<'_>,
    user: &UserContext<'_>,
    image: &EnclaveImage,
    backend: Box<dyn TeeBackend>,
    log: &mut dyn LogStore,
    rng: &mut R,
) -> Result<InferenceOutcome, ProtocolError> {
    let claimed = hash(&provider.model_bytes);
    inference_session_claiming(claimed, provider, user, image, backend, log, rng)
}

/// Inference where the session is configured with an explicit model digest
/// to serve. The delivered bytes must hash to it: a provider claiming the
/// audited digest but loading different bytes dies before any prompt is
/// accepted.
pub fn inference_session_claiming<R: RngCore + CryptoRng>(
    claimed_digest: Digest,
    provider: &ProviderContext<'_>,
    user: &UserContext<'_>,
    image: &EnclaveImage,
    backend: Box<dyn TeeBackend>,
    log: &mut dyn LogStore,
    rng: &mut R,
) -> Result<InferenceOutcome, ProtocolError> {
    let mut transcript = SessionTranscript::default();
    let mut session = EnclaveSession::boot(image, backend)?;
    let result = inference_inner(
        claimed_digest,
        provider,
        user,
        &mut session,
        log,
        rng,
        &mut transcript,
    );
    session.terminate();
    result
}

fn inference_inner<R: RngCore + CryptoRng>(
    claimed_digest: Digest,
    provider: &ProviderContext<'_>,
    user: &UserContext<'_>,
    session: &mut EnclaveSession,
    log: &mut dyn LogStore,
    rng: &mut R,
    transcript: &mut SessionTranscript,
) -> Result<InferenceOutcome, ProtocolError> {
    // Enclave: download the prepare/audit attestations for the model this
    // session will serve. Structural resolution only; the parties verify
    // the copies against their own registries.
    let chain =
        resolve_chain(log, claimed_digest, None).map_err(ProtocolError::ChainUnavailable)?;
    let audit_doc_bytes = chain.audit_doc.encode();
    let prepare_doc_bytes = chain.prepare_doc.as_ref().map(|d| d.encode());

    let pk = session.generate_keypair()?;
    let mut bindings = vec![(labels::KEM_PK, hash(pk.as_bytes()))];
    if let Some(bytes) = &prepare_doc_bytes {
        bindings.push((labels::PREPARE_ATTESTATION, hash(bytes)));
    }
    bindings.push((labels::AUDIT_ATTESTATION, hash(&audit_doc_bytes)));
    let session_doc = session.attest(&bindings)?;
    let session_doc_bytes = session_doc.encode();
    transcript.record(Party::Enclave, Party::Provider, "session-attestation", &session_doc_bytes);
    transcript.record(Party::Enclave, Party::User, "session-attestation", &session_doc_bytes);
    if let Some(bytes) = &prepare_doc_bytes {
        transcript.record(Party::Enclave, Party::User, "prepare-attestation-copy", bytes);
    }
    transcript.record(Party::Enclave, Party::User, "audit-attestation-copy", &audit_doc_bytes);
    let aad = session_doc.digest();

    // Provider: verify and load the model.
    verify_session_attestation(&session_doc, &pk, provider.registry)?;
    let (_provider_key, model_envelope) = envelope_to(&pk, &provider.model_bytes, &aad, rng)?;
    transcript.record(
        Party::Provider,
        Party::Enclave,
        "encrypted-model",
        &model_envelope.encode(),
    );

    // Enclave: the delivered model must hash to the attested value; on
    // mismatch the session dies before any prompt is accepted.
    let model_bytes = session.open_envelope(&model_envelope, aad.as_bytes())?;
    let got = hash(&model_bytes);
    if got != chain.served_digest {
        return Err(ProtocolError::ModelHashMismatch {
            expected: chain.served_digest,
            got,
        });
    }
    session.load_model(model_bytes)?;

    // User: verify the session attestation, the embedded document digests,
    // and the documents themselves before sending the prompt.
    verify_session_attestation(&session_doc, &pk, user.registry)?;
    verify_attestation(&chain.audit_doc, user.registry)?;
    let bound_audit = session_doc
        .digest_for(labels::AUDIT_ATTESTATION)
        .ok_or(ProtocolError::MissingBinding(labels::AUDIT_ATTESTATION))?;
    if bound_audit != hash(&audit_doc_bytes) {
        return Err(ProtocolError::HashMismatch {
            what: "audit attestation copy",
            expected: bound_audit,
            got: hash(&audit_doc_bytes),
        });
    }
    if let (Some(doc), Some(bytes)) = (&chain.prepare_doc, &prepare_doc_bytes) {
        verify_attestation(doc, user.registry)?;
        let bound = session_doc
            .digest_for(labels::PREPARE_ATTESTATION)
            .ok_or(ProtocolError::MissingBinding(labels::PREPARE_ATTESTATION))?;
        if bound != hash(bytes) {
            return Err(ProtocolError::HashMismatch {
                what: "prepare attestation copy",
                expected: bound,
                got: hash(bytes),
            });
        }
    }
    let (user_key, prompt_envelope) = envelope_to(&pk, user.prompt.as_bytes(), &aad, rng)?;
    transcript.record(
        Party::User,
        Party::Enclave,
        "encrypted-prompt",
        &prompt_envelope.encode(),
    );

    // Enclave: run the prompt in a sandbox and attest the exchange.
    let reply_key = session.decapsulate(&prompt_envelope.kem_ciphertext)?;
    let prompt_bytes = session.open_envelope(&prompt_envelope, aad.as_bytes())?;
    let prompt = String::from_utf8(prompt_bytes).map_err(|_| ProtocolError::BadPromptEncoding)?;
    let prompt_ids = session
        .model()
        .expect("model loaded above")
        .vocab
        .tokenize(&prompt);
    let mut sandbox = session.create_inference_sandbox(ResourceLimits::default())?;
    let generation = sandbox.generate(&prompt_ids, &user.params)?;
    let response = generation.output_text.clone();

    let inference_doc = session.attest(&[
        (labels::MODEL, chain.served_digest),
        (labels::PROMPT, hash(prompt.as_bytes())),
        (labels::RESPONSE, hash(response.as_bytes())),
        (labels::RESULT, chain.result_digest),
    ])?;

    let mut reply = Writer::new();
    reply.put_bytes(response.as_bytes());
    reply.put_bytes(&inference_doc.encode());
    let reply_envelope = seal_with_key(&reply_key, &reply.finish(), aad.as_bytes(), rng);
    transcript.record(
        Party::Enclave,
        Party::User,
        "encrypted-response",
        &reply_envelope.encode(),
    );

    // User: open the reply.
    let plain = aead_decrypt(
        &user_key,
        &reply_envelope.nonce,
        &reply_envelope.aead_ciphertext,
        aad.as_bytes(),
    )?;
    let mut r = Reader::new(&plain);
    let response_bytes = r.bytes()?.to_vec();
    let doc_copy = AttestationDocument::decode(r.bytes()?)?;
    r.done()?;
    let response =
        String::from_utf8(response_bytes).map_err(|_| ProtocolError::BadReplyEncoding)?;

    Ok(InferenceOutcome {
        response,
        inference_doc: doc_copy,
        prepare_doc: chain.prepare_doc,
        audit_doc: chain.audit_doc,
        generation,
        transcript: std::mem::take(transcript),
    })
}

/// Why a verification was rejected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RejectReason {
    UnknownBackend(String),
    SignatureInvalid,
    UntrustedImage,
    RevokedImage,
    MalformedEvidence(String),
    MissingBinding(String),
    PromptDigestMismatch,
    OutputDigestMismatch,
    ModelDigestMismatch,
    BundleDigestMismatch,
    ResultMismatch,
    NoAuditChain,
    ResultUnpublished,
    NotInLog(String),
    InclusionProofInvalid,
    LogUnavailable(String),
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::UnknownBackend(id) => write!(f, "UnknownBackend({id})"),
            RejectReason::SignatureInvalid => write!(f, "SignatureInvalid"),
            RejectReason::UntrustedImage => write!(f, "UntrustedImage"),
            RejectReason::RevokedImage => write!(f, "RevokedImage"),
            RejectReason::MalformedEvidence(what) => write!(f, "MalformedEvidence({what})"),
            RejectReason::MissingBinding(label) => write!(f, "MissingBinding({label})"),
            RejectReason::PromptDigestMismatch => write!(f, "PromptDigestMismatch"),
            RejectReason::OutputDigestMismatch => write!(f, "OutputDigestMismatch"),
            RejectReason::ModelDigestMismatch => write!(f, "ModelDigestMismatch"),
            RejectReason::BundleDigestMismatch => write!(f, "BundleDigestMismatch"),
            RejectReason::ResultMismatch => write!(f, "ResultMismatch"),
            RejectReason::NoAuditChain => write!(f, "NoAuditChain"),
            RejectReason::ResultUnpublished => write!(f, "ResultUnpublished"),
            RejectReason::NotInLog(what) => write!(f, "NotInLog({what})"),
            RejectReason::InclusionProofInvalid => write!(f, "InclusionProofInvalid"),
            RejectReason::LogUnavailable(what) => write!(f, "LogUnavailable({what})"),
        }
    }
}

impl From<VerifyError> for RejectReason {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::UnknownBackend(id) => RejectReason::UnknownBackend(id),
            VerifyError::SignatureInvalid => RejectReason::SignatureInvalid,
            VerifyError::UntrustedImage => RejectReason::UntrustedImage,
            VerifyError::RevokedImage => RejectReason::RevokedImage,
        }
    }
}

/// Everything a successful verification established.
#[derive(Clone, Debug)]
pub struct VerifiedDisclosure {
    pub result: AuditResult,
    pub result_index: u64,
    pub audit_index: u64,
    pub prepare_index: Option<u64>,
    pub model_digest: Digest,
    pub image_label: String,
}

#[derive(Clone, Debug)]
pub enum Verdict {
    Verified(Box<VerifiedDisclosure>),
    Rejected(RejectReason),
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::Verified(_))
    }
}

/// The audit chain for a served model digest, resolved from the log:
/// either a direct audit attestation, or a prepare attestation bridging
/// the full model to its audited quantized form.
struct ResolvedChain {
    served_digest: Digest,
    prepare_doc: Option<AttestationDocument>,
    prepare_index: Option<u64>,
    audit_doc: AttestationDocument,
    audit_index: u64,
    result: AuditResult,
    result_index: u64,
    result_digest: Digest,
}

fn doc_acceptable(doc: &AttestationDocument, registry: Option<&TrustedRegistry>) -> bool {
    match registry {
        Some(r) => verify_attestation(doc, r).is_ok(),
        None => true,
    }
}

fn resolve_chain(
    log: &mut dyn LogStore,
    served_digest: Digest,
    registry: Option<&TrustedRegistry>,
) -> Result<ResolvedChain, RejectReason> {
    let candidates = log
        .scan_digest(&served_digest)
        .map_err(|e| RejectReason::LogUnavailable(e.to_string()))?;

    let mut audit: Option<(u64, AttestationDocument)> = None;
    let mut prepare: Option<(u64, AttestationDocument)> = None;
    for entry in &candidates {
        let Ok(doc) = AttestationDocument::decode(&entry.payload) else {
            continue;
        };
        if !doc_acceptable(&doc, registry) {
            continue;
        }
        match entry.kind {
            EntryKind::AuditAttestation
                if doc.digest_for(labels::MODEL) == Some(served_digest) && audit.is_none() =>
            {
                audit = Some((entry.index, doc));
            }
            EntryKind::PrepareAttestation
                if doc.digest_for(labels::MODEL) == Some(served_digest)
                    && doc.digest_for(labels::QUANTIZED).is_some()
                    && prepare.is_none() =>
            {
                prepare = Some((entry.index, doc));
            }
            _ => {}
        }
    }

    // Prefer the direct audit; otherwise bridge through the prepare step.
    let (audit_index, audit_doc, prepare_used) = match audit {
        Some((index, doc)) => (index, doc, None),
        None => {
            let (prepare_index, prepare_doc) = prepare.ok_or(RejectReason::NoAuditChain)?;
            let quantized = prepare_doc
                .digest_for(labels::QUANTIZED)
                .expect("filtered above");
            let hits = log
                .scan_digest(&quantized)
                .map_err(|e| RejectReason::LogUnavailable(e.to_string()))?;
            let mut found = None;
            for entry in &hits {
                if entry.kind != EntryKind::AuditAttestation {
                    continue;
                }
                let Ok(doc) = AttestationDocument::decode(&entry.payload) else {
                    continue;
                };
                if doc.digest_for(labels::MODEL) == Some(quantized)
                    && doc_acceptable(&doc, registry)
                {
                    found = Some((entry.index, doc));
                    break;
                }
            }
            let (audit_index, audit_doc) = found.ok_or(RejectReason::NoAuditChain)?;
            (audit_index, audit_doc, Some((prepare_index, prepare_doc)))
        }
    };

    let result_digest = audit_doc
        .digest_for(labels::RESULT)
        .ok_or_else(|| RejectReason::MissingBinding(labels::RESULT.to_string()))?;
    let result_hits = log
        .scan_digest(&result_digest)
        .map_err(|e| RejectReason::LogUnavailable(e.to_string()))?;
    let result_entry = result_hits
        .iter()
        .find(|e| e.kind == EntryKind::AuditResult && hash(&e.payload) == result_digest)
        .ok_or(RejectReason::ResultUnpublished)?;
    let result = AuditResult::from_canonical_bytes(&result_entry.payload)
        .map_err(|e| RejectReason::MalformedEvidence(e.to_string()))?;

    // Inclusion proofs for every entry the chain relies on.
    let (_, root) = log
        .root()
        .map_err(|e| RejectReason::LogUnavailable(e.to_string()))?;
    let mut check = |index: u64, payload: &[u8]| -> Result<(), RejectReason> {
        let proof = log
            .prove(index)
            .map_err(|e| RejectReason::LogUnavailable(e.to_string()))?;
        if !verify_inclusion(&root, &leaf_hash(payload), &proof) {
            return Err(RejectReason::InclusionProofInvalid);
        }
        Ok(())
    };
    check(audit_index, &audit_doc.encode())?;
    check(result_entry.index, &result_entry.payload)?;
    if let Some((index, doc)) = &prepare_used {
        check(*index, &doc.encode())?;
    }

    let (prepare_index, prepare_doc) = match prepare_used {
        Some((i, d)) => (Some(i), Some(d)),
        None => (None, None),
    };
    Ok(ResolvedChain {
        served_digest,
        prepare_doc,
        prepare_index,
        audit_doc,
        audit_index,
        result,
        result_index: result_entry.index,
        result_digest,
    })
}

/// User-side verification of an inference exchange: the document must
/// verify, bind this prompt and response, and chain to a published audit
/// of the served model.
pub fn user_verify(
    prompt: &str,
    response: &str,
    doc: &AttestationDocument,
    log: &mut dyn LogStore,
    registry: &TrustedRegistry,
) -> Verdict {
    let verified = match verify_attestation(doc, registry) {
        Ok(v) => v,
        Err(e) => return Verdict::Rejected(e.into()),
    };
    let need = |label: &str| -> Result<Digest, RejectReason> {
        doc.digest_for(label)
            .ok_or_else(|| RejectReason::MissingBinding(label.to_string()))
    };
    let bound = |label: &str, got: Digest, reason: RejectReason| -> Result<(), RejectReason> {
        if need(label)? != got {
            return Err(reason);
        }
        Ok(())
    };
    if let Err(reason) = bound(
        labels::PROMPT,
        hash(prompt.as_bytes()),
        RejectReason::PromptDigestMismatch,
    ) {
        return Verdict::Rejected(reason);
    }
    if let Err(reason) = bound(
        labels::RESPONSE,
        hash(response.as_bytes()),
        RejectReason::OutputDigestMismatch,
    ) {
        return Verdict::Rejected(reason);
    }
    let (model_digest, expected_result) = match (need(labels::MODEL), need(labels::RESULT)) {
        (Ok(m), Ok(r)) => (m, r),
        (Err(reason), _) | (_, Err(reason)) => return Verdict::Rejected(reason),
    };
    let chain = match resolve_chain(log, model_digest, Some(registry)) {
        Ok(c) => c,
        Err(reason) => return Verdict::Rejected(reason),
    };
    if chain.result_digest != expected_result {
        return Verdict::Rejected(RejectReason::ResultMismatch);
    }
    Verdict::Verified(Box::new(VerifiedDisclosure {
        result: chain.result,
        result_index: chain.result_index,
        audit_index: chain.audit_index,
        prepare_index: chain.prepare_index,
        model_digest,
        image_label: verified.image_label().to_string(),
    }))
}

/// The full serialized evidence chain for one inference, as disclosed to a
/// regulator or replayed in tests. All byte fields are verified down to
/// the bit.
#[derive(Clone, Debug)]
pub struct ChainEvidence {
    pub model_bytes: Vec<u8>,
    pub bundle_bytes: Vec<u8>,
    pub result_bytes: Vec<u8>,
    pub prepare_doc_bytes: Option<Vec<u8>>,
    pub audit_doc_bytes: Vec<u8>,
    pub inference_doc_bytes: Vec<u8>,
    pub prompt: Vec<u8>,
    pub response: Vec<u8>,
}

/// Verify the end-to-end digest chain
/// model -> (prepare) -> audit -> result -> inference document, including
/// log membership of everything published. Any single-bit change anywhere
/// in the evidence flips the verdict to Rejected.
pub fn verify_chain(
    evidence: &ChainEvidence,
    log: &mut dyn LogStore,
    registry: &TrustedRegistry,
) -> Verdict {
    match verify_chain_inner(evidence, log, registry) {
        Ok(v) => Verdict::Verified(Box::new(v)),
        Err(reason) => Verdict::Rejected(reason),
    }
}

fn verify_chain_inner(
    evidence: &ChainEvidence,
    log: &mut dyn LogStore,
    registry: &TrustedRegistry,
) -> Result<VerifiedDisclosure, RejectReason> {
    let inference_doc = AttestationDocument::decode(&evidence.inference_doc_bytes)
        .map_err(|e| RejectReason::MalformedEvidence(format!("inference document: {e}")))?;
    let verified = verify_attestation(&inference_doc, registry).map_err(RejectReason::from)?;

    let need = |doc: &AttestationDocument, label: &str| -> Result<Digest, RejectReason> {
        doc.digest_for(label)
            .ok_or_else(|| RejectReason::MissingBinding(label.to_string()))
    };
    if need(&inference_doc, labels::PROMPT)? != hash(&evidence.prompt) {
        return Err(RejectReason::PromptDigestMismatch);
    }
    if need(&inference_doc, labels::RESPONSE)? != hash(&evidence.response) {
        return Err(RejectReason::OutputDigestMismatch);
    }
    let model_digest = hash(&evidence.model_bytes);
    if need(&inference_doc, labels::MODEL)? != model_digest {
        return Err(RejectReason::ModelDigestMismatch);
    }

    let audit_doc = AttestationDocument::decode(&evidence.audit_doc_bytes)
        .map_err(|e| RejectReason::MalformedEvidence(format!("audit document: {e}")))?;
    verify_attestation(&audit_doc, registry).map_err(RejectReason::from)?;
    if need(&audit_doc, labels::AUDIT)? != hash(&evidence.bundle_bytes) {
        return Err(RejectReason::BundleDigestMismatch);
    }
    let result_digest = hash(&evidence.result_bytes);
    if need(&audit_doc, labels::RESULT)? != result_digest {
        return Err(RejectReason::ResultMismatch);
    }
    if need(&inference_doc, labels::RESULT)? != result_digest {
        return Err(RejectReason::ResultMismatch);
    }

    // Chain the served model to the audited one, through the prepare
    // attestation when the digests differ.
    let audited_digest = need(&audit_doc, labels::MODEL)?;
    let prepare_doc = match &evidence.prepare_doc_bytes {
        Some(bytes) => {
            let doc = AttestationDocument::decode(bytes)
                .map_err(|e| RejectReason::MalformedEvidence(format!("prepare document: {e}")))?;
            verify_attestation(&doc, registry).map_err(RejectReason::from)?;
            if need(&doc, labels::QUANTIZED)? != audited_digest {
                return Err(RejectReason::NoAuditChain);
            }
            let prepared_from = need(&doc, labels::MODEL)?;
            if model_digest != prepared_from && model_digest != audited_digest {
                return Err(RejectReason::NoAuditChain);
            }
            Some(doc)
        }
        None => {
            if model_digest != audited_digest {
                return Err(RejectReason::NoAuditChain);
            }
            None
        }
    };

    // Everything published must actually be in the log, with valid
    // inclusion proofs.
    let (_, root) = log
        .root()
        .map_err(|e| RejectReason::LogUnavailable(e.to_string()))?;
    let mut locate = |kind: EntryKind, payload: &[u8], what: &str| -> Result<u64, RejectReason> {
        let hits = log
            .scan_digest(&hash(payload))
            .map_err(|e| RejectReason::LogUnavailable(e.to_string()))?;
        let entry = hits
            .iter()
            .find(|e| e.kind == kind && e.payload == payload)
            .ok_or_else(|| RejectReason::NotInLog(what.to_string()))?;
        let proof = log
            .prove(entry.index)
            .map_err(|e| RejectReason::LogUnavailable(e.to_string()))?;
        if !verify_inclusion(&root, &entry.leaf_hash, &proof) {
            return Err(RejectReason::InclusionProofInvalid);
        }
        Ok(entry.index)
    };
    let audit_index = locate(
        EntryKind::AuditAttestation,
        &evidence.audit_doc_bytes,
        "audit attestation",
    )?;
    let result_index = locate(EntryKind::AuditResult, &evidence.result_bytes, "audit result")?;
    let prepare_index = match (&prepare_doc, &evidence.prepare_doc_bytes) {
        (Some(_), Some(bytes)) => Some(locate(
            EntryKind::PrepareAttestation,
            bytes,
            "prepare attestation",
        )?),
        _ => None,
    };

    let result = AuditResult::from_canonical_bytes(&evidence.result_bytes)
        .map_err(|e| RejectReason::MalformedEvidence(format!("result: {e}")))?;

    Ok(VerifiedDisclosure {
        result,
        result_index,
        audit_index,
        prepare_index,
        model_digest,
        image_label: verified.image_label().to_string(),
    })
}

/// Score thresholds a regulator applies when reviewing a disclosure.
#[derive(Clone, Copy, Debug, Default)]
pub struct AuditPolicy {
    pub min_accuracy: Option<f64>,
    pub min_similarity: Option<f64>,
    pub max_toxic_rate: Option<f64>,
}

impl AuditPolicy {
    /// A policy violation note when the verified result falls short.
    pub fn deficit(&self, result: &AuditResult) -> Option<String> {
        let (name, value) = result.headline();
        match (&result.metrics, name) {
            (crate::harness::MetricBlock::Discrete(_), _) => self.min_accuracy.and_then(|min| {
                (value < min).then(|| format!("accuracy {value:.4} below required {min:.4}"))
            }),
            (crate::harness::MetricBlock::Similarity(_), _) => {
                self.min_similarity.and_then(|min| {
                    (value < min).then(|| format!("similarity {value:.4} below required {min:.4}"))
                })
            }
            (crate::harness::MetricBlock::Judged(_), _) => self.max_toxic_rate.and_then(|max| {
                (value > max).then(|| format!("toxic rate {value:.4} above allowed {max:.4}"))
            }),
        }
    }
}

#[derive(Debug)]
pub struct RegulatorReport {
    pub verdict: Verdict,
    pub audit_deficit: Option<String>,
    pub report: String,
}

/// Regulator-side check of a voluntarily disclosed (prompt, response,
/// attestation) triple: user verification plus retrieval of the full audit
/// chain and a policy annotation.
pub fn regulator_check(
    prompt: &str,
    response: &str,
    doc: &AttestationDocument,
    log: &mut dyn LogStore,
    registry: &TrustedRegistry,
    policy: &AuditPolicy,
) -> RegulatorReport {
    let verdict = user_verify(prompt, response, doc, log, registry);
    match &verdict {
        Verdict::Verified(disclosure) => {
            let audit_deficit = policy.deficit(&disclosure.result);
            let report = crate::report::render_evidence_report(
                doc,
                disclosure,
                audit_deficit.as_deref(),
            );
            RegulatorReport {
                verdict,
                audit_deficit,
                report,
            }
        }
        Verdict::Rejected(reason) => RegulatorReport {
            report: format!("verdict=Rejected({reason})\n"),
            audit_deficit: None,
            verdict,
        },
    }
}
