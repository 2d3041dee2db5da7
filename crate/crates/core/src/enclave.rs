//! TEE abstraction: measured images, a pluggable backend, the session
//! lifecycle, and the audit sandbox.
//!
//! The simulated backend implements the full contract deterministically; a
//! hardware backend would delegate `measure`/`attest_sign`/`secure_random`
//! to platform services behind the same trait.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand_core::SeedableRng;
use thiserror::Error;
use zeroize::Zeroize;

use crate::attestation::AttestationDocument;
use crate::crypto::{
    hash_parts, kem_keygen, open, Digest, EncryptedEnvelope, KemKeyPair, KemPublicKey, Signature,
    VendorKeyPair, VendorPublicKey,
};
use crate::harness::AuditCode;
use crate::model::generate::{generate, GenerationRecord, SamplingParams};
use crate::model::{ModelArtifact, ModelError};
use crate::wire::{Reader, WireError, Writer};

pub const IMAGE_MAGIC: &[u8] = b"AAIMG1";
pub const IMAGE_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum EnclaveError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("lifecycle error: operation {op} not permitted in stage {stage:?}")]
    Lifecycle { op: &'static str, stage: Stage },
    #[error("no session keypair has been generated")]
    NoSessionKey,
    #[error("envelope associated data does not match the session attestation")]
    AadMismatch,
    #[error("resource limit exceeded: {0}")]
    ResourceExceeded(String),
    #[error("capability denied to sandboxed code: {0:?}")]
    CapabilityDenied(Capability),
    #[error("model rejected: {0}")]
    ModelRejected(#[from] ModelError),
    #[error(transparent)]
    Crypto(#[from] crate::crypto::CryptoError),
    #[error("image format error: {0}")]
    ImageFormat(#[from] WireError),
}

/// Canonical base image: a code identifier plus a configuration blob.
/// Measurement is a pure function of the canonical byte form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnclaveImage {
    pub image_id: String,
    pub config: Vec<u8>,
}

impl EnclaveImage {
    /// Canonical binary: magic, version byte, length-prefixed code id,
    /// length-prefixed config blob.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_raw(IMAGE_MAGIC);
        w.put_u8(IMAGE_VERSION);
        w.put_str(&self.image_id);
        w.put_bytes(&self.config);
        w.finish()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(raw);
        r.expect_magic(IMAGE_MAGIC)?;
        let at = r.offset();
        let version = r.u8()?;
        if version != IMAGE_VERSION {
            return Err(WireError::Invalid {
                offset: at,
                what: format!("unsupported image version {version}"),
            });
        }
        let image_id = r.string()?;
        let config = r.bytes()?.to_vec();
        r.done()?;
        Ok(Self { image_id, config })
    }
}

/// The three platform configuration registers: image code measurement,
/// configuration measurement, and backend identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PcrSet {
    pub pcr0: Digest,
    pub pcr1: Digest,
    pub pcr2: Digest,
}

impl PcrSet {
    pub fn render_text(&self) -> String {
        format!(
            "pcr0={}\npcr1={}\npcr2={}\n",
            self.pcr0.to_hex(),
            self.pcr1.to_hex(),
            self.pcr2.to_hex()
        )
    }
}

/// Recompute the PCRs any party would observe for `image` on a backend.
/// pcr0 covers the whole canonical image, pcr1 the configuration alone,
/// pcr2 the platform identity (firmware folded in).
pub fn measure_image(image: &EnclaveImage, backend_id: &str) -> PcrSet {
    PcrSet {
        pcr0: hash_parts(&[b"aa-pcr0:", &image.encode()]),
        pcr1: hash_parts(&[b"aa-pcr1:", &image.config]),
        pcr2: hash_parts(&[b"aa-pcr2:", backend_id.as_bytes()]),
    }
}

/// Counter of bytes explicitly overwritten during termination; the test
/// hook behind the zeroization requirement.
#[derive(Clone, Default)]
pub struct ZeroizeMeter(Arc<AtomicU64>);

impl ZeroizeMeter {
    pub fn bytes(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::SeqCst);
    }
}

/// Platform services a session relies on.
pub trait TeeBackend {
    fn backend_id(&self) -> &str;
    fn available(&self) -> bool {
        true
    }
    fn measure(&self, image: &EnclaveImage) -> PcrSet;
    fn attest_sign(&mut self, payload: &[u8]) -> Signature;
    fn vendor_public_key(&self) -> VendorPublicKey;
    fn secure_random(&mut self, dest: &mut [u8]);
    /// Overwrite-then-forget; implementations account for every byte.
    fn zeroize(&mut self, buf: &mut [u8]);
}

pub const SIMULATED_BACKEND_ID: &str = "sim-tee-v1";

/// Deterministic in-process TEE. The vendor key derives from the platform
/// seed alone, so all sessions on one "platform" share it; the session seed
/// drives this enclave's randomness.
pub struct SimulatedTee {
    vendor: VendorKeyPair,
    rng: rand_chacha::ChaCha20Rng,
    meter: ZeroizeMeter,
}

impl SimulatedTee {
    pub fn new(platform_seed: u64, session_seed: u64) -> Self {
        let mut vendor_rng = rand_chacha::ChaCha20Rng::seed_from_u64(platform_seed);
        Self {
            vendor: VendorKeyPair::generate(&mut vendor_rng),
            rng: rand_chacha::ChaCha20Rng::seed_from_u64(session_seed),
            meter: ZeroizeMeter::default(),
        }
    }

    pub fn meter(&self) -> ZeroizeMeter {
        self.meter.clone()
    }
}

impl TeeBackend for SimulatedTee {
    fn backend_id(&self) -> &str {
        SIMULATED_BACKEND_ID
    }

    fn measure(&self, image: &EnclaveImage) -> PcrSet {
        measure_image(image, SIMULATED_BACKEND_ID)
    }

    fn attest_sign(&mut self, payload: &[u8]) -> Signature {
        self.vendor.sign(payload)
    }

    fn vendor_public_key(&self) -> VendorPublicKey {
        self.vendor.public_key()
    }

    fn secure_random(&mut self, dest: &mut [u8]) {
        use rand_core::RngCore;
        self.rng.fill_bytes(dest);
    }

    fn zeroize(&mut self, buf: &mut [u8]) {
        buf.zeroize();
        self.meter.add(buf.len() as u64);
    }
}

/// Adapter exposing backend randomness as a `RngCore + CryptoRng` source.
struct BackendRng<'a>(&'a mut dyn TeeBackend);

impl rand_core::RngCore for BackendRng<'_> {
    fn next_u32(&mut self) -> u32 {
        let mut b = [0u8; 4];
        self.0.secure_random(&mut b);
        u32::from_le_bytes(b)
    }

    fn next_u64(&mut self) -> u64 {
        let mut b = [0u8; 8];
        self.0.secure_random(&mut b);
        u64::from_le_bytes(b)
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.secure_random(dest);
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand_core::Error> {
        self.0.secure_random(dest);
        Ok(())
    }
}

impl rand_core::CryptoRng for BackendRng<'_> {}

/// Session lifecycle stages; transitions only move forward.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Booted,
    Keyed,
    Loaded,
    Executed,
    Terminated,
}

/// One booted enclave. All held state is volatile; nothing survives
/// `terminate`, and nothing is ever persisted.
pub struct EnclaveSession {
    backend: Box<dyn TeeBackend>,
    stage: Stage,
    pcrs: PcrSet,
    kem: Option<KemKeyPair>,
    model: Option<ModelArtifact>,
    model_bytes: Option<Vec<u8>>,
    bundle_bytes: Option<Vec<u8>>,
}

impl EnclaveSession {
    /// Boot a measured image. Volatile state starts zeroed; the PCRs are
    /// the backend's measurement of the image.
    pub fn boot(image: &EnclaveImage, backend: Box<dyn TeeBackend>) -> Result<Self, EnclaveError> {
        if !backend.available() {
            return Err(EnclaveError::BackendUnavailable(
                backend.backend_id().to_string(),
            ));
        }
        let pcrs = backend.measure(image);
        Ok(Self {
            backend,
            stage: Stage::Booted,
            pcrs,
            kem: None,
            model: None,
            model_bytes: None,
            bundle_bytes: None,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn pcrs(&self) -> PcrSet {
        self.pcrs
    }

    pub fn backend_id(&self) -> String {
        self.backend.backend_id().to_string()
    }

    pub fn vendor_public_key(&self) -> VendorPublicKey {
        self.backend.vendor_public_key()
    }

    fn ensure_live(&self, op: &'static str) -> Result<(), EnclaveError> {
        if self.stage == Stage::Terminated {
            return Err(EnclaveError::Lifecycle {
                op,
                stage: self.stage,
            });
        }
        Ok(())
    }

    /// Generate the session KEM keypair, bound to the booted state.
    pub fn generate_keypair(&mut self) -> Result<KemPublicKey, EnclaveError> {
        self.ensure_live("generate_keypair")?;
        if self.stage != Stage::Booted {
            return Err(EnclaveError::Lifecycle {
                op: "generate_keypair",
                stage: self.stage,
            });
        }
        let pair = kem_keygen(&mut BackendRng(self.backend.as_mut()));
        let pk = pair.public_key();
        self.kem = Some(pair);
        self.stage = Stage::Keyed;
        Ok(pk)
    }

    pub fn public_key(&self) -> Option<KemPublicKey> {
        self.kem.as_ref().map(|k| k.public_key())
    }

    /// Produce a vendor-signed document binding the labeled digests to this
    /// session's PCRs.
    pub fn attest(&mut self, user_data: &[(&str, Digest)]) -> Result<AttestationDocument, EnclaveError> {
        self.ensure_live("attest")?;
        let user_data: Vec<(String, Digest)> = user_data
            .iter()
            .map(|(l, d)| (l.to_string(), *d))
            .collect();
        let payload =
            AttestationDocument::signing_payload(self.backend.backend_id(), &self.pcrs, &user_data);
        let vendor_sig = self.backend.attest_sign(&payload);
        Ok(AttestationDocument {
            backend_id: self.backend.backend_id().to_string(),
            pcrs: self.pcrs,
            user_data,
            vendor_sig,
        })
    }

    /// Open an envelope addressed to the session key, insisting the AEAD
    /// associated data equals `expected_aad` (the session attestation
    /// digest in protocol use).
    pub fn open_envelope(
        &mut self,
        envelope: &EncryptedEnvelope,
        expected_aad: &[u8],
    ) -> Result<Vec<u8>, EnclaveError> {
        self.ensure_live("open_envelope")?;
        let kem = self.kem.as_ref().ok_or(EnclaveError::NoSessionKey)?;
        if envelope.associated_data != expected_aad {
            return Err(EnclaveError::AadMismatch);
        }
        let (_, plaintext) = open(kem, envelope)?;
        Ok(plaintext)
    }

    /// Recover the symmetric key from a raw KEM ciphertext.
    pub fn decapsulate(&self, kem_ciphertext: &[u8]) -> Result<crate::crypto::SymmetricKey, EnclaveError> {
        let kem = self.kem.as_ref().ok_or(EnclaveError::NoSessionKey)?;
        Ok(crate::crypto::kem_decapsulate(kem, kem_ciphertext)?)
    }

    /// Parse and hold a model artifact. Malformed bytes are rejected before
    /// anything executes.
    pub fn load_model(&mut self, bytes: Vec<u8>) -> Result<Digest, EnclaveError> {
        self.ensure_live("load_model")?;
        if self.stage != Stage::Keyed {
            return Err(EnclaveError::Lifecycle {
                op: "load_model",
                stage: self.stage,
            });
        }
        let model = ModelArtifact::load(&bytes)?;
        let digest = crate::crypto::hash(&bytes);
        self.model = Some(model);
        self.model_bytes = Some(bytes);
        self.stage = Stage::Loaded;
        Ok(digest)
    }

    /// Hold the audit bundle bytes alongside the model.
    pub fn load_bundle(&mut self, bytes: Vec<u8>) -> Result<Digest, EnclaveError> {
        self.ensure_live("load_bundle")?;
        if self.stage != Stage::Loaded {
            return Err(EnclaveError::Lifecycle {
                op: "load_bundle",
                stage: self.stage,
            });
        }
        let digest = crate::crypto::hash(&bytes);
        self.bundle_bytes = Some(bytes);
        Ok(digest)
    }

    pub fn model(&self) -> Option<&ModelArtifact> {
        self.model.as_ref()
    }

    pub fn model_bytes(&self) -> Option<&[u8]> {
        self.model_bytes.as_deref()
    }

    pub fn bundle_bytes(&self) -> Option<&[u8]> {
        self.bundle_bytes.as_deref()
    }

    /// Bind a sandbox to exactly the held model and the given audit code.
    /// The sandbox works on a private copy: nothing it does can reach the
    /// session keys or alter the digests this session attests to.
    pub fn create_sandbox(
        &mut self,
        code: AuditCode,
        limits: ResourceLimits,
    ) -> Result<Sandbox, EnclaveError> {
        self.sandbox_with(Some(code), limits)
    }

    /// Sandbox for plain inference, with no audit code descriptor bound.
    pub fn create_inference_sandbox(
        &mut self,
        limits: ResourceLimits,
    ) -> Result<Sandbox, EnclaveError> {
        self.sandbox_with(None, limits)
    }

    fn sandbox_with(
        &mut self,
        code: Option<AuditCode>,
        limits: ResourceLimits,
    ) -> Result<Sandbox, EnclaveError> {
        self.ensure_live("create_sandbox")?;
        if self.stage != Stage::Loaded {
            return Err(EnclaveError::Lifecycle {
                op: "create_sandbox",
                stage: self.stage,
            });
        }
        let model = self.model.clone().ok_or(EnclaveError::Lifecycle {
            op: "create_sandbox",
            stage: self.stage,
        })?;
        self.stage = Stage::Executed;
        Ok(Sandbox {
            model,
            code,
            limits,
            prompts_used: 0,
            tokens_used: 0,
            started: Instant::now(),
        })
    }

    /// Erase all volatile state. Idempotent; every subsequent operation
    /// fails with a lifecycle error.
    pub fn terminate(&mut self) {
        if let Some(mut bytes) = self.model_bytes.take() {
            self.backend.zeroize(&mut bytes);
        }
        if let Some(mut bytes) = self.bundle_bytes.take() {
            self.backend.zeroize(&mut bytes);
        }
        self.model = None;
        // KEM secret zeroizes on drop.
        self.kem = None;
        self.stage = Stage::Terminated;
    }
}

impl Drop for EnclaveSession {
    fn drop(&mut self) {
        self.terminate();
    }
}

/// Execution budget for sandboxed audit code.
#[derive(Clone, Copy, Debug)]
pub struct ResourceLimits {
    pub max_prompts: u64,
    pub max_total_tokens: u64,
    pub wall_clock: Option<Duration>,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            max_prompts: 10_000,
            max_total_tokens: 5_000_000,
            wall_clock: None,
        }
    }
}

/// Capabilities sandboxed code may request. Only generation is granted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Capability {
    Generate,
    SessionSecrets,
    HostFilesystem,
}

/// Sandbox bound to one model copy and one audit code descriptor. Resource
/// limits are armed at creation; only declared outputs escape.
pub struct Sandbox {
    model: ModelArtifact,
    code: Option<AuditCode>,
    limits: ResourceLimits,
    prompts_used: u64,
    tokens_used: u64,
    started: Instant,
}

impl Sandbox {
    pub fn model(&self) -> &ModelArtifact {
        &self.model
    }

    /// The sandbox's private working copy. Mutations never escape: the
    /// session attests digests of its own held artifacts.
    pub fn model_mut(&mut self) -> &mut ModelArtifact {
        &mut self.model
    }

    pub fn code(&self) -> Option<&AuditCode> {
        self.code.as_ref()
    }

    pub fn request(&self, cap: Capability) -> Result<(), EnclaveError> {
        match cap {
            Capability::Generate => Ok(()),
            other => Err(EnclaveError::CapabilityDenied(other)),
        }
    }

    fn check_budget(&self) -> Result<(), EnclaveError> {
        if self.prompts_used > self.limits.max_prompts {
            return Err(EnclaveError::ResourceExceeded(format!(
                "prompt budget {} exhausted",
                self.limits.max_prompts
            )));
        }
        if self.tokens_used > self.limits.max_total_tokens {
            return Err(EnclaveError::ResourceExceeded(format!(
                "token budget {} exhausted",
                self.limits.max_total_tokens
            )));
        }
        if let Some(budget) = self.limits.wall_clock {
            if self.started.elapsed() > budget {
                return Err(EnclaveError::ResourceExceeded(format!(
                    "wall clock budget {budget:?} exhausted"
                )));
            }
        }
        Ok(())
    }

    /// Run one generation inside the budget. On a limit violation the
    /// partial output is discarded and only the error escapes.
    pub fn generate(
        &mut self,
        prompt: &[u32],
        params: &SamplingParams,
    ) -> Result<GenerationRecord, EnclaveError> {
        self.prompts_used += 1;
        self.check_budget()?;
        let record = generate(&self.model, prompt, params)?;
        self.tokens_used += record.output_tokens;
        self.check_budget().map_err(|e| {
            // Drop the record: no partial result leaves the sandbox.
            e
        })?;
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn image() -> EnclaveImage {
        fixtures::demo_image()
    }

    fn backend(seed: u64) -> Box<SimulatedTee> {
        Box::new(SimulatedTee::new(fixtures::PLATFORM_SEED, seed))
    }

    #[test]
    fn image_encoding_round_trips() {
        let img = image();
        let bytes = img.encode();
        assert_eq!(&bytes[..6], IMAGE_MAGIC);
        assert_eq!(EnclaveImage::decode(&bytes).unwrap(), img);
    }

    #[test]
    fn boot_pcrs_equal_independent_measurement() {
        let img = image();
        let session = EnclaveSession::boot(&img, backend(1)).unwrap();
        assert_eq!(session.pcrs(), measure_image(&img, SIMULATED_BACKEND_ID));
    }

    #[test]
    fn measurement_is_pure() {
        let img = image();
        let a = EnclaveSession::boot(&img, backend(1)).unwrap().pcrs();
        let b = EnclaveSession::boot(&img, backend(2)).unwrap().pcrs();
        assert_eq!(a, b);
    }

    #[test]
    fn changed_image_byte_changes_pcr0() {
        let img = image();
        let mut altered = img.clone();
        altered.config[0] ^= 0x01;
        let a = measure_image(&img, SIMULATED_BACKEND_ID);
        let b = measure_image(&altered, SIMULATED_BACKEND_ID);
        assert_ne!(a.pcr0, b.pcr0);
        assert_ne!(a.pcr1, b.pcr1);
        assert_eq!(a.pcr2, b.pcr2);

        let mut renamed = img.clone();
        renamed.image_id.push('x');
        let c = measure_image(&renamed, SIMULATED_BACKEND_ID);
        assert_ne!(a.pcr0, c.pcr0);
        assert_eq!(a.pcr1, c.pcr1);
    }

    #[test]
    fn terminate_is_idempotent_and_blocks_operations() {
        let mut session = EnclaveSession::boot(&image(), backend(3)).unwrap();
        session.generate_keypair().unwrap();
        session.terminate();
        session.terminate();
        assert_eq!(session.stage(), Stage::Terminated);
        assert!(matches!(
            session.attest(&[]),
            Err(EnclaveError::Lifecycle { .. })
        ));
    }

    #[test]
    fn terminate_zeroizes_held_buffers() {
        let tee = backend(4);
        let meter = tee.meter();
        let mut session = EnclaveSession::boot(&image(), tee).unwrap();
        session.generate_keypair().unwrap();
        let model_bytes = fixtures::toy_model().serialize();
        let n = model_bytes.len() as u64;
        session.load_model(model_bytes).unwrap();
        assert_eq!(meter.bytes(), 0);
        session.terminate();
        assert_eq!(meter.bytes(), n);
        assert!(session.model_bytes().is_none());
    }

    #[test]
    fn boot_terminate_boot_sees_zero_artifacts() {
        let mut first = EnclaveSession::boot(&image(), backend(30)).unwrap();
        first.generate_keypair().unwrap();
        first.load_model(fixtures::toy_model().serialize()).unwrap();
        first.terminate();

        let second = EnclaveSession::boot(&image(), backend(31)).unwrap();
        assert_eq!(second.stage(), Stage::Booted);
        assert!(second.model().is_none());
        assert!(second.model_bytes().is_none());
        assert!(second.bundle_bytes().is_none());
        assert!(second.public_key().is_none());
    }

    #[test]
    fn unavailable_backend_refuses_to_boot() {
        struct DownBackend;
        impl TeeBackend for DownBackend {
            fn backend_id(&self) -> &str {
                "down"
            }
            fn available(&self) -> bool {
                false
            }
            fn measure(&self, image: &EnclaveImage) -> PcrSet {
                measure_image(image, "down")
            }
            fn attest_sign(&mut self, _payload: &[u8]) -> Signature {
                unreachable!("backend never boots")
            }
            fn vendor_public_key(&self) -> VendorPublicKey {
                unreachable!("backend never boots")
            }
            fn secure_random(&mut self, _dest: &mut [u8]) {
                unreachable!("backend never boots")
            }
            fn zeroize(&mut self, buf: &mut [u8]) {
                buf.zeroize();
            }
        }
        let Err(err) = EnclaveSession::boot(&image(), Box::new(DownBackend)) else {
            panic!("unavailable backend must not boot")
        };
        assert!(matches!(err, EnclaveError::BackendUnavailable(_)));
    }

    #[test]
    fn lifecycle_moves_forward_only() {
        let mut session = EnclaveSession::boot(&image(), backend(5)).unwrap();
        // load before keygen is out of order
        assert!(matches!(
            session.load_model(fixtures::toy_model().serialize()),
            Err(EnclaveError::Lifecycle { .. })
        ));
        session.generate_keypair().unwrap();
        assert!(matches!(
            session.generate_keypair(),
            Err(EnclaveError::Lifecycle { .. })
        ));
        session.load_model(fixtures::toy_model().serialize()).unwrap();
        let _sandbox = session
            .create_sandbox(fixtures::classification_bundle().code.clone(), ResourceLimits::default())
            .unwrap();
        assert!(matches!(
            session.create_sandbox(
                fixtures::classification_bundle().code.clone(),
                ResourceLimits::default()
            ),
            Err(EnclaveError::Lifecycle { .. })
        ));
    }

    #[test]
    fn malformed_model_rejected_before_execution() {
        let mut session = EnclaveSession::boot(&image(), backend(6)).unwrap();
        session.generate_keypair().unwrap();
        let err = session.load_model(vec![1, 2, 3]).unwrap_err();
        assert!(matches!(err, EnclaveError::ModelRejected(_)));
        assert_eq!(session.stage(), Stage::Keyed);
    }

    #[test]
    fn sandbox_denies_secret_capabilities() {
        let mut session = EnclaveSession::boot(&image(), backend(7)).unwrap();
        session.generate_keypair().unwrap();
        session.load_model(fixtures::toy_model().serialize()).unwrap();
        let sandbox = session
            .create_sandbox(fixtures::classification_bundle().code.clone(), ResourceLimits::default())
            .unwrap();
        assert!(sandbox.request(Capability::Generate).is_ok());
        assert!(matches!(
            sandbox.request(Capability::SessionSecrets),
            Err(EnclaveError::CapabilityDenied(Capability::SessionSecrets))
        ));
        assert!(matches!(
            sandbox.request(Capability::HostFilesystem),
            Err(EnclaveError::CapabilityDenied(_))
        ));
    }

    #[test]
    fn sandbox_mutation_cannot_alter_attested_digests() {
        let mut session = EnclaveSession::boot(&image(), backend(8)).unwrap();
        session.generate_keypair().unwrap();
        let bytes = fixtures::toy_model().serialize();
        let digest_before = crate::crypto::hash(&bytes);
        session.load_model(bytes).unwrap();
        let mut sandbox = session
            .create_sandbox(fixtures::classification_bundle().code.clone(), ResourceLimits::default())
            .unwrap();
        // Adversarial audit code rewrites its model copy.
        sandbox.model_mut().name = "evil".into();
        if let crate::model::TensorData::F32(v) = &mut sandbox.model_mut().embedding.data {
            v[0] = 999.0;
        }
        drop(sandbox);
        let attested = crate::crypto::hash(session.model_bytes().unwrap());
        assert_eq!(attested, digest_before);
    }

    #[test]
    fn sandbox_token_budget_aborts_without_partial_result() {
        let mut session = EnclaveSession::boot(&image(), backend(9)).unwrap();
        session.generate_keypair().unwrap();
        let model = fixtures::toy_model();
        session.load_model(model.serialize()).unwrap();
        let mut sandbox = session
            .create_sandbox(
                fixtures::classification_bundle().code.clone(),
                ResourceLimits {
                    max_prompts: 100,
                    max_total_tokens: 3,
                    wall_clock: None,
                },
            )
            .unwrap();
        let prompt = model.vocab.tokenize("what is the answer");
        let params = fixtures::classification_params();
        let err = sandbox.generate(&prompt, &params).unwrap_err();
        assert!(matches!(err, EnclaveError::ResourceExceeded(_)), "{err}");
    }

    #[test]
    fn sandbox_single_prompt_runs() {
        let mut session = EnclaveSession::boot(&image(), backend(10)).unwrap();
        session.generate_keypair().unwrap();
        let model = fixtures::toy_model();
        session.load_model(model.serialize()).unwrap();
        let mut sandbox = session
            .create_sandbox(fixtures::classification_bundle().code.clone(), ResourceLimits::default())
            .unwrap();
        let prompt = model.vocab.tokenize("what is the answer");
        let rec = sandbox.generate(&prompt, &fixtures::classification_params()).unwrap();
        assert!(rec.output_tokens > 0);
    }
}
