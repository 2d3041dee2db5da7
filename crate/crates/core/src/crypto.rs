//! Cryptographic primitives: hashing, key encapsulation, authenticated
//! encryption, and the TEE-vendor signature scheme.
//!
//! The concrete algorithms are SHA-256, an X25519 KEM, XChaCha20-Poly1305
//! (192-bit random nonces, so no counter state has to live inside an
//! enclave), and Ed25519 for vendor signatures. Randomness is always an
//! injected `RngCore + CryptoRng` so protocol runs can be made fully
//! deterministic in tests.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use ed25519_dalek::{Signer, Verifier};
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};
use thiserror::Error;
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::wire::{Reader, Writer};

pub const DIGEST_LEN: usize = 32;
pub const KEM_PUBLIC_KEY_LEN: usize = 32;
pub const SYMMETRIC_KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed KEM public key: expected {KEM_PUBLIC_KEY_LEN} bytes, got {0}")]
    MalformedPublicKey(usize),
    #[error("malformed KEM ciphertext: expected {KEM_PUBLIC_KEY_LEN} bytes, got {0}")]
    MalformedKemCiphertext(usize),
    #[error("non-contributory KEM exchange (low-order point)")]
    NonContributory,
    #[error("AEAD authentication failure: ciphertext, nonce, or associated data altered")]
    AuthenticationFailure,
    #[error("malformed digest: expected {DIGEST_LEN} bytes, got {0}")]
    MalformedDigest(usize),
    #[error("malformed signature")]
    MalformedSignature,
}

/// 32-byte hash value. Equality is byte equality.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest(pub [u8; DIGEST_LEN]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let raw = hex::decode(s).map_err(|_| CryptoError::MalformedDigest(0))?;
        Self::from_slice(&raw)
    }

    pub fn from_slice(raw: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; DIGEST_LEN] = raw
            .try_into()
            .map_err(|_| CryptoError::MalformedDigest(raw.len()))?;
        Ok(Digest(arr))
    }
}

impl std::fmt::Display for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

/// SHA-256 over a byte stream.
pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha256::digest(data).into())
}

/// SHA-256 over several segments without concatenating them first.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// 32-byte symmetric key, zeroized on drop. Never serialized in plaintext
/// outside an enclave context; there is deliberately no encode path.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct SymmetricKey([u8; SYMMETRIC_KEY_LEN]);

impl SymmetricKey {
    pub fn as_bytes(&self) -> &[u8; SYMMETRIC_KEY_LEN] {
        &self.0
    }
}

impl PartialEq for SymmetricKey {
    fn eq(&self, other: &Self) -> bool {
        // Not secret-independent; keys are only compared in tests.
        self.0 == other.0
    }
}
impl Eq for SymmetricKey {}

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SymmetricKey(..)")
    }
}

/// X25519 encapsulation key. Safe to publish.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct KemPublicKey([u8; KEM_PUBLIC_KEY_LEN]);

impl KemPublicKey {
    pub fn as_bytes(&self) -> &[u8; KEM_PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn from_slice(raw: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEM_PUBLIC_KEY_LEN] = raw
            .try_into()
            .map_err(|_| CryptoError::MalformedPublicKey(raw.len()))?;
        Ok(KemPublicKey(arr))
    }
}

impl std::fmt::Debug for KemPublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KemPublicKey({})", hex::encode(self.0))
    }
}

/// X25519 keypair. The secret half zeroizes on drop.
pub struct KemKeyPair {
    secret: x25519_dalek::StaticSecret,
    public: KemPublicKey,
}

impl KemKeyPair {
    pub fn public_key(&self) -> KemPublicKey {
        self.public
    }
}

impl std::fmt::Debug for KemKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KemKeyPair({})", hex::encode(self.public.0))
    }
}

/// Generate an X25519 keypair from the injected randomness source.
pub fn kem_keygen<R: RngCore + CryptoRng>(rng: &mut R) -> KemKeyPair {
    let secret = x25519_dalek::StaticSecret::random_from_rng(&mut *rng);
    let public = KemPublicKey(*x25519_dalek::PublicKey::from(&secret).as_bytes());
    KemKeyPair { secret, public }
}

fn derive_key(shared: &[u8; 32], ephemeral_pk: &KemPublicKey, recipient_pk: &KemPublicKey) -> SymmetricKey {
    // KDF binds both public keys so the derived key commits to the exchange.
    let mut h = Sha256::new();
    h.update(b"aa-kem-v1");
    h.update(shared);
    h.update(ephemeral_pk.0);
    h.update(recipient_pk.0);
    SymmetricKey(h.finalize().into())
}

/// Encapsulate a fresh symmetric key against `pk`. The ciphertext is the
/// ephemeral public key of a Diffie-Hellman exchange.
pub fn kem_encapsulate<R: RngCore + CryptoRng>(
    pk: &KemPublicKey,
    rng: &mut R,
) -> Result<(SymmetricKey, Vec<u8>), CryptoError> {
    let ephemeral = x25519_dalek::StaticSecret::random_from_rng(&mut *rng);
    let ephemeral_pk = KemPublicKey(*x25519_dalek::PublicKey::from(&ephemeral).as_bytes());
    let shared = ephemeral.diffie_hellman(&x25519_dalek::PublicKey::from(pk.0));
    if !shared.was_contributory() {
        return Err(CryptoError::NonContributory);
    }
    let key = derive_key(shared.as_bytes(), &ephemeral_pk, pk);
    Ok((key, ephemeral_pk.0.to_vec()))
}

/// Recover the encapsulated key from `kem_ciphertext` with the secret half
/// of the pair. A ciphertext made against a different public key yields a
/// different key, not an error.
pub fn kem_decapsulate(pair: &KemKeyPair, kem_ciphertext: &[u8]) -> Result<SymmetricKey, CryptoError> {
    let arr: [u8; KEM_PUBLIC_KEY_LEN] = kem_ciphertext
        .try_into()
        .map_err(|_| CryptoError::MalformedKemCiphertext(kem_ciphertext.len()))?;
    let ephemeral_pk = KemPublicKey(arr);
    let shared = pair
        .secret
        .diffie_hellman(&x25519_dalek::PublicKey::from(arr));
    if !shared.was_contributory() {
        return Err(CryptoError::NonContributory);
    }
    Ok(derive_key(shared.as_bytes(), &ephemeral_pk, &pair.public))
}

/// The data-in-transit unit: KEM ciphertext plus an AEAD-sealed payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncryptedEnvelope {
    pub kem_ciphertext: Vec<u8>,
    pub nonce: [u8; NONCE_LEN],
    pub associated_data: Vec<u8>,
    pub aead_ciphertext: Vec<u8>,
}

impl EncryptedEnvelope {
    /// Canonical wire form: fields in fixed order (kem_ciphertext, nonce,
    /// aad, aead_ciphertext), each with a 4-byte big-endian length prefix.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_bytes(&self.kem_ciphertext);
        w.put_bytes(&self.nonce);
        w.put_bytes(&self.associated_data);
        w.put_bytes(&self.aead_ciphertext);
        w.finish()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, crate::wire::WireError> {
        let mut r = Reader::new(raw);
        let kem_ciphertext = r.bytes()?.to_vec();
        let at = r.offset();
        let nonce_raw = r.bytes()?;
        let nonce: [u8; NONCE_LEN] =
            nonce_raw
                .try_into()
                .map_err(|_| crate::wire::WireError::Invalid {
                    offset: at,
                    what: format!("nonce must be {NONCE_LEN} bytes, got {}", nonce_raw.len()),
                })?;
        let associated_data = r.bytes()?.to_vec();
        let aead_ciphertext = r.bytes()?.to_vec();
        r.done()?;
        Ok(Self {
            kem_ciphertext,
            nonce,
            associated_data,
            aead_ciphertext,
        })
    }
}

/// Encrypt under `key` with a random 192-bit nonce; the associated data is
/// authenticated but not encrypted.
pub fn aead_encrypt<R: RngCore + CryptoRng>(
    key: &SymmetricKey,
    plaintext: &[u8],
    aad: &[u8],
    rng: &mut R,
) -> ([u8; NONCE_LEN], Vec<u8>) {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let cipher = XChaCha20Poly1305::new(key.as_bytes().into());
    let ciphertext = cipher
        .encrypt(
            XNonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad,
            },
        )
        .expect("XChaCha20-Poly1305 encryption is infallible for in-memory buffers");
    (nonce, ciphertext)
}

/// Decrypt and authenticate. Any alteration of nonce, ciphertext, or aad
/// fails with [`CryptoError::AuthenticationFailure`].
pub fn aead_decrypt(
    key: &SymmetricKey,
    nonce: &[u8; NONCE_LEN],
    ciphertext: &[u8],
    aad: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let cipher = XChaCha20Poly1305::new(key.as_bytes().into());
    cipher
        .decrypt(
            XNonce::from_slice(nonce),
            Payload {
                msg: ciphertext,
                aad,
            },
        )
        .map_err(|_| CryptoError::AuthenticationFailure)
}

/// Seal a plaintext against a recipient public key: encapsulate, then
/// AEAD-encrypt under the encapsulated key.
pub fn seal<R: RngCore + CryptoRng>(
    recipient: &KemPublicKey,
    plaintext: &[u8],
    aad: &[u8],
    rng: &mut R,
) -> Result<(SymmetricKey, EncryptedEnvelope), CryptoError> {
    let (key, kem_ciphertext) = kem_encapsulate(recipient, rng)?;
    let (nonce, aead_ciphertext) = aead_encrypt(&key, plaintext, aad, rng);
    Ok((
        key,
        EncryptedEnvelope {
            kem_ciphertext,
            nonce,
            associated_data: aad.to_vec(),
            aead_ciphertext,
        },
    ))
}

/// Open an envelope with the recipient keypair.
pub fn open(pair: &KemKeyPair, envelope: &EncryptedEnvelope) -> Result<(SymmetricKey, Vec<u8>), CryptoError> {
    let key = kem_decapsulate(pair, &envelope.kem_ciphertext)?;
    let plaintext = aead_decrypt(
        &key,
        &envelope.nonce,
        &envelope.aead_ciphertext,
        &envelope.associated_data,
    )?;
    Ok((key, plaintext))
}

/// Encrypt a reply under an already-shared key, as an envelope with an
/// empty KEM ciphertext.
pub fn seal_with_key<R: RngCore + CryptoRng>(
    key: &SymmetricKey,
    plaintext: &[u8],
    aad: &[u8],
    rng: &mut R,
) -> EncryptedEnvelope {
    let (nonce, aead_ciphertext) = aead_encrypt(key, plaintext, aad, rng);
    EncryptedEnvelope {
        kem_ciphertext: Vec::new(),
        nonce,
        associated_data: aad.to_vec(),
        aead_ciphertext,
    }
}

pub const SIGNATURE_LEN: usize = 64;
pub const VENDOR_PUBLIC_KEY_LEN: usize = 32;

/// Ed25519 signature bytes.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_slice(raw: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SIGNATURE_LEN] = raw.try_into().map_err(|_| CryptoError::MalformedSignature)?;
        Ok(Signature(arr))
    }
}

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

/// Verification half of a vendor keypair.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct VendorPublicKey([u8; VENDOR_PUBLIC_KEY_LEN]);

impl VendorPublicKey {
    pub fn as_bytes(&self) -> &[u8; VENDOR_PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn from_slice(raw: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; VENDOR_PUBLIC_KEY_LEN] = raw
            .try_into()
            .map_err(|_| CryptoError::MalformedPublicKey(raw.len()))?;
        Ok(VendorPublicKey(arr))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let raw = hex::decode(s).map_err(|_| CryptoError::MalformedPublicKey(0))?;
        Self::from_slice(&raw)
    }
}

impl std::fmt::Debug for VendorPublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VendorPublicKey({})", hex::encode(self.0))
    }
}

/// TEE-vendor signing keypair (Ed25519).
pub struct VendorKeyPair {
    signing: ed25519_dalek::SigningKey,
}

impl VendorKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        let signing = ed25519_dalek::SigningKey::from_bytes(&seed);
        seed.zeroize();
        Self { signing }
    }

    pub fn public_key(&self) -> VendorPublicKey {
        VendorPublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

impl std::fmt::Debug for VendorKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VendorKeyPair({})", self.public_key().to_hex())
    }
}

/// Signature check. Rejection is a value, not an error.
pub fn verify(pk: &VendorPublicKey, message: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&pk.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
    vk.verify(message, &sig).is_ok()
}
