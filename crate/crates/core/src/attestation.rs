//! Attestation documents: canonical encoding, the trusted-PCR registry,
//! and third-party verification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{verify, Digest, Signature, VendorPublicKey};
use crate::enclave::PcrSet;
use crate::wire::{Reader, WireError, Writer};

pub const DOCUMENT_MAGIC: &[u8] = b"AADOC1";
pub const DOCUMENT_VERSION: u8 = 1;

/// Labels used by the protocols when binding digests. Labeled digests let a
/// verifier tell the full-model hash from the quantized one without any
/// positional convention.
pub mod labels {
    pub const KEM_PK: &str = "kem_pk";
    pub const MODEL: &str = "model";
    pub const QUANTIZED: &str = "quantized";
    pub const AUDIT: &str = "audit";
    pub const RESULT: &str = "result";
    pub const PROMPT: &str = "prompt";
    pub const RESPONSE: &str = "response";
    pub const PREPARE_ATTESTATION: &str = "prepare_attestation";
    pub const AUDIT_ATTESTATION: &str = "audit_attestation";
}

/// Vendor-signed binding of labeled digests to a PCR set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttestationDocument {
    pub backend_id: String,
    pub pcrs: PcrSet,
    pub user_data: Vec<(String, Digest)>,
    pub vendor_sig: Signature,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VerifyError {
    #[error("registry has no vendor key for backend {0:?}")]
    UnknownBackend(String),
    #[error("vendor signature invalid")]
    SignatureInvalid,
    #[error("PCRs do not match any trusted image")]
    UntrustedImage,
    #[error("image has been revoked")]
    RevokedImage,
}

impl AttestationDocument {
    /// The byte form both signing and verification run over: everything but
    /// the signature, in fixed field order.
    pub fn signing_payload(
        backend_id: &str,
        pcrs: &PcrSet,
        user_data: &[(String, Digest)],
    ) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_raw(DOCUMENT_MAGIC);
        w.put_u8(DOCUMENT_VERSION);
        w.put_str(backend_id);
        w.put_raw(pcrs.pcr0.as_bytes());
        w.put_raw(pcrs.pcr1.as_bytes());
        w.put_raw(pcrs.pcr2.as_bytes());
        w.put_u32(user_data.len() as u32);
        for (label, digest) in user_data {
            w.put_str(label);
            w.put_raw(digest.as_bytes());
        }
        w.finish()
    }

    /// Canonical wire form: the signing payload followed by the signature.
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.put_raw(&Self::signing_payload(
            &self.backend_id,
            &self.pcrs,
            &self.user_data,
        ));
        w.put_bytes(&self.vendor_sig.0);
        w.finish()
    }

    pub fn decode(raw: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(raw);
        r.expect_magic(DOCUMENT_MAGIC)?;
        let at = r.offset();
        let version = r.u8()?;
        if version != DOCUMENT_VERSION {
            return Err(WireError::Invalid {
                offset: at,
                what: format!("unsupported document version {version}"),
            });
        }
        let backend_id = r.string()?;
        let pcr = |r: &mut Reader| -> Result<Digest, WireError> {
            Ok(Digest(r.take(32)?.try_into().unwrap()))
        };
        let pcrs = PcrSet {
            pcr0: pcr(&mut r)?,
            pcr1: pcr(&mut r)?,
            pcr2: pcr(&mut r)?,
        };
        let n = r.u32()? as usize;
        let mut user_data = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let label = r.string()?;
            let digest = Digest(r.take(32)?.try_into().unwrap());
            user_data.push((label, digest));
        }
        let sig_at = r.offset();
        let sig_raw = r.bytes()?;
        let vendor_sig = Signature::from_slice(sig_raw).map_err(|_| WireError::Invalid {
            offset: sig_at,
            what: format!("signature must be 64 bytes, got {}", sig_raw.len()),
        })?;
        r.done()?;
        Ok(Self {
            backend_id,
            pcrs,
            user_data,
            vendor_sig,
        })
    }

    /// Digest of the canonical wire form; what other documents and AEAD
    /// associated data bind when they reference this document.
    pub fn digest(&self) -> Digest {
        crate::crypto::hash(&self.encode())
    }

    pub fn digest_for(&self, label: &str) -> Option<Digest> {
        self.user_data
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, d)| *d)
    }

    /// Inspection rendering: one labeled digest per line. The binary form
    /// is authoritative.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("backend={}\n", self.backend_id));
        out.push_str(&self.pcrs.render_text());
        for (label, digest) in &self.user_data {
            out.push_str(&format!("{label}={}\n", digest.to_hex()));
        }
        out
    }
}

/// A PCR set the registry accepts, with a human label for reporting.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrustedImage {
    pub label: String,
    pub pcrs: PcrSet,
}

/// Vendor verification keys by backend plus the trusted and revoked PCR
/// sets. Serializable so the CLI can keep it in a file.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrustedRegistry {
    pub vendors: BTreeMap<String, VendorPublicKey>,
    pub trusted: Vec<TrustedImage>,
    pub revoked: Vec<PcrSet>,
}

impl TrustedRegistry {
    pub fn trust_vendor(&mut self, backend_id: &str, key: VendorPublicKey) {
        self.vendors.insert(backend_id.to_string(), key);
    }

    pub fn trust_image(&mut self, label: &str, pcrs: PcrSet) {
        if !self.trusted.iter().any(|t| t.pcrs == pcrs) {
            self.trusted.push(TrustedImage {
                label: label.to_string(),
                pcrs,
            });
        }
    }

    /// Revocation keeps the trusted entry (revoked is a subset of
    /// ever-trusted) but verification against it fails from now on.
    pub fn revoke_image(&mut self, pcrs: PcrSet) {
        if !self.revoked.contains(&pcrs) {
            self.revoked.push(pcrs);
        }
    }

    pub fn image_label(&self, pcrs: &PcrSet) -> Option<&str> {
        self.trusted
            .iter()
            .find(|t| t.pcrs == *pcrs)
            .map(|t| t.label.as_str())
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFile {
            vendors: self
                .vendors
                .iter()
                .map(|(k, v)| (k.clone(), v.to_hex()))
                .collect(),
            trusted: self
                .trusted
                .iter()
                .map(|t| TrustedImageFile {
                    label: t.label.clone(),
                    pcr0: t.pcrs.pcr0.to_hex(),
                    pcr1: t.pcrs.pcr1.to_hex(),
                    pcr2: t.pcrs.pcr2.to_hex(),
                })
                .collect(),
            revoked: self
                .revoked
                .iter()
                .map(|p| PcrSetFile {
                    pcr0: p.pcr0.to_hex(),
                    pcr1: p.pcr1.to_hex(),
                    pcr2: p.pcr2.to_hex(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("registry serialization cannot fail")
    }

    pub fn from_json(raw: &str) -> Result<Self, String> {
        let file: RegistryFile = serde_json::from_str(raw).map_err(|e| e.to_string())?;
        let mut vendors = BTreeMap::new();
        for (k, v) in file.vendors {
            vendors.insert(k, VendorPublicKey::from_hex(&v).map_err(|e| e.to_string())?);
        }
        let parse_pcrs = |p0: &str, p1: &str, p2: &str| -> Result<PcrSet, String> {
            Ok(PcrSet {
                pcr0: Digest::from_hex(p0).map_err(|e| e.to_string())?,
                pcr1: Digest::from_hex(p1).map_err(|e| e.to_string())?,
                pcr2: Digest::from_hex(p2).map_err(|e| e.to_string())?,
            })
        };
        let mut trusted = Vec::new();
        for t in file.trusted {
            trusted.push(TrustedImage {
                label: t.label,
                pcrs: parse_pcrs(&t.pcr0, &t.pcr1, &t.pcr2)?,
            });
        }
        let mut revoked = Vec::new();
        for p in file.revoked {
            revoked.push(parse_pcrs(&p.pcr0, &p.pcr1, &p.pcr2)?);
        }
        Ok(Self {
            vendors,
            trusted,
            revoked,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    vendors: BTreeMap<String, String>,
    trusted: Vec<TrustedImageFile>,
    revoked: Vec<PcrSetFile>,
}

#[derive(Serialize, Deserialize)]
struct TrustedImageFile {
    label: String,
    pcr0: String,
    pcr1: String,
    pcr2: String,
}

#[derive(Serialize, Deserialize)]
struct PcrSetFile {
    pcr0: String,
    pcr1: String,
    pcr2: String,
}

/// Verified view of a document: the labeled digests are only reachable
/// after signature and registry checks pass.
#[derive(Clone, Debug)]
pub struct VerifiedAttestation {
    doc: AttestationDocument,
    image_label: String,
}

impl VerifiedAttestation {
    pub fn digest_for(&self, label: &str) -> Option<Digest> {
        self.doc.digest_for(label)
    }

    pub fn digests(&self) -> &[(String, Digest)] {
        &self.doc.user_data
    }

    pub fn pcrs(&self) -> PcrSet {
        self.doc.pcrs
    }

    pub fn backend_id(&self) -> &str {
        &self.doc.backend_id
    }

    pub fn image_label(&self) -> &str {
        &self.image_label
    }

    pub fn document(&self) -> &AttestationDocument {
        &self.doc
    }
}

/// Check a document against the registry: vendor signature over the
/// canonical payload, then PCR membership (revocation wins over trust).
pub fn verify_attestation(
    doc: &AttestationDocument,
    registry: &TrustedRegistry,
) -> Result<VerifiedAttestation, VerifyError> {
    let vendor = registry
        .vendors
        .get(&doc.backend_id)
        .ok_or_else(|| VerifyError::UnknownBackend(doc.backend_id.clone()))?;
    let payload = AttestationDocument::signing_payload(&doc.backend_id, &doc.pcrs, &doc.user_data);
    if !verify(vendor, &payload, &doc.vendor_sig) {
        return Err(VerifyError::SignatureInvalid);
    }
    if registry.revoked.contains(&doc.pcrs) {
        return Err(VerifyError::RevokedImage);
    }
    let Some(label) = registry.image_label(&doc.pcrs) else {
        return Err(VerifyError::UntrustedImage);
    };
    Ok(VerifiedAttestation {
        doc: doc.clone(),
        image_label: label.to_string(),
    })
}

/// Decode-then-verify for documents arriving as bytes.
pub fn verify_attestation_bytes(
    raw: &[u8],
    registry: &TrustedRegistry,
) -> Result<VerifiedAttestation, VerifyError> {
    let doc = AttestationDocument::decode(raw).map_err(|_| VerifyError::SignatureInvalid)?;
    verify_attestation(&doc, registry)
}
