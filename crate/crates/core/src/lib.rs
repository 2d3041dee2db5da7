//! Confidential, verifiable AI benchmarking inside a (simulated) trusted
//! execution environment.
//!
//! A model provider, an auditor, a user, and a regulator run three
//! protocols against an enclave session and a transparency log:
//!
//! 1. **prepare** — the enclave quantizes the provider's model and attests
//!    to both hashes.
//! 2. **audit** — the enclave runs the auditor's benchmark bundle against
//!    the model in a sandbox and publishes the attested result.
//! 3. **inference** — a user talks to the audited model and receives a
//!    response bound, by attestation, to the model, prompt, and published
//!    audit score.
//!
//! Everything that crosses a trust boundary is either a KEM+AEAD envelope
//! or a vendor-signed attestation document, and every published artifact
//! is discoverable in an append-only Merkle log.

pub mod attestation;
pub mod crypto;
pub mod enclave;
pub mod fixtures;
pub mod harness;
pub mod model;
pub mod protocols;
pub mod report;
pub mod translog;
pub mod wire;
