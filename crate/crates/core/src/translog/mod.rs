//! The transparency log: an append-only, hash-chained store of attestation
//! documents and results with Merkle inclusion proofs.
//!
//! Tree structure follows the RFC 6962 convention (leaf prefix 0x00, node
//! prefix 0x01). Persistence is a single append-only file of
//! length-prefixed entries; the in-memory index is rebuilt on open.

pub mod service;

use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use thiserror::Error;

use crate::attestation::AttestationDocument;
use crate::crypto::{hash, hash_parts, Digest};

pub const LOG_MAGIC: &[u8] = b"AALOG1\0";

#[derive(Debug, Error)]
pub enum LogError {
    #[error("index {index} out of range (log has {size} entries)")]
    OutOfRange { index: u64, size: u64 },
    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
    #[error("malformed log file at offset {offset}: {what}")]
    Malformed { offset: u64, what: String },
    #[error("empty payloads cannot be published")]
    EmptyPayload,
    #[error("log service protocol error: {0}")]
    Protocol(String),
}

/// What a log entry records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    PrepareAttestation,
    AuditAttestation,
    AuditResult,
    ImageRegistration,
}

impl EntryKind {
    pub fn tag(self) -> u8 {
        match self {
            EntryKind::PrepareAttestation => 0,
            EntryKind::AuditAttestation => 1,
            EntryKind::AuditResult => 2,
            EntryKind::ImageRegistration => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(EntryKind::PrepareAttestation),
            1 => Some(EntryKind::AuditAttestation),
            2 => Some(EntryKind::AuditResult),
            3 => Some(EntryKind::ImageRegistration),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntryKind::PrepareAttestation => "prepare-attestation",
            EntryKind::AuditAttestation => "audit-attestation",
            EntryKind::AuditResult => "audit-result",
            EntryKind::ImageRegistration => "image-registration",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "prepare-attestation" => Some(EntryKind::PrepareAttestation),
            "audit-attestation" => Some(EntryKind::AuditAttestation),
            "audit-result" => Some(EntryKind::AuditResult),
            "image-registration" => Some(EntryKind::ImageRegistration),
            _ => None,
        }
    }
}

/// One appended record. The payload is stored verbatim, never re-encoded,
/// so digests over it stay stable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub index: u64,
    pub kind: EntryKind,
    pub payload: Vec<u8>,
    pub leaf_hash: Digest,
}

/// RFC 6962 leaf hash: H(0x00 || payload).
pub fn leaf_hash(payload: &[u8]) -> Digest {
    hash_parts(&[&[0x00], payload])
}

/// RFC 6962 interior node hash: H(0x01 || left || right).
pub fn node_hash(left: &Digest, right: &Digest) -> Digest {
    hash_parts(&[&[0x01], left.as_bytes(), right.as_bytes()])
}

/// Which side a proof sibling sits on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// Inclusion proof: the sibling path from a leaf up to the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InclusionProof {
    pub index: u64,
    pub tree_size: u64,
    pub path: Vec<(Digest, Side)>,
}

/// Recompute the root from a leaf hash and a proof path.
pub fn verify_inclusion(root: &Digest, leaf: &Digest, proof: &InclusionProof) -> bool {
    let mut acc = *leaf;
    for (sibling, side) in &proof.path {
        acc = match side {
            Side::Left => node_hash(sibling, &acc),
            Side::Right => node_hash(&acc, sibling),
        };
    }
    acc == *root
}

/// Root over a slice of leaf hashes, built level by level; an unpaired
/// node is promoted unchanged. Matches the RFC 6962 recursive definition.
fn merkle_root(leaves: &[Digest]) -> Digest {
    if leaves.is_empty() {
        return hash(b"");
    }
    let mut level: Vec<Digest> = leaves.to_vec();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            next.push(match pair {
                [l, r] => node_hash(l, r),
                [single] => *single,
                _ => unreachable!(),
            });
        }
        level = next;
    }
    level[0]
}

/// Sibling path for `index`, walking the same level-by-level structure.
fn merkle_path(leaves: &[Digest], index: usize) -> Vec<(Digest, Side)> {
    let mut path = Vec::new();
    let mut level: Vec<Digest> = leaves.to_vec();
    let mut pos = index;
    while level.len() > 1 {
        if pos % 2 == 0 {
            if pos + 1 < level.len() {
                path.push((level[pos + 1], Side::Right));
            }
            // An unpaired last node is promoted; no sibling this level.
        } else {
            path.push((level[pos - 1], Side::Left));
        }
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            next.push(match pair {
                [l, r] => node_hash(l, r),
                [single] => *single,
                _ => unreachable!(),
            });
        }
        level = next;
        pos /= 2;
    }
    path
}

/// The append-only log. A single writer appends; reads see a consistent
/// prefix.
pub struct TransparencyLog {
    entries: Vec<LogEntry>,
    file: Option<File>,
}

impl TransparencyLog {
    /// Volatile log, for tests and in-process protocol runs.
    pub fn in_memory() -> Self {
        Self {
            entries: Vec::new(),
            file: None,
        }
    }

    /// Open or create the backing file, replaying existing records. A
    /// partial trailing record (crashed append) is truncated away.
    pub fn open(path: &Path) -> Result<Self, LogError> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let mut raw = Vec::new();
        file.read_to_end(&mut raw)?;

        let mut entries = Vec::new();
        let mut good_end = 0u64;
        if raw.is_empty() {
            file.write_all(LOG_MAGIC)?;
            file.sync_data()?;
        } else {
            if raw.len() < LOG_MAGIC.len() || &raw[..LOG_MAGIC.len()] != LOG_MAGIC {
                return Err(LogError::Malformed {
                    offset: 0,
                    what: "missing log header".into(),
                });
            }
            let mut pos = LOG_MAGIC.len();
            good_end = pos as u64;
            while pos < raw.len() {
                if raw.len() - pos < 5 {
                    break; // partial record header
                }
                let Some(kind) = EntryKind::from_tag(raw[pos]) else {
                    return Err(LogError::Malformed {
                        offset: pos as u64,
                        what: format!("unknown entry kind tag {}", raw[pos]),
                    });
                };
                let len =
                    u32::from_be_bytes(raw[pos + 1..pos + 5].try_into().unwrap()) as usize;
                if raw.len() - pos - 5 < len {
                    break; // partial record body
                }
                let payload = raw[pos + 5..pos + 5 + len].to_vec();
                let index = entries.len() as u64;
                entries.push(LogEntry {
                    index,
                    kind,
                    leaf_hash: leaf_hash(&payload),
                    payload,
                });
                pos += 5 + len;
                good_end = pos as u64;
            }
            if (good_end as usize) < raw.len() {
                // Recover from a crashed append by dropping the tail.
                file.set_len(good_end)?;
            }
        }
        file.seek(SeekFrom::Start(good_end.max(LOG_MAGIC.len() as u64)))?;
        Ok(Self {
            entries,
            file: Some(file),
        })
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Append an entry; returns its index and leaf hash.
    pub fn publish(&mut self, kind: EntryKind, payload: &[u8]) -> Result<(u64, Digest), LogError> {
        if payload.is_empty() {
            return Err(LogError::EmptyPayload);
        }
        if let Some(file) = &mut self.file {
            let mut record = Vec::with_capacity(5 + payload.len());
            record.push(kind.tag());
            record.extend_from_slice(&(payload.len() as u32).to_be_bytes());
            record.extend_from_slice(payload);
            file.write_all(&record)?;
            file.sync_data()?;
        }
        let index = self.entries.len() as u64;
        let leaf = leaf_hash(payload);
        self.entries.push(LogEntry {
            index,
            kind,
            payload: payload.to_vec(),
            leaf_hash: leaf,
        });
        Ok((index, leaf))
    }

    pub fn get(&self, index: u64) -> Result<&LogEntry, LogError> {
        self.entries
            .get(index as usize)
            .ok_or(LogError::OutOfRange {
                index,
                size: self.len(),
            })
    }

    /// Entries matching an arbitrary predicate, oldest first.
    pub fn scan(&self, predicate: impl Fn(&LogEntry) -> bool) -> Vec<&LogEntry> {
        self.entries.iter().filter(|e| predicate(e)).collect()
    }

    pub fn root(&self) -> Digest {
        merkle_root(&self.leaf_hashes())
    }

    pub fn prove_inclusion(&self, index: u64) -> Result<InclusionProof, LogError> {
        if index >= self.len() {
            return Err(LogError::OutOfRange {
                index,
                size: self.len(),
            });
        }
        Ok(InclusionProof {
            index,
            tree_size: self.len(),
            path: merkle_path(&self.leaf_hashes(), index as usize),
        })
    }

    fn leaf_hashes(&self) -> Vec<Digest> {
        self.entries.iter().map(|e| e.leaf_hash).collect()
    }
}

/// Whether an entry is discoverable under `digest`: either its payload
/// hashes to it, or the payload is an attestation document binding it.
pub fn entry_binds_digest(entry: &LogEntry, digest: &Digest) -> bool {
    if hash(&entry.payload) == *digest {
        return true;
    }
    if let Ok(doc) = AttestationDocument::decode(&entry.payload) {
        return doc.user_data.iter().any(|(_, d)| d == digest);
    }
    false
}

/// Log operations the protocols need, implementable by the local store or
/// by a client speaking to `log serve`.
pub trait LogStore {
    fn publish(&mut self, kind: EntryKind, payload: &[u8]) -> Result<(u64, Digest), LogError>;
    fn get(&mut self, index: u64) -> Result<LogEntry, LogError>;
    /// Entries discoverable under a digest (see [`entry_binds_digest`]).
    fn scan_digest(&mut self, digest: &Digest) -> Result<Vec<LogEntry>, LogError>;
    fn root(&mut self) -> Result<(u64, Digest), LogError>;
    fn prove(&mut self, index: u64) -> Result<InclusionProof, LogError>;
    fn len(&mut self) -> Result<u64, LogError>;
}

impl LogStore for TransparencyLog {
    fn publish(&mut self, kind: EntryKind, payload: &[u8]) -> Result<(u64, Digest), LogError> {
        TransparencyLog::publish(self, kind, payload)
    }

    fn get(&mut self, index: u64) -> Result<LogEntry, LogError> {
        TransparencyLog::get(self, index).cloned()
    }

    fn scan_digest(&mut self, digest: &Digest) -> Result<Vec<LogEntry>, LogError> {
        Ok(self
            .scan(|e| entry_binds_digest(e, digest))
            .into_iter()
            .cloned()
            .collect())
    }

    fn root(&mut self) -> Result<(u64, Digest), LogError> {
        Ok((TransparencyLog::len(self), TransparencyLog::root(self)))
    }

    fn prove(&mut self, index: u64) -> Result<InclusionProof, LogError> {
        self.prove_inclusion(index)
    }

    fn len(&mut self) -> Result<u64, LogError> {
        Ok(TransparencyLog::len(self))
    }
}
