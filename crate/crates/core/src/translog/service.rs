//! Line-delimited request/response service for the transparency log, plus
//! the matching client.
//!
//! One request line maps to one response line. Payloads travel as base64,
//! digests as hex:
//!
//! ```text
//! PUBLISH <kind> <base64-payload>   -> OK <index> <leaf-hex>
//! GET <index>                       -> OK <index> <kind> <base64-payload>
//! SCAN <digest-hex>                 -> OK <count> [<idx,idx,...>]
//! ROOT                              -> OK <size> <root-hex>
//! PROVE <index>                     -> OK <index> <size> <L:<hex>|R:<hex>,... | ->
//! ```
//!
//! Errors come back as `ERR <CODE> <message>`.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use super::{
    entry_binds_digest, EntryKind, InclusionProof, LogEntry, LogError, LogStore, Side,
    TransparencyLog,
};
use crate::crypto::Digest;

/// Environment variable naming the default log endpoint.
pub const LOG_ADDR_ENV: &str = "AA_LOG_ADDR";

pub(crate) fn b64_encode(data: &[u8]) -> String {
    // Standard alphabet with padding; small enough to keep local.
    const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    let mut out = String::with_capacity(data.len().div_ceil(3) * 4);
    for chunk in data.chunks(3) {
        let b = [
            chunk[0],
            chunk.get(1).copied().unwrap_or(0),
            chunk.get(2).copied().unwrap_or(0),
        ];
        let n = ((b[0] as u32) << 16) | ((b[1] as u32) << 8) | b[2] as u32;
        out.push(ALPHABET[(n >> 18) as usize & 63] as char);
        out.push(ALPHABET[(n >> 12) as usize & 63] as char);
        out.push(if chunk.len() > 1 {
            ALPHABET[(n >> 6) as usize & 63] as char
        } else {
            '='
        });
        out.push(if chunk.len() > 2 {
            ALPHABET[n as usize & 63] as char
        } else {
            '='
        });
    }
    out
}

fn b64_decode(text: &str) -> Option<Vec<u8>> {
    fn val(c: u8) -> Option<u32> {
        match c {
            b'A'..=b'Z' => Some((c - b'A') as u32),
            b'a'..=b'z' => Some((c - b'a' + 26) as u32),
            b'0'..=b'9' => Some((c - b'0' + 52) as u32),
            b'+' => Some(62),
            b'/' => Some(63),
            _ => None,
        }
    }
    let raw = text.trim_end_matches('=').as_bytes();
    if text.len() % 4 != 0 && !text.is_empty() {
        return None;
    }
    let mut out = Vec::with_capacity(raw.len() * 3 / 4);
    for chunk in raw.chunks(4) {
        if chunk.len() == 1 {
            return None;
        }
        let mut n = 0u32;
        for (i, &c) in chunk.iter().enumerate() {
            n |= val(c)? << (18 - 6 * i);
        }
        out.push((n >> 16) as u8);
        if chunk.len() > 2 {
            out.push((n >> 8) as u8);
        }
        if chunk.len() > 3 {
            out.push(n as u8);
        }
    }
    Some(out)
}

fn render_path(path: &[(Digest, Side)]) -> String {
    if path.is_empty() {
        return "-".to_string();
    }
    path.iter()
        .map(|(d, side)| {
            let tag = match side {
                Side::Left => 'L',
                Side::Right => 'R',
            };
            format!("{tag}:{}", d.to_hex())
        })
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_path(text: &str) -> Option<Vec<(Digest, Side)>> {
    if text == "-" {
        return Some(Vec::new());
    }
    let mut path = Vec::new();
    for part in text.split(',') {
        let (tag, hex) = part.split_once(':')?;
        let side = match tag {
            "L" => Side::Left,
            "R" => Side::Right,
            _ => return None,
        };
        path.push((Digest::from_hex(hex).ok()?, side));
    }
    Some(path)
}

/// Evaluate one request line against the log. Infallible: protocol errors
/// become `ERR` responses.
pub fn handle_request(log: &mut TransparencyLog, line: &str) -> String {
    let mut parts = line.trim().splitn(3, ' ');
    let verb = parts.next().unwrap_or("");
    match verb {
        "PUBLISH" => {
            let (Some(kind_name), Some(b64)) = (parts.next(), parts.next()) else {
                return "ERR MALFORMED usage: PUBLISH <kind> <base64>".into();
            };
            let Some(kind) = EntryKind::from_name(kind_name) else {
                return format!("ERR MALFORMED unknown kind {kind_name}");
            };
            let Some(payload) = b64_decode(b64) else {
                return "ERR MALFORMED invalid base64 payload".into();
            };
            match log.publish(kind, &payload) {
                Ok((index, leaf)) => format!("OK {index} {}", leaf.to_hex()),
                Err(e) => format!("ERR STORAGE {e}"),
            }
        }
        "GET" => {
            let Some(index) = parts.next().and_then(|s| s.parse::<u64>().ok()) else {
                return "ERR MALFORMED usage: GET <index>".into();
            };
            match log.get(index) {
                Ok(entry) => format!(
                    "OK {index} {} {}",
                    entry.kind.name(),
                    b64_encode(&entry.payload)
                ),
                Err(e) => format!("ERR RANGE {e}"),
            }
        }
        "SCAN" => {
            let Some(digest) = parts.next().and_then(|s| Digest::from_hex(s).ok()) else {
                return "ERR MALFORMED usage: SCAN <digest-hex>".into();
            };
            let hits = log.scan(|e| entry_binds_digest(e, &digest));
            let indices: Vec<String> = hits.iter().map(|e| e.index.to_string()).collect();
            if indices.is_empty() {
                "OK 0".into()
            } else {
                format!("OK {} {}", indices.len(), indices.join(","))
            }
        }
        "ROOT" => format!(
            "OK {} {}",
            TransparencyLog::len(log),
            TransparencyLog::root(log).to_hex()
        ),
        "PROVE" => {
            let Some(index) = parts.next().and_then(|s| s.parse::<u64>().ok()) else {
                return "ERR MALFORMED usage: PROVE <index>".into();
            };
            match log.prove_inclusion(index) {
                Ok(proof) => format!(
                    "OK {} {} {}",
                    proof.index,
                    proof.tree_size,
                    render_path(&proof.path)
                ),
                Err(e) => format!("ERR RANGE {e}"),
            }
        }
        "" => "ERR MALFORMED empty request".into(),
        other => format!("ERR UNSUPPORTED unknown verb {other}"),
    }
}

/// A running log service bound to a local address.
pub struct LogService {
    pub addr: SocketAddr,
    handle: Option<JoinHandle<()>>,
}

impl LogService {
    /// Bind and serve in a background thread. Appends are serialized by the
    /// shared lock; each connection gets its own handler thread.
    pub fn spawn(log: TransparencyLog, bind: &str) -> Result<Self, LogError> {
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Mutex::new(log));
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let log = Arc::clone(&shared);
                std::thread::spawn(move || {
                    let _ = serve_connection(stream, &log);
                });
            }
        });
        Ok(Self {
            addr,
            handle: Some(handle),
        })
    }

    /// Serve on the calling thread until the listener fails (CLI path).
    pub fn run_blocking(log: TransparencyLog, bind: &str) -> Result<(), LogError> {
        let listener = TcpListener::bind(bind)?;
        let shared = Arc::new(Mutex::new(log));
        for stream in listener.incoming() {
            let stream = stream?;
            let log = Arc::clone(&shared);
            std::thread::spawn(move || {
                let _ = serve_connection(stream, &log);
            });
        }
        Ok(())
    }
}

impl Drop for LogService {
    fn drop(&mut self) {
        // The accept thread is detached; it ends with the process.
        if let Some(handle) = self.handle.take() {
            drop(handle);
        }
    }
}

fn serve_connection(stream: TcpStream, log: &Mutex<TransparencyLog>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let response = {
            let mut guard = log.lock().expect("log lock poisoned");
            handle_request(&mut guard, &line)
        };
        writer.write_all(response.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
}

/// Client side of the line protocol; a [`LogStore`] over a socket.
pub struct RemoteLog {
    addr: String,
    conn: Option<(BufReader<TcpStream>, TcpStream)>,
}

impl RemoteLog {
    pub fn connect(addr: &str) -> Self {
        Self {
            addr: addr.to_string(),
            conn: None,
        }
    }

    fn request(&mut self, line: &str) -> Result<String, LogError> {
        if self.conn.is_none() {
            let stream = TcpStream::connect(&self.addr)
                .map_err(|e| LogError::Protocol(format!("connect {}: {e}", self.addr)))?;
            let reader = BufReader::new(stream.try_clone()?);
            self.conn = Some((reader, stream));
        }
        let (reader, writer) = self.conn.as_mut().expect("connection just established");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
        let mut response = String::new();
        if reader.read_line(&mut response)? == 0 {
            self.conn = None;
            return Err(LogError::Protocol("connection closed".into()));
        }
        let response = response.trim_end().to_string();
        if let Some(err) = response.strip_prefix("ERR ") {
            return Err(LogError::Protocol(err.to_string()));
        }
        Ok(response)
    }

    fn ok_fields(response: &str) -> Result<Vec<&str>, LogError> {
        let rest = response
            .strip_prefix("OK")
            .ok_or_else(|| LogError::Protocol(format!("unexpected response: {response}")))?;
        Ok(rest.split_whitespace().collect())
    }
}

impl LogStore for RemoteLog {
    fn publish(&mut self, kind: EntryKind, payload: &[u8]) -> Result<(u64, Digest), LogError> {
        let response = self.request(&format!("PUBLISH {} {}", kind.name(), b64_encode(payload)))?;
        let fields = Self::ok_fields(&response)?;
        if fields.len() != 2 {
            return Err(LogError::Protocol(format!("bad PUBLISH reply: {response}")));
        }
        let index = fields[0]
            .parse()
            .map_err(|_| LogError::Protocol("bad index".into()))?;
        let leaf =
            Digest::from_hex(fields[1]).map_err(|_| LogError::Protocol("bad leaf hex".into()))?;
        Ok((index, leaf))
    }

    fn get(&mut self, index: u64) -> Result<LogEntry, LogError> {
        let response = self.request(&format!("GET {index}"))?;
        let fields = Self::ok_fields(&response)?;
        if fields.len() != 3 {
            return Err(LogError::Protocol(format!("bad GET reply: {response}")));
        }
        let kind = EntryKind::from_name(fields[1])
            .ok_or_else(|| LogError::Protocol(format!("bad kind {}", fields[1])))?;
        let payload =
            b64_decode(fields[2]).ok_or_else(|| LogError::Protocol("bad base64".into()))?;
        Ok(LogEntry {
            index,
            kind,
            leaf_hash: super::leaf_hash(&payload),
            payload,
        })
    }

    fn scan_digest(&mut self, digest: &Digest) -> Result<Vec<LogEntry>, LogError> {
        let response = self.request(&format!("SCAN {}", digest.to_hex()))?;
        let fields = Self::ok_fields(&response)?;
        let count: usize = fields
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| LogError::Protocol("bad SCAN reply".into()))?;
        if count == 0 {
            return Ok(Vec::new());
        }
        let indices = fields
            .get(1)
            .ok_or_else(|| LogError::Protocol("missing SCAN indices".into()))?;
        let mut entries = Vec::with_capacity(count);
        for part in indices.split(',') {
            let index: u64 = part
                .parse()
                .map_err(|_| LogError::Protocol("bad SCAN index".into()))?;
            entries.push(self.get(index)?);
        }
        Ok(entries)
    }

    fn root(&mut self) -> Result<(u64, Digest), LogError> {
        let response = self.request("ROOT")?;
        let fields = Self::ok_fields(&response)?;
        if fields.len() != 2 {
            return Err(LogError::Protocol(format!("bad ROOT reply: {response}")));
        }
        let size = fields[0]
            .parse()
            .map_err(|_| LogError::Protocol("bad size".into()))?;
        let root =
            Digest::from_hex(fields[1]).map_err(|_| LogError::Protocol("bad root hex".into()))?;
        Ok((size, root))
    }

    fn prove(&mut self, index: u64) -> Result<InclusionProof, LogError> {
        let response = self.request(&format!("PROVE {index}"))?;
        let fields = Self::ok_fields(&response)?;
        if fields.len() != 3 {
            return Err(LogError::Protocol(format!("bad PROVE reply: {response}")));
        }
        let tree_size = fields[1]
            .parse()
            .map_err(|_| LogError::Protocol("bad tree size".into()))?;
        let path =
            parse_path(fields[2]).ok_or_else(|| LogError::Protocol("bad proof path".into()))?;
        Ok(InclusionProof {
            index,
            tree_size,
            path,
        })
    }

    fn len(&mut self) -> Result<u64, LogError> {
        Ok(self.root()?.0)
    }
}
