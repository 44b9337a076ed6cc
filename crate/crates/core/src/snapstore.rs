//! Persistence of edge-set snapshots.
//!
//! File format (UTF-8, one record per line):
//!
//! ```text
//! #v=1 chain=bitcoin ts=2020-07-01T12:00:00Z n=2
//! 1.2.3.4:8333<TAB>5.6.7.8:8333,9.9.9.9:8333
//! 5.6.7.8:8333<TAB>
//! #sha256=<hex digest of every preceding byte>
//! ```
//!
//! Sources and each destination list are sorted, so writing the same
//! snapshot twice produces identical bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};
use hmac::{Hmac, Mac};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::addr::collapse_port;

pub const FORMAT_VERSION: u32 = 1;
pub const SNAPSHOT_EXT: &str = "snap";
const TS_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Error)]
pub enum SnapError {
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("checksum mismatch")]
    ChecksumMismatch,
    #[error("pseudonym key not available: {0}")]
    MissingKey(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn format_err(line: usize, msg: impl Into<String>) -> SnapError {
    SnapError::Format {
        line,
        msg: msg.into(),
    }
}

pub fn format_ts(ts: &DateTime<Utc>) -> String {
    ts.format(TS_FORMAT).to_string()
}

pub fn parse_ts(s: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(s, TS_FORMAT)
        .ok()
        .map(|n| n.and_utc())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SnapshotMeta {
    pub crawler_version: Option<String>,
    pub rounds: Option<u64>,
}

/// One chain's crawl result at one synchronized timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSetSnapshot {
    pub chain: String,
    pub timestamp: DateTime<Utc>,
    pub records: BTreeMap<String, BTreeSet<String>>,
    pub meta: SnapshotMeta,
}

impl EdgeSetSnapshot {
    pub fn new(chain: impl Into<String>, timestamp: DateTime<Utc>) -> Self {
        EdgeSetSnapshot {
            chain: chain.into(),
            timestamp,
            records: BTreeMap::new(),
            meta: SnapshotMeta::default(),
        }
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    /// Every id appearing as a source or destination.
    pub fn node_ids(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for (src, dsts) in &self.records {
            out.insert(src.as_str());
            out.extend(dsts.iter().map(String::as_str));
        }
        out
    }

    /// Ids of nodes that answered the crawler (record sources).
    pub fn reachable(&self) -> impl Iterator<Item = &str> {
        self.records.keys().map(String::as_str)
    }

    pub fn file_name(&self) -> String {
        format!(
            "{}-{}.{}",
            self.chain,
            self.timestamp.format("%Y%m%dT%H%M%SZ"),
            SNAPSHOT_EXT
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = format!(
            "#v={} chain={} ts={} n={}\n",
            FORMAT_VERSION,
            self.chain,
            format_ts(&self.timestamp),
            self.records.len()
        );
        for (src, dsts) in &self.records {
            body.push_str(src);
            body.push('\t');
            let mut first = true;
            for d in dsts {
                if !first {
                    body.push(',');
                }
                body.push_str(d);
                first = false;
            }
            body.push('\n');
        }
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        body.push_str("#sha256=");
        body.push_str(&digest);
        body.push('\n');
        body.into_bytes()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapError> {
        let text = std::str::from_utf8(bytes).map_err(|_| format_err(0, "not UTF-8"))?;
        let mut lines: Vec<&str> = text.split_inclusive('\n').collect();
        if let Some(last) = lines.last() {
            if let Some(hexsum) = last.trim_end().strip_prefix("#sha256=") {
                let covered = text.len() - last.len();
                let digest = hex::encode(Sha256::digest(&bytes[..covered]));
                if digest != hexsum {
                    return Err(SnapError::ChecksumMismatch);
                }
                lines.pop();
            }
        }
        let header_line = lines.first().ok_or_else(|| format_err(1, "empty file"))?;
        let header = parse_header(header_line.trim_end_matches(['\n', '\r']))?;
        let mut snap = EdgeSetSnapshot::new(header.chain, header.timestamp);
        let mut kind = IdKindCheck::default();
        for (i, raw) in lines.iter().enumerate().skip(1) {
            let lineno = i + 1;
            let line = raw.trim_end_matches(['\n', '\r']);
            let (src, rest) = line
                .split_once('\t')
                .ok_or_else(|| format_err(lineno, "expected <src>\\t<dst,...>"))?;
            validate_id(src).map_err(|m| format_err(lineno, m))?;
            kind.observe(src).map_err(|m| format_err(lineno, m))?;
            let mut dsts = BTreeSet::new();
            if !rest.is_empty() {
                for d in rest.split(',') {
                    validate_id(d).map_err(|m| format_err(lineno, m))?;
                    kind.observe(d).map_err(|m| format_err(lineno, m))?;
                    dsts.insert(d.to_string());
                }
            }
            if snap.records.insert(src.to_string(), dsts).is_some() {
                return Err(format_err(lineno, format!("duplicate source {src}")));
            }
        }
        if snap.records.len() != header.n {
            return Err(format_err(
                1,
                format!("header says n={} but body has {} records", header.n, snap.records.len()),
            ));
        }
        Ok(snap)
    }
}

fn validate_id(id: &str) -> Result<(), String> {
    if id.is_empty() {
        return Err("empty node id".into());
    }
    if id.chars().any(|c| c.is_whitespace() || c == ',' || c == '#') {
        return Err(format!("illegal character in node id {id:?}"));
    }
    Ok(())
}

/// Raw addresses and opaque ids must not be mixed in one file.
#[derive(Default)]
struct IdKindCheck {
    raw: Option<bool>,
}

impl IdKindCheck {
    fn observe(&mut self, id: &str) -> Result<(), String> {
        let is_raw = collapse_port(id).parse::<Ipv4Addr>().is_ok();
        match self.raw {
            None => {
                self.raw = Some(is_raw);
                Ok(())
            }
            Some(r) if r == is_raw => Ok(()),
            Some(_) => Err(format!("node id {id:?} mixes raw addresses and pseudonyms")),
        }
    }
}

pub struct Header {
    pub version: u32,
    pub chain: String,
    pub timestamp: DateTime<Utc>,
    pub n: usize,
}

pub fn parse_header(line: &str) -> Result<Header, SnapError> {
    let rest = line
        .strip_prefix('#')
        .ok_or_else(|| format_err(1, "missing header"))?;
    let mut fields = HashMap::new();
    for tok in rest.split(' ') {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| format_err(1, format!("bad header token {tok:?}")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| {
        fields
            .get(k)
            .copied()
            .ok_or_else(|| format_err(1, format!("header lacks {k}")))
    };
    let version: u32 = get("v")?
        .parse()
        .map_err(|_| format_err(1, "bad version"))?;
    if version != FORMAT_VERSION {
        return Err(format_err(1, format!("unsupported format version {version}")));
    }
    let chain = get("chain")?.to_string();
    if chain.is_empty() {
        return Err(format_err(1, "empty chain name"));
    }
    let timestamp = parse_ts(get("ts")?).ok_or_else(|| format_err(1, "bad timestamp"))?;
    let n = get("n")?.parse().map_err(|_| format_err(1, "bad record count"))?;
    if fields.len() != 4 {
        return Err(format_err(1, "unexpected header fields"));
    }
    Ok(Header {
        version,
        chain,
        timestamp,
        n,
    })
}

/// Writes `snap` into `dir` and returns the file path. Existing snapshots
/// are never overwritten.
pub fn write_snapshot(dir: &Path, snap: &EdgeSetSnapshot) -> Result<PathBuf, SnapError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(snap.file_name());
    let mut f = OpenOptions::new().write(true).create_new(true).open(&path)?;
    f.write_all(&snap.to_bytes())?;
    f.sync_all()?;
    Ok(path)
}

pub fn read_snapshot(path: &Path) -> Result<EdgeSetSnapshot, SnapError> {
    EdgeSetSnapshot::from_bytes(&fs::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub chain: String,
    pub timestamp: DateTime<Utc>,
    pub path: PathBuf,
}

#[derive(Debug, Default)]
pub struct Catalog {
    pub entries: Vec<CatalogEntry>,
    /// Files that could not be indexed, with the reason.
    pub errors: Vec<(PathBuf, SnapError)>,
}

impl Catalog {
    pub fn timestamps(&self) -> Vec<DateTime<Utc>> {
        let mut ts: Vec<_> = self.entries.iter().map(|e| e.timestamp).collect();
        ts.dedup();
        ts
    }

    pub fn chains(&self) -> BTreeSet<&str> {
        self.entries.iter().map(|e| e.chain.as_str()).collect()
    }

    pub fn at(&self, ts: DateTime<Utc>) -> Vec<&CatalogEntry> {
        self.entries.iter().filter(|e| e.timestamp == ts).collect()
    }

    pub fn for_chain(&self, chain: &str) -> Vec<&CatalogEntry> {
        self.entries.iter().filter(|e| e.chain == chain).collect()
    }

    /// Entries grouped by timestamp, in time order.
    pub fn by_timestamp(&self) -> BTreeMap<DateTime<Utc>, Vec<&CatalogEntry>> {
        let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
        for e in &self.entries {
            out.entry(e.timestamp).or_default().push(e);
        }
        out
    }
}

/// Indexes the snapshot files in `dir` by their headers, sorted by
/// (timestamp, chain).
pub fn catalog(dir: &Path) -> Result<Catalog, SnapError> {
    let mut cat = Catalog::default();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == SNAPSHOT_EXT))
        .collect();
    paths.sort();
    for path in paths {
        let header = fs::read_to_string(&path)
            .map_err(SnapError::from)
            .and_then(|t| parse_header(t.lines().next().unwrap_or("")));
        match header {
            Ok(h) => cat.entries.push(CatalogEntry {
                chain: h.chain,
                timestamp: h.timestamp,
                path,
            }),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                cat.errors.push((path, e));
            }
        }
    }
    cat.entries
        .sort_by(|a, b| (a.timestamp, &a.chain).cmp(&(b.timestamp, &b.chain)));
    Ok(cat)
}

/// Replaces addresses with keyed-hash pseudonyms.
///
/// The pseudonym of an address is the lowercase hex of the first 8 (or 16)
/// bytes of HMAC-SHA256 over its dotted-quad form. Ports are dropped, so
/// all endpoints of one host collapse to one pseudonym.
pub struct Pseudonymizer {
    key: [u8; 32],
    width: usize,
    cache: HashMap<Ipv4Addr, String>,
    private_map: Option<File>,
}

impl Pseudonymizer {
    pub fn new(key: [u8; 32]) -> Self {
        Pseudonymizer {
            key,
            width: 8,
            cache: HashMap::new(),
            private_map: None,
        }
    }

    /// Loads a 32-byte raw key file.
    pub fn from_key_file(path: &Path) -> Result<Self, SnapError> {
        let bytes = fs::read(path)
            .map_err(|e| SnapError::MissingKey(format!("{}: {e}", path.display())))?;
        let key: [u8; 32] = bytes.try_into().map_err(|_| {
            SnapError::MissingKey(format!("{} must hold exactly 32 bytes", path.display()))
        })?;
        Ok(Self::new(key))
    }

    /// Loads the key named by `OVERLAY_SEED_FILE`.
    pub fn from_env() -> Result<Self, SnapError> {
        let path = std::env::var_os("OVERLAY_SEED_FILE")
            .ok_or_else(|| SnapError::MissingKey("OVERLAY_SEED_FILE is not set".into()))?;
        Self::from_key_file(Path::new(&path))
    }

    /// Use 128-bit pseudonyms instead of 64-bit ones.
    pub fn wide(mut self) -> Self {
        self.width = 16;
        self
    }

    /// Appends every newly seen `address<TAB>pseudonym` pair to a private TSV.
    pub fn with_private_map(mut self, path: &Path) -> Result<Self, SnapError> {
        self.private_map = Some(OpenOptions::new().create(true).append(true).open(path)?);
        Ok(self)
    }

    pub fn pseudonym(&mut self, ip: Ipv4Addr) -> Result<String, SnapError> {
        if let Some(p) = self.cache.get(&ip) {
            return Ok(p.clone());
        }
        let text = ip.to_string();
        let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&self.key)
            .expect("HMAC accepts any key length");
        mac.update(text.as_bytes());
        let tag = mac.finalize().into_bytes();
        let p = hex::encode(&tag[..self.width]);
        if let Some(f) = self.private_map.as_mut() {
            writeln!(f, "{text}\t{p}")?;
        }
        self.cache.insert(ip, p.clone());
        Ok(p)
    }

    /// Pseudonymizes a raw-address id (`a.b.c.d` or `a.b.c.d:port`).
    pub fn pseudonymize(&mut self, id: &str) -> Result<String, SnapError> {
        let ip: Ipv4Addr = collapse_port(id)
            .parse()
            .map_err(|_| format_err(0, format!("{id:?} is not a raw IPv4 id")))?;
        self.pseudonym(ip)
    }

    fn publish_id(&mut self, id: &str) -> Result<String, SnapError> {
        match collapse_port(id).parse::<Ipv4Addr>() {
            Ok(ip) => self.pseudonym(ip),
            Err(_) => Ok(id.to_string()),
        }
    }

    /// Rewrites a raw snapshot; records of one host are merged. Ids that are
    /// not addresses (discv4 node ids) pass through.
    pub fn apply(&mut self, snap: &EdgeSetSnapshot) -> Result<EdgeSetSnapshot, SnapError> {
        let mut out = EdgeSetSnapshot::new(snap.chain.clone(), snap.timestamp);
        out.meta = snap.meta.clone();
        for (src, dsts) in &snap.records {
            let s = self.publish_id(src)?;
            let mapped = dsts
                .iter()
                .map(|d| self.publish_id(d))
                .collect::<Result<Vec<_>, _>>()?;
            out.records.entry(s).or_default().extend(mapped);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditFinding {
    pub path: PathBuf,
    pub line: usize,
    pub text: String,
}

fn find_ipv4(line: &str) -> Option<String> {
    line.split(|c: char| !(c.is_ascii_digit() || c == '.'))
        .filter(|tok| tok.matches('.').count() == 3)
        .find(|tok| tok.parse::<Ipv4Addr>().is_ok())
        .map(str::to_string)
}

/// Scans every file under `dir` for dotted-quad IPv4 addresses.
pub fn audit(dir: &Path) -> Result<Vec<AuditFinding>, SnapError> {
    let mut findings = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    let mut files = Vec::new();
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let p = entry?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push(p);
            }
        }
    }
    files.sort();
    for path in files {
        let bytes = fs::read(&path)?;
        let text = String::from_utf8_lossy(&bytes);
        for (i, line) in text.lines().enumerate() {
            if let Some(hit) = find_ipv4(line) {
                findings.push(AuditFinding {
                    path: path.clone(),
                    line: i + 1,
                    text: hit,
                });
            }
        }
    }
    Ok(findings)
}
