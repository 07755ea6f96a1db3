use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;
use crate::VERSION;

/// SHA-256 of the compact JSON form of `value`, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_string(value).expect("configuration serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seeds: Vec<u64>,
}

impl Provenance {
    pub fn new(config_hash: String, seeds: &[u64]) -> Self {
        Provenance {
            config_hash,
            seeds: seeds.to_vec(),
        }
    }

    pub fn line(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        format!("# config_hash={} seed={} version={}", self.config_hash, seeds.join(";"), VERSION)
    }

    /// Parses a line produced by [`Provenance::line`].
    pub fn parse(line: &str) -> Option<Self> {
        let body = line.strip_prefix("# ")?;
        let mut hash = None;
        let mut seeds = None;
        for field in body.split_whitespace() {
            let (k, v) = field.split_once('=')?;
            match k {
                "config_hash" => hash = Some(v.to_string()),
                "seed" => seeds = v.split(';').filter(|s| !s.is_empty()).map(|s| s.parse().ok()).collect(),
                _ => {}
            }
        }
        Some(Provenance {
            config_hash: hash?,
            seeds: seeds?,
        })
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// A CSV table with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub provenance: Provenance,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(provenance: Provenance, header: &[&str]) -> Self {
        Table {
            provenance,
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.provenance.line().into_bytes();
        out.push(b'\n');
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let bad = |message: String| CliError::Input {
            path: path.to_path_buf(),
            message,
        };
        let first = text.lines().next().unwrap_or_default();
        let provenance = Provenance::parse(first).ok_or_else(|| bad("missing provenance line".into()))?;
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| bad(e.to_string()))?;
        Ok(Table {
            provenance,
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Shortest round-trip decimal form.
pub fn num(x: f64) -> String {
    format!("{x}")
}
