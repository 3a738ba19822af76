//! Versioned JSON-lines cache of tokenized instances.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::TokenizedInstance;
use crate::error::{Result, TrendError};

pub const CACHE_FORMAT: &str = "trend-instances";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    vocab_hash: String,
    count: usize,
}

pub fn write_instance_cache(
    path: &Path,
    vocab_hash: &str,
    instances: &[TokenizedInstance],
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| TrendError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        format: CACHE_FORMAT.into(),
        version: CACHE_VERSION,
        vocab_hash: vocab_hash.into(),
        count: instances.len(),
    };
    let io = |e| TrendError::io(path, e);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io)?;
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a cache written for the vocabulary with hash `vocab_hash`.
pub fn read_instance_cache(path: &Path, vocab_hash: &str) -> Result<Vec<TokenizedInstance>> {
    let file = std::fs::File::open(path).map_err(|e| TrendError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let bad = |msg: String| TrendError::corpus(path, msg);
    let first = lines
        .next()
        .ok_or_else(|| bad("empty instance cache".into()))?
        .map_err(|e| TrendError::io(path, e))?;
    let header: Header =
        serde_json::from_str(&first).map_err(|e| bad(format!("bad header: {e}")))?;
    if header.format != CACHE_FORMAT || header.version != CACHE_VERSION {
        return Err(bad(format!(
            "unsupported cache {} v{} (expected {CACHE_FORMAT} v{CACHE_VERSION})",
            header.format, header.version
        )));
    }
    if header.vocab_hash != vocab_hash {
        return Err(bad("cache was built with a different vocabulary".into()));
    }
    let mut out = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| TrendError::io(path, e))?;
        let inst = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
        out.push(inst);
    }
    if out.len() != header.count {
        return Err(bad(format!(
            "header announces {} instances, found {}",
            header.count,
            out.len()
        )));
    }
    Ok(out)
}
