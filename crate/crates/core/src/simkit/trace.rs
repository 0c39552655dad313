use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::AccessOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceRecord {
    pub op: AccessOp,
    pub addr: u64,
}

impl TraceRecord {
    pub fn read(addr: u64) -> Self {
        TraceRecord {
            op: AccessOp::Read,
            addr,
        }
    }

    pub fn write(addr: u64) -> Self {
        TraceRecord {
            op: AccessOp::Write,
            addr,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Parse `R 0x1f40` / `W 0x1f40` records, one per line. `#` starts a
/// comment; blank lines are skipped. The `0x` prefix is optional.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| TraceError::Parse { line: i + 1, msg };
        let mut fields = line.split_whitespace();
        let op = match fields.next() {
            Some("R") | Some("r") => AccessOp::Read,
            Some("W") | Some("w") => AccessOp::Write,
            Some(other) => return Err(err(format!("unknown op {other:?}, expected R or W"))),
            None => unreachable!("non-empty line has a first field"),
        };
        let addr_s = fields.next().ok_or_else(|| err("missing address".into()))?;
        if let Some(extra) = fields.next() {
            return Err(err(format!("unexpected trailing field {extra:?}")));
        }
        let hex = addr_s
            .strip_prefix("0x")
            .or_else(|| addr_s.strip_prefix("0X"))
            .unwrap_or(addr_s);
        let addr = u64::from_str_radix(hex, 16)
            .map_err(|e| err(format!("bad address {addr_s:?}: {e}")))?;
        out.push(TraceRecord { op, addr });
    }
    Ok(out)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_trace(&text)
}

pub fn format_trace(records: &[TraceRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 18);
    for r in records {
        let _ = writeln!(s, "{} {:#014x}", r.op.as_str(), r.addr);
    }
    s
}
