//! Deterministic artifact writers. CSV cells carry 17 significant digits
//! (lossless for f64), headers are always present, and quoting follows the
//! csv crate's RFC behavior. JSON goes through serde with struct-ordered keys.

use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

/// 17-significant-digit scientific form; round-trips every finite f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writer target: a file path or stdout.
pub enum Sink {
    File(std::path::PathBuf),
    Stdout,
}

impl Sink {
    pub fn from_option(out: Option<&Path>) -> Sink {
        match out {
            Some(p) => Sink::File(p.to_path_buf()),
            None => Sink::Stdout,
        }
    }

    pub fn write_bytes(&self, bytes: &[u8]) -> Result<()> {
        match self {
            Sink::File(path) => std::fs::write(path, bytes)
                .with_context(|| format!("cannot write {}", path.display())),
            Sink::Stdout => {
                std::io::stdout().write_all(bytes).context("cannot write to stdout")
            }
        }
    }
}

/// Builds a CSV body from a header row and rows of preformatted cells.
pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    Ok(writer.into_inner()?)
}

pub fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    Ok(body)
}
