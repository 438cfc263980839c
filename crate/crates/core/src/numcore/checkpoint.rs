//! Checkpoint format: a plain-text header followed by raw little-endian f64s.
//!
//! ```text
//! vpg-checkpoint v1
//! entries <n>
//! <name> <rows> <cols>      (n lines)
//! data <count>
//! <count * 8 bytes, little-endian f64>
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::params::{LayerShape, ShapedParams};
use crate::error::{Error, Result};

const MAGIC: &str = "vpg-checkpoint v1";

pub fn encode(params: &ShapedParams) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("entries {}\n", params.manifest().len()));
    for s in params.manifest() {
        out.push_str(&format!("{} {} {}\n", s.name, s.rows, s.cols));
    }
    out.push_str(&format!("data {}\n", params.len()));
    let mut bytes = out.into_bytes();
    for v in params.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn decode(bytes: &[u8]) -> std::result::Result<ShapedParams, String> {
    let mut pos = 0;
    let mut next_line = || -> std::result::Result<&str, String> {
        let rest = &bytes[pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or("truncated header")?;
        pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|e| e.to_string())
    };
    if next_line()? != MAGIC {
        return Err("bad magic line".into());
    }
    let entries: usize = next_line()?
        .strip_prefix("entries ")
        .and_then(|s| s.parse().ok())
        .ok_or("bad entries line")?;
    let mut manifest = Vec::with_capacity(entries);
    for _ in 0..entries {
        let line = next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(format!("bad manifest line `{line}`"));
        }
        let rows = parts[1].parse().map_err(|_| format!("bad rows in `{line}`"))?;
        let cols = parts[2].parse().map_err(|_| format!("bad cols in `{line}`"))?;
        manifest.push(LayerShape::new(parts[0], rows, cols));
    }
    let count: usize = next_line()?
        .strip_prefix("data ")
        .and_then(|s| s.parse().ok())
        .ok_or("bad data line")?;
    let body = &bytes[pos..];
    if body.len() != count * 8 {
        return Err(format!("expected {} data bytes, found {}", count * 8, body.len()));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ShapedParams::new(manifest, data).map_err(|e| e.to_string())
}

/// Writes via a temporary file and rename, so readers never see a partial file.
pub fn write_checkpoint(path: &Path, params: &ShapedParams) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&encode(params))?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<ShapedParams> {
    let bytes = fs::read(path)?;
    decode(&bytes).map_err(|msg| Error::Checkpoint {
        path: path.to_path_buf(),
        msg,
    })
}
