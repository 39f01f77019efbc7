//! Matrix files.
//!
//! The binary format is `b"LSPM"`, a `u16` version, `u32` rows, `u32` cols,
//! then `rows * cols` row-major `f64`, all little-endian. Files ending in
//! `.csv` are plain comma-separated rows without a header instead.

use std::fs;
use std::io::Write;
use std::path::Path;

use locsparse_core::Mat;

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"LSPM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

pub fn encode(m: &Mat) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out
}

/// Inverse of [`encode`]. The error string names what is wrong.
pub fn decode(bytes: &[u8]) -> std::result::Result<Mat, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("truncated header ({} bytes)", bytes.len()));
    }
    if &bytes[..4] != MAGIC {
        return Err("not an LSPM file (bad magic)".into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(format!("unsupported LSPM version {version}"));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let want = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or("dimensions overflow")?;
    let body = &bytes[HEADER_LEN..];
    if body.len() != want {
        return Err(format!("{rows}x{cols} needs {want} data bytes, found {}", body.len()));
    }
    let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(Mat::from_row_slice(rows, cols, &vals))
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

pub fn to_csv(m: &Mat) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for i in 0..m.nrows() {
        // `{:?}` on f64 prints the shortest string that parses back exactly
        w.write_record(m.row(i).iter().map(|x| format!("{x:?}"))).unwrap();
    }
    w.into_inner().unwrap()
}

pub fn from_csv(bytes: &[u8]) -> std::result::Result<Mat, String> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(bytes);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| format!("line {}: {s:?}: {e}", i + 1)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!("line {}: {} fields, expected {}", i + 1, row.len(), first.len()));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(Mat::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_matrix(path: &Path, m: &Mat) -> Result<()> {
    let bytes = if is_csv(path) { to_csv(m) } else { encode(m) };
    write_atomic(path, &bytes)
}

pub fn read_matrix(path: &Path) -> Result<Mat> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let parsed = if is_csv(path) { from_csv(&bytes) } else { decode(&bytes) };
    parsed.map_err(|msg| CliError::format(path, msg))
}
