use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct DenseMatrix {
    rows: usize,
    cols: usize,
    /// Row-major entries.
    data: Vec<f64>,
}

pub fn matrix_to_json(m: &DMatrix<f64>) -> Result<String> {
    let data = m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect();
    Ok(serde_json::to_string(&DenseMatrix { rows: m.nrows(), cols: m.ncols(), data })?)
}

pub fn matrix_from_json(s: &str) -> Result<DMatrix<f64>> {
    let d: DenseMatrix = serde_json::from_str(s)?;
    if d.data.len() != d.rows * d.cols {
        bail!("matrix has {} entries, header says {}x{}", d.data.len(), d.rows, d.cols);
    }
    Ok(DMatrix::from_row_slice(d.rows, d.cols, &d.data))
}

/// `u64` little-endian rows and columns, then row-major little-endian `f64`s.
pub fn matrix_to_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * m.len());
    out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
    for r in m.row_iter() {
        for x in r.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn matrix_from_bytes(b: &[u8]) -> Result<DMatrix<f64>> {
    if b.len() < 16 {
        bail!("matrix file shorter than its header");
    }
    let word = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().expect("8 bytes"));
    let (rows, cols) = (word(0) as usize, word(8) as usize);
    let expected = rows.checked_mul(cols).and_then(|n| n.checked_mul(8)).and_then(|n| n.checked_add(16));
    if expected != Some(b.len()) {
        bail!("matrix file has {} bytes, header says {rows}x{cols}", b.len());
    }
    let data: Vec<f64> = b[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Binary when the extension is `bin`, JSON otherwise.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let bytes = if path.extension().is_some_and(|e| e == "bin") { matrix_to_bytes(m) } else { matrix_to_json(m)?.into_bytes() };
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "bin") {
        matrix_from_bytes(&bytes)
    } else {
        matrix_from_json(std::str::from_utf8(&bytes)?)
    }
}
