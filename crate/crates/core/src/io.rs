//! Matrix files: a dense little-endian binary format and Matrix Market text.
//!
//! Binary layout: `b"ATGL"`, `u32` n (LE), 8 zero bytes, then n² `f64`
//! values in row-major order (LE).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use faer::Mat;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"ATGL";
const HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    MatrixMarket,
}

impl MatrixFormat {
    /// `.mtx` means Matrix Market; anything else is the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("mtx") => MatrixFormat::MatrixMarket,
            _ => MatrixFormat::Binary,
        }
    }
}

pub fn write_matrix(path: &Path, m: &Mat<f64>) -> Result<()> {
    match MatrixFormat::from_path(path) {
        MatrixFormat::Binary => write_binary(path, m),
        MatrixFormat::MatrixMarket => write_matrix_market(path, m),
    }
}

pub fn read_matrix(path: &Path) -> Result<Mat<f64>> {
    match MatrixFormat::from_path(path) {
        MatrixFormat::Binary => read_binary(path),
        MatrixFormat::MatrixMarket => read_matrix_market(path),
    }
}

pub fn encode_binary(m: &Mat<f64>) -> Result<Vec<u8>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: m.ncols(),
        });
    }
    let n32 = u32::try_from(n)
        .map_err(|_| Error::InvalidInput(format!("n = {n} does not fit in u32")))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&n32.to_le_bytes());
    out.extend_from_slice(&[0u8; 8]);
    for i in 0..n {
        for j in 0..n {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_binary(bytes: &[u8], path: &Path) -> Result<Mat<f64>> {
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let want = HEADER_LEN + 8 * n * n;
    if bytes.len() != want {
        return Err(bad(format!(
            "expected {want} bytes for n = {n}, found {}",
            bytes.len()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    Ok(Mat::from_fn(n, n, |i, j| {
        let o = 8 * (i * n + j);
        f64::from_le_bytes(body[o..o + 8].try_into().unwrap())
    }))
}

pub fn write_binary(path: &Path, m: &Mat<f64>) -> Result<()> {
    let bytes = encode_binary(m)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_binary(path: &Path) -> Result<Mat<f64>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_binary(&bytes, path)
}

/// Writes a square matrix as a dense `array real general` Matrix Market file.
pub fn write_matrix_market(path: &Path, m: &Mat<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix array real general")?;
        writeln!(w, "{} {}", m.nrows(), m.ncols())?;
        for j in 0..m.ncols() {
            for v in m.col_as_slice(j) {
                // {:e} round-trips f64 exactly
                writeln!(w, "{v:e}")?;
            }
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Reads `array` or `coordinate` Matrix Market files with `real`,
/// `integer` or `pattern` fields and `general` or `symmetric` symmetry.
pub fn read_matrix_market(path: &Path) -> Result<Mat<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = BufReader::new(file).lines();
    let header = match lines.next() {
        Some(l) => l.map_err(|e| Error::io(path, e))?,
        None => return Err(bad("empty file".into())),
    };
    let h: Vec<String> = header
        .split_whitespace()
        .map(|s| s.to_ascii_lowercase())
        .collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(bad(format!("unrecognised header {header:?}")));
    }
    let coordinate = match h[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(bad(format!("unsupported layout {other}"))),
    };
    let pattern = match h[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(bad(format!("unsupported field {other}"))),
    };
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(bad(format!("unsupported symmetry {other}"))),
    };

    let mut body = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        body.push(t.to_string());
    }
    let mut it = body.into_iter();
    let size = it.next().ok_or_else(|| bad("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|s| {
            s.parse()
                .map_err(|_| bad(format!("bad size line {size:?}")))
        })
        .collect::<Result<_>>()?;
    let (nr, nc) = match dims.as_slice() {
        [r, c] if !coordinate => (*r, *c),
        [r, c, _] if coordinate => (*r, *c),
        _ => return Err(bad(format!("bad size line {size:?}"))),
    };
    if nr != nc {
        return Err(bad(format!("matrix is {nr}x{nc}, expected square")));
    }
    let n = nr;
    let mut m = Mat::<f64>::zeros(n, n);
    let parse = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| bad(format!("bad value {s:?}")))
    };
    if coordinate {
        for entry in it {
            let f: Vec<&str> = entry.split_whitespace().collect();
            let want = if pattern { 2 } else { 3 };
            if f.len() != want {
                return Err(bad(format!("bad entry line {entry:?}")));
            }
            let i: usize = f[0]
                .parse()
                .map_err(|_| bad(format!("bad row index in {entry:?}")))?;
            let j: usize = f[1]
                .parse()
                .map_err(|_| bad(format!("bad column index in {entry:?}")))?;
            if i == 0 || j == 0 || i > n || j > n {
                return Err(bad(format!("index out of range in {entry:?}")));
            }
            let v = if pattern { 1.0 } else { parse(f[2])? };
            m[(i - 1, j - 1)] = v;
            if symmetric {
                m[(j - 1, i - 1)] = v;
            }
        }
    } else {
        let values: Vec<f64> = it.map(|s| parse(&s)).collect::<Result<_>>()?;
        if symmetric {
            // lower triangle, column-major
            if values.len() != n * (n + 1) / 2 {
                return Err(bad(format!(
                    "expected {} values, found {}",
                    n * (n + 1) / 2,
                    values.len()
                )));
            }
            let mut k = 0;
            for j in 0..n {
                for i in j..n {
                    m[(i, j)] = values[k];
                    m[(j, i)] = values[k];
                    k += 1;
                }
            }
        } else {
            if values.len() != n * n {
                return Err(bad(format!(
                    "expected {} values, found {}",
                    n * n,
                    values.len()
                )));
            }
            for j in 0..n {
                m.col_as_slice_mut(j)
                    .copy_from_slice(&values[j * n..(j + 1) * n]);
            }
        }
    }
    Ok(m)
}
