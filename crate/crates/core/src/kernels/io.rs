//! Text and binary matrix files.
//!
//! Text: first line `m=<int>`, then `m` lines of `m` comma-separated decimals.
//! Binary: the 4 bytes `KMX1`, a little-endian `u64` dimension, then `m·m`
//! little-endian IEEE-754 doubles in row-major order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{MklError, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"KMX1";

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> MklError {
    MklError::Parse(format!("{}:{}: {msg}", path.display(), line))
}

/// Reads a square matrix, choosing the binary or text decoder from the first
/// four bytes.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        decode_binary(path, &bytes)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| MklError::Parse(format!("{}: not UTF-8 text", path.display())))?;
        decode_csv(path, &text)
    }
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    decode_csv(path, &fs::read_to_string(path)?)
}

fn decode_csv(path: &Path, text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let m: usize = header
        .trim()
        .strip_prefix("m=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| parse_err(path, 1, "expected header `m=<int>`"))?;
    let mut data = Vec::with_capacity(m * m);
    let mut rows = 0;
    for (lineno, line) in lines {
        if rows == m {
            return Err(parse_err(path, lineno + 1, format!("more than {m} rows")));
        }
        let before = data.len();
        for field in line.split(',') {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno + 1, format!("bad number `{}`", field.trim())))?;
            data.push(v);
        }
        if data.len() - before != m {
            return Err(parse_err(
                path,
                lineno + 1,
                format!("expected {m} values, found {}", data.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != m {
        return Err(parse_err(path, rows + 1, format!("expected {m} rows, found {rows}")));
    }
    Ok(DMatrix::from_row_slice(m, m, &data))
}

/// Writes the text format. Values use the shortest representation that
/// round-trips exactly.
pub fn write_matrix_csv(path: impl AsRef<Path>, a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(MklError::DimensionMismatch("only square matrices can be written".into()));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    let m = a.nrows();
    writeln!(w, "m={m}")?;
    for i in 0..m {
        for j in 0..m {
            if j > 0 {
                w.write_all(b",")?;
            }
            write!(w, "{}", a[(i, j)])?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_binary(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    decode_binary(path, &fs::read(path)?)
}

fn decode_binary(path: &Path, bytes: &[u8]) -> Result<DMatrix<f64>> {
    let bad = |msg: &str| MklError::Parse(format!("{}: {msg}", path.display()));
    if bytes.len() < 12 || &bytes[..4] != BINARY_MAGIC {
        return Err(bad("missing KMX1 header"));
    }
    let m = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let expected = m
        .checked_mul(m)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| bad("dimension overflows"))?;
    if bytes.len() != expected {
        return Err(bad(&format!("expected {expected} bytes for m={m}, found {}", bytes.len())));
    }
    let data: Vec<f64> = bytes[12..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(DMatrix::from_row_slice(m, m, &data))
}

pub fn write_matrix_binary(path: impl AsRef<Path>, a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(MklError::DimensionMismatch("only square matrices can be written".into()));
    }
    let m = a.nrows();
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(m as u64).to_le_bytes())?;
    for i in 0..m {
        for j in 0..m {
            w.write_all(&a[(i, j)].to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One integer label per line.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| parse_err(path, i + 1, format!("bad label `{}`", l.trim())))
        })
        .collect()
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[i64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for y in labels {
        writeln!(w, "{y}")?;
    }
    w.flush()?;
    Ok(())
}

/// `kernel_index,descriptor_index` pairs (zero-based, `#` comments allowed),
/// returned as a dense map indexed by kernel.
pub fn read_grouping(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let mut pairs = Vec::new();
    for (i, line) in fs::read_to_string(path)?.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(',').map(|f| f.trim().parse::<usize>());
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(k)), Some(Ok(d)), None) => pairs.push((k, d)),
            _ => return Err(parse_err(path, i + 1, "expected `kernel_index,descriptor_index`")),
        }
    }
    let l = pairs.len();
    let mut map = vec![usize::MAX; l];
    for (k, d) in pairs {
        if k >= l || map[k] != usize::MAX {
            return Err(MklError::Parse(format!(
                "{}: kernel indices must be a permutation of 0..{l}",
                path.display()
            )));
        }
        map[k] = d;
    }
    Ok(map)
}

pub fn write_grouping(path: impl AsRef<Path>, map: &[usize]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (k, d) in map.iter().enumerate() {
        writeln!(w, "{k},{d}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[1.0, 0.1, -2.5e-17, 0.1, 3.0, 0.3, -2.5e-17, 0.3, 1e300])
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.csv");
        write_matrix_csv(&p, &sample()).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("m=3\n"));
        assert_eq!(read_matrix(&p).unwrap(), sample());
    }

    #[test]
    fn binary_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.kmx");
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        write_matrix_binary(&p, &a).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"KMX1");
        assert_eq!(u64::from_le_bytes(bytes[4..12].try_into().unwrap()), 2);
        // row-major: second stored value is a[(0, 1)]
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), 2.0);
        assert_eq!(bytes.len(), 12 + 32);
        assert_eq!(read_matrix(&p).unwrap(), a);
    }

    #[test]
    fn truncated_binary_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.kmx");
        let mut bytes = b"KMX1".to_vec();
        bytes.extend_from_slice(&3u64.to_le_bytes());
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_matrix(&p), Err(MklError::Parse(_))));
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "3\n1,2,3\n").unwrap();
        assert!(read_matrix(&p).is_err());
        fs::write(&p, "m=2\n1,2\n3\n").unwrap();
        assert!(read_matrix(&p).is_err());
        fs::write(&p, "m=2\n1,2\n").unwrap();
        assert!(read_matrix(&p).is_err());
        fs::write(&p, "m=1\nx\n").unwrap();
        assert!(read_matrix(&p).is_err());
    }

    #[test]
    fn labels_and_grouping_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.txt");
        write_labels(&p, &[1, -1, 3]).unwrap();
        assert_eq!(read_labels(&p).unwrap(), vec![1, -1, 3]);

        let g = dir.path().join("grouping.csv");
        fs::write(&g, "# kernel,descriptor\n1,0\n0,1\n2,1\n").unwrap();
        assert_eq!(read_grouping(&g).unwrap(), vec![1, 0, 1]);
        fs::write(&g, "0,0\n0,1\n").unwrap();
        assert!(read_grouping(&g).is_err());
    }
}
