//! Binary array files and output-path handling.
//!
//! Arrays are stored as a text header line `ANISO1 n d` followed by `n * d`
//! little-endian `f64` values in row-major order.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampling::Trajectory;

pub const MAGIC: &str = "ANISO1";

pub fn write_array<W: Write>(mut w: W, rows: &[Vec<f64>]) -> Result<()> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::dim("rows differ in length"));
    }
    writeln!(w, "{MAGIC} {} {d}", rows.len())?;
    for r in rows {
        for v in r {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_header<R: BufRead>(r: &mut R, magic: &str) -> Result<Vec<String>> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(Error::parse(format!("missing {magic} header")));
    }
    Ok(parts.map(str::to_string).collect())
}

fn read_values<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::parse("array file is shorter than its header"))?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read_array<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    let mut r = BufReader::new(r);
    let header = read_header(&mut r, MAGIC)?;
    let [n, d] = header.as_slice() else {
        return Err(Error::parse("header must be `ANISO1 n d`"));
    };
    let n: usize = n.parse().map_err(|_| Error::parse("bad row count"))?;
    let d: usize = d.parse().map_err(|_| Error::parse("bad column count"))?;
    let values = read_values(&mut r, n * d)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::parse("trailing bytes after array data"));
    }
    if d == 0 {
        return Ok(vec![Vec::new(); n]);
    }
    Ok(values.chunks_exact(d).map(<[f64]>::to_vec).collect())
}

pub fn read_array_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    read_array(File::open(path)?)
}

/// Opens `path` for writing, failing with `AlreadyExists` if it exists.
pub fn create_new(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(OpenOptions::new().write(true).create_new(true).open(path)?))
}

pub fn write_array_file(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    write_array(create_new(path)?, rows)
}

/// Trajectory dump: header `ANISO1-TRAJ T d fields`, then per level the
/// iterate (when retained) and the covariance variances.
pub fn write_trajectory<W: Write>(mut w: W, traj: &Trajectory) -> Result<()> {
    let levels = traj.covariances.len();
    let d = traj.covariances.first().map_or(0, |c| c.len());
    let with_x = traj.iterates.len() == levels && levels > 0;
    let fields = if with_x { "x,phi" } else { "phi" };
    writeln!(w, "{MAGIC}-TRAJ {levels} {d} {fields}")?;
    for (k, c) in traj.covariances.iter().enumerate() {
        if with_x {
            for v in &traj.iterates[k] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in c.phi() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let rows = vec![vec![1.0, -0.0, f64::MIN_POSITIVE], vec![1e300, std::f64::consts::PI, -2.5]];
        let mut buf = Vec::new();
        write_array(&mut buf, &rows).unwrap();
        assert!(buf.starts_with(b"ANISO1 2 3\n"));
        let back = read_array(buf.as_slice()).unwrap();
        for (a, b) in rows.iter().flatten().zip(back.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn truncated_and_bad_headers_fail() {
        assert!(read_array(&b"ANISO1 1 2\n\0\0"[..]).is_err());
        assert!(read_array(&b"NOPE 1 1\n"[..]).is_err());
        assert!(read_array(&b"ANISO1 x 1\n"[..]).is_err());
    }

    #[test]
    fn create_new_refuses_existing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        write_array_file(&p, &[vec![1.0]]).unwrap();
        let err = write_array_file(&p, &[vec![1.0]]).unwrap_err();
        assert!(matches!(err, Error::Io(e) if e.kind() == std::io::ErrorKind::AlreadyExists));
    }
}
