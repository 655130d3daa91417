//! Flat binary arrays with an 8-line ASCII header, and small CSV helpers.
//!
//! ```text
//! PHASELESS-ARRAY v1
//! kind <name>
//! dtype f64|c64
//! dims <d1> <d2> ...
//! spacing <h1> <h2> ...
//! origin <o1> <o2> ...
//! order row-major
//! end
//! ```
//! followed by little-endian IEEE-754 doubles (complex values interleaved re, im).

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &str = "PHASELESS-ARRAY v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F64,
    C64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrayHeader {
    pub kind: String,
    pub dtype: Dtype,
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub origin: Vec<f64>,
}

impl ArrayHeader {
    pub fn new(kind: &str, dtype: Dtype, dims: Vec<usize>) -> ArrayHeader {
        let n = dims.len();
        ArrayHeader {
            kind: kind.to_string(),
            dtype,
            dims,
            spacing: vec![1.0; n],
            origin: vec![0.0; n],
        }
    }

    pub fn with_geometry(mut self, spacing: Vec<f64>, origin: Vec<f64>) -> ArrayHeader {
        self.spacing = spacing;
        self.origin = origin;
        self
    }

    pub fn n_elements(&self) -> usize {
        self.dims.iter().product()
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_header(w: &mut impl Write, h: &ArrayHeader) -> Result<()> {
    let dtype = match h.dtype {
        Dtype::F64 => "f64",
        Dtype::C64 => "c64",
    };
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "kind {}", h.kind)?;
    writeln!(w, "dtype {dtype}")?;
    writeln!(w, "dims {}", join(&h.dims))?;
    writeln!(w, "spacing {}", join(&h.spacing))?;
    writeln!(w, "origin {}", join(&h.origin))?;
    writeln!(w, "order row-major")?;
    writeln!(w, "end")?;
    Ok(())
}

pub fn write_f64_array(path: &Path, header: &ArrayHeader, data: &[f64]) -> Result<()> {
    if header.dtype != Dtype::F64 || data.len() != header.n_elements() {
        return Err(Error::Format(format!(
            "header {:?} does not describe {} reals",
            header.dims,
            data.len()
        )));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_header(&mut w, header)?;
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_c64_array(path: &Path, header: &ArrayHeader, data: &[Complex64]) -> Result<()> {
    if header.dtype != Dtype::C64 || data.len() != header.n_elements() {
        return Err(Error::Format(format!(
            "header {:?} does not describe {} complex values",
            header.dims,
            data.len()
        )));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_header(&mut w, header)?;
    for v in data {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .map(str::trim)
        .ok_or_else(|| Error::Format(format!("expected `{key}` line, got `{line}`")))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::Format(format!("bad number `{t}`")))
        })
        .collect()
}

fn read_raw(path: &Path) -> Result<(ArrayHeader, Vec<f64>)> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut lines = Vec::with_capacity(8);
    for _ in 0..8 {
        let mut s = String::new();
        r.read_line(&mut s)?;
        lines.push(s.trim_end().to_string());
    }
    if lines[0] != MAGIC || lines[7] != "end" || lines[6] != "order row-major" {
        return Err(Error::Format(format!(
            "{} is not a phaseless array",
            path.display()
        )));
    }
    let kind = field(&lines[1], "kind")?.to_string();
    let dtype = match field(&lines[2], "dtype")? {
        "f64" => Dtype::F64,
        "c64" => Dtype::C64,
        other => return Err(Error::Format(format!("unknown dtype `{other}`"))),
    };
    let header = ArrayHeader {
        kind,
        dtype,
        dims: parse_list(field(&lines[3], "dims")?)?,
        spacing: parse_list(field(&lines[4], "spacing")?)?,
        origin: parse_list(field(&lines[5], "origin")?)?,
    };
    let n_doubles = header.n_elements() * if dtype == Dtype::C64 { 2 } else { 1 };
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * n_doubles {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            8 * n_doubles,
            bytes.len()
        )));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, data))
}

pub fn read_f64_array(path: &Path) -> Result<(ArrayHeader, Vec<f64>)> {
    let (h, d) = read_raw(path)?;
    if h.dtype != Dtype::F64 {
        return Err(Error::Format(format!(
            "{} holds complex data",
            path.display()
        )));
    }
    Ok((h, d))
}

pub fn read_c64_array(path: &Path) -> Result<(ArrayHeader, Vec<Complex64>)> {
    let (h, d) = read_raw(path)?;
    if h.dtype != Dtype::C64 {
        return Err(Error::Format(format!("{} holds real data", path.display())));
    }
    Ok((
        h,
        d.chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect(),
    ))
}

/// Writes rows of numbers under a single header line. Values use round-trip formatting.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(
            w,
            "{}",
            row.iter()
                .map(|v| format!("{v:?}"))
                .collect::<Vec<_>>()
                .join(",")
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads numeric CSV rows, skipping blank lines, `#` comments and any non-numeric header lines.
pub fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match parsed {
            Ok(r) => rows.push(r),
            Err(_) if rows.is_empty() => continue,
            Err(_) => {
                return Err(Error::Format(format!(
                    "non-numeric row `{line}` in {}",
                    path.display()
                )))
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        let h = ArrayHeader::new("test", Dtype::F64, vec![2, 3])
            .with_geometry(vec![0.5, 0.25], vec![-1.0, 0.0]);
        let data = vec![1.0, -2.0, 3.5, f64::MIN_POSITIVE, 0.1, 7.0];
        write_f64_array(&p, &h, &data).unwrap();
        let (h2, d2) = read_f64_array(&p).unwrap();
        assert_eq!(h, h2);
        assert_eq!(data, d2);

        let pc = dir.path().join("c.bin");
        let hc = ArrayHeader::new("spec", Dtype::C64, vec![2]);
        let dc = vec![Complex64::new(1.0, 2.0), Complex64::new(-0.3, 1e-300)];
        write_c64_array(&pc, &hc, &dc).unwrap();
        assert_eq!(read_c64_array(&pc).unwrap().1, dc);
        assert!(read_f64_array(&pc).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let rows = vec![vec![0.1, 1.0 / 3.0], vec![-2.0, 1e-17]];
        write_csv(&p, "k,modulus", &rows).unwrap();
        assert_eq!(read_csv(&p).unwrap(), rows);
    }
}
