//! Point files: CSV (one point per line) or little-endian f64 rows behind a
//! 16-byte header (magic, u64 n, u32 d).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"LPPT";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    /// Binary for `.bin`/`.f64`, CSV otherwise.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("f64") => Format::Binary,
            _ => Format::Csv,
        }
    }
}

fn check_rect(points: &[Vec<f64>]) -> Result<usize> {
    let d = points.first().map_or(0, |p| p.len());
    for p in points {
        if p.len() != d {
            return Err(Error::LengthMismatch { expected: d, found: p.len() });
        }
    }
    Ok(d)
}

pub fn write_csv<W: Write>(out: W, points: &[Vec<f64>]) -> Result<()> {
    check_rect(points)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for p in points {
        w.serialize(p).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let mut points = Vec::new();
    for rec in r.deserialize::<Vec<f64>>() {
        points.push(rec.map_err(|e| Error::Decode(e.to_string()))?);
    }
    check_rect(&points)?;
    Ok(points)
}

pub fn write_binary<W: Write>(mut out: W, points: &[Vec<f64>]) -> Result<()> {
    let d = check_rect(points)?;
    let d32 = u32::try_from(d).map_err(|_| Error::TooLarge(format!("dimension {d}")))?;
    out.write_all(&MAGIC)?;
    out.write_all(&(points.len() as u64).to_le_bytes())?;
    out.write_all(&d32.to_le_bytes())?;
    for p in points {
        for v in p {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Vec<Vec<f64>>> {
    let mut head = [0u8; 16];
    input.read_exact(&mut head).map_err(|_| Error::Decode("short header".into()))?;
    if head[..4] != MAGIC {
        return Err(Error::Decode("bad magic".into()));
    }
    let n = u64::from_le_bytes(head[4..12].try_into().expect("8 bytes")) as usize;
    let d = u32::from_le_bytes(head[12..16].try_into().expect("4 bytes")) as usize;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if Some(body.len()) != n.checked_mul(d).and_then(|c| c.checked_mul(8)) {
        return Err(Error::Decode(format!("expected {n}x{d} values, got {} bytes", body.len())));
    }
    let vals: Vec<f64> = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(if d == 0 { vec![Vec::new(); n] } else { vals.chunks(d).map(<[f64]>::to_vec).collect() })
}

pub fn write_points(path: &Path, points: &[Vec<f64>]) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    match Format::from_path(path) {
        Format::Csv => write_csv(f, points),
        Format::Binary => write_binary(f, points),
    }
}

/// Reads either format; binary is recognised by its magic.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut f = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    let got = f.read(&mut magic)?;
    let prefix = std::io::Cursor::new(magic[..got].to_vec());
    if got == 4 && magic == MAGIC {
        read_binary(prefix.chain(f))
    } else {
        read_csv(prefix.chain(f))
    }
}
