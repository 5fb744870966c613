//! Little-endian, versioned byte formats for sketch states and frames.
//!
//! Receivers share the public configuration, so payloads carry only a
//! fingerprint of it plus the numbers.

use crate::error::{Error, Result};
use crate::median::MedianCostState;
use crate::stable_sketch::SketchVector;
use crate::stream::CoresetEntry;

pub const VERSION: u16 = 1;
const TAG_SKETCH: [u8; 4] = *b"LPSV";
const TAG_MEDIAN: [u8; 4] = *b"LPMC";
const TAG_CORESET: [u8; 4] = *b"LPCS";

#[derive(Default)]
pub struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Writer::default()
    }

    pub fn header(&mut self, tag: [u8; 4]) {
        self.buf.extend_from_slice(&tag);
        self.u16(VERSION);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.f64(*v);
        }
    }

    pub fn i128s(&mut self, vs: &[i128]) {
        self.u64(vs.len() as u64);
        self.buf.reserve(vs.len() * 16);
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Decode(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn header(&mut self, tag: [u8; 4]) -> Result<()> {
        let got: [u8; 4] = self.array()?;
        if got != tag {
            return Err(Error::Decode(format!("bad tag {got:?}")));
        }
        let v = self.u16()?;
        if v != VERSION {
            return Err(Error::Decode(format!("unsupported version {v}")));
        }
        Ok(())
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(Error::Decode(format!("length {n} exceeds payload")));
        }
        Ok(n)
    }

    pub fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn i128s(&mut self) -> Result<Vec<i128>> {
        let n = self.len(16)?;
        (0..n).map(|_| Ok(i128::from_le_bytes(self.array()?))).collect()
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn expect_done(&self) -> Result<()> {
        if self.is_done() {
            Ok(())
        } else {
            Err(Error::Decode(format!("{} trailing bytes", self.buf.len() - self.pos)))
        }
    }
}

pub fn encode_sketch(sk: &SketchVector) -> Vec<u8> {
    let mut w = Writer::new();
    w.header(TAG_SKETCH);
    w.u64(sk.config_id);
    w.f64(sk.p);
    w.f64s(&sk.entries);
    w.finish()
}

pub fn decode_sketch(buf: &[u8]) -> Result<SketchVector> {
    let mut r = Reader::new(buf);
    r.header(TAG_SKETCH)?;
    let config_id = r.u64()?;
    let p = r.f64()?;
    let entries = r.f64s()?;
    r.expect_done()?;
    Ok(SketchVector { config_id, p, entries })
}

/// Accumulator of a median-cost state; the fingerprint pins config, seed and weights.
pub fn encode_median_state(state: &MedianCostState) -> Vec<u8> {
    let mut w = Writer::new();
    w.header(TAG_MEDIAN);
    w.u64(state.fingerprint());
    w.i128s(&state.acc);
    w.finish()
}

/// Decodes into a copy of `template`, which must share the fingerprint.
pub fn decode_median_state(buf: &[u8], template: &MedianCostState) -> Result<MedianCostState> {
    let mut r = Reader::new(buf);
    r.header(TAG_MEDIAN)?;
    if r.u64()? != template.fingerprint() {
        return Err(Error::ConfigMismatch);
    }
    let acc = r.i128s()?;
    r.expect_done()?;
    template.with_acc(acc)
}

pub fn encode_coreset(config_fingerprint: u64, entries: &[CoresetEntry]) -> Vec<u8> {
    let mut w = Writer::new();
    w.header(TAG_CORESET);
    w.u64(config_fingerprint);
    w.u64(entries.len() as u64);
    for e in entries {
        w.u64(e.id);
        w.f64(e.weight);
        w.f64s(&e.distance);
        w.f64s(&e.slots);
    }
    w.finish()
}

pub fn decode_coreset(buf: &[u8], config_fingerprint: u64) -> Result<Vec<CoresetEntry>> {
    let mut r = Reader::new(buf);
    r.header(TAG_CORESET)?;
    if r.u64()? != config_fingerprint {
        return Err(Error::ConfigMismatch);
    }
    let n = r.u64()? as usize;
    let mut out = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let id = r.u64()?;
        let weight = r.f64()?;
        let distance = r.f64s()?;
        let slots = r.f64s()?;
        out.push(CoresetEntry { id, weight, distance, slots });
    }
    r.expect_done()?;
    Ok(out)
}

/// `u32` length prefix followed by the payload.
pub fn frame(payload: &[u8]) -> Result<Vec<u8>> {
    let len = u32::try_from(payload.len()).map_err(|_| Error::TooLarge(format!("frame of {} bytes", payload.len())))?;
    let mut out = Vec::with_capacity(payload.len() + 4);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

/// Splits a byte stream into frame payloads.
pub fn unframe(mut buf: &[u8]) -> Result<Vec<&[u8]>> {
    let mut out = Vec::new();
    while !buf.is_empty() {
        if buf.len() < 4 {
            return Err(Error::Decode("truncated frame length".into()));
        }
        let len = u32::from_le_bytes(buf[..4].try_into().expect("4 bytes")) as usize;
        let rest = &buf[4..];
        if rest.len() < len {
            return Err(Error::Decode(format!("frame wants {len} bytes, {} left", rest.len())));
        }
        out.push(&rest[..len]);
        buf = &rest[len..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sketch_roundtrip() {
        let sk = SketchVector { config_id: 77, p: 1.5, entries: vec![1.0, -0.0, f64::MAX, 3.25] };
        let b = encode_sketch(&sk);
        assert_eq!(b.len(), 4 + 2 + 8 + 8 + 8 + 4 * 8);
        let back = decode_sketch(&b).unwrap();
        assert_eq!(back.entries.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), sk.entries.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert!(decode_sketch(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[4] = 9;
        assert!(matches!(decode_sketch(&bad), Err(Error::Decode(_))));
    }

    #[test]
    fn coreset_roundtrip() {
        let e = vec![
            CoresetEntry { id: 3, weight: 1.5, distance: vec![1.0, 2.0], slots: vec![0.5; 5] },
            CoresetEntry { id: 9, weight: 0.5, distance: vec![-1.0, 0.0], slots: vec![] },
        ];
        let b = encode_coreset(11, &e);
        assert_eq!(decode_coreset(&b, 11).unwrap(), e);
        assert_eq!(decode_coreset(&b, 12).unwrap_err(), Error::ConfigMismatch);
    }

    #[test]
    fn frames() {
        let a = frame(b"abc").unwrap();
        let b = frame(b"").unwrap();
        let joined = [a, b].concat();
        assert_eq!(unframe(&joined).unwrap(), vec![&b"abc"[..], &b""[..]]);
        assert!(unframe(&joined[..5]).is_err());
    }
}
