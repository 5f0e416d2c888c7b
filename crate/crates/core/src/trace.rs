//! Binary gradient trace files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SIDG"
//! 4       2     format version (u16), currently 1
//! 6       1     element type tag: 0 = f32, 1 = f64
//! 7       8     dimension (u64)
//! 15      …     payload: dim raw little-endian values
//! ```
//!
//! Binary rather than text because traces reach tens of millions of
//! elements. 32-bit payloads are widened to 64-bit on load; all computation
//! downstream is 64-bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::gradmodel::DenseGradient;
use crate::{Error, Result};

pub const TRACE_MAGIC: [u8; 4] = *b"SIDG";
pub const TRACE_VERSION: u16 = 1;
const HEADER_LEN: usize = 15;

/// Element width of a trace payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElemType {
    F32 = 0,
    F64 = 1,
}

impl ElemType {
    pub fn size(&self) -> usize {
        match self {
            ElemType::F32 => 4,
            ElemType::F64 => 8,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ElemType::F32),
            1 => Ok(ElemType::F64),
            other => Err(Error::Format(format!("unknown element type tag {other}"))),
        }
    }
}

impl std::str::FromStr for ElemType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(ElemType::F32),
            "f64" => Ok(ElemType::F64),
            other => Err(Error::Config(format!(
                "unknown element type {other:?}; expected f32 or f64"
            ))),
        }
    }
}

/// A loaded trace: payload widened to f64 plus the on-disk element type.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub gradient: DenseGradient,
    pub elem: ElemType,
}

/// Writes `values` as a trace file. With [`ElemType::F32`] each value is
/// narrowed to f32 before writing. Non-finite values are rejected: a trace
/// that cannot be read back is always a bug at the write site.
pub fn write_trace(path: &Path, values: &[f64], elem: ElemType) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Format(format!(
            "refusing to write non-finite value {} at index {i}",
            values[i]
        )));
    }
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&TRACE_MAGIC)?;
    w.write_all(&TRACE_VERSION.to_le_bytes())?;
    w.write_all(&[elem as u8])?;
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    match elem {
        ElemType::F32 => {
            for v in values {
                w.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
        ElemType::F64 => {
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads and validates a trace file: magic, version, tag, payload length,
/// and element finiteness (via [`DenseGradient::new`]).
pub fn read_trace(path: &Path) -> Result<Trace> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)
        .map_err(|e| Error::Format(format!("trace header truncated: {e}")))?;
    if header[0..4] != TRACE_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}; not a gradient trace",
            &header[0..4]
        )));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != TRACE_VERSION {
        return Err(Error::Format(format!(
            "unsupported trace version {version} (expected {TRACE_VERSION})"
        )));
    }
    let elem = ElemType::from_tag(header[6])?;
    let dim = u64::from_le_bytes(header[7..15].try_into().expect("8 bytes"));
    let expected = (dim as usize)
        .checked_mul(elem.size())
        .ok_or_else(|| Error::Format(format!("dimension {dim} overflows payload size")))?;

    // Read whatever is there, then check the length: a corrupt header must
    // not drive a huge up-front allocation.
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload is {} bytes, expected {expected} for dim {dim}",
            payload.len()
        )));
    }

    let values: Vec<f64> = match elem {
        ElemType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        ElemType::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
    };
    Ok(Trace {
        gradient: DenseGradient::new(values)?,
        elem,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = tempfile::tempdir().unwrap();
        // Keep the dir alive by leaking it; tests are short-lived.
        let path = dir.path().join(name);
        std::mem::forget(dir);
        path
    }

    #[test]
    fn round_trip_f64_bit_exact() {
        let path = tmp("t.sidg");
        let values = vec![1.5, -2.25, 0.0, 1e-300, f64::MIN_POSITIVE];
        write_trace(&path, &values, ElemType::F64).unwrap();
        let trace = read_trace(&path).unwrap();
        assert_eq!(trace.elem, ElemType::F64);
        let loaded = trace.gradient.as_slice();
        assert_eq!(loaded.len(), values.len());
        for (a, b) in loaded.iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn round_trip_f32_payload_bit_exact() {
        let path = tmp("t32.sidg");
        let values = vec![1.5, -2.25, 0.125, 3.0e7];
        write_trace(&path, &values, ElemType::F32).unwrap();
        let trace = read_trace(&path).unwrap();
        assert_eq!(trace.elem, ElemType::F32);
        for (a, b) in trace.gradient.as_slice().iter().zip(&values) {
            // Widened values equal the f32-narrowed originals exactly.
            assert_eq!((*a as f32).to_bits(), (*b as f32).to_bits());
            assert_eq!(*a, *b as f32 as f64);
        }

        // And the on-disk payload re-serializes to identical bytes.
        let path2 = tmp("t32b.sidg");
        write_trace(&path2, trace.gradient.as_slice(), ElemType::F32).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn rejects_corruption() {
        let path = tmp("bad.sidg");
        write_trace(&path, &[1.0, 2.0], ElemType::F64).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();

        // Bad magic.
        let mut tampered = bytes.clone();
        tampered[0] = b'X';
        std::fs::write(&path, &tampered).unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Format(_))));

        // Bad version.
        tampered = bytes.clone();
        tampered[4] = 9;
        std::fs::write(&path, &tampered).unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Format(_))));

        // Bad tag.
        tampered = bytes.clone();
        tampered[6] = 7;
        std::fs::write(&path, &tampered).unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Format(_))));

        // Truncated payload.
        tampered = bytes.clone();
        tampered.truncate(bytes.len() - 3);
        std::fs::write(&path, &tampered).unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Format(_))));

        // Length mismatch via header dim.
        bytes[7] = 3;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_non_finite_payload() {
        let path = tmp("nan.sidg");
        assert!(write_trace(&path, &[1.0, f64::NAN], ElemType::F64).is_err());
        // The read path must also reject a hand-built non-finite payload.
        let mut f = File::create(&path).unwrap();
        f.write_all(&TRACE_MAGIC).unwrap();
        f.write_all(&TRACE_VERSION.to_le_bytes()).unwrap();
        f.write_all(&[1u8]).unwrap();
        f.write_all(&2u64.to_le_bytes()).unwrap();
        f.write_all(&1.0f64.to_le_bytes()).unwrap();
        f.write_all(&f64::NAN.to_le_bytes()).unwrap();
        drop(f);
        assert!(matches!(read_trace(&path), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_header_rejected() {
        let path = tmp("short.sidg");
        std::fs::write(&path, b"SIDG").unwrap();
        assert!(matches!(read_trace(&path), Err(Error::Format(_))));
    }
}
