//! `.jsa` container for [`JsaGrid`].
//!
//! ```text
//! offset  size        field
//! 0       4           magic "JSA1"
//! 4       2           version (u16)
//! 6       2           flags (u16, bit 0 = normalized)
//! 8       4           n_s (u32)
//! 12      4           n_i (u32)
//! 16      8·n_s       signal ω axis, rad/ps (f64)
//! ..      8·n_i       idler ω axis, rad/ps (f64)
//! ..      16·n_s·n_i  amplitude, row-major (signal rows), (re, im) f64 pairs
//! ```
//!
//! Everything little-endian. Generation parameters go into a JSON sidecar
//! written by the caller.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{FrequencyGrid, GridAxis, JsaGrid};
use crate::error::{Error, Result};

pub const JSA_MAGIC: [u8; 4] = *b"JSA1";
pub const JSA_VERSION: u16 = 1;
const FLAG_NORMALIZED: u16 = 1;

pub fn write_jsa<W: Write>(jsa: &JsaGrid, mut sink: W) -> Result<u64> {
    let (ns, ni) = (jsa.n_signal(), jsa.n_idler());
    let mut buf = Vec::with_capacity(16 + 8 * (ns + ni) + 16 * ns * ni);
    buf.extend_from_slice(&JSA_MAGIC);
    buf.extend_from_slice(&JSA_VERSION.to_le_bytes());
    let flags = if jsa.normalized { FLAG_NORMALIZED } else { 0 };
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&(ns as u32).to_le_bytes());
    buf.extend_from_slice(&(ni as u32).to_le_bytes());
    for w in jsa.grid.signal.omegas().into_iter().chain(jsa.grid.idler.omegas()) {
        buf.extend_from_slice(&w.to_le_bytes());
    }
    for a in &jsa.amplitude {
        buf.extend_from_slice(&a.re.to_le_bytes());
        buf.extend_from_slice(&a.im.to_le_bytes());
    }
    sink.write_all(&buf)?;
    Ok(buf.len() as u64)
}

fn read_exact_at<R: Read>(src: &mut R, buf: &mut [u8], offset: &mut u64) -> Result<()> {
    let mut got = 0;
    while got < buf.len() {
        match src.read(&mut buf[got..]) {
            Ok(0) => {
                return Err(Error::Truncated { offset: *offset, needed: buf.len(), found: got });
            }
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    *offset += buf.len() as u64;
    Ok(())
}

fn read_f64s<R: Read>(src: &mut R, n: usize, offset: &mut u64) -> Result<Vec<f64>> {
    let mut raw = vec![0u8; 8 * n];
    read_exact_at(src, &mut raw, offset)?;
    Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn axis_from_points(name: &str, pts: &[f64]) -> Result<GridAxis> {
    let n = pts.len();
    if n < 2 {
        return Err(Error::data(format!("{name} axis has fewer than 2 points")));
    }
    let step = (pts[n - 1] - pts[0]) / (n - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::data(format!("{name} axis is not strictly increasing")));
    }
    for (k, &p) in pts.iter().enumerate() {
        let expect = pts[0] + step * k as f64;
        if (p - expect).abs() > 1e-9 * step.max(p.abs() * 1e-6) {
            return Err(Error::data(format!("{name} axis is not uniform at point {k}")));
        }
    }
    Ok(GridAxis { start: pts[0], step, len: n })
}

pub fn read_jsa<R: Read>(mut source: R) -> Result<JsaGrid> {
    let mut offset = 0u64;
    let mut head = [0u8; 16];
    let mut magic = [0u8; 4];
    read_exact_at(&mut source, &mut magic, &mut offset)?;
    if magic != JSA_MAGIC {
        return Err(Error::BadMagic { found: magic, expected: JSA_MAGIC });
    }
    read_exact_at(&mut source, &mut head[4..], &mut offset)?;
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != JSA_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let flags = u16::from_le_bytes([head[6], head[7]]);
    let ns = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let ni = u32::from_le_bytes(head[12..16].try_into().unwrap()) as usize;
    let sig = read_f64s(&mut source, ns, &mut offset)?;
    let idl = read_f64s(&mut source, ni, &mut offset)?;
    let grid = FrequencyGrid { signal: axis_from_points("signal", &sig)?, idler: axis_from_points("idler", &idl)? };
    let vals = read_f64s(&mut source, 2 * ns * ni, &mut offset)?;
    let amplitude = vals.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    let mut jsa = JsaGrid::new(grid, amplitude)?;
    jsa.normalized = flags & FLAG_NORMALIZED != 0;
    Ok(jsa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spdc::{compute_jsa, CrystalSpec, GridSpec, PumpSpec};

    fn sample() -> JsaGrid {
        let g = FrequencyGrid::from_spec(&GridSpec::default().with_points(12, 9)).unwrap();
        compute_jsa(&PumpSpec::default(), &CrystalSpec::default(), &g).unwrap()
    }

    #[test]
    fn round_trip() {
        let jsa = sample();
        let mut buf = Vec::new();
        let n = write_jsa(&jsa, &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        assert_eq!(buf.len(), 16 + 8 * 21 + 16 * 108);
        let back = read_jsa(buf.as_slice()).unwrap();
        assert!(back.normalized);
        assert_eq!(back.amplitude, jsa.amplitude);
        assert!((back.grid.signal.step - jsa.grid.signal.step).abs() < 1e-12);
    }

    #[test]
    fn truncation_and_magic() {
        let mut buf = Vec::new();
        write_jsa(&sample(), &mut buf).unwrap();
        assert!(matches!(read_jsa(&buf[..buf.len() - 3]), Err(Error::Truncated { .. })));
        buf[0] = b'X';
        assert!(matches!(read_jsa(buf.as_slice()), Err(Error::BadMagic { .. })));
    }
}
