//! Binary dump of received signals.
//!
//! File: `b"PTASIG01"` then records. Record, little-endian: config hash
//! u64, rx_index u8, p_true x and y f64, seed u64, N_c u32, then N_c
//! interleaved (re, im) f32 pairs.

use std::io::{ErrorKind, Read, Write};

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::geometry::Position2D;

pub const MAGIC: &[u8; 8] = b"PTASIG01";

#[derive(Clone, Debug, PartialEq)]
pub struct SignalRecord {
    pub config_hash: u64,
    pub rx_index: u8,
    pub p_true: Position2D<f64>,
    pub seed: u64,
    pub y: Vec<Complex<f32>>,
}

pub fn write_header<W: Write>(mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    Ok(())
}

pub fn write_record<W: Write>(mut w: W, r: &SignalRecord) -> Result<()> {
    let mut buf = Vec::with_capacity(33 + 8 * r.y.len());
    buf.extend_from_slice(&r.config_hash.to_le_bytes());
    buf.push(r.rx_index);
    buf.extend_from_slice(&r.p_true.x.to_le_bytes());
    buf.extend_from_slice(&r.p_true.y.to_le_bytes());
    buf.extend_from_slice(&r.seed.to_le_bytes());
    buf.extend_from_slice(&(r.y.len() as u32).to_le_bytes());
    for c in &r.y {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads all records, checking the magic and, if given, the config hash.
pub fn read_all<R: Read>(mut r: R, expect_hash: Option<u64>) -> Result<Vec<SignalRecord>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a signal dump".into()));
    }
    let mut out = Vec::new();
    loop {
        let mut head = [0u8; 37];
        match r.read_exact(&mut head[..1]) {
            Ok(()) => {}
            Err(e) if e.kind() == ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        r.read_exact(&mut head[1..])?;
        let u64_at = |k: usize| u64::from_le_bytes(head[k..k + 8].try_into().unwrap());
        let config_hash = u64_at(0);
        if let Some(h) = expect_hash {
            if h != config_hash {
                return Err(Error::Format(format!("config hash {config_hash:016x} does not match {h:016x}")));
            }
        }
        let rx_index = head[8];
        let p_true = Position2D::new(f64::from_bits(u64_at(9)), f64::from_bits(u64_at(17)));
        let seed = u64_at(25);
        let n = u32::from_le_bytes(head[33..37].try_into().unwrap()) as usize;
        let mut payload = vec![0u8; 8 * n];
        r.read_exact(&mut payload)?;
        let y = payload
            .chunks_exact(8)
            .map(|b| Complex::new(f32::from_le_bytes(b[..4].try_into().unwrap()), f32::from_le_bytes(b[4..].try_into().unwrap())))
            .collect();
        out.push(SignalRecord { config_hash, rx_index, p_true, seed, y });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: u64) -> SignalRecord {
        SignalRecord {
            config_hash: 0xfeed_beef,
            rx_index: (k % 2) as u8 + 1,
            p_true: Position2D::new(10.5 + k as f64, -3.25),
            seed: k * 17,
            y: (0..5).map(|m| Complex::new(m as f32 * 0.5, -(k as f32))).collect(),
        }
    }

    #[test]
    fn round_trip() {
        let mut buf = Vec::new();
        write_header(&mut buf).unwrap();
        for k in 0..3 {
            write_record(&mut buf, &rec(k)).unwrap();
        }
        assert_eq!(buf.len(), 8 + 3 * (37 + 40));
        let back = read_all(buf.as_slice(), Some(0xfeed_beef)).unwrap();
        assert_eq!(back, (0..3).map(rec).collect::<Vec<_>>());
        assert!(read_all(buf.as_slice(), Some(1)).is_err());
        assert!(read_all(&buf[..buf.len() - 1], None).is_err());
    }
}
