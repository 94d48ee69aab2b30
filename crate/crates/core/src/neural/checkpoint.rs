//! Binary model checkpoints.
//!
//! Layout, little-endian:
//! `b"PTANNCK1"`, u32 header length, JSON header (model kind, layer list,
//! normaliser, label box, boresights, training power), u64 parameter count,
//! parameters as f64, u64 buffer count, buffers as f64.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{LayerSpec, Sequential};
use super::{LabelBox, LearnedModel, ModelKind, Normalizer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"PTANNCK1";

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelKind,
    layers: Vec<LayerSpec>,
    input_norm: Normalizer,
    labels: LabelBox,
    boresights: [f64; 2],
    tx_power_dbm: Option<f64>,
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn write_model<T: Scalar, W: Write>(m: &LearnedModel<T>, mut w: W) -> Result<()> {
    let header = Header {
        model: m.kind.clone(),
        layers: m.net.layers.clone(),
        input_norm: m.input_norm.clone(),
        labels: m.labels,
        boresights: m.boresights,
        tx_power_dbm: m.tx_power_dbm,
    };
    let json = serde_json::to_vec(&header).map_err(|e| format_err(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for block in [&m.net.params, &m.net.buffers] {
        w.write_all(&(block.len() as u64).to_le_bytes())?;
        for v in block.iter() {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n.checked_mul(8).ok_or_else(|| format_err("array too large"))?];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_model<T: Scalar, R: Read>(mut r: R) -> Result<LearnedModel<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(format_err("not a model checkpoint"));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let h: Header = serde_json::from_slice(&json).map_err(|e| format_err(e.to_string()))?;
    if h.layers != h.model.layers()? {
        return Err(format_err("layer list does not match the model spec"));
    }
    let mut net: Sequential<T> = Sequential::new(h.model.input_shape(), h.layers)?;
    let np = read_u64(&mut r)? as usize;
    if np != net.params.len() {
        return Err(format_err(format!("{np} parameters stored, spec needs {}", net.params.len())));
    }
    net.params = read_array(&mut r, np)?.into_iter().map(T::lit).collect();
    let nb = read_u64(&mut r)? as usize;
    if nb != net.buffers.len() {
        return Err(format_err(format!("{nb} buffers stored, spec needs {}", net.buffers.len())));
    }
    net.buffers = read_array(&mut r, nb)?.into_iter().map(T::lit).collect();
    if h.input_norm.dim() != net.input.size() {
        return Err(format_err("normaliser does not match the input shape"));
    }
    Ok(LearnedModel {
        kind: h.model,
        net,
        input_norm: h.input_norm,
        labels: h.labels,
        boresights: h.boresights,
        tx_power_dbm: h.tx_power_dbm,
    })
}

pub fn save<T: Scalar>(m: &LearnedModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_model(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<LearnedModel<T>> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::super::MlpSpec;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> LearnedModel<f64> {
        let kind = ModelKind::Mlp(MlpSpec { hidden: [5, 3], ..Default::default() });
        let mut net: Sequential<f64> = kind.build().unwrap();
        net.init(&mut ChaCha8Rng::seed_from_u64(4));
        LearnedModel {
            kind,
            net,
            input_norm: Normalizer { shift: vec![0.1, 150.0, -0.2, 160.0], scale: vec![0.5, 40.0, 0.6, 41.0], group_len: 1 },
            labels: LabelBox { center: [115.0, 0.0], half: [115.0, 100.0] },
            boresights: [4.18, 2.09],
            tx_power_dbm: Some(52.0),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let mut bytes = Vec::new();
        write_model(&m, &mut bytes).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        let back: LearnedModel<f64> = read_model(bytes.as_slice()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let m = model();
        let mut bytes = Vec::new();
        write_model(&m, &mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(read_model::<f64, _>(bad.as_slice()), Err(Error::Format(_))));
        let short = &bytes[..bytes.len() - 3];
        assert!(read_model::<f64, _>(short).is_err());
    }

    #[test]
    fn file_round_trip_through_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ck");
        let m = model();
        save(&m, &path).unwrap();
        let back: LearnedModel<f32> = load(&path).unwrap();
        let x = [0.2, 170.0, -0.1, 150.0];
        let a = m.predict_raw(&x, 1).unwrap()[0];
        let b = back.predict_raw(&x.map(|v| v as f32), 1).unwrap()[0];
        assert!(a.distance(b) < 1e-3);
    }
}
