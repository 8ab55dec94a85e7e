//! Binary model checkpoints.
//!
//! Layout: magic `INKM`, format version `u16`, CRC32 of the payload `u32`,
//! payload length `u64`, payload. The payload holds the architecture as
//! JSON, training metadata, then every named tensor as
//! `(name length u32, name, dtype tag u8, rank u8, dims u64..., values f64 LE...)`.
//! Parameters come first in canonical order, then batch-norm running
//! statistics. All integers are little-endian.

use std::fs;
use std::path::Path;

use crate::dataset::ByteReader;
use crate::error::{Error, Result};
use crate::model::{ArchitectureSpec, ModelState};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"INKM";
pub const CHECKPOINT_VERSION: u16 = 1;
const DTYPE_F64: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingMetadata {
    pub epoch: u64,
    pub best_validation_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelState,
    pub metadata: TrainingMetadata,
}

struct NamedTensor {
    name: String,
    dims: Vec<usize>,
    values: Vec<f64>,
}

fn collect_tensors(model: &ModelState) -> Vec<NamedTensor> {
    let mut out: Vec<NamedTensor> = model
        .params()
        .into_iter()
        .map(|p| NamedTensor {
            name: p.name.clone(),
            dims: p.shape().to_vec(),
            values: p.values.clone(),
        })
        .collect();
    for block in &model.conv {
        let ch = block.norm.running_mean.len();
        let base = block.norm.gamma.name.trim_end_matches(".gamma").to_string();
        out.push(NamedTensor {
            name: format!("{base}.running_mean"),
            dims: vec![ch],
            values: block.norm.running_mean.clone(),
        });
        out.push(NamedTensor {
            name: format!("{base}.running_var"),
            dims: vec![ch],
            values: block.norm.running_var.clone(),
        });
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn to_bytes(model: &ModelState, metadata: &TrainingMetadata) -> Result<Vec<u8>> {
    let mut payload = Vec::new();
    let spec = serde_json::to_vec(&model.spec)?;
    put_u32(&mut payload, spec.len());
    payload.extend_from_slice(&spec);
    payload.extend_from_slice(&model.init_seed.to_le_bytes());
    payload.extend_from_slice(&metadata.epoch.to_le_bytes());
    match metadata.best_validation_loss {
        Some(v) => {
            payload.push(1);
            payload.extend_from_slice(&v.to_le_bytes());
        }
        None => payload.push(0),
    }
    let tensors = collect_tensors(model);
    put_u32(&mut payload, tensors.len());
    for t in &tensors {
        put_u32(&mut payload, t.name.len());
        payload.extend_from_slice(t.name.as_bytes());
        payload.push(DTYPE_F64);
        payload.push(t.dims.len() as u8);
        for &d in &t.dims {
            payload.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }

    let mut out = Vec::with_capacity(payload.len() + 18);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    if r.take(4).map_err(|_| Error::Checksum("file too short".into()))? != CHECKPOINT_MAGIC {
        return Err(Error::parse("magic", "not an INKM checkpoint"));
    }
    let version = r.u16().map_err(|_| Error::Checksum("file too short".into()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let header = (|| -> Result<(u32, u64)> { Ok((r.u32()?, r.u64()?)) })()
        .map_err(|_| Error::Checksum("truncated header".into()))?;
    let (crc, len) = header;
    let payload = match r.take(len as usize) {
        Ok(p) if r.is_empty() => p,
        _ => {
            return Err(Error::Checksum(format!(
                "payload length {} does not match declared {len}",
                bytes.len().saturating_sub(18)
            )))
        }
    };
    if crc32fast::hash(payload) != crc {
        return Err(Error::Checksum("CRC32 of payload does not match".into()));
    }

    let mut p = ByteReader::new(payload);
    let spec_len = p.u32()? as usize;
    let spec: ArchitectureSpec = serde_json::from_slice(p.take(spec_len)?)?;
    let init_seed = p.u64()?;
    let epoch = p.u64()?;
    let best_validation_loss = match p.u8()? {
        0 => None,
        _ => Some(p.f64()?),
    };
    let mut model = ModelState::build(&spec, init_seed)?;
    let mut tensors = Vec::new();
    for _ in 0..p.u32()? {
        let name_len = p.u32()? as usize;
        let name = String::from_utf8(p.take(name_len)?.to_vec())
            .map_err(|_| Error::parse("tensor.name", "not UTF-8"))?;
        if p.u8()? != DTYPE_F64 {
            return Err(Error::parse("tensor.dtype", format!("unsupported dtype for `{name}`")));
        }
        let rank = p.u8()? as usize;
        let dims = (0..rank).map(|_| p.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let count: usize = dims.iter().product();
        let values = (0..count).map(|_| p.f64()).collect::<Result<Vec<_>>>()?;
        tensors.push(NamedTensor { name, dims, values });
    }
    if !p.is_empty() {
        return Err(Error::parse("payload", "trailing bytes"));
    }
    assign_tensors(&mut model, tensors)?;
    Ok(Checkpoint {
        model,
        metadata: TrainingMetadata {
            epoch,
            best_validation_loss,
        },
    })
}

fn assign_tensors(model: &mut ModelState, tensors: Vec<NamedTensor>) -> Result<()> {
    let expected = collect_tensors(model);
    if expected.len() != tensors.len() {
        return Err(Error::Shape(format!(
            "checkpoint has {} tensors, architecture needs {}",
            tensors.len(),
            expected.len()
        )));
    }
    for (want, got) in expected.iter().zip(&tensors) {
        if want.name != got.name || want.dims != got.dims {
            return Err(Error::Shape(format!(
                "tensor `{}` {:?} does not match expected `{}` {:?}",
                got.name, got.dims, want.name, want.dims
            )));
        }
    }
    let mut it = tensors.into_iter();
    for p in model.params_mut() {
        p.values = it.next().expect("counted").values;
    }
    for block in &mut model.conv {
        block.norm.running_mean = it.next().expect("counted").values;
        block.norm.running_var = it.next().expect("counted").values;
    }
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ModelState, metadata: &TrainingMetadata) -> Result<()> {
    fs::write(path, to_bytes(model, metadata)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    from_bytes(&fs::read(path)?)
}

/// Loads a checkpoint and checks it was built for `class_count` classes.
pub fn load_for_inference(path: impl AsRef<Path>, class_count: usize) -> Result<ModelState> {
    let ckpt = load_checkpoint(path)?;
    if ckpt.model.class_count() != class_count {
        return Err(Error::Shape(format!(
            "checkpoint has {} classes, expected {class_count}",
            ckpt.model.class_count()
        )));
    }
    Ok(ckpt.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ModelState {
        let mut m = ModelState::build(&ArchitectureSpec::micro(4), 9).unwrap();
        m.conv[0].norm.running_mean = vec![0.1, -0.25, 1.0 / 3.0, 7.0];
        m.dense.bias.values[2] = f64::MIN_POSITIVE;
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let meta = TrainingMetadata {
            epoch: 12,
            best_validation_loss: Some(0.1 + 0.2),
        };
        let back = from_bytes(&to_bytes(&m, &meta).unwrap()).unwrap();
        assert_eq!(back.metadata, meta);
        assert_eq!(back.model, m);
        let a: Vec<u64> = m.params().iter().flat_map(|p| p.values.iter().map(|v| v.to_bits())).collect();
        let b: Vec<u64> = back.model.params().iter().flat_map(|p| p.values.iter().map(|v| v.to_bits())).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn truncated_is_checksum_error() {
        let bytes = to_bytes(&model(), &TrainingMetadata::default()).unwrap();
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::Checksum(_))), "cut {cut}");
        }
    }

    #[test]
    fn flipped_byte_is_checksum_error() {
        let mut bytes = to_bytes(&model(), &TrainingMetadata::default()).unwrap();
        let n = bytes.len();
        bytes[n - 3] ^= 0x40;
        assert!(matches!(from_bytes(&bytes), Err(Error::Checksum(_))));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = to_bytes(&model(), &TrainingMetadata::default()).unwrap();
        bytes[4] = 9;
        assert!(matches!(from_bytes(&bytes), Err(Error::Version { found: 9, expected: 1 })));
    }

    #[test]
    fn class_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.inkm");
        save_checkpoint(&path, &model(), &TrainingMetadata::default()).unwrap();
        assert!(load_for_inference(&path, 4).is_ok());
        assert!(matches!(load_for_inference(&path, 5), Err(Error::Shape(_))));
    }
}
