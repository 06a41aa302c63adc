//! Binary checkpoint file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   "LFST" (4 bytes)
//! version u32 (currently 1)
//! count   u32 (number of tensor entries)
//! entry*: name_len u16, name UTF-8, rank u8, dims u32 * rank,
//!         payload f32-LE * prod(dims)
//! crc32   u32 over all preceding bytes (IEEE polynomial)
//! ```
//!
//! The epoch index, validation loss, and architecture fingerprint travel as
//! reserved tensor entries (`__meta.epoch`, `__meta.val_loss`,
//! `__meta.fingerprint` with the u64 hash split into 8 byte-valued floats),
//! so any reader of the container format can still walk the file.

use crate::model::{MultiTaskNet, NetOutputs};
use crate::tensor::{Scalar, Tensor};
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"LFST";
pub const FORMAT_VERSION: u32 = 1;

const META_EPOCH: &str = "__meta.epoch";
const META_VAL_LOSS: &str = "__meta.val_loss";
const META_FINGERPRINT: &str = "__meta.fingerprint";

#[derive(Error, Debug)]
pub enum CheckpointError {
    #[error("bad magic: expected \"LFST\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// A serializable snapshot of model state at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<NamedTensor>,
    pub epoch: u32,
    pub val_loss: f32,
    pub fingerprint: u64,
}

/// CRC-32 (IEEE 802.3, reflected 0xEDB88320), table-driven.
pub fn crc32(bytes: &[u8]) -> u32 {
    static TABLE: std::sync::OnceLock<[u32; 256]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0u32; 256];
        for (i, slot) in t.iter_mut().enumerate() {
            let mut c = i as u32;
            for _ in 0..8 {
                c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
            }
            *slot = c;
        }
        t
    });
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc = table[((crc ^ b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

impl Checkpoint {
    pub fn from_net<F: Scalar>(net: &MultiTaskNet<F>, epoch: u32, val_loss: f32) -> Self {
        let tensors = net
            .state_tensors()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect();
        Self {
            tensors,
            epoch,
            val_loss,
            fingerprint: net.config.fingerprint(),
        }
    }

    /// Installs the stored tensors into a freshly built net of the same
    /// architecture.
    pub fn apply_to<F: Scalar>(&self, net: &mut MultiTaskNet<F>) -> Result<(), CheckpointError> {
        let entries: Vec<(String, Tensor<F>)> = self
            .tensors
            .iter()
            .map(|nt| {
                let data: Vec<F> = nt.data.iter().map(|&v| F::from_f64(v as f64)).collect();
                Tensor::new(nt.shape.clone(), data)
                    .map(|t| (nt.name.clone(), t))
                    .map_err(|e| CheckpointError::Malformed(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        net.load_state(&entries)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut body: Vec<NamedTensor> = self.tensors.clone();
        body.push(NamedTensor {
            name: META_EPOCH.into(),
            shape: vec![1],
            data: vec![self.epoch as f32],
        });
        body.push(NamedTensor {
            name: META_VAL_LOSS.into(),
            shape: vec![1],
            data: vec![self.val_loss],
        });
        body.push(NamedTensor {
            name: META_FINGERPRINT.into(),
            shape: vec![8],
            data: self.fingerprint.to_le_bytes().iter().map(|&b| b as f32).collect(),
        });

        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        for t in &body {
            let name = t.name.as_bytes();
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize, what: &str| -> Result<&[u8], CheckpointError> {
            if *pos + n > bytes.len() {
                return Err(CheckpointError::TruncatedFile(format!(
                    "{what} needs {n} bytes at offset {pos}, file has {}",
                    bytes.len()
                )));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };

        let magic = take(&mut pos, 4, "magic")?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32::from_le_bytes(take(&mut pos, 4, "version")?.try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = u32::from_le_bytes(take(&mut pos, 4, "tensor count")?.try_into().unwrap());

        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = u16::from_le_bytes(take(&mut pos, 2, "name length")?.try_into().unwrap()) as usize;
            let name = String::from_utf8(take(&mut pos, name_len, "name")?.to_vec())
                .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?;
            let rank = take(&mut pos, 1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(take(&mut pos, 4, "dim")?.try_into().unwrap()) as usize);
            }
            let numel: usize = shape.iter().product();
            let payload = take(&mut pos, numel * 4, "tensor payload")?;
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }

        let body_end = pos;
        let stored = u32::from_le_bytes(take(&mut pos, 4, "crc32")?.try_into().unwrap());
        let computed = crc32(&bytes[..body_end]);
        if stored != computed {
            return Err(CheckpointError::ChecksumMismatch { stored, computed });
        }

        let mut epoch = 0u32;
        let mut val_loss = f32::INFINITY;
        let mut fingerprint = 0u64;
        let mut rest = Vec::new();
        for t in tensors {
            match t.name.as_str() {
                META_EPOCH => epoch = t.data.first().copied().unwrap_or(0.0) as u32,
                META_VAL_LOSS => val_loss = t.data.first().copied().unwrap_or(f32::INFINITY),
                META_FINGERPRINT => {
                    if t.data.len() != 8 {
                        return Err(CheckpointError::Malformed("fingerprint entry must hold 8 bytes".into()));
                    }
                    let mut b = [0u8; 8];
                    for (i, &v) in t.data.iter().enumerate() {
                        b[i] = v as u8;
                    }
                    fingerprint = u64::from_le_bytes(b);
                }
                _ => rest.push(t),
            }
        }
        Ok(Self {
            tensors: rest,
            epoch,
            val_loss,
            fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let bytes = self.encode();
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path)?;
        Self::decode(&bytes)
    }
}

/// Eval-mode forward through a checkpointed f32 net (convenience for the
/// evaluate/embed paths).
pub fn forward_checkpointed(
    net: &MultiTaskNet<f32>,
    x: &Tensor<f32>,
) -> Result<NetOutputs<f32>, crate::model::ModelError> {
    net.forward_eval(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_checkpoint() -> Checkpoint {
        Checkpoint {
            tensors: vec![
                NamedTensor {
                    name: "a.weight".into(),
                    shape: vec![2, 3],
                    data: vec![1.0, -2.5, 3.25, 0.0, 5.5, -0.125],
                },
                NamedTensor {
                    name: "a.bias".into(),
                    shape: vec![2],
                    data: vec![0.5, -0.5],
                },
            ],
            epoch: 17,
            val_loss: 0.4375,
            fingerprint: 0xDEAD_BEEF_CAFE_F00D,
        }
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let cp = sample_checkpoint();
        let bytes = cp.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back.epoch, cp.epoch);
        assert_eq!(back.val_loss.to_bits(), cp.val_loss.to_bits());
        assert_eq!(back.fingerprint, cp.fingerprint);
        assert_eq!(back.tensors.len(), cp.tensors.len());
        for (a, b) in back.tensors.iter().zip(&cp.tensors) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.shape, b.shape);
            let ab: Vec<u32> = a.data.iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        // Re-encoding is byte-identical.
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn wrong_magic_rejected() {
        let mut bytes = sample_checkpoint().encode();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn unsupported_version_rejected() {
        let mut bytes = sample_checkpoint().encode();
        bytes[4] = 99;
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(CheckpointError::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn truncated_payload_rejected() {
        let bytes = sample_checkpoint().encode();
        let cut = &bytes[..bytes.len() - 9];
        assert!(matches!(
            Checkpoint::decode(cut),
            Err(CheckpointError::TruncatedFile(_))
        ));
    }

    #[test]
    fn corrupted_payload_fails_crc() {
        let mut bytes = sample_checkpoint().encode();
        // Flip a bit inside the last tensor payload (just before the CRC) so
        // the entry structure still parses and the checksum must catch it.
        let idx = bytes.len() - 8;
        bytes[idx] ^= 0x40;
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(CheckpointError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn crc32_known_vector() {
        // Standard test vector: CRC-32("123456789") = 0xCBF43926.
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn net_snapshot_roundtrips_through_file() {
        use crate::model::{build_model, ArchConfig, TaskMode};
        let cfg = ArchConfig {
            mode: TaskMode::MultiTask,
            input_size: 16,
            stage_widths: vec![8, 16],
            blocks_per_stage: 1,
        };
        let mut rng = crate::rng::RngStream::new(21, 0);
        let net = build_model::<f32>(&cfg, &mut rng).unwrap();
        let cp = Checkpoint::from_net(&net, 3, 1.25);
        let dir = std::env::temp_dir().join("leafnet_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.lfst");
        cp.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, cp);

        let mut rng2 = crate::rng::RngStream::new(99, 0);
        let mut net2 = build_model::<f32>(&cfg, &mut rng2).unwrap();
        loaded.apply_to(&mut net2).unwrap();
        for ((_, a), (_, b)) in net.state_tensors().iter().zip(net2.state_tensors()) {
            let ab: Vec<u32> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }
}
