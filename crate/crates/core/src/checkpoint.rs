//! Binary checkpoint format.
//!
//! Layout, little-endian throughout:
//!   magic "SSLE" | version u32 | kind tag (u32 length + UTF-8) |
//!   tensor count u32 | per tensor: name (u32 length + UTF-8), rank u32,
//!   dims u32 each, payload f32 row-major | CRC-32 of all preceding bytes.
//!
//! Values are stored single-precision; models train in f64 and narrow on
//! save, so load(save(m)) yields the f32-rounded parameters and a second
//! save reproduces the file byte for byte. Training metadata (step, seed,
//! config hash, model geometry) travels as reserved `meta/...` tensors whose
//! integer payloads are split into 16-bit chunks, which f32 carries exactly.

use alloc::string::String;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::dsp::FeatureKind;
use crate::graph::{GraphError, ParamSet};
use crate::models::ModelConfig;
use crate::optim::AdamState;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"SSLE";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum CheckpointError {
    BadMagic,
    UnsupportedVersion(u32),
    Truncated,
    CrcMismatch { stored: u32, computed: u32 },
    DuplicateTensor(String),
    BadUtf8,
    KindMismatch { expected: String, got: String },
    MissingTensor(String),
    TensorShape { name: String, expected: Vec<usize>, got: Vec<usize> },
    Graph(GraphError),
}

impl core::fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CheckpointError::BadMagic => write!(f, "not a checkpoint: bad magic bytes"),
            CheckpointError::UnsupportedVersion(v) => write!(f, "unsupported format version {v}"),
            CheckpointError::Truncated => write!(f, "checkpoint truncated"),
            CheckpointError::CrcMismatch { stored, computed } => {
                write!(f, "CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")
            }
            CheckpointError::DuplicateTensor(n) => write!(f, "duplicate tensor '{n}'"),
            CheckpointError::BadUtf8 => write!(f, "invalid UTF-8 in checkpoint string"),
            CheckpointError::KindMismatch { expected, got } => {
                write!(f, "model kind mismatch: expected '{expected}', file holds '{got}'")
            }
            CheckpointError::MissingTensor(n) => write!(f, "missing tensor '{n}'"),
            CheckpointError::TensorShape { name, expected, got } => {
                write!(f, "tensor '{name}': expected shape {expected:?}, got {got:?}")
            }
            CheckpointError::Graph(e) => write!(f, "{e}"),
        }
    }
}

impl From<GraphError> for CheckpointError {
    fn from(e: GraphError) -> Self {
        CheckpointError::Graph(e)
    }
}

/// CRC-32 (IEEE 802.3, reflected 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, t) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *t = c;
    }
    let mut crc = 0xFFFF_FFFFu32;
    for b in bytes {
        crc = table[((crc ^ *b as u32) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ 0xFFFF_FFFF
}

/// In-memory checkpoint: a kind tag and named f32-precision tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub tensors: Vec<(String, Tensor)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub step: u64,
    pub seed: u64,
    pub config_hash: u32,
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    push_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        push_u32(&mut out, VERSION);
        push_str(&mut out, &self.kind);
        push_u32(&mut out, self.tensors.len() as u32);
        for (name, tensor) in &self.tensors {
            push_str(&mut out, name);
            push_u32(&mut out, tensor.shape().len() as u32);
            for d in tensor.shape() {
                push_u32(&mut out, *d as u32);
            }
            for v in tensor.data() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let crc = crc32(&out);
        push_u32(&mut out, crc);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 + 4 + 4 {
            return Err(CheckpointError::Truncated);
        }
        if &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let body = &bytes[..bytes.len() - 4];
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
        let computed = crc32(body);
        if stored != computed {
            return Err(CheckpointError::CrcMismatch { stored, computed });
        }

        let mut pos = 4usize;
        let take_u32 = |pos: &mut usize| -> Result<u32, CheckpointError> {
            if *pos + 4 > body.len() {
                return Err(CheckpointError::Truncated);
            }
            let v = u32::from_le_bytes(body[*pos..*pos + 4].try_into().unwrap());
            *pos += 4;
            Ok(v)
        };
        let take_str = |pos: &mut usize| -> Result<String, CheckpointError> {
            let len = take_u32(pos)? as usize;
            if *pos + len > body.len() {
                return Err(CheckpointError::Truncated);
            }
            let s = core::str::from_utf8(&body[*pos..*pos + len])
                .map_err(|_| CheckpointError::BadUtf8)?
                .to_string();
            *pos += len;
            Ok(s)
        };

        let version = take_u32(&mut pos)?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let kind = take_str(&mut pos)?;
        let count = take_u32(&mut pos)? as usize;
        let mut tensors: Vec<(String, Tensor)> = Vec::with_capacity(count);
        for _ in 0..count {
            let name = take_str(&mut pos)?;
            if tensors.iter().any(|(n, _)| *n == name) {
                return Err(CheckpointError::DuplicateTensor(name));
            }
            let rank = take_u32(&mut pos)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(take_u32(&mut pos)? as usize);
            }
            let n: usize = shape.iter().product();
            if pos + 4 * n > body.len() {
                return Err(CheckpointError::Truncated);
            }
            let mut data = Vec::with_capacity(n);
            for i in 0..n {
                let v = f32::from_le_bytes(body[pos + 4 * i..pos + 4 * i + 4].try_into().unwrap());
                data.push(v as f64);
            }
            pos += 4 * n;
            tensors.push((name, Tensor::from_vec(&shape, data).expect("decoded shape")));
        }
        if pos != body.len() {
            return Err(CheckpointError::Truncated);
        }
        Ok(Checkpoint { kind, tensors })
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn u64_tensor(v: u64) -> Tensor {
    let chunks: Vec<f64> = (0..4).map(|i| ((v >> (16 * i)) & 0xFFFF) as f64).collect();
    Tensor::from_vec(&[4], chunks).unwrap()
}

fn tensor_u64(t: &Tensor) -> u64 {
    t.data()
        .iter()
        .enumerate()
        .map(|(i, v)| ((*v as u64) & 0xFFFF) << (16 * i))
        .sum()
}

fn config_tensor(c: &ModelConfig) -> Tensor {
    let kind = match c.feature_kind {
        FeatureKind::LogMagnitude => 0.0,
        FeatureKind::Mfcc => 1.0,
    };
    Tensor::from_vec(
        &[10],
        [
            kind,
            c.input_dim as f64,
            c.output_dim as f64,
            c.latent_dim as f64,
            c.kernel as f64,
            c.n_mels as f64,
            c.n_mfcc as f64,
            c.sample_rate as f64,
            c.frame_size as f64,
            c.hop as f64,
        ]
        .to_vec(),
    )
    .unwrap()
}

fn tensor_config(t: &Tensor) -> Result<ModelConfig, CheckpointError> {
    let d = t.data();
    if d.len() != 10 {
        return Err(CheckpointError::TensorShape {
            name: "meta/config".to_string(),
            expected: [10].to_vec(),
            got: t.shape().to_vec(),
        });
    }
    Ok(ModelConfig {
        feature_kind: if d[0] == 0.0 { FeatureKind::LogMagnitude } else { FeatureKind::Mfcc },
        input_dim: d[1] as usize,
        output_dim: d[2] as usize,
        latent_dim: d[3] as usize,
        kernel: d[4] as usize,
        n_mels: d[5] as usize,
        n_mfcc: d[6] as usize,
        sample_rate: d[7] as u32,
        frame_size: d[8] as usize,
        hop: d[9] as usize,
    })
}

/// Assemble a checkpoint from a model's parameters, optimizer state and
/// metadata. Tensor order: parameters in registration order, Adam moments,
/// then `meta/...` entries.
pub fn build_checkpoint(
    kind: &str,
    params: &ParamSet,
    adam: Option<&AdamState>,
    meta: &CheckpointMeta,
    config: &ModelConfig,
) -> Checkpoint {
    let mut tensors = Vec::new();
    for (_, p) in params.iter() {
        tensors.push((p.name.clone(), p.value.clone()));
    }
    if let Some(st) = adam {
        for (id, p) in params.iter() {
            tensors.push((alloc::format!("adam.m.{}", p.name), st.moment_m(id).clone()));
        }
        for (id, p) in params.iter() {
            tensors.push((alloc::format!("adam.v.{}", p.name), st.moment_v(id).clone()));
        }
        tensors.push(("meta/adam_t".to_string(), u64_tensor(st.t)));
    }
    tensors.push(("meta/step".to_string(), u64_tensor(meta.step)));
    tensors.push(("meta/seed".to_string(), u64_tensor(meta.seed)));
    tensors.push(("meta/config_hash".to_string(), u64_tensor(meta.config_hash as u64)));
    tensors.push(("meta/config".to_string(), config_tensor(config)));
    Checkpoint { kind: kind.to_string(), tensors }
}

/// Extracted model state: parameters loaded into `params`, plus whatever
/// optimizer state and metadata the file carried.
pub struct RestoredState {
    pub adam: Option<AdamState>,
    pub meta: CheckpointMeta,
    pub config: ModelConfig,
}

/// Load parameter values (f32-rounded) into an already-constructed set with
/// matching names and shapes, and recover optimizer state and metadata.
pub fn restore_params(
    ck: &Checkpoint,
    params: &mut ParamSet,
    lr: f64,
) -> Result<RestoredState, CheckpointError> {
    for id in params.ids().collect::<Vec<_>>() {
        let name = params.name(id).to_string();
        let stored = ck
            .tensor(&name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.clone()))?;
        if stored.shape() != params.value(id).shape() {
            return Err(CheckpointError::TensorShape {
                name,
                expected: params.value(id).shape().to_vec(),
                got: stored.shape().to_vec(),
            });
        }
        *params.value_mut(id) = stored.clone();
    }
    let adam = if ck.tensor("meta/adam_t").is_some() {
        let mut st = AdamState::new(params, lr);
        st.t = tensor_u64(ck.tensor("meta/adam_t").unwrap());
        for id in params.ids().collect::<Vec<_>>() {
            let name = params.name(id).to_string();
            let m = ck
                .tensor(&alloc::format!("adam.m.{name}"))
                .ok_or_else(|| CheckpointError::MissingTensor(alloc::format!("adam.m.{name}")))?;
            let v = ck
                .tensor(&alloc::format!("adam.v.{name}"))
                .ok_or_else(|| CheckpointError::MissingTensor(alloc::format!("adam.v.{name}")))?;
            let (dst_m, dst_v) = st.moments_mut(id);
            *dst_m = m.clone();
            *dst_v = v.clone();
        }
        Some(st)
    } else {
        None
    };
    let meta = CheckpointMeta {
        step: ck
            .tensor("meta/step")
            .map(tensor_u64)
            .ok_or_else(|| CheckpointError::MissingTensor("meta/step".to_string()))?,
        seed: ck
            .tensor("meta/seed")
            .map(tensor_u64)
            .ok_or_else(|| CheckpointError::MissingTensor("meta/seed".to_string()))?,
        config_hash: ck
            .tensor("meta/config_hash")
            .map(|t| tensor_u64(t) as u32)
            .ok_or_else(|| CheckpointError::MissingTensor("meta/config_hash".to_string()))?,
    };
    let config = tensor_config(
        ck.tensor("meta/config")
            .ok_or_else(|| CheckpointError::MissingTensor("meta/config".to_string()))?,
    )?;
    Ok(RestoredState { adam, meta, config })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::FeatureKind;

    #[test]
    fn crc32_known_vector() {
        // Standard test vector: CRC-32("123456789") = 0xCBF43926.
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
    }

    fn sample_checkpoint() -> Checkpoint {
        Checkpoint {
            kind: "pae".to_string(),
            tensors: alloc::vec![
                ("w".to_string(), Tensor::from_vec(&[2, 3], alloc::vec![1.0, -2.5, 3.25, 0.0, 4.0, -0.125]).unwrap()),
                ("b".to_string(), Tensor::from_vec(&[3], alloc::vec![0.5, 0.25, -1.0]).unwrap()),
            ],
        }
    }

    #[test]
    fn encode_decode_round_trip() {
        let ck = sample_checkpoint();
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        // Stable bytes on re-encode.
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let mut bytes = sample_checkpoint().encode();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bytes), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn corrupted_payload_fails_crc() {
        let mut bytes = sample_checkpoint().encode();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x55;
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(CheckpointError::CrcMismatch { .. })
        ));
    }

    #[test]
    fn truncation_rejected() {
        let bytes = sample_checkpoint().encode();
        // Any prefix must fail (either truncated or CRC).
        let cut = &bytes[..bytes.len() - 9];
        assert!(Checkpoint::decode(cut).is_err());
    }

    #[test]
    fn u64_chunking_round_trips() {
        for v in [0u64, 1, 0xFFFF, 0x1234_5678_9ABC_DEF0, u64::MAX] {
            assert_eq!(tensor_u64(&u64_tensor(v)), v);
        }
    }

    #[test]
    fn model_params_survive_f32_rounding_stably() {
        let config = crate::models::ModelConfig::new(FeatureKind::LogMagnitude, 16_000);
        let pae = crate::models::PaeModel::new(config.clone(), 3).unwrap();
        let meta = CheckpointMeta { step: 17, seed: 3, config_hash: 0xDEAD_BEEF };
        let ck = build_checkpoint("pae", &pae.params, None, &meta, &config);
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        let mut pae2 = crate::models::PaeModel::new(config.clone(), 999).unwrap();
        let restored = restore_params(&back, &mut pae2.params, 1e-3).unwrap();
        assert_eq!(restored.meta, meta);
        assert_eq!(restored.config, config);
        // Loaded values equal the f32 narrowing of the originals, bitwise.
        for (id, p) in pae.params.iter() {
            let loaded = pae2.params.value(pae2.params.find(&p.name).unwrap());
            for (a, b) in p.value.data().iter().zip(loaded.data()) {
                assert_eq!(*a as f32, *b as f32);
                assert_eq!(*b, (*a as f32) as f64);
            }
            let _ = id;
        }
        // Save-of-load is byte-identical.
        let ck2 = build_checkpoint("pae", &pae2.params, None, &meta, &config);
        assert_eq!(ck2.encode(), bytes);
    }
}
