//! Binary layout, all integers little-endian:
//!
//! ```text
//! "MLANETCK" | u32 version | u64 header length | JSON header
//! | u64 value count | f64 values | SHA-256 of everything before it
//! ```
//!
//! The values are the parameters in manifest order, followed by the AdamW
//! first and second moments when the header carries a training block.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::model::{MlaNet, ModelConfig, Normalization, ParamEntry};
use crate::train::{AdamW, TrainConfig, TrainProgress, Trainer};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MLANETCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

/// Data-order randomness is a pure function of the seed and the epoch, so
/// the seed and the next epoch's stream id are the whole RNG state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub config: TrainConfig,
    pub progress: TrainProgress,
    /// Hyperparameters and step count; the moments live in the blob.
    pub optimizer: AdamW,
    pub rng: RngState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model: ModelConfig,
    pub hidden_irreps: String,
    pub manifest: Vec<ParamEntry>,
    pub normalization: Normalization,
    pub training: Option<TrainingState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
    /// AdamW `(m, v)`, present with a training block.
    pub moments: Option<(Vec<f64>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn from_model(model: &MlaNet) -> Self {
        Checkpoint {
            header: CheckpointHeader {
                format_version: CHECKPOINT_VERSION,
                model: model.config().clone(),
                hidden_irreps: model.config().hidden_irreps.to_string(),
                manifest: model.params().manifest(),
                normalization: model.normalization.clone(),
                training: None,
            },
            params: model.params().flatten(),
            moments: None,
        }
    }

    pub fn from_trainer(t: &Trainer) -> Self {
        let mut c = Self::from_model(&t.model);
        c.header.training = Some(TrainingState {
            config: t.config.clone(),
            progress: t.progress.clone(),
            optimizer: t.optimizer.clone(),
            rng: RngState {
                seed: t.config.seed,
                stream: t.progress.epoch as u64 + 1,
            },
        });
        c.moments = Some(t.optimizer.moments());
        c
    }

    /// Rebuilds the model; parameters and normalization come from the file.
    pub fn to_model(&self) -> Result<MlaNet> {
        let h = &self.header;
        if h.hidden_irreps != h.model.hidden_irreps.to_string() {
            return Err(Error::Checkpoint(format!(
                "hidden irreps {:?} disagree with the stored config {}",
                h.hidden_irreps, h.model.hidden_irreps
            )));
        }
        let mut model = MlaNet::new(h.model.clone(), 0)?;
        model.params_mut().load_flat(&h.manifest, &self.params)?;
        if h.normalization.e0.len() != model.species_index().len() {
            return Err(Error::Checkpoint(format!(
                "{} reference energies for {} species",
                h.normalization.e0.len(),
                model.species_index().len()
            )));
        }
        model.normalization = h.normalization.clone();
        Ok(model)
    }

    pub fn to_trainer(&self) -> Result<Trainer> {
        let state = self
            .header
            .training
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no training state".into()))?;
        let (m, v) = self
            .moments
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no optimizer moments".into()))?;
        let model = self.to_model()?;
        let mut trainer = Trainer::new(model, state.config.clone())?;
        let mut opt = AdamW::new(trainer.model.params(), state.optimizer.weight_decay);
        opt.beta1 = state.optimizer.beta1;
        opt.beta2 = state.optimizer.beta2;
        opt.eps = state.optimizer.eps;
        opt.step = state.optimizer.step;
        opt.set_moments(m, v)?;
        trainer.optimizer = opt;
        trainer.progress = state.progress.clone();
        Ok(trainer)
    }
}

pub fn encode_checkpoint(c: &Checkpoint) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&c.header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut values = c.params.clone();
    match (&c.header.training, &c.moments) {
        (Some(_), Some((m, v))) => {
            values.extend_from_slice(m);
            values.extend_from_slice(v);
        }
        (None, None) => {}
        _ => return Err(Error::Checkpoint("training block and moments must come together".into())),
    }
    let mut out = Vec::with_capacity(8 + 4 + 8 + header.len() + 8 + 8 * values.len() + DIGEST_LEN);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&c.header.format_version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for x in &values {
        out.extend_from_slice(&x.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint(format!("file ends inside the {what}")))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

fn u64_at(bytes: &[u8], at: &mut usize, what: &str) -> Result<usize> {
    let b = take(bytes, at, 8, what)?;
    let v = u64::from_le_bytes(b.try_into().expect("8 bytes"));
    usize::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} too large")))
}

/// Checks magic and version, then the checksum, and only then parses the
/// header and values.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut at = 0;
    if take(bytes, &mut at, 8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut at, 4, "version")?.try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    if bytes.len() < at + DIGEST_LEN {
        return Err(Error::Checkpoint("file ends before the checksum".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(Error::Checkpoint("checksum mismatch: file is corrupted".into()));
    }
    let header_len = u64_at(body, &mut at, "header length")?;
    let header: CheckpointHeader = serde_json::from_slice(take(body, &mut at, header_len, "header")?)
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    if header.format_version != version {
        return Err(Error::Checkpoint("header version disagrees with the file version".into()));
    }
    let count = u64_at(body, &mut at, "value count")?;
    let raw = take(body, &mut at, count.checked_mul(8).unwrap_or(usize::MAX), "values")?;
    if at != body.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - at)));
    }
    let values: Vec<f64> = raw
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
        .collect();
    let n_params: usize = header.manifest.iter().map(|e| e.shape.iter().product::<usize>()).sum();
    let expected = if header.training.is_some() { 3 * n_params } else { n_params };
    if values.len() != expected {
        return Err(Error::Checkpoint(format!("{} stored values, manifest implies {expected}", values.len())));
    }
    let params = values[..n_params].to_vec();
    let moments = header
        .training
        .as_ref()
        .map(|_| (values[n_params..2 * n_params].to_vec(), values[2 * n_params..].to_vec()));
    Ok(Checkpoint {
        header,
        params,
        moments,
    })
}

fn read(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

pub fn save_model(model: &MlaNet, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(&Checkpoint::from_model(model))?)
}

/// Model, optimizer moments and progress, enough to resume exactly.
pub fn save_trainer(trainer: &Trainer, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(&Checkpoint::from_trainer(trainer))?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MlaNet> {
    read(path.as_ref())?.to_model()
}

/// Loads only if the stored architecture equals `expected`.
pub fn load_model_matching(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<MlaNet> {
    let c = read(path.as_ref())?;
    if &c.header.model != expected {
        let show = |m: &ModelConfig| serde_json::to_string(m).unwrap_or_else(|_| format!("{m:?}"));
        return Err(Error::Checkpoint(format!(
            "architecture mismatch: expected {}, checkpoint has {}",
            show(expected),
            show(&c.header.model)
        )));
    }
    c.to_model()
}

pub fn load_trainer(path: impl AsRef<Path>) -> Result<Trainer> {
    read(path.as_ref())?.to_trainer()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::AtomicStructure;

    fn model() -> MlaNet {
        let cfg = ModelConfig::small(&[1, 8], "4x0e+2x1o").unwrap();
        let mut m = MlaNet::new(cfg, 3).unwrap();
        m.normalization.e0 = vec![-0.5, -75.0];
        m.normalization.energy_scale = 0.3;
        m
    }

    fn water() -> AtomicStructure {
        AtomicStructure::new(vec![[0.0; 3], [0.96, 0.0, 0.0], [-0.24, 0.93, 0.0]], vec![8, 1, 1]).unwrap()
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let m = model();
        let back = decode_checkpoint(&encode_checkpoint(&Checkpoint::from_model(&m)).unwrap())
            .unwrap()
            .to_model()
            .unwrap();
        assert_eq!(back.params(), m.params());
        assert_eq!(back.predict(&water()).unwrap(), m.predict(&water()).unwrap());
    }

    #[test]
    fn any_flipped_byte_is_rejected() {
        let bytes = encode_checkpoint(&Checkpoint::from_model(&model())).unwrap();
        for pos in [0, 9, 20, bytes.len() / 2, bytes.len() - 40, bytes.len() - 1] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x10;
            assert!(matches!(decode_checkpoint(&bad), Err(Error::Checkpoint(_))), "byte {pos}");
        }
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn version_is_checked_first() {
        let mut bytes = encode_checkpoint(&Checkpoint::from_model(&model())).unwrap();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        let err = decode_checkpoint(&bytes).unwrap_err().to_string();
        assert!(err.contains("version 7"), "{err}");
    }

    #[test]
    fn mismatched_architecture_lists_both() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_model(&model(), &p).unwrap();
        let other = ModelConfig::small(&[1, 8], "8x0e+2x1o").unwrap();
        let err = load_model_matching(&p, &other).unwrap_err().to_string();
        assert!(err.contains("8x0e+2x1o") && err.contains("4x0e+2x1o"), "{err}");
        assert!(load_model_matching(&p, model().config()).is_ok());
    }
}
