//! Binary archives for training state and sample logs.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header, then a little-endian `f32` payload addressed by element offsets
//! recorded in the header. Archives contain no timestamps, so identical
//! state always serializes to identical bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::TrainingConfig;
use crate::error::{Error, Result};
use crate::image_pipeline::ImageTensor;
use crate::networks::{NetworkId, ParamSet};
use crate::optim::AdamState;
use crate::tensor::Tensor;
use crate::training::{EpochRecord, SampleLog, SampleRecord, TrainState};

const CHECKPOINT_MAGIC: &[u8; 8] = b"GPCKPT\0\0";
const SAMPLES_MAGIC: &[u8; 8] = b"GPSMPL\0\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    /// `u128` as a decimal string; JSON numbers cannot carry it.
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct AdamSteps {
    generator: u64,
    discriminator: u64,
    poisoner: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: TrainingConfig,
    config_hash: String,
    epoch: usize,
    rng: RngState,
    adam_steps: AdamSteps,
    history: Vec<EpochRecord>,
    tensors: Vec<TensorEntry>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

fn write_archive(path: &Path, magic: &[u8; 8], header: &impl Serialize, payload: &[f32]) -> Result<()> {
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut buf = Vec::with_capacity(20 + json.len() + 4 * payload.len());
    buf.extend_from_slice(magic);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in payload {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    // Write then rename so a crash never leaves a truncated archive behind.
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&buf).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_archive<H: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<(H, Vec<f32>)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != magic {
        return Err(corrupt(format!("{}: bad magic", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(corrupt(format!("{}: unsupported version {version}", path.display())));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = &bytes[20..];
    if hlen > body.len() {
        return Err(corrupt(format!("{}: truncated header", path.display())));
    }
    let header: H = serde_json::from_slice(&body[..hlen])
        .map_err(|e| corrupt(format!("{}: header: {e}", path.display())))?;
    let raw = &body[hlen..];
    if raw.len() % 4 != 0 {
        return Err(corrupt(format!("{}: payload is not a whole number of f32", path.display())));
    }
    let payload = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, payload))
}

fn slice_tensor(entry: &TensorEntry, payload: &[f32]) -> Result<Tensor<f32>> {
    let len: usize = entry.shape.iter().product();
    let end = entry.offset.checked_add(len).filter(|&e| e <= payload.len());
    let end = end.ok_or_else(|| corrupt(format!("tensor {} runs past the payload", entry.name)))?;
    Tensor::from_vec(&entry.shape, payload[entry.offset..end].to_vec())
}

struct PayloadWriter {
    entries: Vec<TensorEntry>,
    payload: Vec<f32>,
}

impl PayloadWriter {
    fn push(&mut self, name: String, t: &Tensor<f32>) {
        self.entries.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            offset: self.payload.len(),
        });
        self.payload.extend_from_slice(t.data());
    }

    fn push_set(&mut self, prefix: &str, p: &ParamSet<f32>) {
        for (spec, t) in p.specs().iter().zip(p.tensors()) {
            self.push(format!("{prefix}/{}", spec.name), t);
        }
    }
}

fn read_set(
    prefix: &str,
    id: NetworkId,
    side: usize,
    entries: &[TensorEntry],
    payload: &[f32],
) -> Result<ParamSet<f32>> {
    let tensors = crate::networks::architecture(id, side)
        .iter()
        .map(|spec| {
            let name = format!("{prefix}/{}", spec.name);
            let entry = entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| corrupt(format!("missing tensor {name}")))?;
            slice_tensor(entry, payload)
        })
        .collect::<Result<Vec<_>>>()?;
    ParamSet::from_tensors(id, side, tensors).map_err(|e| corrupt(format!("{prefix}: {e}")))
}

fn network_prefixes() -> [(NetworkId, &'static str); 3] {
    [
        (NetworkId::Generator, "generator"),
        (NetworkId::Discriminator, "discriminator"),
        (NetworkId::Poisoner, "poisoner"),
    ]
}

/// Writes parameters, optimiser moments, RNG position and history.
pub fn save(path: impl AsRef<Path>, cfg: &TrainingConfig, state: &TrainState<f32>) -> Result<()> {
    let mut w = PayloadWriter {
        entries: Vec::new(),
        payload: Vec::new(),
    };
    let nets = [
        (&state.generator, &state.adam_generator),
        (&state.discriminator, &state.adam_discriminator),
        (&state.poisoner, &state.adam_poisoner),
    ];
    for ((_, prefix), (params, adam)) in network_prefixes().iter().zip(nets) {
        w.push_set(prefix, params);
        w.push_set(&format!("{prefix}.adam_m"), &adam.m);
        w.push_set(&format!("{prefix}.adam_v"), &adam.v);
    }
    let header = CheckpointHeader {
        config: cfg.clone(),
        config_hash: cfg.content_hash(),
        epoch: state.epoch,
        rng: RngState {
            seed: hex::encode(state.rng.get_seed()),
            stream: state.rng.get_stream(),
            word_pos: state.rng.get_word_pos().to_string(),
        },
        adam_steps: AdamSteps {
            generator: state.adam_generator.step,
            discriminator: state.adam_discriminator.step,
            poisoner: state.adam_poisoner.step,
        },
        history: state.history.clone(),
        tensors: w.entries,
    };
    write_archive(path.as_ref(), CHECKPOINT_MAGIC, &header, &w.payload)
}

/// Restores a checkpoint written by [`save`]; training continued from it
/// matches an uninterrupted run.
pub fn load(path: impl AsRef<Path>) -> Result<(TrainingConfig, TrainState<f32>)> {
    let (h, payload): (CheckpointHeader, _) = read_archive(path.as_ref(), CHECKPOINT_MAGIC)?;
    if h.config.content_hash() != h.config_hash {
        return Err(corrupt("config hash does not match the stored config"));
    }
    let side = h.config.image_side;
    let mut sets = Vec::new();
    for (id, prefix) in network_prefixes() {
        let params = read_set(prefix, id, side, &h.tensors, &payload)?;
        let m = read_set(&format!("{prefix}.adam_m"), id, side, &h.tensors, &payload)?;
        let v = read_set(&format!("{prefix}.adam_v"), id, side, &h.tensors, &payload)?;
        sets.push((params, m, v));
    }
    let seed: [u8; 32] = hex::decode(&h.rng.seed)
        .ok()
        .and_then(|b| b.try_into().ok())
        .ok_or_else(|| corrupt("bad rng seed"))?;
    let word_pos: u128 = h.rng.word_pos.parse().map_err(|_| corrupt("bad rng word position"))?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(h.rng.stream);
    rng.set_word_pos(word_pos);

    let (pv, pm, pp) = sets.pop().unwrap();
    let (dv, dm, dp) = sets.pop().unwrap();
    let (gv, gm, gp) = sets.pop().unwrap();
    let state = TrainState {
        generator: gv,
        discriminator: dv,
        poisoner: pv,
        adam_generator: AdamState {
            m: gm,
            v: gp,
            step: h.adam_steps.generator,
        },
        adam_discriminator: AdamState {
            m: dm,
            v: dp,
            step: h.adam_steps.discriminator,
        },
        adam_poisoner: AdamState {
            m: pm,
            v: pp,
            step: h.adam_steps.poisoner,
        },
        epoch: h.epoch,
        history: h.history,
        rng,
    };
    Ok((h.config, state))
}

/// Loads the parameters of one network only.
pub fn load_network(path: impl AsRef<Path>, id: NetworkId) -> Result<ParamSet<f32>> {
    let (_, state) = load(path)?;
    Ok(match id {
        NetworkId::Generator => state.generator,
        NetworkId::Discriminator => state.discriminator,
        NetworkId::Poisoner => state.poisoner,
    })
}

#[derive(Serialize, Deserialize)]
struct SampleEntry {
    epoch: usize,
    index: usize,
    poisoned: bool,
    stealth_mse: f64,
    /// Element offset of the perturbation, if any.
    delta: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct SamplesHeader {
    eps: f64,
    side: usize,
    images: usize,
    records: Vec<SampleEntry>,
}

pub fn save_sample_log(path: impl AsRef<Path>, log: &SampleLog) -> Result<()> {
    let side = log.dataset.first().map_or(0, |x| x.height());
    let mut payload = Vec::new();
    for x in &log.dataset {
        payload.extend_from_slice(x.tensor().data());
    }
    let records = log
        .records
        .iter()
        .map(|r| SampleEntry {
            epoch: r.epoch,
            index: r.index,
            poisoned: r.poisoned,
            stealth_mse: r.stealth_mse,
            delta: r.delta.as_ref().map(|d| {
                let off = payload.len();
                payload.extend_from_slice(d.data());
                off
            }),
        })
        .collect();
    let header = SamplesHeader {
        eps: log.eps,
        side,
        images: log.dataset.len(),
        records,
    };
    write_archive(path.as_ref(), SAMPLES_MAGIC, &header, &payload)
}

pub fn load_sample_log(path: impl AsRef<Path>) -> Result<SampleLog> {
    let (h, payload): (SamplesHeader, _) = read_archive(path.as_ref(), SAMPLES_MAGIC)?;
    let shape = [3, h.side, h.side];
    let entry = |name: String, offset| TensorEntry {
        name,
        shape: shape.to_vec(),
        offset,
    };
    let n = 3 * h.side * h.side;
    let dataset = (0..h.images)
        .map(|i| {
            let t = slice_tensor(&entry(format!("image {i}"), i * n), &payload)?;
            ImageTensor::new(t).map_err(|e| corrupt(format!("image {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let records = h
        .records
        .into_iter()
        .map(|r| {
            if r.index >= h.images {
                return Err(corrupt(format!("sample index {} out of range", r.index)));
            }
            let delta = r
                .delta
                .map(|off| slice_tensor(&entry("delta".into(), off), &payload))
                .transpose()?;
            Ok(SampleRecord {
                epoch: r.epoch,
                index: r.index,
                poisoned: r.poisoned,
                stealth_mse: r.stealth_mse,
                delta,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleLog {
        eps: h.eps,
        dataset,
        records,
    })
}
