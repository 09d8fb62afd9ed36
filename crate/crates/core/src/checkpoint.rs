//! Binary checkpoint files.
//!
//! ```text
//! magic "SSDACKPT" | u32 LE version | u64 LE header length | JSON header | f64 LE arrays
//! ```
//!
//! The JSON header carries everything except the large arrays; the header's
//! `arrays` table lists, in file order, the key and length of each array.
//! Keys are `<group>/<parameter name>`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::eval::MetricsReport;
use crate::nets::{DiscriminatorConfig, SegNetConfig};
use crate::objectives::ZMode;
use crate::optim::{AdamState, SgdState};
use crate::scheme::Scheme;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SSDACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Losses of one training iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub iteration: usize,
    pub lr_g: f64,
    pub lr_d: f64,
    pub g_loss: f64,
    pub d_loss: f64,
    pub components: BTreeMap<String, f64>,
}

/// Full training state after `iteration` completed steps.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: usize,
    pub seed: u64,
    pub scheme: Scheme,
    pub ntl: usize,
    pub selection: String,
    pub z_mode: ZMode,
    pub seg_config: SegNetConfig,
    pub disc_config: DiscriminatorConfig,
    pub g: ParamStore,
    pub d_main: ParamStore,
    pub d_aux: ParamStore,
    pub sgd: SgdState,
    pub adam: AdamState,
    /// Validation reports of every checkpoint so far, in order.
    pub history: Vec<MetricsReport>,
    pub losses: Vec<LossRow>,
}

impl Checkpoint {
    pub fn id(&self) -> String {
        checkpoint_id(self.iteration)
    }
}

pub fn checkpoint_id(iteration: usize) -> String {
    format!("iter_{iteration:06}")
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    key: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    iteration: usize,
    seed: u64,
    scheme: Scheme,
    ntl: usize,
    selection: String,
    z_mode: ZMode,
    seg_config: SegNetConfig,
    disc_config: DiscriminatorConfig,
    adam_step: u64,
    history: Vec<MetricsReport>,
    losses: Vec<LossRow>,
    arrays: Vec<ArrayEntry>,
}

fn push_store(arrays: &mut Vec<ArrayEntry>, blobs: &mut Vec<f64>, group: &str, store: &ParamStore) {
    for (name, t) in store.iter() {
        arrays.push(ArrayEntry {
            key: format!("{group}/{name}"),
            shape: t.shape().to_vec(),
        });
        blobs.extend_from_slice(t.data());
    }
}

fn push_map(arrays: &mut Vec<ArrayEntry>, blobs: &mut Vec<f64>, group: &str, map: &BTreeMap<String, Vec<f64>>) {
    for (name, v) in map {
        arrays.push(ArrayEntry {
            key: format!("{group}/{name}"),
            shape: vec![v.len()],
        });
        blobs.extend_from_slice(v);
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut arrays = Vec::new();
    let mut blobs = Vec::new();
    push_store(&mut arrays, &mut blobs, "g", &ckpt.g);
    push_store(&mut arrays, &mut blobs, "d_main", &ckpt.d_main);
    push_store(&mut arrays, &mut blobs, "d_aux", &ckpt.d_aux);
    push_map(&mut arrays, &mut blobs, "sgd_v", &ckpt.sgd.velocity);
    push_map(&mut arrays, &mut blobs, "adam_m", &ckpt.adam.m);
    push_map(&mut arrays, &mut blobs, "adam_v", &ckpt.adam.v);
    let header = Header {
        iteration: ckpt.iteration,
        seed: ckpt.seed,
        scheme: ckpt.scheme,
        ntl: ckpt.ntl,
        selection: ckpt.selection.clone(),
        z_mode: ckpt.z_mode,
        seg_config: ckpt.seg_config.clone(),
        disc_config: ckpt.disc_config.clone(),
        adam_step: ckpt.adam.step,
        history: ckpt.history.clone(),
        losses: ckpt.losses.clone(),
        arrays,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::format(path, e.to_string()))?;
    let mut bytes = Vec::with_capacity(20 + json.len() + 8 * blobs.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for v in blobs {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    // write-then-rename so an interrupted save never leaves a torn file
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::format(path, m.to_string());
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = 20usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..body]).map_err(|e| bad(&e.to_string()))?;
    let mut cursor = body;
    let mut groups: BTreeMap<String, Vec<(String, Tensor)>> = BTreeMap::new();
    for entry in header.arrays {
        let n: usize = entry.shape.iter().product();
        let end = cursor + 8 * n;
        if end > bytes.len() {
            return Err(bad(&format!("array `{}` is truncated", entry.key)));
        }
        let data = bytes[cursor..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        cursor = end;
        let (group, name) = entry.key.split_once('/').ok_or_else(|| bad("malformed array key"))?;
        groups
            .entry(group.to_string())
            .or_default()
            .push((name.to_string(), Tensor::new(entry.shape, data)?));
    }
    if cursor != bytes.len() {
        return Err(bad("trailing bytes after the last array"));
    }
    let mut take = |group: &str| groups.remove(group).unwrap_or_default();
    let store = |entries: Vec<(String, Tensor)>| {
        let mut s = ParamStore::new();
        for (n, t) in entries {
            s.insert(n, t);
        }
        s
    };
    let map = |entries: Vec<(String, Tensor)>| -> BTreeMap<String, Vec<f64>> {
        entries.into_iter().map(|(n, t)| (n, t.into_data())).collect()
    };
    Ok(Checkpoint {
        iteration: header.iteration,
        seed: header.seed,
        scheme: header.scheme,
        ntl: header.ntl,
        selection: header.selection,
        z_mode: header.z_mode,
        seg_config: header.seg_config,
        disc_config: header.disc_config,
        g: store(take("g")),
        d_main: store(take("d_main")),
        d_aux: store(take("d_aux")),
        sgd: SgdState {
            velocity: map(take("sgd_v")),
        },
        adam: AdamState {
            step: header.adam_step,
            m: map(take("adam_m")),
            v: map(take("adam_v")),
        },
        history: header.history,
        losses: header.losses,
    })
}
