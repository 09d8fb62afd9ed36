//! Choosing which target images receive labels.
//!
//! Entropy selection ranks every target image by the total entropy of a
//! source-pretrained network's main-head prediction and labels the most
//! uncertain ones. Random selection draws a uniform subset.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::autodiff::entropy_term;
use crate::data::{BatchSampler, Dataset, ImageTensor, Pools, SelectionMethod};
use crate::error::{Error, Result};
use crate::eval::evaluate_net;
use crate::nets::{ProbMap, SegNet};
use crate::objectives::{build_seg_objective, LossWeights};
use crate::optim::{poly_lr, sgd_update, SgdConfig, SgdState};
use crate::report::read_json;
use crate::rng::{derive_seed, stream, STREAM_PRETRAIN, STREAM_SELECTION};
use crate::scheme::Scheme;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyScore {
    pub sample_index: usize,
    pub value: f64,
}

/// `Σ_pixels Σ_classes -p log p` of a probability map, natural log.
pub fn total_entropy(p: &ProbMap) -> f64 {
    p.data().iter().map(|&v| entropy_term(v)).sum()
}

/// Total entropy of the main-head prediction for one image.
pub fn sample_entropy(net: &SegNet, x: &ImageTensor) -> Result<f64> {
    let (main, _) = net.segment(x)?;
    let value = total_entropy(&main);
    if !value.is_finite() {
        return Err(Error::Numeric("non-finite sample entropy".into()));
    }
    Ok(value)
}

/// Indices of the `k` highest scores, ties broken towards the lower index,
/// returned in ascending index order.
pub fn rank_and_select(scores: &[EntropyScore], k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::Config(format!("cannot select {k} of {} images", scores.len())));
    }
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.sample_index.cmp(&b.sample_index)));
    let mut chosen: Vec<usize> = ranked[..k].iter().map(|s| s.sample_index).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// A uniform `k`-subset of `0..n`, deterministic in `seed`, ascending.
pub fn select_random(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::Config(format!("cannot select {k} of {n} images")));
    }
    let mut rng = stream(seed, STREAM_SELECTION);
    let mut chosen = index::sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Source-only supervised pretraining used to score target images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainConfig {
    pub val_fraction: f64,
    /// Training iterations, one source image each.
    pub budget: usize,
    pub eval_every: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            val_fraction: 0.1,
            budget: 2000,
            eval_every: 250,
            lr: 2.5e-4,
            momentum: 0.9,
            weight_decay: 5e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainOutcome {
    /// Weights of the checkpoint with the best source-validation mIoU.
    pub net: SegNet,
    pub summary: PretrainSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretrainSummary {
    pub budget: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub best_iteration: usize,
    pub best_val_miou: f64,
    /// `(iteration, source-val mIoU)` at every evaluation.
    pub history: Vec<(usize, f64)>,
}

/// Splits the source set into training and validation parts (shuffled by
/// the seed's pretrain stream) and fits `net` with the segmentation loss
/// alone. Returns the evaluated weights with the best validation mIoU,
/// ties to the earliest.
pub fn pretrain_source(net: SegNet, source: &Dataset, cfg: &PretrainConfig, seed: u64) -> Result<PretrainOutcome> {
    if cfg.budget < 1 {
        return Err(Error::Config(
            "pretraining budget must be at least one iteration".into(),
        ));
    }
    if !(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0) {
        return Err(Error::Config(format!(
            "val_fraction must lie in (0, 1), got {}",
            cfg.val_fraction
        )));
    }
    if cfg.eval_every == 0 || !cfg.lr.is_finite() || cfg.lr <= 0.0 {
        return Err(Error::Config(
            "pretraining needs eval_every >= 1 and a positive rate".into(),
        ));
    }
    if !source.is_fully_labeled() || source.len() < 2 {
        return Err(Error::Config(
            "pretraining needs at least two labeled source images".into(),
        ));
    }
    let n = source.len();
    let n_val = ((n as f64 * cfg.val_fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, STREAM_PRETRAIN));
    let (mut val_idx, mut train_idx) = (order[..n_val].to_vec(), order[n_val..].to_vec());
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    let val = source.subset(format!("{}-val", source.name()), &val_idx)?;
    let train = source.subset(format!("{}-train", source.name()), &train_idx)?;

    let pools = Pools {
        source: &train,
        labeled: &train,
        unlabeled: &train,
    };
    let sampler = BatchSampler::new(derive_seed(seed, STREAM_PRETRAIN));
    let weights = LossWeights::default();
    let sgd = SgdConfig {
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
    };
    let mut state = SgdState::default();
    let mut net = net;
    let mut best: Option<(usize, f64, SegNet)> = None;
    let mut history = Vec::new();
    for iter in 0..cfg.budget {
        let batch = sampler.sample(iter as u64, Scheme::St, &pools)?;
        let obj = build_seg_objective(&net, &batch.labeled, &weights)?;
        if !obj.value().is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite pretraining loss at iteration {iter}"
            )));
        }
        let grads = obj.graph.gradients(obj.loss)?;
        sgd_update(
            &mut net.params,
            &grads,
            &mut state,
            poly_lr(cfg.lr, iter, cfg.budget)?,
            sgd,
        )?;
        let done = iter + 1;
        if done % cfg.eval_every == 0 || done == cfg.budget {
            let m = evaluate_net(&net, &val)?.miou;
            history.push((done, m));
            log::debug!("pretrain seed {seed} iter {done}: source-val mIoU {:.2}", 100.0 * m);
            if best.as_ref().is_none_or(|(_, b, _)| m > *b) {
                best = Some((done, m, net.clone()));
            }
        }
    }
    let (best_iteration, best_val_miou, net) = best.expect("budget >= 1 evaluates at least once");
    Ok(PretrainOutcome {
        net,
        summary: PretrainSummary {
            budget: cfg.budget,
            n_train: train.len(),
            n_val,
            best_iteration,
            best_val_miou,
            history,
        },
    })
}

/// Entropy of every target image under `net`, in dataset order.
pub fn score_targets(net: &SegNet, target: &Dataset) -> Result<Vec<EntropyScore>> {
    target
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(EntropyScore {
                sample_index: i,
                value: sample_entropy(net, &s.image)?,
            })
        })
        .collect()
}

pub const SELECTION_VERSION: u32 = 1;

/// Contents of `selection.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub version: u32,
    pub method: SelectionMethod,
    pub seed: u64,
    pub ntl: usize,
    pub n_total: usize,
    pub indices: Vec<usize>,
    /// Per-sample entropy in dataset order (entropy selection only).
    pub scores: Option<Vec<f64>>,
    pub pretrain: Option<PretrainSummary>,
}

impl SelectionRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::format(path, e.to_string()))?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let record: SelectionRecord = read_json(path)?;
        if record.version != SELECTION_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported selection version {}", record.version),
            ));
        }
        if record.indices.len() != record.ntl || record.indices.iter().any(|&i| i >= record.n_total) {
            return Err(Error::format(path, "selected indices disagree with ntl or pool size"));
        }
        Ok(record)
    }
}
