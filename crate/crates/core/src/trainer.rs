//! Alternating G / D optimization with the polynomial schedule, periodic
//! validation and checkpointing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{checkpoint_id, save_checkpoint, Checkpoint, LossRow};
use crate::data::{BatchSampler, Dataset, Pools};
use crate::error::{Error, Result};
use crate::eval::{evaluate_net, MetricsReport};
use crate::nets::{Discriminator, DiscriminatorConfig, SegNet, SegNetConfig};
use crate::objectives::{build_d_objective, build_g_objective, LossWeights, Nets, SchemeLossBundle, ZMode};
use crate::optim::{adam_update, poly_lr, sgd_update, AdamConfig, AdamState, SgdConfig, SgdState};
use crate::report::{write_losses_csv, write_metrics_csv};
use crate::rng::{stream, STREAM_INIT};
use crate::scheme::Scheme;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda_adv_main: f64,
    pub lambda_adv_aux: f64,
    pub seg_weight_main: f64,
    pub seg_weight_aux: f64,
    pub g_lr: f64,
    pub g_momentum: f64,
    pub g_weight_decay: f64,
    pub d_lr: f64,
    pub d_beta1: f64,
    pub d_beta2: f64,
    pub d_eps: f64,
    pub max_iter: usize,
    pub ckpt_every: usize,
    pub z_mode: ZMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            lambda_adv_main: 1e-3,
            lambda_adv_aux: 2e-4,
            seg_weight_main: 1.0,
            seg_weight_aux: 0.1,
            g_lr: 2.5e-4,
            g_momentum: 0.9,
            g_weight_decay: 5e-4,
            d_lr: 1e-4,
            d_beta1: 0.9,
            d_beta2: 0.99,
            d_eps: 1e-8,
            max_iter: 3000,
            ckpt_every: 250,
            z_mode: ZMode::Entropy,
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [("g_lr", self.g_lr), ("d_lr", self.d_lr), ("d_eps", self.d_eps)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("lambda_adv_main", self.lambda_adv_main),
            ("lambda_adv_aux", self.lambda_adv_aux),
            ("seg_weight_main", self.seg_weight_main),
            ("seg_weight_aux", self.seg_weight_aux),
            ("g_weight_decay", self.g_weight_decay),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        let unit = [
            ("g_momentum", self.g_momentum),
            ("d_beta1", self.d_beta1),
            ("d_beta2", self.d_beta2),
        ];
        for (name, v) in unit {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.ckpt_every == 0 {
            return Err(Error::Config("ckpt_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            seg_main: self.seg_weight_main,
            seg_aux: self.seg_weight_aux,
            adv_main: self.lambda_adv_main,
            adv_aux: self.lambda_adv_aux,
        }
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            momentum: self.g_momentum,
            weight_decay: self.g_weight_decay,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.d_beta1,
            beta2: self.d_beta2,
            eps: self.d_eps,
        }
    }
}

/// Networks plus optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub nets: Nets,
    pub sgd: SgdState,
    pub adam: AdamState,
}

impl TrainState {
    /// Fresh networks drawn from the seed's init stream: G, then the main
    /// and auxiliary discriminators.
    pub fn init(seed: u64, seg: &SegNetConfig, disc: &DiscriminatorConfig) -> Result<Self> {
        let mut rng = stream(seed, STREAM_INIT);
        let g = SegNet::new(seg.clone(), &mut rng)?;
        let d_main = Discriminator::new(disc.clone(), "d_main", &mut rng)?;
        let d_aux = Discriminator::new(disc.clone(), "d_aux", &mut rng)?;
        Ok(TrainState {
            nets: Nets { g, d_main, d_aux },
            sgd: SgdState::default(),
            adam: AdamState::default(),
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        Ok(TrainState {
            nets: Nets {
                g: SegNet::from_params(ckpt.seg_config.clone(), ckpt.g.clone())?,
                d_main: Discriminator::from_params(ckpt.disc_config.clone(), "d_main", ckpt.d_main.clone())?,
                d_aux: Discriminator::from_params(ckpt.disc_config.clone(), "d_aux", ckpt.d_aux.clone())?,
            },
            sgd: ckpt.sgd.clone(),
            adam: ckpt.adam.clone(),
        })
    }
}

/// One iteration.
///
/// Phase 1 freezes the discriminators, evaluates G's objective and takes an
/// SGD step on G. Phase 2 freezes the updated G, recomputes the
/// discriminator inputs, evaluates the discriminators' objective and takes
/// an Adam step on both discriminators. ST has no phase 2.
pub fn train_step(
    scheme: Scheme,
    batch: &crate::data::Batch,
    state: &mut TrainState,
    hp: &HyperParams,
    iter: usize,
) -> Result<SchemeLossBundle> {
    let lr_g = poly_lr(hp.g_lr, iter, hp.max_iter)?;
    let lr_d = poly_lr(hp.d_lr, iter, hp.max_iter)?;

    let g_obj = build_g_objective(scheme, batch, &state.nets, &hp.loss_weights(), hp.z_mode)?;
    if !g_obj.value().is_finite() {
        return Err(Error::Numeric(format!("non-finite G objective at iteration {iter}")));
    }
    let grads = g_obj.graph.gradients(g_obj.loss)?;
    sgd_update(&mut state.nets.g.params, &grads, &mut state.sgd, lr_g, hp.sgd())?;

    let d_obj = build_d_objective(scheme, batch, &state.nets, hp.z_mode)?;
    if !d_obj.value().is_finite() {
        return Err(Error::Numeric(format!("non-finite D objective at iteration {iter}")));
    }
    if scheme.is_adversarial() {
        let grads = d_obj.graph.gradients(d_obj.loss)?;
        let Nets { d_main, d_aux, .. } = &mut state.nets;
        adam_update(
            &mut [&mut d_main.params, &mut d_aux.params],
            &grads,
            &mut state.adam,
            lr_d,
            hp.adam(),
        )?;
    }
    Ok(SchemeLossBundle::new(&g_obj, &d_obj))
}

/// Everything that identifies a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub scheme: Scheme,
    pub ntl: usize,
    pub selection: String,
    pub seed: u64,
    pub hp: HyperParams,
    pub seg: SegNetConfig,
    pub disc: DiscriminatorConfig,
}

#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub source: &'a Dataset,
    pub labeled: &'a Dataset,
    pub unlabeled: &'a Dataset,
    pub val: &'a Dataset,
}

#[derive(Clone, Debug, Default)]
pub struct RunControl {
    /// Where checkpoints, `metrics.csv` and `losses.csv` go; nothing is
    /// written when absent.
    pub out_dir: Option<PathBuf>,
    pub resume: Option<Checkpoint>,
    /// Stop once this many iterations are complete; must be a checkpoint
    /// iteration.
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub best: Option<MetricsReport>,
    pub completed: bool,
}

/// Highest validation mIoU; ties go to the earlier checkpoint.
pub fn best_report(history: &[MetricsReport]) -> Option<MetricsReport> {
    history
        .iter()
        .fold(None::<&MetricsReport>, |best, r| match best {
            Some(b) if b.miou >= r.miou => Some(b),
            _ => Some(r),
        })
        .cloned()
}

fn is_checkpoint_iter(done: usize, hp: &HyperParams) -> bool {
    done.is_multiple_of(hp.ckpt_every) || done == hp.max_iter
}

fn snapshot(
    spec: &RunSpec,
    state: &TrainState,
    done: usize,
    history: &[MetricsReport],
    losses: &[LossRow],
) -> Checkpoint {
    Checkpoint {
        iteration: done,
        seed: spec.seed,
        scheme: spec.scheme,
        ntl: spec.ntl,
        selection: spec.selection.clone(),
        z_mode: spec.hp.z_mode,
        seg_config: spec.seg.clone(),
        disc_config: spec.disc.clone(),
        g: state.nets.g.params.clone(),
        d_main: state.nets.d_main.params.clone(),
        d_aux: state.nets.d_aux.params.clone(),
        sgd: state.sgd.clone(),
        adam: state.adam.clone(),
        history: history.to_vec(),
        losses: losses.to_vec(),
    }
}

pub fn checkpoint_path(out_dir: &Path, iteration: usize) -> PathBuf {
    out_dir.join("checkpoints").join(checkpoint_id(iteration))
}

fn check_resume(spec: &RunSpec, ckpt: &Checkpoint) -> Result<()> {
    let same = ckpt.seed == spec.seed
        && ckpt.scheme == spec.scheme
        && ckpt.ntl == spec.ntl
        && ckpt.selection == spec.selection
        && ckpt.z_mode == spec.hp.z_mode
        && ckpt.seg_config == spec.seg
        && ckpt.disc_config == spec.disc;
    if !same {
        return Err(Error::Config(format!(
            "checkpoint {} belongs to a different run",
            ckpt.id()
        )));
    }
    if ckpt.iteration > spec.hp.max_iter {
        return Err(Error::Config(format!(
            "checkpoint {} lies beyond max_iter {}",
            ckpt.id(),
            spec.hp.max_iter
        )));
    }
    Ok(())
}

/// Runs (or resumes) training to `max_iter`, validating on `data.val` at
/// every `ckpt_every` iterations and at the final iteration.
pub fn run_training(spec: &RunSpec, data: TrainData<'_>, control: &RunControl) -> Result<TrainOutcome> {
    spec.hp.validate()?;
    if let Some(stop) = control.stop_after {
        if !is_checkpoint_iter(stop, &spec.hp) {
            return Err(Error::Config(format!(
                "stop_after {stop} is not a checkpoint iteration"
            )));
        }
    }
    let (mut state, mut history, mut losses, start) = match &control.resume {
        Some(ckpt) => {
            check_resume(spec, ckpt)?;
            (
                TrainState::from_checkpoint(ckpt)?,
                ckpt.history.clone(),
                ckpt.losses.clone(),
                ckpt.iteration,
            )
        }
        None => (
            TrainState::init(spec.seed, &spec.seg, &spec.disc)?,
            Vec::new(),
            Vec::new(),
            0,
        ),
    };
    if let Some(dir) = &control.out_dir {
        fs::create_dir_all(dir.join("checkpoints")).map_err(|e| Error::io(dir, e))?;
    }
    let pools = Pools {
        source: data.source,
        labeled: data.labeled,
        unlabeled: data.unlabeled,
    };
    let sampler = BatchSampler::new(spec.seed);
    let mut last_good: Option<PathBuf> = None;
    let end = control.stop_after.unwrap_or(spec.hp.max_iter).min(spec.hp.max_iter);

    for iter in start..end {
        let batch = sampler.sample(iter as u64, spec.scheme, &pools)?;
        let bundle = train_step(spec.scheme, &batch, &mut state, &spec.hp, iter).map_err(|e| match e {
            Error::Numeric(m) => Error::Numeric(match &last_good {
                Some(p) => format!("{m}; last good checkpoint {}", p.display()),
                None => format!("{m}; no checkpoint saved yet"),
            }),
            other => other,
        })?;
        losses.push(LossRow {
            iteration: iter,
            lr_g: poly_lr(spec.hp.g_lr, iter, spec.hp.max_iter)?,
            lr_d: poly_lr(spec.hp.d_lr, iter, spec.hp.max_iter)?,
            g_loss: bundle.g_loss,
            d_loss: bundle.d_loss,
            components: bundle.components,
        });
        let done = iter + 1;
        if !is_checkpoint_iter(done, &spec.hp) {
            continue;
        }
        let iou = evaluate_net(&state.nets.g, data.val)?;
        history.push(MetricsReport {
            scheme: spec.scheme.as_str().to_string(),
            ntl: spec.ntl,
            seed: spec.seed,
            selection: spec.selection.clone(),
            checkpoint: checkpoint_id(done),
            miou: iou.miou,
            per_class_iou: iou.per_class_iou,
        });
        log::info!(
            "{} seed {} {}: val mIoU {:.2}",
            spec.scheme,
            spec.seed,
            checkpoint_id(done),
            100.0 * history.last().expect("just pushed").miou
        );
        if let Some(dir) = &control.out_dir {
            let ckpt = snapshot(spec, &state, done, &history, &losses);
            let path = checkpoint_path(dir, done);
            save_checkpoint(&ckpt, &path)?;
            write_metrics_csv(&dir.join("metrics.csv"), &history, spec.seg.n_classes)?;
            write_losses_csv(&dir.join("losses.csv"), &losses)?;
            last_good = Some(path);
        }
    }
    let done = end.max(start);
    Ok(TrainOutcome {
        checkpoint: snapshot(spec, &state, done, &history, &losses),
        best: best_report(&history),
        completed: done == spec.hp.max_iter,
    })
}
