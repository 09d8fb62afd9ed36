//! End-to-end stages: data preparation, target selection, single runs and
//! seed sweeps. Every run directory is self-describing:
//!
//! ```text
//! <run>/run.json         resolved configuration, written before training
//! <run>/selection.json   labeled-target choice
//! <run>/metrics.csv      validation report per checkpoint
//! <run>/losses.csv       per-iteration losses
//! <run>/checkpoints/iter_%06d
//! <run>/summary.json     best and final reports once training finishes
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_checkpoint, Checkpoint};
use crate::config::RunConfig;
use crate::data::{generate_benchmark, load_benchmark, make_splits, Benchmark, SelectionMethod, Split, SplitSpec};
use crate::error::{Error, Result};
use crate::eval::{MetricsReport, SweepSummary};
use crate::nets::SegNet;
use crate::report::{emit_sweep, read_json, render_boxplot, BoxStats};
use crate::rng::stream;
use crate::scheme::Scheme;
use crate::selection::{
    pretrain_source, rank_and_select, score_targets, select_random, SelectionRecord, SELECTION_VERSION,
};
use crate::trainer::{run_training, RunControl, TrainData};

pub const RUN_VERSION: u32 = 1;

pub fn load_or_generate(cfg: &RunConfig) -> Result<Benchmark> {
    match &cfg.data_dir {
        Some(dir) => load_benchmark(dir),
        None => generate_benchmark(&cfg.benchmark),
    }
}

/// Chooses the labeled target images. Entropy selection pretrains a fresh
/// G on the source set, then ranks every target image by its entropy.
pub fn select_targets(cfg: &RunConfig, bench: &Benchmark) -> Result<SelectionRecord> {
    let target = &bench.target;
    let n = target.len();
    let (indices, scores, pretrain) = match cfg.selection {
        SelectionMethod::Random => (select_random(n, cfg.ntl, cfg.seed)?, None, None),
        SelectionMethod::Entropy => {
            let (h, w, d) = bench
                .source
                .geometry()
                .ok_or_else(|| Error::Config("empty source set".into()))?;
            let seg = cfg.seg_config(d, bench.source.n_classes(), h, w);
            let net = SegNet::new(seg, &mut stream(cfg.seed, "pretrain/init"))?;
            let outcome = pretrain_source(net, &bench.source, &cfg.pretrain, cfg.seed)?;
            log::info!(
                "pretrained seed {}: source-val mIoU {:.2} at iteration {}",
                cfg.seed,
                100.0 * outcome.summary.best_val_miou,
                outcome.summary.best_iteration
            );
            let scores = score_targets(&outcome.net, target)?;
            let indices = rank_and_select(&scores, cfg.ntl)?;
            (
                indices,
                Some(scores.iter().map(|s| s.value).collect()),
                Some(outcome.summary),
            )
        }
    };
    Ok(SelectionRecord {
        version: SELECTION_VERSION,
        method: cfg.selection,
        seed: cfg.seed,
        ntl: cfg.ntl,
        n_total: n,
        indices,
        scores,
        pretrain,
    })
}

/// Rebuilds the split from a selection record and checks it reproduces the
/// recorded indices.
pub fn split_from_record(bench: &Benchmark, record: &SelectionRecord) -> Result<Split> {
    if record.n_total != bench.target.len() {
        return Err(Error::Config(format!(
            "selection covers {} target images, data has {}",
            record.n_total,
            bench.target.len()
        )));
    }
    let spec = SplitSpec {
        n_labeled_target: record.ntl,
        selection: record.method,
        seed: record.seed,
    };
    let split = make_splits(&bench.target, &spec, record.scores.as_deref())?;
    if split.labeled_indices != record.indices {
        return Err(Error::Config(
            "selection record does not reproduce its own indices".into(),
        ));
    }
    Ok(split)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    pub version: u32,
    pub cell: String,
    pub config: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: u32,
    pub cell: String,
    pub completed_iterations: usize,
    /// Wall-clock seconds of this invocation (selection excluded when it
    /// was supplied).
    pub wall_seconds: f64,
    pub best: Option<MetricsReport>,
    pub last: Option<MetricsReport>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Most advanced checkpoint file under `<run>/checkpoints`.
pub fn latest_checkpoint(run_dir: &Path) -> Result<Option<PathBuf>> {
    let dir = run_dir.join("checkpoints");
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut found: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("iter_") && !n.ends_with(".tmp"))
        })
        .collect();
    found.sort();
    Ok(found.pop())
}

#[derive(Clone, Debug, Default)]
pub struct CellOptions {
    /// Continue from the latest checkpoint in the run directory.
    pub resume: bool,
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub out_dir: PathBuf,
    pub summary: RunSummary,
    pub checkpoint: Checkpoint,
}

/// One training run in `cfg.resolved_out_dir()`. A precomputed selection
/// is reused when given; otherwise `selection.json` in the run directory is
/// reused, or a new selection is made.
pub fn run_cell(
    cfg: &RunConfig,
    bench: &Benchmark,
    selection: Option<&SelectionRecord>,
    opts: &CellOptions,
) -> Result<CellOutcome> {
    cfg.validate()?;
    let started = Instant::now();
    let out_dir = cfg.resolved_out_dir();
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let cell = cfg.cell_name();
    write_json(
        &out_dir.join("run.json"),
        &RunFile {
            version: RUN_VERSION,
            cell: cell.clone(),
            config: cfg.clone(),
        },
    )?;

    let selection_path = out_dir.join("selection.json");
    let record = match selection {
        Some(r) => r.clone(),
        None if selection_path.is_file() => SelectionRecord::load(&selection_path)?,
        None => select_targets(cfg, bench)?,
    };
    if record.method != cfg.selection || record.ntl != cfg.ntl || record.seed != cfg.seed {
        return Err(Error::Config(format!(
            "selection ({}, ntl {}, seed {}) does not match the run",
            record.method.as_str(),
            record.ntl,
            record.seed
        )));
    }
    record.save(&selection_path)?;
    let split = split_from_record(bench, &record)?;

    let geometry = bench
        .target
        .geometry()
        .ok_or_else(|| Error::Config("empty target set".into()))?;
    let spec = cfg.run_spec(geometry, bench.target.n_classes());
    let resume = match (opts.resume, latest_checkpoint(&out_dir)?) {
        (true, Some(path)) => Some(load_checkpoint(&path)?),
        _ => None,
    };
    let control = RunControl {
        out_dir: Some(out_dir.clone()),
        resume,
        stop_after: opts.stop_after,
    };
    let data = TrainData {
        source: &bench.source,
        labeled: &split.labeled,
        unlabeled: &split.unlabeled,
        val: &bench.target_val,
    };
    let outcome = run_training(&spec, data, &control)?;
    let summary = RunSummary {
        version: RUN_VERSION,
        cell,
        completed_iterations: outcome.checkpoint.iteration,
        wall_seconds: started.elapsed().as_secs_f64(),
        best: outcome.best.clone(),
        last: outcome.checkpoint.history.last().cloned(),
    };
    if outcome.completed {
        write_json(&out_dir.join("summary.json"), &summary)?;
    }
    Ok(CellOutcome {
        out_dir,
        summary,
        checkpoint: outcome.checkpoint,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub seeds: Vec<u64>,
    pub schemes: Vec<Scheme>,
    pub ntl_values: Vec<usize>,
    pub selection: SelectionMethod,
}

impl SweepPlan {
    fn cell_config(&self, base: &RunConfig, root: &Path, scheme: Scheme, ntl: usize, seed: u64) -> RunConfig {
        let mut cfg = base.clone();
        cfg.scheme = scheme;
        cfg.ntl = ntl;
        cfg.seed = seed;
        cfg.selection = self.selection;
        cfg.out_dir = Some(root.join(cfg.cell_name()));
        cfg
    }
}

/// Summaries per (scheme, ntl) from the finished runs under `root`, in plan
/// order. Runs without `summary.json` are reported as gaps.
pub fn collect_sweep(base: &RunConfig, plan: &SweepPlan, root: &Path) -> Result<Vec<SweepSummary>> {
    let mut out = Vec::new();
    for &ntl in &plan.ntl_values {
        for &scheme in &plan.schemes {
            let values: Vec<Option<f64>> = plan
                .seeds
                .iter()
                .map(|&seed| {
                    let dir = plan.cell_config(base, root, scheme, ntl, seed).resolved_out_dir();
                    read_json::<RunSummary>(&dir.join("summary.json"))
                        .ok()
                        .and_then(|s| s.best.map(|b| b.miou))
                })
                .collect();
            if values.iter().all(Option::is_none) {
                log::warn!("no finished runs for {scheme} ntl={ntl}");
                continue;
            }
            let summary = SweepSummary::new(
                scheme.as_str(),
                ntl,
                plan.selection.as_str(),
                plan.seeds.clone(),
                values,
            )?;
            let gaps = summary.missing_seeds();
            if !gaps.is_empty() {
                log::warn!("partial summary for {scheme} ntl={ntl}: missing seeds {gaps:?}");
            }
            out.push(summary);
        }
    }
    Ok(out)
}

/// A finished run whose recorded configuration equals `cfg`.
pub fn is_finished(dir: &Path, cfg: &RunConfig) -> bool {
    let same = read_json::<RunFile>(&dir.join("run.json")).is_ok_and(|f| &f.config == cfg);
    same && dir.join("summary.json").is_file()
}

/// Runs every (seed, ntl, scheme) cell not already finished under `root`,
/// then collects and emits `sweep.csv`, `sweep.json` and `boxplot.png`.
/// Selection is computed once per (seed, ntl) and shared by all schemes.
pub fn seed_sweep(
    base: &RunConfig,
    bench: &Benchmark,
    plan: &SweepPlan,
    root: &Path,
    execute: bool,
) -> Result<Vec<SweepSummary>> {
    if execute {
        for &seed in &plan.seeds {
            for &ntl in &plan.ntl_values {
                let mut selection: Option<SelectionRecord> = None;
                for &scheme in &plan.schemes {
                    let cfg = plan.cell_config(base, root, scheme, ntl, seed);
                    let dir = cfg.resolved_out_dir();
                    if is_finished(&dir, &cfg) {
                        log::info!("{} already finished", cfg.cell_name());
                        continue;
                    }
                    if dir.exists() {
                        // stale or foreign run: start over
                        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    }
                    if selection.is_none() {
                        selection = Some(select_targets(&cfg, bench)?);
                    }
                    log::info!("running {}", cfg.cell_name());
                    let opts = CellOptions {
                        resume: true,
                        stop_after: None,
                    };
                    run_cell(&cfg, bench, selection.as_ref(), &opts)?;
                }
            }
        }
    }
    let summaries = collect_sweep(base, plan, root)?;
    if !summaries.is_empty() {
        emit_sweep(root, &summaries)?;
        let boxes = summaries
            .iter()
            .map(BoxStats::from_summary)
            .collect::<Result<Vec<_>>>()?;
        render_boxplot(&boxes, &root.join("boxplot.png"))?;
    }
    Ok(summaries)
}
