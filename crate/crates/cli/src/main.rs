//! `ssda` command-line entry point.
//!
//! Exit codes: 0 ok, 2 usage, 3 data, 4 numeric, 5 I/O. Failures print one
//! line `error[<category>]: <message>` to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use image::{GrayImage, RgbImage};

use ssda::checkpoint::load_checkpoint;
use ssda::config::{read_config_file, resolve_config, RunConfig};
use ssda::data::{load_benchmark, load_dataset, save_benchmark, Dataset, ImageTensor, LabelMap, IGNORE};
use ssda::eval::evaluate_checkpoint;
use ssda::mixing::{mixed_source_batch, resize_labels_to_target, resize_to_target};
use ssda::pipeline::{load_or_generate, run_cell, seed_sweep, select_targets, CellOptions, RunFile, SweepPlan};
use ssda::report::{read_json, render_boxplot, write_report_json, SweepFile};
use ssda::{Error, Result, Scheme};

#[derive(Parser)]
#[command(
    name = "ssda",
    version,
    about = "Desk-scale adversarial semi-supervised domain adaptation for segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` override; repeatable. Wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic source / target / target-val benchmark.
    GenerateData {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Choose labeled target images and write `selection.json`.
    SelectTargets {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        ntl: Option<usize>,
        #[arg(long = "select")]
        select: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train one scheme.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labeled dataset.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        /// Benchmark directory (its target_val split is used) or a dataset
        /// directory with its own manifest.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run or collect a seed sweep and emit tables and a box plot.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "10,20,30,40,50")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "st,baseline,ltt,lts,lts-mix")]
        schemes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "10")]
        ntl: Vec<usize>,
        #[arg(long = "select")]
        select: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Only gather finished runs; never train.
        #[arg(long)]
        collect_only: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Render the box plot of a finished sweep.
    Plot {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the two mixed images and labels of one iteration as PNGs.
    MixDebug {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        iter: u64,
        #[arg(long, default_value_t = 0)]
        source_index: usize,
        #[arg(long, default_value_t = 0)]
        target_index: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    ntl: Option<usize>,
    #[arg(long = "select")]
    select: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    ckpt_every: Option<usize>,
    #[arg(long)]
    z_mode: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use this selection file instead of selecting anew.
    #[arg(long)]
    selection: Option<PathBuf>,
    /// Continue from the latest checkpoint in the output directory.
    #[arg(long)]
    resume: bool,
    /// Re-execute or continue the run described by `<DIR>/run.json`.
    #[arg(long, value_name = "DIR")]
    run: Option<PathBuf>,
    /// Stop after this many iterations (a checkpoint iteration).
    #[arg(long)]
    stop_after: Option<usize>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn push<T: ToString>(pairs: &mut Vec<(String, String)>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        pairs.push((key.to_string(), v.to_string()));
    }
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn resolve(cfg: &ConfigArgs, mut pairs: Vec<(String, String)>) -> Result<RunConfig> {
    for s in &cfg.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {s}` is not KEY=VALUE")))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    let text = cfg.config.as_deref().map(read_config_file).transpose()?;
    resolve_config(text.as_deref(), &pairs)
}

fn cmd_generate(out: &Path, cfg: &ConfigArgs) -> Result<()> {
    let run = resolve(cfg, vec![])?;
    let bench = ssda::data::generate_benchmark(&run.benchmark)?;
    save_benchmark(&bench, out)?;
    println!(
        "wrote {} source, {} target, {} target-val images to {}",
        bench.source.len(),
        bench.target.len(),
        bench.target_val.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut pairs = Vec::new();
    push(&mut pairs, "scheme", a.scheme.clone());
    push(&mut pairs, "ntl", a.ntl);
    push(&mut pairs, "selection", a.select.clone());
    push(&mut pairs, "seed", a.seed);
    push(&mut pairs, "max_iter", a.max_iter);
    push(&mut pairs, "ckpt_every", a.ckpt_every);
    push(&mut pairs, "z_mode", a.z_mode.clone());
    push(&mut pairs, "data_dir", path_str(&a.data));
    push(&mut pairs, "out_dir", path_str(&a.out));
    let (cfg, resume) = match &a.run {
        Some(dir) => {
            let file: RunFile = read_json(&dir.join("run.json"))?;
            let mut cfg = file.config;
            cfg.out_dir = Some(dir.clone());
            for (k, v) in &pairs {
                cfg.set(k, v)?;
            }
            cfg.validate()?;
            (cfg, true)
        }
        None => (resolve(&a.cfg, pairs)?, a.resume),
    };
    let bench = load_or_generate(&cfg)?;
    let selection = a
        .selection
        .as_deref()
        .map(ssda::selection::SelectionRecord::load)
        .transpose()?;
    let opts = CellOptions {
        resume,
        stop_after: a.stop_after,
    };
    let outcome = run_cell(&cfg, &bench, selection.as_ref(), &opts)?;
    match &outcome.summary.best {
        Some(b) => println!(
            "{}: {} iterations, best val mIoU {:.2} at {}",
            outcome.summary.cell,
            outcome.summary.completed_iterations,
            100.0 * b.miou,
            b.checkpoint
        ),
        None => println!(
            "{}: {} iterations, no evaluations",
            outcome.summary.cell, outcome.summary.completed_iterations
        ),
    }
    println!("outputs in {}", outcome.out_dir.display());
    Ok(())
}

fn load_eval_set(path: &Path) -> Result<Dataset> {
    if path.join("manifest.json").is_file() {
        load_dataset(path)
    } else {
        Ok(load_benchmark(path)?.target_val)
    }
}

fn cmd_evaluate(ckpt: &Path, data: &Path, out: &Path) -> Result<()> {
    let ckpt = load_checkpoint(ckpt)?;
    let report = evaluate_checkpoint(&ckpt, &load_eval_set(data)?)?;
    write_report_json(out, std::slice::from_ref(&report))?;
    println!(
        "{} {}: mIoU {:.2}",
        report.scheme,
        report.checkpoint,
        100.0 * report.miou
    );
    Ok(())
}

fn label_png(y: &LabelMap) -> GrayImage {
    let c = y.n_classes().max(2) as u32;
    let data = y
        .data()
        .iter()
        .map(|&v| {
            if v == IGNORE {
                255
            } else {
                (u32::from(v) * 200 / (c - 1)) as u8
            }
        })
        .collect();
    GrayImage::from_raw(y.width() as u32, y.height() as u32, data).expect("size")
}

fn image_png(x: &ImageTensor) -> Result<RgbImage> {
    let to_u8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    let mut data = Vec::with_capacity(x.height() * x.width() * 3);
    for r in 0..x.height() {
        for c in 0..x.width() {
            let px = x.pixel(r, c);
            for k in 0..3 {
                data.push(to_u8(px[k.min(px.len() - 1)]));
            }
        }
    }
    Ok(RgbImage::from_raw(x.width() as u32, x.height() as u32, data).expect("size"))
}

fn cmd_mix_debug(data: &Option<PathBuf>, iter: u64, si: usize, ti: usize, out: &Path, cfg: &ConfigArgs) -> Result<()> {
    let mut pairs = Vec::new();
    push(&mut pairs, "data_dir", path_str(data));
    let run = resolve(cfg, pairs)?;
    let bench = load_or_generate(&run)?;
    let pick = |set: &Dataset, i: usize| {
        set.get(i)
            .cloned()
            .ok_or_else(|| Error::Config(format!("index {i} outside {} ({} images)", set.name(), set.len())))
    };
    let (s, t) = (pick(&bench.source, si)?, pick(&bench.target, ti)?);
    let size = (t.image.height(), t.image.width());
    let xs = resize_to_target(&s.image, size)?;
    let ys = resize_labels_to_target(s.label()?, size)?;
    let mixed = mixed_source_batch(&xs, &ys, &t.image, t.label()?, iter)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for k in 0..2 {
        let p = out.join(format!("x_st{}.png", k + 1));
        image_png(&mixed.images[k])?
            .save(&p)
            .map_err(|e| Error::format(&p, e.to_string()))?;
        let p = out.join(format!("y_st{}.png", k + 1));
        label_png(&mixed.labels[k])
            .save(&p)
            .map_err(|e| Error::format(&p, e.to_string()))?;
    }
    println!(
        "iteration {iter} (layout {}): wrote mixed pair to {}",
        mixed.config_id,
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateData { out, cfg } => cmd_generate(&out, &cfg),
        Command::SelectTargets {
            data,
            ntl,
            select,
            seed,
            out,
            cfg,
        } => {
            let mut pairs = Vec::new();
            push(&mut pairs, "data_dir", path_str(&data));
            push(&mut pairs, "ntl", ntl);
            push(&mut pairs, "selection", select);
            push(&mut pairs, "seed", seed);
            let run = resolve(&cfg, pairs)?;
            let bench = load_or_generate(&run)?;
            let record = select_targets(&run, &bench)?;
            record.save(&out)?;
            println!(
                "selected {:?} ({}) -> {}",
                record.indices,
                record.method.as_str(),
                out.display()
            );
            Ok(())
        }
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate { ckpt, data, out } => cmd_evaluate(&ckpt, &data, &out),
        Command::Sweep {
            seeds,
            schemes,
            ntl,
            select,
            data,
            out,
            collect_only,
            cfg,
        } => {
            let mut pairs = Vec::new();
            push(&mut pairs, "data_dir", path_str(&data));
            push(&mut pairs, "selection", select);
            let base = resolve(&cfg, pairs)?;
            let schemes = schemes.iter().map(|s| s.parse()).collect::<Result<Vec<Scheme>>>()?;
            let plan = SweepPlan {
                seeds,
                schemes,
                ntl_values: ntl,
                selection: base.selection,
            };
            let bench = load_or_generate(&base)?;
            let summaries = seed_sweep(&base, &bench, &plan, &out, !collect_only)?;
            for s in &summaries {
                println!(
                    "{:<9} ntl={:<4} mean {:6.2} std {:5.2} best {:6.2} worst {:6.2}",
                    s.scheme,
                    s.ntl,
                    100.0 * s.mean,
                    100.0 * s.std,
                    100.0 * s.best,
                    100.0 * s.worst
                );
            }
            Ok(())
        }
        Command::Plot { sweep, out } => {
            let file: SweepFile = read_json(&sweep.join("sweep.json"))?;
            render_boxplot(&file.boxes, &out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::MixDebug {
            data,
            iter,
            source_index,
            target_index,
            out,
            cfg,
        } => cmd_mix_debug(&data, iter, source_index, target_index, &out, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            eprintln!("error[{}]: {e}", category.as_str());
            ExitCode::from(category.exit_code() as u8)
        }
    }
}
