//! Acceptance suite: one `[PASS]` / `[FAIL]` line per criterion.
//!
//! The two sweep criteria train 30 runs of 3000 iterations. Finished runs
//! are cached under `target/tmp/acceptance-sweep` and reused when their
//! recorded configuration matches; set `SSDA_ACCEPTANCE_QUICK=1` to skip
//! those two criteria.

mod common;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;

use common::{grad_check, random_batch, random_image, random_labels, random_probs, rng, small_nets, Side};
use ssda::config::RunConfig;
use ssda::data::{generate_benchmark, LabelMap, SelectionMethod, IGNORE};
use ssda::eval::{confusion_matrix, mean_std, miou, pooled_std, SweepSummary};
use ssda::mixing::{layout, mix_patch, mixed_source_batch, split_patch, Parent};
use ssda::nets::ProbMap;
use ssda::objectives::{d_objective, dis_loss, entropy_map, g_objective, z_of, DomainLabel, LossWeights, Nets, ZMode};
use ssda::optim::{adam_update, poly_lr, sgd_update, AdamConfig, AdamState, SgdConfig, SgdState};
use ssda::pipeline::{run_cell, seed_sweep, CellOptions, RunSummary, SweepPlan};
use ssda::report::read_json;
use ssda::selection::{rank_and_select, sample_entropy, select_random, total_entropy, EntropyScore};
use ssda::tensor::Tensor;
use ssda::Scheme;

type Outcome = Result<String, String>;

struct Verdict {
    hard_failures: usize,
}

impl Verdict {
    fn report(&mut self, id: &str, name: &str, soft: bool, outcome: Outcome) {
        match outcome {
            Ok(detail) => println!("[PASS] {id} {name}: {detail}"),
            Err(detail) if soft => println!("[FAIL] {id} {name} (soft, reported only): {detail}"),
            Err(detail) => {
                self.hard_failures += 1;
                println!("[FAIL] {id} {name}: {detail}");
            }
        }
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn direct_entropy(p: &ProbMap) -> f64 {
    let mut h = 0.0;
    for r in 0..p.height() {
        for c in 0..p.width() {
            for k in 0..p.classes() {
                let v = p.get(r, c, k);
                if v > 0.0 {
                    h -= v * v.ln();
                }
            }
        }
    }
    h
}

fn entropy_criterion() -> Outcome {
    let t0 = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (h, w, c) = (r.gen_range(1..=32), r.gen_range(1..=32), r.gen_range(2..=8));
        let p = random_probs(&mut r, h, w, c);
        let oracle = direct_entropy(&p);
        let map: Tensor = entropy_map(&p);
        let mut map_err = 0.0f64;
        for k in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let v = p.get(i, j, k);
                    let e = if v > 0.0 { -v * v.ln() } else { 0.0 };
                    map_err = map_err.max((map.data()[(k * h + i) * w + j] - e).abs());
                }
            }
        }
        worst = worst.max(map_err).max((total_entropy(&p) - oracle).abs());
    }
    // sample_entropy on a network's main head
    let nets = small_nets(7, 3, 4);
    for s in 0..5 {
        let x = random_image(&mut rng(200 + s), 32, 32, 3);
        let (main, _) = nets.g.segment(&x).unwrap();
        worst = worst.max((sample_entropy(&nets.g, &x).unwrap() - direct_entropy(&main)).abs());
    }
    let (h, w, c) = (17, 23, 6);
    let uniform = ProbMap::from_tensor(&Tensor::full(&[c, h, w], 1.0 / c as f64)).unwrap();
    let uniform_err = (total_entropy(&uniform) - (h * w) as f64 * (c as f64).ln()).abs();
    let secs = t0.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, || format!("max deviation {worst:e}"))?;
    ensure(uniform_err <= 1e-9, || format!("uniform case off by {uniform_err:e}"))?;
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "max deviation {worst:.1e}, uniform {uniform_err:.1e}, {secs:.2} s"
    ))
}

fn gradient_criterion() -> Outcome {
    let t0 = Instant::now();
    let (d, c) = (3, 3);
    let probe = small_nets(0, d, c);
    let n_params = probe.g.params.numel() + probe.d_main.params.numel() + probe.d_aux.params.numel();
    ensure(n_params <= 5000, || format!("{n_params} parameters"))?;
    let mut worst = 0.0f64;
    let mut where_ = String::new();
    let (mut checked, mut straddling) = (0, 0);
    for scheme in [Scheme::Baseline, Scheme::Ltt, Scheme::Lts, Scheme::LtsMix] {
        for draw in 0..20u64 {
            let nets = small_nets(1000 + draw, d, c);
            let batch = random_batch(2000 + draw, draw, d, c);
            for side in [Side::G, Side::D] {
                // relative error floor: finite-difference roundoff at this
                // step is about 1e-10 in absolute terms
                let r = grad_check(scheme, &batch, &nets, side, 16, 1e-5, 1e-5, draw);
                checked += r.checked;
                straddling += r.straddling;
                if r.max_rel_err > worst {
                    worst = r.max_rel_err;
                    where_ = format!("{scheme} {side:?} draw {draw}");
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(worst < 1e-4, || format!("max relative error {worst:e} at {where_}"))?;
    ensure(straddling * 20 <= checked + straddling, || {
        format!(
            "{straddling} of {} coordinates straddle a ReLU kink",
            checked + straddling
        )
    })?;
    ensure(secs < 120.0, || format!("took {secs:.1} s"))?;
    Ok(format!(
        "{n_params} parameters, 4 schemes × 20 draws × (G, D), {checked} coordinates, max relative error {worst:.1e} \
         ({straddling} kink-straddling stencils skipped), {secs:.1} s"
    ))
}

fn heads(nets: &Nets, x: &ssda::data::ImageTensor, label: DomainLabel, w: (f64, f64)) -> f64 {
    let (zm, za) = z_of(&nets.g, x, ZMode::Entropy).unwrap();
    w.0 * dis_loss(&nets.d_main.discriminate(&zm).unwrap(), label)
        + w.1 * dis_loss(&nets.d_aux.discriminate(&za).unwrap(), label)
}

fn scheme_algebra_criterion() -> Outcome {
    let w = LossWeights::default();
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..10 {
        let nets = small_nets(300 + seed, 3, 4);
        let b = random_batch(400 + seed, seed, 3, 4);
        let mode = ZMode::Entropy;
        let x_tl = &b.labeled[0].image;
        let g_diff = g_objective(Scheme::Ltt, &b, &nets, &w, mode).unwrap()
            - g_objective(Scheme::Baseline, &b, &nets, &w, mode).unwrap();
        let g_oracle = heads(&nets, x_tl, DomainLabel::S, (w.adv_main, w.adv_aux));
        let d_diff = d_objective(Scheme::Lts, &b, &nets, mode).unwrap()
            - d_objective(Scheme::Baseline, &b, &nets, mode).unwrap();
        let d_oracle = heads(&nets, x_tl, DomainLabel::S, (1.0, 1.0));
        worst.0 = worst.0.max((g_diff - g_oracle).abs());
        worst.1 = worst.1.max((d_diff - d_oracle).abs());
    }
    ensure(worst.0 <= 1e-12 && worst.1 <= 1e-12, || {
        format!("G difference off by {:e}, D difference off by {:e}", worst.0, worst.1)
    })?;
    Ok(format!(
        "G residual {:.1e}, D residual {:.1e} over 10 draws",
        worst.0, worst.1
    ))
}

fn mixing_criterion() -> Outcome {
    let t0 = Instant::now();
    let (h, w, d, c) = (8, 8, 3, 5);
    let mut r = rng(55);
    for trial in 0..50u64 {
        let xs = random_image(&mut r, h, w, d);
        let xt = random_image(&mut r, h, w, d);
        let ys = random_labels(&mut r, h, w, c);
        let yt = random_labels(&mut r, h, w, c);
        for iter in [4 * trial, 4 * trial + 1, 4 * trial + 2, 4 * trial + 3] {
            let pair = mixed_source_batch(&xs, &ys, &xt, &yt, iter).map_err(|e| e.to_string())?;
            let plan = layout(iter);
            let mut pooled_in: Vec<u64> = xs.data().iter().chain(xt.data()).map(|v| v.to_bits()).collect();
            let mut pooled_out: Vec<u64> = pair
                .images
                .iter()
                .flat_map(|i| i.data().iter().map(|v| v.to_bits()))
                .collect();
            pooled_in.sort_unstable();
            pooled_out.sort_unstable();
            ensure(pooled_in == pooled_out, || {
                format!("multiset differs at iteration {iter}")
            })?;
            for (o, parents) in plan.iter().enumerate() {
                for row in 0..h {
                    for col in 0..w {
                        let q = 2 * usize::from(row >= h / 2) + usize::from(col >= w / 2);
                        let (x, y) = match parents[q] {
                            Parent::Source => (&xs, &ys),
                            Parent::Target => (&xt, &yt),
                        };
                        let img_ok = pair.images[o]
                            .pixel(row, col)
                            .iter()
                            .zip(x.pixel(row, col))
                            .all(|(a, b)| a.to_bits() == b.to_bits());
                        ensure(img_ok && pair.labels[o].get(row, col) == y.get(row, col), || {
                            format!("output {o} pixel ({row},{col}) at iteration {iter} has the wrong provenance")
                        })?;
                    }
                }
            }
        }
        let [a, b, cc, e] = split_patch(&xs).map_err(|e| e.to_string())?;
        ensure(mix_patch(&a, &b, &cc, &e).unwrap() == xs, || {
            "mix∘split is not the identity".into()
        })?;
        let [a, b, cc, e] = split_patch(&ys).map_err(|e| e.to_string())?;
        ensure(mix_patch(&a, &b, &cc, &e).unwrap() == ys, || {
            "label mix∘split is not the identity".into()
        })?;
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.2} s"))?;
    Ok(format!(
        "200 mixes bit-exact against the provenance oracle, {secs:.3} s"
    ))
}

fn selection_criterion() -> Outcome {
    let mut r = rng(77);
    let values: Vec<f64> = (0..1000).map(|_| r.gen_range(0..100) as f64 / 7.0).collect();
    let scores: Vec<EntropyScore> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| EntropyScore {
            sample_index: i,
            value: v,
        })
        .collect();
    for k in [0, 1, 10, 137, 500, 1000] {
        let mut order: Vec<usize> = (0..1000).collect();
        order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
        let mut oracle = order[..k].to_vec();
        oracle.sort_unstable();
        ensure(rank_and_select(&scores, k).unwrap() == oracle, || {
            format!("ranking differs at k = {k}")
        })?;
    }
    let (n, k, trials) = (200usize, 10usize, 100_000u64);
    ensure(
        select_random(n, k, 5).unwrap() == select_random(n, k, 5).unwrap(),
        || "random selection is not seed-deterministic".into(),
    )?;
    let mut hits = vec![0u64; n];
    for t in 0..trials {
        for i in select_random(n, k, t).unwrap() {
            hits[i] += 1;
        }
    }
    let p = k as f64 / n as f64;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    let worst = hits
        .iter()
        .map(|&h| (h as f64 / trials as f64 - p).abs() / sigma)
        .fold(0.0, f64::max);
    ensure(worst <= 3.0, || format!("inclusion frequency {worst:.2}σ from {p}"))?;
    Ok(format!(
        "ranking matches the stable sort; inclusion within {worst:.2}σ over 1e5 trials"
    ))
}

fn miou_criterion() -> Outcome {
    let mut r = rng(66);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let c = r.gen_range(2..=5);
        let mut map = || {
            let data = (0..256)
                .map(|_| {
                    if r.gen_bool(0.1) {
                        IGNORE
                    } else {
                        r.gen_range(0..c) as u8
                    }
                })
                .collect();
            LabelMap::new(16, 16, c, data).unwrap()
        };
        let (p, g) = (map(), map());
        let (mut inter, mut union) = (vec![0u64; c], vec![0u64; c]);
        for (&a, &b) in p.data().iter().zip(g.data()) {
            if a == IGNORE || b == IGNORE {
                continue;
            }
            for k in 0..c {
                inter[k] += u64::from(a as usize == k && b as usize == k);
                union[k] += u64::from(a as usize == k || b as usize == k);
            }
        }
        let cm = confusion_matrix(&[p], &[g], c).unwrap();
        for k in 0..c {
            let tp = cm.get(k, k);
            let row: u64 = (0..c).map(|j| cm.get(k, j)).sum();
            let col: u64 = (0..c).map(|i| cm.get(i, k)).sum();
            ensure(tp == inter[k] && row + col - tp == union[k], || {
                format!("class {k} counts differ")
            })?;
        }
        let present: Vec<f64> = (0..c)
            .filter(|&k| union[k] > 0)
            .map(|k| inter[k] as f64 / union[k] as f64)
            .collect();
        let oracle = present.iter().sum::<f64>() / present.len() as f64;
        worst = worst.max((miou(&cm).unwrap().miou - oracle).abs());
    }
    let gt = LabelMap::new(2, 2, 2, vec![0, 0, 1, 1]).unwrap();
    let pred = LabelMap::new(2, 2, 2, vec![0, 1, 1, 1]).unwrap();
    let hand = miou(&confusion_matrix(&[pred], &[gt], 2).unwrap()).unwrap();
    ensure(hand.per_class_iou == vec![Some(0.5), Some(2.0 / 3.0)], || {
        format!("hand case IoU {:?}", hand.per_class_iou)
    })?;
    ensure((hand.miou - 7.0 / 12.0).abs() <= 1e-12, || {
        format!("hand case mIoU {}", hand.miou)
    })?;
    ensure(worst <= 1e-12, || format!("max mIoU deviation {worst:e}"))?;
    Ok(format!("50 random pairs, max deviation {worst:.1e}; hand case 7/12"))
}

fn optimizer_criterion() -> Outcome {
    use ssda::autodiff::{Gradients, ParamStore};
    let store = |v: f64| {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::new(vec![1], vec![v]).unwrap());
        s
    };
    let grad = |v: f64| -> Gradients { [("w".to_string(), Tensor::new(vec![1], vec![v]).unwrap())].into() };
    let get = |s: &ParamStore| s.get("w").unwrap().data()[0];

    let base = 2.5e-4;
    ensure(
        poly_lr(base, 0, 3000).unwrap() == base && poly_lr(base, 3000, 3000).unwrap() == 0.0,
        || "poly_lr endpoints".into(),
    )?;
    let mid = (poly_lr(base, 1500, 3000).unwrap() - base * 0.5f64.powf(0.9)).abs();
    ensure(mid <= 1e-12, || format!("midpoint off by {mid:e}"))?;

    let (lr, mu, g) = (0.01, 0.9, 0.37);
    let mut p = store(1.0);
    let mut st = SgdState::default();
    for _ in 0..2 {
        sgd_update(
            &mut p,
            &grad(g),
            &mut st,
            lr,
            SgdConfig {
                momentum: mu,
                weight_decay: 0.0,
            },
        )
        .unwrap();
    }
    let sgd_err = ((1.0 - get(&p)) - lr * g * (2.0 + mu)).abs();
    ensure(sgd_err <= 1e-12, || format!("SGD displacement off by {sgd_err:e}"))?;

    let cfg = AdamConfig {
        beta1: 0.9,
        beta2: 0.99,
        eps: 1e-8,
    };
    let mut p = store(0.2);
    let mut state = AdamState::default();
    let (mut theta, mut m, mut v) = (0.2f64, 0.0f64, 0.0f64);
    let mut adam_err = 0.0f64;
    for (t, g) in [0.4, -0.3, 0.25, 0.9, -0.05].into_iter().enumerate() {
        let lr = poly_lr(1e-4, t, 5).unwrap();
        adam_update(&mut [&mut p], &grad(g), &mut state, lr, cfg).unwrap();
        let step = t as i32 + 1;
        m = 0.9 * m + 0.1 * g;
        v = 0.99 * v + 0.01 * g * g;
        theta -= lr * (m / (1.0 - 0.9f64.powi(step))) / ((v / (1.0 - 0.99f64.powi(step))).sqrt() + 1e-8);
        adam_err = adam_err.max((get(&p) - theta).abs());
    }
    ensure(adam_err <= 1e-12, || format!("Adam trace off by {adam_err:e}"))?;
    Ok(format!("midpoint {mid:.1e}, SGD {sgd_err:.1e}, Adam {adam_err:.1e}"))
}

fn tiny_config(scheme: Scheme, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("image_h", "32"),
        ("image_w", "32"),
        ("n_classes", "3"),
        ("n_images", "20"),
        ("n_val", "6"),
        ("ntl", "4"),
        ("max_iter", "40"),
        ("ckpt_every", "10"),
        ("pretrain_budget", "20"),
        ("pretrain_eval_every", "10"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.scheme = scheme;
    cfg.out_dir = Some(out.to_path_buf());
    cfg
}

fn determinism_criterion() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let read = |p: PathBuf| std::fs::read(&p).map_err(|e| format!("{}: {e}", p.display()));
    for scheme in [Scheme::St, Scheme::Ltt, Scheme::LtsMix] {
        let dir = |name: &str| tmp.path().join(format!("{scheme}-{name}"));
        let bench = generate_benchmark(&tiny_config(scheme, &dir("a")).benchmark).map_err(|e| e.to_string())?;
        let run = |name: &str, opts: CellOptions| run_cell(&tiny_config(scheme, &dir(name)), &bench, None, &opts);
        let a = run("a", CellOptions::default()).map_err(|e| e.to_string())?;
        run("b", CellOptions::default()).map_err(|e| e.to_string())?;
        ensure(
            read(dir("a").join("metrics.csv"))? == read(dir("b").join("metrics.csv"))?,
            || format!("{scheme}: metrics.csv differs between identical runs"),
        )?;
        run(
            "c",
            CellOptions {
                resume: false,
                stop_after: Some(20),
            },
        )
        .map_err(|e| e.to_string())?;
        let c = run(
            "c",
            CellOptions {
                resume: true,
                stop_after: None,
            },
        )
        .map_err(|e| e.to_string())?;
        ensure(
            c.summary.best == a.summary.best && c.summary.last == a.summary.last,
            || format!("{scheme}: resumed report differs"),
        )?;
        ensure(
            read(dir("a").join("metrics.csv"))? == read(dir("c").join("metrics.csv"))?,
            || format!("{scheme}: resumed metrics.csv differs"),
        )?;
        ensure(c.checkpoint == a.checkpoint, || {
            format!("{scheme}: resumed final state differs")
        })?;
    }
    Ok("ST, LTT, LTS-Mix: byte-identical reports; resume at iteration 20 of 40 reproduces the straight run".into())
}

fn table_criterion() -> Outcome {
    let rows: [(&str, [f64; 5], f64, f64); 2] = [
        ("LTS ntl=100", [53.04, 52.82, 53.0, 51.62, 52.2], 52.54, 0.55),
        ("LTS-Mix ntl=1000", [65.14, 65.36, 64.58, 65.47, 64.24], 64.96, 0.47),
    ];
    let mut out = Vec::new();
    for (name, values, mean, std) in rows {
        let (m, s) = mean_std(&values).unwrap();
        ensure((m - mean).abs() <= 0.01 && (s - std).abs() <= 0.01, || {
            format!("{name}: {m:.4} / {s:.4} vs {mean} / {std}")
        })?;
        out.push(format!("{name} {m:.2}/{s:.2}"));
    }
    Ok(out.join(", "))
}

fn sweep_root(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance-sweep")
        .join(name)
}

const SEEDS: [u64; 5] = [10, 20, 30, 40, 50];

/// Runs (or reuses) one sweep and returns its summaries with the run times.
fn sweep(selection: SelectionMethod, schemes: &[Scheme]) -> Result<(Vec<SweepSummary>, Vec<f64>), String> {
    let base = RunConfig {
        selection,
        ..RunConfig::default()
    };
    let root = sweep_root(selection.as_str());
    let plan = SweepPlan {
        seeds: SEEDS.to_vec(),
        schemes: schemes.to_vec(),
        ntl_values: vec![10],
        selection,
    };
    let bench = generate_benchmark(&base.benchmark).map_err(|e| e.to_string())?;
    let summaries = seed_sweep(&base, &bench, &plan, &root, true).map_err(|e| e.to_string())?;
    let mut times = Vec::new();
    for s in &summaries {
        for seed in &s.seeds {
            let cell = format!("{}-ntl10-{}-seed{seed}", s.scheme, selection.as_str());
            let run: RunSummary = read_json(&root.join(cell).join("summary.json")).map_err(|e| e.to_string())?;
            times.push(run.wall_seconds);
        }
    }
    Ok((summaries, times))
}

fn find(summaries: &[SweepSummary], scheme: Scheme) -> Result<&SweepSummary, String> {
    summaries
        .iter()
        .find(|s| s.scheme == scheme.as_str())
        .ok_or_else(|| format!("no runs for {scheme}"))
}

fn per_seed_table(summaries: &[SweepSummary]) -> String {
    let mut lines = vec![format!(
        "    {:<9} {} {:>7} {:>6}",
        "scheme",
        SEEDS.map(|s| format!("{:>7}", format!("s{s}"))).join(""),
        "mean",
        "std"
    )];
    for s in summaries {
        let cells: String = s
            .values
            .iter()
            .map(|v| v.map_or(format!("{:>7}", "NA"), |v| format!("{:>7.2}", 100.0 * v)))
            .collect();
        lines.push(format!(
            "    {:<9} {} {:>7.2} {:>6.2}",
            s.scheme,
            cells,
            100.0 * s.mean,
            100.0 * s.std
        ));
    }
    lines.join("\n")
}

fn compare(a: &SweepSummary, b: &SweepSummary) -> (bool, String) {
    let margin = 100.0 * (a.mean - b.mean);
    let pooled = 100.0 * pooled_std(a, b);
    let note = if margin.abs() <= pooled {
        ", within one pooled std"
    } else {
        ""
    };
    (
        a.mean >= b.mean,
        format!(
            "{} {:.2} vs {} {:.2} (margin {margin:+.2}, pooled std {pooled:.2}{note})",
            a.scheme,
            100.0 * a.mean,
            b.scheme,
            100.0 * b.mean
        ),
    )
}

fn ordering_criterion() -> (Outcome, Option<Vec<SweepSummary>>) {
    let t0 = Instant::now();
    let (summaries, times) = match sweep(SelectionMethod::Entropy, &Scheme::ALL) {
        Ok(x) => x,
        Err(e) => return (Err(e), None),
    };
    let result = (|| {
        for s in &summaries {
            ensure(s.missing_seeds().is_empty(), || {
                format!("{} is missing seeds {:?}", s.scheme, s.missing_seeds())
            })?;
        }
        let get = |s| find(&summaries, s);
        let (a_ok, a) = compare(get(Scheme::LtsMix)?, get(Scheme::Baseline)?);
        let (b_ok, b) = compare(get(Scheme::Lts)?, get(Scheme::Ltt)?);
        let st = get(Scheme::St)?;
        let mut c_ok = true;
        let mut c = Vec::new();
        for scheme in [Scheme::Baseline, Scheme::Ltt, Scheme::Lts, Scheme::LtsMix] {
            let (ok, text) = compare(get(scheme)?, st);
            c_ok &= ok;
            c.push(text);
        }
        let slowest = times.iter().copied().fold(0.0, f64::max);
        let total: f64 = times.iter().sum();
        let detail = format!(
            "\n  (a) {a}\n  (b) {b}\n  (c) {}\n  slowest run {slowest:.0} s, sum of runs {:.1} min (this invocation {:.1} min)\n{}",
            c.join("; "),
            total / 60.0,
            t0.elapsed().as_secs_f64() / 60.0,
            per_seed_table(&summaries)
        );
        let mut failed = Vec::new();
        for (ok, tag) in [
            (a_ok, "(a)"),
            (b_ok, "(b)"),
            (c_ok, "(c)"),
            (slowest <= 600.0, "run time"),
            (total <= 4.0 * 3600.0, "sweep time"),
        ] {
            if !ok {
                failed.push(tag);
            }
        }
        if failed.is_empty() {
            Ok(detail)
        } else {
            Err(format!("{} violated{detail}", failed.join(", ")))
        }
    })();
    (result, Some(summaries))
}

fn labelled(s: &SweepSummary, name: &str) -> SweepSummary {
    SweepSummary {
        scheme: name.to_string(),
        ..s.clone()
    }
}

fn selection_strategy_criterion(entropy: Option<Vec<SweepSummary>>) -> Outcome {
    let entropy = entropy.ok_or("entropy sweep unavailable")?;
    let (random, _) = sweep(SelectionMethod::Random, &[Scheme::LtsMix])?;
    let e = find(&entropy, Scheme::LtsMix)?;
    let r = find(&random, Scheme::LtsMix)?;
    let pooled = pooled_std(e, r);
    let detail = format!(
        "LTS-Mix entropy {:.2} ± {:.2} vs random {:.2} ± {:.2}, threshold {:.2}\n{}",
        100.0 * e.mean,
        100.0 * e.std,
        100.0 * r.mean,
        100.0 * r.std,
        100.0 * (r.mean - pooled),
        per_seed_table(&[labelled(e, "entropy"), labelled(r, "random")])
    );
    if e.mean >= r.mean - pooled {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let mut v = Verdict { hard_failures: 0 };
    v.report("1.", "entropy correctness", false, entropy_criterion());
    v.report("2.", "gradient checks", false, gradient_criterion());
    v.report("3.", "scheme algebra", false, scheme_algebra_criterion());
    v.report("4.", "quadrant mixing exactness", false, mixing_criterion());
    v.report("5.", "selection", false, selection_criterion());
    v.report("6.", "mIoU", false, miou_criterion());
    v.report("7.", "schedule and optimizers", false, optimizer_criterion());
    v.report("8.", "determinism and resume", false, determinism_criterion());
    v.report("9.", "published-table arithmetic", false, table_criterion());
    if std::env::var_os("SSDA_ACCEPTANCE_QUICK").is_some() {
        println!("[SKIP] 10. desk-scale ordering experiment (SSDA_ACCEPTANCE_QUICK set)");
        println!("[SKIP] 11. selection-strategy experiment (SSDA_ACCEPTANCE_QUICK set)");
    } else {
        let (outcome, entropy) = ordering_criterion();
        v.report("10.", "desk-scale ordering experiment", false, outcome);
        v.report(
            "11.",
            "selection-strategy experiment",
            true,
            selection_strategy_criterion(entropy),
        );
    }
    println!("acceptance: {} hard failure(s)", v.hard_failures);
    if v.hard_failures > 0 {
        std::process::exit(1);
    }
}
