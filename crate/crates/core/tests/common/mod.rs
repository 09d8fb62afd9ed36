//! Shared fixtures for the integration tests and the acceptance suite.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ssda::autodiff::ParamStore;
use ssda::data::{Batch, ImageTensor, LabelMap, Sample};
use ssda::nets::{Discriminator, DiscriminatorConfig, ProbMap, SegNet, SegNetConfig};
use ssda::objectives::Nets;
use ssda::tensor::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image<R: Rng>(r: &mut R, h: usize, w: usize, d: usize) -> ImageTensor {
    ImageTensor::new(h, w, d, (0..h * w * d).map(|_| r.gen::<f64>()).collect()).unwrap()
}

pub fn random_labels<R: Rng>(r: &mut R, h: usize, w: usize, c: usize) -> LabelMap {
    LabelMap::new(h, w, c, (0..h * w).map(|_| r.gen_range(0..c) as u8).collect()).unwrap()
}

/// A softmax-normalized probability map with random logits.
pub fn random_probs<R: Rng>(r: &mut R, h: usize, w: usize, c: usize) -> ProbMap {
    let mut data = Vec::with_capacity(c * h * w);
    let logits: Vec<f64> = (0..c * h * w).map(|_| r.gen_range(-4.0..4.0)).collect();
    for k in 0..c {
        for i in 0..h * w {
            let z: f64 = (0..c).map(|j| logits[j * h * w + i].exp()).sum();
            data.push(logits[k * h * w + i].exp() / z);
        }
    }
    ProbMap::from_tensor(&Tensor::new(vec![c, h, w], data).unwrap()).unwrap()
}

/// Small nets on 32×32 inputs, a few hundred parameters each, with random
/// biases.
pub fn small_nets(seed: u64, d: usize, c: usize) -> Nets {
    let mut r = rng(seed);
    let seg = SegNetConfig {
        widths: vec![3, 3, 4, 4],
        head_init_std: 0.3,
        ..SegNetConfig::new(d, c, 32, 32)
    };
    let disc = DiscriminatorConfig {
        init_std: 0.3,
        ..DiscriminatorConfig::with_widths(c, vec![2, 2, 2, 2, 1])
    };
    let mut nets = Nets {
        g: SegNet::new(seg, &mut r).unwrap(),
        d_main: Discriminator::new(disc.clone(), "d_main", &mut r).unwrap(),
        d_aux: Discriminator::new(disc, "d_aux", &mut r).unwrap(),
    };
    // zero biases put whole dead patches exactly on the ReLU kink
    for store in [&mut nets.g.params, &mut nets.d_main.params, &mut nets.d_aux.params] {
        for (name, t) in store.iter_mut() {
            if name.ends_with(".b") {
                t.data_mut().iter_mut().for_each(|b| *b = r.gen_range(-0.1..0.1));
            }
        }
    }
    nets
}

/// One full adversarial batch of 32×32 samples.
pub fn random_batch(seed: u64, iteration: u64, d: usize, c: usize) -> Batch {
    let mut r = rng(seed);
    let mut labeled = || Sample::labeled(random_image(&mut r, 32, 32, d), random_labels(&mut r, 32, 32, c)).unwrap();
    let source = vec![labeled()];
    let target = vec![labeled()];
    let mut r = rng(seed ^ 0x5eed);
    let unlabeled = (0..2)
        .map(|_| Sample::unlabeled(random_image(&mut r, 32, 32, d)))
        .collect();
    Batch {
        iteration,
        source,
        labeled: target,
        unlabeled,
    }
}

pub fn numel(store: &ParamStore) -> usize {
    store.numel()
}

/// Flat `(name, index)` coordinates of a store.
pub fn coordinates(store: &ParamStore) -> Vec<(String, usize)> {
    store
        .iter()
        .flat_map(|(name, t)| (0..t.len()).map(move |i| (name.to_string(), i)))
        .collect()
}

pub fn nudge(store: &mut ParamStore, name: &str, index: usize, delta: f64) {
    store.get_mut(name).unwrap().data_mut()[index] += delta;
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    G,
    D,
}

/// Result of a finite-difference comparison.
#[derive(Clone, Copy, Debug, Default)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Coordinates whose stencil leaves the current linear piece of some
    /// ReLU; the central difference is no derivative estimate there.
    pub straddling: usize,
}

/// Central finite differences of one objective against its tape gradients
/// at `n_coords` random coordinates of the trainable side.
#[allow(clippy::too_many_arguments)]
pub fn grad_check(
    scheme: ssda::Scheme,
    batch: &Batch,
    nets: &Nets,
    side: Side,
    n_coords: usize,
    step: f64,
    floor: f64,
    seed: u64,
) -> GradCheck {
    use rand::seq::SliceRandom;
    use ssda::objectives::{build_d_objective, build_g_objective, LossWeights, Objective, ZMode};

    let weights = LossWeights::default();
    let mode = ZMode::Entropy;
    let eval = |n: &Nets| -> Objective {
        match side {
            Side::G => build_g_objective(scheme, batch, n, &weights, mode).unwrap(),
            Side::D => build_d_objective(scheme, batch, n, mode).unwrap(),
        }
    };
    let obj = eval(nets);
    let pattern = obj.graph.activation_pattern();
    let grads = obj.graph.gradients(obj.loss).unwrap();
    let mut coords = match side {
        Side::G => coordinates(&nets.g.params),
        Side::D => [coordinates(&nets.d_main.params), coordinates(&nets.d_aux.params)].concat(),
    };
    coords.shuffle(&mut rng(seed));
    coords.truncate(n_coords);
    let shifted = |name: &str, i: usize, delta: f64| {
        let mut n = nets.clone();
        let store = if name.starts_with("g.") {
            &mut n.g.params
        } else if name.starts_with("d_main.") {
            &mut n.d_main.params
        } else {
            &mut n.d_aux.params
        };
        nudge(store, name, i, delta);
        let o = eval(&n);
        (o.value(), o.graph.activation_pattern())
    };
    let mut out = GradCheck::default();
    let on_kink = pattern.contains(&0);
    for (name, i) in &coords {
        let (plus, p_plus) = shifted(name, *i, step);
        let (minus, p_minus) = shifted(name, *i, -step);
        if on_kink || p_plus != pattern || p_minus != pattern {
            out.straddling += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads.get(name).map_or(0.0, |g| g.data()[*i]);
        out.max_rel_err = out.max_rel_err.max(rel_err(analytic, numeric, floor));
        out.checked += 1;
    }
    out
}
