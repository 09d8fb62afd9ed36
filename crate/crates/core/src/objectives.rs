//! Loss functions and the per-scheme objective assemblies for the
//! segmentation network G and the two per-head discriminators.
//!
//! Discriminator label convention: source (`S`) is 1, target (`T`) is 0.
//! Every group term is a mean over the group's samples (1 source, 1 labeled
//! target, 2 unlabeled target per iteration), and every adversarial or
//! discriminator term is summed over the main and auxiliary heads, each head
//! with its own discriminator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{entropy_term, Bound, Graph, Var, LOG_EPS};
use crate::data::{Batch, ImageTensor, LabelMap, Sample};
use crate::error::{Error, Result};
use crate::mixing::{mixed_source_batch, resize_labels_to_target, resize_to_target};
use crate::nets::{Discriminator, ProbMap, ScoreMap, SegNet, SegOutputs};
use crate::scheme::Scheme;
use crate::tensor::Tensor;

/// What the discriminator sees: the probability map itself or its
/// elementwise entropy map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZMode {
    Prob,
    Entropy,
}

impl ZMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ZMode::Prob => "prob",
            ZMode::Entropy => "entropy",
        }
    }
}

impl std::str::FromStr for ZMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prob" => Ok(ZMode::Prob),
            "entropy" => Ok(ZMode::Entropy),
            other => Err(Error::Config(format!("unknown z mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainLabel {
    /// Source, target value 1.
    S,
    /// Target, target value 0.
    T,
}

impl DomainLabel {
    fn is_one(self) -> bool {
        self == DomainLabel::S
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub seg_main: f64,
    pub seg_aux: f64,
    pub adv_main: f64,
    pub adv_aux: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            seg_main: 1.0,
            seg_aux: 0.1,
            adv_main: 1e-3,
            adv_aux: 2e-4,
        }
    }
}

/// G and one discriminator per output head.
#[derive(Clone, Debug, PartialEq)]
pub struct Nets {
    pub g: SegNet,
    pub d_main: Discriminator,
    pub d_aux: Discriminator,
}

pub const COMPONENTS: [&str; 7] = [
    "seg_source",
    "seg_labeled_target",
    "adv_labeled",
    "adv_unlabeled",
    "d_source",
    "d_labeled_target",
    "d_unlabeled_target",
];
const G_COMPONENTS: [&str; 4] = ["seg_source", "seg_labeled_target", "adv_labeled", "adv_unlabeled"];
const D_COMPONENTS: [&str; 3] = ["d_source", "d_labeled_target", "d_unlabeled_target"];

/// Per-iteration losses with their decomposition. Components are stored
/// with their weights already applied, so each total is their plain sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeLossBundle {
    pub g_loss: f64,
    pub d_loss: f64,
    pub components: BTreeMap<String, f64>,
}

impl SchemeLossBundle {
    pub fn new(g: &Objective, d: &Objective) -> Self {
        let mut components: BTreeMap<String, f64> = COMPONENTS.iter().map(|k| (k.to_string(), 0.0)).collect();
        for (k, v) in g.components.iter().chain(&d.components) {
            components.insert(k.clone(), *v);
        }
        SchemeLossBundle {
            g_loss: g.value(),
            d_loss: d.value(),
            components,
        }
    }

    /// Largest deviation between a total and the sum of its components.
    pub fn consistency_error(&self) -> f64 {
        let sum = |keys: &[&str]| {
            keys.iter()
                .map(|k| self.components.get(*k).copied().unwrap_or(0.0))
                .sum::<f64>()
        };
        (self.g_loss - sum(&G_COMPONENTS))
            .abs()
            .max((self.d_loss - sum(&D_COMPONENTS)).abs())
    }

    pub fn component(&self, name: &str) -> f64 {
        self.components.get(name).copied().unwrap_or(0.0)
    }
}

/// Elementwise `-p log p` with `0 log 0 = 0`.
pub fn entropy_map(p: &ProbMap) -> Tensor {
    let t = p.to_tensor();
    let data = t.data().iter().map(|&v| entropy_term(v)).collect();
    Tensor::new(t.shape().to_vec(), data).expect("same shape")
}

fn masked_ce(p: &ProbMap, y: &LabelMap) -> Result<f64> {
    if (p.height(), p.width()) != (y.height(), y.width()) {
        return Err(Error::Dimension("probability and label maps differ in size".into()));
    }
    let (mut total, mut count) = (0.0, 0usize);
    for r in 0..y.height() {
        for c in 0..y.width() {
            let k = y.get(r, c) as usize;
            if k < p.classes() {
                total -= p.get(r, c, k).max(LOG_EPS).ln();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::DegenerateLabel("every pixel is IGNORE".into()));
    }
    Ok(total / count as f64)
}

/// `w_main · CE(P_main, y) + w_aux · CE(P_aux, y)`, CE averaged over
/// non-IGNORE pixels.
pub fn seg_loss(p_main: &ProbMap, p_aux: &ProbMap, y: &LabelMap, weights: &LossWeights) -> Result<f64> {
    Ok(weights.seg_main * masked_ce(p_main, y)? + weights.seg_aux * masked_ce(p_aux, y)?)
}

/// Mean binary cross entropy of a score map against a domain label.
pub fn dis_loss(score: &ScoreMap, label: DomainLabel) -> f64 {
    let total: f64 = score
        .data
        .iter()
        .map(|&s| match label {
            DomainLabel::S => -s.max(LOG_EPS).ln(),
            DomainLabel::T => -(1.0 - s).max(LOG_EPS).ln(),
        })
        .sum();
    total / score.data.len() as f64
}

/// Discriminator inputs `(z_main, z_aux)` for one image.
pub fn z_of(net: &SegNet, x: &ImageTensor, mode: ZMode) -> Result<(Tensor, Tensor)> {
    let (main, aux) = net.segment(x)?;
    Ok(match mode {
        ZMode::Prob => (main.to_tensor(), aux.to_tensor()),
        ZMode::Entropy => (entropy_map(&main), entropy_map(&aux)),
    })
}

/// A scalar objective still attached to its tape.
pub struct Objective {
    pub graph: Graph,
    pub loss: Var,
    pub components: BTreeMap<String, f64>,
}

impl Objective {
    pub fn value(&self) -> f64 {
        self.graph.scalar(self.loss)
    }
}

struct Bindings {
    g: Bound,
    d_main: Bound,
    d_aux: Bound,
}

fn seg_node(graph: &mut Graph, out: SegOutputs, y: &LabelMap, w: &LossWeights) -> Result<Var> {
    let main = graph.cross_entropy(out.main, y.data())?;
    let aux = graph.cross_entropy(out.aux, y.data())?;
    graph.weighted_sum(&[(main, w.seg_main), (aux, w.seg_aux)])
}

fn z_nodes(graph: &mut Graph, out: SegOutputs, mode: ZMode) -> (Var, Var) {
    match mode {
        ZMode::Prob => (out.main, out.aux),
        ZMode::Entropy => (graph.entropy_map(out.main), graph.entropy_map(out.aux)),
    }
}

/// `Σ_head weight_head · L_dis(D_head(z_head), label)`.
fn dis_heads(
    graph: &mut Graph,
    nets: &Nets,
    b: &Bindings,
    z: (Var, Var),
    label: DomainLabel,
    weights: (f64, f64),
) -> Result<Vec<(Var, f64)>> {
    let s_main = nets.d_main.forward(graph, &b.d_main, z.0)?;
    let s_aux = nets.d_aux.forward(graph, &b.d_aux, z.1)?;
    let l_main = graph.binary_cross_entropy(s_main, label.is_one())?;
    let l_aux = graph.binary_cross_entropy(s_aux, label.is_one())?;
    Ok(vec![(l_main, weights.0), (l_aux, weights.1)])
}

/// Group mean of per-sample weighted head terms.
fn group_term(
    graph: &mut Graph,
    nets: &Nets,
    b: &Bindings,
    zs: &[(Var, Var)],
    label: DomainLabel,
    weights: (f64, f64),
) -> Result<Var> {
    let n = zs.len() as f64;
    let mut terms = Vec::new();
    for z in zs {
        for (v, w) in dis_heads(graph, nets, b, *z, label, weights)? {
            terms.push((v, w / n));
        }
    }
    graph.weighted_sum(&terms)
}

fn image_var(graph: &mut Graph, x: &ImageTensor) -> Var {
    graph.input(x.to_chw())
}

/// Source and labeled-target samples as they enter the objectives: LTS-Mix
/// swaps them for the mixed pair of this iteration.
fn supervised_pair(scheme: Scheme, batch: &Batch) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if scheme != Scheme::LtsMix {
        return Ok((batch.source.clone(), batch.labeled.clone()));
    }
    let (Some(s), Some(t)) = (batch.source.first(), batch.labeled.first()) else {
        return Err(Error::Config(
            "LTS-Mix needs one source and one labeled-target sample".into(),
        ));
    };
    let size = (t.image.height(), t.image.width());
    let xs = resize_to_target(&s.image, size)?;
    let ys = resize_labels_to_target(s.label()?, size)?;
    let mixed = mixed_source_batch(&xs, &ys, &t.image, t.label()?, batch.iteration)?;
    let [x1, x2] = mixed.images;
    let [y1, y2] = mixed.labels;
    Ok((vec![Sample::labeled(x1, y1)?], vec![Sample::labeled(x2, y2)?]))
}

fn check_pools(scheme: Scheme, batch: &Batch) -> Result<()> {
    if batch.labeled.is_empty() {
        return Err(Error::Config(format!("scheme {scheme} needs labeled-target samples")));
    }
    if scheme.is_adversarial() && (batch.source.is_empty() || batch.unlabeled.is_empty()) {
        return Err(Error::Config(format!(
            "scheme {scheme} needs source and unlabeled-target samples"
        )));
    }
    Ok(())
}

fn mean_seg(graph: &mut Graph, nets: &Nets, b: &Bindings, samples: &[Sample], w: &LossWeights) -> Result<Var> {
    let n = samples.len() as f64;
    let mut terms = Vec::with_capacity(samples.len());
    for s in samples {
        let x = image_var(graph, &s.image);
        let out = nets.g.forward(graph, &b.g, x)?;
        terms.push((seg_node(graph, out, s.label()?, w)?, 1.0 / n));
    }
    graph.weighted_sum(&terms)
}

/// Mean segmentation loss of `net` over labeled samples, nothing else.
pub fn build_seg_objective(net: &SegNet, samples: &[Sample], weights: &LossWeights) -> Result<Objective> {
    if samples.is_empty() {
        return Err(Error::Config("segmentation objective needs at least one sample".into()));
    }
    let mut graph = Graph::new();
    let bound = graph.bind(&net.params, true);
    let n = samples.len() as f64;
    let mut terms = Vec::with_capacity(samples.len());
    for s in samples {
        let x = image_var(&mut graph, &s.image);
        let out = net.forward(&mut graph, &bound, x)?;
        terms.push((seg_node(&mut graph, out, s.label()?, weights)?, 1.0 / n));
    }
    let loss = graph.weighted_sum(&terms)?;
    let components = BTreeMap::from([("seg_labeled_target".to_string(), graph.scalar(loss))]);
    Ok(Objective {
        graph,
        loss,
        components,
    })
}

/// Builds G's objective with D frozen.
///
/// * ST: segmentation loss on the labeled target sample.
/// * Baseline, LTS: source and labeled-target segmentation losses plus the
///   adversarial term pushing unlabeled-target predictions towards `S`.
/// * LTT: the same plus an adversarial term on the labeled target sample.
/// * LTS-Mix: as LTS with the mixed pair in place of the source and
///   labeled-target samples.
pub fn build_g_objective(
    scheme: Scheme,
    batch: &Batch,
    nets: &Nets,
    weights: &LossWeights,
    mode: ZMode,
) -> Result<Objective> {
    check_pools(scheme, batch)?;
    let mut graph = Graph::new();
    let b = Bindings {
        g: graph.bind(&nets.g.params, true),
        d_main: graph.bind(&nets.d_main.params, false),
        d_aux: graph.bind(&nets.d_aux.params, false),
    };
    let mut components = BTreeMap::new();
    let mut parts = Vec::new();

    if scheme == Scheme::St {
        let seg = mean_seg(&mut graph, nets, &b, &batch.labeled, weights)?;
        components.insert("seg_labeled_target".to_string(), graph.scalar(seg));
        let loss = graph.weighted_sum(&[(seg, 1.0)])?;
        return Ok(Objective {
            graph,
            loss,
            components,
        });
    }

    let (source, labeled) = supervised_pair(scheme, batch)?;
    let adv_w = (weights.adv_main, weights.adv_aux);

    let seg_s = mean_seg(&mut graph, nets, &b, &source, weights)?;
    parts.push(("seg_source", seg_s));

    // labeled target: segmentation, plus an adversarial term under LTT
    let n_l = labeled.len() as f64;
    let mut seg_l_terms = Vec::new();
    let mut z_l = Vec::new();
    for s in &labeled {
        let x = image_var(&mut graph, &s.image);
        let out = nets.g.forward(&mut graph, &b.g, x)?;
        seg_l_terms.push((seg_node(&mut graph, out, s.label()?, weights)?, 1.0 / n_l));
        if scheme == Scheme::Ltt {
            z_l.push(z_nodes(&mut graph, out, mode));
        }
    }
    let seg_l = graph.weighted_sum(&seg_l_terms)?;
    parts.push(("seg_labeled_target", seg_l));
    if scheme == Scheme::Ltt {
        let adv_l = group_term(&mut graph, nets, &b, &z_l, DomainLabel::S, adv_w)?;
        parts.push(("adv_labeled", adv_l));
    }

    let mut z_u = Vec::new();
    for s in &batch.unlabeled {
        let x = image_var(&mut graph, &s.image);
        let out = nets.g.forward(&mut graph, &b.g, x)?;
        z_u.push(z_nodes(&mut graph, out, mode));
    }
    let adv_u = group_term(&mut graph, nets, &b, &z_u, DomainLabel::S, adv_w)?;
    parts.push(("adv_unlabeled", adv_u));

    for (name, v) in &parts {
        components.insert(name.to_string(), graph.scalar(*v));
    }
    let terms: Vec<(Var, f64)> = parts.iter().map(|(_, v)| (*v, 1.0)).collect();
    let loss = graph.weighted_sum(&terms)?;
    Ok(Objective {
        graph,
        loss,
        components,
    })
}

/// Builds the discriminators' objective with G frozen.
///
/// * Baseline: source as `S`, unlabeled target as `T`.
/// * LTS, LTS-Mix: additionally the labeled target (or the second mixed
///   image) as `S`.
/// * LTT: additionally the labeled target as `T`.
/// * ST: no discriminator objective (constant zero).
pub fn build_d_objective(scheme: Scheme, batch: &Batch, nets: &Nets, mode: ZMode) -> Result<Objective> {
    check_pools(scheme, batch)?;
    let mut graph = Graph::new();
    if scheme == Scheme::St {
        let loss = graph.input(Tensor::scalar(0.0));
        return Ok(Objective {
            graph,
            loss,
            components: BTreeMap::new(),
        });
    }
    let b = Bindings {
        g: graph.bind(&nets.g.params, false),
        d_main: graph.bind(&nets.d_main.params, true),
        d_aux: graph.bind(&nets.d_aux.params, true),
    };
    let (source, labeled) = supervised_pair(scheme, batch)?;
    let zs = |graph: &mut Graph, samples: &[Sample]| -> Result<Vec<(Var, Var)>> {
        samples
            .iter()
            .map(|s| {
                let x = image_var(graph, &s.image);
                let out = nets.g.forward(graph, &b.g, x)?;
                Ok(z_nodes(graph, out, mode))
            })
            .collect()
    };
    let z_s = zs(&mut graph, &source)?;
    let z_u = zs(&mut graph, &batch.unlabeled)?;
    let mut parts = vec![(
        "d_source",
        group_term(&mut graph, nets, &b, &z_s, DomainLabel::S, (1.0, 1.0))?,
    )];
    let labeled_role = match scheme {
        Scheme::Lts | Scheme::LtsMix => Some(DomainLabel::S),
        Scheme::Ltt => Some(DomainLabel::T),
        _ => None,
    };
    if let Some(role) = labeled_role {
        let z_l = zs(&mut graph, &labeled)?;
        parts.push((
            "d_labeled_target",
            group_term(&mut graph, nets, &b, &z_l, role, (1.0, 1.0))?,
        ));
    }
    parts.push((
        "d_unlabeled_target",
        group_term(&mut graph, nets, &b, &z_u, DomainLabel::T, (1.0, 1.0))?,
    ));
    let components = parts.iter().map(|(n, v)| (n.to_string(), graph.scalar(*v))).collect();
    let terms: Vec<(Var, f64)> = parts.iter().map(|(_, v)| (*v, 1.0)).collect();
    let loss = graph.weighted_sum(&terms)?;
    Ok(Objective {
        graph,
        loss,
        components,
    })
}

pub fn g_objective(scheme: Scheme, batch: &Batch, nets: &Nets, weights: &LossWeights, mode: ZMode) -> Result<f64> {
    Ok(build_g_objective(scheme, batch, nets, weights, mode)?.value())
}

pub fn d_objective(scheme: Scheme, batch: &Batch, nets: &Nets, mode: ZMode) -> Result<f64> {
    Ok(build_d_objective(scheme, batch, nets, mode)?.value())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prob(h: usize, w: usize, c: usize, f: impl Fn(usize, usize, usize) -> f64) -> ProbMap {
        let mut data = vec![0.0; c * h * w];
        for k in 0..c {
            for r in 0..h {
                for col in 0..w {
                    data[(k * h + r) * w + col] = f(r, col, k);
                }
            }
        }
        ProbMap::from_tensor(&Tensor::new(vec![c, h, w], data).unwrap()).unwrap()
    }

    #[test]
    fn entropy_map_cases() {
        let onehot = prob(3, 3, 4, |r, c, k| if (r + c) % 4 == k { 1.0 } else { 0.0 });
        assert!(entropy_map(&onehot).data().iter().all(|v| *v == 0.0));
        let uniform = prob(2, 2, 4, |_, _, _| 0.25);
        for v in entropy_map(&uniform).data() {
            assert!((v - 0.25 * 4f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn seg_loss_cases() {
        let y = LabelMap::new(2, 2, 4, vec![0, 1, 2, 3]).unwrap();
        let exact = prob(2, 2, 4, |r, c, k| if r * 2 + c == k { 1.0 } else { 0.0 });
        assert!(seg_loss(&exact, &exact, &y, &LossWeights::default()).unwrap() < 1e-10);
        let uniform = prob(2, 2, 4, |_, _, _| 0.25);
        let v = seg_loss(&uniform, &uniform, &y, &LossWeights::default()).unwrap();
        assert!((v - 1.1 * 4f64.ln()).abs() < 1e-12);
        let ignored = LabelMap::new(2, 2, 4, vec![255; 4]).unwrap();
        assert!(matches!(
            seg_loss(&uniform, &uniform, &ignored, &LossWeights::default()),
            Err(Error::DegenerateLabel(_))
        ));
    }

    #[test]
    fn dis_loss_cases() {
        let half = ScoreMap {
            height: 2,
            width: 2,
            data: vec![0.5; 4],
        };
        assert!((dis_loss(&half, DomainLabel::S) - 2f64.ln()).abs() < 1e-15);
        assert!((dis_loss(&half, DomainLabel::T) - 2f64.ln()).abs() < 1e-15);
        let sure = ScoreMap {
            height: 1,
            width: 2,
            data: vec![1.0 - 1e-15; 2],
        };
        assert!(dis_loss(&sure, DomainLabel::S) < 1e-14);
    }

    #[test]
    fn z_mode_parses() {
        assert_eq!("entropy".parse::<ZMode>().unwrap(), ZMode::Entropy);
        assert!(matches!("logits".parse::<ZMode>(), Err(Error::Config(_))));
    }
}
