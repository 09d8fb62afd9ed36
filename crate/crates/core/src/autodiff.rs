//! Minimal tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every primitive applied to its nodes together with the
//! computed value. Parameters enter the tape through [`Graph::bind`], either
//! trainable or frozen; [`Graph::gradients`] returns `∂loss/∂θ` for the
//! trainable ones only. Spatial values are channel-major `C×H×W`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, ConvGeom, ResizePlan};
use crate::tensor::Tensor;

/// Floor applied inside every logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// Ordered collection of named parameter arrays.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }
}

/// Gradients keyed by parameter name.
pub type Gradients = BTreeMap<String, Tensor>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Parameters of one store bound into a graph.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("parameter `{name}` is not bound")))
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param {
        name: String,
        trainable: bool,
    },
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeom,
        cols: Vec<f64>,
    },
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    Resize {
        input: Var,
        plan: ResizePlan,
    },
    Softmax {
        input: Var,
    },
    Sigmoid {
        input: Var,
    },
    Log {
        input: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: f64,
    },
    Sum {
        input: Var,
    },
    EntropyMap {
        input: Var,
    },
    CrossEntropy {
        probs: Var,
        labels: Vec<u8>,
        count: usize,
    },
    BinaryCrossEntropy {
        scores: Var,
        target_is_one: bool,
    },
    WeightedSum {
        terms: Vec<(Var, f64)>,
    },
    Opaque {
        name: String,
        inputs: Vec<Var>,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Input | Op::Param { .. } => vec![],
            Op::Conv2d {
                input, weight, bias, ..
            } => {
                let mut v = vec![*input, *weight];
                v.extend(bias);
                v
            }
            Op::LeakyRelu { input, .. }
            | Op::Resize { input, .. }
            | Op::Softmax { input }
            | Op::Sigmoid { input }
            | Op::Log { input }
            | Op::Scale { input, .. }
            | Op::Sum { input }
            | Op::EntropyMap { input } => vec![*input],
            Op::Mul { a, b } | Op::Add { a, b } => vec![*a, *b],
            Op::CrossEntropy { probs, .. } => vec![*probs],
            Op::BinaryCrossEntropy { scores, .. } => vec![*scores],
            Op::WeightedSum { terms } => terms.iter().map(|(v, _)| *v).collect(),
            Op::Opaque { inputs, .. } => inputs.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Side of the kink of every piecewise-linear activation input on the
    /// tape, in recording order: `1` above, `-1` below, `0` exactly on it.
    /// Two evaluations with equal patterns lie in the same linear piece.
    pub fn activation_pattern(&self) -> Vec<i8> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::LeakyRelu { input, .. } = node.op {
                out.extend(
                    self.nodes[input.0]
                        .value
                        .data()
                        .iter()
                        .map(|&v| v.partial_cmp(&0.0).map_or(0, |o| o as i8)),
                );
            }
        }
        out
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Input => false,
            Op::Param { trainable, .. } => *trainable,
            other => other.inputs().iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant leaf.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// A named parameter leaf. Frozen parameters take part in the forward
    /// pass but receive no gradient.
    pub fn param(&mut self, name: &str, value: Tensor, trainable: bool) -> Var {
        self.push(
            value,
            Op::Param {
                name: name.to_string(),
                trainable,
            },
        )
    }

    /// Binds every parameter of `store`.
    pub fn bind(&mut self, store: &ParamStore, trainable: bool) -> Bound {
        let vars = store
            .iter()
            .map(|(name, t)| (name.to_string(), self.param(name, t.clone(), trainable)))
            .collect();
        Bound { vars }
    }

    /// A value computed outside the differentiable primitives. Backpropagating
    /// through it is a differentiation error.
    pub fn opaque(&mut self, name: &str, value: Tensor, inputs: &[Var]) -> Var {
        self.push(
            value,
            Op::Opaque {
                name: name.to_string(),
                inputs: inputs.to_vec(),
            },
        )
    }

    fn chw(&self, v: Var) -> Result<(usize, usize, usize)> {
        match self.value(v).shape() {
            [c, h, w] => Ok((*c, *h, *w)),
            s => Err(Error::Dimension(format!("expected C×H×W array, got shape {s:?}"))),
        }
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let (c, h, w) = self.chw(input)?;
        let (out_c, k) = match self.value(weight).shape() {
            [o, i, kh, kw] if *i == c && kh == kw => (*o, *kh),
            s => {
                return Err(Error::Dimension(format!(
                    "conv weight {s:?} incompatible with {c} input channels"
                )))
            }
        };
        if let Some(b) = bias {
            if self.value(b).shape() != [out_c] {
                return Err(Error::Dimension(format!(
                    "conv bias {:?} does not match {out_c} output channels",
                    self.value(b).shape()
                )));
            }
        }
        let geom = ConvGeom::new(c, h, w, out_c, k, stride, pad)
            .filter(|g| g.out_h > 0 && g.out_w > 0)
            .ok_or_else(|| Error::Dimension(format!("{h}×{w} input too small for kernel {k}, stride {stride}")))?;
        let (out, cols) = kernels::conv2d(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            &geom,
        );
        let value = Tensor::new(vec![out_c, geom.out_h, geom.out_w], out)?;
        let needs_cols = self.requires_grad(weight);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols: if needs_cols { cols } else { Vec::new() },
            },
        ))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::LeakyRelu { input, slope })
    }

    /// Bilinear resampling of every channel to `out_h×out_w`.
    pub fn resize(&mut self, input: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let (c, h, w) = self.chw(input)?;
        if out_h == 0 || out_w == 0 {
            return Err(Error::Dimension("resize target must be positive".into()));
        }
        let plan = ResizePlan::new(c, h, w, out_h, out_w);
        let value = Tensor::new(vec![c, out_h, out_w], plan.forward(self.value(input).data()))?;
        Ok(self.push(value, Op::Resize { input, plan }))
    }

    /// Softmax across channels at every pixel.
    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = self.chw(input)?;
        let x = self.value(input).data();
        let hw = h * w;
        let mut out = vec![0.0; c * hw];
        for p in 0..hw {
            let mut max = f64::NEG_INFINITY;
            for ch in 0..c {
                max = max.max(x[ch * hw + p]);
            }
            let mut total = 0.0;
            for ch in 0..c {
                let e = (x[ch * hw + p] - max).exp();
                out[ch * hw + p] = e;
                total += e;
            }
            for ch in 0..c {
                out[ch * hw + p] /= total;
            }
        }
        let value = Tensor::new(vec![c, h, w], out)?;
        Ok(self.push(value, Op::Softmax { input }))
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| sigmoid(v)).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Sigmoid { input })
    }

    /// `log(max(x, LOG_EPS))`, elementwise.
    pub fn log(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| v.max(LOG_EPS).ln()).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Log { input })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::Dimension(format!("mul of {:?} and {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Mul { a, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::Dimension(format!("add of {:?} and {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Scale { input, factor })
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.value(input).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum { input })
    }

    /// `-p ⊙ log(max(p, LOG_EPS))`, elementwise.
    pub fn entropy_map(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&p| entropy_term(p)).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::EntropyMap { input })
    }

    /// Mean of `-log p[y]` over pixels whose label is below the class count.
    /// `labels` holds one class id per pixel; ids `>= C` are ignored.
    pub fn cross_entropy(&mut self, probs: Var, labels: &[u8]) -> Result<Var> {
        let (c, h, w) = self.chw(probs)?;
        let hw = h * w;
        if labels.len() != hw {
            return Err(Error::Dimension(format!(
                "label map has {} pixels, probability map {h}×{w}",
                labels.len()
            )));
        }
        let p = self.value(probs).data();
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, &y) in labels.iter().enumerate() {
            if (y as usize) < c {
                total -= p[y as usize * hw + i].max(LOG_EPS).ln();
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::DegenerateLabel("every pixel is IGNORE".into()));
        }
        Ok(self.push(
            Tensor::scalar(total / count as f64),
            Op::CrossEntropy {
                probs,
                labels: labels.to_vec(),
                count,
            },
        ))
    }

    /// Mean binary cross entropy of a score map against a constant target.
    pub fn binary_cross_entropy(&mut self, scores: Var, target_is_one: bool) -> Result<Var> {
        let s = self.value(scores);
        if s.is_empty() {
            return Err(Error::Dimension("empty score map".into()));
        }
        let total: f64 = s
            .data()
            .iter()
            .map(|&v| {
                if target_is_one {
                    -v.max(LOG_EPS).ln()
                } else {
                    -(1.0 - v).max(LOG_EPS).ln()
                }
            })
            .sum();
        let value = Tensor::scalar(total / s.len() as f64);
        Ok(self.push(value, Op::BinaryCrossEntropy { scores, target_is_one }))
    }

    /// `Σ w_i · term_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for (v, w) in terms {
            let t = self.value(*v);
            if t.len() != 1 {
                return Err(Error::Dimension(format!("weighted_sum term of shape {:?}", t.shape())));
            }
            total += w * t.item();
        }
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { terms: terms.to_vec() }))
    }

    /// Reverse sweep from a scalar node. Returns per-node gradients.
    fn backward(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Differentiation(format!(
                "loss must be scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if !self.requires_grad(loss) {
            return Ok(grads);
        }
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if self.nodes[v.0].requires_grad {
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.len()]);
                f(slot);
            }
        };
        match &node.op {
            Op::Input | Op::Param { .. } => {}
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let n = geom.col_cols();
                let k = geom.col_rows();
                acc(*weight, &mut |dw| {
                    kernels::gemm(geom.out_c, n, k, 1.0, g, false, cols, true, 1.0, dw);
                });
                if let Some(b) = bias {
                    acc(*b, &mut |db| {
                        for (o, row) in g.chunks(n).enumerate() {
                            db[o] += row.iter().sum::<f64>();
                        }
                    });
                }
                let w = self.value(*weight).data();
                acc(*input, &mut |dx| {
                    let mut dcols = vec![0.0; k * n];
                    kernels::gemm(k, geom.out_c, n, 1.0, w, true, g, false, 0.0, &mut dcols);
                    kernels::col2im_add(&dcols, geom, dx);
                });
            }
            Op::LeakyRelu { input, slope } => {
                let x = self.value(*input).data();
                acc(*input, &mut |dx| {
                    for ((d, &xi), &gi) in dx.iter_mut().zip(x).zip(g) {
                        *d += if xi > 0.0 { gi } else { slope * gi };
                    }
                });
            }
            Op::Resize { input, plan } => acc(*input, &mut |dx| plan.backward_add(g, dx)),
            Op::Softmax { input } => {
                let y = node.value.data();
                let s = node.value.shape();
                let (c, hw) = (s[0], s[1] * s[2]);
                acc(*input, &mut |dx| {
                    for p in 0..hw {
                        let dot: f64 = (0..c).map(|ch| g[ch * hw + p] * y[ch * hw + p]).sum();
                        for ch in 0..c {
                            dx[ch * hw + p] += y[ch * hw + p] * (g[ch * hw + p] - dot);
                        }
                    }
                });
            }
            Op::Sigmoid { input } => {
                let y = node.value.data();
                acc(*input, &mut |dx| {
                    for ((d, &yi), &gi) in dx.iter_mut().zip(y).zip(g) {
                        *d += gi * yi * (1.0 - yi);
                    }
                });
            }
            Op::Log { input } => {
                let x = self.value(*input).data();
                acc(*input, &mut |dx| {
                    for ((d, &xi), &gi) in dx.iter_mut().zip(x).zip(g) {
                        if xi > LOG_EPS {
                            *d += gi / xi;
                        }
                    }
                });
            }
            Op::Mul { a, b } => {
                let (x, y) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |da| {
                    for ((d, &yi), &gi) in da.iter_mut().zip(y).zip(g) {
                        *d += gi * yi;
                    }
                });
                acc(*b, &mut |db| {
                    for ((d, &xi), &gi) in db.iter_mut().zip(x).zip(g) {
                        *d += gi * xi;
                    }
                });
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    acc(v, &mut |dv| {
                        for (d, &gi) in dv.iter_mut().zip(g) {
                            *d += gi;
                        }
                    });
                }
            }
            Op::Scale { input, factor } => acc(*input, &mut |dx| {
                for (d, &gi) in dx.iter_mut().zip(g) {
                    *d += factor * gi;
                }
            }),
            Op::Sum { input } => acc(*input, &mut |dx| {
                for d in dx.iter_mut() {
                    *d += g[0];
                }
            }),
            Op::EntropyMap { input } => {
                let x = self.value(*input).data();
                acc(*input, &mut |dx| {
                    for ((d, &p), &gi) in dx.iter_mut().zip(x).zip(g) {
                        *d += gi * entropy_term_derivative(p);
                    }
                });
            }
            Op::CrossEntropy { probs, labels, count } => {
                let p = self.value(*probs).data();
                let hw = labels.len();
                let c = p.len() / hw;
                let scale = g[0] / *count as f64;
                acc(*probs, &mut |dp| {
                    for (i, &y) in labels.iter().enumerate() {
                        if (y as usize) < c {
                            let j = y as usize * hw + i;
                            if p[j] > LOG_EPS {
                                dp[j] -= scale / p[j];
                            }
                        }
                    }
                });
            }
            Op::BinaryCrossEntropy { scores, target_is_one } => {
                let s = self.value(*scores).data();
                let scale = g[0] / s.len() as f64;
                acc(*scores, &mut |ds| {
                    for (d, &v) in ds.iter_mut().zip(s) {
                        if *target_is_one {
                            if v > LOG_EPS {
                                *d -= scale / v;
                            }
                        } else if 1.0 - v > LOG_EPS {
                            *d += scale / (1.0 - v);
                        }
                    }
                });
            }
            Op::WeightedSum { terms } => {
                for (v, w) in terms {
                    acc(*v, &mut |dv| dv[0] += w * g[0]);
                }
            }
            Op::Opaque { name, .. } => {
                return Err(Error::Differentiation(format!(
                    "no derivative for unsupported primitive `{name}`"
                )))
            }
        }
        Ok(())
    }

    /// `∂loss/∂θ` for every trainable parameter reachable from `loss`.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let grads = self.backward(loss)?;
        let mut out = Gradients::new();
        for (idx, g) in grads.into_iter().enumerate() {
            let node = &self.nodes[idx];
            if let (Op::Param { name, trainable: true }, Some(g)) = (&node.op, g) {
                let t = Tensor::new(node.value.shape().to_vec(), g)?;
                match out.get_mut(name) {
                    Some(existing) => {
                        for (a, b) in existing.data_mut().iter_mut().zip(t.data()) {
                            *a += b;
                        }
                    }
                    None => {
                        out.insert(name.clone(), t);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `∂loss/∂v` for arbitrary nodes; `None` when `v` does not influence the
    /// loss through a differentiable path.
    pub fn gradient_wrt(&self, loss: Var, vars: &[Var]) -> Result<Vec<Option<Tensor>>> {
        let grads = self.backward(loss)?;
        vars.iter()
            .map(|v| {
                grads
                    .get(v.0)
                    .cloned()
                    .flatten()
                    .map(|g| Tensor::new(self.value(*v).shape().to_vec(), g))
                    .transpose()
            })
            .collect()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-p log p` with the logarithm floored at `LOG_EPS`.
pub fn entropy_term(p: f64) -> f64 {
    -p * p.max(LOG_EPS).ln()
}

fn entropy_term_derivative(p: f64) -> f64 {
    if p > LOG_EPS {
        -(p.ln() + 1.0)
    } else {
        -LOG_EPS.ln()
    }
}
