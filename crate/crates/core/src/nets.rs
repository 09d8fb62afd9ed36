//! Segmentation network with main and auxiliary heads, and the fully
//! convolutional domain discriminator.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, ParamStore, Var};
use crate::data::{ImageTensor, LabelMap};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-pixel class distribution, stored channel-major (`C×H×W`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f64>,
}

impl ProbMap {
    /// Wraps a `C×H×W` array; every pixel must lie on the simplex within 1e-6.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let [c, h, w] = t.shape() else {
            return Err(Error::Dimension(format!("probability map of shape {:?}", t.shape())));
        };
        let map = ProbMap {
            height: *h,
            width: *w,
            classes: *c,
            data: t.data().to_vec(),
        };
        for p in 0..h * w {
            let mut total = 0.0;
            for k in 0..*c {
                let v = map.data[k * h * w + p];
                if !(0.0..=1.0 + 1e-12).contains(&v) || !v.is_finite() {
                    return Err(Error::Numeric(format!("probability {v} outside [0, 1]")));
                }
                total += v;
            }
            if (total - 1.0).abs() > 1e-6 {
                return Err(Error::Numeric(format!("pixel {p} sums to {total}")));
            }
        }
        Ok(map)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, row: usize, col: usize, class: usize) -> f64 {
        self.data[(class * self.height + row) * self.width + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.classes, self.height, self.width], self.data.clone()).expect("consistent shape")
    }

    /// Arg-max class per pixel (lowest class id on ties).
    pub fn argmax(&self) -> LabelMap {
        let hw = self.height * self.width;
        let labels = (0..hw)
            .map(|p| {
                let mut best = 0;
                for k in 1..self.classes {
                    if self.data[k * hw + p] > self.data[best * hw + p] {
                        best = k;
                    }
                }
                best as u8
            })
            .collect();
        LabelMap::new(self.height, self.width, self.classes, labels).expect("valid class ids")
    }
}

/// Discriminator output: one probability of "source" per spatial cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

fn truncated_normal<R: Rng>(rng: &mut R, std: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

fn conv_params<R: Rng>(store: &mut ParamStore, name: &str, out_c: usize, in_c: usize, k: usize, std: f64, rng: &mut R) {
    let w: Vec<f64> = (0..out_c * in_c * k * k).map(|_| truncated_normal(rng, std)).collect();
    store.insert(
        format!("{name}.w"),
        Tensor::new(vec![out_c, in_c, k, k], w).expect("shape"),
    );
    store.insert(format!("{name}.b"), Tensor::zeros(&[out_c]));
}

fn conv(g: &mut Graph, b: &Bound, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
    let w = b.var(&format!("{name}.w"))?;
    let bias = b.var(&format!("{name}.b"))?;
    g.conv2d(x, w, Some(bias), stride, pad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegNetConfig {
    pub in_channels: usize,
    pub n_classes: usize,
    pub height: usize,
    pub width: usize,
    /// Output channels of the four 3×3 encoder blocks (strides 1, 2, 2, 1).
    pub widths: Vec<usize>,
    pub negative_slope: f64,
    /// Standard deviation of the classifier-head weights.
    pub head_init_std: f64,
}

impl SegNetConfig {
    pub const STRIDES: [usize; 4] = [1, 2, 2, 1];

    pub fn new(in_channels: usize, n_classes: usize, height: usize, width: usize) -> Self {
        SegNetConfig {
            in_channels,
            n_classes,
            height,
            width,
            widths: vec![8, 16, 16, 32],
            negative_slope: 0.0,
            head_init_std: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != 4 || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "segmentation widths {:?} must be four positive values",
                self.widths
            )));
        }
        if self.n_classes < 2 || self.in_channels == 0 || self.height < 4 || self.width < 4 {
            return Err(Error::Config(
                "segmentation net needs C >= 2, d >= 1 and at least 4×4 inputs".into(),
            ));
        }
        Ok(())
    }
}

/// Encoder of four conv blocks; the main head reads block 4, the auxiliary
/// head block 3. Both heads upsample bilinearly to `H×W` and apply a softmax.
#[derive(Clone, Debug, PartialEq)]
pub struct SegNet {
    pub config: SegNetConfig,
    pub params: ParamStore,
}

#[derive(Clone, Copy, Debug)]
pub struct SegOutputs {
    pub main: Var,
    pub aux: Var,
}

impl SegNet {
    /// He-normal encoder weights, small-std heads, zero biases.
    pub fn new<R: Rng>(config: SegNetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut in_c = config.in_channels;
        for (i, &w) in config.widths.iter().enumerate() {
            let std = (2.0 / (in_c * 9) as f64).sqrt();
            conv_params(&mut params, &format!("g.conv{}", i + 1), w, in_c, 3, std, rng);
            in_c = w;
        }
        conv_params(
            &mut params,
            "g.head_main",
            config.n_classes,
            config.widths[3],
            1,
            config.head_init_std,
            rng,
        );
        conv_params(
            &mut params,
            "g.head_aux",
            config.n_classes,
            config.widths[2],
            1,
            config.head_init_std,
            rng,
        );
        Ok(SegNet { config, params })
    }

    pub fn from_params(config: SegNetConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let net = SegNet { config, params };
        let mut g = Graph::new();
        let bound = g.bind(&net.params, false);
        let x = g.input(Tensor::zeros(&[
            net.config.in_channels,
            net.config.height,
            net.config.width,
        ]));
        net.forward(&mut g, &bound, x)?;
        Ok(net)
    }

    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: Var) -> Result<SegOutputs> {
        let c = &self.config;
        let shape = g.value(x).shape();
        if shape != [c.in_channels, c.height, c.width] {
            return Err(Error::Dimension(format!(
                "input {shape:?} does not match configured {}×{}×{}",
                c.height, c.width, c.in_channels
            )));
        }
        let mut h = x;
        let mut block3 = x;
        for (i, stride) in SegNetConfig::STRIDES.iter().enumerate() {
            h = conv(g, bound, &format!("g.conv{}", i + 1), h, *stride, 1)?;
            h = g.leaky_relu(h, c.negative_slope);
            if i == 2 {
                block3 = h;
            }
        }
        let head = |g: &mut Graph, name: &str, feat: Var| -> Result<Var> {
            let logits = conv(g, bound, name, feat, 1, 0)?;
            let up = g.resize(logits, c.height, c.width)?;
            g.softmax(up)
        };
        let main = head(g, "g.head_main", h)?;
        let aux = head(g, "g.head_aux", block3)?;
        Ok(SegOutputs { main, aux })
    }

    /// Main and auxiliary probability maps for one image.
    pub fn segment(&self, x: &ImageTensor) -> Result<(ProbMap, ProbMap)> {
        let mut g = Graph::new();
        let bound = g.bind(&self.params, false);
        let xv = g.input(x.to_chw());
        let out = self.forward(&mut g, &bound, xv)?;
        Ok((
            ProbMap::from_tensor(g.value(out.main))?,
            ProbMap::from_tensor(g.value(out.aux))?,
        ))
    }

    pub fn predict(&self, x: &ImageTensor) -> Result<LabelMap> {
        Ok(self.segment(x)?.0.argmax())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub in_channels: usize,
    /// Output channels of the five 4×4 stride-2 convolutions; the last is 1.
    pub widths: Vec<usize>,
    pub negative_slope: f64,
    pub init_std: f64,
}

impl DiscriminatorConfig {
    pub const KERNEL: usize = 4;
    pub const STRIDE: usize = 2;
    pub const PAD: usize = 1;
    /// Smallest spatial side the five halvings accept.
    pub const MIN_SIDE: usize = 32;

    pub fn new(in_channels: usize) -> Self {
        DiscriminatorConfig {
            in_channels,
            widths: vec![64, 128, 256, 512, 1],
            negative_slope: 0.2,
            init_std: 0.02,
        }
    }

    pub fn with_widths(in_channels: usize, widths: Vec<usize>) -> Self {
        DiscriminatorConfig {
            widths,
            ..Self::new(in_channels)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() != 5 || self.widths[4] != 1 || self.widths.contains(&0) {
            return Err(Error::Config(format!(
                "discriminator widths {:?} must be five positive values ending in 1",
                self.widths
            )));
        }
        Ok(())
    }

    /// Score-map side for an input side `n`.
    pub fn output_side(n: usize) -> usize {
        (0..5).fold(n, |s, _| (s + 2 * Self::PAD - Self::KERNEL) / Self::STRIDE + 1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    pub prefix: String,
    pub params: ParamStore,
}

impl Discriminator {
    pub fn new<R: Rng>(config: DiscriminatorConfig, prefix: &str, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut in_c = config.in_channels;
        for (i, &w) in config.widths.iter().enumerate() {
            conv_params(
                &mut params,
                &format!("{prefix}.conv{}", i + 1),
                w,
                in_c,
                4,
                config.init_std,
                rng,
            );
            in_c = w;
        }
        Ok(Discriminator {
            config,
            prefix: prefix.to_string(),
            params,
        })
    }

    pub fn from_params(config: DiscriminatorConfig, prefix: &str, params: ParamStore) -> Result<Self> {
        config.validate()?;
        Ok(Discriminator {
            config,
            prefix: prefix.to_string(),
            params,
        })
    }

    /// Returns the sigmoid score map node.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, z: Var) -> Result<Var> {
        let shape = g.value(z).shape().to_vec();
        let [c, h, w] = shape[..] else {
            return Err(Error::Dimension(format!("discriminator input of shape {shape:?}")));
        };
        if c != self.config.in_channels {
            return Err(Error::Dimension(format!(
                "discriminator expects {} channels, got {c}",
                self.config.in_channels
            )));
        }
        if h < DiscriminatorConfig::MIN_SIDE || w < DiscriminatorConfig::MIN_SIDE {
            return Err(Error::Dimension(format!(
                "discriminator input {h}×{w} is below the {0}×{0} minimum",
                DiscriminatorConfig::MIN_SIDE
            )));
        }
        let mut x = z;
        for i in 0..5 {
            x = conv(
                g,
                bound,
                &format!("{}.conv{}", self.prefix, i + 1),
                x,
                DiscriminatorConfig::STRIDE,
                DiscriminatorConfig::PAD,
            )?;
            if i < 4 {
                x = g.leaky_relu(x, self.config.negative_slope);
            }
        }
        Ok(g.sigmoid(x))
    }

    /// Scores a `C×H×W` discriminator input.
    pub fn discriminate(&self, z: &Tensor) -> Result<ScoreMap> {
        let mut g = Graph::new();
        let bound = g.bind(&self.params, false);
        let zv = g.input(z.clone());
        let s = self.forward(&mut g, &bound, zv)?;
        let t = g.value(s);
        Ok(ScoreMap {
            height: t.shape()[1],
            width: t.shape()[2],
            data: t.data().to_vec(),
        })
    }
}
