//! Procedurally generated two-domain segmentation benchmark.
//!
//! Both domains draw the same shape vocabulary with the same class
//! semantics; they differ only in appearance: palette (hue rotation,
//! saturation, brightness), additive noise, per-image colour jitter and the
//! frequency/amplitude of the class texture.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, DomainTag, ImageTensor, LabelMap, Sample};
use crate::error::{Error, Result};
use crate::rng;

/// Shape drawn for a foreground class. Class `k >= 1` uses
/// `ShapeKind::for_class(k)`; class 0 is the full-frame background.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Rectangle,
    Circle,
    Stripes,
}

impl ShapeKind {
    pub fn for_class(class: usize) -> Option<Self> {
        match class {
            0 => None,
            k => Some([ShapeKind::Rectangle, ShapeKind::Circle, ShapeKind::Stripes][(k - 1) % 3]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDomainConfig {
    pub name: String,
    pub domain: DomainTag,
    pub image_h: usize,
    pub image_w: usize,
    pub n_classes: usize,
    pub n_images: usize,
    pub seed: u64,
    /// Palette hue rotation, in turns.
    pub hue_shift: f64,
    pub saturation_scale: f64,
    pub brightness_offset: f64,
    pub noise_std: f64,
    pub color_jitter: f64,
    /// Texture cycles per image width.
    pub texture_freq: f64,
    pub texture_amp: f64,
}

impl SyntheticDomainConfig {
    pub fn source(image_h: usize, image_w: usize, n_classes: usize, n_images: usize, seed: u64) -> Self {
        SyntheticDomainConfig {
            name: "source".into(),
            domain: DomainTag::Source,
            image_h,
            image_w,
            n_classes,
            n_images,
            seed,
            hue_shift: 0.0,
            saturation_scale: 1.0,
            brightness_offset: 0.0,
            noise_std: 0.03,
            color_jitter: 0.10,
            texture_freq: 3.0,
            texture_amp: 0.06,
        }
    }

    pub fn target(image_h: usize, image_w: usize, n_classes: usize, n_images: usize, seed: u64) -> Self {
        SyntheticDomainConfig {
            name: "target".into(),
            domain: DomainTag::Target,
            hue_shift: 0.10,
            saturation_scale: 0.55,
            brightness_offset: -0.08,
            noise_std: 0.09,
            color_jitter: 0.12,
            texture_freq: 7.0,
            texture_amp: 0.14,
            ..Self::source(image_h, image_w, n_classes, n_images, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_h < 8 || self.image_w < 8 || !self.image_h.is_multiple_of(2) || !self.image_w.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "synthetic image size {}×{} must be even and at least 8×8",
                self.image_h, self.image_w
            )));
        }
        if self.n_classes < 2 || self.n_classes > 32 {
            return Err(Error::Config(format!(
                "n_classes = {} must lie in 2..=32",
                self.n_classes
            )));
        }
        if self.n_images == 0 {
            return Err(Error::Config("n_images must be at least 1".into()));
        }
        let finite = [
            self.hue_shift,
            self.saturation_scale,
            self.brightness_offset,
            self.noise_std,
            self.color_jitter,
            self.texture_freq,
            self.texture_amp,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.noise_std < 0.0 || self.color_jitter < 0.0 {
            return Err(Error::Config(
                "domain-shift parameters must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// True when `other` describes the same label semantics (size, class
    /// count, shape vocabulary) and may differ only in appearance.
    pub fn same_semantics(&self, other: &SyntheticDomainConfig) -> bool {
        (self.image_h, self.image_w, self.n_classes) == (other.image_h, other.image_w, other.n_classes)
    }

    /// Declared bounds on each class's pixel fraction over a whole dataset.
    pub fn class_fraction_bounds(&self) -> Vec<(f64, f64)> {
        (0..self.n_classes)
            .map(|k| if k == 0 { (0.15, 0.97) } else { (0.005, 0.60) })
            .collect()
    }

    /// Base RGB colour of each class in this domain.
    pub fn palette(&self) -> Vec<[f64; 3]> {
        let fg = (self.n_classes - 1) as f64;
        (0..self.n_classes)
            .map(|k| {
                let (h, s, v) = if k == 0 {
                    (0.08, 0.10, 0.40)
                } else {
                    ((k - 1) as f64 / fg, 0.75, 0.80)
                };
                let h = (h + self.hue_shift).rem_euclid(1.0);
                let s = (s * self.saturation_scale).clamp(0.0, 1.0);
                let v = (v + self.brightness_offset).clamp(0.0, 1.0);
                hsv_to_rgb(h, s, v)
            })
            .collect()
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - f * s), v * (1.0 - (1.0 - f) * s));
    match (i as i64).rem_euclid(6) {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

struct Canvas {
    h: usize,
    w: usize,
    labels: Vec<u8>,
}

impl Canvas {
    fn paint(&mut self, class: u8, inside: impl Fn(f64, f64) -> bool) {
        // a one-pixel border always stays background
        for r in 1..self.h - 1 {
            for c in 1..self.w - 1 {
                if inside(r as f64 + 0.5, c as f64 + 0.5) {
                    self.labels[r * self.w + c] = class;
                }
            }
        }
    }

    fn draw<R: Rng>(&mut self, class: usize, kind: ShapeKind, rng: &mut R, small: bool) {
        let (h, w) = (self.h as f64, self.w as f64);
        let side = h.min(w);
        let k = class as u8;
        match kind {
            ShapeKind::Rectangle => {
                let (lo, hi) = if small { (0.10, 0.14) } else { (0.14, 0.36) };
                let rh = rng.gen_range(lo..hi) * h;
                let rw = rng.gen_range(lo..hi) * w;
                let top = rng.gen_range(1.0..(h - 1.0 - rh).max(1.5));
                let left = rng.gen_range(1.0..(w - 1.0 - rw).max(1.5));
                self.paint(k, |y, x| y >= top && y < top + rh && x >= left && x < left + rw);
            }
            ShapeKind::Circle => {
                let (lo, hi) = if small { (0.06, 0.08) } else { (0.08, 0.19) };
                let rad = rng.gen_range(lo..hi) * side;
                let cy = rng.gen_range(1.0 + rad..(h - 1.0 - rad).max(1.5 + rad));
                let cx = rng.gen_range(1.0 + rad..(w - 1.0 - rad).max(1.5 + rad));
                self.paint(k, |y, x| (y - cy).powi(2) + (x - cx).powi(2) < rad * rad);
            }
            ShapeKind::Stripes => {
                // a band of parallel bars inside a box
                let (lo, hi) = if small { (0.14, 0.18) } else { (0.22, 0.42) };
                let bh = rng.gen_range(lo..hi) * h;
                let bw = rng.gen_range(lo..hi) * w;
                let top = rng.gen_range(1.0..(h - 1.0 - bh).max(1.5));
                let left = rng.gen_range(1.0..(w - 1.0 - bw).max(1.5));
                let period = (side / 16.0).max(2.0);
                let vertical = rng.gen_bool(0.5);
                self.paint(k, |y, x| {
                    let in_box = y >= top && y < top + bh && x >= left && x < left + bw;
                    let t = if vertical { x - left } else { y - top };
                    in_box && (t / period).floor() as i64 % 2 == 0
                });
            }
        }
    }
}

fn generate_labels(config: &SyntheticDomainConfig, index: usize) -> Vec<u8> {
    let mut rng = rng::indexed_stream(config.seed, "synthetic-layout", index as u64);
    let mut canvas = Canvas {
        h: config.image_h,
        w: config.image_w,
        labels: vec![0; config.image_h * config.image_w],
    };
    let mut shapes: Vec<usize> = Vec::new();
    for class in 1..config.n_classes {
        let count = rng.gen_range(1..=2);
        shapes.extend(std::iter::repeat_n(class, count));
    }
    shapes.shuffle(&mut rng);
    for &class in &shapes {
        let kind = ShapeKind::for_class(class).expect("foreground class");
        canvas.draw(class, kind, &mut rng, false);
    }
    // occlusion may hide a class entirely; repaint a small instance on top
    for class in 1..config.n_classes {
        if !canvas.labels.contains(&(class as u8)) {
            let kind = ShapeKind::for_class(class).expect("foreground class");
            canvas.draw(class, kind, &mut rng, true);
        }
    }
    canvas.labels
}

fn render(config: &SyntheticDomainConfig, labels: &[u8], index: usize) -> Vec<f64> {
    let mut rng = rng::indexed_stream(config.seed, "synthetic-appearance", index as u64);
    let palette = config.palette();
    let colors: Vec<[f64; 3]> = palette
        .iter()
        .map(|base| {
            let mut c = *base;
            for v in &mut c {
                *v = (*v + rng.gen_range(-config.color_jitter..=config.color_jitter)).clamp(0.0, 1.0);
            }
            c
        })
        .collect();
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let noise = Normal::new(0.0, config.noise_std.max(1e-12)).expect("valid std");
    let (h, w) = (config.image_h, config.image_w);
    let mut data = vec![0.0; h * w * 3];
    for r in 0..h {
        for c in 0..w {
            let k = labels[r * w + c] as usize;
            // each class has its own texture orientation, shared by both domains
            let angle = std::f64::consts::PI * k as f64 / config.n_classes as f64;
            let u = (c as f64 * angle.cos() + r as f64 * angle.sin()) / w as f64;
            let tex = config.texture_amp * (std::f64::consts::TAU * config.texture_freq * u + phase).sin();
            for ch in 0..3 {
                let n = if config.noise_std > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                let v = (colors[k][ch] + tex + n).clamp(0.0, 1.0);
                // quantized to 8 bits so that PNG storage is lossless
                data[(r * w + c) * 3 + ch] = (v * 255.0).round() / 255.0;
            }
        }
    }
    data
}

/// Generates one domain. A pure function of `config`.
pub fn generate_synthetic_domain(config: &SyntheticDomainConfig) -> Result<Dataset> {
    config.validate()?;
    let samples = (0..config.n_images)
        .map(|i| {
            let labels = generate_labels(config, i);
            let image = ImageTensor::new(config.image_h, config.image_w, 3, render(config, &labels, i))?;
            let label = LabelMap::new(config.image_h, config.image_w, config.n_classes, labels)?;
            Sample::labeled(image, label)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(config.name.clone(), config.domain, config.n_classes, samples)
}

/// Size and seed of a desk-scale benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub image_h: usize,
    pub image_w: usize,
    pub n_classes: usize,
    pub n_images: usize,
    pub n_val: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            image_h: 64,
            image_w: 64,
            n_classes: 4,
            n_images: 200,
            n_val: 50,
            seed: 2024,
        }
    }
}

impl BenchmarkConfig {
    pub fn source_config(&self) -> SyntheticDomainConfig {
        SyntheticDomainConfig::source(
            self.image_h,
            self.image_w,
            self.n_classes,
            self.n_images,
            rng::derive_seed(self.seed, "source"),
        )
    }

    pub fn target_config(&self) -> SyntheticDomainConfig {
        SyntheticDomainConfig::target(
            self.image_h,
            self.image_w,
            self.n_classes,
            self.n_images,
            rng::derive_seed(self.seed, "target"),
        )
    }

    pub fn target_val_config(&self) -> SyntheticDomainConfig {
        SyntheticDomainConfig {
            name: "target_val".into(),
            n_images: self.n_val,
            seed: rng::derive_seed(self.seed, "target-val"),
            ..self.target_config()
        }
    }
}

/// Source pool, target training pool and held-out target validation set.
#[derive(Clone, Debug, PartialEq)]
pub struct Benchmark {
    pub source: Dataset,
    pub target: Dataset,
    pub target_val: Dataset,
}

pub fn generate_benchmark(config: &BenchmarkConfig) -> Result<Benchmark> {
    Ok(Benchmark {
        source: generate_synthetic_domain(&config.source_config())?,
        target: generate_synthetic_domain(&config.target_config())?,
        target_val: generate_synthetic_domain(&config.target_val_config())?,
    })
}
