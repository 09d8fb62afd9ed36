//! Images, label maps, datasets and the source / labeled-target /
//! unlabeled-target pool structure.

mod disk;
mod sampler;
mod split;
mod synthetic;

pub use disk::{load_benchmark, load_dataset, save_benchmark, save_dataset, Manifest, ManifestEntry};
pub use sampler::{sample_batch, Batch, BatchSampler, Pools};
pub use split::{make_splits, SelectionMethod, Split, SplitSpec};
pub use synthetic::{
    generate_benchmark, generate_synthetic_domain, Benchmark, BenchmarkConfig, ShapeKind, SyntheticDomainConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Label value excluded from losses and evaluation.
pub const IGNORE: u8 = 255;

/// An `H×W×d` image with values in `[0, 1]`, stored pixel-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Dimension(format!("empty image {height}×{width}×{channels}")));
        }
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "image {height}×{width}×{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::Ingestion(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Channel-major copy, the layout the networks consume.
    pub fn to_chw(&self) -> Tensor {
        let hw = self.height * self.width;
        let mut out = vec![0.0; self.data.len()];
        for p in 0..hw {
            for c in 0..self.channels {
                out[c * hw + p] = self.data[p * self.channels + c];
            }
        }
        Tensor::new(vec![self.channels, self.height, self.width], out).expect("consistent shape")
    }
}

/// Per-pixel class ids in `0..C`, or [`IGNORE`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    n_classes: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, n_classes: usize, data: Vec<u8>) -> Result<Self> {
        if n_classes == 0 || n_classes >= IGNORE as usize {
            return Err(Error::Config(format!("class count {n_classes} out of range")));
        }
        if data.len() != height * width || data.is_empty() {
            return Err(Error::Dimension(format!(
                "label map {height}×{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|&&v| v != IGNORE && v as usize >= n_classes) {
            return Err(Error::Ingestion(format!("class id {bad} not below {n_classes}")));
        }
        Ok(LabelMap {
            height,
            width,
            n_classes,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn count_valid(&self) -> usize {
        self.data.iter().filter(|&&v| v != IGNORE).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Source,
    Target,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: ImageTensor,
    pub label: Option<LabelMap>,
}

impl Sample {
    pub fn labeled(image: ImageTensor, label: LabelMap) -> Result<Self> {
        if image.height() != label.height() || image.width() != label.width() {
            return Err(Error::Dimension(format!(
                "image {}×{} paired with label map {}×{}",
                image.height(),
                image.width(),
                label.height(),
                label.width()
            )));
        }
        Ok(Sample {
            image,
            label: Some(label),
        })
    }

    pub fn unlabeled(image: ImageTensor) -> Self {
        Sample { image, label: None }
    }

    pub fn label(&self) -> Result<&LabelMap> {
        self.label
            .as_ref()
            .ok_or_else(|| Error::Config("sample has no label map".into()))
    }
}

/// An ordered collection of samples sharing one geometry and class count.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    domain: DomainTag,
    n_classes: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, domain: DomainTag, n_classes: usize, samples: Vec<Sample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let (h, w, d) = (first.image.height(), first.image.width(), first.image.channels());
            if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
                return Err(Error::Dimension(format!(
                    "image size {h}×{w} must be even and at least 2×2"
                )));
            }
            for (i, s) in samples.iter().enumerate() {
                if (s.image.height(), s.image.width(), s.image.channels()) != (h, w, d) {
                    return Err(Error::Dimension(format!(
                        "sample {i} is {}×{}×{}, expected {h}×{w}×{d}",
                        s.image.height(),
                        s.image.width(),
                        s.image.channels()
                    )));
                }
                if let Some(l) = &s.label {
                    if (l.height(), l.width()) != (h, w) {
                        return Err(Error::Dimension(format!("label {i} does not match its image")));
                    }
                    if l.n_classes() != n_classes {
                        return Err(Error::Dimension(format!(
                            "label {i} declares {} classes, dataset {n_classes}",
                            l.n_classes()
                        )));
                    }
                }
            }
        }
        Ok(Dataset {
            name: name.into(),
            domain,
            n_classes,
            samples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> DomainTag {
        self.domain
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn get(&self, index: usize) -> Option<&Sample> {
        self.samples.get(index)
    }

    /// `(H, W, d)` of the samples, if any.
    pub fn geometry(&self) -> Option<(usize, usize, usize)> {
        self.samples
            .first()
            .map(|s| (s.image.height(), s.image.width(), s.image.channels()))
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.label.is_some())
    }

    /// New dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("index {i} out of range for {}", self.name)))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(name, self.domain, self.n_classes, samples)
    }
}
