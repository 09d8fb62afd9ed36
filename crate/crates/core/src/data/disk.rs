//! On-disk dataset format.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/images/00000.png   8-bit, d channels, value / 255
//! <dir>/labels/00000.png   8-bit single channel, class ids, 255 = IGNORE
//! ```
//!
//! `manifest.json` lists the entries in order; each names its image, its
//! label file (or `null`), its domain tag and the `height`, `width`,
//! `channels`, `classes` it must have. Class ids on disk are 0-based; the
//! 1-based `{1..C}` convention maps to id `k - 1`.

use std::fs;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, LumaA, Rgb, Rgba};
use serde::{Deserialize, Serialize};

use super::{Benchmark, Dataset, DomainTag, ImageTensor, LabelMap, Sample};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    pub label: Option<String>,
    pub domain: DomainTag,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub name: String,
    pub entries: Vec<ManifestEntry>,
}

fn read_image(path: &Path, entry: &ManifestEntry) -> Result<ImageTensor> {
    let img = image::open(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if (h, w) != (entry.height, entry.width) {
        return Err(Error::Ingestion(format!(
            "{} is {h}×{w}, manifest says {}×{}",
            path.display(),
            entry.height,
            entry.width
        )));
    }
    let raw: Vec<u8> = match entry.channels {
        1 => img.into_luma8().into_raw(),
        2 => img.into_luma_alpha8().into_raw(),
        3 => img.into_rgb8().into_raw(),
        4 => img.into_rgba8().into_raw(),
        d => return Err(Error::Ingestion(format!("unsupported channel count {d}"))),
    };
    let data = raw.into_iter().map(|v| f64::from(v) / 255.0).collect();
    ImageTensor::new(h, w, entry.channels, data)
}

fn read_label(path: &Path, entry: &ManifestEntry) -> Result<LabelMap> {
    let img = image::open(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    if img.color().channel_count() != 1 {
        return Err(Error::Ingestion(format!("{} must be single-channel", path.display())));
    }
    let gray = img.into_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    if (h, w) != (entry.height, entry.width) {
        return Err(Error::Ingestion(format!(
            "label {} is {h}×{w}, manifest says {}×{}",
            path.display(),
            entry.height,
            entry.width
        )));
    }
    LabelMap::new(h, w, entry.classes, gray.into_raw())
        .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Ingestion(format!("{}: {e}", manifest_path.display())))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Ingestion(format!(
            "unsupported manifest version {}",
            manifest.version
        )));
    }
    let first = manifest
        .entries
        .first()
        .ok_or_else(|| Error::Ingestion(format!("{} lists no entries", manifest_path.display())))?;
    let (domain, classes) = (first.domain, first.classes);
    let mut samples = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        if entry.domain != domain || entry.classes != classes {
            return Err(Error::Ingestion(format!(
                "entry {} disagrees on domain or class count",
                entry.image
            )));
        }
        let image = read_image(&dir.join(&entry.image), entry)?;
        let sample = match &entry.label {
            Some(label) => {
                let path = dir.join(label);
                if !path.is_file() {
                    return Err(Error::Ingestion(format!("missing label file {}", path.display())));
                }
                Sample::labeled(image, read_label(&path, entry)?)?
            }
            None => Sample::unlabeled(image),
        };
        samples.push(sample);
    }
    Dataset::new(manifest.name, domain, classes, samples).map_err(|e| match e {
        Error::Dimension(m) => Error::Ingestion(m),
        other => other,
    })
}

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    for sub in ["images", "labels"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut entries = Vec::with_capacity(dataset.len());
    for (i, sample) in dataset.samples().iter().enumerate() {
        let img = &sample.image;
        let (h, w) = (img.height() as u32, img.width() as u32);
        let raw: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
        let dynamic = match img.channels() {
            1 => DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).expect("size")),
            2 => DynamicImage::ImageLumaA8(ImageBuffer::<LumaA<u8>, _>::from_raw(w, h, raw).expect("size")),
            3 => DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("size")),
            4 => DynamicImage::ImageRgba8(ImageBuffer::<Rgba<u8>, _>::from_raw(w, h, raw).expect("size")),
            d => return Err(Error::Config(format!("cannot store {d}-channel images as PNG"))),
        };
        let image_name = format!("images/{i:05}.png");
        let path = dir.join(&image_name);
        dynamic.save(&path).map_err(|e| Error::format(&path, e.to_string()))?;
        let label_name = match &sample.label {
            Some(label) => {
                let name = format!("labels/{i:05}.png");
                let path = dir.join(&name);
                GrayImage::from_raw(w, h, label.data().to_vec())
                    .expect("size")
                    .save(&path)
                    .map_err(|e| Error::format(&path, e.to_string()))?;
                Some(name)
            }
            None => None,
        };
        entries.push(ManifestEntry {
            image: image_name,
            label: label_name,
            domain: dataset.domain(),
            height: img.height(),
            width: img.width(),
            channels: img.channels(),
            classes: dataset.n_classes(),
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        name: dataset.name().to_string(),
        entries,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Writes `source/`, `target/` and `target_val/` under `dir`.
pub fn save_benchmark(benchmark: &Benchmark, dir: &Path) -> Result<()> {
    save_dataset(&benchmark.source, &dir.join("source"))?;
    save_dataset(&benchmark.target, &dir.join("target"))?;
    save_dataset(&benchmark.target_val, &dir.join("target_val"))
}

pub fn load_benchmark(dir: &Path) -> Result<Benchmark> {
    Ok(Benchmark {
        source: load_dataset(&dir.join("source"))?,
        target: load_dataset(&dir.join("target"))?,
        target_val: load_dataset(&dir.join("target_val"))?,
    })
}
