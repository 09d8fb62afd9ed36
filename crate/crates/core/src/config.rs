//! Run configuration: a flat `key = value` file, CLI overrides on top,
//! documented defaults underneath. Unknown keys are rejected by name.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{BenchmarkConfig, SelectionMethod};
use crate::error::{Error, Result};
use crate::nets::{DiscriminatorConfig, SegNetConfig};
use crate::scheme::Scheme;
use crate::selection::PretrainConfig;
use crate::trainer::{HyperParams, RunSpec};

/// Environment variable naming the root for default output directories.
pub const OUTPUT_ROOT_ENV: &str = "SSDA_OUTPUT_ROOT";

/// G learning rate for training from random initialization at desk scale.
pub const DESK_G_LR: f64 = 0.01;
/// Discriminator widths at desk scale.
pub const DESK_DISC_WIDTHS: [usize; 5] = [8, 16, 32, 64, 1];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub ntl: usize,
    pub selection: SelectionMethod,
    pub seed: u64,
    pub hp: HyperParams,
    pub seg_widths: Vec<usize>,
    pub seg_negative_slope: f64,
    pub seg_head_init_std: f64,
    pub disc_widths: Vec<usize>,
    pub disc_negative_slope: f64,
    pub disc_init_std: f64,
    pub pretrain: PretrainConfig,
    pub benchmark: BenchmarkConfig,
    /// Benchmark directory; the benchmark is generated in memory when absent.
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scheme: Scheme::LtsMix,
            ntl: 10,
            selection: SelectionMethod::Entropy,
            seed: 10,
            hp: HyperParams {
                g_lr: DESK_G_LR,
                ..HyperParams::default()
            },
            seg_widths: vec![8, 16, 16, 32],
            seg_negative_slope: 0.0,
            seg_head_init_std: 0.02,
            disc_widths: DESK_DISC_WIDTHS.to_vec(),
            disc_negative_slope: 0.2,
            disc_init_std: 0.02,
            pretrain: PretrainConfig {
                lr: DESK_G_LR,
                ..PretrainConfig::default()
            },
            benchmark: BenchmarkConfig::default(),
            data_dir: None,
            out_dir: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "scheme",
    "ntl",
    "selection",
    "seed",
    "max_iter",
    "ckpt_every",
    "z_mode",
    "lambda_adv_main",
    "lambda_adv_aux",
    "seg_weight_main",
    "seg_weight_aux",
    "g_lr",
    "g_momentum",
    "g_weight_decay",
    "d_lr",
    "d_beta1",
    "d_beta2",
    "d_eps",
    "seg_widths",
    "seg_negative_slope",
    "seg_head_init_std",
    "disc_widths",
    "disc_negative_slope",
    "disc_init_std",
    "pretrain_budget",
    "pretrain_val_fraction",
    "pretrain_eval_every",
    "pretrain_lr",
    "pretrain_momentum",
    "pretrain_weight_decay",
    "image_h",
    "image_w",
    "n_classes",
    "n_images",
    "n_val",
    "data_seed",
    "data_dir",
    "out_dir",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let hp = &mut self.hp;
        match key {
            "scheme" => self.scheme = v.parse()?,
            "ntl" => self.ntl = parse(key, v)?,
            "selection" => self.selection = v.parse()?,
            "seed" => self.seed = parse(key, v)?,
            "max_iter" => hp.max_iter = parse(key, v)?,
            "ckpt_every" => hp.ckpt_every = parse(key, v)?,
            "z_mode" => hp.z_mode = v.parse()?,
            "lambda_adv_main" => hp.lambda_adv_main = parse(key, v)?,
            "lambda_adv_aux" => hp.lambda_adv_aux = parse(key, v)?,
            "seg_weight_main" => hp.seg_weight_main = parse(key, v)?,
            "seg_weight_aux" => hp.seg_weight_aux = parse(key, v)?,
            "g_lr" => hp.g_lr = parse(key, v)?,
            "g_momentum" => hp.g_momentum = parse(key, v)?,
            "g_weight_decay" => hp.g_weight_decay = parse(key, v)?,
            "d_lr" => hp.d_lr = parse(key, v)?,
            "d_beta1" => hp.d_beta1 = parse(key, v)?,
            "d_beta2" => hp.d_beta2 = parse(key, v)?,
            "d_eps" => hp.d_eps = parse(key, v)?,
            "seg_widths" => self.seg_widths = parse_list(key, v)?,
            "seg_negative_slope" => self.seg_negative_slope = parse(key, v)?,
            "seg_head_init_std" => self.seg_head_init_std = parse(key, v)?,
            "disc_widths" => self.disc_widths = parse_list(key, v)?,
            "disc_negative_slope" => self.disc_negative_slope = parse(key, v)?,
            "disc_init_std" => self.disc_init_std = parse(key, v)?,
            "pretrain_budget" => self.pretrain.budget = parse(key, v)?,
            "pretrain_val_fraction" => self.pretrain.val_fraction = parse(key, v)?,
            "pretrain_eval_every" => self.pretrain.eval_every = parse(key, v)?,
            "pretrain_lr" => self.pretrain.lr = parse(key, v)?,
            "pretrain_momentum" => self.pretrain.momentum = parse(key, v)?,
            "pretrain_weight_decay" => self.pretrain.weight_decay = parse(key, v)?,
            "image_h" => self.benchmark.image_h = parse(key, v)?,
            "image_w" => self.benchmark.image_w = parse(key, v)?,
            "n_classes" => self.benchmark.n_classes = parse(key, v)?,
            "n_images" => self.benchmark.n_images = parse(key, v)?,
            "n_val" => self.benchmark.n_val = parse(key, v)?,
            "data_seed" => self.benchmark.seed = parse(key, v)?,
            "data_dir" => self.data_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out_dir" => self.out_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.hp.validate()?;
        if self.ntl == 0 {
            return Err(Error::Config(format!("scheme {} needs ntl >= 1", self.scheme)));
        }
        self.seg_config(3, self.benchmark.n_classes, 8, 8).validate()?;
        if self.disc_widths.len() != 5 || self.disc_widths[4] != 1 || self.disc_widths.contains(&0) {
            return Err(Error::Config(format!(
                "disc_widths {:?} must be five positive values ending in 1",
                self.disc_widths
            )));
        }
        Ok(())
    }

    pub fn seg_config(&self, in_channels: usize, n_classes: usize, height: usize, width: usize) -> SegNetConfig {
        SegNetConfig {
            widths: self.seg_widths.clone(),
            negative_slope: self.seg_negative_slope,
            head_init_std: self.seg_head_init_std,
            ..SegNetConfig::new(in_channels, n_classes, height, width)
        }
    }

    pub fn disc_config(&self, n_classes: usize) -> DiscriminatorConfig {
        DiscriminatorConfig {
            negative_slope: self.disc_negative_slope,
            init_std: self.disc_init_std,
            ..DiscriminatorConfig::with_widths(n_classes, self.disc_widths.clone())
        }
    }

    /// The training identity for data of the given geometry.
    pub fn run_spec(&self, geometry: (usize, usize, usize), n_classes: usize) -> RunSpec {
        let (h, w, d) = geometry;
        RunSpec {
            scheme: self.scheme,
            ntl: self.ntl,
            selection: self.selection.as_str().to_string(),
            seed: self.seed,
            hp: self.hp.clone(),
            seg: self.seg_config(d, n_classes, h, w),
            disc: self.disc_config(n_classes),
        }
    }

    /// Directory name identifying a sweep cell.
    pub fn cell_name(&self) -> String {
        format!(
            "{}-ntl{}-{}-seed{}",
            self.scheme,
            self.ntl,
            self.selection.as_str(),
            self.seed
        )
    }

    /// `out_dir` when set, else `<output root>/runs/<cell name>`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .unwrap_or_else(|| output_root().join("runs").join(self.cell_name()))
    }
}

/// `$SSDA_OUTPUT_ROOT`, or the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// `(key, value)` pairs of a config file. `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Defaults, then the file's assignments, then the overrides.
pub fn resolve_config(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(text) = file_text {
        for (k, v) in parse_config_text(text)? {
            cfg.set(&k, &v)?;
        }
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn read_config_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(resolve_config(Some(""), &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn cli_beats_file() {
        let cfg = resolve_config(Some("seed = 10\nmax_iter = 5 # short"), &[("seed".into(), "20".into())]).unwrap();
        assert_eq!(cfg.seed, 20);
        assert_eq!(cfg.hp.max_iter, 5);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = resolve_config(None, &[("lamda_adv".into(), "1".into())]).unwrap_err();
        assert!(matches!(&err, Error::UnknownKey(k) if k == "lamda_adv"));
        assert!(err.to_string().contains("lamda_adv"));
    }

    #[test]
    fn every_key_is_settable() {
        let mut cfg = RunConfig::default();
        for key in KEYS {
            let value = match *key {
                "scheme" => "lts",
                "selection" => "random",
                "z_mode" => "prob",
                "seg_widths" => "4,4,4,4",
                "disc_widths" => "2,2,2,2,1",
                "data_dir" | "out_dir" => "x",
                "pretrain_val_fraction" | "d_beta1" | "d_beta2" | "g_momentum" => "0.5",
                _ => "3",
            };
            cfg.set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
