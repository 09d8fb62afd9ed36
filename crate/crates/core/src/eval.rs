//! Confusion matrices, mIoU, checkpoint evaluation and seed-sweep summary
//! statistics.

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{Dataset, LabelMap, IGNORE};
use crate::error::{Error, Result};
use crate::nets::SegNet;

/// `counts[i * C + j]` is the number of pixels with ground truth `i` and
/// prediction `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub n_classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.n_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds one prediction/ground-truth pair. Pixels where either map is
    /// IGNORE are skipped.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            return Err(Error::Evaluation(format!(
                "prediction {}×{} vs ground truth {}×{}",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        let c = self.n_classes;
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            if p == IGNORE || g == IGNORE {
                continue;
            }
            let (p, g) = (p as usize, g as usize);
            if p >= c || g >= c {
                return Err(Error::Evaluation(format!("class id {} outside 0..{c}", p.max(g))));
            }
            self.counts[g * c + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n_classes != self.n_classes {
            return Err(Error::Evaluation("confusion matrices differ in class count".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

pub fn confusion_matrix(preds: &[LabelMap], gts: &[LabelMap], n_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != gts.len() {
        return Err(Error::Evaluation(format!(
            "{} predictions for {} ground-truth maps",
            preds.len(),
            gts.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (p, g) in preds.iter().zip(gts) {
        cm.accumulate(p, g)?;
    }
    Ok(cm)
}

/// Per-class IoU and their mean. A class with neither ground-truth nor
/// predicted pixels has no IoU (`None`) and is left out of the mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouSummary {
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
}

pub fn miou(cm: &ConfusionMatrix) -> Result<IouSummary> {
    if cm.total() == 0 {
        return Err(Error::DegenerateLabel("confusion matrix holds no pixels".into()));
    }
    let c = cm.n_classes;
    let per_class_iou: Vec<Option<f64>> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let fn_: u64 = (0..c).map(|j| cm.get(k, j)).sum::<u64>() - tp;
            let fp: u64 = (0..c).map(|i| cm.get(i, k)).sum::<u64>() - tp;
            let denom = tp + fp + fn_;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect();
    let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    let miou = present.iter().sum::<f64>() / present.len() as f64;
    Ok(IouSummary { per_class_iou, miou })
}

/// Main-head argmax predictions over a labeled dataset.
pub fn evaluate_net(net: &SegNet, val: &Dataset) -> Result<IouSummary> {
    let mut cm = ConfusionMatrix::new(val.n_classes());
    for (i, sample) in val.samples().iter().enumerate() {
        let gt = sample
            .label
            .as_ref()
            .ok_or_else(|| Error::Evaluation(format!("validation sample {i} has no label")))?;
        cm.accumulate(&net.predict(&sample.image)?, gt)?;
    }
    miou(&cm)
}

/// One evaluated checkpoint. `miou` is a fraction in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scheme: String,
    pub ntl: usize,
    pub seed: u64,
    pub selection: String,
    pub checkpoint: String,
    pub miou: f64,
    pub per_class_iou: Vec<Option<f64>>,
}

/// Rebuilds G from a checkpoint and evaluates it on `val`.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, val: &Dataset) -> Result<MetricsReport> {
    let net = SegNet::from_params(ckpt.seg_config.clone(), ckpt.g.clone())?;
    let iou = evaluate_net(&net, val)?;
    Ok(MetricsReport {
        scheme: ckpt.scheme.as_str().to_string(),
        ntl: ckpt.ntl,
        seed: ckpt.seed,
        selection: ckpt.selection.clone(),
        checkpoint: ckpt.id(),
        miou: iou.miou,
        per_class_iou: iou.per_class_iou,
    })
}

/// Population mean and standard deviation (two-pass).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Per-seed values of one (scheme, N_t^l, selection) cell with their
/// statistics. Missing seeds are `None` and excluded from the statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub scheme: String,
    pub ntl: usize,
    pub selection: String,
    pub seeds: Vec<u64>,
    pub values: Vec<Option<f64>>,
    pub mean: f64,
    pub std: f64,
    pub best: f64,
    pub worst: f64,
}

impl SweepSummary {
    pub fn new(scheme: &str, ntl: usize, selection: &str, seeds: Vec<u64>, values: Vec<Option<f64>>) -> Result<Self> {
        if seeds.len() != values.len() {
            return Err(Error::Config("one value slot per seed is required".into()));
        }
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let (mean, std) =
            mean_std(&present).ok_or_else(|| Error::Evaluation(format!("no completed runs for {scheme} ntl={ntl}")))?;
        let best = present.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let worst = present.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(SweepSummary {
            scheme: scheme.to_string(),
            ntl,
            selection: selection.to_string(),
            seeds,
            values,
            mean,
            std,
            best,
            worst,
        })
    }

    pub fn present(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn missing_seeds(&self) -> Vec<u64> {
        self.seeds
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.is_none())
            .map(|(s, _)| *s)
            .collect()
    }
}

/// `sqrt((σ_a² + σ_b²) / 2)`, the spread used to judge whether two cell
/// means are separated.
pub fn pooled_std(a: &SweepSummary, b: &SweepSummary) -> f64 {
    ((a.std * a.std + b.std * b.std) / 2.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_case() {
        let gt = LabelMap::new(2, 2, 2, vec![0, 0, 1, 1]).unwrap();
        let pred = LabelMap::new(2, 2, 2, vec![0, 1, 1, 1]).unwrap();
        let s = miou(&confusion_matrix(&[pred], &[gt], 2).unwrap()).unwrap();
        assert_eq!(s.per_class_iou, vec![Some(0.5), Some(2.0 / 3.0)]);
        assert!((s.miou - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn absent_classes_are_excluded() {
        let gt = LabelMap::new(1, 2, 4, vec![0, 1]).unwrap();
        let s = miou(&confusion_matrix(std::slice::from_ref(&gt), std::slice::from_ref(&gt), 4).unwrap()).unwrap();
        assert_eq!(s.per_class_iou, vec![Some(1.0), Some(1.0), None, None]);
        assert_eq!(s.miou, 1.0);
    }

    #[test]
    fn all_ignore_is_degenerate() {
        let gt = LabelMap::new(1, 2, 2, vec![IGNORE, IGNORE]).unwrap();
        let cm = confusion_matrix(std::slice::from_ref(&gt), std::slice::from_ref(&gt), 2).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(matches!(miou(&cm), Err(Error::DegenerateLabel(_))));
    }

    #[test]
    fn out_of_range_class_is_an_evaluation_error() {
        let gt = LabelMap::new(1, 1, 4, vec![3]).unwrap();
        assert!(matches!(
            confusion_matrix(std::slice::from_ref(&gt), std::slice::from_ref(&gt), 2),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn table_two_rows() {
        let lts = [53.04, 52.82, 53.0, 51.62, 52.2];
        let (m, s) = mean_std(&lts).unwrap();
        assert!((m - 52.54).abs() <= 0.01 && (s - 0.55).abs() <= 0.01);
        let mix = [65.14, 65.36, 64.58, 65.47, 64.24];
        let (m, s) = mean_std(&mix).unwrap();
        assert!((m - 64.96).abs() <= 0.01 && (s - 0.47).abs() <= 0.01);
    }

    #[test]
    fn single_seed_summary() {
        let s = SweepSummary::new("lts", 10, "entropy", vec![10], vec![Some(0.4)]).unwrap();
        assert_eq!((s.mean, s.std, s.best, s.worst), (0.4, 0.0, 0.4, 0.4));
    }
}
