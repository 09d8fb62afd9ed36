mod common;

use rand::Rng;
use ssda::data::{LabelMap, IGNORE};
use ssda::eval::{confusion_matrix, mean_std, miou, pooled_std, SweepSummary};

/// IoU per class counted straight from the maps.
fn oracle(preds: &[LabelMap], gts: &[LabelMap], c: usize) -> (Vec<Option<f64>>, f64) {
    let mut inter = vec![0u64; c];
    let mut union = vec![0u64; c];
    for (p, g) in preds.iter().zip(gts) {
        for (&a, &b) in p.data().iter().zip(g.data()) {
            if a == IGNORE || b == IGNORE {
                continue;
            }
            for k in 0..c as u8 {
                inter[k as usize] += u64::from(a == k && b == k);
                union[k as usize] += u64::from(a == k || b == k);
            }
        }
    }
    let ious: Vec<Option<f64>> = (0..c)
        .map(|k| (union[k] > 0).then(|| inter[k] as f64 / union[k] as f64))
        .collect();
    let present: Vec<f64> = ious.iter().flatten().copied().collect();
    (ious, present.iter().sum::<f64>() / present.len() as f64)
}

fn noisy_map<R: Rng>(r: &mut R, c: usize) -> LabelMap {
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
}

#[test]
fn miou_matches_direct_counting() {
    let mut r = common::rng(5);
    for _ in 0..50 {
        let c = r.gen_range(2..=5);
        let n = r.gen_range(1..4);
        let preds: Vec<LabelMap> = (0..n).map(|_| noisy_map(&mut r, c)).collect();
        let gts: Vec<LabelMap> = (0..n).map(|_| noisy_map(&mut r, c)).collect();
        let got = miou(&confusion_matrix(&preds, &gts, c).unwrap()).unwrap();
        let (ious, m) = oracle(&preds, &gts, c);
        for (a, b) in got.per_class_iou.iter().zip(&ious) {
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                _ => panic!("presence mismatch"),
            }
        }
        assert!((got.miou - m).abs() < 1e-12);
    }
}

#[test]
fn hand_computed_case() {
    let gt = LabelMap::new(2, 2, 2, vec![0, 0, 1, 1]).unwrap();
    let pred = LabelMap::new(2, 2, 2, vec![0, 1, 1, 1]).unwrap();
    let s = miou(&confusion_matrix(&[pred], &[gt], 2).unwrap()).unwrap();
    assert!((s.miou - 7.0 / 12.0).abs() < 1e-15);
}

#[test]
fn published_rows_reproduce() {
    let rows: [(&[f64], f64, f64); 2] = [
        (&[53.04, 52.82, 53.0, 51.62, 52.2], 52.54, 0.55),
        (&[65.14, 65.36, 64.58, 65.47, 64.24], 64.96, 0.47),
    ];
    for (values, mean, std) in rows {
        let (m, s) = mean_std(values).unwrap();
        assert!((m - mean).abs() <= 0.01 && (s - std).abs() <= 0.01);
    }
}

#[test]
fn summaries_skip_missing_seeds() {
    let s = SweepSummary::new("lts", 10, "entropy", vec![1, 2, 3], vec![Some(0.5), None, Some(0.7)]).unwrap();
    assert_eq!(s.missing_seeds(), vec![2]);
    assert!((s.mean - 0.6).abs() < 1e-15 && (s.std - 0.1).abs() < 1e-15);
    assert_eq!((s.best, s.worst), (0.7, 0.5));
    let t = SweepSummary::new("ltt", 10, "entropy", vec![1], vec![Some(0.1)]).unwrap();
    assert!((pooled_std(&s, &t) - (0.01f64 / 2.0).sqrt()).abs() < 1e-15);
    assert!(SweepSummary::new("st", 10, "entropy", vec![1], vec![None]).is_err());
}
