mod common;

use proptest::prelude::*;
use ssda::data::{ImageTensor, LabelMap};
use ssda::eval::{confusion_matrix, mean_std, miou};
use ssda::mixing::{mix_patch, mixed_source_batch, split_patch};
use ssda::optim::poly_lr;
use ssda::selection::{rank_and_select, total_entropy, EntropyScore};

fn image(h: usize, w: usize, d: usize, values: &[f64]) -> ImageTensor {
    ImageTensor::new(h, w, d, values[..h * w * d].to_vec()).unwrap()
}

proptest! {
    #[test]
    fn split_mix_round_trip(h in 1usize..8, w in 1usize..8, d in 1usize..4, values in prop::collection::vec(0.0f64..1.0, 1024)) {
        let x = image(2 * h, 2 * w, d, &values);
        let [a, b, c, e] = split_patch(&x).unwrap();
        prop_assert_eq!(mix_patch(&a, &b, &c, &e).unwrap(), x);
    }

    #[test]
    fn mixing_swaps_complementary_quadrants(iter in 0u64..64, values in prop::collection::vec(0.0f64..1.0, 128)) {
        let xs = image(8, 8, 1, &values);
        let xt = image(8, 8, 1, &values[64..]);
        let y = LabelMap::new(8, 8, 2, vec![0; 64]).unwrap();
        let pair = mixed_source_batch(&xs, &y, &xt, &y, iter).unwrap();
        // at every pixel the two outputs hold the two parents' values
        for i in 0..64 {
            let mut got = [pair.images[0].data()[i], pair.images[1].data()[i]];
            let mut want = [xs.data()[i], xt.data()[i]];
            got.sort_by(f64::total_cmp);
            want.sort_by(f64::total_cmp);
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn selection_takes_the_top_scores(values in prop::collection::vec(0u8..20, 1..60), frac in 0.0f64..=1.0) {
        let k = ((values.len() as f64) * frac) as usize;
        let scores: Vec<EntropyScore> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| EntropyScore { sample_index: i, value: f64::from(v) })
            .collect();
        let chosen = rank_and_select(&scores, k).unwrap();
        prop_assert_eq!(chosen.len(), k);
        prop_assert!(chosen.windows(2).all(|w| w[0] < w[1]));
        let lo = chosen.iter().map(|&i| values[i]).min();
        let hi = (0..values.len()).filter(|i| !chosen.contains(i)).map(|i| values[i]).max();
        if let (Some(lo), Some(hi)) = (lo, hi) {
            prop_assert!(lo >= hi);
        }
    }

    #[test]
    fn entropy_is_bounded(seed in 0u64..10_000, h in 1usize..10, w in 1usize..10, c in 2usize..8) {
        let p = common::random_probs(&mut common::rng(seed), h, w, c);
        let e = total_entropy(&p);
        prop_assert!(e >= 0.0 && e <= (h * w) as f64 * (c as f64).ln() + 1e-9);
    }

    #[test]
    fn miou_lies_in_the_unit_interval(seed in 0u64..10_000, c in 2usize..6) {
        let mut r = common::rng(seed);
        let p = common::random_labels(&mut r, 8, 8, c);
        let g = common::random_labels(&mut r, 8, 8, c);
        let s = miou(&confusion_matrix(std::slice::from_ref(&p), &[g], c).unwrap()).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.miou));
        let perfect = miou(&confusion_matrix(std::slice::from_ref(&p), std::slice::from_ref(&p), c).unwrap()).unwrap();
        prop_assert_eq!(perfect.miou, 1.0);
    }

    #[test]
    fn poly_lr_decreases(base in 1e-6f64..1.0, max in 1usize..5000, a in 0usize..5000, b in 0usize..5000) {
        let (lo, hi) = (a.min(b).min(max), a.max(b).min(max));
        prop_assert!(poly_lr(base, lo, max).unwrap() >= poly_lr(base, hi, max).unwrap());
    }

    #[test]
    fn std_is_shift_invariant(values in prop::collection::vec(-100.0f64..100.0, 1..20), shift in -50.0f64..50.0) {
        let (m, s) = mean_std(&values).unwrap();
        let moved: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let (m2, s2) = mean_std(&moved).unwrap();
        prop_assert!(s >= 0.0);
        prop_assert!((m2 - m - shift).abs() < 1e-9);
        prop_assert!((s2 - s).abs() < 1e-9);
    }
}
