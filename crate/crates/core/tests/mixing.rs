mod common;

use ssda::data::{ImageTensor, LabelMap};
use ssda::mixing::{layout, mix_patch, mixed_source_batch, split_patch, Parent};

/// Images whose every value names its parent, pixel and channel: parent
/// `base` occupies `[base / 2, base / 2 + 0.5)` with distinct values.
fn tagged(h: usize, w: usize, d: usize, base: f64) -> ImageTensor {
    let n = (h * w * d) as f64;
    ImageTensor::new(
        h,
        w,
        d,
        (0..h * w * d).map(|i| base / 2.0 + 0.5 * i as f64 / n).collect(),
    )
    .unwrap()
}

fn quadrant(h: usize, w: usize, r: usize, c: usize) -> usize {
    2 * usize::from(r >= h / 2) + usize::from(c >= w / 2)
}

#[test]
fn every_pixel_comes_from_the_scheduled_parent() {
    let (h, w, d) = (8, 10, 3);
    let (xs, xt) = (tagged(h, w, d, 0.0), tagged(h, w, d, 1.0));
    let mut r = common::rng(3);
    let (ys, yt) = (
        common::random_labels(&mut r, h, w, 5),
        common::random_labels(&mut r, h, w, 5),
    );
    for iter in 0..12u64 {
        let pair = mixed_source_batch(&xs, &ys, &xt, &yt, iter).unwrap();
        assert_eq!(pair.config_id as u64, iter % 4);
        let plan = layout(iter);
        for (o, parents) in plan.iter().enumerate() {
            for row in 0..h {
                for col in 0..w {
                    let (x, y) = match parents[quadrant(h, w, row, col)] {
                        Parent::Source => (&xs, &ys),
                        Parent::Target => (&xt, &yt),
                    };
                    assert_eq!(pair.images[o].pixel(row, col), x.pixel(row, col));
                    assert_eq!(pair.labels[o].get(row, col), y.get(row, col));
                }
            }
        }
    }
}

#[test]
fn identity_configuration_passes_parents_through() {
    let (xs, xt) = (tagged(4, 4, 1, 0.0), tagged(4, 4, 1, 1.0));
    let y = LabelMap::new(4, 4, 2, vec![0; 16]).unwrap();
    let pair = mixed_source_batch(&xs, &y, &xt, &y, 4).unwrap();
    assert_eq!(pair.images, [xs, xt]);
}

#[test]
fn mixed_pair_conserves_the_pixel_multiset() {
    let (xs, xt) = (tagged(6, 6, 2, 0.0), tagged(6, 6, 2, 1.0));
    let y = LabelMap::new(6, 6, 2, vec![1; 36]).unwrap();
    let mut inputs: Vec<f64> = xs.data().iter().chain(xt.data()).copied().collect();
    inputs.sort_by(f64::total_cmp);
    for iter in 0..4 {
        let pair = mixed_source_batch(&xs, &y, &xt, &y, iter).unwrap();
        let mut out: Vec<f64> = pair.images.iter().flat_map(|i| i.data().iter().copied()).collect();
        out.sort_by(f64::total_cmp);
        assert_eq!(out, inputs, "iteration {iter}");
    }
}

#[test]
fn split_then_mix_is_the_identity() {
    let x = tagged(6, 8, 3, 0.0);
    let [a, b, c, d] = split_patch(&x).unwrap();
    assert_eq!(mix_patch(&a, &b, &c, &d).unwrap(), x);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let y = LabelMap::new(4, 4, 2, vec![0; 16]).unwrap();
    let small = tagged(4, 4, 1, 0.0);
    let wide = tagged(4, 6, 1, 0.0);
    let y_wide = LabelMap::new(4, 6, 2, vec![0; 24]).unwrap();
    assert!(mixed_source_batch(&small, &y, &wide, &y_wide, 1).is_err());
}
