mod common;

use rand::Rng;
use ssda::objectives::entropy_map;
use ssda::selection::{rank_and_select, sample_entropy, select_random, total_entropy, EntropyScore};
use ssda::Error;

/// Triple-sum entropy straight from the map.
fn oracle_entropy(p: &ssda::nets::ProbMap) -> f64 {
    let mut h = 0.0;
    for r in 0..p.height() {
        for c in 0..p.width() {
            for k in 0..p.classes() {
                let v = p.get(r, c, k);
                if v > 0.0 {
                    h -= v * v.ln();
                }
            }
        }
    }
    h
}

fn scores(values: &[f64]) -> Vec<EntropyScore> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| EntropyScore {
            sample_index: i,
            value: v,
        })
        .collect()
}

/// Stable descending sort, first `k`, ascending indices.
fn oracle_select(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let mut top = order[..k].to_vec();
    top.sort_unstable();
    top
}

#[test]
fn entropy_matches_the_direct_sum() {
    let mut r = common::rng(11);
    for _ in 0..100 {
        let (h, w, c) = (r.gen_range(1..=32), r.gen_range(1..=32), r.gen_range(2..=8));
        let p = common::random_probs(&mut r, h, w, c);
        let oracle = oracle_entropy(&p);
        assert!((total_entropy(&p) - oracle).abs() <= 1e-9 * oracle.max(1.0));
        let summed: f64 = entropy_map(&p).data().iter().sum();
        assert!((summed - oracle).abs() <= 1e-9 * oracle.max(1.0));
    }
}

#[test]
fn uniform_prediction_has_maximal_entropy() {
    use ssda::nets::ProbMap;
    use ssda::tensor::Tensor;
    let (h, w, c) = (5, 7, 4);
    let p = ProbMap::from_tensor(&Tensor::full(&[c, h, w], 0.25)).unwrap();
    let expected = (h * w) as f64 * (c as f64).ln();
    assert!((total_entropy(&p) - expected).abs() < 1e-12);
}

#[test]
fn network_entropy_uses_the_main_head() {
    let nets = common::small_nets(2, 3, 4);
    let x = common::random_image(&mut common::rng(2), 32, 32, 3);
    let (main, _) = nets.g.segment(&x).unwrap();
    assert_eq!(sample_entropy(&nets.g, &x).unwrap(), total_entropy(&main));
}

#[test]
fn ranking_matches_a_stable_sort() {
    let mut r = common::rng(12);
    for trial in 0..50 {
        // coarse values force ties
        let values: Vec<f64> = (0..1000).map(|_| r.gen_range(0..50) as f64).collect();
        let k = r.gen_range(0..=1000);
        assert_eq!(
            rank_and_select(&scores(&values), k).unwrap(),
            oracle_select(&values, k),
            "trial {trial}"
        );
    }
}

#[test]
fn oversized_budget_is_a_config_error() {
    assert!(matches!(
        rank_and_select(&scores(&[1.0, 2.0]), 3),
        Err(Error::Config(_))
    ));
    assert!(matches!(select_random(2, 3, 0), Err(Error::Config(_))));
}

#[test]
fn random_selection_is_deterministic_and_uniform() {
    assert_eq!(select_random(200, 10, 7).unwrap(), select_random(200, 10, 7).unwrap());
    let (n, k, trials) = (20, 5, 20_000);
    let mut hits = vec![0u32; n];
    for t in 0..trials {
        let s = select_random(n, k, t).unwrap();
        assert_eq!(s.len(), k);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        for i in s {
            hits[i] += 1;
        }
    }
    let p = k as f64 / n as f64;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    for (i, &h) in hits.iter().enumerate() {
        let f = h as f64 / trials as f64;
        assert!((f - p).abs() <= 4.0 * sigma, "index {i}: {f}");
    }
}
