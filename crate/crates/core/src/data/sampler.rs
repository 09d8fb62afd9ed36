//! Per-iteration minibatch assembly.
//!
//! Each pool is consumed as an endless stream of epochs; every epoch is a
//! permutation drawn from its own `(seed, pool, epoch)` substream, so the
//! batch at any iteration is a pure function of the seed and the iteration
//! number. This makes resuming from a checkpoint trivial.

use rand::seq::SliceRandom;

use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::rng;
use crate::scheme::Scheme;

/// Samples drawn per iteration from the source, labeled-target and
/// unlabeled-target pools.
pub const GROUP_SIZES: (usize, usize, usize) = (1, 1, 2);

#[derive(Clone, Copy, Debug)]
pub struct Pools<'a> {
    pub source: &'a Dataset,
    pub labeled: &'a Dataset,
    pub unlabeled: &'a Dataset,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub iteration: u64,
    pub source: Vec<Sample>,
    pub labeled: Vec<Sample>,
    pub unlabeled: Vec<Sample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchSampler {
    pub seed: u64,
    pub shuffle: bool,
}

impl BatchSampler {
    pub fn new(seed: u64) -> Self {
        BatchSampler { seed, shuffle: true }
    }

    fn index_at(&self, pool: &str, len: usize, position: u64) -> usize {
        let (epoch, offset) = (position / len as u64, (position % len as u64) as usize);
        if !self.shuffle {
            return offset;
        }
        let mut order: Vec<usize> = (0..len).collect();
        let mut r = rng::indexed_stream(self.seed, &format!("{}/{pool}", rng::STREAM_BATCH), epoch);
        order.shuffle(&mut r);
        order[offset]
    }

    /// Indices into `(source, labeled, unlabeled)` for one iteration.
    pub fn indices(
        &self,
        iteration: u64,
        scheme: Scheme,
        pools: &Pools<'_>,
    ) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        if pools.labeled.is_empty() {
            return Err(Error::Config(format!(
                "scheme {scheme} needs a non-empty labeled-target pool"
            )));
        }
        let draw = |name: &str, len: usize, per_iter: usize| -> Vec<usize> {
            (0..per_iter)
                .map(|j| self.index_at(name, len, iteration * per_iter as u64 + j as u64))
                .collect()
        };
        let (ns, nl, nu) = GROUP_SIZES;
        let labeled = draw("labeled", pools.labeled.len(), nl);
        if !scheme.is_adversarial() {
            return Ok((vec![], labeled, vec![]));
        }
        if pools.source.is_empty() || pools.unlabeled.is_empty() {
            return Err(Error::Config(format!(
                "scheme {scheme} needs non-empty source and unlabeled-target pools"
            )));
        }
        Ok((
            draw("source", pools.source.len(), ns),
            labeled,
            draw("unlabeled", pools.unlabeled.len(), nu),
        ))
    }

    pub fn sample(&self, iteration: u64, scheme: Scheme, pools: &Pools<'_>) -> Result<Batch> {
        let (s, l, u) = self.indices(iteration, scheme, pools)?;
        let pick = |ds: &Dataset, idx: &[usize]| idx.iter().map(|&i| ds.samples()[i].clone()).collect();
        Ok(Batch {
            iteration,
            source: pick(pools.source, &s),
            labeled: pick(pools.labeled, &l),
            unlabeled: pick(pools.unlabeled, &u),
        })
    }
}

/// One training minibatch: 1 source, 1 labeled-target and 2 unlabeled-target
/// samples for the adversarial schemes, a single labeled-target sample for ST.
pub fn sample_batch(sampler: &BatchSampler, iteration: u64, scheme: Scheme, pools: &Pools<'_>) -> Result<Batch> {
    sampler.sample(iteration, scheme, pools)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DomainTag, ImageTensor};

    fn pool(name: &str, n: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| Sample::unlabeled(ImageTensor::filled(2, 2, 1, i as f64 / n as f64).unwrap()))
            .collect();
        Dataset::new(name, DomainTag::Target, 2, samples).unwrap()
    }

    #[test]
    fn cyclic_without_shuffle() {
        let (s, l, u) = (pool("s", 5), pool("l", 2), pool("u", 7));
        let pools = Pools {
            source: &s,
            labeled: &l,
            unlabeled: &u,
        };
        let sampler = BatchSampler {
            seed: 1,
            shuffle: false,
        };
        let a = sampler.indices(0, Scheme::Baseline, &pools).unwrap();
        let b = sampler.indices(5, Scheme::Baseline, &pools).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.2, vec![0, 1]);
    }

    #[test]
    fn shuffled_epochs_cover_the_pool() {
        let (s, l, u) = (pool("s", 6), pool("l", 3), pool("u", 8));
        let pools = Pools {
            source: &s,
            labeled: &l,
            unlabeled: &u,
        };
        let sampler = BatchSampler::new(42);
        let mut seen: Vec<usize> = (0..6)
            .map(|i| sampler.indices(i, Scheme::Lts, &pools).unwrap().0[0])
            .collect();
        seen.sort();
        assert_eq!(seen, vec![0, 1, 2, 3, 4, 5]);
        let mut unl: Vec<usize> = (0..4)
            .flat_map(|i| sampler.indices(i, Scheme::Lts, &pools).unwrap().2)
            .collect();
        unl.sort();
        assert_eq!(unl, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn st_batches_hold_only_labeled_samples() {
        let (s, l, u) = (pool("s", 0), pool("l", 3), pool("u", 0));
        let pools = Pools {
            source: &s,
            labeled: &l,
            unlabeled: &u,
        };
        let b = sample_batch(&BatchSampler::new(3), 4, Scheme::St, &pools).unwrap();
        assert!(b.source.is_empty() && b.unlabeled.is_empty());
        assert_eq!(b.labeled.len(), 1);
        assert!(matches!(
            sample_batch(&BatchSampler::new(3), 0, Scheme::Baseline, &pools),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn same_seed_same_sequence() {
        let (s, l, u) = (pool("s", 9), pool("l", 4), pool("u", 11));
        let pools = Pools {
            source: &s,
            labeled: &l,
            unlabeled: &u,
        };
        let a = BatchSampler::new(10);
        let b = BatchSampler::new(10);
        for i in 0..100 {
            assert_eq!(
                a.sample(i, Scheme::LtsMix, &pools).unwrap(),
                b.sample(i, Scheme::LtsMix, &pools).unwrap()
            );
        }
    }
}
