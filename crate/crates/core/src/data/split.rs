use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::selection::{rank_and_select, select_random, EntropyScore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Entropy,
    Random,
}

impl SelectionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMethod::Entropy => "entropy",
            SelectionMethod::Random => "random",
        }
    }
}

impl std::str::FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(SelectionMethod::Entropy),
            "random" => Ok(SelectionMethod::Random),
            other => Err(Error::Config(format!("unknown selection method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub n_labeled_target: usize,
    pub selection: SelectionMethod,
    pub seed: u64,
}

/// The labeled / unlabeled partition of a target pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub labeled_indices: Vec<usize>,
    pub unlabeled_indices: Vec<usize>,
}

/// Partitions `target` into `N_t^l` labeled and `N_t - N_t^l` unlabeled
/// samples. Entropy selection needs one finite score per target sample.
pub fn make_splits(target: &Dataset, spec: &SplitSpec, scores: Option<&[f64]>) -> Result<Split> {
    let n = target.len();
    if spec.n_labeled_target > n {
        return Err(Error::Config(format!(
            "N_t^l = {} exceeds target pool size {n}",
            spec.n_labeled_target
        )));
    }
    let labeled_indices = match spec.selection {
        SelectionMethod::Entropy => {
            let scores = scores.ok_or_else(|| Error::Config("entropy selection requires per-sample scores".into()))?;
            if scores.len() != n {
                return Err(Error::Config(format!("{} scores for {n} target samples", scores.len())));
            }
            if scores.iter().any(|s| !s.is_finite()) {
                return Err(Error::Config("entropy scores must be finite".into()));
            }
            let scores: Vec<EntropyScore> = scores
                .iter()
                .enumerate()
                .map(|(i, &value)| EntropyScore { sample_index: i, value })
                .collect();
            rank_and_select(&scores, spec.n_labeled_target)?
        }
        SelectionMethod::Random => select_random(n, spec.n_labeled_target, spec.seed)?,
    };
    let mut chosen = vec![false; n];
    for &i in &labeled_indices {
        chosen[i] = true;
    }
    let unlabeled_indices: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
    let mut unlabeled = target.subset(format!("{}-unlabeled", target.name()), &unlabeled_indices)?;
    // unlabeled pool hides its labels from training
    let stripped = unlabeled
        .samples()
        .iter()
        .map(|s| super::Sample::unlabeled(s.image.clone()))
        .collect();
    unlabeled = Dataset::new(
        unlabeled.name().to_string(),
        unlabeled.domain(),
        unlabeled.n_classes(),
        stripped,
    )?;
    Ok(Split {
        labeled: target.subset(format!("{}-labeled", target.name()), &labeled_indices)?,
        unlabeled,
        labeled_indices,
        unlabeled_indices,
    })
}
