use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which objective assembly drives training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Supervised training on the labeled target samples only.
    #[serde(rename = "st")]
    St,
    /// Labeled target samples enter the segmentation loss only.
    #[serde(rename = "baseline")]
    Baseline,
    /// Labeled target samples are presented to the discriminator as target.
    #[serde(rename = "ltt")]
    Ltt,
    /// Labeled target samples are presented to the discriminator as source.
    #[serde(rename = "lts")]
    Lts,
    /// LTS fed with quadrant-mixed source / labeled-target composites.
    #[serde(rename = "lts-mix")]
    LtsMix,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::St, Scheme::Baseline, Scheme::Ltt, Scheme::Lts, Scheme::LtsMix];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::St => "st",
            Scheme::Baseline => "baseline",
            Scheme::Ltt => "ltt",
            Scheme::Lts => "lts",
            Scheme::LtsMix => "lts-mix",
        }
    }

    /// Every scheme but ST also consumes source and unlabeled-target pools.
    pub fn is_adversarial(self) -> bool {
        self != Scheme::St
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "st" => Ok(Scheme::St),
            "baseline" => Ok(Scheme::Baseline),
            "ltt" => Ok(Scheme::Ltt),
            "lts" => Ok(Scheme::Lts),
            "lts-mix" | "ltsmix" => Ok(Scheme::LtsMix),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}
