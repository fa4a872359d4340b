use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{read_json, write_json, DatasetManifest};
use crate::error::{Error, Result};

pub const SPLITS_FILE: &str = "splits.json";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|r| !(0.0..=1.0).contains(r)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios must be in [0, 1] and sum to 1, got {all:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Checks that the three sets partition the manifest's ids.
    pub fn check_against(&self, manifest: &DatasetManifest) -> Result<()> {
        let ids: HashSet<&str> = manifest.episodes.iter().map(|e| e.episode_id.as_str()).collect();
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !ids.contains(id.as_str()) {
                return Err(Error::Config(format!("split lists unknown episode {id}")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Config(format!("episode {id} appears in more than one split")));
            }
        }
        if seen.len() != ids.len() {
            return Err(Error::Config(format!(
                "split covers {} of {} episodes",
                seen.len(),
                ids.len()
            )));
        }
        Ok(())
    }
}

/// Shuffles the manifest ids with `seed`, then assigns `floor(r * n)` ids to
/// train and val and the remainder to test. Each set is returned sorted.
pub fn split_dataset(manifest: &DatasetManifest, ratios: SplitRatios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    if manifest.is_empty() {
        return Err(Error::Config("cannot split an empty manifest".into()));
    }
    let mut ids: Vec<String> = manifest.episodes.iter().map(|e| e.episode_id.clone()).collect();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = (ratios.train * n as f64 + 1e-9).floor() as usize;
    let n_val = ((ratios.val * n as f64 + 1e-9).floor() as usize).min(n - n_train);
    let mut test = ids.split_off(n_train + n_val);
    let mut val = ids.split_off(n_train);
    let mut train = ids;
    train.sort();
    val.sort();
    test.sort();
    Ok(SplitAssignment {
        seed,
        ratios,
        train,
        val,
        test,
    })
}
