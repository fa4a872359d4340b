use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::EpisodeError;
use crate::dataset::{DatasetManifest, EpisodeRecord};
use crate::error::{Error, IoContext, Result};
use crate::scenesynth::{catalog, EnvironmentCondition, SunPosition, SPEED_MAX_MPS, SPEED_MIN_MPS};

pub const DEFAULT_SPEED_BINS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Vehicle,
    Category,
    Environment,
    Sun,
    #[serde(alias = "speed_bin")]
    SpeedBin,
}

impl Grouping {
    pub const ALL: [Grouping; 5] = [
        Grouping::Vehicle,
        Grouping::Category,
        Grouping::Environment,
        Grouping::Sun,
        Grouping::SpeedBin,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Grouping::Vehicle => "vehicle",
            Grouping::Category => "category",
            Grouping::Environment => "environment",
            Grouping::Sun => "sun",
            Grouping::SpeedBin => "speedbin",
        }
    }
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Grouping::ALL
            .into_iter()
            .find(|g| g.as_str() == s || (*g == Grouping::SpeedBin && s == "speed_bin"))
            .ok_or_else(|| Error::UnknownGrouping(s.to_string()))
    }
}

/// Equal-width speed bins over the sampler range. Speeds outside the range
/// fall into the nearest end bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedBins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for SpeedBins {
    fn default() -> Self {
        Self {
            lo: SPEED_MIN_MPS,
            hi: SPEED_MAX_MPS,
            count: DEFAULT_SPEED_BINS,
        }
    }
}

impl SpeedBins {
    pub fn validate(&self) -> Result<()> {
        if self.count < 1 || !(self.lo < self.hi) {
            return Err(Error::Config(format!("invalid speed bins {self:?}")));
        }
        Ok(())
    }

    pub fn index(&self, v: f64) -> usize {
        let w = (self.hi - self.lo) / self.count as f64;
        (((v - self.lo) / w).floor().max(0.0) as usize).min(self.count - 1)
    }

    pub fn key(&self, i: usize) -> String {
        let w = (self.hi - self.lo) / self.count as f64;
        format!(
            "bin{i:02}_{:.2}-{:.2}",
            self.lo + i as f64 * w,
            self.lo + (i + 1) as f64 * w
        )
    }

    pub fn keys(&self) -> Vec<String> {
        (0..self.count).map(|i| self.key(i)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group_key: String,
    pub mae_mps: f64,
    pub n_episodes: usize,
    pub mean_speed_mps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    pub grouping: Grouping,
    /// Sorted by key.
    pub rows: Vec<GroupRow>,
    /// Keys of the grouping's domain with no test episodes.
    pub omitted: Vec<String>,
}

fn key_for(grouping: Grouping, ep: &EpisodeRecord, bins: &SpeedBins) -> Result<String> {
    Ok(match grouping {
        Grouping::Vehicle => ep.vehicle_name.clone(),
        Grouping::Category => ep.vehicle_category.as_str().to_string(),
        Grouping::Environment => ep.environment_label.clone(),
        Grouping::Sun => ep
            .environment_label
            .parse::<EnvironmentCondition>()?
            .sun()
            .as_str()
            .to_string(),
        Grouping::SpeedBin => bins.key(bins.index(ep.speed_mps)),
    })
}

fn domain(grouping: Grouping, manifest: &DatasetManifest, bins: &SpeedBins) -> Result<BTreeSet<String>> {
    let mut keys: BTreeSet<String> = match grouping {
        Grouping::Vehicle => catalog().iter().map(|v| v.name.to_string()).collect(),
        Grouping::Category => ["car", "truck", "motorbike", "bike"].map(String::from).into(),
        Grouping::Environment => EnvironmentCondition::grid().iter().map(|e| e.label()).collect(),
        Grouping::Sun => SunPosition::ALL.iter().map(|s| s.as_str().to_string()).collect(),
        Grouping::SpeedBin => bins.keys().into_iter().collect(),
    };
    for ep in &manifest.episodes {
        keys.insert(key_for(grouping, ep, bins)?);
    }
    Ok(keys)
}

/// Groups per-episode errors by `grouping`, looking up each episode's
/// labels in `manifest`.
pub fn group_report(
    errors: &[EpisodeError],
    manifest: &DatasetManifest,
    grouping: Grouping,
    bins: &SpeedBins,
) -> Result<GroupReport> {
    bins.validate()?;
    let mut acc: BTreeMap<String, (f64, usize, f64)> = BTreeMap::new();
    for e in errors {
        let ep = manifest
            .get(&e.episode_id)
            .ok_or_else(|| Error::Config(format!("episode {} is not in the manifest", e.episode_id)))?;
        let slot = acc.entry(key_for(grouping, ep, bins)?).or_default();
        slot.0 += e.abs_error_mps;
        slot.1 += 1;
        slot.2 += e.true_speed_mps;
    }
    let omitted = domain(grouping, manifest, bins)?
        .into_iter()
        .filter(|k| !acc.contains_key(k))
        .collect();
    let rows = acc
        .into_iter()
        .map(|(group_key, (err, n, speed))| GroupRow {
            group_key,
            mae_mps: err / n as f64,
            n_episodes: n,
            mean_speed_mps: speed / n as f64,
        })
        .collect();
    Ok(GroupReport {
        grouping,
        rows,
        omitted,
    })
}

/// Convenience wrapper taking the grouping by name.
pub fn group_report_by_name(
    errors: &[EpisodeError],
    manifest: &DatasetManifest,
    grouping: &str,
    bins: &SpeedBins,
) -> Result<GroupReport> {
    group_report(errors, manifest, grouping.parse()?, bins)
}

pub fn write_group_csv(path: &Path, rows: &[GroupRow]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().at(path)
}

pub fn read_group_csv(path: &Path) -> Result<Vec<GroupRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_cover_range_exactly_once() {
        let b = SpeedBins::default();
        assert_eq!(b.index(SPEED_MIN_MPS), 0);
        assert_eq!(b.index(SPEED_MAX_MPS), 9);
        assert_eq!(b.index(5.0), 0);
        assert_eq!(b.index(40.0), 9);
        assert_eq!(b.key(0), "bin00_8.33-10.27");
        let keys = b.keys();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn unknown_grouping_is_rejected() {
        assert!(matches!("colour".parse::<Grouping>(), Err(Error::UnknownGrouping(_))));
        assert_eq!("speedbin".parse::<Grouping>().unwrap(), Grouping::SpeedBin);
        assert_eq!("speed_bin".parse::<Grouping>().unwrap(), Grouping::SpeedBin);
        for name in ["\"speedbin\"", "\"speed_bin\""] {
            assert_eq!(serde_json::from_str::<Grouping>(name).unwrap(), Grouping::SpeedBin);
        }
        assert_eq!(serde_json::to_string(&Grouping::SpeedBin).unwrap(), "\"speedbin\"");
    }
}
