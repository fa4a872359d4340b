use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::normalize::NormalizationSpec;
use crate::error::{Error, IoContext, Result};
use crate::scenesynth::VehicleCategory;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const META_FILE: &str = "meta.json";

pub fn episode_id(index: usize) -> String {
    format!("ep_{index:05}")
}

pub fn episodes_dir(root: &Path) -> PathBuf {
    root.join("episodes")
}

pub fn episode_dir(root: &Path, id: &str) -> PathBuf {
    episodes_dir(root).join(id)
}

pub fn frame_path(root: &Path, id: &str, frame: usize) -> PathBuf {
    episode_dir(root, id).join("frames").join(format!("{frame:06}.png"))
}

/// Per-episode `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeMeta {
    pub episode_index: usize,
    pub speed_mps: f64,
    pub uniform_draw: f64,
    pub vehicle_name: String,
    pub vehicle_category: VehicleCategory,
    pub environment_label: String,
    pub fps: f64,
    /// `[width, height]` in pixels.
    pub resolution: [u32; 2],
    pub segment_length_m: f64,
    pub rng_seed: u64,
    pub n_frames: usize,
}

/// One manifest row: the episode's metadata plus its id and range flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub episode_index: usize,
    pub speed_mps: f64,
    pub uniform_draw: f64,
    pub vehicle_name: String,
    pub vehicle_category: VehicleCategory,
    pub environment_label: String,
    pub fps: f64,
    pub resolution: [u32; 2],
    pub segment_length_m: f64,
    pub rng_seed: u64,
    pub n_frames: usize,
    /// The speed lies outside the normalization range; its target is clamped.
    pub out_of_range: bool,
}

impl EpisodeRecord {
    pub fn from_meta(meta: EpisodeMeta, norm: &NormalizationSpec) -> Self {
        Self {
            episode_id: episode_id(meta.episode_index),
            out_of_range: norm.is_out_of_range(meta.speed_mps),
            episode_index: meta.episode_index,
            speed_mps: meta.speed_mps,
            uniform_draw: meta.uniform_draw,
            vehicle_name: meta.vehicle_name,
            vehicle_category: meta.vehicle_category,
            environment_label: meta.environment_label,
            fps: meta.fps,
            resolution: meta.resolution,
            segment_length_m: meta.segment_length_m,
            rng_seed: meta.rng_seed,
            n_frames: meta.n_frames,
        }
    }

    pub fn meta(&self) -> EpisodeMeta {
        EpisodeMeta {
            episode_index: self.episode_index,
            speed_mps: self.speed_mps,
            uniform_draw: self.uniform_draw,
            vehicle_name: self.vehicle_name.clone(),
            vehicle_category: self.vehicle_category,
            environment_label: self.environment_label.clone(),
            fps: self.fps,
            resolution: self.resolution,
            segment_length_m: self.segment_length_m,
            rng_seed: self.rng_seed,
            n_frames: self.n_frames,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    #[serde(skip)]
    pub root: PathBuf,
    pub format_version: u32,
    pub fps: f64,
    pub resolution: [u32; 2],
    pub segment_length_m: f64,
    /// Absent for externally recorded datasets.
    pub master_seed: Option<u64>,
    pub episodes: Vec<EpisodeRecord>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported manifest format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let mut seen = HashSet::new();
        for e in &self.episodes {
            let bad = |message: String| Error::Schema {
                episode: e.episode_id.clone(),
                message,
            };
            if !seen.insert(e.episode_id.as_str()) {
                return Err(bad("duplicate episode id".into()));
            }
            if e.n_frames == 0 {
                return Err(bad("n_frames must be >= 1".into()));
            }
            if e.fps != self.fps || e.resolution != self.resolution {
                return Err(bad(format!(
                    "fps/resolution {}/{:?} differ from dataset {}/{:?}",
                    e.fps, e.resolution, self.fps, self.resolution
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EpisodeRecord> {
        self.episodes.iter().find(|e| e.episode_id == id)
    }

    pub fn total_frames(&self) -> usize {
        self.episodes.iter().map(|e| e.n_frames).sum()
    }

    pub fn frame_path(&self, id: &str, frame: usize) -> PathBuf {
        frame_path(&self.root, id, frame)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self) -> Result<PathBuf> {
        let path = self.root.join(MANIFEST_FILE);
        fs::write(&path, self.to_json()).at(&path)?;
        Ok(path)
    }

    /// Reads `<root>/manifest.json` as written by [`DatasetManifest::write`].
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).at(&path)?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|source| Error::Json { path, source })?;
        m.root = root.to_path_buf();
        m.validate()?;
        Ok(m)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    s.push('\n');
    fs::write(path, s).at(path)
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}
