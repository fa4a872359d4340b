use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::camera::CameraRig;
use super::catalog::catalog;
use super::environment::EnvironmentCondition;
use super::episode::{EpisodeSpec, DEFAULT_SEGMENT_LENGTH_M};
use super::render::{mix_seed, SceneRenderer};
use super::speed::sample_speed;
use crate::dataset::{
    episode_dir, episode_id, write_json, DatasetManifest, EpisodeMeta, EpisodeRecord, NormalizationSpec,
    FORMAT_VERSION, META_FILE,
};
use crate::error::{Error, IoContext, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub n_episodes: usize,
    pub rig: CameraRig,
    pub master_seed: u64,
    pub segment_length_m: f64,
    pub record_to_horizon: bool,
    /// Replace the contents of a non-empty output directory.
    pub overwrite: bool,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_episodes: 610,
            rig: CameraRig::default(),
            master_seed: 0,
            segment_length_m: DEFAULT_SEGMENT_LENGTH_M,
            record_to_horizon: false,
            overwrite: false,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_episodes < 1 {
            return Err(Error::Config("n_episodes must be >= 1".into()));
        }
        if !(self.segment_length_m > 0.0 && self.segment_length_m.is_finite()) {
            return Err(Error::Config(format!(
                "segment_length_m must be > 0, got {}",
                self.segment_length_m
            )));
        }
        self.rig.validate()
    }
}

/// Draws every episode's speed, vehicle and environment from the master
/// seed, in episode order. Per-episode render seeds are derived from the
/// master seed and the index.
pub fn plan_episodes(cfg: &GenerationConfig) -> Result<Vec<EpisodeSpec>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    let vehicles = catalog();
    let grid = EnvironmentCondition::grid();
    Ok((0..cfg.n_episodes)
        .map(|i| {
            let draw = sample_speed(&mut rng);
            let vehicle = vehicles[rng.random_range(0..vehicles.len())];
            let env = grid[rng.random_range(0..grid.len())];
            let mut spec = EpisodeSpec::new(i, draw, vehicle, env, mix_seed(cfg.master_seed, i as u64));
            spec.segment_length_m = cfg.segment_length_m;
            spec.record_to_horizon = cfg.record_to_horizon;
            spec
        })
        .collect())
}

pub fn episode_meta(spec: &EpisodeSpec, rig: &CameraRig) -> EpisodeMeta {
    EpisodeMeta {
        episode_index: spec.episode_index,
        speed_mps: spec.speed_mps,
        uniform_draw: spec.uniform_draw,
        vehicle_name: spec.vehicle.name.to_string(),
        vehicle_category: spec.vehicle.category,
        environment_label: spec.environment.label(),
        fps: rig.fps,
        resolution: [rig.width_px, rig.height_px],
        segment_length_m: spec.segment_length_m,
        rng_seed: spec.rng_seed,
        n_frames: spec.frame_count(rig.fps),
    }
}

/// Renders one episode to `<root>/episodes/ep_NNNNN/` (frames and meta.json).
pub fn write_episode(root: &Path, spec: &EpisodeSpec, rig: &CameraRig) -> Result<EpisodeMeta> {
    let meta = episode_meta(spec, rig);
    let id = episode_id(spec.episode_index);
    let dir = episode_dir(root, &id);
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).at(&frames_dir)?;
    let renderer = SceneRenderer::new(spec, rig)?;
    for k in 0..meta.n_frames {
        let frame = renderer.render(k as f64 / rig.fps)?;
        let path = frames_dir.join(format!("{k:06}.png"));
        frame
            .pixels
            .save_with_format(&path, image::ImageFormat::Png)
            .map_err(|source| Error::Image { path, source })?;
    }
    write_json(&dir.join(META_FILE), &meta)?;
    Ok(meta)
}

/// Generates a full dataset under `out_dir`. See
/// [`generate_dataset_with_progress`].
pub fn generate_dataset(cfg: &GenerationConfig, out_dir: &Path) -> Result<DatasetManifest> {
    generate_dataset_with_progress(cfg, out_dir, &|_| {})
}

/// Renders all episodes in parallel and writes `manifest.json`. A non-empty
/// `out_dir` is refused unless `cfg.overwrite` is set. On any failure the
/// output directory is removed.
pub fn generate_dataset_with_progress(
    cfg: &GenerationConfig,
    out_dir: &Path,
    progress: &(dyn Fn(&EpisodeMeta) + Sync),
) -> Result<DatasetManifest> {
    let specs = plan_episodes(cfg)?;
    prepare_output_dir(out_dir, cfg.overwrite)?;
    let result = (|| {
        let metas = specs
            .par_iter()
            .map(|spec| {
                let meta = write_episode(out_dir, spec, &cfg.rig)?;
                progress(&meta);
                Ok(meta)
            })
            .collect::<Result<Vec<_>>>()?;
        let norm = NormalizationSpec::default();
        let manifest = DatasetManifest {
            root: out_dir.to_path_buf(),
            format_version: FORMAT_VERSION,
            fps: cfg.rig.fps,
            resolution: [cfg.rig.width_px, cfg.rig.height_px],
            segment_length_m: cfg.segment_length_m,
            master_seed: Some(cfg.master_seed),
            episodes: metas.into_iter().map(|m| EpisodeRecord::from_meta(m, &norm)).collect(),
        };
        manifest.write()?;
        Ok(manifest)
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(out_dir);
    }
    result
}

fn prepare_output_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir).at(dir)?.next().is_some();
        if non_empty {
            if !overwrite {
                return Err(Error::Config(format!(
                    "output directory {} is not empty (set overwrite to replace it)",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir).at(dir)?;
        }
    }
    fs::create_dir_all(dir).at(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_is_reproducible_and_in_range() {
        let cfg = GenerationConfig {
            n_episodes: 50,
            master_seed: 9,
            ..Default::default()
        };
        let a = plan_episodes(&cfg).unwrap();
        assert_eq!(a, plan_episodes(&cfg).unwrap());
        for s in &a {
            assert!((8.33..=27.77).contains(&s.speed_mps));
        }
        let seeds: std::collections::HashSet<_> = a.iter().map(|s| s.rng_seed).collect();
        assert_eq!(seeds.len(), 50);
    }

    #[test]
    fn zero_episodes_is_an_error() {
        let cfg = GenerationConfig {
            n_episodes: 0,
            ..Default::default()
        };
        assert!(plan_episodes(&cfg).is_err());
    }
}
