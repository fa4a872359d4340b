use std::fs;
use std::path::Path;

use log::warn;

use super::manifest::{
    episode_dir, episode_id, episodes_dir, read_json, DatasetManifest, EpisodeMeta, EpisodeRecord, FORMAT_VERSION,
    MANIFEST_FILE, META_FILE,
};
use super::normalize::NormalizationSpec;
use crate::error::{Error, IoContext, Result};
use crate::scenesynth::EnvironmentCondition;

/// Builds a manifest from an on-disk episode tree (synthetic or externally
/// recorded) by reading every `episodes/*/meta.json`.
///
/// Environment labels are canonicalized ("Midday" becomes "Noon"), each
/// episode's frame files are counted against its declared `n_frames`, and
/// episodes whose speed falls outside the normalization range are flagged
/// rather than rejected. `master_seed` is taken from an existing
/// `manifest.json` when one is present.
pub fn ingest_external(dir: &Path) -> Result<DatasetManifest> {
    let norm = NormalizationSpec::default();
    let ep_root = episodes_dir(dir);
    let mut names: Vec<String> = fs::read_dir(&ep_root)
        .at(&ep_root)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<std::io::Result<_>>()
        .at(&ep_root)?;
    names.sort();

    let mut episodes = Vec::with_capacity(names.len());
    for name in names {
        let ep_dir = ep_root.join(&name);
        if !ep_dir.is_dir() {
            continue;
        }
        let schema = |message: String| Error::Schema {
            episode: name.clone(),
            message,
        };
        let meta_path = ep_dir.join(META_FILE);
        if !meta_path.is_file() {
            return Err(schema("missing meta.json".into()));
        }
        let mut meta: EpisodeMeta = read_json(&meta_path).map_err(|e| schema(e.to_string()))?;
        if episode_id(meta.episode_index) != name {
            return Err(schema(format!(
                "directory name does not match episode_index {}",
                meta.episode_index
            )));
        }
        let env: EnvironmentCondition = meta
            .environment_label
            .parse()
            .map_err(|e: Error| schema(e.to_string()))?;
        meta.environment_label = env.label();
        if !(meta.speed_mps.is_finite() && meta.speed_mps > 0.0) {
            return Err(schema(format!("invalid speed_mps {}", meta.speed_mps)));
        }
        if meta.n_frames == 0 {
            return Err(schema("n_frames must be >= 1".into()));
        }
        let found = count_frames(&episode_dir(dir, &name))?;
        if found != meta.n_frames {
            return Err(Error::FrameCountMismatch {
                episode: name,
                declared: meta.n_frames,
                found,
            });
        }
        let record = EpisodeRecord::from_meta(meta, &norm);
        if record.out_of_range {
            warn!(
                "{}: speed {} m/s outside normalization range; target will be clamped",
                record.episode_id, record.speed_mps
            );
        }
        episodes.push(record);
    }
    let first = episodes
        .first()
        .ok_or_else(|| Error::Config(format!("no episodes found under {}", ep_root.display())))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let master_seed = if manifest_path.is_file() {
        DatasetManifest::load(dir)?.master_seed
    } else {
        None
    };
    let manifest = DatasetManifest {
        root: dir.to_path_buf(),
        format_version: FORMAT_VERSION,
        fps: first.fps,
        resolution: first.resolution,
        segment_length_m: first.segment_length_m,
        master_seed,
        episodes,
    };
    manifest.validate()?;
    Ok(manifest)
}

fn count_frames(ep_dir: &Path) -> Result<usize> {
    let frames = ep_dir.join("frames");
    if !frames.is_dir() {
        return Ok(0);
    }
    let mut n = 0;
    for entry in fs::read_dir(&frames).at(&frames)? {
        let entry = entry.at(&frames)?;
        if entry.path().extension().is_some_and(|e| e == "png") {
            n += 1;
        }
    }
    Ok(n)
}
