//! Episode storage, ingestion, splits, target normalization and clip
//! extraction.

mod clip;
mod ingest;
mod manifest;
mod normalize;
mod split;

pub use clip::{
    clip_indices, default_horizon_frames, plan_clip, sample_clip, sample_clips, ClipConfig, ClipPlan, ClipSample,
};
pub use ingest::ingest_external;
pub use manifest::{
    episode_dir, episode_id, episodes_dir, frame_path, DatasetManifest, EpisodeMeta, EpisodeRecord, FORMAT_VERSION,
    MANIFEST_FILE, META_FILE,
};
pub(crate) use manifest::{read_json, write_json};
pub use normalize::{denormalize_speed, normalize_speed, NormalizationSpec, NormalizedSpeed, CLAMP_SLACK_MPS};
pub use split::{split_dataset, SplitAssignment, SplitRatios, SPLITS_FILE};
