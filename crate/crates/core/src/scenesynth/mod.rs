//! Procedural episode synthesis: camera model, vehicle catalog, weather grid,
//! speed sampling and a deterministic renderer.

mod camera;
mod catalog;
mod environment;
mod episode;
mod generate;
mod render;
mod speed;

pub use camera::{CameraRig, Projection, Vec3};
pub use catalog::{catalog, find_vehicle, VehicleCategory, VehicleSpec};
pub use environment::{EnvironmentCondition, SunPosition, DEPOSIT_LEVELS, PRECIPITATION_LEVELS};
pub use episode::{
    frames_to_cover, generate_episode, Episode, EpisodeSpec, Frame, DEFAULT_SEGMENT_LENGTH_M, SEGMENT_START_M,
};
pub use generate::{
    episode_meta, generate_dataset, generate_dataset_with_progress, plan_episodes, write_episode, GenerationConfig,
};
pub use render::{render_frame, SceneRenderer};
pub use speed::{sample_speed, speed_from_draw, SpeedDraw, SPEED_MAX_MPS, SPEED_MIN_MPS, SPEED_SPAN_MPS};
