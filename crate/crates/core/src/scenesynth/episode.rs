use image::RgbImage;
use serde::Serialize;

use super::camera::{CameraRig, Vec3};
use super::catalog::VehicleSpec;
use super::environment::EnvironmentCondition;
use super::render::SceneRenderer;
use super::speed::SpeedDraw;
use crate::dataset::default_horizon_frames;
use crate::error::{Error, Result};

/// Ground distance from the camera footprint to the vehicle centroid at `t = 0`.
pub const SEGMENT_START_M: f64 = 2.0;
pub const DEFAULT_SEGMENT_LENGTH_M: f64 = 20.0;

/// Recipe for one episode: everything needed to render it deterministically.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeSpec {
    pub episode_index: usize,
    pub uniform_draw: f64,
    pub speed_mps: f64,
    pub vehicle: VehicleSpec,
    #[serde(serialize_with = "serialize_label")]
    pub environment: EnvironmentCondition,
    pub rng_seed: u64,
    pub segment_length_m: f64,
    pub record_to_horizon: bool,
}

fn serialize_label<S: serde::Serializer>(env: &EnvironmentCondition, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&env.label())
}

impl EpisodeSpec {
    pub fn new(
        episode_index: usize,
        draw: SpeedDraw,
        vehicle: VehicleSpec,
        environment: EnvironmentCondition,
        rng_seed: u64,
    ) -> Self {
        Self {
            episode_index,
            uniform_draw: draw.uniform_draw,
            speed_mps: draw.speed_mps,
            vehicle,
            environment,
            rng_seed,
            segment_length_m: DEFAULT_SEGMENT_LENGTH_M,
            record_to_horizon: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.segment_length_m > 0.0 && self.segment_length_m.is_finite()) {
            return Err(Error::Config(format!(
                "segment_length_m must be > 0, got {}",
                self.segment_length_m
            )));
        }
        if !(self.speed_mps > 0.0 && self.speed_mps.is_finite()) {
            return Err(Error::Config(format!("speed must be > 0, got {}", self.speed_mps)));
        }
        Ok(())
    }

    /// Seconds from entering the segment to leaving it.
    pub fn transit_time_s(&self) -> f64 {
        self.segment_length_m / self.speed_mps
    }

    /// Frames recorded while the vehicle is on the segment.
    pub fn moving_frame_count(&self, fps: f64) -> usize {
        frames_to_cover(self.segment_length_m, self.speed_mps, fps)
    }

    /// Total frames, including empty-road padding when recording to the
    /// sampling horizon.
    pub fn frame_count(&self, fps: f64) -> usize {
        let moving = self.moving_frame_count(fps);
        if self.record_to_horizon {
            moving.max(default_horizon_frames(self.segment_length_m, fps))
        } else {
            moving
        }
    }

    /// Vehicle centroid at time `t` (constant speed along `+x`, lane center).
    pub fn vehicle_position(&self, t: f64) -> Vec3 {
        [SEGMENT_START_M + self.speed_mps * t, 0.0, self.vehicle.height_m / 2.0]
    }

    /// Whether the vehicle is still on the segment at time `t`.
    pub fn vehicle_on_segment(&self, t: f64) -> bool {
        self.speed_mps * t <= self.segment_length_m
    }
}

/// `ceil(distance / speed * fps)`, ignoring floating-point excess below 1e-9
/// frames so exact quotients are not bumped up by one.
pub fn frames_to_cover(distance_m: f64, speed_mps: f64, fps: f64) -> usize {
    let frames = distance_m / speed_mps * fps;
    (frames - 1e-9).ceil().max(0.0) as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub pixels: RgbImage,
    pub frame_index: usize,
    pub timestamp_s: f64,
}

#[derive(Clone, Debug)]
pub struct Episode {
    pub spec: EpisodeSpec,
    pub rig: CameraRig,
    pub frames: Vec<Frame>,
    /// Vehicle centroid per frame.
    pub ground_truth: Vec<Vec3>,
}

/// Renders every frame of an episode in memory. Use
/// [`super::generate_dataset`] for on-disk datasets, which streams frames
/// instead.
pub fn generate_episode(spec: &EpisodeSpec, rig: &CameraRig) -> Result<Episode> {
    spec.validate()?;
    rig.validate()?;
    let renderer = SceneRenderer::new(spec, rig)?;
    let n = spec.frame_count(rig.fps);
    let mut frames = Vec::with_capacity(n);
    let mut ground_truth = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / rig.fps;
        frames.push(renderer.render(t)?);
        ground_truth.push(spec.vehicle_position(t));
    }
    Ok(Episode {
        spec: spec.clone(),
        rig: *rig,
        frames,
        ground_truth,
    })
}
