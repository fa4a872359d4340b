use rand::Rng;
use serde::{Deserialize, Serialize};

pub const SPEED_MIN_MPS: f64 = 8.33;
pub const SPEED_SPAN_MPS: f64 = 19.44;
pub const SPEED_MAX_MPS: f64 = SPEED_MIN_MPS + SPEED_SPAN_MPS;

/// A sampled speed together with the uniform draw that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedDraw {
    pub uniform_draw: f64,
    pub speed_mps: f64,
}

/// Affine map from a uniform draw in `[0, 1]` to a speed in m/s.
pub fn speed_from_draw(x: f64) -> f64 {
    SPEED_MIN_MPS + x * SPEED_SPAN_MPS
}

pub fn sample_speed<R: Rng + ?Sized>(rng: &mut R) -> SpeedDraw {
    let x: f64 = rng.random();
    SpeedDraw {
        uniform_draw: x,
        speed_mps: speed_from_draw(x),
    }
}
