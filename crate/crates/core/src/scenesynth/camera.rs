//! Fixed roadside camera: pinhole intrinsics from the horizontal field of view
//! and extrinsics from mounting height and pitch.
//!
//! World frame: `x` along the direction of travel, `y` to the left, `z` up.
//! The camera sits above the ground origin (shifted laterally by
//! `lateral_offset_m`) and looks along `+x`, tilted down by `pitch_deg`, so
//! its optical axis projects onto the travel direction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraRig {
    pub height_m: f64,
    /// Degrees below the horizontal.
    pub pitch_deg: f64,
    pub fps: f64,
    pub width_px: u32,
    pub height_px: u32,
    pub hfov_deg: f64,
    /// Camera offset from the lane center, positive to the left.
    pub lateral_offset_m: f64,
}

impl Default for CameraRig {
    fn default() -> Self {
        Self {
            height_m: 3.0,
            pitch_deg: 45.0,
            fps: 80.0,
            width_px: 1920,
            height_px: 1080,
            hfov_deg: 90.0,
            lateral_offset_m: 0.0,
        }
    }
}

/// Result of projecting a world point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    /// Continuous pixel coordinates; pixel `(i, j)` covers `[i, i+1) x [j, j+1)`.
    InView {
        u: f64,
        v: f64,
    },
    OutOfView,
}

impl Projection {
    pub fn pixel(self) -> Option<(f64, f64)> {
        match self {
            Projection::InView { u, v } => Some((u, v)),
            Projection::OutOfView => None,
        }
    }
}

impl CameraRig {
    pub fn with_resolution(mut self, width_px: u32, height_px: u32) -> Self {
        self.width_px = width_px;
        self.height_px = height_px;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("camera rig: {msg}")));
        if !(self.height_m > 0.0 && self.height_m.is_finite()) {
            return bad("height_m must be > 0");
        }
        if !(self.pitch_deg > 0.0 && self.pitch_deg < 90.0) {
            return bad("pitch_deg must lie in (0, 90)");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be > 0");
        }
        if self.width_px < 16 || self.height_px < 16 {
            return bad("resolution must be at least 16x16");
        }
        if !(self.hfov_deg > 0.0 && self.hfov_deg < 180.0) {
            return bad("hfov_deg must lie in (0, 180)");
        }
        if !self.lateral_offset_m.is_finite() {
            return bad("lateral_offset_m must be finite");
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3 {
        [0.0, self.lateral_offset_m, self.height_m]
    }

    /// Focal length in pixels (square pixels).
    pub fn focal_px(&self) -> f64 {
        (self.width_px as f64 / 2.0) / (self.hfov_deg.to_radians() / 2.0).tan()
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width_px as f64 / 2.0, self.height_px as f64 / 2.0)
    }

    /// Rows are the camera axes expressed in world coordinates: image right,
    /// image down, optical axis.
    pub fn rotation(&self) -> [Vec3; 3] {
        let (s, c) = self.pitch_deg.to_radians().sin_cos();
        [[0.0, -1.0, 0.0], [-s, 0.0, -c], [c, 0.0, -s]]
    }

    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        let c = self.center();
        let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        let r = self.rotation();
        [dot(r[0], d), dot(r[1], d), dot(r[2], d)]
    }

    /// Pinhole projection of a world point. Points on or behind the image
    /// plane, or landing outside the sensor, are `OutOfView`.
    pub fn project_point(&self, p: Vec3) -> Result<Projection> {
        let c = self.center();
        if (0..3).all(|i| (p[i] - c[i]).abs() < 1e-12) {
            return Err(Error::DegeneratePoint);
        }
        let pc = self.world_to_camera(p);
        if pc[2] <= 0.0 {
            return Ok(Projection::OutOfView);
        }
        let f = self.focal_px();
        let (cx, cy) = self.principal_point();
        let u = f * pc[0] / pc[2] + cx;
        let v = f * pc[1] / pc[2] + cy;
        if u < 0.0 || v < 0.0 || u >= self.width_px as f64 || v >= self.height_px as f64 {
            return Ok(Projection::OutOfView);
        }
        Ok(Projection::InView { u, v })
    }

    /// Unit world-space direction of the ray through continuous pixel
    /// coordinates `(u, v)`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Vec3 {
        let f = self.focal_px();
        let (cx, cy) = self.principal_point();
        let dc = [(u - cx) / f, (v - cy) / f, 1.0];
        let r = self.rotation();
        let d = [
            r[0][0] * dc[0] + r[1][0] * dc[1] + r[2][0] * dc[2],
            r[0][1] * dc[0] + r[1][1] * dc[1] + r[2][1] * dc[2],
            r[0][2] * dc[0] + r[1][2] * dc[1] + r[2][2] * dc[2],
        ];
        normalize(d)
    }
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn normalize(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}
