use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speeds within this distance outside `[v_min, v_max]` are mapped without
/// clamping. The sampler's lower bound (8.33 m/s) sits just below 30 km/h,
/// and those episodes must still round-trip exactly.
pub const CLAMP_SLACK_MPS: f64 = 0.005;

/// Affine speed normalization onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationSpec {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for NormalizationSpec {
    /// 30 km/h to 100 km/h.
    fn default() -> Self {
        Self {
            v_min: 30.0 / 3.6,
            v_max: 100.0 / 3.6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalizedSpeed {
    pub value: f64,
    /// Set when the input lay beyond the slack band and was clamped.
    pub clamped: bool,
}

impl NormalizationSpec {
    pub fn new(v_min: f64, v_max: f64) -> Result<Self> {
        let spec = Self { v_min, v_max };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.v_min < self.v_max) {
            return Err(Error::Config(format!(
                "normalization needs v_min < v_max, got [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> f64 {
        (self.v_min + self.v_max) / 2.0
    }

    pub fn span(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn is_out_of_range(&self, v: f64) -> bool {
        v < self.v_min - CLAMP_SLACK_MPS || v > self.v_max + CLAMP_SLACK_MPS
    }

    pub fn normalize(&self, v: f64) -> NormalizedSpeed {
        if self.is_out_of_range(v) {
            let clamped_v = v.clamp(self.v_min, self.v_max);
            return NormalizedSpeed {
                value: self.raw(clamped_v),
                clamped: true,
            };
        }
        NormalizedSpeed {
            value: self.raw(v),
            clamped: false,
        }
    }

    /// Exact inverse of the affine map (no clamping).
    pub fn denormalize(&self, y: f64) -> f64 {
        (y + 1.0) / 2.0 * self.span() + self.v_min
    }

    fn raw(&self, v: f64) -> f64 {
        2.0 * (v - self.v_min) / self.span() - 1.0
    }
}

pub fn normalize_speed(v: f64, spec: &NormalizationSpec) -> Result<NormalizedSpeed> {
    spec.validate()?;
    Ok(spec.normalize(v))
}

pub fn denormalize_speed(y: f64, spec: &NormalizationSpec) -> Result<f64> {
    spec.validate()?;
    Ok(spec.denormalize(y))
}
