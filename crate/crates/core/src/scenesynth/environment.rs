use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PRECIPITATION_LEVELS: [u8; 4] = [0, 15, 30, 60];
pub const DEPOSIT_LEVELS: [u8; 3] = [0, 50, 100];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SunPosition {
    Noon,
    Sunset,
}

impl SunPosition {
    pub const ALL: [SunPosition; 2] = [SunPosition::Noon, SunPosition::Sunset];

    pub fn elevation_deg(self) -> f64 {
        match self {
            SunPosition::Noon => 75.0,
            SunPosition::Sunset => 15.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SunPosition::Noon => "Noon",
            SunPosition::Sunset => "Sunset",
        }
    }
}

impl FromStr for SunPosition {
    type Err = Error;

    /// "Midday" is accepted as an alias of "Noon".
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Noon" | "Midday" => Ok(SunPosition::Noon),
            "Sunset" => Ok(SunPosition::Sunset),
            other => Err(Error::Config(format!("unknown sun position '{other}'"))),
        }
    }
}

/// One cell of the lighting/weather grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnvironmentCondition {
    sun: SunPosition,
    precipitation_pct: u8,
    deposit_pct: u8,
}

impl EnvironmentCondition {
    pub fn new(sun: SunPosition, precipitation_pct: u8, deposit_pct: u8) -> Result<Self> {
        if !PRECIPITATION_LEVELS.contains(&precipitation_pct) {
            return Err(Error::Config(format!(
                "precipitation {precipitation_pct}% not in {PRECIPITATION_LEVELS:?}"
            )));
        }
        if !DEPOSIT_LEVELS.contains(&deposit_pct) {
            return Err(Error::Config(format!(
                "deposit {deposit_pct}% not in {DEPOSIT_LEVELS:?}"
            )));
        }
        Ok(Self {
            sun,
            precipitation_pct,
            deposit_pct,
        })
    }

    pub fn sun(&self) -> SunPosition {
        self.sun
    }

    pub fn precipitation_pct(&self) -> u8 {
        self.precipitation_pct
    }

    pub fn deposit_pct(&self) -> u8 {
        self.deposit_pct
    }

    /// Canonical `<Sun>_<precip>_<deposit>` label, e.g. `Sunset_30_50`.
    pub fn label(&self) -> String {
        format!("{}_{}_{}", self.sun.as_str(), self.precipitation_pct, self.deposit_pct)
    }

    /// All 2 x 4 x 3 = 24 conditions in a fixed order.
    pub fn grid() -> Vec<EnvironmentCondition> {
        let mut out = Vec::with_capacity(24);
        for sun in SunPosition::ALL {
            for p in PRECIPITATION_LEVELS {
                for d in DEPOSIT_LEVELS {
                    out.push(Self {
                        sun,
                        precipitation_pct: p,
                        deposit_pct: d,
                    });
                }
            }
        }
        out
    }
}

impl fmt::Display for EnvironmentCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for EnvironmentCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('_').collect();
        let [sun, p, d] = parts.as_slice() else {
            return Err(Error::Config(format!("malformed environment label '{s}'")));
        };
        let num = |x: &str| {
            x.parse::<u8>()
                .map_err(|_| Error::Config(format!("malformed environment label '{s}'")))
        };
        Self::new(sun.parse()?, num(p)?, num(d)?)
    }
}
