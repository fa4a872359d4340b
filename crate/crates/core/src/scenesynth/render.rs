//! Deterministic ray-cast renderer for the straight-road scene.
//!
//! Each pixel center casts one ray. The static part of the scene (road,
//! markings, shoulders, wet patches, lighting) is shaded once per episode;
//! each frame then adds the vehicle cuboid, its cast shadow, and rain
//! streaks.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::camera::{dot, CameraRig, Vec3};
use super::environment::SunPosition;
use super::episode::{EpisodeSpec, Frame};
use crate::error::{Error, Result};

const LANE_HALF_WIDTH_M: f64 = 1.75;
const SHOULDER_EDGE_M: f64 = 3.0;
const LINE_HALF_WIDTH_M: f64 = 0.075;
const DASH_PERIOD_M: f64 = 6.0;
const TEXTURE_CELL_M: f64 = 0.1;
const PUDDLE_CELL_M: f64 = 0.8;
/// Fraction of road cells holding a wet patch at 100% deposit.
const MAX_PUDDLE_CELL_FRACTION: f64 = 0.45;
/// Sun azimuth, counter-clockwise from the travel direction. Behind and to
/// the left of the camera, so shadows fall forward and to the right.
const SUN_AZIMUTH_DEG: f64 = 120.0;
/// Rain streaks per pixel at 100% precipitation.
const STREAKS_PER_PIXEL: f64 = 1.0 / 200.0;

const ASPHALT: [f64; 3] = [95.0, 95.0, 100.0];
const PAINT: [f64; 3] = [225.0, 225.0, 220.0];
const CONCRETE: [f64; 3] = [150.0, 150.0, 145.0];
const GRASS: [f64; 3] = [70.0, 120.0, 55.0];
const RAIN: [f64; 3] = [200.0, 205.0, 215.0];

#[derive(Clone, Copy)]
struct Lighting {
    sun_dir: Vec3,
    ambient: f64,
    /// Overall exposure; precipitation dims the scene.
    exposure: f64,
    tint: [f64; 3],
    sky: [f64; 3],
}

impl Lighting {
    fn new(sun: SunPosition, precipitation_pct: u8) -> Self {
        let e = sun.elevation_deg().to_radians();
        let az = SUN_AZIMUTH_DEG.to_radians();
        let sun_dir = [e.cos() * az.cos(), e.cos() * az.sin(), e.sin()];
        let (tint, sky) = match sun {
            SunPosition::Noon => ([1.0, 1.0, 1.0], [150.0, 190.0, 240.0]),
            SunPosition::Sunset => ([1.0, 0.78, 0.58], [240.0, 150.0, 90.0]),
        };
        Self {
            sun_dir,
            ambient: 0.25 + 0.25 * e.sin(),
            exposure: 1.0 - 0.3 * precipitation_pct as f64 / 100.0,
            tint,
            sky,
        }
    }

    fn shade(&self, albedo: [f64; 3], normal: Vec3, lit: bool) -> [f64; 3] {
        let direct = if lit { dot(normal, self.sun_dir).max(0.0) } else { 0.0 };
        let k = self.exposure * (self.ambient + (1.0 - self.ambient) * direct);
        [
            albedo[0] * k * self.tint[0],
            albedo[1] * k * self.tint[1],
            albedo[2] * k * self.tint[2],
        ]
    }
}

/// Per-pixel ground intersection, cached for the episode.
#[derive(Clone, Copy)]
struct GroundHit {
    x: f64,
    y: f64,
}

pub struct SceneRenderer<'a> {
    spec: &'a EpisodeSpec,
    rig: CameraRig,
    lighting: Lighting,
    rays: Vec<Vec3>,
    ground: Vec<Option<GroundHit>>,
    /// Shaded static scene, RGB in [0, 255].
    background: Vec<[f64; 3]>,
}

impl<'a> SceneRenderer<'a> {
    pub fn new(spec: &'a EpisodeSpec, rig: &CameraRig) -> Result<Self> {
        spec.validate()?;
        rig.validate()?;
        let env = spec.environment;
        let lighting = Lighting::new(env.sun(), env.precipitation_pct());
        let (w, h) = (rig.width_px as usize, rig.height_px as usize);
        let origin = rig.center();
        let mut rays = Vec::with_capacity(w * h);
        let mut ground = Vec::with_capacity(w * h);
        let mut background = Vec::with_capacity(w * h);
        let puddle_fraction = MAX_PUDDLE_CELL_FRACTION * env.deposit_pct() as f64 / 100.0;
        let wet_darkening = 1.0 - 0.3 * env.deposit_pct() as f64 / 100.0;
        for j in 0..h {
            for i in 0..w {
                let d = rig.pixel_ray(i as f64 + 0.5, j as f64 + 0.5);
                rays.push(d);
                if d[2] >= 0.0 {
                    ground.push(None);
                    background.push(scale(lighting.sky, lighting.exposure));
                    continue;
                }
                let t = -origin[2] / d[2];
                let hit = GroundHit {
                    x: origin[0] + t * d[0],
                    y: origin[1] + t * d[1],
                };
                ground.push(Some(hit));
                let mut albedo = ground_albedo(hit);
                let on_pavement = hit.y.abs() <= SHOULDER_EDGE_M;
                if on_pavement {
                    albedo = scale(albedo, wet_darkening);
                }
                let mut color = lighting.shade(albedo, [0.0, 0.0, 1.0], true);
                if on_pavement && in_puddle(hit, spec.rng_seed, puddle_fraction) {
                    let reflected = scale(lighting.sky, lighting.exposure);
                    color = mix(color, reflected, 0.6);
                }
                background.push(color);
            }
        }
        Ok(Self {
            spec,
            rig: *rig,
            lighting,
            rays,
            ground,
            background,
        })
    }

    fn vehicle_box(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let v = &self.spec.vehicle;
        let c = self.spec.vehicle_position(t);
        (
            [c[0] - v.length_m / 2.0, c[1] - v.width_m / 2.0, 0.0],
            [c[0] + v.length_m / 2.0, c[1] + v.width_m / 2.0, v.height_m],
        )
    }

    /// Renders the frame at time `t` seconds after the vehicle enters.
    pub fn render(&self, t: f64) -> Result<Frame> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("render time must be >= 0, got {t}")));
        }
        let (w, h) = (self.rig.width_px as usize, self.rig.height_px as usize);
        let vehicle = self.spec.vehicle_on_segment(t).then(|| self.vehicle_box(t));
        let origin = self.rig.center();
        let mut buf = self.background.clone();
        if let Some((bmin, bmax)) = vehicle {
            let body = self.spec.vehicle.color_rgb.map(|c| c as f64);
            let has_windows = matches!(
                self.spec.vehicle.category,
                super::catalog::VehicleCategory::Car | super::catalog::VehicleCategory::Truck
            );
            for (p, px) in buf.iter_mut().enumerate() {
                if let Some((tt, normal)) = ray_box(origin, self.rays[p], bmin, bmax) {
                    let z = origin[2] + tt * self.rays[p][2];
                    let band = (z - bmin[2]) / (bmax[2] - bmin[2]);
                    let albedo = if has_windows && normal[2] == 0.0 && (0.62..0.9).contains(&band) {
                        scale(body, 0.3)
                    } else {
                        body
                    };
                    *px = self.lighting.shade(albedo, normal, true);
                } else if let Some(g) = self.ground[p] {
                    if ray_box([g.x, g.y, 0.0], self.lighting.sun_dir, bmin, bmax).is_some() {
                        let direct = self.lighting.shade([1.0; 3], [0.0, 0.0, 1.0], true);
                        let shadowed = self.lighting.shade([1.0; 3], [0.0, 0.0, 1.0], false);
                        for c in 0..3 {
                            px[c] *= shadowed[c] / direct[c];
                        }
                    }
                }
            }
        }
        self.add_rain(&mut buf, t, w, h);
        let mut img = RgbImage::new(w as u32, h as u32);
        for (p, px) in img.pixels_mut().enumerate() {
            let c = buf[p];
            *px = Rgb([to_u8(c[0]), to_u8(c[1]), to_u8(c[2])]);
        }
        Ok(Frame {
            pixels: img,
            frame_index: (t * self.rig.fps).round() as usize,
            timestamp_s: t,
        })
    }

    fn add_rain(&self, buf: &mut [[f64; 3]], t: f64, w: usize, h: usize) {
        let pct = self.spec.environment.precipitation_pct() as f64;
        if pct == 0.0 {
            return;
        }
        let count = (pct / 100.0 * (w * h) as f64 * STREAKS_PER_PIXEL).round() as usize;
        let len = (h / 10).max(3);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.spec.rng_seed, t.to_bits()));
        for _ in 0..count {
            let u0: f64 = rng.random::<f64>() * w as f64;
            let v0 = rng.random_range(0..h);
            for s in 0..len {
                let v = v0 + s;
                if v >= h {
                    break;
                }
                let u = (u0 + 0.25 * s as f64) as usize;
                if u >= w {
                    break;
                }
                let px = &mut buf[v * w + u];
                *px = mix(*px, RAIN, 0.5);
            }
        }
    }
}

/// Renders a single frame; equivalent to building a [`SceneRenderer`] and
/// calling `render(t)`.
pub fn render_frame(spec: &EpisodeSpec, rig: &CameraRig, t: f64) -> Result<Frame> {
    SceneRenderer::new(spec, rig)?.render(t)
}

fn ground_albedo(g: GroundHit) -> [f64; 3] {
    let ay = g.y.abs();
    let base = if ay <= LANE_HALF_WIDTH_M + LINE_HALF_WIDTH_M {
        let on_left_line = (g.y - LANE_HALF_WIDTH_M).abs() < LINE_HALF_WIDTH_M;
        let on_right_line =
            (g.y + LANE_HALF_WIDTH_M).abs() < LINE_HALF_WIDTH_M && g.x.rem_euclid(DASH_PERIOD_M) < DASH_PERIOD_M / 2.0;
        if on_left_line || on_right_line {
            PAINT
        } else {
            ASPHALT
        }
    } else if ay <= SHOULDER_EDGE_M {
        CONCRETE
    } else {
        GRASS
    };
    let cx = (g.x / TEXTURE_CELL_M).floor() as i64;
    let cy = (g.y / TEXTURE_CELL_M).floor() as i64;
    let n = unit_hash(cell_hash(cx, cy, 0x5EED));
    scale(base, 0.92 + 0.16 * n)
}

fn in_puddle(g: GroundHit, seed: u64, cell_fraction: f64) -> bool {
    if cell_fraction <= 0.0 {
        return false;
    }
    let cx = (g.x / PUDDLE_CELL_M).floor();
    let cy = (g.y / PUDDLE_CELL_M).floor();
    if unit_hash(cell_hash(cx as i64, cy as i64, seed)) >= cell_fraction {
        return false;
    }
    // Elliptical patch inscribed in the cell.
    let dx = (g.x / PUDDLE_CELL_M - cx - 0.5) / 0.48;
    let dy = (g.y / PUDDLE_CELL_M - cy - 0.5) / 0.32;
    dx * dx + dy * dy < 1.0
}

/// Slab test against an axis-aligned box. Returns the entry distance and the
/// outward normal of the entered face.
fn ray_box(o: Vec3, d: Vec3, bmin: Vec3, bmax: Vec3) -> Option<(f64, Vec3)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis = 0;
    for a in 0..3 {
        if d[a].abs() < 1e-15 {
            if o[a] < bmin[a] || o[a] > bmax[a] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[a];
        let (mut t0, mut t1) = ((bmin[a] - o[a]) * inv, (bmax[a] - o[a]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            axis = a;
        }
        t_far = t_far.min(t1);
    }
    if t_near > t_far || t_far <= 1e-9 {
        return None;
    }
    if t_near <= 1e-9 {
        // Origin inside or on the box surface (shadow rays from the ground
        // under the vehicle); treat as occluded.
        return Some((0.0, [0.0, 0.0, 1.0]));
    }
    let mut normal = [0.0; 3];
    normal[axis] = -d[axis].signum();
    Some((t_near, normal))
}

fn scale(c: [f64; 3], k: f64) -> [f64; 3] {
    [c[0] * k, c[1] * k, c[2] * k]
}

fn mix(a: [f64; 3], b: [f64; 3], alpha: f64) -> [f64; 3] {
    [
        a[0] * (1.0 - alpha) + b[0] * alpha,
        a[1] * (1.0 - alpha) + b[1] * alpha,
        a[2] * (1.0 - alpha) + b[2] * alpha,
    ]
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b.rotate_left(17))
}

fn cell_hash(x: i64, y: i64, seed: u64) -> u64 {
    mix_seed(mix_seed(seed, x as u64), y as u64)
}

fn unit_hash(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}
