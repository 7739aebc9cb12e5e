use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::texture::{Sampler, Texture};
use crate::error::{Error, Result};
use crate::tensor::{Frame, Image};
use crate::warp::FlowField;

pub const MAX_OBJECTS: usize = 10;

const MIN_STEP: f64 = 1e-5;
const MAX_STEP: f64 = 0.1;

/// Position, orientation and scale of a layer at t = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub angle: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// Rates of the affine motion: px/s, rad/s and 1/s (log-scale rate).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineVelocity {
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
    #[serde(default)]
    pub omega: f64,
    #[serde(default)]
    pub scale_rate: f64,
}

impl AffineVelocity {
    pub fn translation(vx: f64, vy: f64) -> Self {
        Self {
            vx,
            vy,
            ..Default::default()
        }
    }

    pub fn is_static(&self) -> bool {
        self.vx == 0.0 && self.vy == 0.0 && self.omega == 0.0 && self.scale_rate == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Rect { width: f64, height: f64 },
    Ellipse { rx: f64, ry: f64 },
}

impl Shape {
    fn contains(&self, u: f64, v: f64) -> bool {
        match *self {
            Shape::Rect { width, height } => u.abs() <= 0.5 * width && v.abs() <= 0.5 * height,
            Shape::Ellipse { rx, ry } => (u / rx).powi(2) + (v / ry).powi(2) <= 1.0,
        }
    }

    /// Corners of the local bounding box.
    fn corners(&self) -> [(f64, f64); 4] {
        let (hw, hh) = match *self {
            Shape::Rect { width, height } => (0.5 * width, 0.5 * height),
            Shape::Ellipse { rx, ry } => (rx, ry),
        };
        [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub texture: Texture,
    #[serde(default)]
    pub velocity: AffineVelocity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub texture: Texture,
    pub shape: Shape,
    pub pose: Pose,
    #[serde(default)]
    pub velocity: AffineVelocity,
}

/// A synthetic scene: a moving textured background with up to ten
/// foreground objects composited on top (later objects on top).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub background: Background,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    pub duration: f64,
}

impl SceneConfig {
    pub fn background_only(
        width: usize,
        height: usize,
        texture: Texture,
        velocity: AffineVelocity,
        duration: f64,
    ) -> Self {
        Self {
            width,
            height,
            background: Background { texture, velocity },
            objects: Vec::new(),
            duration,
        }
    }

    /// A textured background drifting slowly under `objects` randomly
    /// textured, shaped and moving foreground objects.
    pub fn random(width: usize, height: usize, objects: usize, duration: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = width.min(height) as f64;
        let speed = 0.25 * side;
        let texture = |rng: &mut ChaCha8Rng| {
            let (low, high) = (rng.random_range(0.05..0.35), rng.random_range(0.65..0.95));
            match rng.random_range(0..3) {
                0 => Texture::Checker {
                    cell: rng.random_range(3.0..8.0),
                    low,
                    high,
                },
                1 => Texture::ValueNoise {
                    scale: rng.random_range(4.0..12.0),
                    seed: rng.random(),
                    low,
                    high,
                },
                _ => Texture::Bars {
                    period: rng.random_range(4.0..12.0),
                    angle: rng.random_range(0.0..std::f64::consts::PI),
                    low,
                    high,
                },
            }
        };
        let background = Background {
            texture: texture(&mut rng),
            velocity: AffineVelocity::translation(
                rng.random_range(-0.3..0.3) * speed,
                rng.random_range(-0.3..0.3) * speed,
            ),
        };
        let objects = (0..objects.min(MAX_OBJECTS))
            .map(|_| {
                let a = rng.random_range(0.08..0.25) * side;
                let b = rng.random_range(0.08..0.25) * side;
                let shape = if rng.random_bool(0.5) {
                    Shape::Rect {
                        width: 2.0 * a,
                        height: 2.0 * b,
                    }
                } else {
                    Shape::Ellipse { rx: a, ry: b }
                };
                ObjectSpec {
                    texture: texture(&mut rng),
                    shape,
                    pose: Pose {
                        x: rng.random_range(0.2..0.8) * width as f64,
                        y: rng.random_range(0.2..0.8) * height as f64,
                        angle: rng.random_range(0.0..std::f64::consts::TAU),
                        scale: 1.0,
                    },
                    velocity: AffineVelocity {
                        vx: rng.random_range(-1.0..1.0) * speed,
                        vy: rng.random_range(-1.0..1.0) * speed,
                        omega: rng.random_range(-0.5..0.5),
                        scale_rate: rng.random_range(-0.1..0.1),
                    },
                }
            })
            .collect();
        Self {
            width,
            height,
            background,
            objects,
            duration,
        }
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 16 || self.height < 16 {
            return Err(Error::Parameter(format!(
                "scene must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Parameter(format!(
                "scene duration must be positive, got {}",
                self.duration
            )));
        }
        if self.objects.len() > MAX_OBJECTS {
            return Err(Error::Parameter(format!(
                "at most {MAX_OBJECTS} objects, got {}",
                self.objects.len()
            )));
        }
        Ok(())
    }

    fn background_pose(&self) -> Pose {
        Pose {
            x: 0.5 * self.width as f64,
            y: 0.5 * self.height as f64,
            angle: 0.0,
            scale: 1.0,
        }
    }
}

/// Affine placement of a layer at one instant.
#[derive(Debug, Clone, Copy)]
struct Placement {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    scale: f64,
}

impl Placement {
    fn at(pose: &Pose, vel: &AffineVelocity, t: f64) -> Self {
        let angle = pose.angle + vel.omega * t;
        Self {
            cx: pose.x + vel.vx * t,
            cy: pose.y + vel.vy * t,
            cos: angle.cos(),
            sin: angle.sin(),
            scale: pose.scale * (vel.scale_rate * t).exp(),
        }
    }

    fn to_local(self, px: f64, py: f64) -> (f64, f64) {
        let dx = px - self.cx;
        let dy = py - self.cy;
        (
            (self.cos * dx + self.sin * dy) / self.scale,
            (-self.sin * dx + self.cos * dy) / self.scale,
        )
    }

    fn to_world(self, u: f64, v: f64) -> (f64, f64) {
        let su = self.scale * u;
        let sv = self.scale * v;
        (
            self.cx + self.cos * su - self.sin * sv,
            self.cy + self.sin * su + self.cos * sv,
        )
    }
}

struct Layer {
    sampler: Sampler,
    shape: Option<Shape>,
    pose: Pose,
    velocity: AffineVelocity,
}

/// A scene with its textures decoded, ready for repeated rendering.
pub struct Scene {
    config: SceneConfig,
    // layers[0] is the background
    layers: Vec<Layer>,
}

impl Scene {
    pub fn new(config: SceneConfig) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.objects.len() + 1);
        layers.push(Layer {
            sampler: Sampler::load(&config.background.texture)?,
            shape: None,
            pose: config.background_pose(),
            velocity: config.background.velocity,
        });
        for obj in &config.objects {
            layers.push(Layer {
                sampler: Sampler::load(&obj.texture)?,
                shape: Some(obj.shape),
                pose: obj.pose,
                velocity: obj.velocity,
            });
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    fn placements(&self, t: f64) -> Vec<Placement> {
        self.layers
            .iter()
            .map(|l| Placement::at(&l.pose, &l.velocity, t))
            .collect()
    }

    /// Index of the topmost layer covering world point (px, py).
    fn top_layer(&self, placements: &[Placement], px: f64, py: f64) -> usize {
        for i in (1..self.layers.len()).rev() {
            let (u, v) = placements[i].to_local(px, py);
            if self.layers[i].shape.is_some_and(|s| s.contains(u, v)) {
                return i;
            }
        }
        0
    }

    fn sample_point(&self, placements: &[Placement], px: f64, py: f64) -> f64 {
        let i = self.top_layer(placements, px, py);
        let (u, v) = placements[i].to_local(px, py);
        self.layers[i].sampler.sample(u, v)
    }

    /// Renders the frame at time `t` with 2×2 supersampling per pixel.
    pub fn render(&self, t: f64) -> Frame {
        const OFFSETS: [f64; 2] = [-0.25, 0.25];
        let placements = self.placements(t);
        Image::from_fn(self.config.width, self.config.height, |x, y| {
            let mut acc = 0.0;
            for dy in OFFSETS {
                for dx in OFFSETS {
                    acc += self.sample_point(&placements, x as f64 + dx, y as f64 + dy);
                }
            }
            (0.25 * acc).clamp(0.0, 1.0)
        })
    }

    /// Largest displacement of any tracked scene point between `t0` and `t1`.
    fn max_displacement(&self, t0: f64, t1: f64) -> f64 {
        let p0 = self.placements(t0);
        let p1 = self.placements(t1);
        let w = self.config.width as f64;
        let h = self.config.height as f64;
        let image_corners = [(0.0, 0.0), (w - 1.0, 0.0), (w - 1.0, h - 1.0), (0.0, h - 1.0)];
        let mut worst = 0.0f64;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.velocity.is_static() {
                continue;
            }
            // displacement is affine in the local coordinate, so its norm
            // peaks at a vertex of the (convex) region
            let locals: Vec<(f64, f64)> = match layer.shape {
                None => image_corners.iter().map(|&(x, y)| p0[i].to_local(x, y)).collect(),
                Some(s) => s.corners().to_vec(),
            };
            for (u, v) in locals {
                let (ax, ay) = p0[i].to_world(u, v);
                let (bx, by) = p1[i].to_world(u, v);
                worst = worst.max((bx - ax).hypot(by - ay));
            }
        }
        worst
    }

    /// Largest instantaneous point speed (px/s) at time `t`.
    fn max_speed(&self, t: f64) -> f64 {
        let placements = self.placements(t);
        let w = self.config.width as f64;
        let h = self.config.height as f64;
        let image_corners = [(0.0, 0.0), (w - 1.0, 0.0), (w - 1.0, h - 1.0), (0.0, h - 1.0)];
        let mut worst = 0.0f64;
        for (i, layer) in self.layers.iter().enumerate() {
            let vel = &layer.velocity;
            if vel.is_static() {
                continue;
            }
            let pl = &placements[i];
            let world: Vec<(f64, f64)> = match layer.shape {
                None => image_corners.to_vec(),
                Some(s) => s.corners().iter().map(|&(u, v)| pl.to_world(u, v)).collect(),
            };
            for (px, py) in world {
                let rx = px - pl.cx;
                let ry = py - pl.cy;
                let sx = vel.vx + vel.scale_rate * rx - vel.omega * ry;
                let sy = vel.vy + vel.scale_rate * ry + vel.omega * rx;
                worst = worst.max(sx.hypot(sy));
            }
        }
        worst
    }

    pub fn adaptive_timestep(&self, t: f64) -> f64 {
        let speed = self.max_speed(t);
        if speed <= 0.0 {
            return MAX_STEP;
        }
        let mut dt = (1.0 / speed).clamp(MIN_STEP, MAX_STEP);
        for _ in 0..64 {
            if dt <= MIN_STEP || self.max_displacement(t, t + dt) <= 1.0 + 1e-12 {
                break;
            }
            dt = (dt * 0.95).max(MIN_STEP);
        }
        dt
    }

    pub fn ground_truth_flow(&self, t0: f64, t1: f64) -> FlowField {
        let p0 = self.placements(t0);
        let p1 = self.placements(t1);
        let (w, h) = (self.config.width, self.config.height);
        let mut u = Vec::with_capacity(w * h);
        let mut v = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f64, y as f64);
                let i = self.top_layer(&p0, px, py);
                let (lu, lv) = p0[i].to_local(px, py);
                let (qx, qy) = p1[i].to_world(lu, lv);
                u.push((qx - px) as f32);
                v.push((qy - py) as f32);
            }
        }
        FlowField::from_parts_unchecked(w, h, u, v)
    }
}

/// Renders `config` at time `t`.
pub fn render_scene(config: &SceneConfig, t: f64) -> Result<Frame> {
    check_time(config, t)?;
    Ok(Scene::new(config.clone())?.render(t))
}

/// Time step over which no scene point moves more than one pixel,
/// clamped to [1e-5 s, 0.1 s].
pub fn adaptive_timestep(config: &SceneConfig, t: f64) -> Result<f64> {
    Ok(Scene::new(config.clone())?.adaptive_timestep(t))
}

/// Exact per-pixel displacement from `t0` to `t1` of the topmost scene
/// element at each pixel at `t0`.
pub fn ground_truth_flow(config: &SceneConfig, t0: f64, t1: f64) -> Result<FlowField> {
    if !(t0 < t1) {
        return Err(Error::Parameter(format!("flow interval [{t0}, {t1}] is empty")));
    }
    Ok(Scene::new(config.clone())?.ground_truth_flow(t0, t1))
}

fn check_time(config: &SceneConfig, t: f64) -> Result<()> {
    if !(0.0..=config.duration).contains(&t) {
        return Err(Error::Parameter(format!(
            "t={t} outside scene duration [0, {}]",
            config.duration
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_scenes_are_seeded() {
        let a = SceneConfig::random(48, 32, 4, 0.5, 9);
        assert_eq!(a, SceneConfig::random(48, 32, 4, 0.5, 9));
        assert_ne!(a, SceneConfig::random(48, 32, 4, 0.5, 10));
        assert_eq!(a.object_count(), 4);
        a.validate().unwrap();
        assert_eq!(SceneConfig::random(48, 32, 25, 0.5, 9).object_count(), MAX_OBJECTS);
    }

    fn translating(vx: f64, vy: f64) -> SceneConfig {
        SceneConfig::background_only(32, 24, Texture::noise(5.0, 3), AffineVelocity::translation(vx, vy), 2.0)
    }

    fn with_objects(n: usize) -> SceneConfig {
        let mut cfg =
            SceneConfig::background_only(32, 32, Texture::Constant { value: 0.3 }, AffineVelocity::default(), 1.0);
        for i in 0..n {
            cfg.objects.push(ObjectSpec {
                texture: Texture::Constant { value: 0.9 },
                shape: Shape::Rect {
                    width: 6.0,
                    height: 5.0,
                },
                pose: Pose {
                    x: 6.0 + 8.0 * i as f64,
                    y: 16.0,
                    angle: 0.0,
                    scale: 1.0,
                },
                velocity: AffineVelocity::translation(3.0, 0.0),
            });
        }
        cfg
    }

    #[test]
    fn static_scene_is_time_invariant() {
        let cfg = translating(0.0, 0.0);
        let a = render_scene(&cfg, 0.0).unwrap();
        let b = render_scene(&cfg, 1.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_translation_shifts_one_pixel() {
        let cfg = translating(1.0, 0.0);
        let a = render_scene(&cfg, 0.0).unwrap();
        let b = render_scene(&cfg, 1.0).unwrap();
        for y in 0..cfg.height {
            for x in 1..cfg.width {
                assert_eq!(b.get(x, y), a.get(x - 1, y), "({x},{y})");
            }
        }
    }

    #[test]
    fn objects_are_composited() {
        let bg = render_scene(&with_objects(0), 0.3).unwrap();
        let fg = render_scene(&with_objects(3), 0.3).unwrap();
        assert!(bg.as_slice().iter().zip(fg.as_slice()).any(|(a, b)| a != b));
    }

    #[test]
    fn render_rejects_time_outside_duration() {
        assert!(render_scene(&translating(1.0, 0.0), 2.5).is_err());
    }

    #[test]
    fn timestep_static_is_ceiling() {
        assert_eq!(adaptive_timestep(&translating(0.0, 0.0), 0.0).unwrap(), 0.1);
    }

    #[test]
    fn timestep_translation_is_inverse_speed() {
        let dt = adaptive_timestep(&translating(100.0, 0.0), 0.3).unwrap();
        assert!((dt - 0.01).abs() < 1e-15, "{dt}");
        let dt = adaptive_timestep(&translating(60.0, 80.0), 0.0).unwrap();
        assert!((dt - 0.01).abs() < 1e-15, "{dt}");
    }

    #[test]
    fn timestep_rotation_uses_fastest_corner() {
        let mut cfg = translating(0.0, 0.0);
        // corner (0,0) is farthest from the centre (16,12): radius 20
        let r = (16.0f64).hypot(12.0);
        cfg.background.velocity.omega = 200.0 / r;
        let dt = adaptive_timestep(&cfg, 0.0).unwrap();
        assert!((dt - 0.005).abs() < 1e-12, "{dt}");
    }

    #[test]
    fn timestep_clamped_below() {
        let dt = adaptive_timestep(&translating(1e7, 0.0), 0.0).unwrap();
        assert_eq!(dt, 1e-5);
    }

    #[test]
    fn flow_static_is_zero() {
        let f = ground_truth_flow(&translating(0.0, 0.0), 0.0, 1.0).unwrap();
        assert!(f.u_slice().iter().chain(f.v_slice()).all(|&c| c == 0.0));
    }

    #[test]
    fn flow_background_translation_is_uniform() {
        let f = ground_truth_flow(&translating(4.0, -2.0), 0.25, 0.75).unwrap();
        for y in 0..f.height() {
            for x in 0..f.width() {
                assert!((f.u(x, y) - 2.0).abs() < 1e-5);
                assert!((f.v(x, y) + 1.0).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn flow_nonzero_only_under_object() {
        let cfg = with_objects(1);
        let f = ground_truth_flow(&cfg, 0.0, 0.5).unwrap();
        let obj = &cfg.objects[0];
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let inside = obj.shape.contains(x as f64 - obj.pose.x, y as f64 - obj.pose.y);
                let moving = f.u(x, y) != 0.0 || f.v(x, y) != 0.0;
                assert_eq!(inside, moving, "({x},{y})");
                if inside {
                    assert!((f.u(x, y) - 1.5).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn flow_rejects_empty_interval() {
        assert!(ground_truth_flow(&translating(1.0, 0.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = with_objects(11);
        assert!(cfg.validate().is_err());
        cfg.objects.truncate(10);
        assert!(cfg.validate().is_ok());
        cfg.width = 8;
        assert!(cfg.validate().is_err());
        let mut cfg = translating(0.0, 0.0);
        cfg.duration = 0.0;
        assert!(cfg.validate().is_err());
    }
}
