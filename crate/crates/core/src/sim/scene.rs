use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::CameraModel;

pub const CLASS_STATIC: u32 = 0;
pub const CLASS_FLOOR: u32 = 1;
pub const CLASS_FLYING: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Soft-edged checkerboard.
    Checker,
    /// Spatially constant albedo.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub pattern: Pattern,
    /// Mean intensity.
    pub base: f64,
    /// Peak-to-peak contrast in [0, 1].
    pub amplitude: f64,
    /// Checker period in metres.
    pub period_m: f64,
}

impl Texture {
    pub const fn checker(base: f64, amplitude: f64, period_m: f64) -> Self {
        Texture {
            pattern: Pattern::Checker,
            base,
            amplitude,
            period_m,
        }
    }

    pub const fn flat(base: f64) -> Self {
        Texture {
            pattern: Pattern::Flat,
            base,
            amplitude: 0.0,
            period_m: 1.0,
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.amplitude)
            || !(0.0..=1.0).contains(&self.base)
            || !(self.period_m > 0.0)
        {
            return Err(Error::InvalidArgument(format!("{what} texture out of range: {self:?}")));
        }
        Ok(())
    }

    /// Intensity of a 2-D surface coordinate pair.
    pub(crate) fn shade2(&self, a: f64, b: f64, phase: [f64; 3]) -> f64 {
        match self.pattern {
            Pattern::Flat => self.base,
            Pattern::Checker => {
                let k = std::f64::consts::TAU / self.period_m;
                let c = (k * a + phase[0]).sin() * (k * b + phase[1]).sin();
                self.soft(c)
            }
        }
    }

    /// Intensity of a solid (3-D) coordinate, for curved surfaces.
    pub(crate) fn shade3(&self, p: [f64; 3], phase: [f64; 3]) -> f64 {
        match self.pattern {
            Pattern::Flat => self.base,
            Pattern::Checker => {
                let k = std::f64::consts::TAU / self.period_m;
                let c = (k * p[0] + phase[0]).sin()
                    * (k * p[1] + phase[1]).sin()
                    * (k * p[2] + phase[2]).sin();
                self.soft(c.signum() * c.abs().cbrt())
            }
        }
    }

    fn soft(&self, c: f64) -> f64 {
        const SHARPNESS: f64 = 3.0;
        let s = (SHARPNESS * c).tanh() / SHARPNESS.tanh();
        (self.base + 0.5 * self.amplitude * s).clamp(0.0, 1.0)
    }
}

/// A sphere translating at constant velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub radius: f64,
    /// World position at t = 0 (m).
    pub start: [f64; 3],
    /// World velocity (m/s).
    pub velocity: [f64; 3],
    pub class_id: u32,
    pub texture: Texture,
}

impl Obstacle {
    pub fn center(&self, t: f64) -> [f64; 3] {
        [
            self.start[0] + self.velocity[0] * t,
            self.start[1] + self.velocity[1] * t,
            self.start[2] + self.velocity[2] * t,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub yaw_deg: f64,
}

/// Camera pose in the world: floor position, height, yaw about +Z
/// (0 looks along +X).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Pose {
    /// World-frame unit axes of the camera: right, down, forward.
    pub fn axes(&self) -> [[f64; 3]; 3] {
        let (s, c) = self.yaw.sin_cos();
        [[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]]
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn world_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [p[0] - self.x, p[1] - self.y, p[2] - self.z];
        let ax = self.axes();
        [dot(ax[0], d), dot(ax[1], d), dot(ax[2], d)]
    }

    pub fn camera_to_world_dir(&self, r: [f64; 3]) -> [f64; 3] {
        let ax = self.axes();
        [
            ax[0][0] * r[0] + ax[1][0] * r[1] + ax[2][0] * r[2],
            ax[0][1] * r[0] + ax[1][1] * r[1] + ax[2][1] * r[2],
            ax[0][2] * r[0] + ax[1][2] * r[1] + ax[2][2] * r[2],
        ]
    }
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Piecewise-linear floor trajectory through waypoints. Each leg lasts long
/// enough for both the translation (at `speed`) and the yaw change (at
/// `yaw_rate_deg`); the camera holds the last waypoint afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    /// m/s
    pub speed: f64,
    /// deg/s
    pub yaw_rate_deg: f64,
    /// Camera height above the floor (m).
    pub height: f64,
}

impl Trajectory {
    pub fn stationary(x: f64, y: f64, yaw_deg: f64, height: f64) -> Self {
        Trajectory {
            waypoints: vec![Waypoint { x, y, yaw_deg }],
            speed: 1.0,
            yaw_rate_deg: 90.0,
            height,
        }
    }

    /// Straight line from `from` to `to` at `speed`, constant yaw.
    pub fn line(from: (f64, f64), to: (f64, f64), yaw_deg: f64, speed: f64, height: f64) -> Self {
        Trajectory {
            waypoints: vec![
                Waypoint {
                    x: from.0,
                    y: from.1,
                    yaw_deg,
                },
                Waypoint {
                    x: to.0,
                    y: to.1,
                    yaw_deg,
                },
            ],
            speed,
            yaw_rate_deg: 90.0,
            height,
        }
    }

    fn leg_duration(&self, a: &Waypoint, b: &Waypoint) -> f64 {
        let dist = (b.x - a.x).hypot(b.y - a.y);
        let turn = (b.yaw_deg - a.yaw_deg).abs();
        let t_move = if dist > 0.0 { dist / self.speed } else { 0.0 };
        let t_turn = if turn > 0.0 { turn / self.yaw_rate_deg } else { 0.0 };
        t_move.max(t_turn)
    }

    pub fn pose(&self, t: f64) -> Pose {
        let mut elapsed = 0.0;
        for pair in self.waypoints.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let leg = self.leg_duration(a, b);
            if leg > 0.0 && t < elapsed + leg {
                let s = (t - elapsed) / leg;
                return Pose {
                    x: a.x + s * (b.x - a.x),
                    y: a.y + s * (b.y - a.y),
                    z: self.height,
                    yaw: (a.yaw_deg + s * (b.yaw_deg - a.yaw_deg)).to_radians(),
                };
            }
            elapsed += leg;
        }
        let last = self.waypoints.last().expect("validated trajectory");
        Pose {
            x: last.x,
            y: last.y,
            z: self.height,
            yaw: last.yaw_deg.to_radians(),
        }
    }

    /// World velocity (m/s) on the leg active at `t`.
    pub fn world_velocity(&self, t: f64) -> [f64; 3] {
        let mut elapsed = 0.0;
        for pair in self.waypoints.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            let leg = self.leg_duration(a, b);
            if leg > 0.0 && t < elapsed + leg {
                return [(b.x - a.x) / leg, (b.y - a.y) / leg, 0.0];
            }
            elapsed += leg;
        }
        [0.0; 3]
    }

    fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::InvalidArgument("trajectory needs at least one waypoint".into()));
        }
        if !(self.speed > 0.0) || !(self.yaw_rate_deg > 0.0) || !(self.height > 0.0) {
            return Err(Error::InvalidArgument(
                "trajectory speed, yaw rate and height must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    /// Room spans [-hx, hx] x [-hy, hy] x [0, 2 hz].
    pub room_half_extents: [f64; 3],
    pub wall_texture: Texture,
    pub floor_texture: Texture,
    pub obstacles: Vec<Obstacle>,
    pub trajectory: Trajectory,
    pub frame_rate: f64,
    pub duration: f64,
    pub camera: CameraModel,
    /// Log-intensity change per event.
    pub contrast_threshold: f64,
    /// Seeds texture phases (and random scene generation).
    pub rng_seed: u64,
}

pub const DEFAULT_CONTRAST_THRESHOLD: f64 = 0.15;

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            room_half_extents: [3.0, 3.0, 1.5],
            wall_texture: Texture::checker(0.5, 0.6, 0.5),
            floor_texture: Texture::checker(0.4, 0.5, 0.4),
            obstacles: Vec::new(),
            trajectory: Trajectory::line((-1.5, 0.0), (1.5, 0.0), 0.0, 0.5, 0.5),
            frame_rate: 10.0,
            duration: 1.0,
            camera: CameraModel::with_fov(64, 64, 90.0).expect("valid default camera"),
            contrast_threshold: DEFAULT_CONTRAST_THRESHOLD,
            rng_seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.frame_rate > 0.0) {
            return bad("frame_rate must be > 0");
        }
        if !(self.duration > 0.0) {
            return bad("duration must be > 0");
        }
        if !(self.contrast_threshold > 0.0) {
            return bad("contrast_threshold must be > 0");
        }
        if self.room_half_extents.iter().any(|e| !(*e > 0.0)) {
            return bad("room half-extents must be > 0");
        }
        if self.obstacles.iter().any(|o| !(o.radius > 0.0)) {
            return bad("obstacle radius must be > 0");
        }
        if self.camera.width > u16::MAX as usize || self.camera.height > u16::MAX as usize {
            return bad("camera resolution exceeds event coordinate range");
        }
        self.camera.validate()?;
        self.trajectory.validate()?;
        self.wall_texture.validate("wall")?;
        self.floor_texture.validate("floor")?;
        for o in &self.obstacles {
            o.texture.validate("obstacle")?;
        }
        Ok(())
    }

    pub fn frame_interval(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// Number of frames: `duration * frame_rate`, rounded.
    pub fn frame_count(&self) -> usize {
        ((self.duration * self.frame_rate).round() as usize).max(1)
    }

    pub fn frame_time(&self, k: usize) -> f64 {
        k as f64 / self.frame_rate
    }

    /// Per-surface texture phases derived from the seed: walls, floor,
    /// ceiling, then obstacles in order.
    pub(crate) fn phases(&self) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
        (0..3 + self.obstacles.len())
            .map(|_| {
                [
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                ]
            })
            .collect()
    }

    /// A dataset-style random scene: a floor trajectory through random
    /// waypoints and one to three flying spheres that pass near the camera.
    pub fn random(seed: u64, camera: CameraModel, frame_rate: f64, duration: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hx = rng.gen_range(2.5..4.5);
        let hy = rng.gen_range(2.5..4.5);
        let hz = rng.gen_range(1.2..1.8);
        let margin = 0.8;
        let n_way = rng.gen_range(3..6);
        let mut waypoints = Vec::with_capacity(n_way);
        let mut yaw: f64 = rng.gen_range(-180.0..180.0);
        for _ in 0..n_way {
            yaw += rng.gen_range(-60.0..60.0);
            waypoints.push(Waypoint {
                x: rng.gen_range(-hx + margin..hx - margin),
                y: rng.gen_range(-hy + margin..hy - margin),
                yaw_deg: yaw,
            });
        }
        let trajectory = Trajectory {
            waypoints,
            speed: rng.gen_range(0.3..1.0),
            yaw_rate_deg: rng.gen_range(20.0..60.0),
            height: rng.gen_range(0.2..0.6),
        };
        let n_obs = rng.gen_range(1..=3);
        let obstacles = (0..n_obs)
            .map(|_| {
                let t_meet = rng.gen_range(0.3..0.9) * duration;
                let p = trajectory.pose(t_meet);
                let target = [
                    p.x + rng.gen_range(-0.3..0.3),
                    p.y + rng.gen_range(-0.3..0.3),
                    p.z + rng.gen_range(-0.1..0.3),
                ];
                let speed = rng.gen_range(0.5..3.0);
                let heading: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let climb: f64 = rng.gen_range(-0.2..0.2);
                let dir = [heading.cos() * climb.cos(), heading.sin() * climb.cos(), climb.sin()];
                let velocity = [dir[0] * speed, dir[1] * speed, dir[2] * speed];
                Obstacle {
                    radius: rng.gen_range(0.1..0.3),
                    start: [
                        target[0] - velocity[0] * t_meet,
                        target[1] - velocity[1] * t_meet,
                        target[2] - velocity[2] * t_meet,
                    ],
                    velocity,
                    class_id: CLASS_FLYING,
                    texture: Texture::checker(rng.gen_range(0.3..0.7), 0.6, 0.15),
                }
            })
            .collect();
        SceneConfig {
            room_half_extents: [hx, hy, hz],
            wall_texture: Texture::checker(0.5, rng.gen_range(0.3..0.8), rng.gen_range(0.3..0.8)),
            floor_texture: Texture::checker(0.4, rng.gen_range(0.3..0.8), rng.gen_range(0.3..0.8)),
            obstacles,
            trajectory,
            frame_rate,
            duration,
            camera,
            contrast_threshold: DEFAULT_CONTRAST_THRESHOLD,
            rng_seed: seed,
        }
    }
}
