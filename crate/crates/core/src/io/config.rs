//! Text configuration: `key = value` lines, `#` comments, `[section]` headers.
//!
//! ```text
//! [scene]
//! frame_rate = 20
//! duration = 2.5
//! contrast_threshold = 0.15
//! rng_seed = 7
//! room_half_extents = 3, 3, 1.5
//! random = false
//!
//! [camera]
//! width = 64
//! height = 64
//! hfov_deg = 90
//!
//! [trajectory]
//! waypoints = -1.5 0 0; 1.5 0 0
//! speed = 0.5
//! yaw_rate_deg = 90
//! height = 0.5
//!
//! [texture]
//! wall = checker 0.5 0.6 0.5
//! floor = flat 0.4
//!
//! [obstacle]
//! radius = 0.3
//! start = 2, 0, 0.5
//! velocity = -1, 0, 0
//! texture = checker 0.5 0.6 0.15
//!
//! [solver]
//! alpha = 0.5
//! event_weighting = gated
//! ```
//!
//! Keys before the first header belong to `[scene]`. Every `[obstacle]`
//! header starts a new sphere. Unknown sections or keys are errors; missing
//! keys keep their defaults.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::flow::{Descent, EventWeighting, FlowSolverConfig};
use crate::sim::{Obstacle, Pattern, SceneConfig, Texture, Waypoint, CLASS_FLYING};
use crate::types::CameraModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { line: usize, name: String },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        line: usize,
        section: String,
        key: String,
    },
    #[error("line {line}: `{key}` has malformed value `{value}`")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("line {line}: `{key}` out of range: {message}")]
    Range {
        line: usize,
        key: String,
        message: String,
    },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Everything a config file can describe.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub solver: FlowSolverConfig,
}


#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    Scene,
    Camera,
    Trajectory,
    Texture,
    Obstacle,
    Solver,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Scene => "scene",
            Section::Camera => "camera",
            Section::Trajectory => "trajectory",
            Section::Texture => "texture",
            Section::Obstacle => "obstacle",
            Section::Solver => "solver",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "scene" => Section::Scene,
            "camera" => Section::Camera,
            "trajectory" => Section::Trajectory,
            "texture" => Section::Texture,
            "obstacle" => Section::Obstacle,
            "solver" => Section::Solver,
            _ => return None,
        })
    }
}

struct Entry<'a> {
    line: usize,
    key: &'a str,
    value: &'a str,
}

impl Entry<'_> {
    fn bad(&self) -> ConfigError {
        ConfigError::BadValue {
            line: self.line,
            key: self.key.to_string(),
            value: self.value.to_string(),
        }
    }

    fn range(&self, message: &str) -> ConfigError {
        ConfigError::Range {
            line: self.line,
            key: self.key.to_string(),
            message: message.to_string(),
        }
    }

    fn f64(&self) -> Result<f64, ConfigError> {
        let v: f64 = self.value.parse().map_err(|_| self.bad())?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.range("must be finite"))
        }
    }

    fn positive(&self) -> Result<f64, ConfigError> {
        let v = self.f64()?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(self.range(&format!("{v} must be > 0")))
        }
    }

    fn non_negative(&self) -> Result<f64, ConfigError> {
        let v = self.f64()?;
        if v >= 0.0 {
            Ok(v)
        } else {
            Err(self.range(&format!("{v} must be >= 0")))
        }
    }

    fn unit(&self) -> Result<f64, ConfigError> {
        let v = self.f64()?;
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(self.range(&format!("{v} must lie in [0, 1]")))
        }
    }

    fn count(&self, min: u64, max: u64) -> Result<u64, ConfigError> {
        let v: u64 = self.value.parse().map_err(|_| self.bad())?;
        if (min..=max).contains(&v) {
            Ok(v)
        } else {
            Err(self.range(&format!("{v} must lie in [{min}, {max}]")))
        }
    }

    fn bool(&self) -> Result<bool, ConfigError> {
        match self.value {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            _ => Err(self.bad()),
        }
    }

    fn numbers(&self) -> Result<Vec<f64>, ConfigError> {
        self.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| self.bad()))
            .collect()
    }

    fn vec3(&self) -> Result<[f64; 3], ConfigError> {
        let v = self.numbers()?;
        <[f64; 3]>::try_from(v).map_err(|_| self.bad())
    }

    fn texture(&self) -> Result<Texture, ConfigError> {
        let mut parts = self.value.split_whitespace();
        let kind = parts.next().ok_or_else(|| self.bad())?;
        let nums: Vec<f64> = parts
            .map(|s| s.parse::<f64>().map_err(|_| self.bad()))
            .collect::<Result<_, _>>()?;
        let tex = match (kind, nums.as_slice()) {
            ("flat", [base]) => Texture::flat(*base),
            ("checker", [base, amp, period]) => Texture::checker(*base, *amp, *period),
            _ => return Err(self.bad()),
        };
        if !(0.0..=1.0).contains(&tex.base) || !(0.0..=1.0).contains(&tex.amplitude) {
            return Err(self.range("base and amplitude must lie in [0, 1]"));
        }
        if !(tex.period_m > 0.0) {
            return Err(self.range("period must be > 0"));
        }
        Ok(tex)
    }

    fn waypoints(&self) -> Result<Vec<Waypoint>, ConfigError> {
        let mut out = Vec::new();
        for chunk in self.value.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let v: Vec<f64> = chunk
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| self.bad()))
                .collect::<Result<_, _>>()?;
            match v.as_slice() {
                [x, y, yaw_deg] => out.push(Waypoint {
                    x: *x,
                    y: *y,
                    yaw_deg: *yaw_deg,
                }),
                _ => return Err(self.bad()),
            }
        }
        if out.is_empty() {
            return Err(self.range("at least one waypoint"));
        }
        Ok(out)
    }
}

#[derive(Default)]
struct CameraSpec {
    width: Option<usize>,
    height: Option<usize>,
    hfov_deg: Option<f64>,
    fx: Option<f64>,
    fy: Option<f64>,
    cx: Option<f64>,
    cy: Option<f64>,
}

/// Parses configuration text. An empty string yields all defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_seeded(text, None)
}

/// [`parse_config`] with an optional `rng_seed` override, applied before a
/// random scene is expanded.
pub fn parse_config_seeded(text: &str, seed: Option<u64>) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut random = false;
    let mut camera = CameraSpec::default();
    let mut section = Section::Scene;
    let mut seen: Vec<(Section, usize, String)> = Vec::new();
    let mut obstacle_index = 0usize;

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("unterminated section header `{content}`"),
            })?;
            section = Section::parse(name.trim()).ok_or_else(|| ConfigError::UnknownSection {
                line,
                name: name.trim().to_string(),
            })?;
            if section == Section::Obstacle {
                obstacle_index = cfg.scene.obstacles.len() + 1;
                cfg.scene.obstacles.push(Obstacle {
                    radius: 0.25,
                    start: [1.5, 0.0, 0.5],
                    velocity: [-1.0, 0.0, 0.0],
                    class_id: CLASS_FLYING,
                    texture: Texture::checker(0.5, 0.6, 0.15),
                });
            }
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            message: format!("expected `key = value`, found `{content}`"),
        })?;
        let e = Entry {
            line,
            key: key.trim(),
            value: value.trim(),
        };
        if e.key.is_empty() {
            return Err(ConfigError::Syntax {
                line,
                message: "empty key".into(),
            });
        }
        let slot = (section, obstacle_index, e.key.to_string());
        if seen.contains(&slot) {
            return Err(ConfigError::Duplicate {
                line,
                key: e.key.to_string(),
            });
        }
        seen.push(slot);

        let unknown = || ConfigError::UnknownKey {
            line,
            section: section.name().to_string(),
            key: e.key.to_string(),
        };
        let scene = &mut cfg.scene;
        match section {
            Section::Scene => match e.key {
                "frame_rate" => scene.frame_rate = e.positive()?,
                "duration" => scene.duration = e.positive()?,
                "contrast_threshold" => scene.contrast_threshold = e.positive()?,
                "rng_seed" => scene.rng_seed = e.count(0, u64::MAX)?,
                "random" => random = e.bool()?,
                "room_half_extents" => {
                    let v = e.vec3()?;
                    if v.iter().any(|x| *x <= 0.0) {
                        return Err(e.range("half-extents must be > 0"));
                    }
                    scene.room_half_extents = v;
                }
                _ => return Err(unknown()),
            },
            Section::Camera => match e.key {
                "width" => camera.width = Some(e.count(1, u16::MAX as u64)? as usize),
                "height" => camera.height = Some(e.count(1, u16::MAX as u64)? as usize),
                "hfov_deg" => {
                    let v = e.positive()?;
                    if v >= 180.0 {
                        return Err(e.range("must be < 180"));
                    }
                    camera.hfov_deg = Some(v);
                }
                "fx" => camera.fx = Some(e.positive()?),
                "fy" => camera.fy = Some(e.positive()?),
                "cx" => camera.cx = Some(e.f64()?),
                "cy" => camera.cy = Some(e.f64()?),
                _ => return Err(unknown()),
            },
            Section::Trajectory => match e.key {
                "waypoints" => scene.trajectory.waypoints = e.waypoints()?,
                "speed" => scene.trajectory.speed = e.positive()?,
                "yaw_rate_deg" => scene.trajectory.yaw_rate_deg = e.positive()?,
                "height" => scene.trajectory.height = e.positive()?,
                _ => return Err(unknown()),
            },
            Section::Texture => match e.key {
                "wall" => scene.wall_texture = e.texture()?,
                "floor" => scene.floor_texture = e.texture()?,
                _ => return Err(unknown()),
            },
            Section::Obstacle => {
                let ob = scene.obstacles.last_mut().expect("obstacle section pushes one");
                match e.key {
                    "radius" => ob.radius = e.positive()?,
                    "start" => ob.start = e.vec3()?,
                    "velocity" => ob.velocity = e.vec3()?,
                    "class_id" => ob.class_id = e.count(0, u32::MAX as u64)? as u32,
                    "texture" => ob.texture = e.texture()?,
                    _ => return Err(unknown()),
                }
            }
            Section::Solver => {
                let s = &mut cfg.solver;
                match e.key {
                    "alpha" => s.alpha = e.non_negative()?,
                    "charbonnier_eps" => s.charbonnier_eps = e.positive()?,
                    "charbonnier_alpha" => {
                        let v = e.unit()?;
                        if v == 0.0 || v == 1.0 {
                            return Err(e.range("must lie in (0, 1)"));
                        }
                        s.charbonnier_alpha = v;
                    }
                    "pyramid_levels" => s.pyramid_levels = e.count(1, 16)? as usize,
                    "iters_per_level" => s.iters_per_level = e.count(0, 1_000_000)? as usize,
                    "step_size" => s.step_size = e.positive()?,
                    "step_growth" => {
                        let v = e.f64()?;
                        if v < 1.0 {
                            return Err(e.range("must be >= 1"));
                        }
                        s.step_growth = v;
                    }
                    "min_step" => s.min_step = e.positive()?,
                    "convergence_tol" => s.convergence_tol = e.non_negative()?,
                    "event_weighting" => {
                        s.event_weighting = match e.value {
                            "gated" => EventWeighting::EventGated,
                            "uniform" => EventWeighting::Uniform,
                            _ => return Err(e.bad()),
                        }
                    }
                    "descent" => {
                        s.descent = match e.value {
                            "gradient" => Descent::Gradient,
                            "reweighted" => Descent::Reweighted,
                            _ => return Err(e.bad()),
                        }
                    }
                    "cg_iters" => s.cg_iters = e.count(1, 100_000)? as usize,
                    "match_radius" => s.match_radius = e.count(0, 64)? as usize,
                    _ => return Err(unknown()),
                }
            }
        }
    }

    if let Some(seed) = seed {
        cfg.scene.rng_seed = seed;
    }
    let base = cfg.scene.camera;
    let width = camera.width.unwrap_or(base.width);
    let height = camera.height.unwrap_or(base.height);
    let fov = CameraModel::with_fov(width, height, camera.hfov_deg.unwrap_or(90.0))
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.scene.camera = CameraModel::new(
        camera.fx.unwrap_or(fov.fx),
        camera.fy.or(camera.fx).unwrap_or(fov.fy),
        camera.cx.unwrap_or(fov.cx),
        camera.cy.unwrap_or(fov.cy),
        width,
        height,
    )
    .map_err(|e| ConfigError::Invalid(e.to_string()))?;

    if random {
        let s = &cfg.scene;
        let generated = SceneConfig::random(s.rng_seed, s.camera, s.frame_rate, s.duration);
        cfg.scene = SceneConfig {
            contrast_threshold: s.contrast_threshold,
            ..generated
        };
    }
    cfg.scene.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    cfg.solver.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(cfg)
}

pub fn read_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })?;
    Ok(parse_config(&text)?)
}

fn texture_str(t: &Texture) -> String {
    match t.pattern {
        Pattern::Flat => format!("flat {}", t.base),
        Pattern::Checker => format!("checker {} {} {}", t.base, t.amplitude, t.period_m),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

/// Renders a fully explicit config that parses back to the same value.
/// Random scenes are written out in their expanded form.
pub fn dump_config(cfg: &RunConfig) -> String {
    let s = &cfg.scene;
    let c = &s.camera;
    let tr = &s.trajectory;
    let so = &cfg.solver;
    let mut out = String::new();
    let _ = writeln!(out, "[scene]");
    let _ = writeln!(out, "frame_rate = {}", s.frame_rate);
    let _ = writeln!(out, "duration = {}", s.duration);
    let _ = writeln!(out, "contrast_threshold = {}", s.contrast_threshold);
    let _ = writeln!(out, "rng_seed = {}", s.rng_seed);
    let _ = writeln!(out, "room_half_extents = {}", join(&s.room_half_extents));
    let _ = writeln!(out, "\n[camera]");
    let _ = writeln!(out, "width = {}\nheight = {}", c.width, c.height);
    let _ = writeln!(out, "fx = {}\nfy = {}\ncx = {}\ncy = {}", c.fx, c.fy, c.cx, c.cy);
    let _ = writeln!(out, "\n[trajectory]");
    let wps: Vec<String> = tr
        .waypoints
        .iter()
        .map(|w| format!("{} {} {}", w.x, w.y, w.yaw_deg))
        .collect();
    let _ = writeln!(out, "waypoints = {}", wps.join("; "));
    let _ = writeln!(out, "speed = {}", tr.speed);
    let _ = writeln!(out, "yaw_rate_deg = {}", tr.yaw_rate_deg);
    let _ = writeln!(out, "height = {}", tr.height);
    let _ = writeln!(out, "\n[texture]");
    let _ = writeln!(out, "wall = {}", texture_str(&s.wall_texture));
    let _ = writeln!(out, "floor = {}", texture_str(&s.floor_texture));
    for ob in &s.obstacles {
        let _ = writeln!(out, "\n[obstacle]");
        let _ = writeln!(out, "radius = {}", ob.radius);
        let _ = writeln!(out, "start = {}", join(&ob.start));
        let _ = writeln!(out, "velocity = {}", join(&ob.velocity));
        let _ = writeln!(out, "class_id = {}", ob.class_id);
        let _ = writeln!(out, "texture = {}", texture_str(&ob.texture));
    }
    let _ = writeln!(out, "\n[solver]");
    let _ = writeln!(out, "alpha = {}", so.alpha);
    let _ = writeln!(out, "charbonnier_eps = {}", so.charbonnier_eps);
    let _ = writeln!(out, "charbonnier_alpha = {}", so.charbonnier_alpha);
    let _ = writeln!(out, "pyramid_levels = {}", so.pyramid_levels);
    let _ = writeln!(out, "iters_per_level = {}", so.iters_per_level);
    let _ = writeln!(out, "step_size = {}", so.step_size);
    let _ = writeln!(out, "step_growth = {}", so.step_growth);
    let _ = writeln!(out, "min_step = {}", so.min_step);
    let _ = writeln!(out, "convergence_tol = {}", so.convergence_tol);
    let weighting = match so.event_weighting {
        EventWeighting::EventGated => "gated",
        EventWeighting::Uniform => "uniform",
    };
    let _ = writeln!(out, "event_weighting = {weighting}");
    let descent = match so.descent {
        Descent::Gradient => "gradient",
        Descent::Reweighted => "reweighted",
    };
    let _ = writeln!(out, "descent = {descent}");
    let _ = writeln!(out, "cg_iters = {}", so.cg_iters);
    let _ = writeln!(out, "match_radius = {}", so.match_radius);
    out
}
