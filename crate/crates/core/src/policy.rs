//! Obstacle motion vector and evasion direction from flow, depth and inverse TTI.

use nalgebra::Vector3;

use crate::error::{ensure_same, Result};
use crate::tti::TtiMap;
use crate::types::{CameraModel, FloatMap, FlowField, Mask};

/// Camera-frame velocity of the agent (m/s); Z is the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoMotion {
    pub v: Vector3<f64>,
}

impl EgoMotion {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        EgoMotion {
            v: Vector3::new(x, y, z),
        }
    }
}

/// How the image-plane flow components enter the 3-D vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MotionUnits {
    /// `(u, v)` stay in px/frame; Z is m/s.
    PixelsPerFrame,
    /// `(u d / fx, v d / fy) / dt` in m/s, consistent with Z.
    Metric(CameraModel),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstacleMotion {
    pub vector: Vector3<f64>,
    pub pixel_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvasionResult {
    pub motion_vec: Vector3<f64>,
    /// Unit evasion direction, or zero when even the fallback degenerates.
    pub psi: Vector3<f64>,
    pub degenerate: bool,
    pub pixel_count: usize,
}

/// Mean of `(F_u, F_v, d * tau)` over masked pixels with valid depth and TTI.
/// An empty selection yields the zero vector with `pixel_count = 0`.
pub fn obstacle_motion_vector(
    flow: &FlowField,
    depth: &FloatMap,
    tti: &TtiMap,
    danger: &Mask,
    units: MotionUnits,
) -> Result<ObstacleMotion> {
    ensure_same(flow.dims(), depth.dims())?;
    ensure_same(flow.dims(), tti.dims())?;
    ensure_same(flow.dims(), danger.dims())?;
    let (sx, sy) = match units {
        MotionUnits::PixelsPerFrame => (None, None),
        MotionUnits::Metric(cam) => (Some(1.0 / (cam.fx * tti.dt)), Some(1.0 / (cam.fy * tti.dt))),
    };
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for i in 0..danger.bits.len() {
        if !danger.bits[i] || !tti.valid.bits[i] || !depth.is_valid_depth(i) {
            continue;
        }
        let d = depth.values[i] as f64;
        let (u, v) = (flow.u[i] as f64, flow.v[i] as f64);
        let lateral = match (sx, sy) {
            (Some(kx), Some(ky)) => (u * d * kx, v * d * ky),
            _ => (u, v),
        };
        sum += Vector3::new(lateral.0, lateral.1, d * tti.map.values[i] as f64);
        n += 1;
    }
    let vector = if n == 0 { Vector3::zeros() } else { sum / n as f64 };
    Ok(ObstacleMotion {
        vector,
        pixel_count: n,
    })
}

const DEGENERATE_NORM: f64 = 1e-9;

/// `normalize(motion_vec x v)`; when the cross product vanishes, falls back to
/// camera +X projected orthogonal to `v`.
pub fn evasion_direction(motion_vec: Vector3<f64>, ego: EgoMotion) -> EvasionResult {
    let cross = motion_vec.cross(&ego.v);
    let norm = cross.norm();
    if norm >= DEGENERATE_NORM {
        return EvasionResult {
            motion_vec,
            psi: cross / norm,
            degenerate: false,
            pixel_count: 0,
        };
    }
    let x = Vector3::x();
    let vn = ego.v.norm();
    let projected = if vn > 0.0 {
        let dir = ego.v / vn;
        x - dir * x.dot(&dir)
    } else {
        x
    };
    let pn = projected.norm();
    let psi = if pn >= DEGENERATE_NORM {
        projected / pn
    } else {
        Vector3::zeros()
    };
    EvasionResult {
        motion_vec,
        psi,
        degenerate: true,
        pixel_count: 0,
    }
}

/// Motion vector and evasion direction in one call.
pub fn evade(
    flow: &FlowField,
    depth: &FloatMap,
    tti: &TtiMap,
    danger: &Mask,
    units: MotionUnits,
    ego: EgoMotion,
) -> Result<EvasionResult> {
    let motion = obstacle_motion_vector(flow, depth, tti, danger, units)?;
    Ok(EvasionResult {
        pixel_count: motion.pixel_count,
        ..evasion_direction(motion.vector, ego)
    })
}
