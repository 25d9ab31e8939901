use super::scene::{dot, Pose, SceneConfig, CLASS_FLOOR, CLASS_STATIC};
use crate::error::{Error, Result};
use crate::types::{FloatMap, FlowField, Semantics};

/// One simulator time slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub intensity: FloatMap,
    /// Z-depth in metres; 0 where nothing was hit.
    pub depth: FloatMap,
    pub class_map: FloatMap,
    /// Displacement to the next frame (t -> t + dt).
    pub flow_fwd: FlowField,
    /// Displacement to the previous frame (t -> t - dt).
    pub flow_bwd: FlowField,
    pub pose: Pose,
    /// Camera-frame ego velocity (m/s).
    pub ego_velocity: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Surface {
    WallX,
    WallY,
    Floor,
    Ceiling,
    Sphere(usize),
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    s: f64,
    surface: Surface,
}

fn cast(scene: &SceneConfig, t: f64, origin: [f64; 3], dir: [f64; 3]) -> Option<Hit> {
    let [hx, hy, hz] = scene.room_half_extents;
    let lo = [-hx, -hy, 0.0];
    let hi = [hx, hy, 2.0 * hz];
    let mut best: Option<Hit> = None;
    for axis in 0..3 {
        if dir[axis] == 0.0 {
            continue;
        }
        let positive = dir[axis] > 0.0;
        let bound = if positive { hi[axis] } else { lo[axis] };
        let s = (bound - origin[axis]) / dir[axis];
        if s > 0.0 && best.is_none_or(|b| s < b.s) {
            let surface = match axis {
                0 => Surface::WallX,
                1 => Surface::WallY,
                _ if positive => Surface::Ceiling,
                _ => Surface::Floor,
            };
            best = Some(Hit { s, surface });
        }
    }
    for (k, ob) in scene.obstacles.iter().enumerate() {
        let c = ob.center(t);
        let oc = [origin[0] - c[0], origin[1] - c[1], origin[2] - c[2]];
        let a = dot(dir, dir);
        let b = dot(oc, dir);
        let cc = dot(oc, oc) - ob.radius * ob.radius;
        let disc = b * b - a * cc;
        if disc < 0.0 {
            continue;
        }
        let s = (-b - disc.sqrt()) / a;
        if s > 1e-9 && best.is_none_or(|h| s < h.s) {
            best = Some(Hit {
                s,
                surface: Surface::Sphere(k),
            });
        }
    }
    best
}

fn inside_room(scene: &SceneConfig, p: [f64; 3]) -> bool {
    let [hx, hy, hz] = scene.room_half_extents;
    p[0].abs() < hx && p[1].abs() < hy && p[2] > 0.0 && p[2] < 2.0 * hz
}

/// Ray-casts the scene at time `t`. Flows are analytic: each surface point is
/// moved with its object and re-projected with the camera pose one frame
/// interval later (forward) or earlier (backward).
pub fn render_frame(scene: &SceneConfig, t: f64) -> Result<Frame> {
    let cam = scene.camera;
    let dt = scene.frame_interval();
    let pose = scene.trajectory.pose(t);
    if !inside_room(scene, pose.position()) {
        return Err(Error::Pose {
            x: pose.x,
            y: pose.y,
            z: pose.z,
        });
    }
    let phases = scene.phases();
    let pose_next = scene.trajectory.pose(t + dt);
    let pose_prev = scene.trajectory.pose(t - dt);
    let (w, h) = (cam.width, cam.height);
    let mut intensity = FloatMap::zeros(w, h, Semantics::Intensity);
    let mut depth = FloatMap::zeros(w, h, Semantics::DepthM);
    let mut class_map = FloatMap::zeros(w, h, Semantics::ClassId);
    let mut flow_fwd = FlowField::zeros(w, h);
    let mut flow_bwd = FlowField::zeros(w, h);
    let origin = pose.position();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let dir = pose.camera_to_world_dir(cam.ray(x as f64, y as f64));
            let Some(hit) = cast(scene, t, origin, dir) else {
                continue;
            };
            let p = [
                origin[0] + hit.s * dir[0],
                origin[1] + hit.s * dir[1],
                origin[2] + hit.s * dir[2],
            ];
            depth.values[i] = hit.s as f32;
            let (value, class, velocity) = match hit.surface {
                Surface::WallX => (
                    scene.wall_texture.shade2(p[1], p[2], phases[0]),
                    CLASS_STATIC,
                    [0.0; 3],
                ),
                Surface::WallY => (
                    scene.wall_texture.shade2(p[0], p[2], phases[0]),
                    CLASS_STATIC,
                    [0.0; 3],
                ),
                Surface::Floor => (
                    scene.floor_texture.shade2(p[0], p[1], phases[1]),
                    CLASS_FLOOR,
                    [0.0; 3],
                ),
                Surface::Ceiling => (
                    scene.wall_texture.shade2(p[0], p[1], phases[2]),
                    CLASS_STATIC,
                    [0.0; 3],
                ),
                Surface::Sphere(k) => {
                    let ob = &scene.obstacles[k];
                    let c = ob.center(t);
                    let local = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
                    (ob.texture.shade3(local, phases[3 + k]), ob.class_id, ob.velocity)
                }
            };
            intensity.values[i] = value as f32;
            class_map.values[i] = class as f32;
            for (target, other_pose, sign) in [
                (&mut flow_fwd, &pose_next, 1.0),
                (&mut flow_bwd, &pose_prev, -1.0),
            ] {
                let moved = [
                    p[0] + sign * dt * velocity[0],
                    p[1] + sign * dt * velocity[1],
                    p[2] + sign * dt * velocity[2],
                ];
                if let Some((px, py)) = cam.project(other_pose.world_to_camera(moved)) {
                    target.u[i] = (px - x as f64) as f32;
                    target.v[i] = (py - y as f64) as f32;
                }
            }
        }
    }

    let v = scene.trajectory.world_velocity(t);
    let ax = pose.axes();
    Ok(Frame {
        t,
        intensity,
        depth,
        class_map,
        flow_fwd,
        flow_bwd,
        pose,
        ego_velocity: [dot(ax[0], v), dot(ax[1], v), dot(ax[2], v)],
    })
}
