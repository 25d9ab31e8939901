//! Detects an approaching sphere, lifts its motion to 3-D and derives the
//! evasion direction from the camera's own velocity.
//!
//! cargo run --release --example evasion

use evreflex::policy::{evade, EgoMotion, MotionUnits};
use evreflex::sim::{simulate_sequence, Obstacle, SceneConfig, Texture, Trajectory, CLASS_FLYING};
use evreflex::tti::{estimate_tti_dynamic, threshold_collision};
use evreflex::CameraModel;

fn main() -> evreflex::Result<()> {
    let scene = SceneConfig {
        room_half_extents: [5.0, 4.0, 1.5],
        trajectory: Trajectory::line((-3.0, 0.0), (4.0, 0.0), 0.0, 0.3, 1.0),
        obstacles: vec![Obstacle {
            radius: 0.3,
            start: [2.5, 0.2, 1.0],
            velocity: [-2.5, 0.2, 0.0],
            class_id: CLASS_FLYING,
            texture: Texture::checker(0.5, 0.7, 0.15),
        }],
        camera: CameraModel::with_fov(96, 96, 70.0)?,
        frame_rate: 20.0,
        duration: 1.6,
        ..Default::default()
    };
    let seq = simulate_sequence(&scene)?;
    for k in 1..seq.frames.len() - 1 {
        let f = &seq.frames[k];
        let tti = estimate_tti_dynamic(&f.flow_fwd, &f.depth, &seq.frames[k + 1].depth, seq.dt())?;
        let danger = threshold_collision(&tti, 1.0)?;
        let [vx, vy, vz] = f.ego_velocity;
        let r = evade(&f.flow_fwd, &f.depth, &tti, &danger, MotionUnits::Metric(scene.camera), EgoMotion::new(vx, vy, vz))?;
        if r.pixel_count == 0 {
            continue;
        }
        let m = r.motion_vec;
        println!(
            "t={:.2}s {:>4} danger px, motion ({:+.2}, {:+.2}, {:+.2}) m/s, evade ({:+.2}, {:+.2}, {:+.2}){}",
            f.t,
            r.pixel_count,
            m.x,
            m.y,
            m.z,
            r.psi.x,
            r.psi.y,
            r.psi.z,
            if r.degenerate { " (fallback)" } else { "" }
        );
    }
    Ok(())
}
