//! Renders a short corridor flight past a flying sphere and prints per-frame
//! statistics of every stream.
//!
//! cargo run --release --example simulate_scene

use evreflex::sim::{simulate_sequence, Obstacle, SceneConfig, Texture, Trajectory, CLASS_FLYING};
use evreflex::CameraModel;

fn main() -> evreflex::Result<()> {
    let scene = SceneConfig {
        trajectory: Trajectory::line((-2.0, 0.0), (1.0, 0.0), 0.0, 1.0, 0.8),
        obstacles: vec![Obstacle {
            radius: 0.3,
            start: [1.5, 0.8, 0.8],
            velocity: [-1.0, -0.5, 0.0],
            class_id: CLASS_FLYING,
            texture: Texture::checker(0.5, 0.7, 0.15),
        }],
        camera: CameraModel::with_fov(64, 48, 80.0)?,
        frame_rate: 10.0,
        duration: 1.0,
        ..Default::default()
    };
    let seq = simulate_sequence(&scene)?;
    println!("{} frames at {} Hz", seq.frames.len(), scene.frame_rate);
    for (k, f) in seq.frames.iter().enumerate() {
        let (dmin, dmax) = f.depth.min_max();
        let sphere = f.class_map.values.iter().filter(|c| **c == CLASS_FLYING as f32).count();
        let events = seq.events.get(k).map_or(0, Vec::len);
        let danger = seq.tti_at_frame(k).map_or(0.0, |t| t.map.min_max().1);
        println!(
            "t={:.1}s depth {dmin:.2}..{dmax:.2} m, sphere {sphere:>4} px, flow max {:.2} px, events {events:>5}, max tau {danger:.2} 1/s",
            f.t,
            f.flow_fwd.max_magnitude(),
        );
    }
    Ok(())
}
