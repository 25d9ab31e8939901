//! Estimates optical flow between two frames of a sideways camera pan and
//! compares it with the simulator's flow on event pixels.
//!
//! cargo run --release --example estimate_flow

use evreflex::eval::flow_aee;
use evreflex::flow::{estimate_flow, FlowSolverConfig};
use evreflex::sim::{simulate_sequence, SceneConfig, Texture, Trajectory};
use evreflex::{accumulate_events, event_mask, CameraModel};

fn main() -> evreflex::Result<()> {
    let camera = CameraModel::with_fov(64, 64, 60.0)?;
    // Two pixels of lateral motion per frame in front of a wall 2 m away.
    let speed = 2.0 * 2.0 / camera.fx * 10.0;
    let scene = SceneConfig {
        room_half_extents: [3.0, 6.0, 3.0],
        wall_texture: Texture::checker(0.5, 0.6, 0.8),
        trajectory: Trajectory::line((1.0, 0.0), (1.0, -3.0), 0.0, speed, 3.0),
        camera,
        frame_rate: 10.0,
        duration: 0.2,
        ..Default::default()
    };
    let seq = simulate_sequence(&scene)?;
    let events = accumulate_events(&seq.events[0], seq.window(0), 64, 64)?;
    let cfg = FlowSolverConfig::default();
    let est = estimate_flow(Some(&events), &seq.frames[0].intensity, &seq.frames[1].intensity, &cfg)?;
    for level in &est.levels {
        println!(
            "{:>3}x{:<3} {:>4} steps, loss {:.3} -> {:.3}",
            level.width,
            level.height,
            level.losses.len() - 1,
            level.losses[0],
            level.losses.last().copied().unwrap_or(f64::NAN)
        );
    }
    let err = flow_aee(&est.flow, &seq.frames[0].flow_fwd, Some(&event_mask(&events)))?;
    println!("centre flow {:?}, truth {:?}", est.flow.get(32, 32), seq.frames[0].flow_fwd.get(32, 32));
    println!("AEE {:.3} px, outliers {:.2}% over {} event pixels", err.aee, err.outlier_pct, err.pixels);
    Ok(())
}
