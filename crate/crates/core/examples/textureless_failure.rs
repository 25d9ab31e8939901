//! A flat-coloured wall produces no events, so event-gated flow has no
//! support there, while depth stays fully valid.
//!
//! cargo run --release --example textureless_failure

use evreflex::eval::flow_aee;
use evreflex::sim::{simulate_sequence, SceneConfig, Texture, Trajectory};
use evreflex::{accumulate_events, event_mask, CameraModel, FlowField};

fn main() -> evreflex::Result<()> {
    for (name, texture) in [("checker", Texture::checker(0.5, 0.6, 0.8)), ("flat", Texture::flat(0.5))] {
        let scene = SceneConfig {
            room_half_extents: [3.0, 6.0, 3.0],
            wall_texture: texture,
            floor_texture: texture,
            trajectory: Trajectory::line((1.0, 0.0), (1.0, -3.0), 0.0, 0.7, 3.0),
            camera: CameraModel::with_fov(64, 64, 60.0)?,
            duration: 0.3,
            ..Default::default()
        };
        let seq = simulate_sequence(&scene)?;
        let map = accumulate_events(&seq.events[0], seq.window(0), 64, 64)?;
        let mask = event_mask(&map);
        let depth_valid = (0..64 * 64).all(|i| seq.frames[0].depth.is_valid_depth(i));
        let aee = match flow_aee(&FlowField::zeros(64, 64), &seq.frames[0].flow_fwd, Some(&mask)) {
            Ok(e) => format!("{:.2} px", e.aee),
            Err(e) => format!("undefined ({e})"),
        };
        println!(
            "{name:>7} wall: {} events, {:.2}% pixel coverage, zero-flow AEE {aee}, depth fully valid: {depth_valid}",
            seq.events[0].len(),
            100.0 * mask.count() as f64 / 4096.0
        );
    }
    Ok(())
}
