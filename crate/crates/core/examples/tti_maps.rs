//! Compares the ground-truth, dynamic and static inverse time-to-impact maps
//! while the camera drives towards a wall.
//!
//! cargo run --release --example tti_maps

use evreflex::sim::{simulate_sequence, SceneConfig, Trajectory};
use evreflex::tti::{estimate_tti_dynamic, estimate_tti_static, threshold_collision, tti_mse};
use evreflex::CameraModel;

fn main() -> evreflex::Result<()> {
    let scene = SceneConfig {
        room_half_extents: [3.0, 6.0, 3.0],
        trajectory: Trajectory::line((0.0, 0.0), (2.5, 0.0), 0.0, 1.0, 3.0),
        camera: CameraModel::with_fov(64, 64, 60.0)?,
        frame_rate: 10.0,
        duration: 2.0,
        ..Default::default()
    };
    let seq = simulate_sequence(&scene)?;
    let dt = seq.dt();
    for k in (1..seq.frames.len() - 1).step_by(3) {
        let f = &seq.frames[k];
        let gt = seq.tti_at_frame(k).expect("k >= 1");
        let dynamic = estimate_tti_dynamic(&f.flow_fwd, &f.depth, &seq.frames[k + 1].depth, dt)?;
        let stat = estimate_tti_static(&f.flow_fwd, &f.depth, dt)?;
        let danger = threshold_collision(gt, 1.0)?;
        println!(
            "range {:.2} m: tau gt {:.3}, dynamic {:.3}, static {:.3} 1/s; mse dynamic {:.2e}; {:.0}% of pixels within 1 s",
            f.depth.get(32, 32),
            gt.map.get(32, 32),
            dynamic.map.get(32, 32),
            stat.map.get(32, 32),
            tti_mse(&dynamic, gt)?,
            100.0 * danger.count() as f64 / (64.0 * 64.0)
        );
    }
    Ok(())
}
