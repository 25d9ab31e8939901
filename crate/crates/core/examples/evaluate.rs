//! Scores danger segmentation against the 0.5 m depth baseline and the
//! evasion vectors against the simulator's truth.
//!
//! cargo run --release --example evaluate

use evreflex::eval::{aae_report, depth_baseline, Prf1Accumulator};
use evreflex::policy::{obstacle_motion_vector, MotionUnits};
use evreflex::sim::{simulate_sequence, Obstacle, SceneConfig, Texture, Trajectory, CLASS_FLYING};
use evreflex::tti::{estimate_tti_dynamic, threshold_collision};
use evreflex::CameraModel;

fn main() -> evreflex::Result<()> {
    let scene = SceneConfig {
        room_half_extents: [5.0, 4.0, 1.5],
        trajectory: Trajectory::line((-3.0, 0.0), (4.0, 0.0), 0.0, 0.3, 1.0),
        obstacles: vec![Obstacle {
            radius: 0.3,
            start: [2.5, -0.6, 1.0],
            velocity: [-2.5, 0.6, 0.0],
            class_id: CLASS_FLYING,
            texture: Texture::checker(0.5, 0.7, 0.15),
        }],
        camera: CameraModel::with_fov(96, 96, 70.0)?,
        frame_rate: 20.0,
        duration: 1.6,
        ..Default::default()
    };
    let seq = simulate_sequence(&scene)?;
    let units = MotionUnits::Metric(scene.camera);
    let mut ours = Prf1Accumulator::with_classes(&[0, 1, CLASS_FLYING]);
    let mut baseline = Prf1Accumulator::with_classes(&[0, 1, CLASS_FLYING]);
    let mut pairs = Vec::new();
    for k in 1..seq.frames.len() - 1 {
        let f = &seq.frames[k];
        let gt = seq.tti_at_frame(k).expect("k >= 1");
        let gt_mask = threshold_collision(gt, 1.0)?;
        let tti = estimate_tti_dynamic(&f.flow_fwd, &f.depth, &seq.frames[k + 1].depth, seq.dt())?;
        let pred = threshold_collision(&tti, 1.0)?;
        ours.add(&pred, &gt_mask, &f.class_map)?;
        baseline.add(&depth_baseline(&f.depth, 0.5)?, &gt_mask, &f.class_map)?;
        let truth = obstacle_motion_vector(&f.flow_fwd, &f.depth, gt, &gt_mask, units)?;
        let est = obstacle_motion_vector(&f.flow_fwd, &f.depth, &tti, &pred, units)?;
        if truth.pixel_count > 0 && est.pixel_count > 0 {
            pairs.push((est.vector, truth.vector));
        }
    }
    let o = ours.finish().per_class[&CLASS_FLYING];
    let b = baseline.finish().per_class[&CLASS_FLYING];
    println!("flying obstacle  P/R/F1 {:.3}/{:.3}/{:.3}", o.precision, o.recall, o.f1);
    println!("depth < 0.5 m    P/R/F1 {:.3}/{:.3}/{:.3}", b.precision, b.recall, b.f1);
    let aae = aae_report(&pairs)?;
    match aae.aae_top10 {
        Some(top) => println!("AAE {:.2} deg over {} frames, top 10% {top:.2} deg", aae.aae, aae.samples),
        None => println!("AAE {:.2} deg over {} frames", aae.aae, aae.samples),
    }
    Ok(())
}
