//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured values before asserting.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use evreflex::eval::{
    aae_report, depth_baseline, flow_aee, FlowErrorAccumulator, Prf1Accumulator,
};
use evreflex::flow::{bilinear, estimate_flow, loss_gradient, total_loss, FlowSolverConfig};
use evreflex::io::{
    decode_events, decode_flow, decode_map, encode_events, encode_flow, encode_map, FormatError,
};
use evreflex::policy::{obstacle_motion_vector, MotionUnits};
use evreflex::sim::{
    simulate_sequence, Obstacle, SceneConfig, Sequence, Texture, Trajectory, CLASS_FLYING,
};
use evreflex::tti::{estimate_tti_dynamic, estimate_tti_static, threshold_collision};
use evreflex::{
    accumulate_events, event_mask, CameraModel, Event, EventMap, FloatMap, FlowField, Mask,
    Polarity, Semantics,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
}

fn event_map(seq: &Sequence, k: usize) -> EventMap {
    let (w, h) = seq.frames[k].intensity.dims();
    accumulate_events(&seq.events[k], seq.window(k), w, h).unwrap()
}

/// A camera `range` metres from the +X wall of a tall room, looking at it
/// head-on from mid-height so that the wall fills the view.
fn facing_wall(range: f64, to: (f64, f64), speed: f64, fov: f64, size: usize) -> SceneConfig {
    let hx = 3.0;
    SceneConfig {
        room_half_extents: [hx, 6.0, 3.0],
        wall_texture: Texture::checker(0.5, 0.6, 0.4),
        floor_texture: Texture::checker(0.4, 0.5, 0.4),
        trajectory: Trajectory::line((hx - range, 0.0), to, 0.0, speed, 3.0),
        camera: CameraModel::with_fov(size, size, fov).unwrap(),
        ..Default::default()
    }
}

// ---------------------------------------------------------------------------

const KINK_MARGIN: f64 = 0.02;

#[test]
fn criterion_01_gradient_matches_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = FlowSolverConfig::default();
    let (w, h) = (8usize, 8usize);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..20 {
        let a = FloatMap::from_fn(w, h, Semantics::Intensity, |_, _| rng.gen_range(0.0..1.0));
        let b = FloatMap::from_fn(w, h, Semantics::Intensity, |_, _| rng.gen_range(0.0..1.0));
        // Keep sample positions away from bilinear cell edges and the raster
        // border, where the loss is not differentiable, and every penalty
        // argument away from zero, where the penalty's curvature makes a
        // 1e-4 central difference inaccurate.
        let clear = |x: f64| x.abs() > KINK_MARGIN;
        let mut flow = FlowField::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                loop {
                    let mut coord = |base: usize, len: usize| loop {
                        let f: f32 = rng.gen_range(-1.5..1.5);
                        let p = base as f64 + f as f64;
                        let frac = p - p.floor();
                        if p > 0.01 && p < (len - 1) as f64 - 0.01 && frac > 0.01 && frac < 0.99 {
                            break f;
                        }
                    };
                    let (u, v) = (coord(x, w), coord(y, h));
                    let s = bilinear(&b.values, w, h, x as f64 + u as f64, y as f64 + v as f64);
                    let mut ok = clear(a.values[i] as f64 - s.value);
                    if x > 0 {
                        ok &= clear(u as f64 - flow.u[i - 1] as f64)
                            && clear(v as f64 - flow.v[i - 1] as f64);
                    }
                    if y > 0 {
                        ok &= clear(u as f64 - flow.u[i - w] as f64)
                            && clear(v as f64 - flow.v[i - w] as f64);
                    }
                    if ok {
                        flow.u[i] = u;
                        flow.v[i] = v;
                        break;
                    }
                }
            }
        }
        let g = loss_gradient(&flow, &a, &b, None, &cfg).unwrap();
        for i in 0..w * h {
            for comp in 0..2 {
                let hstep = 1e-4f64;
                let eval = |delta: f64| {
                    let mut f = flow.clone();
                    let c = if comp == 0 { &mut f.u } else { &mut f.v };
                    c[i] = (c[i] as f64 + delta) as f32;
                    let actual = c[i] as f64;
                    (total_loss(&f, &a, &b, None, &cfg).unwrap(), actual)
                };
                let (lp, xp) = eval(hstep);
                let (lm, xm) = eval(-hstep);
                let numeric = (lp - lm) / (xp - xm);
                let analytic = if comp == 0 { g.u[i] } else { g.v[i] };
                let rel = (analytic - numeric).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
                worst = worst.max(rel);
                checked += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-3 && secs < 10.0;
    report(1, pass, format!("{checked} components, worst relative error {worst:.2e}, {secs:.2} s"));
    assert!(pass);
}

/// Lateral camera motion in front of a textured fronto-parallel wall: the
/// true flow is a uniform 2 px/frame shift.
fn translating_wall(texture: Texture) -> SceneConfig {
    let cam = CameraModel::with_fov(64, 64, 60.0).unwrap();
    let range = 2.0;
    let rate = 10.0;
    let speed = 2.0 * range / cam.fx * rate;
    SceneConfig {
        wall_texture: texture,
        floor_texture: texture,
        frame_rate: rate,
        duration: 0.5,
        ..facing_wall(range, (1.0, -3.0), speed, 60.0, 64)
    }
}

#[test]
fn criterion_02_flow_quality_on_translating_texture() {
    let start = Instant::now();
    let seq = simulate_sequence(&translating_wall(Texture::checker(0.5, 0.6, 0.8))).unwrap();
    let gt_mag = seq.frames[0].flow_fwd.max_magnitude();
    let cfg = FlowSolverConfig::default();
    let mut acc = FlowErrorAccumulator::default();
    for k in 0..seq.frames.len() - 1 {
        let em = event_map(&seq, k);
        let est = estimate_flow(Some(&em), &seq.frames[k].intensity, &seq.frames[k + 1].intensity, &cfg)
            .unwrap();
        acc.add(&est.flow, &seq.frames[k].flow_fwd, Some(&event_mask(&em))).unwrap();
    }
    let e = acc.finish().unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = e.aee < 0.5 && e.outlier_pct < 5.0 && secs < 60.0;
    report(
        2,
        pass,
        format!(
            "true flow {gt_mag:.3} px/frame, AEE {:.3} px, outliers {:.2}% over {} event pixels, {secs:.1} s",
            e.aee, e.outlier_pct, e.pixels
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_textureless_scene_has_no_usable_events() {
    let seq = simulate_sequence(&translating_wall(Texture::flat(0.5))).unwrap();
    let n = seq.frames[0].intensity.values.len();
    let mut worst_cover = 0.0f64;
    let mut undefined = true;
    for k in 0..seq.frames.len() - 1 {
        let em = event_map(&seq, k);
        let mask = event_mask(&em);
        worst_cover = worst_cover.max(mask.count() as f64 / n as f64);
        let zero = FlowField::zeros(64, 64);
        undefined &= flow_aee(&zero, &seq.frames[k].flow_fwd, Some(&mask)).is_err();
    }
    let depth_valid = seq
        .frames
        .iter()
        .all(|f| (0..n).all(|i| f.depth.is_valid_depth(i)));
    let pass = worst_cover < 0.01 && undefined && depth_valid;
    report(
        3,
        pass,
        format!(
            "event coverage {:.3}%, masked AEE undefined: {undefined}, depth fully valid: {depth_valid}",
            100.0 * worst_cover
        ),
    );
    assert!(pass);
}

fn tti_oracle_scene() -> SceneConfig {
    let mut scene = facing_wall(5.0, (0.5, 1.0), 0.5, 60.0, 128);
    scene.duration = 5.0;
    scene.obstacles.push(Obstacle {
        radius: 0.3,
        start: [2.2, -0.8, 3.1],
        velocity: [-0.1, 0.3, 0.0],
        class_id: CLASS_FLYING,
        texture: Texture::checker(0.5, 0.6, 0.15),
    });
    scene
}

#[test]
fn criterion_04_dynamic_tti_matches_ground_truth() {
    let scene = tti_oracle_scene();
    let seq = simulate_sequence(&scene).unwrap();
    assert_eq!(seq.frames.len(), 50);
    let dt = seq.dt();
    let (mut total, mut close, mut sphere_px) = (0usize, 0usize, 0usize);
    let mut worst = 0.0f64;
    for k in 1..seq.frames.len() - 1 {
        let f = &seq.frames[k];
        let est = estimate_tti_dynamic(&f.flow_fwd, &f.depth, &seq.frames[k + 1].depth, dt).unwrap();
        let gt = seq.tti_at_frame(k).unwrap();
        for i in 0..est.map.values.len() {
            if est.valid.bits[i] && gt.valid.bits[i] {
                let err = (est.map.values[i] as f64 - gt.map.values[i] as f64).abs();
                worst = worst.max(err);
                total += 1;
                close += usize::from(err <= 1e-3);
                sphere_px += usize::from(f.class_map.values[i] == CLASS_FLYING as f32);
            }
        }
    }
    let frac = close as f64 / total as f64;
    let pass = frac >= 0.99;
    report(
        4,
        pass,
        format!(
            "{:.3}% of {total} jointly valid pixels within 1e-3 s^-1 ({sphere_px} on the sphere), worst {worst:.2e}",
            100.0 * frac
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_wall_approach_ttc() {
    // Starts 2.1 m out so that frame 1 sits at exactly 2 m.
    let mut scene = facing_wall(2.1, (2.0, 0.0), 1.0, 60.0, 64);
    scene.frame_rate = 10.0;
    scene.duration = 0.5;
    let seq = simulate_sequence(&scene).unwrap();
    let k = 1;
    let f = &seq.frames[k];
    let gt = seq.tti_at_frame(k).unwrap();
    let (w, h) = f.depth.dims();
    let centre = gt.map.get(w / 2, h / 2) as f64;
    let gt_ok = (f.depth.get(w / 2, h / 2) as f64 - 2.0).abs() < 1e-5 && (centre - 0.5).abs() <= 0.02 * 0.5;

    let stat = estimate_tti_static(&f.flow_fwd, &f.depth, seq.dt()).unwrap();
    let mask = event_mask(&event_map(&seq, k));
    let (mut n, mut within, mut worst) = (0usize, 0usize, 0.0f64);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            if mask.bits[i] && stat.valid.bits[i] && gt.valid.bits[i] {
                let rel = (stat.map.values[i] as f64 - gt.map.values[i] as f64).abs() / gt.map.values[i] as f64;
                worst = worst.max(rel);
                n += 1;
                within += usize::from(rel <= 0.10);
            }
        }
    }
    // Same check with flow estimated from the images and events.
    let est = estimate_flow(
        Some(&event_map(&seq, k)),
        &f.intensity,
        &seq.frames[k + 1].intensity,
        &FlowSolverConfig::default(),
    )
    .unwrap();
    let stat_est = estimate_tti_static(&est.flow, &f.depth, seq.dt()).unwrap();
    let mut vals: Vec<f64> = (0..w * h)
        .filter(|&i| mask.bits[i] && i % w > 0 && i % w < w - 1 && i / w > 0 && i / w < h - 1)
        .map(|i| stat_est.map.values[i] as f64)
        .collect();
    vals.sort_by(f64::total_cmp);
    let median = vals.get(vals.len() / 2).copied().unwrap_or(f64::NAN);

    let pass = gt_ok && n > 0 && within == n;
    report(
        5,
        pass,
        format!(
            "centre tau {centre:.4} s^-1; static estimator within 10% on {within}/{n} interior event pixels \
             (worst {:.1}%); with estimated flow median {median:.3} s^-1",
            100.0 * worst
        ),
    );
    assert!(pass);
}

/// A sphere flying at the slowly advancing camera, aimed to pass `miss` metres
/// to the side; the sequence ends before the closest approach.
fn approach_scene(seed: u64, speed: f64, miss: [f64; 2], heading_deg: f64) -> SceneConfig {
    let cam_speed = 0.3;
    let start = (-3.0, 0.0);
    let height = 1.0;
    let t_meet = 2.0;
    let meet = [start.0 + cam_speed * t_meet, start.1 + miss[0], height + miss[1]];
    let hd = heading_deg.to_radians();
    let dir = [-hd.cos(), hd.sin(), 0.0];
    let velocity = [dir[0] * speed, dir[1] * speed, dir[2] * speed];
    SceneConfig {
        room_half_extents: [5.0, 4.0, 1.5],
        wall_texture: Texture::checker(0.5, 0.6, 0.5),
        floor_texture: Texture::checker(0.4, 0.5, 0.4),
        obstacles: vec![Obstacle {
            radius: 0.3,
            start: [
                meet[0] - velocity[0] * t_meet,
                meet[1] - velocity[1] * t_meet,
                meet[2] - velocity[2] * t_meet,
            ],
            velocity,
            class_id: CLASS_FLYING,
            texture: Texture::checker(0.5, 0.7, 0.15),
        }],
        trajectory: Trajectory::line(start, (4.0, 0.0), 0.0, cam_speed, height),
        frame_rate: 20.0,
        duration: 0.85 * t_meet,
        camera: CameraModel::with_fov(96, 96, 70.0).unwrap(),
        rng_seed: seed,
        ..Default::default()
    }
}

fn approach_scenes() -> Vec<SceneConfig> {
    vec![
        approach_scene(1, 2.5, [0.6, 0.0], 10.0),
        approach_scene(2, 3.0, [-0.7, 0.2], -15.0),
        approach_scene(3, 2.0, [0.5, -0.2], 20.0),
    ]
}

struct FrameResult {
    est_flow: FlowField,
    tti_pred: evreflex::tti::TtiMap,
}

fn run_dynamic(seq: &Sequence, k: usize, cfg: &FlowSolverConfig) -> FrameResult {
    let f = &seq.frames[k];
    let em = event_map(seq, k);
    let est = estimate_flow(Some(&em), &f.intensity, &seq.frames[k + 1].intensity, cfg).unwrap();
    let tti_pred = estimate_tti_dynamic(&est.flow, &f.depth, &seq.frames[k + 1].depth, seq.dt()).unwrap();
    FrameResult {
        est_flow: est.flow,
        tti_pred,
    }
}

#[test]
fn criterion_06_danger_segmentation_beats_depth_baseline() {
    let cfg = FlowSolverConfig::default();
    let mut ours = Prf1Accumulator::with_classes(&[0, 1, 2]);
    let mut base = Prf1Accumulator::with_classes(&[0, 1, 2]);
    let mut first_far = Vec::new();
    for scene in approach_scenes() {
        let seq = simulate_sequence(&scene).unwrap();
        let mut first_detect: Option<f64> = None;
        for k in 1..seq.frames.len() - 1 {
            let f = &seq.frames[k];
            let gt_mask = threshold_collision(seq.tti_at_frame(k).unwrap(), 1.0).unwrap();
            let r = run_dynamic(&seq, k, &cfg);
            let pred = threshold_collision(&r.tti_pred, 1.0).unwrap();
            ours.add(&pred, &gt_mask, &f.class_map).unwrap();
            base.add(&depth_baseline(&f.depth, 0.5).unwrap(), &gt_mask, &f.class_map).unwrap();
            if first_detect.is_none() {
                let on_sphere = (0..gt_mask.bits.len())
                    .filter(|&i| gt_mask.bits[i] && f.class_map.values[i] == CLASS_FLYING as f32)
                    .map(|i| f.depth.values[i] as f64)
                    .fold(f64::INFINITY, f64::min);
                if on_sphere.is_finite() {
                    first_detect = Some(on_sphere);
                }
            }
        }
        first_far.push(first_detect.unwrap_or(f64::NAN));
    }
    let o = ours.finish().per_class[&CLASS_FLYING];
    let b = base.finish().per_class[&CLASS_FLYING];
    let far = first_far.iter().all(|d| *d > 0.5);
    let pass = o.f1 >= 0.85 && b.recall < o.recall && far;
    report(
        6,
        pass,
        format!(
            "flying P/R/F1 {:.3}/{:.3}/{:.3} vs depth baseline recall {:.3}; first ground-truth danger at {:?} m",
            o.precision, o.recall, o.f1, b.recall, first_far
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_evasion_vector_angle_error() {
    let cfg = FlowSolverConfig::default();
    let mut with_gt = Vec::new();
    let mut with_est = Vec::new();
    for scene in approach_scenes() {
        let seq = simulate_sequence(&scene).unwrap();
        let units = MotionUnits::Metric(scene.camera);
        for k in 1..seq.frames.len() - 1 {
            let f = &seq.frames[k];
            let gt_tti = seq.tti_at_frame(k).unwrap();
            let gt_mask = threshold_collision(gt_tti, 1.0).unwrap();
            let truth = obstacle_motion_vector(&f.flow_fwd, &f.depth, gt_tti, &gt_mask, units).unwrap();
            if truth.pixel_count == 0 {
                continue;
            }
            let tti_gtflow =
                estimate_tti_dynamic(&f.flow_fwd, &f.depth, &seq.frames[k + 1].depth, seq.dt()).unwrap();
            let m = threshold_collision(&tti_gtflow, 1.0).unwrap();
            let a = obstacle_motion_vector(&f.flow_fwd, &f.depth, &tti_gtflow, &m, units).unwrap();
            if a.pixel_count > 0 {
                with_gt.push((a.vector, truth.vector));
            }
            let r = run_dynamic(&seq, k, &cfg);
            let m = threshold_collision(&r.tti_pred, 1.0).unwrap();
            let b = obstacle_motion_vector(&r.est_flow, &f.depth, &r.tti_pred, &m, units).unwrap();
            if b.pixel_count > 0 {
                with_est.push((b.vector, truth.vector));
            }
        }
    }
    let g = aae_report(&with_gt).unwrap();
    let e = aae_report(&with_est).unwrap();
    let pass = g.aae < 5.0 && e.aae < 15.0 && g.aae_top10.is_some() && e.aae_top10.is_some();
    report(
        7,
        pass,
        format!(
            "AAE ground-truth flow {:.2} deg (top-10% {:.2}) over {} frames; estimated flow {:.2} deg (top-10% {:.2}) over {} frames",
            g.aae,
            g.aae_top10.unwrap_or(f64::NAN),
            g.samples,
            e.aae,
            e.aae_top10.unwrap_or(f64::NAN),
            e.samples
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_tangential_and_receding_give_zero_danger() {
    // Lateral pass at constant range in front of a stationary camera.
    let scene = SceneConfig {
        trajectory: Trajectory::stationary(-2.5, 0.0, 0.0, 1.0),
        obstacles: vec![Obstacle {
            radius: 0.5,
            start: [-1.0, -0.15, 1.0],
            velocity: [0.0, 0.3, 0.0],
            class_id: CLASS_FLYING,
            texture: Texture::checker(0.5, 0.6, 0.2),
        }],
        frame_rate: 20.0,
        camera: CameraModel::with_fov(64, 64, 60.0).unwrap(),
        ..Default::default()
    };
    let seq = simulate_sequence(&scene).unwrap();
    let mut worst_mean = 0.0f64;
    for k in 1..seq.frames.len() {
        let on = Mask {
            width: 64,
            height: 64,
            bits: seq.frames[k].class_map.values.iter().map(|c| *c == 2.0).collect(),
        };
        if let Some(m) = seq.tti_at_frame(k).unwrap().masked_mean(&on) {
            worst_mean = worst_mean.max(m);
        }
    }

    // Camera backing away from the wall.
    let receding = SceneConfig {
        trajectory: Trajectory::line((1.5, 0.0), (-1.5, 0.0), 0.0, 0.5, 0.5),
        ..Default::default()
    };
    let rseq = simulate_sequence(&receding).unwrap();
    let max_receding = rseq
        .tti_gt
        .iter()
        .flat_map(|t| t.map.values.iter().zip(&t.valid.bits))
        .filter(|(_, ok)| **ok)
        .map(|(v, _)| *v)
        .fold(0.0f32, f32::max);
    let pass = worst_mean < 1e-2 && max_receding == 0.0;
    report(
        8,
        pass,
        format!("tangential mean tau on obstacle <= {worst_mean:.2e} s^-1; receding max tau {max_receding}"),
    );
    assert!(pass);
}

fn random_events(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Vec<Event> {
    let n = rng.gen_range(0..200);
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            t += rng.gen_range(0.0..1e-3);
            let p = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            Event::new(t, rng.gen_range(0..w) as u16, rng.gen_range(0..h) as u16, p)
        })
        .collect()
}

#[test]
fn criterion_09_serialization_round_trips_and_rejects_malformed() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut ok = 0usize;
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(1..40u32), rng.gen_range(1..40u32));
        let evs = random_events(&mut rng, w, h);
        let bytes = encode_events(&evs, w, h).unwrap();
        let back = decode_events(&bytes).unwrap();
        assert_eq!(back.events, evs);
        assert_eq!(encode_events(&back.events, back.width, back.height).unwrap(), bytes);

        let (mw, mh) = (rng.gen_range(1..24usize), rng.gen_range(1..24usize));
        let map = FloatMap {
            width: mw,
            height: mh,
            semantics: Semantics::from_code(rng.gen_range(0..6)).unwrap(),
            values: (0..mw * mh).map(|_| f32::from_bits(rng.gen())).collect(),
        };
        let mb = encode_map(&map);
        assert_eq!(encode_map(&decode_map(&mb).unwrap()), mb);

        let flow = FlowField {
            width: mw,
            height: mh,
            u: (0..mw * mh).map(|_| f32::from_bits(rng.gen())).collect(),
            v: (0..mw * mh).map(|_| f32::from_bits(rng.gen())).collect(),
        };
        let fb = encode_flow(&flow);
        assert_eq!(encode_flow(&decode_flow(&fb).unwrap()), fb);
        ok += 1;
    }

    // Malformed corpus: every truncation and every magic corruption.
    let evs = encode_events(&random_events(&mut rng, 16, 16), 16, 16).unwrap();
    let map = encode_map(&FloatMap::filled(5, 4, Semantics::DepthM, 1.0));
    let flow = encode_flow(&FlowField::constant(5, 4, 1.0, -1.0));
    let mut rejected = 0usize;
    let mut cases = 0usize;
    let mut check = |r: bool| {
        cases += 1;
        rejected += usize::from(r);
    };
    for cut in 0..evs.len() {
        check(matches!(
            decode_events(&evs[..cut]),
            Err(FormatError::Truncated { .. }) | Err(FormatError::BadMagic { .. })
        ));
    }
    for cut in 0..map.len() {
        check(matches!(
            decode_map(&map[..cut]),
            Err(FormatError::Truncated { .. }) | Err(FormatError::BadMagic { .. })
        ));
    }
    for cut in 0..flow.len() {
        check(matches!(
            decode_flow(&flow[..cut]),
            Err(FormatError::Truncated { .. }) | Err(FormatError::BadMagic { .. })
        ));
    }
    for pos in 0..4 {
        for (bytes, is_events) in [(&evs, true), (&map, false), (&flow, false)] {
            let mut bad = bytes.clone();
            bad[pos] ^= 0x20;
            let r = if is_events {
                matches!(decode_events(&bad), Err(FormatError::BadMagic { .. }))
            } else {
                matches!(decode_map(&bad), Err(FormatError::BadMagic { .. }))
                    || matches!(decode_flow(&bad), Err(FormatError::BadMagic { .. }))
            };
            check(r);
        }
    }
    let mut v2 = evs.clone();
    v2[4] = 2;
    check(decode_events(&v2) == Err(FormatError::VersionMismatch(2)));
    let mut extra = map.clone();
    extra.extend_from_slice(&[0, 0, 0, 0]);
    check(matches!(decode_map(&extra), Err(FormatError::SizeMismatch { .. })));

    let pass = ok == 1000 && rejected == cases;
    report(9, pass, format!("{ok} round trips per format; {rejected}/{cases} malformed inputs rejected"));
    assert!(pass);
}

fn run_cli(bin: &str, threads: &str, args: &[&str]) {
    let status = Command::new(bin)
        .args(args)
        .env("EVREFLEX_THREADS", threads)
        .status()
        .expect("spawn evreflex");
    assert!(status.success(), "evreflex {args:?} failed");
}

fn cli_run(dir: &Path, threads: &str) -> (String, String) {
    let bin = env!("CARGO_BIN_EXE_evreflex");
    let cfg = dir.join("scene.cfg");
    std::fs::write(
        &cfg,
        "[scene]\nrandom = true\nduration = 0.6\nframe_rate = 10\n[camera]\nwidth = 48\nheight = 48\n",
    )
    .unwrap();
    let p = |s: &str| dir.join(s).display().to_string();
    run_cli(bin, threads, &["simulate", "--config", &p("scene.cfg"), "--out", &p("seq"), "--seed", "17"]);
    run_cli(bin, threads, &["flow", "--in", &p("seq"), "--out", &p("flow")]);
    run_cli(bin, threads, &["tti", "--in", &p("seq"), "--out", &p("tti"), "--variant", "dynamic", "--flow", &p("flow")]);
    run_cli(bin, threads, &["evade", "--in", &p("seq"), "--out", &p("evade"), "--tti", &p("tti"), "--flow", &p("flow")]);
    run_cli(
        bin,
        threads,
        &["eval", "--in", &p("seq"), "--out", &p("eval"), "--flow", &p("flow"), "--tti", &p("tti"), "--events-only"],
    );
    let report = std::fs::read_to_string(dir.join("eval/report.tsv")).unwrap();
    let manifest = evreflex::pipeline::RunManifest::read(&dir.join("seq/manifest.json")).unwrap();
    let evade = std::fs::read_to_string(dir.join("evade/evade.tsv")).unwrap();
    (report + &evade, serde_json::to_string(&manifest.outputs).unwrap())
}

#[test]
fn criterion_10_determinism_across_runs_and_threads() {
    let runs: Vec<(String, String)> = [("1", 0), ("4", 1), ("1", 2), ("4", 3)]
        .iter()
        .map(|(threads, _)| {
            let dir = tempfile::tempdir().unwrap();
            cli_run(dir.path(), threads)
        })
        .collect();
    let same = runs.windows(2).all(|p| p[0] == p[1]);
    let lines = runs[0].0.lines().count();
    let pass = same && lines > 10;
    report(10, pass, format!("4 runs (threads 1,4,1,4): reports and output hashes identical: {same}; {lines} report lines"));
    assert!(pass);
}
