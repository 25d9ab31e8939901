//! Inverse time-to-impact maps: depth-based ground truth, the flow-divergence
//! (static) and depth-pair (dynamic) estimators, thresholding and MSE.

use crate::error::{ensure_same, Error, Result};
use crate::flow::bilinear;
use crate::types::{FloatMap, FlowField, Mask, Semantics};

/// Non-negative inverse time-to-impact in s^-1 with its validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TtiMap {
    pub map: FloatMap,
    /// Frame interval used to convert per-frame closure into s^-1.
    pub dt: f64,
    pub valid: Mask,
}

impl TtiMap {
    pub fn dims(&self) -> (usize, usize) {
        self.map.dims()
    }

    pub fn from_values(map: FloatMap, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let valid = Mask::new(map.width, map.height, true);
        Ok(TtiMap {
            map: FloatMap {
                semantics: Semantics::InvTtiS,
                ..map
            },
            dt,
            valid,
        })
    }

    /// Mean value over valid pixels that are also set in `mask`.
    pub fn masked_mean(&self, mask: &Mask) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..self.map.values.len() {
            if mask.bits[i] && self.valid.bits[i] {
                sum += self.map.values[i] as f64;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("frame interval must be positive, got {dt}")))
    }
}

/// Range closure of a pixel: `(d_before - d_after) / (d_norm * dt)`, clamped at 0.
#[inline]
fn closure(d_before: f64, d_after: f64, d_norm: f64, dt: f64) -> f32 {
    ((d_before - d_after) / (d_norm * dt)).max(0.0) as f32
}

/// Ground-truth inverse TTI of the current frame: the previous depth, sampled
/// where each current pixel was one frame ago, against the current depth.
///
/// `flow_to_prev` maps current pixels to their previous-frame positions.
pub fn ground_truth_inverse_tti(
    d_prev: &FloatMap,
    d_curr: &FloatMap,
    flow_to_prev: &FlowField,
    dt: f64,
) -> Result<TtiMap> {
    check_dt(dt)?;
    ensure_same(d_curr.dims(), d_prev.dims())?;
    ensure_same(d_curr.dims(), flow_to_prev.dims())?;
    warped_closure(d_curr, d_prev, flow_to_prev, dt, |sampled, here| (sampled, here, here))
}

/// Dynamic estimate from the current depth and the next depth sampled along
/// the forward flow: `(d_curr - d_next(i + F)) / (d_curr * dt)`.
pub fn estimate_tti_dynamic(
    flow: &FlowField,
    d_curr: &FloatMap,
    d_next: &FloatMap,
    dt: f64,
) -> Result<TtiMap> {
    check_dt(dt)?;
    ensure_same(d_curr.dims(), d_next.dims())?;
    ensure_same(d_curr.dims(), flow.dims())?;
    warped_closure(d_curr, d_next, flow, dt, |sampled, here| (here, sampled, here))
}

/// Shared loop: `order(sampled, here)` returns `(before, after, norm)`.
fn warped_closure(
    here: &FloatMap,
    other: &FloatMap,
    flow: &FlowField,
    dt: f64,
    order: impl Fn(f64, f64) -> (f64, f64, f64),
) -> Result<TtiMap> {
    let (w, h) = here.dims();
    let mut out = FloatMap::zeros(w, h, Semantics::InvTtiS);
    let mut valid = Mask::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !here.is_valid_depth(i) {
                continue;
            }
            let sx = x as f64 + flow.u[i] as f64;
            let sy = y as f64 + flow.v[i] as f64;
            let s = bilinear(&other.values, w, h, sx, sy);
            if !s.valid || !corners_valid(other, sx, sy) {
                continue;
            }
            let (before, after, norm) = order(s.value, here.values[i] as f64);
            if before.max(after) > MAX_FRAME_DEPTH_RATIO * before.min(after) {
                continue;
            }
            out.values[i] = closure(before, after, norm, dt);
            valid.bits[i] = true;
        }
    }
    Ok(TtiMap { map: out, dt, valid })
}

/// Largest depth ratio inside one bilinear stencil that is still treated as a
/// single surface; wider spreads are occlusion boundaries.
pub const MAX_STENCIL_DEPTH_RATIO: f64 = 1.25;

/// Largest depth ratio a tracked surface point may show between consecutive
/// frames; larger jumps mean the warp landed on a different, occluding surface.
pub const MAX_FRAME_DEPTH_RATIO: f64 = 2.0;

/// True when every depth sample used by the bilinear stencil is valid and
/// the stencil does not straddle a depth discontinuity.
fn corners_valid(depth: &FloatMap, sx: f64, sy: f64) -> bool {
    let (w, h) = depth.dims();
    let x0 = (sx.floor().max(0.0) as usize).min(w - 1);
    let y0 = (sy.floor().max(0.0) as usize).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for (x, y) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
        let i = y * w + x;
        if !depth.is_valid_depth(i) {
            return false;
        }
        let d = depth.values[i] as f64;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    hi <= lo * MAX_STENCIL_DEPTH_RATIO
}

/// Divergence of a flow field in px/frame per px; central differences inside,
/// one-sided at the borders.
pub fn divergence(flow: &FlowField) -> FloatMap {
    let (w, h) = flow.dims();
    let d = |vals: &[f32], i0: usize, i1: usize, span: f64| (vals[i1] as f64 - vals[i0] as f64) / span;
    FloatMap::from_fn(w, h, Semantics::InvTtiS, |x, y| {
        let i = y * w + x;
        let du = if w < 2 {
            0.0
        } else if x == 0 {
            d(&flow.u, i, i + 1, 1.0)
        } else if x == w - 1 {
            d(&flow.u, i - 1, i, 1.0)
        } else {
            d(&flow.u, i - 1, i + 1, 2.0)
        };
        let dv = if h < 2 {
            0.0
        } else if y == 0 {
            d(&flow.v, i, i + w, 1.0)
        } else if y == h - 1 {
            d(&flow.v, i - w, i, 1.0)
        } else {
            d(&flow.v, i - w, i + w, 2.0)
        };
        (du + dv) as f32
    })
}

/// Static estimate from flow alone: `max(0, div F / (2 dt))`. Pixels with
/// invalid current depth are marked invalid.
pub fn estimate_tti_static(flow: &FlowField, d_curr: &FloatMap, dt: f64) -> Result<TtiMap> {
    check_dt(dt)?;
    ensure_same(flow.dims(), d_curr.dims())?;
    let mut map = divergence(flow);
    let mut valid = Mask::new(flow.width, flow.height, true);
    for (i, v) in map.values.iter_mut().enumerate() {
        *v = ((*v as f64) / (2.0 * dt)).max(0.0) as f32;
        if !d_curr.is_valid_depth(i) {
            *v = 0.0;
            valid.bits[i] = false;
        }
    }
    Ok(TtiMap { map, dt, valid })
}

/// Mean squared error over jointly valid pixels.
pub fn tti_mse(pred: &TtiMap, gt: &TtiMap) -> Result<f64> {
    ensure_same(pred.dims(), gt.dims())?;
    if (pred.dt - gt.dt).abs() > 1e-12 * gt.dt.abs().max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "frame intervals differ: {} vs {}",
            pred.dt, gt.dt
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.map.values.len() {
        if pred.valid.bits[i] && gt.valid.bits[i] {
            let e = pred.map.values[i] as f64 - gt.map.values[i] as f64;
            sum += e * e;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::UndefinedMetric("no jointly valid pixels for TTI MSE"));
    }
    Ok(sum / n as f64)
}

/// Pixels predicted to collide within `horizon` seconds.
pub fn threshold_collision(tti: &TtiMap, horizon: f64) -> Result<Mask> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    let limit = 1.0 / horizon;
    Ok(Mask {
        width: tti.map.width,
        height: tti.map.height,
        bits: tti
            .map
            .values
            .iter()
            .zip(&tti.valid.bits)
            .map(|(&v, &ok)| ok && v as f64 >= limit)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn depth(w: usize, h: usize, v: f32) -> FloatMap {
        FloatMap::filled(w, h, Semantics::DepthM, v)
    }

    fn tti_from(values: Vec<f32>, w: usize, h: usize, dt: f64) -> TtiMap {
        TtiMap::from_values(FloatMap::from_vec(w, h, Semantics::InvTtiS, values).unwrap(), dt)
            .unwrap()
    }

    #[test]
    fn ground_truth_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = FloatMap::from_fn(8, 8, Semantics::DepthM, |_, _| rng.gen_range(0.5..4.0));
        let f = FlowField::from_fn(8, 8, |_, _| (rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4)));
        let t = ground_truth_inverse_tti(&d, &d, &FlowField::zeros(8, 8), 0.1).unwrap();
        assert!(t.map.values.iter().all(|v| *v == 0.0));
        // Within-bounds flow on a constant map also gives zero.
        let c = depth(8, 8, 2.0);
        let t = ground_truth_inverse_tti(&c, &c, &f, 0.1).unwrap();
        assert!(t.map.values.iter().all(|v| *v == 0.0));

        let t = ground_truth_inverse_tti(&depth(3, 3, 2.1), &depth(3, 3, 2.0), &FlowField::zeros(3, 3), 0.1)
            .unwrap();
        assert!((t.map.get(1, 1) - 0.5).abs() < 1e-5);
        let t = ground_truth_inverse_tti(&depth(3, 3, 2.0), &depth(3, 3, 2.2), &FlowField::zeros(3, 3), 0.1)
            .unwrap();
        assert!(t.map.values.iter().all(|v| *v == 0.0));
        assert_eq!(t.valid.count(), 9);
    }

    #[test]
    fn invalid_inputs() {
        let d = depth(3, 3, 1.0);
        let z = FlowField::zeros(3, 3);
        assert!(ground_truth_inverse_tti(&d, &d, &z, 0.0).is_err());
        assert!(estimate_tti_static(&z, &d, -1.0).is_err());
        assert!(estimate_tti_dynamic(&z, &d, &depth(3, 4, 1.0), 0.1).is_err());
        let mut holes = d.clone();
        holes.set(1, 1, 0.0);
        let t = ground_truth_inverse_tti(&d, &holes, &z, 0.1).unwrap();
        assert!(!t.valid.get(1, 1));
        let out = ground_truth_inverse_tti(&d, &d, &FlowField::constant(3, 3, 1.0, 0.0), 0.1).unwrap();
        assert!(!out.valid.get(2, 0) && out.valid.get(1, 0));
    }

    #[test]
    fn dynamic_cases() {
        let t = estimate_tti_dynamic(&FlowField::zeros(4, 4), &depth(4, 4, 2.0), &depth(4, 4, 2.0), 0.1)
            .unwrap();
        assert!(t.map.values.iter().all(|v| *v == 0.0));
        let t = estimate_tti_dynamic(&FlowField::zeros(4, 4), &depth(4, 4, 2.0), &depth(4, 4, 1.9), 0.1)
            .unwrap();
        assert!(t.map.values.iter().all(|v| (*v - 0.5).abs() < 1e-5));
    }

    #[test]
    fn occluding_surface_is_invalid() {
        // Background at 6 m covered by a surface at 1.5 m in the next frame.
        let t = estimate_tti_dynamic(&FlowField::zeros(4, 4), &depth(4, 4, 6.0), &depth(4, 4, 1.5), 0.1)
            .unwrap();
        assert_eq!(t.valid.count(), 0);
        let t = ground_truth_inverse_tti(&depth(4, 4, 6.0), &depth(4, 4, 1.5), &FlowField::zeros(4, 4), 0.1)
            .unwrap();
        assert_eq!(t.valid.count(), 0);
    }

    #[test]
    fn static_cases() {
        let d = depth(21, 21, 2.0);
        let t = estimate_tti_static(&FlowField::zeros(21, 21), &d, 0.1).unwrap();
        assert!(t.map.values.iter().all(|v| *v == 0.0));

        let radial = FlowField::from_fn(21, 21, |x, y| {
            (0.05 * (x as f32 - 10.0), 0.05 * (y as f32 - 10.0))
        });
        let t = estimate_tti_static(&radial, &d, 0.1).unwrap();
        for y in 1..20 {
            for x in 1..20 {
                assert!((t.map.get(x, y) - 0.5).abs() < 1e-5);
            }
        }

        let k = 0.03;
        let rot = FlowField::from_fn(21, 21, |x, y| {
            (-(y as f32 - 10.0) * k, (x as f32 - 10.0) * k)
        });
        let t = estimate_tti_static(&rot, &d, 0.1).unwrap();
        assert!(t.map.values.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn mse_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vals: Vec<f32> = (0..64).map(|_| rng.gen_range(0.0..3.0)).collect();
        let gt = tti_from(vals.clone(), 8, 8, 0.1);
        assert_eq!(tti_mse(&gt, &gt).unwrap(), 0.0);
        let plus = tti_from(vals.iter().map(|v| v + 0.1).collect(), 8, 8, 0.1);
        assert!((tti_mse(&plus, &gt).unwrap() - 0.01).abs() < 1e-6);

        let other: Vec<f32> = (0..64).map(|_| rng.gen_range(0.0..3.0)).collect();
        let mut pred = tti_from(other.clone(), 8, 8, 0.1);
        for i in (0..64).step_by(3) {
            pred.valid.bits[i] = false;
        }
        let mut sum = 0.0;
        let mut n = 0;
        for i in 0..64 {
            if i % 3 != 0 {
                sum += (other[i] as f64 - vals[i] as f64).powi(2);
                n += 1;
            }
        }
        assert!((tti_mse(&pred, &gt).unwrap() - sum / n as f64).abs() < 1e-9);

        pred.valid = Mask::new(8, 8, false);
        assert!(matches!(tti_mse(&pred, &gt), Err(Error::UndefinedMetric(_))));
        let other_dt = tti_from(vals, 8, 8, 0.2);
        assert!(tti_mse(&other_dt, &gt).is_err());
    }

    #[test]
    fn threshold_cases() {
        let z = tti_from(vec![0.0; 16], 4, 4, 0.1);
        assert_eq!(threshold_collision(&z, 1.0).unwrap().count(), 0);
        let mut v = vec![0.0; 16];
        v[5] = 1.2;
        let m = threshold_collision(&tti_from(v, 4, 4, 0.1), 1.0).unwrap();
        assert_eq!(m.count(), 1);
        assert!(m.bits[5]);
        assert!(threshold_collision(&z, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn threshold_is_monotone(vals in proptest::collection::vec(0.0f32..4.0, 36)) {
            let t = tti_from(vals, 6, 6, 0.05);
            let short = threshold_collision(&t, 0.5).unwrap();
            let long = threshold_collision(&t, 1.0).unwrap();
            prop_assert!(short.is_subset_of(&long));
        }

        #[test]
        fn halving_dt_doubles_values(d0 in 1.0f32..3.0, closing in 0.0f32..0.2, u in -0.3f32..0.3) {
            let prev = FloatMap::filled(5, 5, Semantics::DepthM, d0 + closing);
            let curr = FloatMap::filled(5, 5, Semantics::DepthM, d0);
            let f = FlowField::constant(5, 5, u, 0.0);
            let a = ground_truth_inverse_tti(&prev, &curr, &f, 0.1).unwrap();
            let b = ground_truth_inverse_tti(&prev, &curr, &f, 0.05).unwrap();
            let c = estimate_tti_dynamic(&f, &prev, &curr, 0.1).unwrap();
            let e = estimate_tti_dynamic(&f, &prev, &curr, 0.05).unwrap();
            for i in 0..25 {
                prop_assert!(a.map.values[i] >= 0.0);
                if a.valid.bits[i] {
                    prop_assert!((b.map.values[i] - 2.0 * a.map.values[i]).abs() <= 1e-5 * (1.0 + b.map.values[i]));
                    prop_assert!((e.map.values[i] - 2.0 * c.map.values[i]).abs() <= 1e-5 * (1.0 + e.map.values[i]));
                }
            }
            let radial = FlowField::from_fn(5, 5, |x, y| (0.02 * x as f32, 0.01 * y as f32));
            let s1 = estimate_tti_static(&radial, &curr, 0.1).unwrap();
            let s2 = estimate_tti_static(&radial, &curr, 0.05).unwrap();
            for i in 0..25 {
                prop_assert!((s2.map.values[i] - 2.0 * s1.map.values[i]).abs() <= 1e-5);
            }
        }
    }
}
