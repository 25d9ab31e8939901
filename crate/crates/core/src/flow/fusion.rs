//! Large-displacement candidates. Small fast objects vanish at coarse pyramid
//! levels, so their motion is recovered by integer patch matching: the most
//! frequent best displacements become global candidates, and every pixel
//! keeps whichever candidate (or its current flow) explains its patch best.

use std::collections::HashMap;

use rayon::prelude::*;

use super::warp::bilinear;
use crate::types::{FloatMap, FlowField};

const PATCH: isize = 2;
const MAX_CANDIDATES: usize = 6;
const MIN_VOTES: usize = 8;

/// Sum of absolute differences over the patch around `(x, y)` for a constant
/// displacement; samples leaving the raster cost 1.
fn patch_cost(i_t: &FloatMap, i_t1: &FloatMap, x: usize, y: usize, du: f64, dv: f64) -> f64 {
    let (w, h) = i_t.dims();
    let mut cost = 0.0;
    for oy in -PATCH..=PATCH {
        for ox in -PATCH..=PATCH {
            let (px, py) = (x as isize + ox, y as isize + oy);
            if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                continue;
            }
            let s = bilinear(&i_t1.values, w, h, px as f64 + du, py as f64 + dv);
            cost += if s.valid {
                (i_t.values[py as usize * w + px as usize] as f64 - s.value).abs()
            } else {
                1.0
            };
        }
    }
    cost
}

/// Best integer displacement within `radius` for every pixel with nonzero weight.
fn best_matches(
    i_t: &FloatMap,
    i_t1: &FloatMap,
    weights: Option<&[f32]>,
    radius: isize,
) -> Vec<Option<(isize, isize)>> {
    let (w, h) = i_t.dims();
    (0..w * h)
        .into_par_iter()
        .map(|i| {
            if weights.is_some_and(|m| m[i] == 0.0) {
                return None;
            }
            let (x, y) = (i % w, i / w);
            let mut best = (f64::INFINITY, (0, 0));
            for dv in -radius..=radius {
                for du in -radius..=radius {
                    let c = patch_cost(i_t, i_t1, x, y, du as f64, dv as f64);
                    // Ties go to the shorter displacement.
                    let shorter = du * du + dv * dv < best.1 .0 * best.1 .0 + best.1 .1 * best.1 .1;
                    if c < best.0 || (c == best.0 && shorter) {
                        best = (c, (du, dv));
                    }
                }
            }
            Some(best.1)
        })
        .collect()
}

/// Most voted displacements, most votes first, ties by displacement order.
fn dominant(matches: &[Option<(isize, isize)>]) -> Vec<(isize, isize)> {
    let mut votes: HashMap<(isize, isize), usize> = HashMap::new();
    for m in matches.iter().flatten() {
        *votes.entry(*m).or_default() += 1;
    }
    let mut ranked: Vec<_> = votes.into_iter().filter(|(_, n)| *n >= MIN_VOTES).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().take(MAX_CANDIDATES).map(|(d, _)| d).collect()
}

/// Per-pixel choice between `flow` and the dominant matched displacements.
/// Returns `None` when no candidate beats the current flow anywhere.
pub(crate) fn fuse_candidates(
    flow: &FlowField,
    i_t: &FloatMap,
    i_t1: &FloatMap,
    weights: Option<&[f32]>,
    radius: usize,
) -> Option<FlowField> {
    let matches = best_matches(i_t, i_t1, weights, radius as isize);
    let candidates = dominant(&matches);
    let (w, h) = flow.dims();
    let mut out = flow.clone();
    let mut changed = false;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let (u, v) = (flow.u[i] as f64, flow.v[i] as f64);
            let mut best = (patch_cost(i_t, i_t1, x, y, u, v), None);
            for &(du, dv) in &candidates {
                let c = patch_cost(i_t, i_t1, x, y, du as f64, dv as f64);
                if c < best.0 {
                    best = (c, Some((du, dv)));
                }
            }
            if let Some((du, dv)) = best.1 {
                out.u[i] = du as f32;
                out.v[i] = dv as f32;
                changed = true;
            }
        }
    }
    changed.then_some(out)
}
