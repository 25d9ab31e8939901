//! Coarse-to-fine gradient descent on the flow objective.

use super::loss::{loss_gradient, total_loss};
use super::warp::bilinear;
use super::fusion::fuse_candidates;
use super::irls::reweighted_direction;
use super::{Descent, FlowSolverConfig};
use crate::error::{ensure_same, Error, Result};
use crate::types::{event_mask, EventMap, FloatMap, FlowField};

/// Loss history of one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTrace {
    pub width: usize,
    pub height: usize,
    /// Loss after each accepted step, starting with the initial loss.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowEstimate {
    pub flow: FlowField,
    /// Final objective value at the finest level.
    pub loss: f64,
    /// Coarsest level first; an extra finest-level entry follows when the
    /// large-displacement candidates lowered the loss.
    pub levels: Vec<LevelTrace>,
}

/// 2x2 box downsampling; odd trailing rows/columns are averaged with the edge.
pub(crate) fn downsample(values: &[f32], w: usize, h: usize) -> (Vec<f32>, usize, usize) {
    let (nw, nh) = (w.div_ceil(2), h.div_ceil(2));
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        for x in 0..nw {
            let (x0, y0) = (2 * x, 2 * y);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let s = values[y0 * w + x0] as f64
                + values[y0 * w + x1] as f64
                + values[y1 * w + x0] as f64
                + values[y1 * w + x1] as f64;
            out.push((s / 4.0) as f32);
        }
    }
    (out, nw, nh)
}

/// Resamples a coarse flow onto a `w` x `h` grid, scaling displacements by the size ratio.
pub(crate) fn upsample_flow(coarse: &FlowField, w: usize, h: usize) -> FlowField {
    let sx = w as f64 / coarse.width as f64;
    let sy = h as f64 / coarse.height as f64;
    FlowField::from_fn(w, h, |x, y| {
        let cx = (x as f64 + 0.5) / sx - 0.5;
        let cy = (y as f64 + 0.5) / sy - 0.5;
        let u = bilinear(&coarse.u, coarse.width, coarse.height, cx, cy).value * sx;
        let v = bilinear(&coarse.v, coarse.width, coarse.height, cx, cy).value * sy;
        (u as f32, v as f32)
    })
}

struct Level {
    i_t: FloatMap,
    i_t1: FloatMap,
    weights: Option<Vec<f32>>,
}

fn build_pyramid(
    i_t: &FloatMap,
    i_t1: &FloatMap,
    weights: Option<Vec<f32>>,
    levels: usize,
) -> Vec<Level> {
    let mut pyr = vec![Level {
        i_t: i_t.clone(),
        i_t1: i_t1.clone(),
        weights,
    }];
    while pyr.len() < levels {
        let last = pyr.last().expect("non-empty pyramid");
        let (w, h) = last.i_t.dims();
        if w < 8 || h < 8 {
            break;
        }
        let (a, nw, nh) = downsample(&last.i_t.values, w, h);
        let (b, _, _) = downsample(&last.i_t1.values, w, h);
        let wts = last.weights.as_ref().map(|m| downsample(m, w, h).0);
        pyr.push(Level {
            i_t: FloatMap {
                width: nw,
                height: nh,
                semantics: i_t.semantics,
                values: a,
            },
            i_t1: FloatMap {
                width: nw,
                height: nh,
                semantics: i_t1.semantics,
                values: b,
            },
            weights: wts,
        });
    }
    pyr.reverse();
    pyr
}

fn descend(
    level: &Level,
    mut flow: FlowField,
    cfg: &FlowSolverConfig,
    level_index: usize,
) -> Result<(FlowField, LevelTrace)> {
    let weights = level.weights.as_deref();
    let mut loss = total_loss(&flow, &level.i_t, &level.i_t1, weights, cfg)?;
    if !loss.is_finite() {
        return Err(Error::SolverDivergence {
            level: level_index,
            iteration: 0,
        });
    }
    let mut trace = LevelTrace {
        width: flow.width,
        height: flow.height,
        losses: vec![loss],
    };
    let mut step = cfg.step_size;
    for iteration in 1..=cfg.iters_per_level {
        let grad = loss_gradient(&flow, &level.i_t, &level.i_t1, weights, cfg)?;
        let (du, dv) = match cfg.descent {
            Descent::Gradient => (
                grad.u.iter().map(|g| -g).collect(),
                grad.v.iter().map(|g| -g).collect(),
            ),
            Descent::Reweighted => {
                // The model step has its own scale; always try it in full first.
                step = cfg.step_size;
                reweighted_direction(&flow, &level.i_t, &level.i_t1, weights, &grad, cfg)
            }
        };
        let mut accepted = None;
        while step >= cfg.min_step {
            let candidate = FlowField {
                u: flow.u.iter().zip(&du).map(|(f, d)| (*f as f64 + step * d) as f32).collect(),
                v: flow.v.iter().zip(&dv).map(|(f, d)| (*f as f64 + step * d) as f32).collect(),
                ..flow.clone()
            };
            let cand_loss = total_loss(&candidate, &level.i_t, &level.i_t1, weights, cfg)?;
            if !cand_loss.is_finite() {
                return Err(Error::SolverDivergence {
                    level: level_index,
                    iteration,
                });
            }
            if cand_loss <= loss {
                accepted = Some((candidate, cand_loss));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_loss)) = accepted else {
            break;
        };
        let rel = (loss - next_loss) / loss.abs().max(f64::MIN_POSITIVE);
        flow = next;
        loss = next_loss;
        trace.losses.push(loss);
        if rel < cfg.convergence_tol {
            break;
        }
        step = (step * cfg.step_growth).min(cfg.step_size);
    }
    Ok((flow, trace))
}

/// Estimates the flow carrying `i_t` onto `i_t1` by minimizing the combined
/// objective directly over the flow field, coarse to fine.
pub fn estimate_flow(
    events: Option<&EventMap>,
    i_t: &FloatMap,
    i_t1: &FloatMap,
    cfg: &FlowSolverConfig,
) -> Result<FlowEstimate> {
    estimate_flow_from(events, i_t, i_t1, cfg, None)
}

/// [`estimate_flow`] with an optional finest-level initial flow.
pub fn estimate_flow_from(
    events: Option<&EventMap>,
    i_t: &FloatMap,
    i_t1: &FloatMap,
    cfg: &FlowSolverConfig,
    init: Option<&FlowField>,
) -> Result<FlowEstimate> {
    cfg.validate()?;
    ensure_same(i_t.dims(), i_t1.dims())?;
    if let Some(em) = events {
        ensure_same(i_t.dims(), em.dims())?;
    }
    let mask = events.map(event_mask);
    let weights = super::loss::data_weights(cfg, mask.as_ref());
    let pyramid = build_pyramid(i_t, i_t1, weights, cfg.pyramid_levels);

    let (cw, ch) = pyramid[0].i_t.dims();
    let mut flow = match init {
        Some(f) => {
            ensure_same(i_t.dims(), f.dims())?;
            upsample_flow(f, cw, ch)
        }
        None => FlowField::zeros(cw, ch),
    };
    let mut levels = Vec::with_capacity(pyramid.len());
    let mut loss = 0.0;
    for (index, level) in pyramid.iter().enumerate() {
        let (w, h) = level.i_t.dims();
        if flow.dims() != (w, h) {
            flow = upsample_flow(&flow, w, h);
        }
        let (next, trace) = descend(level, flow, cfg, index)?;
        loss = *trace.losses.last().expect("initial loss recorded");
        flow = next;
        levels.push(trace);
    }
    if cfg.match_radius > 0 {
        let finest = pyramid.last().expect("non-empty pyramid");
        let weights = finest.weights.as_deref();
        if let Some(init) = fuse_candidates(&flow, &finest.i_t, &finest.i_t1, weights, cfg.match_radius) {
            let (candidate, trace) = descend(finest, init, cfg, pyramid.len() - 1)?;
            let candidate_loss = *trace.losses.last().expect("initial loss recorded");
            if candidate_loss < loss {
                flow = candidate;
                loss = candidate_loss;
                levels.push(trace);
            }
        }
    }
    Ok(FlowEstimate { flow, loss, levels })
}
