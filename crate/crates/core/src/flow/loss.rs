//! Charbonnier-penalized photometric and smoothness objectives and their
//! analytic gradient with respect to the flow field.

use super::warp::bilinear;
use super::{EventWeighting, FlowSolverConfig};
use crate::error::{ensure_same, Error, Result};
use crate::types::{FloatMap, FlowField};

/// Robust penalty `(x^2 + eps^2)^alpha`.
#[inline]
pub fn charbonnier(x: f64, eps: f64, alpha: f64) -> f64 {
    (x * x + eps * eps).powf(alpha)
}

/// Derivative of [`charbonnier`] with respect to `x`.
#[inline]
pub fn charbonnier_derivative(x: f64, eps: f64, alpha: f64) -> f64 {
    2.0 * alpha * x * (x * x + eps * eps).powf(alpha - 1.0)
}

/// Elementwise [`charbonnier`] over a raster.
pub fn charbonnier_map(map: &FloatMap, eps: f64, alpha: f64) -> FloatMap {
    FloatMap {
        values: map
            .values
            .iter()
            .map(|&x| charbonnier(x as f64, eps, alpha) as f32)
            .collect(),
        ..map.clone()
    }
}

/// Penalty parameters shared by both loss terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub eps: f64,
    pub alpha: f64,
}

impl Penalty {
    #[inline]
    pub fn rho(&self, x: f64) -> f64 {
        charbonnier(x, self.eps, self.alpha)
    }

    #[inline]
    pub fn drho(&self, x: f64) -> f64 {
        charbonnier_derivative(x, self.eps, self.alpha)
    }
}

impl From<&FlowSolverConfig> for Penalty {
    fn from(cfg: &FlowSolverConfig) -> Self {
        Penalty {
            eps: cfg.charbonnier_eps,
            alpha: cfg.charbonnier_alpha,
        }
    }
}

fn check_inputs(
    flow: &FlowField,
    i_t: &FloatMap,
    i_t1: &FloatMap,
    weights: Option<&[f32]>,
) -> Result<()> {
    ensure_same(flow.dims(), i_t.dims())?;
    ensure_same(flow.dims(), i_t1.dims())?;
    if let Some(w) = weights {
        if w.len() != flow.width * flow.height {
            return Err(Error::InvalidArgument(format!(
                "weight raster has {} entries, expected {}",
                w.len(),
                flow.width * flow.height
            )));
        }
    }
    Ok(())
}

/// Sum over pixels of `w(i) * rho(I_t(i) - I_t1(i + F(i)))`. Samples that
/// leave the raster contribute nothing; `weights = None` means weight 1.
pub fn photometric_loss(
    flow: &FlowField,
    i_t: &FloatMap,
    i_t1: &FloatMap,
    weights: Option<&[f32]>,
    penalty: Penalty,
) -> Result<f64> {
    check_inputs(flow, i_t, i_t1, weights)?;
    let (w, h) = flow.dims();
    let mut total = 0.0;
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            let i = y * w + x;
            let wt = weights.map_or(1.0, |m| m[i] as f64);
            if wt == 0.0 {
                continue;
            }
            let s = bilinear(
                &i_t1.values,
                w,
                h,
                x as f64 + flow.u[i] as f64,
                y as f64 + flow.v[i] as f64,
            );
            if s.valid {
                row += wt * penalty.rho(i_t.values[i] as f64 - s.value);
            }
        }
        total += row;
    }
    Ok(total)
}

/// Sum of `rho` over flow differences of every 4-neighbour pair, each
/// unordered pair counted once, for both components.
pub fn smoothness_loss(flow: &FlowField, penalty: Penalty) -> f64 {
    let (w, h) = flow.dims();
    let mut total = 0.0;
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                row += penalty.rho(flow.u[i] as f64 - flow.u[i + 1] as f64)
                    + penalty.rho(flow.v[i] as f64 - flow.v[i + 1] as f64);
            }
            if y + 1 < h {
                row += penalty.rho(flow.u[i] as f64 - flow.u[i + w] as f64)
                    + penalty.rho(flow.v[i] as f64 - flow.v[i + w] as f64);
            }
        }
        total += row;
    }
    total
}

/// Data weights for the photometric term under the configured weighting.
pub fn data_weights(cfg: &FlowSolverConfig, event_mask: Option<&crate::types::Mask>) -> Option<Vec<f32>> {
    match (cfg.event_weighting, event_mask) {
        (EventWeighting::EventGated, Some(mask)) => Some(
            mask.bits
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect(),
        ),
        _ => None,
    }
}

/// `l_p + alpha * l_s`.
pub fn total_loss(
    flow: &FlowField,
    i_t: &FloatMap,
    i_t1: &FloatMap,
    weights: Option<&[f32]>,
    cfg: &FlowSolverConfig,
) -> Result<f64> {
    let penalty = Penalty::from(cfg);
    let lp = photometric_loss(flow, i_t, i_t1, weights, penalty)?;
    Ok(lp + cfg.alpha * smoothness_loss(flow, penalty))
}

/// Gradient of [`total_loss`] with respect to every flow component, using
/// the exact derivative of the bilinear sampler.
pub fn loss_gradient(
    flow: &FlowField,
    i_t: &FloatMap,
    i_t1: &FloatMap,
    weights: Option<&[f32]>,
    cfg: &FlowSolverConfig,
) -> Result<FlowGradient> {
    check_inputs(flow, i_t, i_t1, weights)?;
    let penalty = Penalty::from(cfg);
    let (w, h) = flow.dims();
    let n = w * h;
    let mut gu = vec![0.0f64; n];
    let mut gv = vec![0.0f64; n];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let wt = weights.map_or(1.0, |m| m[i] as f64);
            if wt == 0.0 {
                continue;
            }
            let s = bilinear(
                &i_t1.values,
                w,
                h,
                x as f64 + flow.u[i] as f64,
                y as f64 + flow.v[i] as f64,
            );
            if s.valid {
                let d = wt * penalty.drho(i_t.values[i] as f64 - s.value);
                gu[i] -= d * s.dx;
                gv[i] -= d * s.dy;
            }
        }
    }
    if cfg.alpha != 0.0 {
        let a = cfg.alpha;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let mut pair = |j: usize| {
                    let du = a * penalty.drho(flow.u[i] as f64 - flow.u[j] as f64);
                    let dv = a * penalty.drho(flow.v[i] as f64 - flow.v[j] as f64);
                    gu[i] += du;
                    gu[j] -= du;
                    gv[i] += dv;
                    gv[j] -= dv;
                };
                if x + 1 < w {
                    pair(i + 1);
                }
                if y + 1 < h {
                    pair(i + w);
                }
            }
        }
    }
    Ok(FlowGradient {
        width: w,
        height: h,
        u: gu,
        v: gv,
    })
}

/// Flow-shaped gradient kept in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGradient {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FlowGradient {
    pub fn norm(&self) -> f64 {
        self.u.iter().chain(&self.v).map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.u.iter().chain(&self.v).fold(0.0, |m, g| m.max(g.abs()))
    }
}
