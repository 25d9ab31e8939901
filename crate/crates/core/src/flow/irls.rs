//! Reweighted Gauss-Newton descent direction. The Charbonnier penalty is a
//! concave function of the squared argument, so at the current flow it is
//! bounded above by a quadratic with weight `g'(x^2)`. Linearizing the warp
//! turns the bound into a sparse positive semidefinite system, solved here
//! with block-Jacobi preconditioned conjugate gradients.

use super::loss::FlowGradient;
use super::warp::bilinear;
use super::FlowSolverConfig;
use crate::types::{FloatMap, FlowField};

/// `g'(s)` for `g(s) = (s + eps^2)^a`.
#[inline]
fn weight(x: f64, eps: f64, a: f64) -> f64 {
    a * (x * x + eps * eps).powf(a - 1.0)
}

struct System {
    w: usize,
    h: usize,
    /// Per-pixel data block `[a_uu, a_uv, a_vv]`.
    data: Vec<[f64; 3]>,
    /// Smoothness weights towards the right and lower neighbour, per component.
    cu_right: Vec<f64>,
    cu_down: Vec<f64>,
    cv_right: Vec<f64>,
    cv_down: Vec<f64>,
    damping: f64,
}

impl System {
    fn build(
        flow: &FlowField,
        i_t: &FloatMap,
        i_t1: &FloatMap,
        weights: Option<&[f32]>,
        cfg: &FlowSolverConfig,
    ) -> System {
        let (w, h) = flow.dims();
        let n = w * h;
        let (eps, a) = (cfg.charbonnier_eps, cfg.charbonnier_alpha);
        let mut data = vec![[0.0; 3]; n];
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
                    let c = wt * weight(i_t.values[i] as f64 - s.value, eps, a);
                    data[i] = [c * s.dx * s.dx, c * s.dx * s.dy, c * s.dy * s.dy];
                }
            }
        }
        let lam = cfg.alpha;
        let pair = |c: &[f32], i: usize, j: usize| lam * weight(c[i] as f64 - c[j] as f64, eps, a);
        let mut cu_right = vec![0.0; n];
        let mut cu_down = vec![0.0; n];
        let mut cv_right = vec![0.0; n];
        let mut cv_down = vec![0.0; n];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    cu_right[i] = pair(&flow.u, i, i + 1);
                    cv_right[i] = pair(&flow.v, i, i + 1);
                }
                if y + 1 < h {
                    cu_down[i] = pair(&flow.u, i, i + w);
                    cv_down[i] = pair(&flow.v, i, i + w);
                }
            }
        }
        let scale = data
            .iter()
            .map(|d| d[0].max(d[2]))
            .chain(cu_right.iter().copied())
            .chain(cu_down.iter().copied())
            .fold(0.0f64, f64::max);
        System {
            w,
            h,
            data,
            cu_right,
            cu_down,
            cv_right,
            cv_down,
            damping: 1e-9 * scale.max(1e-12),
        }
    }

    fn apply(&self, xu: &[f64], xv: &[f64], yu: &mut [f64], yv: &mut [f64]) {
        let (w, h) = (self.w, self.h);
        for i in 0..w * h {
            let d = &self.data[i];
            yu[i] = d[0] * xu[i] + d[1] * xv[i] + self.damping * xu[i];
            yv[i] = d[1] * xu[i] + d[2] * xv[i] + self.damping * xv[i];
        }
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let mut link = |j: usize, cu: f64, cv: f64| {
                    let du = cu * (xu[i] - xu[j]);
                    let dv = cv * (xv[i] - xv[j]);
                    yu[i] += du;
                    yu[j] -= du;
                    yv[i] += dv;
                    yv[j] -= dv;
                };
                if x + 1 < w {
                    link(i + 1, self.cu_right[i], self.cv_right[i]);
                }
                if y + 1 < h {
                    link(i + w, self.cu_down[i], self.cv_down[i]);
                }
            }
        }
    }

    /// Inverted 2x2 diagonal blocks.
    fn block_inverses(&self) -> Vec<[f64; 3]> {
        let (w, h) = (self.w, self.h);
        let mut du = vec![self.damping; w * h];
        let mut dv = vec![self.damping; w * h];
        for i in 0..w * h {
            if i % w + 1 < w {
                du[i] += self.cu_right[i];
                du[i + 1] += self.cu_right[i];
                dv[i] += self.cv_right[i];
                dv[i + 1] += self.cv_right[i];
            }
            if i + w < w * h {
                du[i] += self.cu_down[i];
                du[i + w] += self.cu_down[i];
                dv[i] += self.cv_down[i];
                dv[i + w] += self.cv_down[i];
            }
        }
        (0..w * h)
            .map(|i| {
                let d = &self.data[i];
                let (a, b, c) = (d[0] + du[i], d[1], d[2] + dv[i]);
                let det = a * c - b * b;
                if det > 0.0 {
                    [c / det, -b / det, a / det]
                } else {
                    [1.0 / a.max(f64::MIN_POSITIVE), 0.0, 1.0 / c.max(f64::MIN_POSITIVE)]
                }
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
        + c.iter().zip(d).map(|(x, y)| x * y).sum::<f64>()
}

/// Step `delta` minimizing the quadratic upper model of the objective around
/// `flow`; `grad` is the objective gradient at `flow`. The model's gradient at
/// zero equals `grad`, so the result is a descent direction.
pub(crate) fn reweighted_direction(
    flow: &FlowField,
    i_t: &FloatMap,
    i_t1: &FloatMap,
    weights: Option<&[f32]>,
    grad: &FlowGradient,
    cfg: &FlowSolverConfig,
) -> (Vec<f64>, Vec<f64>) {
    let sys = System::build(flow, i_t, i_t1, weights, cfg);
    let inv = sys.block_inverses();
    let n = flow.width * flow.height;
    // Model Hessian is twice the assembled operator: solve A x = -grad / 2.
    let mut ru: Vec<f64> = grad.u.iter().map(|g| -0.5 * g).collect();
    let mut rv: Vec<f64> = grad.v.iter().map(|g| -0.5 * g).collect();
    let mut xu = vec![0.0; n];
    let mut xv = vec![0.0; n];
    let precondition = |ru: &[f64], rv: &[f64], zu: &mut Vec<f64>, zv: &mut Vec<f64>| {
        for i in 0..n {
            let m = &inv[i];
            zu[i] = m[0] * ru[i] + m[1] * rv[i];
            zv[i] = m[1] * ru[i] + m[2] * rv[i];
        }
    };
    let mut zu = vec![0.0; n];
    let mut zv = vec![0.0; n];
    precondition(&ru, &rv, &mut zu, &mut zv);
    let mut pu = zu.clone();
    let mut pv = zv.clone();
    let mut rz = dot(&ru, &zu, &rv, &zv);
    let r0 = dot(&ru, &ru, &rv, &rv).sqrt();
    let mut qu = vec![0.0; n];
    let mut qv = vec![0.0; n];
    for _ in 0..cfg.cg_iters {
        if r0 == 0.0 || rz <= 0.0 {
            break;
        }
        sys.apply(&pu, &pv, &mut qu, &mut qv);
        let pq = dot(&pu, &qu, &pv, &qv);
        if pq <= 0.0 {
            break;
        }
        let step = rz / pq;
        for i in 0..n {
            xu[i] += step * pu[i];
            xv[i] += step * pv[i];
            ru[i] -= step * qu[i];
            rv[i] -= step * qv[i];
        }
        if dot(&ru, &ru, &rv, &rv).sqrt() <= CG_TOL * r0 {
            break;
        }
        precondition(&ru, &rv, &mut zu, &mut zv);
        let rz_next = dot(&ru, &zu, &rv, &zv);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            pu[i] = zu[i] + beta * pu[i];
            pv[i] = zv[i] + beta * pv[i];
        }
    }
    (xu, xv)
}

const CG_TOL: f64 = 1e-6;
