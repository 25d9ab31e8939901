//! Bilinear backward warping with clamp-to-edge sampling.

use crate::error::{ensure_same, Result};
use crate::types::{FloatMap, FlowField, Mask};

/// A bilinear sample together with its partial derivatives with respect to
/// the sample position. `valid` is false when the position left the raster
/// and was clamped to the border.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub dx: f64,
    pub dy: f64,
    pub valid: bool,
}

#[inline]
fn cell(coord: f64, len: usize) -> (usize, usize, f64, bool) {
    let max = (len - 1) as f64;
    let valid = coord >= 0.0 && coord <= max;
    let c = coord.clamp(0.0, max);
    if len == 1 {
        return (0, 0, 0.0, valid);
    }
    let lo = (c.floor() as usize).min(len - 2);
    (lo, lo + 1, c - lo as f64, valid)
}

/// Samples `values` (row-major, `width` x `height`) at `(x, y)`.
#[inline]
pub fn bilinear(values: &[f32], width: usize, height: usize, x: f64, y: f64) -> Sample {
    let (x0, x1, fx, vx) = cell(x, width);
    let (y0, y1, fy, vy) = cell(y, height);
    let a = values[y0 * width + x0] as f64;
    let b = values[y0 * width + x1] as f64;
    let c = values[y1 * width + x0] as f64;
    let d = values[y1 * width + x1] as f64;
    let top = (1.0 - fx) * a + fx * b;
    let bottom = (1.0 - fx) * c + fx * d;
    let value = (1.0 - fy) * top + fy * bottom;
    let (dx, dy) = if vx && vy {
        (
            (1.0 - fy) * (b - a) + fy * (d - c),
            bottom - top,
        )
    } else {
        (0.0, 0.0)
    };
    Sample {
        value,
        dx: if width > 1 { dx } else { 0.0 },
        dy: if height > 1 { dy } else { 0.0 },
        valid: vx && vy,
    }
}

/// Rasters that can be resampled along a flow field: `out(i) = src(i + F(i))`.
pub trait Warp: Sized {
    fn warp(&self, flow: &FlowField) -> Result<(Self, Mask)>;
}

impl Warp for FloatMap {
    fn warp(&self, flow: &FlowField) -> Result<(Self, Mask)> {
        ensure_same(self.dims(), flow.dims())?;
        let (w, h) = self.dims();
        let mut out = self.clone();
        let mut valid = Mask::new(w, h, true);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let s = bilinear(
                    &self.values,
                    w,
                    h,
                    x as f64 + flow.u[i] as f64,
                    y as f64 + flow.v[i] as f64,
                );
                out.values[i] = s.value as f32;
                valid.bits[i] = s.valid;
            }
        }
        Ok((out, valid))
    }
}

impl Warp for FlowField {
    fn warp(&self, flow: &FlowField) -> Result<(Self, Mask)> {
        ensure_same(self.dims(), flow.dims())?;
        let (w, h) = self.dims();
        let mut out = self.clone();
        let mut valid = Mask::new(w, h, true);
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let (sx, sy) = (x as f64 + flow.u[i] as f64, y as f64 + flow.v[i] as f64);
                let su = bilinear(&self.u, w, h, sx, sy);
                let sv = bilinear(&self.v, w, h, sx, sy);
                out.u[i] = su.value as f32;
                out.v[i] = sv.value as f32;
                valid.bits[i] = su.valid;
            }
        }
        Ok((out, valid))
    }
}

/// Free-function form of [`Warp::warp`].
pub fn warp<T: Warp>(src: &T, flow: &FlowField) -> Result<(T, Mask)> {
    src.warp(flow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Semantics;

    fn ramp(w: usize, h: usize) -> FloatMap {
        FloatMap::from_fn(w, h, Semantics::Intensity, |x, _| x as f32)
    }

    #[test]
    fn zero_flow_is_identity() {
        let src = FloatMap::from_fn(7, 5, Semantics::Intensity, |x, y| {
            ((x * 31 + y * 17) % 11) as f32 * 0.37 - 1.3
        });
        let (out, valid) = warp(&src, &FlowField::zeros(7, 5)).unwrap();
        assert_eq!(out.values, src.values);
        assert_eq!(valid.count(), 35);
    }

    #[test]
    fn integer_shift() {
        let (out, valid) = warp(&ramp(8, 4), &FlowField::constant(8, 4, 1.0, 0.0)).unwrap();
        for y in 0..4 {
            for x in 0..7 {
                assert_eq!(out.get(x, y), x as f32 + 1.0);
                assert!(valid.get(x, y));
            }
            assert!(!valid.get(7, y));
            assert_eq!(out.get(7, y), 7.0);
        }
    }

    #[test]
    fn half_pixel_shift_interpolates() {
        let (out, _) = warp(&ramp(8, 4), &FlowField::constant(8, 4, 0.5, 0.0)).unwrap();
        for y in 0..4 {
            for x in 0..7 {
                // Linear interpolation between columns x and x + 1.
                let oracle = 0.5 * x as f32 + 0.5 * (x + 1) as f32;
                assert_eq!(out.get(x, y), oracle);
            }
        }
    }

    #[test]
    fn flow_fields_warp_too() {
        let f = FlowField::from_fn(6, 6, |x, y| (x as f32, y as f32 * 2.0));
        let (out, valid) = warp(&f, &FlowField::constant(6, 6, 0.0, 1.0)).unwrap();
        assert_eq!(out.get(2, 3), (2.0, 8.0));
        assert!(!valid.get(0, 5));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(warp(&ramp(4, 4), &FlowField::zeros(4, 5)).is_err());
    }

    #[test]
    fn sample_derivatives_are_cell_slopes() {
        let img = ramp(5, 5);
        let s = bilinear(&img.values, 5, 5, 2.3, 1.7);
        assert!((s.value - 2.3).abs() < 1e-12);
        assert!((s.dx - 1.0).abs() < 1e-12);
        assert!(s.dy.abs() < 1e-12);
        let out = bilinear(&img.values, 5, 5, -0.2, 1.0);
        assert!(!out.valid);
        assert_eq!(out.value, 0.0);
    }
}
