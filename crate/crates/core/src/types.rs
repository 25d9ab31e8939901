//! Shared value types: events, the four-channel event map, dense scalar maps,
//! flow fields, binary masks and the pinhole camera.

use crate::error::{ensure_same, Error, Result};

/// Sign of a log-intensity change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Positive => 1,
            Polarity::Negative => -1,
        }
    }

    pub fn from_sign(sign: i8) -> Option<Self> {
        match sign {
            1 => Some(Polarity::Positive),
            -1 => Some(Polarity::Negative),
            _ => None,
        }
    }
}

/// A single polarity change reported by one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Seconds.
    pub t: f64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(t: f64, x: u16, y: u16, polarity: Polarity) -> Self {
        Event { t, x, y, polarity }
    }

    /// Total order used for every emitted stream: time, then row, column, polarity.
    pub fn stream_cmp(&self, other: &Event) -> std::cmp::Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.y.cmp(&other.y))
            .then(self.x.cmp(&other.x))
            .then(self.polarity.cmp(&other.polarity))
    }
}

/// What the values of a [`FloatMap`] mean. The discriminants are the on-disk codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Semantics {
    Intensity = 0,
    DepthM = 1,
    InvTtiS = 2,
    ClassId = 3,
    FlowU = 4,
    FlowV = 5,
}

impl Semantics {
    pub fn code(self) -> u32 {
        self as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Some(match code {
            0 => Semantics::Intensity,
            1 => Semantics::DepthM,
            2 => Semantics::InvTtiS,
            3 => Semantics::ClassId,
            4 => Semantics::FlowU,
            5 => Semantics::FlowV,
            _ => return None,
        })
    }
}

/// Dense row-major scalar raster (top row first).
#[derive(Debug, Clone, PartialEq)]
pub struct FloatMap {
    pub width: usize,
    pub height: usize,
    pub semantics: Semantics,
    pub values: Vec<f32>,
}

impl FloatMap {
    pub fn filled(width: usize, height: usize, semantics: Semantics, value: f32) -> Self {
        FloatMap {
            width,
            height,
            semantics,
            values: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize, semantics: Semantics) -> Self {
        Self::filled(width, height, semantics, 0.0)
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        semantics: Semantics,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        FloatMap {
            width,
            height,
            semantics,
            values,
        }
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        semantics: Semantics,
        values: Vec<f32>,
    ) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        Ok(FloatMap {
            width,
            height,
            semantics,
            values,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f32) {
        self.values[y * self.width + x] = value;
    }

    /// Depth maps mark missing geometry with 0.
    #[inline]
    pub fn is_valid_depth(&self, idx: usize) -> bool {
        self.values[idx] > 0.0 && self.values[idx].is_finite()
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.values
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Dense per-pixel displacement in pixels per frame interval.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> (f32, f32),
    ) -> Self {
        let mut flow = FlowField::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                flow.u[y * width + x] = u;
                flow.v[y * width + x] = v;
            }
        }
        flow
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn channel_map(&self, semantics: Semantics) -> FloatMap {
        let values = match semantics {
            Semantics::FlowV => self.v.clone(),
            _ => self.u.clone(),
        };
        FloatMap {
            width: self.width,
            height: self.height,
            semantics,
            values,
        }
    }

    pub fn max_magnitude(&self) -> f32 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.hypot(*v))
            .fold(0.0, f32::max)
    }
}

/// Binary raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Mask {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Mask {
            width,
            height,
            bits,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn and(&self, other: &Mask) -> Result<Mask> {
        ensure_same(self.dims(), other.dims())?;
        Ok(Mask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
        })
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }
}

/// Pinhole camera; camera frame has X right, Y down, Z along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = CameraModel {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Square pixels, principal point at the image centre, given horizontal field of view.
    pub fn with_fov(width: usize, height: usize, hfov_deg: f64) -> Result<Self> {
        let fx = width as f64 / 2.0 / (hfov_deg.to_radians() / 2.0).tan();
        Self::new(
            fx,
            fx,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && (0.0..self.width as f64).contains(&self.cx)
            && (0.0..self.height as f64).contains(&self.cy);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid camera model {self:?}")))
        }
    }

    /// Ray direction through pixel centre (x, y), with unit Z component.
    pub fn ray(&self, x: f64, y: f64) -> [f64; 3] {
        [(x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0]
    }

    /// Projects a camera-frame point; `None` when behind the camera.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        if p[2] <= 1e-9 {
            return None;
        }
        Some((self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy))
    }
}

/// Four-channel accumulation of an event window: signed counts and most
/// recent normalized timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct EventMap {
    pub width: usize,
    pub height: usize,
    pub window: (f64, f64),
    pub pos_count: Vec<u32>,
    pub neg_count: Vec<u32>,
    pub pos_time: Vec<f32>,
    pub neg_time: Vec<f32>,
}

impl EventMap {
    pub fn empty(width: usize, height: usize, window: (f64, f64)) -> Self {
        let n = width * height;
        EventMap {
            width,
            height,
            window,
            pos_count: vec![0; n],
            neg_count: vec![0; n],
            pos_time: vec![0.0; n],
            neg_time: vec![0.0; n],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn total_events(&self) -> u64 {
        self.pos_count
            .iter()
            .chain(&self.neg_count)
            .map(|&c| c as u64)
            .sum()
    }
}

/// Accumulates a time-sorted event list over `[t0, t1)` into an [`EventMap`].
///
/// Latest timestamps are stored as `(t - t0) / (t1 - t0)`; pixels without an
/// event of a given sign keep 0.
pub fn accumulate_events(
    events: &[Event],
    window: (f64, f64),
    width: usize,
    height: usize,
) -> Result<EventMap> {
    let (t0, t1) = window;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::EmptyWindow { t0, t1 });
    }
    let mut map = EventMap::empty(width, height, window);
    let span = t1 - t0;
    let mut prev = f64::NEG_INFINITY;
    for (index, ev) in events.iter().enumerate() {
        if ev.t < prev {
            return Err(Error::Unsorted { index });
        }
        prev = ev.t;
        if !(ev.t >= t0 && ev.t < t1) {
            return Err(Error::OutsideWindow {
                index,
                t: ev.t,
                t0,
                t1,
            });
        }
        let (x, y) = (ev.x as usize, ev.y as usize);
        if x >= width || y >= height {
            return Err(Error::PixelOutOfBounds {
                x,
                y,
                width,
                height,
            });
        }
        let i = y * width + x;
        let norm = ((ev.t - t0) / span) as f32;
        match ev.polarity {
            Polarity::Positive => {
                map.pos_count[i] += 1;
                map.pos_time[i] = map.pos_time[i].max(norm);
            }
            Polarity::Negative => {
                map.neg_count[i] += 1;
                map.neg_time[i] = map.neg_time[i].max(norm);
            }
        }
    }
    Ok(map)
}

/// Pixels that saw at least one event.
pub fn event_mask(map: &EventMap) -> Mask {
    Mask {
        width: map.width,
        height: map.height,
        bits: map
            .pos_count
            .iter()
            .zip(&map.neg_count)
            .map(|(p, n)| p + n > 0)
            .collect(),
    }
}
