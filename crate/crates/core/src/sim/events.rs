use rayon::prelude::*;

use crate::error::{ensure_same, Error, Result};
use crate::types::{Event, FloatMap, Polarity};

/// Offset inside the log that keeps black pixels finite.
pub const LOG_EPS: f64 = 1e-3;

#[inline]
fn log_intensity(v: f32) -> f64 {
    (v as f64 + LOG_EPS).ln()
}

/// Emits contrast-threshold events from timestamped intensity frames.
///
/// Each pixel keeps a reference log intensity; whenever the linearly
/// interpolated log signal moves a full `contrast` step past it, one event is
/// emitted at the interpolated crossing time and the reference advances by
/// one step. Output is sorted by (t, y, x, polarity). Crossing times fall in
/// `(t_k, t_{k+1})`, so events stay inside their frame window.
pub fn generate_events(frames: &[(f64, &FloatMap)], contrast: f64) -> Result<Vec<Event>> {
    if frames.len() < 2 {
        return Err(Error::InvalidArgument("event generation needs at least two frames".into()));
    }
    if !(contrast > 0.0) {
        return Err(Error::InvalidArgument(format!("contrast threshold must be > 0, got {contrast}")));
    }
    let dims = frames[0].1.dims();
    for (_, f) in frames {
        ensure_same(dims, f.dims())?;
    }
    for pair in frames.windows(2) {
        if !(pair[1].0 > pair[0].0) {
            return Err(Error::InvalidArgument("frame timestamps must increase".into()));
        }
    }
    let (w, h) = dims;
    let mut events: Vec<Event> = (0..w * h)
        .into_par_iter()
        .flat_map_iter(|i| pixel_events(frames, i, w, contrast))
        .collect();
    events.par_sort_by(|a, b| a.stream_cmp(b));
    Ok(events)
}

fn pixel_events(frames: &[(f64, &FloatMap)], i: usize, w: usize, contrast: f64) -> Vec<Event> {
    let (x, y) = ((i % w) as u16, (i / w) as u16);
    let mut out = Vec::new();
    let mut reference = log_intensity(frames[0].1.values[i]);
    for pair in frames.windows(2) {
        let (t0, a) = pair[0];
        let (t1, b) = pair[1];
        let l0 = log_intensity(a.values[i]);
        let l1 = log_intensity(b.values[i]);
        if l1 == l0 {
            continue;
        }
        let last = t1 - (t1 - t0) * 1e-9;
        loop {
            let (level, polarity) = if l1 - reference >= contrast {
                (reference + contrast, Polarity::Positive)
            } else if reference - l1 >= contrast {
                (reference - contrast, Polarity::Negative)
            } else {
                break;
            };
            let frac = ((level - l0) / (l1 - l0)).clamp(0.0, 1.0);
            let t = (t0 + frac * (t1 - t0)).clamp(t0, last);
            out.push(Event::new(t, x, y, polarity));
            reference = level;
        }
    }
    out
}
