//! Synthetic sequences: a camera on a floor trajectory inside a closed room
//! with flying spheres, rendered by analytic ray casting. Every frame carries
//! intensity, Z-depth, class ids and exact forward/backward flow; events are
//! emulated from the intensity stream and ground-truth inverse TTI is derived
//! from consecutive depths.

mod events;
mod render;
mod scene;

pub use events::{generate_events, LOG_EPS};
pub use render::{render_frame, Frame};
pub use scene::{
    Obstacle, Pattern, Pose, SceneConfig, Texture, Trajectory, Waypoint, CLASS_FLOOR,
    CLASS_FLYING, CLASS_STATIC, DEFAULT_CONTRAST_THRESHOLD,
};

use rayon::prelude::*;

use crate::error::Result;
use crate::tti::{ground_truth_inverse_tti, TtiMap};
use crate::types::Event;

/// A rendered sequence. `events[k]` covers `[t_k, t_{k+1})`; `tti_gt[k]`
/// belongs to frame `k + 1` (it needs the previous depth).
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub scene: SceneConfig,
    pub frames: Vec<Frame>,
    pub events: Vec<Vec<Event>>,
    pub tti_gt: Vec<TtiMap>,
}

impl Sequence {
    pub fn dt(&self) -> f64 {
        self.scene.frame_interval()
    }

    pub fn window(&self, k: usize) -> (f64, f64) {
        (self.frames[k].t, self.frames[k + 1].t)
    }

    /// Ground-truth inverse TTI of frame `k` (k >= 1).
    pub fn tti_at_frame(&self, k: usize) -> Option<&TtiMap> {
        k.checked_sub(1).and_then(|j| self.tti_gt.get(j))
    }
}

/// Renders every frame, emits events per frame interval and derives the
/// ground-truth inverse-TTI stream. Deterministic for a given config,
/// regardless of thread count.
pub fn simulate_sequence(scene: &SceneConfig) -> Result<Sequence> {
    scene.validate()?;
    let n = scene.frame_count();
    let frames = (0..n)
        .into_par_iter()
        .map(|k| render_frame(scene, scene.frame_time(k)))
        .collect::<Result<Vec<_>>>()?;

    let mut windows: Vec<Vec<Event>> = vec![Vec::new(); n.saturating_sub(1)];
    if n >= 2 {
        let stamped: Vec<_> = frames.iter().map(|f| (f.t, &f.intensity)).collect();
        let all = generate_events(&stamped, scene.contrast_threshold)?;
        let mut k = 0;
        for ev in all {
            while k + 2 < n && ev.t >= frames[k + 1].t {
                k += 1;
            }
            windows[k].push(ev);
        }
    }

    let dt = scene.frame_interval();
    let tti_gt = frames
        .par_windows(2)
        .map(|p| ground_truth_inverse_tti(&p[0].depth, &p[1].depth, &p[1].flow_bwd, dt))
        .collect::<Result<Vec<_>>>()?;

    Ok(Sequence {
        scene: scene.clone(),
        frames,
        events: windows,
        tti_gt,
    })
}
