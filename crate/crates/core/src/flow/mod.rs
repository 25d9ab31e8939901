//! Dense optical flow by direct minimization of a Charbonnier photometric
//! plus smoothness objective, and the bilinear warping operator.

mod fusion;
mod irls;
mod loss;
mod solver;
mod warp;

pub use loss::{
    charbonnier, charbonnier_derivative, charbonnier_map, data_weights, loss_gradient,
    photometric_loss, smoothness_loss, total_loss, FlowGradient, Penalty,
};
pub use solver::{estimate_flow, estimate_flow_from, FlowEstimate, LevelTrace};
pub use warp::{bilinear, warp, Sample, Warp};

use crate::error::{Error, Result};

/// Where the photometric term is trusted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventWeighting {
    /// Every pixel contributes.
    Uniform,
    /// Only pixels that saw at least one event contribute.
    EventGated,
}

/// How each iteration picks its search direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Descent {
    /// Negative gradient.
    Gradient,
    /// Minimizer of the reweighted quadratic upper model.
    Reweighted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolverConfig {
    /// Weight of the smoothness term.
    pub alpha: f64,
    pub charbonnier_eps: f64,
    pub charbonnier_alpha: f64,
    pub pyramid_levels: usize,
    pub iters_per_level: usize,
    /// Initial and maximum descent step.
    pub step_size: f64,
    /// Step multiplier after an accepted step, capped at `step_size`.
    pub step_growth: f64,
    /// Backtracking gives up below this step.
    pub min_step: f64,
    pub event_weighting: EventWeighting,
    /// Relative loss change that ends a level.
    pub convergence_tol: f64,
    pub descent: Descent,
    /// Conjugate-gradient iterations per reweighted step.
    pub cg_iters: usize,
    /// Search radius in px of the large-displacement candidates; 0 disables them.
    pub match_radius: usize,
}

impl Default for FlowSolverConfig {
    fn default() -> Self {
        FlowSolverConfig {
            alpha: 0.5,
            charbonnier_eps: 0.001,
            charbonnier_alpha: 0.45,
            pyramid_levels: 4,
            iters_per_level: 200,
            step_size: 1.0,
            step_growth: 1.0,
            min_step: 1e-10,
            event_weighting: EventWeighting::EventGated,
            convergence_tol: 1e-6,
            descent: Descent::Reweighted,
            cg_iters: 100,
            match_radius: 8,
        }
    }
}

impl FlowSolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("flow solver: {what}")));
        if !(self.alpha >= 0.0) {
            return bad("alpha must be >= 0");
        }
        if !(self.charbonnier_eps > 0.0) {
            return bad("charbonnier_eps must be > 0");
        }
        if !(self.charbonnier_alpha > 0.0 && self.charbonnier_alpha < 1.0) {
            return bad("charbonnier_alpha must lie in (0, 1)");
        }
        if self.pyramid_levels < 1 {
            return bad("pyramid_levels must be >= 1");
        }
        if !(self.step_size > 0.0) || !(self.min_step > 0.0) || !(self.step_growth >= 1.0) {
            return bad("step sizes must be positive and growth >= 1");
        }
        if !(self.convergence_tol >= 0.0) {
            return bad("convergence_tol must be >= 0");
        }
        Ok(())
    }
}
