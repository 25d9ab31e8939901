//! Learning-free event + depth fusion for collision avoidance.
//!
//! The crate simulates event, intensity, depth and flow streams
//! ([`sim`]), estimates dense optical flow by directly minimizing a
//! Charbonnier photometric + smoothness objective ([`flow`]), turns flow and
//! depth into inverse time-to-impact maps ([`tti`]), derives an evasion
//! direction ([`policy`]) and scores everything with the usual flow,
//! segmentation and angle metrics ([`eval`]). [`io`] holds the binary file
//! formats and the text configuration; [`pipeline`] runs the batch stages
//! behind the `evreflex` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod flow;
pub mod io;
pub mod pipeline;
pub mod policy;
pub mod sim;
pub mod tti;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    accumulate_events, event_mask, CameraModel, Event, EventMap, FloatMap, FlowField, Mask,
    Polarity, Semantics,
};
