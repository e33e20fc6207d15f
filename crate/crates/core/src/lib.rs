//! Visual tracking with sparse-coded patch features.
//!
//! A target is described by local patches, coded against a learned
//! dictionary, max-pooled over a spatial pyramid and scored by a linear
//! least-squares SVM. The dictionary can be refined online while tracking.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod dictlearn;
pub mod encode;
pub mod error;
pub mod lasso;
pub mod lssvm;
pub mod metrics;
pub mod patchgrid;
pub mod pyrpool;
pub mod seqio;
pub mod tracker;

pub use dictlearn::{Dictionary, InitMethod};
pub use encode::{EncoderMethod, EncoderSpec};
pub use error::{Error, Result};
pub use lssvm::{BiasMode, LinearModel};
pub use metrics::{cle, evaluate, vor, EvalReport, TrackRecord};
pub use patchgrid::PatchGridSpec;
pub use pyrpool::{PooledFeature, PyramidSpec};
pub use seqio::{BoundingBox, GrayFrame, Sequence};
pub use tracker::{track_sequence, DictUpdateMode, Tracker, TrackerConfig};
