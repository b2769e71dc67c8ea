//! Weakly supervised gaze labelling.
//!
//! Given gaze trajectories whose terminal frames carry labels, this crate
//! mines 3-frame training sets, trains the two-label and one-label networks,
//! and labels the intermediate frames. SLERP pseudo-labels serve as the
//! geometric baseline.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the precision used by the command-line tool.

pub mod cli;
pub mod datamodel;
pub mod error;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod mining;
pub mod model;
mod par;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision of the command-line pipeline.
pub type Real = f64;
pub type Gaze = geometry::GazeVector<Real>;
pub type Frame = datamodel::FrameRecord<Real>;
pub type Set = datamodel::ThreeFrameSet<Real>;
