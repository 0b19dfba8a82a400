//! Keypoint similarity, keypoint-driven label assignment, smooth OKS losses,
//! task alignment error, OKS-NMS and COCO-style keypoint evaluation.

pub mod alignment;
pub mod assign;
pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod loss;
pub mod lsap;
pub mod pose;
pub mod suppression;
pub mod synth;

pub use error::{DataError, Error, Result};
pub use pose::{oks, GroundTruthInstance, Keypoint, Pose, SigmaPreset, SigmaTable, Visibility};
