//! Batch analytics for car-following behavior.
//!
//! The crate turns per-frame outputs of driving-video processing
//! (detections, depth maps, ego telemetry, lidar ground truth) into
//! car-following measures and the downstream analyses built on them:
//!
//! - [`ingest`]: bit-exact parsers and writers for every artifact format;
//! - [`leadvehicle`]: the lane-triangle heuristic and IoU track assembly;
//! - [`depthmetrics`]: lidar calibration, depth-quality metrics, model
//!   selection, and bbox distance aggregation;
//! - [`kinematics`]: relative velocity and leading-vehicle acceleration
//!   from the differenced equation of motion;
//! - [`stats`]: density estimates and pooled/Welch two-sample t-tests;
//! - [`gbt`]: gradient-boosted regression trees with gain importance;
//! - [`synth`]: seeded synthetic drives with exact kinematic ground truth;
//! - [`pipeline`]: the subcommand implementations behind the `carfollow`
//!   binary.

pub mod config;
pub mod depthmetrics;
pub mod error;
pub mod gbt;
pub mod ingest;
pub mod kinematics;
pub mod leadvehicle;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
