//! Multi-person 3D pose estimation from a 4x4-zone time-of-flight sensor.
//!
//! The pipeline runs in three steps: a 3D-convolutional network turns the 4x4x100
//! photon-count histogram into a 32x32 depth map, a 2D-convolutional network turns that
//! depth map into joint confidence maps and part affinity fields, and a decoder assembles
//! skeletons and lifts them to 3D using the depth map. A synthetic scene and sensor
//! simulator supplies training data and labels.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod config;
pub mod decode;
pub mod error;
pub mod io;
pub mod map;
pub mod metrics;
pub mod networks;
pub mod nn;
pub mod pipeline;
pub mod scene;
pub mod seed;
pub mod sensor;

pub use error::{Error, FormatError, Result};
