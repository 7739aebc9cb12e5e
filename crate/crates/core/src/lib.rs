//! Event-camera simulation, event encodings, forward warping, sparse-coding
//! reconstruction and evaluation metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod encode;
pub mod error;
pub mod eventsim;
pub mod metrics;
pub mod pipeline;
pub mod sparse;
pub mod tensor;
pub mod warp;

pub use encode::{build_voxel_grid, VoxelGrid};
pub use error::{Error, ErrorKind, Result};
pub use eventsim::{Event, EventStream};
pub use sparse::{CistaState, CistaWeights};
pub use tensor::{Frame, Image, Real, Tensor};
pub use warp::FlowField;
