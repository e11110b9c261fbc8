//! Point cloud autoencoding with learned graph topology.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod network;
pub mod pointcloud;
pub mod theory;
pub mod trainer;

pub use error::{Error, Result};
