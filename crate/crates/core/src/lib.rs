//! Spiking-network head-direction SLAM.
//!
//! - [`snn`]: the spiking engine.
//! - [`slam_net`]: builders wiring the head-direction, reference-frame,
//!   mapping, likelihood and Bayesian sub-networks.
//! - [`world`]: simulated environments, depth camera and odometry.
//! - [`codec`]: spike encoders, decoders, Gaussian fusion and metrics.
//! - [`harness`]: closed-loop experiments and artifact output.

pub mod codec;
pub mod error;
pub mod harness;
pub mod slam_net;
pub mod snn;
pub mod world;

pub use error::{Error, Result};
