use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building, compiling, or running a network and its world.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid compartment parameters on neuron {neuron}, compartment {compartment}: {reason}")]
    InvalidCompartment {
        neuron: usize,
        compartment: usize,
        reason: String,
    },

    #[error("malformed dendrite tree on neuron {neuron}: {reason}")]
    MalformedTree { neuron: usize, reason: String },

    #[error("{kind} join on neuron {neuron}, compartment {compartment} needs exactly 2 children, found {found}")]
    JoinArity {
        neuron: usize,
        compartment: usize,
        kind: &'static str,
        found: usize,
    },

    #[error("synapse {index} has a dangling endpoint: {reason}")]
    DanglingSynapse { index: usize, reason: String },

    #[error("synapse {index}: delay >= 1 required, got {delay}")]
    ZeroDelay { index: usize, delay: u32 },

    #[error("invalid plasticity rule: {0}")]
    InvalidRule(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown environment `{0}`")]
    UnknownEnvironment(String),

    #[error("position ({x:.3}, {y:.3}) lies outside the environment extent")]
    OutsideExtent { x: f64, y: f64 },

    #[error("ambiguous fusion: cue means differ by {0:.1} degrees (limit 90)")]
    AmbiguousFusion(f64),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
