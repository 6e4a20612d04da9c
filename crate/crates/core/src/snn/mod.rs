//! Deterministic discrete-time spiking engine with multi-compartment neurons.

mod engine;
mod plasticity;
mod raster;
mod spec;

pub use engine::EngineState;
pub use plasticity::{apply_plasticity, decay_gate, SynapseState};
pub use raster::{record, SpikeRaster};
pub use spec::{
    CompartmentParams, DendriteSpec, DendriticJoin, NetworkSpec, NeuronId, NeuronSpec, PlasticityRule, SynapseSpec,
};
