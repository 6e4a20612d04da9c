use serde::{Deserialize, Serialize};

use super::spec::PlasticityRule;

/// Mutable state of one plastic synapse: its weight and the pre-synaptic trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseState {
    pub w: f64,
    pub x1: f64,
}

impl SynapseState {
    pub fn new(w: f64) -> Self {
        Self { w, x1: 0.0 }
    }

    /// Advances the trace by one step. A pre-synaptic spike saturates it to 1.
    pub fn update_trace(&mut self, retain: f64, pre_spiked: bool) {
        self.x1 = if pre_spiked { 1.0 } else { self.x1 * retain };
    }
}

/// One application of the rule: `w' = clamp(w + a*x1*y0 - b*u_k, w_min, w_max)`.
///
/// `y0` is the post-synaptic spike indicator for this step and `u_k` the
/// periodic decay gate.
pub fn apply_plasticity(syn: SynapseState, rule: &PlasticityRule, y0: bool, u_k: bool) -> SynapseState {
    debug_assert!(syn.x1 >= 0.0);
    let mut dw = 0.0;
    if y0 {
        dw += rule.a * syn.x1;
    }
    if u_k {
        dw -= rule.b;
    }
    SynapseState {
        w: (syn.w + dw).clamp(rule.w_min, rule.w_max),
        x1: syn.x1,
    }
}

/// Decay gate: open on every `k`-th step (steps `k-1`, `2k-1`, ...).
pub fn decay_gate(step: u64, k: u32) -> bool {
    (step + 1).is_multiple_of(u64::from(k))
}
