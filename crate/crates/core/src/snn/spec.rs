//! Static description of a spiking network: neurons with dendritic trees,
//! delayed synapses and the single plasticity rule shared by plastic synapses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NeuronId = usize;

/// Two-state (current, voltage) leaky compartment.
///
/// `current_decay` and `voltage_decay` are the fractions of current and
/// voltage retained from one step to the next: `0` forgets immediately,
/// `1` integrates without leak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompartmentParams {
    pub voltage_decay: f64,
    pub current_decay: f64,
    pub threshold: f64,
    pub refractory: u32,
    pub bias: f64,
}

impl CompartmentParams {
    /// Memoryless compartment: voltage equals this step's input.
    pub fn instantaneous(threshold: f64) -> Self {
        Self {
            voltage_decay: 0.0,
            current_decay: 0.0,
            threshold,
            refractory: 0,
            bias: 0.0,
        }
    }

    pub fn leaky(voltage_decay: f64, threshold: f64) -> Self {
        Self {
            voltage_decay,
            current_decay: 0.0,
            threshold,
            refractory: 0,
            bias: 0.0,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.voltage_decay) {
            return Err(format!("voltage_decay {} not in [0,1]", self.voltage_decay));
        }
        if !(0.0..=1.0).contains(&self.current_decay) {
            return Err(format!("current_decay {} not in [0,1]", self.current_decay));
        }
        if !(self.threshold > 0.0) {
            return Err(format!("threshold {} must be > 0", self.threshold));
        }
        if !self.bias.is_finite() {
            return Err("bias must be finite".into());
        }
        Ok(())
    }
}

/// How a compartment combines the outputs of its children.
///
/// For `Pass`, the lower-indexed child is the value and the other is the gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DendriticJoin {
    Sum,
    And,
    Pass,
}

impl DendriticJoin {
    pub fn name(self) -> &'static str {
        match self {
            DendriticJoin::Sum => "SUM",
            DendriticJoin::And => "AND",
            DendriticJoin::Pass => "PASS",
        }
    }
}

/// A non-somatic compartment. Compartment 0 of every neuron is the soma;
/// dendrite `i` is compartment `i + 1` and must name a parent with a lower index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DendriteSpec {
    pub params: CompartmentParams,
    pub parent: usize,
    pub join: DendriticJoin,
    /// Signed scale applied to this compartment's output in the parent's join.
    #[serde(default = "unit_gain")]
    pub gain: f64,
}

fn unit_gain() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronSpec {
    pub soma: CompartmentParams,
    pub soma_join: DendriticJoin,
    #[serde(default)]
    pub dendrites: Vec<DendriteSpec>,
    pub population_tag: String,
    #[serde(default)]
    pub preferred_heading: Option<f64>,
}

impl NeuronSpec {
    pub fn point(soma: CompartmentParams, tag: impl Into<String>) -> Self {
        Self {
            soma,
            soma_join: DendriticJoin::Sum,
            dendrites: Vec::new(),
            population_tag: tag.into(),
            preferred_heading: None,
        }
    }

    pub fn with_heading(mut self, heading: f64) -> Self {
        self.preferred_heading = Some(heading);
        self
    }

    /// Appends a dendrite and returns its compartment index.
    pub fn add_dendrite(&mut self, parent: usize, params: CompartmentParams, join: DendriticJoin, gain: f64) -> usize {
        self.dendrites.push(DendriteSpec {
            params,
            parent,
            join,
            gain,
        });
        self.dendrites.len()
    }

    pub fn compartment_count(&self) -> usize {
        self.dendrites.len() + 1
    }

    pub fn join_of(&self, compartment: usize) -> DendriticJoin {
        if compartment == 0 {
            self.soma_join
        } else {
            self.dendrites[compartment - 1].join
        }
    }

    pub fn params_of(&self, compartment: usize) -> &CompartmentParams {
        if compartment == 0 {
            &self.soma
        } else {
            &self.dendrites[compartment - 1].params
        }
    }

    /// Children of every compartment, in ascending index order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.compartment_count()];
        for (i, d) in self.dendrites.iter().enumerate() {
            if d.parent <= i {
                children[d.parent].push(i + 1);
            }
        }
        children
    }

    pub(crate) fn validate(&self, neuron: usize) -> Result<()> {
        let check = |compartment: usize, p: &CompartmentParams| {
            p.validate().map_err(|reason| Error::InvalidCompartment {
                neuron,
                compartment,
                reason,
            })
        };
        check(0, &self.soma)?;
        for (i, d) in self.dendrites.iter().enumerate() {
            check(i + 1, &d.params)?;
            if d.parent > i {
                return Err(Error::MalformedTree {
                    neuron,
                    reason: format!(
                        "compartment {} has parent {}; parents must precede children",
                        i + 1,
                        d.parent
                    ),
                });
            }
            if !d.gain.is_finite() {
                return Err(Error::MalformedTree {
                    neuron,
                    reason: format!("compartment {} has non-finite gain", i + 1),
                });
            }
        }
        if let Some(h) = self.preferred_heading {
            if !(0.0..360.0).contains(&h) {
                return Err(Error::MalformedTree {
                    neuron,
                    reason: format!("preferred heading {h} outside [0,360)"),
                });
            }
        }
        for (c, kids) in self.children().iter().enumerate() {
            let join = self.join_of(c);
            match join {
                DendriticJoin::And | DendriticJoin::Pass if kids.len() != 2 => {
                    return Err(Error::JoinArity {
                        neuron,
                        compartment: c,
                        kind: join.name(),
                        found: kids.len(),
                    });
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynapseSpec {
    pub pre: NeuronId,
    pub post: NeuronId,
    pub post_compartment: usize,
    pub weight: f64,
    pub delay: u32,
    #[serde(default)]
    pub plastic: bool,
}

impl SynapseSpec {
    pub fn new(pre: NeuronId, post: NeuronId, post_compartment: usize, weight: f64, delay: u32) -> Self {
        Self {
            pre,
            post,
            post_compartment,
            weight,
            delay,
            plastic: false,
        }
    }

    pub fn plastic(mut self) -> Self {
        self.plastic = true;
        self
    }
}

/// Trace-gated Hebbian rule with periodic decay:
/// `dw = a * x1 * y0 - b * u_k`, clamped to `[w_min, w_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlasticityRule {
    pub a: f64,
    pub b: f64,
    pub k: u32,
    pub tau_x1: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl PlasticityRule {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidRule(m));
        if !(self.a > 0.0) {
            return fail(format!("A = {} must be > 0", self.a));
        }
        if !(self.b >= 0.0) {
            return fail(format!("B = {} must be >= 0", self.b));
        }
        if self.k == 0 {
            return fail("k must be > 0".into());
        }
        if !(self.tau_x1 > 0.0) {
            return fail(format!("tau_x1 = {} must be > 0", self.tau_x1));
        }
        if !(self.w_min <= self.w_max) {
            return fail(format!("w_min {} > w_max {}", self.w_min, self.w_max));
        }
        Ok(())
    }
}

impl Default for PlasticityRule {
    fn default() -> Self {
        Self {
            a: 0.016,
            b: 0.2,
            k: 50,
            tau_x1: 10.0,
            w_min: 0.0,
            w_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub neurons: Vec<NeuronSpec>,
    pub synapses: Vec<SynapseSpec>,
    #[serde(default)]
    pub plasticity: Option<PlasticityRule>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.neurons.iter().enumerate() {
            n.validate(i)?;
        }
        if let Some(rule) = &self.plasticity {
            rule.validate()?;
        }
        for (index, s) in self.synapses.iter().enumerate() {
            if s.delay == 0 {
                return Err(Error::ZeroDelay { index, delay: 0 });
            }
            if s.pre >= self.neurons.len() {
                return Err(Error::DanglingSynapse {
                    index,
                    reason: format!("pre neuron {} does not exist", s.pre),
                });
            }
            let Some(post) = self.neurons.get(s.post) else {
                return Err(Error::DanglingSynapse {
                    index,
                    reason: format!("post neuron {} does not exist", s.post),
                });
            };
            if s.post_compartment >= post.compartment_count() {
                return Err(Error::DanglingSynapse {
                    index,
                    reason: format!("neuron {} has no compartment {}", s.post, s.post_compartment),
                });
            }
            if !s.weight.is_finite() {
                return Err(Error::DanglingSynapse {
                    index,
                    reason: "non-finite weight".into(),
                });
            }
            if s.plastic && self.plasticity.is_none() {
                return Err(Error::InvalidRule(format!(
                    "synapse {index} is plastic but the network has no plasticity rule"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network spec serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}
