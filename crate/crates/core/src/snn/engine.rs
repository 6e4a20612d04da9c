//! Discrete-time engine. One call to [`EngineState::step`] runs a fixed
//! sequence of phases over flattened compartment arrays:
//!
//! 1. deliver spikes whose delay elapses this step;
//! 2. add externally injected currents (somas only);
//! 3. update dendrites leaf-to-root, joining children into parents;
//! 4. update somas (leak plus integrated input);
//! 5. emit spikes at threshold, hard-reset, start refractory;
//! 6. update pre-synaptic traces;
//! 7. apply plasticity to plastic synapses.

use super::plasticity::{apply_plasticity, decay_gate, SynapseState};
use super::spec::{DendriticJoin, NetworkSpec, NeuronId, PlasticityRule};
use crate::error::Result;

#[derive(Debug, Clone)]
struct Outgoing {
    target: u32,
    delay: u32,
    weight: f64,
    /// Index into `plastic` when the synapse is plastic.
    plastic: Option<u32>,
}

#[derive(Debug, Clone)]
struct PlasticSynapse {
    pre: u32,
    post: u32,
    state: SynapseState,
}

#[derive(Debug, Clone)]
pub struct EngineState {
    // per-neuron layout
    soma_index: Vec<u32>,
    first_compartment: Vec<u32>,
    refractory_left: Vec<u32>,
    tags: Vec<String>,
    headings: Vec<Option<f64>>,

    // per-compartment (flattened, each neuron's dendrites in descending index
    // order followed by its soma, so children always precede parents)
    owner: Vec<u32>,
    parent: Vec<u32>,
    gain: Vec<f64>,
    join: Vec<DendriticJoin>,
    children: Vec<(u32, u32)>,
    v_decay: Vec<f64>,
    i_decay: Vec<f64>,
    threshold: Vec<f64>,
    bias: Vec<f64>,
    refractory: Vec<u32>,
    current: Vec<f64>,
    voltage: Vec<f64>,
    child_list: Vec<u32>,
    /// Map from (neuron, local compartment index) to flat index.
    local_to_flat: Vec<u32>,

    // synapses grouped by pre-synaptic neuron (CSR)
    out_start: Vec<u32>,
    outgoing: Vec<Outgoing>,
    plastic: Vec<PlasticSynapse>,
    rule: Option<PlasticityRule>,
    trace_retain: f64,

    // delay ring
    ring_input: Vec<Vec<f64>>,
    ring_arrived: Vec<Vec<bool>>,

    step: u64,
    spiked: Vec<bool>,
    scratch_join: Vec<f64>,
    scratch_above: Vec<bool>,
    scratch_arrived: Vec<bool>,
}

const NONE: u32 = u32::MAX;

impl EngineState {
    pub fn compile(spec: &NetworkSpec) -> Result<Self> {
        spec.validate()?;

        let n = spec.neurons.len();
        let total: usize = spec.neurons.iter().map(|n| n.compartment_count()).sum();
        let mut first_compartment = Vec::with_capacity(n + 1);
        let mut soma_index = Vec::with_capacity(n);
        let mut local_to_flat = vec![0u32; total];

        let mut owner = Vec::with_capacity(total);
        let mut parent = Vec::with_capacity(total);
        let mut gain = Vec::with_capacity(total);
        let mut join = Vec::with_capacity(total);
        let mut v_decay = Vec::with_capacity(total);
        let mut i_decay = Vec::with_capacity(total);
        let mut threshold = Vec::with_capacity(total);
        let mut bias = Vec::with_capacity(total);
        let mut refractory = Vec::with_capacity(total);

        let mut base = 0usize;
        for (id, neuron) in spec.neurons.iter().enumerate() {
            first_compartment.push(base as u32);
            let count = neuron.compartment_count();
            // local index c sits at flat base + (count - 1 - c)
            for c in (0..count).rev() {
                let flat = base + (count - 1 - c);
                local_to_flat[base + c] = flat as u32;
                let p = neuron.params_of(c);
                owner.push(id as u32);
                if c == 0 {
                    parent.push(NONE);
                    gain.push(1.0);
                } else {
                    let d = &neuron.dendrites[c - 1];
                    parent.push((base + (count - 1 - d.parent)) as u32);
                    gain.push(d.gain);
                }
                join.push(neuron.join_of(c));
                v_decay.push(p.voltage_decay);
                i_decay.push(p.current_decay);
                threshold.push(p.threshold);
                bias.push(p.bias);
                refractory.push(p.refractory);
            }
            soma_index.push((base + count - 1) as u32);
            base += count;
        }
        first_compartment.push(base as u32);

        // child lists in ascending local order (value before gate for PASS)
        let mut children = vec![(0u32, 0u32); total];
        let mut child_list = Vec::with_capacity(total);
        for (id, neuron) in spec.neurons.iter().enumerate() {
            let b = first_compartment[id] as usize;
            for (c, kids) in neuron.children().into_iter().enumerate() {
                let flat = local_to_flat[b + c] as usize;
                let start = child_list.len() as u32;
                child_list.extend(kids.iter().map(|&k| local_to_flat[b + k]));
                children[flat] = (start, child_list.len() as u32);
            }
        }

        let mut order: Vec<usize> = (0..spec.synapses.len()).collect();
        order.sort_by_key(|&i| spec.synapses[i].pre);
        let mut out_start = vec![0u32; n + 1];
        let mut outgoing = Vec::with_capacity(order.len());
        let mut plastic = Vec::new();
        let mut max_delay = 1u32;
        for &i in &order {
            let s = &spec.synapses[i];
            out_start[s.pre + 1] += 1;
            max_delay = max_delay.max(s.delay);
            let target = local_to_flat[first_compartment[s.post] as usize + s.post_compartment];
            let plastic_index = if s.plastic {
                plastic.push(PlasticSynapse {
                    pre: s.pre as u32,
                    post: s.post as u32,
                    state: SynapseState::new(s.weight),
                });
                Some((plastic.len() - 1) as u32)
            } else {
                None
            };
            outgoing.push(Outgoing {
                target,
                delay: s.delay,
                weight: s.weight,
                plastic: plastic_index,
            });
        }
        for i in 0..n {
            out_start[i + 1] += out_start[i];
        }

        let slots = max_delay as usize + 1;
        let trace_retain = spec.plasticity.map(|r| (-1.0 / r.tau_x1).exp()).unwrap_or(0.0);

        Ok(Self {
            soma_index,
            first_compartment,
            refractory_left: vec![0; n],
            tags: spec.neurons.iter().map(|n| n.population_tag.clone()).collect(),
            headings: spec.neurons.iter().map(|n| n.preferred_heading).collect(),
            owner,
            parent,
            gain,
            join,
            children,
            v_decay,
            i_decay,
            threshold,
            bias,
            refractory,
            current: vec![0.0; total],
            voltage: vec![0.0; total],
            child_list,
            local_to_flat,
            out_start,
            outgoing,
            plastic,
            rule: spec.plasticity,
            trace_retain,
            ring_input: vec![vec![0.0; total]; slots],
            ring_arrived: vec![vec![false; total]; slots],
            step: 0,
            spiked: vec![false; n],
            scratch_join: vec![0.0; total],
            scratch_above: vec![false; total],
            scratch_arrived: vec![false; total],
        })
    }

    pub fn neuron_count(&self) -> usize {
        self.soma_index.len()
    }

    pub fn compartment_count(&self) -> usize {
        self.voltage.len()
    }

    pub fn synapse_count(&self) -> usize {
        self.outgoing.len()
    }

    /// Number of steps executed so far.
    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn preferred_heading(&self, neuron: NeuronId) -> Option<f64> {
        self.headings[neuron]
    }

    fn flat(&self, neuron: NeuronId, compartment: usize) -> usize {
        self.local_to_flat[self.first_compartment[neuron] as usize + compartment] as usize
    }

    pub fn voltage(&self, neuron: NeuronId, compartment: usize) -> f64 {
        self.voltage[self.flat(neuron, compartment)]
    }

    pub fn set_voltage(&mut self, neuron: NeuronId, compartment: usize, v: f64) {
        let f = self.flat(neuron, compartment);
        self.voltage[f] = v;
    }

    /// Current weights of plastic synapses as `(pre, post, weight)` in compile order.
    pub fn plastic_weights(&self) -> Vec<(NeuronId, NeuronId, f64)> {
        self.plastic
            .iter()
            .map(|p| (p.pre as usize, p.post as usize, p.state.w))
            .collect()
    }

    pub fn plastic_states(&self) -> impl Iterator<Item = &SynapseState> {
        self.plastic.iter().map(|p| &p.state)
    }

    /// Advances one step and returns the ids of neurons that spiked, ascending.
    ///
    /// # Panics
    /// If an input names a neuron that does not exist.
    pub fn step(&mut self, external_inputs: &[(NeuronId, f64)]) -> Vec<NeuronId> {
        let slots = self.ring_input.len();
        let slot = (self.step % slots as u64) as usize;

        // 1. delivery
        let mut syn_in = std::mem::take(&mut self.ring_input[slot]);
        std::mem::swap(&mut self.scratch_arrived, &mut self.ring_arrived[slot]);
        let arrived = std::mem::take(&mut self.scratch_arrived);

        // 2. external currents
        for &(id, amount) in external_inputs {
            let soma = self.soma_index[id] as usize;
            syn_in[soma] += amount;
        }

        // 3-5. compartments in flat order: children precede parents
        self.spiked.iter_mut().for_each(|s| *s = false);
        let join_in = &mut self.scratch_join;
        join_in.iter_mut().for_each(|x| *x = 0.0);
        for c in 0..self.voltage.len() {
            let (start, end) = self.children[c];
            if end > start {
                let kids = &self.child_list[start as usize..end as usize];
                join_in[c] = match self.join[c] {
                    DendriticJoin::Sum => kids
                        .iter()
                        .map(|&k| self.gain[k as usize] * self.voltage[k as usize])
                        .sum(),
                    DendriticJoin::And => {
                        if kids.iter().all(|&k| self.scratch_above[k as usize]) {
                            kids.iter()
                                .map(|&k| self.gain[k as usize] * self.voltage[k as usize])
                                .sum()
                        } else {
                            0.0
                        }
                    }
                    DendriticJoin::Pass => {
                        let (value, gate) = (kids[0] as usize, kids[1] as usize);
                        if arrived[gate] {
                            self.gain[value] * self.voltage[value]
                        } else {
                            0.0
                        }
                    }
                };
            }

            let input = syn_in[c] + join_in[c];
            let is_soma = self.parent[c] == NONE;
            if is_soma {
                let id = self.owner[c] as usize;
                if self.refractory_left[id] > 0 {
                    self.refractory_left[id] -= 1;
                    self.current[c] = self.current[c] * self.i_decay[c] + input;
                    self.voltage[c] = 0.0;
                    continue;
                }
            }
            self.current[c] = self.current[c] * self.i_decay[c] + input;
            self.voltage[c] = self.voltage[c] * self.v_decay[c] + self.current[c] + self.bias[c];
            let above = self.voltage[c] >= self.threshold[c];
            self.scratch_above[c] = above;
            if is_soma && above {
                let id = self.owner[c] as usize;
                self.spiked[id] = true;
                self.voltage[c] = 0.0;
                self.refractory_left[id] = self.refractory[c];
            }
        }

        syn_in.iter_mut().for_each(|x| *x = 0.0);
        self.ring_input[slot] = syn_in;
        let mut arrived = arrived;
        arrived.iter_mut().for_each(|x| *x = false);
        self.scratch_arrived = arrived;

        // schedule deliveries of this step's spikes
        let mut spikes = Vec::new();
        for id in 0..self.spiked.len() {
            if !self.spiked[id] {
                continue;
            }
            spikes.push(id);
            let (s, e) = (self.out_start[id] as usize, self.out_start[id + 1] as usize);
            for o in &self.outgoing[s..e] {
                let weight = match o.plastic {
                    Some(p) => self.plastic[p as usize].state.w,
                    None => o.weight,
                };
                let target_slot = ((self.step + u64::from(o.delay)) % slots as u64) as usize;
                self.ring_input[target_slot][o.target as usize] += weight;
                self.ring_arrived[target_slot][o.target as usize] = true;
            }
        }

        // 6-7. traces, then plasticity
        if let Some(rule) = self.rule {
            let u_k = decay_gate(self.step, rule.k);
            for p in &mut self.plastic {
                p.state.update_trace(self.trace_retain, self.spiked[p.pre as usize]);
                p.state = apply_plasticity(p.state, &rule, self.spiked[p.post as usize], u_k);
            }
        }

        self.step += 1;
        spikes
    }
}
