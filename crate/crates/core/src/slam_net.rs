//! Wiring of the SLAM connectome.
//!
//! Populations are allocated up front by [`SlamPopulations::allocate`]; each
//! builder is a pure function of the config and the allocation that returns
//! a [`Fragment`] owning the neurons of its sub-network plus the synapses
//! that end on them. [`assemble`] merges the fragments and the encoder input
//! ports into one [`NetworkSpec`].
//!
//! Timing: sensory, inverse-sensory and place spikes are injected on even
//! steps only. Border cells then fire on odd steps and drive map neurons on
//! even steps ("teacher" spikes), while place input recalls learned map
//! neurons on odd steps. Map-to-likelihood synapses have an even delay so
//! likelihood coincidences only ever see recalled map activity.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::codec::{DistanceLevels, SpeedEncoder, LEVELS};
use crate::error::{Error, Result};
use crate::snn::{CompartmentParams, DendriticJoin, NetworkSpec, NeuronId, NeuronSpec, PlasticityRule, SynapseSpec};

/// Head-direction ring geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingRing {
    pub n_bins: usize,
    pub resolution: f64,
    pub population: Range<NeuronId>,
}

impl HeadingRing {
    pub fn id(&self, bin: usize) -> NeuronId {
        self.population.start + bin % self.n_bins
    }

    pub fn heading(&self, bin: usize) -> f64 {
        bin as f64 * self.resolution
    }

    /// Bin whose preferred heading is nearest `heading`.
    pub fn bin_of(&self, heading: f64) -> usize {
        (heading.rem_euclid(360.0) / self.resolution).round() as usize % self.n_bins
    }

    /// `bin + offset` on the ring.
    pub fn offset(&self, bin: usize, offset: isize) -> usize {
        (bin as isize + offset).rem_euclid(self.n_bins as isize) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttractorParams {
    /// Half-width of the local excitation kernel, in bins.
    pub excitation_width: usize,
    pub excitation: f64,
    pub global_inhibition: f64,
    pub threshold: f64,
    pub transition_weight: f64,
    /// Number of bins injected to start the bump.
    pub seed_width: usize,
}

impl Default for AttractorParams {
    fn default() -> Self {
        Self {
            excitation_width: 1,
            excitation: 1.0,
            global_inhibition: 0.2,
            threshold: 1.3,
            transition_weight: 1.2,
            seed_width: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RftParams {
    /// Coincident (HD, sensory) pairs needed for a border spike.
    pub coincidences: usize,
}

impl Default for RftParams {
    fn default() -> Self {
        Self { coincidences: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmParams {
    pub rule: PlasticityRule,
    pub initial_weight: f64,
    pub threshold: f64,
    pub teacher_weight: f64,
    /// Delay-1 inhibition: teacher spikes silence other levels' recall.
    pub lateral_inhibition: f64,
    /// Delay-2 inhibition: recall competes with recall, the stronger weight wins.
    pub recall_inhibition: f64,
    /// Teacher spikes only reach the map while the explore port is active.
    pub teach_while_exploring: bool,
}

impl Default for DmParams {
    fn default() -> Self {
        Self {
            rule: PlasticityRule {
                a: 0.04,
                ..PlasticityRule::default()
            },
            initial_weight: 0.0,
            threshold: 0.55,
            teacher_weight: 1.4,
            lateral_inhibition: 0.6,
            recall_inhibition: 0.3,
            teach_while_exploring: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OlParams {
    pub voltage_decay: f64,
    pub threshold: f64,
    pub inhibition_gain: f64,
}

impl Default for OlParams {
    fn default() -> Self {
        Self {
            voltage_decay: 0.95,
            threshold: 3.0,
            inhibition_gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiParams {
    pub value_decay: f64,
    pub voltage_decay: f64,
    pub threshold: f64,
    pub center_weight: f64,
    pub neighbor_weight: f64,
    pub global_inhibition: f64,
    /// Leak of the HD dendrite that integrates Bayesian feedback.
    pub feedback_decay: f64,
    /// Inhibition from the explore port onto each value compartment.
    pub explore_inhibition: f64,
}

impl Default for BiParams {
    fn default() -> Self {
        Self {
            value_decay: 0.8,
            voltage_decay: 0.0,
            threshold: 1.0,
            center_weight: 0.0,
            neighbor_weight: 0.6,
            global_inhibition: 0.0,
            feedback_decay: 0.0,
            explore_inhibition: 5.0,
        }
    }
}

/// Every builder parameter. All keys are optional in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlamConfig {
    pub n_bins: usize,
    pub resolution: f64,
    /// Camera half-width and likelihood window, in bins.
    pub window_width: usize,
    pub place_cells: usize,
    pub levels: DistanceLevels,
    pub speed: SpeedEncoder,
    pub attractor: AttractorParams,
    pub rft: RftParams,
    pub dm: DmParams,
    pub ol: OlParams,
    pub bi: BiParams,
    pub connect_ol_bi: bool,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            n_bins: 72,
            resolution: 5.0,
            window_width: 2,
            place_cells: 1,
            levels: DistanceLevels::default(),
            speed: SpeedEncoder {
                omega_max: 250.0,
                rate_max: 100.0,
            },
            attractor: AttractorParams::default(),
            rft: RftParams::default(),
            dm: DmParams::default(),
            ol: OlParams::default(),
            bi: BiParams::default(),
            connect_ol_bi: true,
        }
    }
}

impl SlamConfig {
    /// Four-bin network for exhaustive tests.
    pub fn toy() -> Self {
        Self {
            n_bins: 4,
            resolution: 90.0,
            window_width: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_bins < 3 {
            return cfg(format!("n_bins {} must be at least 3", self.n_bins));
        }
        if (self.n_bins as f64 * self.resolution - 360.0).abs() > 1e-9 {
            return cfg(format!(
                "{} bins of {} degrees do not tile 360 degrees",
                self.n_bins, self.resolution
            ));
        }
        if 2 * self.attractor.excitation_width >= self.n_bins {
            return cfg(format!(
                "excitation width {} must be below n_bins/2",
                self.attractor.excitation_width
            ));
        }
        if 2 * self.window_width >= self.n_bins {
            return cfg(format!("window width {} must be below n_bins/2", self.window_width));
        }
        if self.place_cells == 0 {
            return cfg("at least one place cell is required".into());
        }
        if self.attractor.seed_width == 0 || self.attractor.seed_width > 10 {
            return cfg("seed_width must be in 1..=10".into());
        }
        if self.rft.coincidences == 0 {
            return cfg("rft.coincidences must be at least 1".into());
        }
        if !(self.speed.omega_max > 0.0 && self.speed.rate_max > 0.0) {
            return cfg("speed encoder omega_max and rate_max must be positive".into());
        }
        self.levels.validate()?;
        self.dm.rule.validate()
    }

    /// Camera offsets `-window_width..=window_width`.
    pub fn offsets(&self) -> impl Iterator<Item = isize> + Clone {
        let w = self.window_width as isize;
        -w..=w
    }
}

/// Id ranges of every population. Indexed populations are laid out
/// bin-major: `(bin, level)` is at `start + bin * 3 + level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlamPopulations {
    pub hd: HeadingRing,
    pub transition_cw: Range<NeuronId>,
    pub transition_ccw: Range<NeuronId>,
    pub speed_cw: Range<NeuronId>,
    pub speed_ccw: Range<NeuronId>,
    pub sensory: Range<NeuronId>,
    pub inverse_sensory: Range<NeuronId>,
    pub border: Range<NeuronId>,
    pub place: Range<NeuronId>,
    pub map: Range<NeuronId>,
    pub likelihood: Range<NeuronId>,
    pub bayes: Range<NeuronId>,
    /// Single input port held active while the current place is unexplored.
    pub explore: Range<NeuronId>,
    pub total: usize,
}

impl SlamPopulations {
    pub fn allocate(config: &SlamConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_bins;
        let mut next = 0;
        let mut take = |len: usize| {
            let r = next..next + len;
            next += len;
            r
        };
        let hd = take(n);
        let transition_cw = take(n);
        let transition_ccw = take(n);
        let speed_cw = take(1);
        let speed_ccw = take(1);
        let sensory = take(n * LEVELS);
        let inverse_sensory = take(n * LEVELS);
        let border = take(n * LEVELS);
        let place = take(config.place_cells);
        let map = take(config.place_cells * n * LEVELS);
        let likelihood = take(n);
        let bayes = take(n);
        let explore = take(1);
        Ok(Self {
            hd: HeadingRing {
                n_bins: n,
                resolution: config.resolution,
                population: hd,
            },
            transition_cw,
            transition_ccw,
            speed_cw,
            speed_ccw,
            sensory,
            inverse_sensory,
            border,
            place,
            map,
            likelihood,
            bayes,
            explore,
            total: next,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.hd.n_bins
    }

    pub fn sensory_id(&self, bin: usize, level: usize) -> NeuronId {
        self.sensory.start + bin * LEVELS + level
    }

    pub fn inverse_id(&self, bin: usize, level: usize) -> NeuronId {
        self.inverse_sensory.start + bin * LEVELS + level
    }

    pub fn border_id(&self, bin: usize, level: usize) -> NeuronId {
        self.border.start + bin * LEVELS + level
    }

    pub fn map_id(&self, place: usize, bin: usize, level: usize) -> NeuronId {
        self.map.start + (place * self.n_bins() + bin) * LEVELS + level
    }

    /// Inverse of [`map_id`](Self::map_id).
    pub fn map_index(&self, id: NeuronId) -> Option<(usize, usize, usize)> {
        if !self.map.contains(&id) {
            return None;
        }
        let i = id - self.map.start;
        let per_place = self.n_bins() * LEVELS;
        Some((i / per_place, (i % per_place) / LEVELS, i % LEVELS))
    }

    pub fn place_id(&self, place: usize) -> NeuronId {
        self.place.start + place
    }

    pub fn likelihood_id(&self, bin: usize) -> NeuronId {
        self.likelihood.start + bin
    }

    pub fn bayes_id(&self, bin: usize) -> NeuronId {
        self.bayes.start + bin
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("populations serialise")
    }
}

/// Neurons owned by one sub-network plus the synapses ending on them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Fragment {
    pub neurons: Vec<(NeuronId, NeuronSpec)>,
    pub synapses: Vec<SynapseSpec>,
}

/// Compartment of every HD neuron that integrates Bayesian feedback.
pub const HD_FEEDBACK: usize = 1;

/// Input compartment that is above threshold exactly on steps where one of
/// its unit-weight synapses delivers.
fn relay() -> CompartmentParams {
    CompartmentParams::instantaneous(0.5)
}

fn input_port(tag: &str) -> NeuronSpec {
    NeuronSpec::point(CompartmentParams::instantaneous(0.5), tag)
}

/// Adds an AND dendrite with two relay children; returns
/// `(and, first_child, second_child)`.
fn and_pair(neuron: &mut NeuronSpec, parent: usize, gain: f64) -> (usize, usize, usize) {
    let and = neuron.add_dendrite(parent, CompartmentParams::instantaneous(1.0), DendriticJoin::And, gain);
    let a = neuron.add_dendrite(and, relay(), DendriticJoin::Sum, 1.0);
    let b = neuron.add_dendrite(and, relay(), DendriticJoin::Sum, 1.0);
    (and, a, b)
}

/// HD ring with recurrent local excitation and global inhibition, plus the
/// clockwise and counter-clockwise transition populations.
pub fn build_hd(config: &SlamConfig, pops: &SlamPopulations) -> Result<Fragment> {
    let p = &config.attractor;
    let ring = &pops.hd;
    let n = ring.n_bins;
    if 2 * p.excitation_width >= n {
        return Err(Error::Config(format!(
            "excitation width {} leaves no room for a bump on {n} bins",
            p.excitation_width
        )));
    }
    let mut f = Fragment::default();
    for b in 0..n {
        let mut neuron =
            NeuronSpec::point(CompartmentParams::instantaneous(p.threshold), "hd").with_heading(ring.heading(b));
        neuron.add_dendrite(
            0,
            CompartmentParams::leaky(config.bi.feedback_decay, 1.0e6),
            DendriticJoin::Sum,
            1.0,
        );
        f.neurons.push((ring.id(b), neuron));
    }
    for post in 0..n {
        for pre in 0..n {
            let d = pre.abs_diff(post).min(n - pre.abs_diff(post));
            let mut w = -p.global_inhibition;
            if d <= p.excitation_width {
                w += p.excitation;
            }
            f.synapses.push(SynapseSpec::new(ring.id(pre), ring.id(post), 0, w, 1));
        }
    }
    for (range, speed, tag, shift) in [
        (&pops.transition_cw, pops.speed_cw.start, "transition_cw", -1isize),
        (&pops.transition_ccw, pops.speed_ccw.start, "transition_ccw", 1),
    ] {
        for b in 0..n {
            let id = range.start + b;
            let mut neuron =
                NeuronSpec::point(CompartmentParams::instantaneous(1.5), tag).with_heading(ring.heading(b));
            neuron.soma_join = DendriticJoin::And;
            let from_speed = neuron.add_dendrite(0, relay(), DendriticJoin::Sum, 1.0);
            let from_hd = neuron.add_dendrite(0, relay(), DendriticJoin::Sum, 1.0);
            f.neurons.push((id, neuron));
            f.synapses.push(SynapseSpec::new(speed, id, from_speed, 1.0, 1));
            f.synapses.push(SynapseSpec::new(ring.id(b), id, from_hd, 1.0, 1));
            f.synapses.push(SynapseSpec::new(
                id,
                ring.id(ring.offset(b, shift)),
                0,
                p.transition_weight,
                1,
            ));
        }
    }
    Ok(f)
}

/// Border cell `(b, l)` sums AND coincidences of HD cell `b - j` with the
/// egocentric sensory neuron `(j, l)` over camera offsets `j`.
pub fn build_rft(config: &SlamConfig, pops: &SlamPopulations) -> Result<Fragment> {
    let ring = &pops.hd;
    let mut f = Fragment::default();
    // each AND contributes 1.0 (two unit children at gain 0.5)
    let threshold = config.rft.coincidences as f64 - 0.5;
    for b in 0..ring.n_bins {
        for l in 0..LEVELS {
            let id = pops.border_id(b, l);
            let mut neuron =
                NeuronSpec::point(CompartmentParams::instantaneous(threshold), "border").with_heading(ring.heading(b));
            let mut wiring = Vec::new();
            for j in config.offsets() {
                let (_, hd_child, sens_child) = and_pair(&mut neuron, 0, 0.5);
                let cam = ring.offset(0, j);
                wiring.push(SynapseSpec::new(ring.id(ring.offset(b, -j)), id, hd_child, 1.0, 1));
                wiring.push(SynapseSpec::new(pops.sensory_id(cam, l), id, sens_child, 1.0, 1));
            }
            f.neurons.push((id, neuron));
            f.synapses.extend(wiring);
        }
    }
    Ok(f)
}

/// Map neurons with plastic place-cell input, border teaching input and
/// lateral inhibition across levels within a bin.
pub fn build_dm(config: &SlamConfig, pops: &SlamPopulations) -> Result<Fragment> {
    let p = &config.dm;
    p.rule.validate()?;
    let ring = &pops.hd;
    let mut f = Fragment::default();
    for place in 0..pops.place.len() {
        for b in 0..ring.n_bins {
            for l in 0..LEVELS {
                let id = pops.map_id(place, b, l);
                let mut neuron = NeuronSpec::point(CompartmentParams::instantaneous(p.threshold), "map")
                    .with_heading(ring.heading(b));
                f.synapses
                    .push(SynapseSpec::new(pops.place_id(place), id, 0, p.initial_weight, 1).plastic());
                if p.teach_while_exploring {
                    let (_, border, explore) = and_pair(&mut neuron, 0, p.teacher_weight / 2.0);
                    f.synapses
                        .push(SynapseSpec::new(pops.border_id(b, l), id, border, 1.0, 1));
                    f.synapses
                        .push(SynapseSpec::new(pops.explore.start, id, explore, 1.0, 1));
                } else {
                    f.synapses
                        .push(SynapseSpec::new(pops.border_id(b, l), id, 0, p.teacher_weight, 1));
                }
                f.neurons.push((id, neuron));
                for other in (0..LEVELS).filter(|&o| o != l) {
                    let pre = pops.map_id(place, b, other);
                    f.synapses.push(SynapseSpec::new(pre, id, 0, -p.lateral_inhibition, 1));
                    f.synapses.push(SynapseSpec::new(pre, id, 0, -p.recall_inhibition, 2));
                }
            }
        }
    }
    Ok(f)
}

/// Likelihood neuron `b` scores the egocentric observation against the map
/// rotated to heading `b`: an excitatory branch of (sensory `(j,l)`, map
/// `(b+j,l)`) coincidences and an inhibitory branch of (inverse `(j,l)`,
/// map `(b+j,l)`) coincidences.
pub fn build_ol(config: &SlamConfig, pops: &SlamPopulations) -> Result<Fragment> {
    let ring = &pops.hd;
    if 2 * config.window_width >= ring.n_bins {
        return Err(Error::Config(format!(
            "window width {} must be below n_bins/2",
            config.window_width
        )));
    }
    let p = &config.ol;
    let mut f = Fragment::default();
    for b in 0..ring.n_bins {
        let id = pops.likelihood_id(b);
        let soma = CompartmentParams::leaky(p.voltage_decay, p.threshold);
        let mut neuron = NeuronSpec::point(soma, "likelihood").with_heading(ring.heading(b));
        let branch = CompartmentParams::instantaneous(1.0);
        let excite = neuron.add_dendrite(0, branch, DendriticJoin::Sum, 1.0);
        let inhibit = neuron.add_dendrite(0, branch, DendriticJoin::Sum, -p.inhibition_gain);
        let mut wiring = Vec::new();
        for j in config.offsets() {
            let cam = ring.offset(0, j);
            let target = ring.offset(b, j);
            for l in 0..LEVELS {
                for (branch, obs) in [(excite, pops.sensory_id(cam, l)), (inhibit, pops.inverse_id(cam, l))] {
                    let (_, obs_child, map_child) = and_pair(&mut neuron, branch, 0.5);
                    wiring.push(SynapseSpec::new(obs, id, obs_child, 1.0, 1));
                    for place in 0..pops.place.len() {
                        wiring.push(SynapseSpec::new(pops.map_id(place, target, l), id, map_child, 1.0, 2));
                    }
                }
            }
        }
        f.neurons.push((id, neuron));
        f.synapses.extend(wiring);
    }
    Ok(f)
}

/// Bayesian neuron `b`: a PASS join forwards its likelihood-driven value
/// compartment on steps where HD cell `b` spikes. Output excites the
/// feedback dendrites of the neighbouring HD cells, which decides which edge
/// of a widened bump survives. The explore port silences the value
/// compartments until the current place has been mapped.
pub fn build_bi(config: &SlamConfig, pops: &SlamPopulations) -> Result<Fragment> {
    let ring = &pops.hd;
    let p = &config.bi;
    let n = ring.n_bins;
    let mut f = Fragment::default();
    for b in 0..n {
        let id = pops.bayes_id(b);
        let mut neuron = NeuronSpec::point(CompartmentParams::leaky(p.voltage_decay, p.threshold), "bayes")
            .with_heading(ring.heading(b));
        neuron.soma_join = DendriticJoin::Pass;
        let value = neuron.add_dendrite(0, CompartmentParams::leaky(p.value_decay, 1.0), DendriticJoin::Sum, 1.0);
        let gate = neuron.add_dendrite(0, relay(), DendriticJoin::Sum, 1.0);
        f.neurons.push((id, neuron));
        if config.connect_ol_bi {
            f.synapses
                .push(SynapseSpec::new(pops.likelihood_id(b), id, value, 1.0, 1));
        }
        f.synapses.push(SynapseSpec::new(ring.id(b), id, gate, 1.0, 1));
        f.synapses.push(SynapseSpec::new(
            pops.explore.start,
            id,
            value,
            -p.explore_inhibition,
            1,
        ));
    }
    for post in 0..n {
        for pre in 0..n {
            let d = pre.abs_diff(post).min(n - pre.abs_diff(post));
            let w = match d {
                0 => p.center_weight,
                1 => p.neighbor_weight,
                _ => 0.0,
            } - p.global_inhibition;
            if w != 0.0 {
                f.synapses
                    .push(SynapseSpec::new(pops.bayes_id(pre), ring.id(post), HD_FEEDBACK, w, 1));
            }
        }
    }
    Ok(f)
}

/// Size summary emitted next to an assembled network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSummary {
    pub neurons: usize,
    pub compartments: usize,
    pub synapses: usize,
    pub plastic_synapses: usize,
    pub populations: SlamPopulations,
}

/// Builds the whole network: encoder input ports plus all five sub-networks.
pub fn assemble(config: &SlamConfig) -> Result<(NetworkSpec, SlamPopulations)> {
    let pops = SlamPopulations::allocate(config)?;
    let mut ports = Fragment::default();
    let port_sets: [(&Range<NeuronId>, &str); 6] = [
        (&pops.speed_cw, "speed_cw"),
        (&pops.speed_ccw, "speed_ccw"),
        (&pops.sensory, "sensory"),
        (&pops.inverse_sensory, "inverse_sensory"),
        (&pops.place, "place"),
        (&pops.explore, "explore"),
    ];
    for (range, tag) in port_sets {
        for id in range.clone() {
            let mut neuron = input_port(tag);
            if tag == "sensory" || tag == "inverse_sensory" {
                let bin = (id - range.start) / LEVELS;
                neuron = neuron.with_heading(pops.hd.heading(bin));
            }
            ports.neurons.push((id, neuron));
        }
    }
    let fragments = [
        ports,
        build_hd(config, &pops)?,
        build_rft(config, &pops)?,
        build_dm(config, &pops)?,
        build_ol(config, &pops)?,
        build_bi(config, &pops)?,
    ];
    let mut slots: Vec<Option<NeuronSpec>> = vec![None; pops.total];
    let mut synapses = Vec::new();
    for frag in fragments {
        for (id, neuron) in frag.neurons {
            if slots[id].replace(neuron).is_some() {
                return Err(Error::Config(format!("neuron {id} built twice")));
            }
        }
        synapses.extend(frag.synapses);
    }
    let neurons = slots
        .into_iter()
        .enumerate()
        .map(|(id, n)| n.ok_or_else(|| Error::Config(format!("neuron {id} never built"))))
        .collect::<Result<Vec<_>>>()?;
    let spec = NetworkSpec {
        neurons,
        synapses,
        plasticity: Some(config.dm.rule),
    };
    spec.validate()?;
    Ok((spec, pops))
}

pub fn summary(spec: &NetworkSpec, pops: &SlamPopulations) -> NetworkSummary {
    NetworkSummary {
        neurons: spec.neurons.len(),
        compartments: spec.neurons.iter().map(NeuronSpec::compartment_count).sum(),
        synapses: spec.synapses.len(),
        plastic_synapses: spec.synapses.iter().filter(|s| s.plastic).count(),
        populations: pops.clone(),
    }
}
