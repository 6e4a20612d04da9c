use neuroslam::snn::{
    CompartmentParams, DendriticJoin, EngineState, NetworkSpec, NeuronSpec, PlasticityRule, SynapseSpec,
};
use proptest::prelude::*;

fn relay(tag: &str) -> NeuronSpec {
    NeuronSpec::point(CompartmentParams::instantaneous(0.5), tag)
}

/// Inputs 0 and 1 feed the two dendrites of neuron 2 with delay 1.
fn two_input_net(join: DendriticJoin, value: CompartmentParams, soma_threshold: f64) -> NetworkSpec {
    let mut out = NeuronSpec::point(CompartmentParams::instantaneous(soma_threshold), "out");
    out.soma_join = join;
    out.add_dendrite(0, value, DendriticJoin::Sum, 1.0);
    out.add_dendrite(0, CompartmentParams::instantaneous(0.5), DendriticJoin::Sum, 1.0);
    NetworkSpec {
        neurons: vec![relay("a"), relay("b"), out],
        synapses: vec![SynapseSpec::new(0, 2, 1, 1.0, 1), SynapseSpec::new(1, 2, 2, 1.0, 1)],
        plasticity: None,
    }
}

fn drive(engine: &mut EngineState, a: bool, b: bool) -> Vec<usize> {
    let mut inputs = Vec::new();
    if a {
        inputs.push((0, 1.0));
    }
    if b {
        inputs.push((1, 1.0));
    }
    engine.step(&inputs)
}

#[test]
fn and_fires_only_on_coincidence_for_every_window() {
    let spec = two_input_net(DendriticJoin::And, CompartmentParams::instantaneous(0.5), 1.5);
    let steps = 4;
    for pattern in 0u32..(1 << (2 * steps)) {
        let mut engine = EngineState::compile(&spec).unwrap();
        let (mut prev_a, mut prev_b) = (false, false);
        for t in 0..=steps {
            let (a, b) = if t < steps {
                (pattern >> (2 * t) & 1 == 1, pattern >> (2 * t + 1) & 1 == 1)
            } else {
                (false, false)
            };
            let spikes = drive(&mut engine, a, b);
            assert_eq!(spikes.contains(&2), prev_a && prev_b, "pattern {pattern:#b} step {t}");
            (prev_a, prev_b) = (a, b);
        }
    }
}

#[test]
fn compiled_spec_survives_json() {
    let spec = two_input_net(DendriticJoin::Pass, CompartmentParams::leaky(0.9, 1e9), 2.0);
    assert_eq!(NetworkSpec::from_json(&spec.to_json()).unwrap(), spec);
}

proptest! {
    #[test]
    fn and_matches_coincidence(seq in prop::collection::vec((any::<bool>(), any::<bool>()), 1..64)) {
        let spec = two_input_net(DendriticJoin::And, CompartmentParams::instantaneous(0.5), 1.5);
        let mut engine = EngineState::compile(&spec).unwrap();
        let mut prev = (false, false);
        for &(a, b) in &seq {
            let spikes = drive(&mut engine, a, b);
            prop_assert_eq!(spikes.contains(&2), prev.0 && prev.1);
            prev = (a, b);
        }
    }

    #[test]
    fn pass_forwards_value_only_when_gated(
        seq in prop::collection::vec((any::<bool>(), any::<bool>()), 1..80),
        decay in 0.0f64..1.0,
        threshold in 0.5f64..4.0,
    ) {
        let spec = two_input_net(DendriticJoin::Pass, CompartmentParams::leaky(decay, 1e9), threshold);
        let mut engine = EngineState::compile(&spec).unwrap();
        let (mut value, mut prev) = (0.0, (false, false));
        for &(a, b) in &seq {
            value = value * decay + if prev.0 { 1.0 } else { 0.0 };
            let spikes = drive(&mut engine, a, b);
            prop_assert_eq!(spikes.contains(&2), prev.1 && value >= threshold);
            prev = (a, b);
        }
    }

    #[test]
    fn refractory_period_spaces_spikes(refractory in 0u32..6, steps in 10u64..60) {
        let mut soma = CompartmentParams::instantaneous(1.0);
        soma.refractory = refractory;
        let spec = NetworkSpec { neurons: vec![NeuronSpec::point(soma, "n")], ..Default::default() };
        let mut engine = EngineState::compile(&spec).unwrap();
        let fired: Vec<u64> = (0..steps).filter(|_| !engine.step(&[(0, 5.0)]).is_empty()).collect();
        for w in fired.windows(2) {
            prop_assert_eq!(w[1] - w[0], u64::from(refractory) + 1);
        }
        prop_assert_eq!(fired.first().copied(), Some(0));
    }

    #[test]
    fn leak_follows_closed_form(decay in 0.0f64..1.0, input in 0.0f64..0.5, steps in 1usize..40) {
        let spec = NetworkSpec {
            neurons: vec![NeuronSpec::point(CompartmentParams::leaky(decay, 1e9), "n")],
            ..Default::default()
        };
        let mut engine = EngineState::compile(&spec).unwrap();
        let mut v = 0.0;
        for _ in 0..steps {
            engine.step(&[(0, input)]);
            v = v * decay + input;
        }
        prop_assert!((engine.voltage(0, 0) - v).abs() < 1e-12);
    }

    #[test]
    fn delay_shifts_arrival_exactly(delay in 1u32..30) {
        let spec = NetworkSpec {
            neurons: vec![relay("a"), relay("b")],
            synapses: vec![SynapseSpec::new(0, 1, 0, 1.0, delay)],
            plasticity: None,
        };
        let mut engine = EngineState::compile(&spec).unwrap();
        for t in 0..=u64::from(delay) + 2 {
            let spikes = engine.step(if t == 0 { &[(0, 1.0)] } else { &[] });
            prop_assert_eq!(spikes.contains(&1), t == u64::from(delay));
        }
    }

    #[test]
    fn trace_saturates_on_spike_and_decays_otherwise(
        pre in prop::collection::vec(any::<bool>(), 1..100),
        tau in 1.0f64..30.0,
    ) {
        let rule = PlasticityRule { a: 0.1, b: 0.0, tau_x1: tau, ..PlasticityRule::default() };
        let spec = NetworkSpec {
            neurons: vec![relay("pre"), NeuronSpec::point(CompartmentParams::instantaneous(1e9), "post")],
            synapses: vec![SynapseSpec::new(0, 1, 0, 0.5, 1).plastic()],
            plasticity: Some(rule),
        };
        let mut engine = EngineState::compile(&spec).unwrap();
        let retain = (-1.0 / tau).exp();
        let mut x1 = 0.0;
        for &p in &pre {
            engine.step(if p { &[(0, 1.0)] } else { &[] });
            x1 = if p { 1.0 } else { x1 * retain };
            let got = engine.plastic_states().next().unwrap().x1;
            prop_assert!((got - x1).abs() < 1e-12);
        }
    }

    #[test]
    fn plastic_weights_stay_in_bounds(
        spikes in prop::collection::vec((any::<bool>(), any::<bool>()), 1..300),
        a in 0.01f64..1.0,
        b in 0.0f64..0.5,
        w0 in 0.0f64..1.0,
    ) {
        let rule = PlasticityRule { a, b, k: 7, ..PlasticityRule::default() };
        let spec = NetworkSpec {
            neurons: vec![relay("pre"), relay("post")],
            synapses: vec![SynapseSpec::new(0, 1, 0, w0, 1).plastic()],
            plasticity: Some(rule),
        };
        let mut engine = EngineState::compile(&spec).unwrap();
        for &(p, q) in &spikes {
            let mut inputs = Vec::new();
            if p { inputs.push((0, 1.0)); }
            if q { inputs.push((1, 1.0)); }
            engine.step(&inputs);
            for (_, _, w) in engine.plastic_weights() {
                prop_assert!((rule.w_min..=rule.w_max).contains(&w));
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_spikes(
        seq in prop::collection::vec((any::<bool>(), any::<bool>()), 1..60),
    ) {
        let spec = two_input_net(DendriticJoin::Sum, CompartmentParams::leaky(0.8, 1e9), 1.2);
        let copy = NetworkSpec::from_json(&spec.to_json()).unwrap();
        let (mut e1, mut e2) = (EngineState::compile(&spec).unwrap(), EngineState::compile(&copy).unwrap());
        for &(a, b) in &seq {
            prop_assert_eq!(drive(&mut e1, a, b), drive(&mut e2, a, b));
        }
    }
}
