use neuroslam::codec::{angle_diff, PhaseAccumulator, LEVELS};
use neuroslam::slam_net::{assemble, build_bi, build_rft, Fragment, SlamConfig, SlamPopulations, HD_FEEDBACK};
use neuroslam::snn::{CompartmentParams, EngineState, NetworkSpec, NeuronId, NeuronSpec};
use proptest::prelude::*;

/// Runs `fragment` alone: every neuron it does not build becomes an input
/// port, and synapses leaving the fragment are dropped.
fn isolate(config: &SlamConfig, pops: &SlamPopulations, fragment: Fragment) -> EngineState {
    let mut neurons: Vec<NeuronSpec> = (0..pops.total)
        .map(|_| NeuronSpec::point(CompartmentParams::instantaneous(0.5), "port"))
        .collect();
    let mut built = vec![false; pops.total];
    for (id, neuron) in fragment.neurons {
        neurons[id] = neuron;
        built[id] = true;
    }
    let synapses = fragment.synapses.into_iter().filter(|s| built[s.post]).collect();
    let spec = NetworkSpec {
        neurons,
        synapses,
        plasticity: Some(config.dm.rule),
    };
    EngineState::compile(&spec).unwrap()
}

fn seed_bump(config: &SlamConfig, pops: &SlamPopulations, start: usize) -> Vec<(NeuronId, f64)> {
    let ring = &pops.hd;
    let half = (config.attractor.seed_width as isize - 1) / 2;
    (0..config.attractor.seed_width as isize)
        .map(|k| (ring.id(ring.offset(start, k - half)), 2.0 * config.attractor.threshold))
        .collect()
}

fn bump_centre(pops: &SlamPopulations, spikes: &[NeuronId]) -> Option<f64> {
    let ring = &pops.hd;
    let (mut x, mut y, mut n) = (0.0, 0.0, 0);
    for &id in spikes.iter().filter(|id| ring.population.contains(id)) {
        let a = ring.heading(id - ring.population.start).to_radians();
        x += a.cos();
        y += a.sin();
        n += 1;
    }
    (n > 0).then(|| y.atan2(x).to_degrees())
}

/// Unwrapped bump displacement in bins after driving one speed port at
/// `rate` Hz for `steps` steps.
fn shift_after(rate: f64, ccw: bool, steps: u64) -> f64 {
    let config = SlamConfig::default();
    let (spec, pops) = assemble(&config).unwrap();
    let mut engine = EngineState::compile(&spec).unwrap();
    let port = if ccw { pops.speed_ccw.start } else { pops.speed_cw.start };
    let mut acc = PhaseAccumulator::default();
    let start = 10;
    let mut last = pops.hd.heading(start);
    let mut travelled = 0.0;
    for t in 0..steps + 20 {
        let mut inputs = if t == 0 {
            seed_bump(&config, &pops, start)
        } else {
            Vec::new()
        };
        if t < steps && acc.tick(rate, 0.01) {
            inputs.push((port, 1.0));
        }
        let spikes = engine.step(&inputs);
        let centre = bump_centre(&pops, &spikes).expect("bump survives");
        travelled += angle_diff(centre, last);
        last = centre;
    }
    travelled / config.resolution
}

#[test]
fn bump_holds_without_input() {
    let config = SlamConfig::default();
    let (spec, pops) = assemble(&config).unwrap();
    for start in [0, 17, 40, 71] {
        let mut engine = EngineState::compile(&spec).unwrap();
        let kick = seed_bump(&config, &pops, start);
        for t in 0..2000 {
            let spikes = engine.step(if t == 0 { &kick } else { &[] });
            let centre = bump_centre(&pops, &spikes).expect("bump survives");
            assert!(angle_diff(centre, pops.hd.heading(start)).abs() <= config.resolution);
        }
    }
}

#[test]
fn speed_spikes_shift_the_bump_monotonically() {
    let rates = [5.0, 10.0, 20.0, 40.0];
    let ccw: Vec<f64> = rates.iter().map(|&r| shift_after(r, true, 200)).collect();
    let cw: Vec<f64> = rates.iter().map(|&r| shift_after(r, false, 200)).collect();
    for w in ccw.windows(2) {
        assert!(w[1] > w[0], "ccw shifts {ccw:?}");
    }
    for w in cw.windows(2) {
        assert!(w[1] < w[0], "cw shifts {cw:?}");
    }
    assert!(ccw[0] > 0.0 && cw[0] < 0.0);
    assert_eq!(shift_after(0.0, true, 200), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn border_cells_count_coincidences(
        centre in 0usize..72,
        width in 1usize..=3,
        scan in prop::collection::vec(prop::option::of(0usize..LEVELS), 5),
        coincidences in 1usize..=3,
    ) {
        let mut config = SlamConfig::default();
        config.rft.coincidences = coincidences;
        let pops = SlamPopulations::allocate(&config).unwrap();
        let fragment = build_rft(&config, &pops).unwrap();
        let mut engine = isolate(&config, &pops, fragment);
        let ring = &pops.hd;
        let w = config.window_width as isize;
        let active: Vec<usize> = (0..width).map(|k| ring.offset(centre, k as isize)).collect();
        let level_at = |j: isize| scan[(j + w) as usize];
        let mut inputs: Vec<(NeuronId, f64)> = active.iter().map(|&b| (ring.id(b), 1.0)).collect();
        for j in -w..=w {
            if let Some(l) = level_at(j) {
                inputs.push((pops.sensory_id(ring.offset(0, j), l), 1.0));
            }
        }
        engine.step(&inputs);
        let spikes = engine.step(&[]);
        for b in 0..ring.n_bins {
            for l in 0..LEVELS {
                let count = (-w..=w)
                    .filter(|&j| active.contains(&ring.offset(b, -j)) && level_at(j) == Some(l))
                    .count();
                prop_assert_eq!(spikes.contains(&pops.border_id(b, l)), count >= coincidences, "border ({}, {})", b, l);
            }
        }
    }

    #[test]
    fn single_bin_heading_places_the_scan_allocentrically(
        heading in 0usize..72,
        scan in prop::collection::vec(prop::option::of(0usize..LEVELS), 5),
    ) {
        let mut config = SlamConfig::default();
        config.rft.coincidences = 1;
        let pops = SlamPopulations::allocate(&config).unwrap();
        let mut engine = isolate(&config, &pops, build_rft(&config, &pops).unwrap());
        let ring = &pops.hd;
        let w = config.window_width as isize;
        let mut inputs = vec![(ring.id(heading), 1.0)];
        let mut expected = Vec::new();
        for j in -w..=w {
            if let Some(l) = scan[(j + w) as usize] {
                inputs.push((pops.sensory_id(ring.offset(0, j), l), 1.0));
                expected.push(pops.border_id(ring.offset(heading, j), l));
            }
        }
        engine.step(&inputs);
        let mut got: Vec<NeuronId> = engine.step(&[]).into_iter().filter(|id| pops.border.contains(id)).collect();
        got.sort_unstable();
        expected.sort_unstable();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn bayesian_cells_stay_silent_without_heading_spikes(
        drive in prop::collection::vec((prop::collection::vec(0usize..72, 0..6), prop::collection::vec(0usize..72, 0..4)), 1..60),
    ) {
        let config = SlamConfig::default();
        let pops = SlamPopulations::allocate(&config).unwrap();
        let mut engine = isolate(&config, &pops, build_bi(&config, &pops).unwrap());
        let mut prev_hd: Vec<usize> = Vec::new();
        for (likelihood, hd) in &drive {
            let mut inputs: Vec<(NeuronId, f64)> = likelihood.iter().map(|&b| (pops.likelihood_id(b), 1.0)).collect();
            inputs.extend(hd.iter().map(|&b| (pops.hd.id(b), 1.0)));
            let spikes = engine.step(&inputs);
            for id in spikes.into_iter().filter(|id| pops.bayes.contains(id)) {
                prop_assert!(prev_hd.contains(&(id - pops.bayes.start)));
            }
            prev_hd = hd.clone();
        }
    }
}

#[test]
fn exploration_silences_bayesian_cells() {
    let config = SlamConfig::default();
    let pops = SlamPopulations::allocate(&config).unwrap();
    let mut engine = isolate(&config, &pops, build_bi(&config, &pops).unwrap());
    for _ in 0..100 {
        let mut inputs: Vec<(NeuronId, f64)> = (0..72).map(|b| (pops.likelihood_id(b), 1.0)).collect();
        inputs.extend((0..72).map(|b| (pops.hd.id(b), 1.0)));
        inputs.push((pops.explore.start, 1.0));
        let spikes = engine.step(&inputs);
        assert!(spikes.iter().all(|id| !pops.bayes.contains(id)));
    }
}

#[test]
fn bayesian_output_reaches_neighbour_feedback_dendrites() {
    let config = SlamConfig::default();
    let pops = SlamPopulations::allocate(&config).unwrap();
    let fragment = build_bi(&config, &pops).unwrap();
    for s in fragment
        .synapses
        .iter()
        .filter(|s| pops.hd.population.contains(&s.post))
    {
        let pre = s.pre - pops.bayes.start;
        let post = s.post - pops.hd.population.start;
        assert_eq!(s.post_compartment, HD_FEEDBACK);
        assert_eq!(pre.abs_diff(post).min(72 - pre.abs_diff(post)), 1);
    }
}

#[test]
fn population_sizes_follow_the_config() {
    for config in [SlamConfig::default(), SlamConfig::toy()] {
        let (spec, pops) = assemble(&config).unwrap();
        let n = config.n_bins;
        assert_eq!(pops.hd.population.len(), n);
        assert_eq!(pops.sensory.len(), n * LEVELS);
        assert_eq!(pops.inverse_sensory.len(), n * LEVELS);
        assert_eq!(pops.border.len(), n * LEVELS);
        assert_eq!(pops.map.len(), config.place_cells * n * LEVELS);
        assert_eq!(pops.likelihood.len(), n);
        assert_eq!(pops.bayes.len(), n);
        assert_eq!(spec.neurons.len(), pops.total);
        spec.validate().unwrap();
    }
}

#[test]
fn oversized_window_is_rejected() {
    let config = SlamConfig {
        window_width: 40,
        ..SlamConfig::default()
    };
    assert!(assemble(&config).is_err());
}
