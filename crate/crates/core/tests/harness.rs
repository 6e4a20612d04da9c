use std::collections::HashSet;

use neuroslam::codec::HeadingSample;
use neuroslam::harness::{
    learned_sets, replay, run_experiment, run_posterior_audit, run_trial, sharp_corrections, write_artifacts,
    ExperimentConfig, Mode,
};

fn short(env: &str, mode: Mode, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        environment: env.into(),
        mode,
        seed,
        duration: 20.0,
        ..ExperimentConfig::default()
    }
}

fn sample(step: u64, error: f64) -> HeadingSample {
    HeadingSample {
        step,
        truth: 0.0,
        decoded: Some(error),
    }
}

#[test]
fn partial_toml_keeps_defaults() {
    let config = ExperimentConfig::from_toml(
        "environment = \"env3\"\nseed = 9\n[odometry]\nomega_bias = 0.0\n[network.bi]\nthreshold = 2.0\n",
    )
    .unwrap();
    let defaults = ExperimentConfig::default();
    assert_eq!(config.environment, "env3");
    assert_eq!(config.seed, 9);
    assert_eq!(config.odometry.omega_bias, 0.0);
    assert_eq!(config.odometry.omega_noise_sigma, defaults.odometry.omega_noise_sigma);
    assert_eq!(config.network.bi.threshold, 2.0);
    assert_eq!(config.network.bi.value_decay, defaults.network.bi.value_decay);
    assert_eq!(config.dt, defaults.dt);
}

#[test]
fn bad_configs_are_rejected() {
    assert!(ExperimentConfig::from_toml("dt = -1.0")
        .and_then(|c| c.validate())
        .is_err());
    assert!(ExperimentConfig::from_toml("mode = \"sideways\"").is_err());
    let err = run_trial(&short("atlantis", Mode::Full, 1)).err().unwrap();
    assert!(err.to_string().contains("atlantis"));
}

#[test]
fn mode_names_round_trip() {
    for mode in [Mode::Full, Mode::OdometryOnly, Mode::VisionOnly, Mode::Maze2d] {
        assert_eq!(mode.to_string().parse::<Mode>().unwrap(), mode);
    }
}

#[test]
fn each_place_learns_one_level_per_bin() {
    for env in ["env1", "env2", "env3", "env4"] {
        let result = run_trial(&short(env, Mode::Full, 3)).unwrap();
        let places = result.populations.place.len();
        for (place, set) in learned_sets(&result.run.weights, &result.config, places)
            .iter()
            .enumerate()
        {
            let bins: HashSet<usize> = set.iter().map(|&(b, _)| b).collect();
            assert_eq!(bins.len(), set.len(), "{env} place {place}: {set:?}");
        }
    }
}

#[test]
fn artifacts_replay_to_the_same_analysis() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_trial(&short("env2", Mode::Full, 5)).unwrap();
    let a = write_artifacts(&result, dir.path()).unwrap();
    for path in [
        &a.raster,
        &a.heading,
        &a.trajectory,
        &a.weights,
        &a.map,
        &a.map_sidecar,
        &a.posterior,
        &a.network,
        &a.metrics,
        &a.config,
    ] {
        assert!(path.metadata().unwrap().len() > 0, "{} is empty", path.display());
    }
    let replayed = replay(&a.raster, &a.config, &a.weights).unwrap();
    assert_eq!(replayed, result.analysis);
}

#[test]
fn experiment_seeds_are_consecutive() {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        trials: 2,
        output: Some(dir.path().to_path_buf()),
        duration: 5.0,
        ..short("env1", Mode::OdometryOnly, 11)
    };
    let report = run_experiment(&config).unwrap();
    let seeds: Vec<u64> = report.trials.iter().map(|m| m.seed).collect();
    assert_eq!(seeds, vec![11, 12]);
    assert_eq!(report.artifacts.len(), 2);
    assert!(dir.path().join("summary.json").exists());
}

#[test]
fn posterior_audit_needs_full_mode() {
    assert!(run_posterior_audit(&short("env2", Mode::VisionOnly, 1)).is_err());
}

#[test]
fn odometry_only_silences_bayesian_cells() {
    let result = run_trial(&short("env2", Mode::OdometryOnly, 2)).unwrap();
    let bayes = result.populations.bayes.clone();
    assert!(result
        .run
        .raster
        .window(0, result.config.steps())
        .iter()
        .all(|(_, id)| !bayes.contains(id)));
    assert!(result.analysis.metrics.map_cells > 0);
}

#[test]
fn corrections_pair_excursions_with_reentries() {
    let errors = [1.0, 1.0, 1.0, 6.0, 8.0, 8.0, 2.0, 1.0, 1.0, 5.0, 5.0, 4.0, 4.0, 1.0];
    let samples: Vec<HeadingSample> = errors
        .iter()
        .enumerate()
        .map(|(i, &e)| sample(10 * i as u64, e))
        .collect();
    let found = sharp_corrections(&samples, &[45, 100], 20);
    assert_eq!(found.len(), 2);
    assert_eq!((found[0].reentry, found[0].peak, found[0].after), (45, 8.0, 2.0));
    assert!(found[0].is_sharp());
    assert_eq!((found[1].reentry, found[1].peak, found[1].after), (100, 5.0, 4.0));
    assert!(!found[1].is_sharp());
    assert!(sharp_corrections(&samples, &[], 20).is_empty());
}
