//! Closed-loop experiments: world simulation, spike encoding, network
//! stepping, decoding and artifact output.
//!
//! A run is split into three pure stages so saved rasters can be re-decoded:
//! [`simulate_world`] produces the open-loop trajectory and camera scans,
//! [`run_network`] drives the compiled network with them, and [`analyze`]
//! turns the raster plus learned weights into metrics.

use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{
    angle_diff, cells_in_gap_sectors, decode_map, encode_distance, fit_gaussian, fit_gaussian_in_range, gap_bins,
    heading_error_stats, map_f1, optimal_posterior, population_vector, visible_wall_cells, write_heading_csv,
    ErrorStats, GaussianEstimate, GridMap, HeadingSample, PhaseAccumulator, LEVELS,
};
use crate::error::{Error, Result};
use crate::slam_net::{assemble, summary, SlamConfig, SlamPopulations};
use crate::snn::{EngineState, NeuronId, SpikeRaster};
use crate::world::{
    camera_scan, environment_by_name, step_world, wrap_degrees, write_trajectory_csv, Environment, OdometryModel,
    RobotState, SensorModel, TrajectoryRow, Vec2,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    OdometryOnly,
    VisionOnly,
    Maze2d,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Mode::Full),
            "odometry_only" => Ok(Mode::OdometryOnly),
            "vision_only" => Ok(Mode::VisionOnly),
            "maze2d" => Ok(Mode::Maze2d),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected full, odometry_only, vision_only or maze2d)"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::OdometryOnly => "odometry_only",
            Mode::VisionOnly => "vision_only",
            Mode::Maze2d => "maze2d",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeParams {
    /// Trailing window, in steps.
    pub window: u64,
    /// Steps between decodes.
    pub cadence: u64,
    /// Half-width in bins, around the HD estimate, of the likelihood fit.
    pub fit_range: usize,
    /// Fraction of `w_max` above which a map synapse counts as learned.
    pub map_threshold: f64,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            window: 50,
            cadence: 10,
            fit_range: 3,
            map_threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub environment: String,
    /// Simulated seconds.
    pub duration: f64,
    /// Seconds per engine step.
    pub dt: f64,
    pub mode: Mode,
    pub seed: u64,
    pub trials: usize,
    pub output: Option<PathBuf>,
    /// Commanded angular velocity, degrees per second.
    pub omega: f64,
    pub initial_heading: f64,
    /// Odometric rotation, in degrees, after which a place counts as mapped
    /// and Bayesian feedback is released.
    pub explore_turn: f64,
    /// Overrides the environment's robot position.
    pub position: Option<Vec2>,
    pub sensor: SensorModel,
    pub odometry: OdometryModel,
    pub network: SlamConfig,
    pub decode: DecodeParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            environment: "env2".into(),
            duration: 120.0,
            dt: 0.01,
            mode: Mode::Full,
            seed: 42,
            trials: 1,
            output: None,
            omega: 30.0,
            initial_heading: 0.0,
            explore_turn: 360.0,
            position: None,
            sensor: SensorModel::default(),
            odometry: OdometryModel::default(),
            network: SlamConfig::default(),
            decode: DecodeParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.dt > 0.0) || !(self.duration > 0.0) {
            return fail("duration and dt must be positive".into());
        }
        let ratio = self.duration / self.dt;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return fail(format!(
                "duration {} is not a whole number of {} s steps",
                self.duration, self.dt
            ));
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.decode.window == 0 || self.decode.cadence == 0 {
            return fail("decode window and cadence must be at least 1".into());
        }
        self.sensor.validate()?;
        self.network.validate()
    }

    /// Parses TOML; every key is optional.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Loads JSON when the extension is `.json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    /// Network config after mode-specific disconnections.
    pub fn effective_network(&self) -> SlamConfig {
        let mut net = self.network.clone();
        if self.mode == Mode::OdometryOnly {
            net.connect_ol_bi = false;
        }
        if self.mode == Mode::Maze2d {
            net.place_cells = net.place_cells.max(1);
        }
        net
    }

    /// Builtin environment named by `environment`.
    pub fn environment(&self) -> Result<Environment> {
        environment_by_name(&self.environment)
    }
}

/// Open-loop world record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldTrace {
    pub rows: Vec<TrajectoryRow>,
    /// Camera scan per step (offsets `-w..=w`); empty on odd steps.
    pub scans: Vec<Vec<Option<f64>>>,
    /// Active place cell per step.
    pub place: Vec<usize>,
    /// Robot position per place cell.
    pub positions: Vec<Vec2>,
}

impl WorldTrace {
    pub fn true_heading(&self, step: u64) -> f64 {
        self.rows[step as usize].true_heading
    }
}

/// Robot positions visited, one per place cell.
fn visit_positions(config: &ExperimentConfig, env: &Environment) -> Vec<Vec2> {
    if config.mode == Mode::Maze2d && !env.waypoints.is_empty() {
        env.waypoints.clone()
    } else {
        vec![config.position.unwrap_or(env.robot_position)]
    }
}

/// Runs the rotating robot for the configured duration. Only odometry and
/// sensor noise are random; the network has no feedback onto the world.
pub fn simulate_world(config: &ExperimentConfig, env: &Environment) -> Result<WorldTrace> {
    let steps = config.steps();
    let positions = visit_positions(config, env);
    let per_visit = steps.div_ceil(positions.len() as u64).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = RobotState {
        position: positions[0],
        heading: wrap_degrees(config.initial_heading),
        omega: config.omega,
    };
    let net = &config.network;
    let mut trace = WorldTrace {
        rows: Vec::with_capacity(steps as usize),
        scans: Vec::with_capacity(steps as usize),
        place: Vec::with_capacity(steps as usize),
        positions: positions.clone(),
    };
    for t in 0..steps {
        let place = ((t / per_visit) as usize).min(positions.len() - 1);
        state.position = positions[place];
        let scan = if t % 2 == 0 {
            camera_scan(
                env,
                state.position,
                state.heading,
                net.window_width,
                net.resolution,
                &config.sensor,
                &mut rng,
            )?
        } else {
            Vec::new()
        };
        let (next, reported) = step_world(&state, config.dt, &config.odometry, &mut rng);
        trace.rows.push(TrajectoryRow {
            step: t,
            true_heading: state.heading,
            reported_omega: reported,
            depth_reading: scan.get(net.window_width).copied().flatten(),
        });
        trace.scans.push(scan);
        trace.place.push(place);
        state = next;
    }
    Ok(trace)
}

/// Map synapse weight `(place, bin, level) -> w` snapshots, one per place
/// cell, taken when the robot leaves that place.
pub type LearnedWeights = Vec<(usize, usize, usize, f64)>;

pub struct NetworkRun {
    pub raster: SpikeRaster,
    pub weights: LearnedWeights,
    pub tags: Vec<String>,
}

fn map_weights(engine: &EngineState, pops: &SlamPopulations, place: usize) -> LearnedWeights {
    let place_id = pops.place_id(place);
    engine
        .plastic_weights()
        .into_iter()
        .filter(|&(pre, _, _)| pre == place_id)
        .filter_map(|(_, post, w)| pops.map_index(post).map(|(p, b, l)| (p, b, l, w)))
        .collect()
}

/// Drives the network with the encoded world trace.
pub fn run_network(config: &ExperimentConfig, trace: &WorldTrace) -> Result<(NetworkRun, SlamPopulations)> {
    let net = config.effective_network();
    let net = SlamConfig {
        place_cells: trace.positions.len().max(net.place_cells),
        ..net
    };
    let (spec, pops) = assemble(&net)?;
    let mut engine = EngineState::compile(&spec)?;
    let ring = &pops.hd;
    let steps = trace.rows.len() as u64;
    let mut raster = SpikeRaster::new(engine.neuron_count());
    let (mut cw, mut ccw) = (PhaseAccumulator::default(), PhaseAccumulator::default());
    let mut weights = Vec::new();
    let mut inputs: Vec<(NeuronId, f64)> = Vec::new();
    let seed_bin = ring.bin_of(config.initial_heading);
    let half = (net.attractor.seed_width as isize - 1) / 2;
    let mut turned = 0.0;
    for t in 0..steps {
        inputs.clear();
        if t == 0 {
            for k in 0..net.attractor.seed_width as isize {
                inputs.push((ring.id(ring.offset(seed_bin, k - half)), 2.0 * net.attractor.threshold));
            }
        }
        let row = &trace.rows[t as usize];
        if config.mode != Mode::VisionOnly {
            let (cw_rate, ccw_rate) = net.speed.encode(row.reported_omega);
            if cw.tick(cw_rate, config.dt) {
                inputs.push((pops.speed_cw.start, 1.0));
            }
            if ccw.tick(ccw_rate, config.dt) {
                inputs.push((pops.speed_ccw.start, 1.0));
            }
        }
        if t % 2 == 0 {
            for (i, reading) in trace.scans[t as usize].iter().enumerate() {
                let cam = ring.offset(0, i as isize - net.window_width as isize);
                let (sensory, inverse) = encode_distance(*reading, cam, &net.levels);
                inputs.extend(sensory.iter().map(|&(b, l)| (pops.sensory_id(b, l), 1.0)));
                inputs.extend(inverse.iter().map(|&(b, l)| (pops.inverse_id(b, l), 1.0)));
            }
            inputs.push((pops.place_id(trace.place[t as usize]), 1.0));
        }
        let place = trace.place[t as usize];
        if t > 0 && trace.place[t as usize - 1] != place {
            turned = 0.0;
        }
        if turned < config.explore_turn {
            inputs.push((pops.explore.start, 1.0));
        }
        turned += row.reported_omega.abs() * config.dt;
        let spikes = engine.step(&inputs);
        raster.push_step(&spikes);
        let leaving = t + 1 == steps || trace.place[t as usize + 1] != place;
        if leaving {
            weights.extend(map_weights(&engine, &pops, place));
        }
    }
    Ok((
        NetworkRun {
            raster,
            weights,
            tags: engine.tags().to_vec(),
        },
        pops,
    ))
}

/// Decoded Gaussians of one decoding window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub step: u64,
    pub hd: GaussianEstimate,
    pub ol: GaussianEstimate,
    pub bi: GaussianEstimate,
    pub optimal: GaussianEstimate,
    pub dmu: f64,
    pub dsigma: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PosteriorReport {
    pub windows: usize,
    pub compared: usize,
    pub skipped_hd: usize,
    pub skipped_ol: usize,
    pub skipped_bi: usize,
    pub ambiguous: usize,
    pub max_dmu: f64,
    pub max_dsigma: f64,
    pub mean_dmu: f64,
    pub mean_dsigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub environment: String,
    pub mode: Mode,
    pub seed: u64,
    pub steps: u64,
    pub heading: ErrorStats,
    pub map_f1: f64,
    pub map_cells: usize,
    pub true_cells: usize,
    pub gap_cells: usize,
    pub posterior: PosteriorReport,
}

/// Everything derived from a raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub metrics: Metrics,
    pub samples: Vec<HeadingSample>,
    pub posterior: Vec<PosteriorSample>,
    pub grid: GridMap,
}

fn counts(raster: &SpikeRaster, range: std::ops::Range<NeuronId>, start: u64, end: u64) -> Vec<f64> {
    raster.counts(range, start, end).into_iter().map(f64::from).collect()
}

/// Circular mean of the true heading over `[start, end)`.
fn window_truth(trace: &WorldTrace, start: u64, end: u64) -> f64 {
    let (mut sx, mut sy) = (0.0, 0.0);
    for s in start..end {
        let a = trace.true_heading(s).to_radians();
        sx += a.cos();
        sy += a.sin();
    }
    wrap_degrees(sy.atan2(sx).to_degrees())
}

/// Learned `(bin, level)` pairs of each place cell.
pub fn learned_sets(weights: &LearnedWeights, config: &ExperimentConfig, places: usize) -> Vec<Vec<(usize, usize)>> {
    let cut = config.decode.map_threshold * config.network.dm.rule.w_max;
    let mut sets = vec![Vec::new(); places];
    for &(p, b, l, w) in weights {
        if w > cut && p < places {
            sets[p].push((b, l));
        }
    }
    sets.iter_mut().for_each(|s| s.sort_unstable());
    sets
}

/// Decodes headings, the posterior audit and the map from a finished run.
pub fn analyze(
    config: &ExperimentConfig,
    env: &Environment,
    pops: &SlamPopulations,
    trace: &WorldTrace,
    raster: &SpikeRaster,
    weights: &LearnedWeights,
) -> Analysis {
    let ring = &pops.hd;
    let res = ring.resolution;
    let d = &config.decode;
    let steps = raster.step_count;
    let mut samples = Vec::new();
    let mut posterior = Vec::new();
    let mut report = PosteriorReport::default();
    let mut end = d.window;
    while end <= steps {
        let start = end - d.window;
        let hd = counts(raster, ring.population.clone(), start, end);
        samples.push(HeadingSample {
            step: end - 1,
            truth: window_truth(trace, start, end),
            decoded: population_vector(&hd, res),
        });
        report.windows += 1;
        let ol = counts(raster, pops.likelihood.clone(), start, end);
        let bi = counts(raster, pops.bayes.clone(), start, end);
        match fit_gaussian(&hd, res) {
            Err(_) => report.skipped_hd += 1,
            Ok(g_hd) => match fit_gaussian_in_range(&ol, res, g_hd.mu, d.fit_range) {
                Err(_) => report.skipped_ol += 1,
                Ok(g_ol) => match fit_gaussian(&bi, res) {
                    Err(_) => report.skipped_bi += 1,
                    Ok(g_bi) => match optimal_posterior(&g_hd, &g_ol) {
                        Err(_) => report.ambiguous += 1,
                        Ok(opt) => posterior.push(PosteriorSample {
                            step: end - 1,
                            hd: g_hd,
                            ol: g_ol,
                            bi: g_bi,
                            optimal: opt,
                            dmu: angle_diff(g_bi.mu, opt.mu).abs(),
                            dsigma: (g_bi.sigma() - opt.sigma()).abs(),
                        }),
                    },
                },
            },
        }
        end += d.cadence;
    }
    report.compared = posterior.len();
    if !posterior.is_empty() {
        let n = posterior.len() as f64;
        report.max_dmu = posterior.iter().map(|p| p.dmu).fold(0.0, f64::max);
        report.max_dsigma = posterior.iter().map(|p| p.dsigma).fold(0.0, f64::max);
        report.mean_dmu = posterior.iter().map(|p| p.dmu).sum::<f64>() / n;
        report.mean_dsigma = posterior.iter().map(|p| p.dsigma).sum::<f64>() / n;
    }

    let sets = learned_sets(weights, config, trace.positions.len());
    let mut grid = GridMap::for_environment(env);
    let mut truth_cells = std::collections::BTreeSet::new();
    let mut gap_cells = 0;
    for (p, &pos) in trace.positions.iter().enumerate() {
        let mut local = GridMap::for_environment(env);
        decode_map(&sets[p], &config.network.levels, res, pos, &mut local);
        let gaps = gap_bins(env, pos, ring.n_bins, res, config.sensor.max_range);
        gap_cells += cells_in_gap_sectors(&local, &gaps, res, pos, 2).len();
        truth_cells.extend(visible_wall_cells(env, pos, &local));
        grid.superimpose(&local);
    }
    let truth: Vec<_> = truth_cells.into_iter().collect();
    let predicted = grid.occupied();
    let metrics = Metrics {
        environment: env.name.clone(),
        mode: config.mode,
        seed: config.seed,
        steps,
        heading: heading_error_stats(&samples),
        map_f1: map_f1(&predicted, &truth),
        map_cells: predicted.len(),
        true_cells: truth.len(),
        gap_cells,
        posterior: report,
    };
    Analysis {
        metrics,
        samples,
        posterior,
        grid,
    }
}

/// Spike counts of each likelihood neuron over `[start, end)`.
pub fn likelihood_profile(raster: &SpikeRaster, pops: &SlamPopulations, start: u64, end: u64) -> Vec<f64> {
    counts(raster, pops.likelihood.clone(), start, end)
}

/// Likelihood spike counts from `start` on, each step rotated so that bin 0
/// is the true heading.
pub fn aligned_likelihood_profile(
    raster: &SpikeRaster,
    pops: &SlamPopulations,
    trace: &WorldTrace,
    start: u64,
) -> Vec<f64> {
    let n = pops.hd.n_bins;
    let mut acc = vec![0.0; n];
    for t in start..raster.step_count {
        let shift = (trace.true_heading(t) / pops.hd.resolution).round() as usize % n;
        for (b, c) in counts(raster, pops.likelihood.clone(), t, t + 1)
            .into_iter()
            .enumerate()
        {
            acc[(b + n - shift) % n] += c;
        }
    }
    acc
}

/// Steps whose scan sees something after a scan that saw nothing.
pub fn reentry_steps(trace: &WorldTrace) -> Vec<u64> {
    let mut out = Vec::new();
    let mut blank = false;
    for (t, scan) in trace.scans.iter().enumerate() {
        if scan.is_empty() {
            continue;
        }
        let sees = scan.iter().any(Option::is_some);
        if sees && blank {
            out.push(t as u64);
        }
        blank = !sees;
    }
    out
}

/// An above-median error excursion that contains an object re-entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correction {
    pub reentry: u64,
    /// Largest error of the excursion up to the re-entry.
    pub peak: f64,
    /// Smallest error within the horizon after the re-entry.
    pub after: f64,
}

impl Correction {
    /// The error at least halved.
    pub fn is_sharp(&self) -> bool {
        self.after <= 0.5 * self.peak
    }
}

/// Finds runs of decoded samples whose error exceeds the median and pairs
/// each with the first re-entry inside it.
pub fn sharp_corrections(samples: &[HeadingSample], reentries: &[u64], horizon: u64) -> Vec<Correction> {
    let decoded: Vec<(u64, f64)> = samples.iter().filter_map(|s| s.error().map(|e| (s.step, e))).collect();
    if decoded.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = decoded.iter().map(|&(_, e)| e).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut out = Vec::new();
    let mut i = 0;
    while i < decoded.len() {
        if decoded[i].1 <= median {
            i += 1;
            continue;
        }
        let mut j = i;
        while j + 1 < decoded.len() && decoded[j + 1].1 > median {
            j += 1;
        }
        let (first, last) = (decoded[i].0, decoded[j].0);
        if let Some(&r) = reentries.iter().find(|&&r| r >= first && r <= last) {
            let peak = decoded[i..=j]
                .iter()
                .take_while(|&&(s, _)| s <= r)
                .map(|&(_, e)| e)
                .fold(0.0, f64::max);
            let after = decoded
                .iter()
                .filter(|&&(s, _)| s > r && s <= r + horizon)
                .map(|&(_, e)| e)
                .fold(f64::INFINITY, f64::min);
            out.push(Correction {
                reentry: r,
                peak,
                after,
            });
        }
        i = j + 1;
    }
    out
}

pub struct TrialResult {
    pub config: ExperimentConfig,
    pub populations: SlamPopulations,
    pub trace: WorldTrace,
    pub run: NetworkRun,
    pub analysis: Analysis,
}

/// One trial with `config.seed`.
pub fn run_trial(config: &ExperimentConfig) -> Result<TrialResult> {
    config.validate()?;
    let env = config.environment()?;
    let trace = simulate_world(config, &env)?;
    let (run, pops) = run_network(config, &trace)?;
    let analysis = analyze(config, &env, &pops, &trace, &run.raster, &run.weights);
    Ok(TrialResult {
        config: ExperimentConfig {
            trials: 1,
            ..config.clone()
        },
        populations: pops,
        trace,
        run,
        analysis,
    })
}

/// Paths written for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub raster: PathBuf,
    pub heading: PathBuf,
    pub trajectory: PathBuf,
    pub weights: PathBuf,
    pub map: PathBuf,
    pub map_sidecar: PathBuf,
    pub posterior: PathBuf,
    pub network: PathBuf,
    pub metrics: PathBuf,
    pub config: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_weights_csv<W: std::io::Write>(out: W, weights: &LearnedWeights) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["place", "bin", "level", "weight"]).map_err(wrap)?;
    for &(p, b, l, weight) in weights {
        w.write_record([p.to_string(), b.to_string(), l.to_string(), weight.to_string()])
            .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_weights_csv<R: std::io::Read>(input: R) -> Result<LearnedWeights> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for record in r.deserialize::<(usize, usize, usize, f64)>() {
        let (p, b, l, w) = record.map_err(|e| Error::Parse(e.to_string()))?;
        if l >= LEVELS {
            return Err(Error::Parse(format!("distance level {l} out of range")));
        }
        out.push((p, b, l, w));
    }
    Ok(out)
}

fn write_posterior_csv<W: std::io::Write>(out: W, samples: &[PosteriorSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record([
        "step",
        "hd_mu",
        "hd_sigma",
        "ol_mu",
        "ol_sigma",
        "bi_mu",
        "bi_sigma",
        "opt_mu",
        "opt_sigma",
        "dmu",
        "dsigma",
    ])
    .map_err(wrap)?;
    for s in samples {
        let f = |x: f64| format!("{x:.4}");
        w.write_record([
            s.step.to_string(),
            f(s.hd.mu),
            f(s.hd.sigma()),
            f(s.ol.mu),
            f(s.ol.sigma()),
            f(s.bi.mu),
            f(s.bi.sigma()),
            f(s.optimal.mu),
            f(s.optimal.sigma()),
            f(s.dmu),
            f(s.dsigma),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

pub fn metrics_json(metrics: &Metrics) -> String {
    serde_json::to_string_pretty(metrics).expect("metrics serialise")
}

/// Writes every artifact of a trial into `dir`.
pub fn write_artifacts(result: &TrialResult, dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let a = RunArtifacts {
        raster: dir.join("raster.csv"),
        heading: dir.join("heading.csv"),
        trajectory: dir.join("trajectory.csv"),
        weights: dir.join("weights.csv"),
        map: dir.join("map.pgm"),
        map_sidecar: dir.join("map.json"),
        posterior: dir.join("posterior.csv"),
        network: dir.join("network.json"),
        metrics: dir.join("metrics.json"),
        config: dir.join("config.json"),
    };
    result.run.raster.write_csv(create(&a.raster)?, &result.run.tags)?;
    write_heading_csv(create(&a.heading)?, &result.analysis.samples)?;
    write_trajectory_csv(create(&a.trajectory)?, &result.trace.rows)?;
    write_weights_csv(create(&a.weights)?, &result.run.weights)?;
    result
        .analysis
        .grid
        .write_pgm(create(&a.map)?)
        .map_err(|e| Error::io(&a.map, e))?;
    write_text(&a.map_sidecar, &result.analysis.grid.sidecar_json())?;
    write_posterior_csv(create(&a.posterior)?, &result.analysis.posterior)?;
    let net = result.config.effective_network();
    let (spec, pops) = assemble(&SlamConfig {
        place_cells: result.populations.place.len(),
        ..net
    })?;
    write_text(
        &a.network,
        &serde_json::to_string_pretty(&summary(&spec, &pops)).expect("summary serialises"),
    )?;
    write_text(&a.metrics, &metrics_json(&result.analysis.metrics))?;
    write_text(&a.config, &result.config.to_json())?;
    Ok(a)
}

/// Outcome of a multi-trial experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub trials: Vec<Metrics>,
    pub artifacts: Vec<RunArtifacts>,
}

/// Config of trial `i`: seeds are consecutive from `config.seed`.
pub fn trial_config(config: &ExperimentConfig, i: usize) -> ExperimentConfig {
    ExperimentConfig {
        seed: config.seed.wrapping_add(i as u64),
        trials: 1,
        ..config.clone()
    }
}

/// Runs `config.trials` independent trials in parallel and, when an output
/// directory is set, writes `trial_<i>/` artifacts plus `summary.json`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    config.environment()?;
    if let Some(out) = &config.output {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    let results: Vec<Result<(Metrics, Option<RunArtifacts>)>> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let result = run_trial(&trial_config(config, i))?;
            let artifacts = match &config.output {
                Some(out) => Some(write_artifacts(&result, &out.join(format!("trial_{i}")))?),
                None => None,
            };
            Ok((result.analysis.metrics, artifacts))
        })
        .collect();
    let mut report = ExperimentReport {
        trials: Vec::new(),
        artifacts: Vec::new(),
    };
    for r in results {
        let (m, a) = r?;
        report.trials.push(m);
        report.artifacts.extend(a);
    }
    if let Some(out) = &config.output {
        let path = out.join("summary.json");
        write_text(
            &path,
            &serde_json::to_string_pretty(&report).expect("report serialises"),
        )?;
    }
    Ok(report)
}

/// Full-mode run reporting how the decoded posterior compares with the
/// optimal product of the HD and likelihood fits.
pub fn run_posterior_audit(config: &ExperimentConfig) -> Result<(PosteriorReport, Vec<PosteriorSample>)> {
    if config.mode != Mode::Full {
        return Err(Error::Config("the posterior audit needs full mode".into()));
    }
    let result = run_trial(config)?;
    Ok((result.analysis.metrics.posterior, result.analysis.posterior))
}

/// Re-decodes a saved raster. The world trace is regenerated from the config
/// snapshot, which is deterministic, and map weights come from `weights`.
pub fn replay(raster_path: &Path, config_path: &Path, weights_path: &Path) -> Result<Analysis> {
    let config = ExperimentConfig::load(config_path)?;
    config.validate()?;
    let env = config.environment()?;
    let trace = simulate_world(&config, &env)?;
    let net = config.effective_network();
    let pops = SlamPopulations::allocate(&SlamConfig {
        place_cells: trace.positions.len().max(net.place_cells),
        ..net
    })?;
    let file = fs::File::open(raster_path).map_err(|e| Error::io(raster_path, e))?;
    let raster = SpikeRaster::read_csv(std::io::BufReader::new(file), config.steps(), pops.total)?;
    let file = fs::File::open(weights_path).map_err(|e| Error::io(weights_path, e))?;
    let weights = read_weights_csv(std::io::BufReader::new(file))?;
    Ok(analyze(&config, &env, &pops, &trace, &raster, &weights))
}
