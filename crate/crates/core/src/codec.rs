//! Spike encoders and decoders, Gaussian cue fusion and accuracy metrics.
//!
//! Angles are degrees. Heading bins are `resolution` degrees wide and bin
//! `b` prefers heading `b * resolution`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{wrap_degrees, Environment, Vec2};

/// Signed smallest difference `a - b` in `(-180, 180]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Three-level depth quantiser. Readings at or beyond `max_range` are no-returns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceLevels {
    pub thresholds: [f64; 2],
    pub max_range: f64,
}

impl Default for DistanceLevels {
    fn default() -> Self {
        Self {
            thresholds: [4.0 / 3.0, 8.0 / 3.0],
            max_range: 4.0,
        }
    }
}

pub const LEVELS: usize = 3;

impl DistanceLevels {
    pub fn validate(&self) -> Result<()> {
        let [t1, t2] = self.thresholds;
        if !(0.0 < t1 && t1 < t2 && t2 < self.max_range) {
            return Err(Error::Config(format!(
                "distance thresholds must satisfy 0 < {t1} < {t2} < {}",
                self.max_range
            )));
        }
        Ok(())
    }

    pub fn level(&self, d: f64) -> Option<usize> {
        let [t1, t2] = self.thresholds;
        match d {
            d if !(d >= 0.0) || d > self.max_range => None,
            d if d < t1 => Some(0),
            d if d < t2 => Some(1),
            _ => Some(2),
        }
    }

    /// Midpoint of the level's range, used when drawing maps.
    pub fn representative(&self, level: usize) -> f64 {
        let [t1, t2] = self.thresholds;
        match level {
            0 => t1 / 2.0,
            1 => (t1 + t2) / 2.0,
            _ => (t2 + self.max_range) / 2.0,
        }
    }
}

/// Linear rate code for angular speed. Positive omega is counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEncoder {
    pub omega_max: f64,
    pub rate_max: f64,
}

impl SpeedEncoder {
    /// Returns `(cw_rate, ccw_rate)` in Hz.
    pub fn encode(&self, omega: f64) -> (f64, f64) {
        let rate = (omega.abs() / self.omega_max).min(1.0) * self.rate_max;
        if omega > 0.0 {
            (0.0, rate)
        } else if omega < 0.0 {
            (rate, 0.0)
        } else {
            (0.0, 0.0)
        }
    }
}

/// Deterministic rate-to-spike converter: integrates `rate * dt` and fires
/// each time the phase crosses 1.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseAccumulator {
    phase: f64,
}

impl PhaseAccumulator {
    pub fn tick(&mut self, rate_hz: f64, dt: f64) -> bool {
        self.phase += rate_hz * dt;
        if self.phase >= 1.0 {
            self.phase -= 1.0;
            true
        } else {
            false
        }
    }
}

/// Active `(bin, level)` pairs for the sensory and inverse-sensory populations.
pub type LevelSet = Vec<(usize, usize)>;

/// Sensory set holds the observed level; the inverse set holds every other
/// level (all three on a no-return).
pub fn encode_distance(reading: Option<f64>, heading_bin: usize, levels: &DistanceLevels) -> (LevelSet, LevelSet) {
    let observed = reading.and_then(|d| levels.level(d));
    let sensory = observed.map(|l| vec![(heading_bin, l)]).unwrap_or_default();
    let inverse = (0..LEVELS)
        .filter(|&l| Some(l) != observed)
        .map(|l| (heading_bin, l))
        .collect();
    (sensory, inverse)
}

/// Headings of the local maxima of a circular profile. A plateau counts once,
/// at its centre, and only maxima reaching `min_fraction` of the global peak
/// are kept.
pub fn profile_modes(profile: &[f64], resolution: f64, min_fraction: f64) -> Vec<f64> {
    let n = profile.len();
    let peak = profile.iter().copied().fold(0.0, f64::max);
    if n == 0 || peak <= 0.0 {
        return Vec::new();
    }
    let at = |i: isize| profile[i.rem_euclid(n as isize) as usize];
    let mut modes = Vec::new();
    for i in 0..n as isize {
        let v = at(i);
        // A plateau is reported from its first bin.
        if v < min_fraction * peak || at(i - 1) == v {
            continue;
        }
        let mut len = 1;
        while len < n as isize && at(i + len) == v {
            len += 1;
        }
        if len == n as isize {
            return Vec::new();
        }
        if at(i - 1) < v && at(i + len) < v {
            let centre = i as f64 + (len - 1) as f64 / 2.0;
            modes.push(wrap_degrees(centre * resolution));
        }
    }
    modes
}

/// Spike-count-weighted circular mean of bin headings. `None` when there
/// are no spikes or the resultant vanishes.
pub fn population_vector(counts: &[f64], resolution: f64) -> Option<f64> {
    let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
    for (b, &c) in counts.iter().enumerate() {
        if c <= 0.0 {
            continue;
        }
        let a = (b as f64 * resolution).to_radians();
        sx += c * a.cos();
        sy += c * a.sin();
        total += c;
    }
    if total <= 0.0 || sx.hypot(sy) / total < 1e-9 {
        return None;
    }
    Some(wrap_degrees(sy.atan2(sx).to_degrees()))
}

/// Gaussian over heading: mean in `[0, 360)`, variance in degrees squared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianEstimate {
    pub mu: f64,
    pub sigma2: f64,
}

impl GaussianEstimate {
    pub fn new(mu: f64, sigma2: f64) -> Self {
        Self {
            mu: wrap_degrees(mu),
            sigma2,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoEstimate {
    TooFewSpikes,
    SingleBin,
    Diffuse,
}

/// Fits above this standard deviation are treated as uninformative.
pub const MAX_FIT_SIGMA: f64 = 60.0;

/// Circular mean plus the weighted variance of bin headings unwrapped
/// around that mean.
pub fn fit_gaussian(counts: &[f64], resolution: f64) -> std::result::Result<GaussianEstimate, NoEstimate> {
    let total: f64 = counts.iter().sum();
    if total < 2.0 {
        return Err(NoEstimate::TooFewSpikes);
    }
    if counts.iter().filter(|&&c| c > 0.0).count() < 2 {
        return Err(NoEstimate::SingleBin);
    }
    let mu = population_vector(counts, resolution).ok_or(NoEstimate::Diffuse)?;
    let var = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0.0)
        .map(|(b, &c)| c * angle_diff(b as f64 * resolution, mu).powi(2))
        .sum::<f64>()
        / total;
    if var > MAX_FIT_SIGMA * MAX_FIT_SIGMA || var <= 0.0 {
        return Err(NoEstimate::Diffuse);
    }
    Ok(GaussianEstimate { mu, sigma2: var })
}

/// Like [`fit_gaussian`] but only bins within `half_range` bins of `center`
/// (degrees) contribute.
pub fn fit_gaussian_in_range(
    counts: &[f64],
    resolution: f64,
    center: f64,
    half_range: usize,
) -> std::result::Result<GaussianEstimate, NoEstimate> {
    let limit = half_range as f64 * resolution + 1e-9;
    let masked: Vec<f64> = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            if angle_diff(b as f64 * resolution, center).abs() <= limit {
                c
            } else {
                0.0
            }
        })
        .collect();
    fit_gaussian(&masked, resolution)
}

/// Product of two Gaussian cues: precision-weighted mean (on the unwrapped
/// axis) and harmonic variance.
pub fn optimal_posterior(g1: &GaussianEstimate, g2: &GaussianEstimate) -> Result<GaussianEstimate> {
    let delta = angle_diff(g2.mu, g1.mu);
    if delta.abs() >= 90.0 {
        return Err(Error::AmbiguousFusion(delta.abs()));
    }
    let (v1, v2) = (g1.sigma2, g2.sigma2);
    let mu2 = g1.mu + delta;
    let mu = if v1.is_infinite() {
        mu2
    } else if v2.is_infinite() {
        g1.mu
    } else {
        (v2 * g1.mu + v1 * mu2) / (v1 + v2)
    };
    let sigma2 = 1.0 / (1.0 / v1 + 1.0 / v2);
    Ok(GaussianEstimate::new(mu, sigma2))
}

/// Square occupancy grid. Row 0 is the southmost row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub side: usize,
    pub cell_size: f64,
    pub origin: Vec2,
    pub cells: Vec<f64>,
}

impl GridMap {
    pub fn new(side: usize, cell_size: f64, origin: Vec2) -> Self {
        Self {
            side,
            cell_size,
            origin,
            cells: vec![0.0; side * side],
        }
    }

    /// Grid covering an environment at 0.2 m cells (20 x 20 for a 4 m arena).
    pub fn for_environment(env: &Environment) -> Self {
        let cell = 0.2;
        Self::new((env.extent.size / cell).round() as usize, cell, env.extent.min)
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.cells[row * self.side + col]
    }

    pub fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let clamp = |v: f64| (v.floor().max(0.0) as usize).min(self.side - 1);
        (
            clamp((p.x - self.origin.x) / self.cell_size),
            clamp((p.y - self.origin.y) / self.cell_size),
        )
    }

    pub fn mark(&mut self, p: Vec2) {
        let (c, r) = self.cell_of(p);
        let cell = &mut self.cells[r * self.side + c];
        *cell = (*cell + 1.0).min(1.0);
    }

    pub fn occupied(&self) -> Vec<(usize, usize)> {
        (0..self.side * self.side)
            .filter(|&i| self.cells[i] > 0.0)
            .map(|i| (i % self.side, i / self.side))
            .collect()
    }

    /// Cell-wise maximum with another grid of the same shape.
    pub fn superimpose(&mut self, other: &GridMap) {
        assert_eq!(self.side, other.side);
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a = a.max(*b);
        }
    }

    /// Plain PGM (P2), occupied cells dark, north row first.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "P2")?;
        writeln!(out, "{} {}", self.side, self.side)?;
        writeln!(out, "255")?;
        for row in (0..self.side).rev() {
            let line: Vec<String> = (0..self.side)
                .map(|col| (255.0 * (1.0 - self.get(col, row))).round().to_string())
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn sidecar_json(&self) -> String {
        serde_json::json!({
            "side": self.side,
            "cell_size": self.cell_size,
            "origin": [self.origin.x, self.origin.y],
        })
        .to_string()
    }

    fn exit_distance(&self, from: Vec2, dir: Vec2) -> f64 {
        let size = self.side as f64 * self.cell_size;
        let mut t = f64::INFINITY;
        for (p, d, lo) in [(from.x, dir.x, self.origin.x), (from.y, dir.y, self.origin.y)] {
            if d > 1e-12 {
                t = t.min((lo + size - p) / d);
            } else if d < -1e-12 {
                t = t.min((lo - p) / d);
            }
        }
        t.max(0.0)
    }
}

/// Draws each learned `(bin, level)` at its representative distance from
/// `position`, clipping points beyond the grid onto its boundary.
pub fn decode_map(
    learned: &[(usize, usize)],
    levels: &DistanceLevels,
    resolution: f64,
    position: Vec2,
    grid: &mut GridMap,
) {
    for &(bin, level) in learned {
        let dir = Vec2::from_heading(bin as f64 * resolution);
        let r = levels.representative(level).min(grid.exit_distance(position, dir));
        grid.mark(position + dir.scale(r));
    }
}

/// Cells crossed by the parts of `env`'s segments visible from `position`.
pub fn visible_wall_cells(env: &Environment, position: Vec2, grid: &GridMap) -> Vec<(usize, usize)> {
    let mut cells = std::collections::BTreeSet::new();
    let step = grid.cell_size / 10.0;
    for s in &env.segments {
        let n = (s.length() / step).ceil().max(1.0) as usize;
        for i in 0..=n {
            let p = s.a + (s.b - s.a).scale(i as f64 / n as f64);
            let to = p - position;
            let d = to.norm();
            if d < 1e-9 {
                continue;
            }
            let heading = to.y.atan2(to.x).to_degrees();
            let visible = env.ray_distance(position, heading).is_some_and(|hit| hit >= d - 1e-6);
            if visible {
                cells.insert(grid.cell_of(p));
            }
        }
    }
    cells.into_iter().collect()
}

/// Tolerant F1: a predicted cell is correct if a true cell lies within one
/// cell (8-neighbourhood), and a true cell is recalled if a predicted cell does.
pub fn map_f1(predicted: &[(usize, usize)], truth: &[(usize, usize)]) -> f64 {
    if predicted.is_empty() || truth.is_empty() {
        return 0.0;
    }
    let near = |a: (usize, usize), set: &[(usize, usize)]| {
        set.iter().any(|&b| a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1)
    };
    let precision = predicted.iter().filter(|&&p| near(p, truth)).count() as f64 / predicted.len() as f64;
    let recall = truth.iter().filter(|&&t| near(t, predicted)).count() as f64 / truth.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Gap bins: bins whose centre and both edges see no return within `max_range`.
pub fn gap_bins(env: &Environment, position: Vec2, n_bins: usize, resolution: f64, max_range: f64) -> Vec<bool> {
    (0..n_bins)
        .map(|b| {
            let c = b as f64 * resolution;
            [c - resolution / 2.0, c, c + resolution / 2.0].iter().all(|&h| {
                env.ray_distance(position, wrap_degrees(h))
                    .is_none_or(|d| d > max_range)
            })
        })
        .collect()
}

/// Occupied cells whose direction from `position` falls inside a gap sector
/// wider than `min_width` bins. Sector edges are eroded by one bin so cells
/// straddling an object boundary are not counted.
pub fn cells_in_gap_sectors(
    grid: &GridMap,
    gaps: &[bool],
    resolution: f64,
    position: Vec2,
    min_width: usize,
) -> Vec<(usize, usize)> {
    let n = gaps.len();
    let mut interior = vec![false; n];
    if gaps.iter().all(|&g| g) {
        interior.iter_mut().for_each(|x| *x = true);
    } else {
        // walk each maximal circular run of gap bins
        let start = (0..n).find(|&b| !gaps[b]).unwrap_or(0);
        let mut b = 0;
        while b < n {
            let i = (start + b) % n;
            if !gaps[i] {
                b += 1;
                continue;
            }
            let run_start = b;
            while b < n && gaps[(start + b) % n] {
                b += 1;
            }
            let len = b - run_start;
            if len > min_width {
                for k in run_start + 1..b - 1 {
                    interior[(start + k) % n] = true;
                }
            }
        }
    }
    grid.occupied()
        .into_iter()
        .filter(|&(c, r)| {
            let centre = Vec2::new(
                grid.origin.x + (c as f64 + 0.5) * grid.cell_size,
                grid.origin.y + (r as f64 + 0.5) * grid.cell_size,
            );
            let to = centre - position;
            let bin = (wrap_degrees(to.y.atan2(to.x).to_degrees()) / resolution).round() as usize % n;
            interior[bin]
        })
        .collect()
}

/// One decoded heading sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadingSample {
    pub step: u64,
    pub truth: f64,
    pub decoded: Option<f64>,
}

impl HeadingSample {
    pub fn error(&self) -> Option<f64> {
        self.decoded.map(|d| angle_diff(d, self.truth).abs())
    }
}

pub fn write_heading_csv<W: Write>(out: W, samples: &[HeadingSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["step", "true", "decoded", "error"]).map_err(wrap)?;
    for s in samples {
        w.write_record([
            s.step.to_string(),
            format!("{:.4}", s.truth),
            s.decoded.map(|d| format!("{d:.4}")).unwrap_or_default(),
            s.error().map(|e| format!("{e:.4}")).unwrap_or_default(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub final_error: f64,
    pub samples: usize,
    pub undecoded: usize,
}

pub fn heading_error_stats(samples: &[HeadingSample]) -> ErrorStats {
    let errors: Vec<f64> = samples.iter().filter_map(HeadingSample::error).collect();
    let n = errors.len();
    if n == 0 {
        return ErrorStats {
            undecoded: samples.len(),
            ..Default::default()
        };
    }
    let mean = errors.iter().sum::<f64>() / n as f64;
    let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
    ErrorStats {
        mean,
        std: var.sqrt(),
        max: errors.iter().cloned().fold(0.0, f64::max),
        final_error: *errors.last().unwrap(),
        samples: n,
        undecoded: samples.len() - n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn speed_code() {
        let e = SpeedEncoder {
            omega_max: 60.0,
            rate_max: 100.0,
        };
        assert_eq!(e.encode(0.0), (0.0, 0.0));
        assert_eq!(e.encode(30.0), (0.0, 50.0));
        assert_eq!(e.encode(-120.0), (100.0, 0.0));
    }

    #[test]
    fn accumulator_rate() {
        let mut acc = PhaseAccumulator::default();
        let spikes = (0..1000).filter(|_| acc.tick(12.0, 0.01)).count();
        assert_eq!(spikes, 120);
    }

    #[test]
    fn distance_sets() {
        let lv = DistanceLevels {
            thresholds: [1.33, 2.67],
            max_range: 4.0,
        };
        assert_eq!(encode_distance(Some(0.5), 7, &lv), (vec![(7, 0)], vec![(7, 1), (7, 2)]));
        assert_eq!(encode_distance(Some(2.0), 7, &lv), (vec![(7, 1)], vec![(7, 0), (7, 2)]));
        assert_eq!(encode_distance(None, 7, &lv), (vec![], vec![(7, 0), (7, 1), (7, 2)]));
    }

    #[test]
    fn heading_decode_cases() {
        let mut c = vec![0.0; 72];
        c[18] = 5.0;
        assert!((population_vector(&c, 5.0).unwrap() - 90.0).abs() < 1e-9);
        let mut c = vec![0.0; 72];
        c[0] = 3.0;
        c[2] = 3.0;
        assert!((population_vector(&c, 5.0).unwrap() - 5.0).abs() < 1e-9);
        let mut c = vec![0.0; 72];
        c[0] = 3.0;
        c[36] = 3.0;
        assert_eq!(population_vector(&c, 5.0), None);
        assert_eq!(population_vector(&[0.0; 72], 5.0), None);
    }

    #[test]
    fn gaussian_fit_cases() {
        let mut c = vec![0.0; 72];
        c[18] = 10.0;
        assert_eq!(fit_gaussian(&c, 5.0), Err(NoEstimate::SingleBin));
        let mut c = vec![0.0; 72];
        c[17] = 1.0;
        c[18] = 2.0;
        c[19] = 1.0;
        let g = fit_gaussian(&c, 5.0).unwrap();
        // weighted variance of {85, 90, 95} with weights {1, 2, 1}
        let oracle = (1.0 * 25.0 + 2.0 * 0.0 + 1.0 * 25.0) / 4.0;
        assert!((g.mu - 90.0).abs() < 1e-9);
        assert!((g.sigma2 - oracle).abs() < 1e-9);
        assert_eq!(fit_gaussian(&[1.0; 72], 5.0), Err(NoEstimate::Diffuse));
        assert_eq!(fit_gaussian(&[0.0; 72], 5.0), Err(NoEstimate::TooFewSpikes));
    }

    #[test]
    fn fit_wraps_around_zero() {
        let mut c = vec![0.0; 72];
        c[71] = 1.0;
        c[0] = 2.0;
        c[1] = 1.0;
        let g = fit_gaussian(&c, 5.0).unwrap();
        assert!(g.mu < 1e-9 || g.mu > 360.0 - 1e-9);
        assert!((g.sigma2 - 12.5).abs() < 1e-9);
    }

    #[test]
    fn posterior_cases() {
        let p = optimal_posterior(&GaussianEstimate::new(90.0, 25.0), &GaussianEstimate::new(100.0, 25.0)).unwrap();
        assert!((p.mu - 95.0).abs() < 1e-12 && (p.sigma2 - 12.5).abs() < 1e-12);
        let p = optimal_posterior(&GaussianEstimate::new(90.0, 25.0), &GaussianEstimate::new(90.0, 100.0)).unwrap();
        assert!((p.mu - 90.0).abs() < 1e-12 && (p.sigma2 - 20.0).abs() < 1e-12);
        let p = optimal_posterior(&GaussianEstimate::new(355.0, 25.0), &GaussianEstimate::new(5.0, 25.0)).unwrap();
        assert!(angle_diff(p.mu, 0.0).abs() < 1e-9 && (p.sigma2 - 12.5).abs() < 1e-12);
        assert!(matches!(
            optimal_posterior(&GaussianEstimate::new(0.0, 25.0), &GaussianEstimate::new(120.0, 25.0)),
            Err(Error::AmbiguousFusion(_))
        ));
    }

    #[test]
    fn map_clipping_to_boundary() {
        let lv = DistanceLevels::default();
        let mut g = GridMap::new(20, 0.2, Vec2::new(0.0, 0.0));
        decode_map(&[(0, 2)], &lv, 5.0, Vec2::new(2.0, 2.0), &mut g);
        assert_eq!(g.occupied(), vec![(19, 10)]);
    }

    #[test]
    fn f1_extremes() {
        let t = vec![(0, 0), (1, 0), (2, 0)];
        assert_eq!(map_f1(&t, &t), 1.0);
        assert_eq!(map_f1(&[(10, 10)], &t), 0.0);
        assert_eq!(map_f1(&[], &t), 0.0);
    }

    #[test]
    fn error_stats_constant_offset() {
        let samples: Vec<HeadingSample> = (0..100)
            .map(|i| HeadingSample {
                step: i,
                truth: (i as f64 * 7.0) % 360.0,
                decoded: Some((i as f64 * 7.0 + 10.0) % 360.0),
            })
            .collect();
        let s = heading_error_stats(&samples);
        assert!((s.mean - 10.0).abs() < 1e-9);
        assert!(s.std < 1e-6);
        let exact: Vec<HeadingSample> = samples
            .iter()
            .map(|s| HeadingSample {
                decoded: Some(s.truth),
                ..*s
            })
            .collect();
        assert_eq!(heading_error_stats(&exact).mean, 0.0);
    }
}
