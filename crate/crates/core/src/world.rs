//! Simulated arenas, a rotating robot, a depth camera and noisy odometry.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_heading(deg: f64) -> Self {
        let r = deg.to_radians();
        Self::new(r.cos(), r.sin())
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;

    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;

    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub const fn new(ax: f64, ay: f64, bx: f64, by: f64) -> Self {
        Self {
            a: Vec2::new(ax, ay),
            b: Vec2::new(bx, by),
        }
    }

    /// Distance along the ray `origin + t * dir` (unit `dir`) to this segment.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let edge = self.b - self.a;
        let denom = dir.cross(edge);
        if denom.abs() < 1e-12 {
            return None;
        }
        let rel = self.a - origin;
        let t = rel.cross(edge) / denom;
        let u = rel.cross(dir) / denom;
        (t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u)).then_some(t)
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }
}

/// Axis-aligned square region `[min, min + size]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub min: Vec2,
    pub size: f64,
}

impl Extent {
    pub fn contains(&self, p: Vec2) -> bool {
        let eps = 1e-9;
        p.x >= self.min.x - eps
            && p.y >= self.min.y - eps
            && p.x <= self.min.x + self.size + eps
            && p.y <= self.min.y + self.size + eps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub name: String,
    pub extent: Extent,
    pub segments: Vec<Segment>,
    /// Where the robot stands during a rotation run.
    pub robot_position: Vec2,
    /// Visiting order for multi-place-cell runs; empty for single-place arenas.
    #[serde(default)]
    pub waypoints: Vec<Vec2>,
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent.size > 0.0) {
            return Err(Error::Config(format!("{}: extent size must be > 0", self.name)));
        }
        for s in &self.segments {
            if !self.extent.contains(s.a) || !self.extent.contains(s.b) {
                return Err(Error::Config(format!(
                    "{}: segment {:?} leaves the extent",
                    self.name, s
                )));
            }
        }
        if !self.extent.contains(self.robot_position) {
            let p = self.robot_position;
            return Err(Error::OutsideExtent { x: p.x, y: p.y });
        }
        Ok(())
    }

    /// Noise-free distance to the nearest segment along `heading`.
    pub fn ray_distance(&self, position: Vec2, heading: f64) -> Option<f64> {
        let dir = Vec2::from_heading(heading);
        self.segments
            .iter()
            .filter_map(|s| s.ray_hit(position, dir))
            .min_by(f64::total_cmp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Environment = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        env.validate()?;
        Ok(env)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub dropout_prob: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            max_range: 4.0,
            range_noise_sigma: 0.02,
            dropout_prob: 0.0,
        }
    }
}

impl SensorModel {
    pub fn noiseless(max_range: f64) -> Self {
        Self {
            max_range,
            range_noise_sigma: 0.0,
            dropout_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0) {
            return Err(Error::Config("sensor max_range must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::Config("sensor dropout_prob must be in [0,1]".into()));
        }
        if !(self.range_noise_sigma >= 0.0) {
            return Err(Error::Config("sensor noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OdometryModel {
    pub omega_noise_sigma: f64,
    pub omega_bias: f64,
}

impl Default for OdometryModel {
    fn default() -> Self {
        Self {
            omega_noise_sigma: 1.0,
            omega_bias: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec2,
    /// Degrees in `[0, 360)`.
    pub heading: f64,
    /// Commanded angular velocity, degrees per second (counter-clockwise positive).
    pub omega: f64,
}

pub fn wrap_degrees(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// One depth reading along `heading`. `None` is a no-return.
pub fn raycast<R: Rng + ?Sized>(
    env: &Environment,
    position: Vec2,
    heading: f64,
    sensor: &SensorModel,
    rng: &mut R,
) -> Result<Option<f64>> {
    if !env.extent.contains(position) {
        return Err(Error::OutsideExtent {
            x: position.x,
            y: position.y,
        });
    }
    let Some(d) = env.ray_distance(position, heading) else {
        return Ok(None);
    };
    if sensor.dropout_prob > 0.0 && rng.random::<f64>() < sensor.dropout_prob {
        return Ok(None);
    }
    let noisy = if sensor.range_noise_sigma > 0.0 {
        let n = Normal::new(0.0, sensor.range_noise_sigma).expect("sigma validated");
        (d + n.sample(rng)).max(0.0)
    } else {
        d
    };
    Ok((noisy <= sensor.max_range).then_some(noisy))
}

/// Depth camera: one ray per heading bin over `[-half_width, half_width]`
/// bins around `heading`. Element `i` is the ray at offset `i - half_width`.
pub fn camera_scan<R: Rng + ?Sized>(
    env: &Environment,
    position: Vec2,
    heading: f64,
    half_width: usize,
    resolution: f64,
    sensor: &SensorModel,
    rng: &mut R,
) -> Result<Vec<Option<f64>>> {
    let w = half_width as i64;
    (-w..=w)
        .map(|j| {
            raycast(
                env,
                position,
                wrap_degrees(heading + j as f64 * resolution),
                sensor,
                rng,
            )
        })
        .collect()
}

/// Advances the true heading by `omega * dt` and returns the odometry report
/// `omega + bias + N(0, sigma)`.
pub fn step_world<R: Rng + ?Sized>(
    state: &RobotState,
    dt: f64,
    odom: &OdometryModel,
    rng: &mut R,
) -> (RobotState, f64) {
    debug_assert!(dt > 0.0);
    let noise = if odom.omega_noise_sigma > 0.0 {
        Normal::new(0.0, odom.omega_noise_sigma)
            .expect("sigma is positive")
            .sample(rng)
    } else {
        0.0
    };
    let next = RobotState {
        heading: wrap_degrees(state.heading + state.omega * dt),
        ..*state
    };
    (next, state.omega + odom.omega_bias + noise)
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Segment> {
    vec![
        Segment::new(x0, y0, x1, y0),
        Segment::new(x1, y0, x1, y1),
        Segment::new(x1, y1, x0, y1),
        Segment::new(x0, y1, x0, y0),
    ]
}

const ARENA: Extent = Extent {
    min: Vec2::new(0.0, 0.0),
    size: 4.0,
};

/// Env1: square room standing in for the physical arena, with a box in one
/// corner and the robot off-centre.
pub fn env1() -> Environment {
    let mut segments = rect(0.0, 0.0, 4.0, 4.0);
    // box against the north-east corner: only its two inner faces are visible
    segments.push(Segment::new(3.2, 3.2, 4.0, 3.2));
    segments.push(Segment::new(3.2, 3.2, 3.2, 4.0));
    Environment {
        name: "env1".into(),
        extent: ARENA,
        segments,
        robot_position: Vec2::new(1.8, 1.7),
        waypoints: Vec::new(),
    }
}

/// Env2: plain 4 m square room.
pub fn env2() -> Environment {
    Environment {
        name: "env2".into(),
        extent: ARENA,
        segments: rect(0.0, 0.0, 4.0, 4.0),
        robot_position: Vec2::new(1.8, 1.7),
        waypoints: Vec::new(),
    }
}

/// Env3: two detached straight walls, each subtending roughly 90 degrees from
/// the robot, separated by open gaps.
pub fn env3() -> Environment {
    Environment {
        name: "env3".into(),
        extent: ARENA,
        segments: vec![
            // north wall, ~1.1 m away: spans headings ~45..135
            Segment::new(0.9, 3.1, 3.1, 3.1),
            // south wall, ~1.8 m away: spans headings ~225..315
            Segment::new(0.2, 0.2, 3.8, 0.2),
        ],
        robot_position: Vec2::new(2.0, 2.0),
        waypoints: Vec::new(),
    }
}

/// Env4: two differently shaped convex objects (a box and a triangle) with
/// gaps between them.
pub fn env4() -> Environment {
    let mut segments = rect(2.9, 2.9, 3.7, 3.7);
    segments.extend([
        Segment::new(0.3, 1.7, 1.5, 0.3),
        Segment::new(1.5, 0.3, 0.3, 0.3),
        Segment::new(0.3, 0.3, 0.3, 1.7),
    ]);
    Environment {
        name: "env4".into(),
        extent: ARENA,
        segments,
        robot_position: Vec2::new(2.0, 2.0),
        waypoints: Vec::new(),
    }
}

/// Two identical boxes placed point-symmetrically about the robot, so every
/// view is repeated 180 degrees later.
pub fn env4_symmetric() -> Environment {
    let mut segments = rect(2.9, 2.9, 3.7, 3.7);
    segments.extend(rect(0.3, 0.3, 1.1, 1.1));
    Environment {
        name: "env4sym".into(),
        extent: ARENA,
        segments,
        robot_position: Vec2::new(2.0, 2.0),
        waypoints: Vec::new(),
    }
}

/// Double-T maze on an 8 m square, with one waypoint per junction and arm end.
pub fn double_t_maze() -> Environment {
    // corridor centre lines: horizontal bars at y=1 and y=7, vertical stem at x=4
    let w = 0.6;
    let segments = vec![
        // bottom bar
        Segment::new(1.0 - w, 1.0 - w, 7.0 + w, 1.0 - w),
        Segment::new(1.0 - w, 1.0 + w, 4.0 - w, 1.0 + w),
        Segment::new(4.0 + w, 1.0 + w, 7.0 + w, 1.0 + w),
        Segment::new(1.0 - w, 1.0 - w, 1.0 - w, 1.0 + w),
        Segment::new(7.0 + w, 1.0 - w, 7.0 + w, 1.0 + w),
        // stem
        Segment::new(4.0 - w, 1.0 + w, 4.0 - w, 7.0 - w),
        Segment::new(4.0 + w, 1.0 + w, 4.0 + w, 7.0 - w),
        // top bar
        Segment::new(1.0 - w, 7.0 + w, 7.0 + w, 7.0 + w),
        Segment::new(1.0 - w, 7.0 - w, 4.0 - w, 7.0 - w),
        Segment::new(4.0 + w, 7.0 - w, 7.0 + w, 7.0 - w),
        Segment::new(1.0 - w, 7.0 - w, 1.0 - w, 7.0 + w),
        Segment::new(7.0 + w, 7.0 - w, 7.0 + w, 7.0 + w),
    ];
    let waypoints = vec![
        Vec2::new(1.5, 1.0),
        Vec2::new(4.0, 1.0),
        Vec2::new(6.5, 1.0),
        Vec2::new(4.0, 4.0),
        Vec2::new(1.5, 7.0),
        Vec2::new(4.0, 7.0),
        Vec2::new(6.5, 7.0),
    ];
    Environment {
        name: "maze".into(),
        extent: Extent {
            min: Vec2::new(0.0, 0.0),
            size: 8.0,
        },
        segments,
        robot_position: waypoints[0],
        waypoints,
    }
}

pub fn builtin_environments() -> Vec<Environment> {
    vec![env1(), env2(), env3(), env4(), env4_symmetric(), double_t_maze()]
}

pub fn environment_by_name(name: &str) -> Result<Environment> {
    builtin_environments()
        .into_iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownEnvironment(name.to_string()))
}

/// One row of the trajectory log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: u64,
    pub true_heading: f64,
    pub reported_omega: f64,
    /// Centre-ray depth; `None` on no-return.
    pub depth_reading: Option<f64>,
}

pub fn write_trajectory_csv<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let wrap = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["step", "true_heading", "reported_omega", "depth_reading"])
        .map_err(wrap)?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            format!("{:.6}", r.true_heading),
            format!("{:.6}", r.reported_omega),
            r.depth_reading.map(|d| format!("{d:.6}")).unwrap_or_default(),
        ])
        .map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))
}
