//! 2D differential-drive navigation world: rectangular obstacles, a planar
//! laser scanner, unicycle kinematics and the two reward functions.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::networks::{Action, Observation, SwitchChoice};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center: [f64; 2],
    pub half_extents: [f64; 2],
}

impl Rect {
    pub fn new(cx: f64, cy: f64, hx: f64, hy: f64) -> Self {
        Self {
            center: [cx, cy],
            half_extents: [hx, hy],
        }
    }

    pub fn min(&self) -> [f64; 2] {
        [self.center[0] - self.half_extents[0], self.center[1] - self.half_extents[1]]
    }

    pub fn max(&self) -> [f64; 2] {
        [self.center[0] + self.half_extents[0], self.center[1] + self.half_extents[1]]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (p[0] - self.center[0]).abs() <= self.half_extents[0] && (p[1] - self.center[1]).abs() <= self.half_extents[1]
    }

    /// Euclidean distance from `p` to the rectangle (0 inside).
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let dx = ((p[0] - self.center[0]).abs() - self.half_extents[0]).max(0.0);
        let dy = ((p[1] - self.center[1]).abs() - self.half_extents[1]).max(0.0);
        dx.hypot(dy)
    }

    fn corners(&self) -> [[f64; 2]; 4] {
        let (lo, hi) = (self.min(), self.max());
        [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
    }

    /// Entry distance of the ray `origin + t·dir` (unit `dir`), 0 when the
    /// origin is inside.
    pub fn ray_hit(&self, origin: [f64; 2], dir: [f64; 2]) -> Option<f64> {
        if self.contains(origin) {
            return Some(0.0);
        }
        let (lo, hi) = (self.min(), self.max());
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for k in 0..2 {
            if dir[k] == 0.0 {
                if origin[k] < lo[k] || origin[k] > hi[k] {
                    return None;
                }
            } else {
                let t1 = (lo[k] - origin[k]) / dir[k];
                let t2 = (hi[k] - origin[k]) / dir[k];
                t_near = t_near.max(t1.min(t2));
                t_far = t_far.min(t1.max(t2));
            }
        }
        (t_near <= t_far && t_near >= 0.0).then_some(t_near)
    }

    /// Whether the closed segment `a → b` touches the rectangle.
    pub fn segment_intersects(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let (lo, hi) = (self.min(), self.max());
        let d = [b[0] - a[0], b[1] - a[1]];
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        for k in 0..2 {
            if d[k] == 0.0 {
                if a[k] < lo[k] || a[k] > hi[k] {
                    return false;
                }
            } else {
                let u = (lo[k] - a[k]) / d[k];
                let v = (hi[k] - a[k]) / d[k];
                t0 = t0.max(u.min(v));
                t1 = t1.min(u.max(v));
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    /// Minimum distance between the segment `a → b` and the rectangle.
    pub fn segment_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        if self.segment_intersects(a, b) {
            return 0.0;
        }
        // Disjoint convex sets: the minimum is attained at a vertex of one of them.
        let mut d = self.distance_to(a).min(self.distance_to(b));
        for c in self.corners() {
            d = d.min(point_segment_distance(c, a, b));
        }
        d
    }
}

pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub beams: usize,
    /// Field of view in radians, centred on the heading.
    pub fov: f64,
    pub max_range: f64,
    /// Number of consecutive scans stacked into one observation.
    pub stack: usize,
}

impl ScanSpec {
    /// Beam angle relative to the heading, first beam on the right.
    pub fn beam_angle(&self, i: usize) -> f64 {
        if self.beams == 1 {
            0.0
        } else {
            -0.5 * self.fov + self.fov * i as f64 / (self.beams - 1) as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpawnRule {
    /// Clearance from the room walls for both start and target.
    pub margin: f64,
    /// Minimum start-to-target distance.
    pub min_goal_distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub name: String,
    /// The room spans `[-hx, hx] × [-hy, hy]`.
    pub half_extents: [f64; 2],
    #[serde(default)]
    pub obstacles: Vec<Rect>,
    pub robot_radius: f64,
    pub scan: ScanSpec,
    pub dt: f64,
    pub horizon: usize,
    pub reach_threshold: f64,
    pub spawn: SpawnRule,
}

pub const DEFAULT_SCAN: ScanSpec = ScanSpec {
    beams: 512,
    fov: 1.5 * PI,
    max_range: 6.0,
    stack: 3,
};

impl WorldSpec {
    fn base(name: &str, half: f64, obstacles: Vec<Rect>) -> Self {
        let robot_radius = 0.25;
        Self {
            name: name.into(),
            half_extents: [half, half],
            obstacles,
            robot_radius,
            scan: DEFAULT_SCAN,
            dt: 0.2,
            horizon: 200,
            reach_threshold: 0.3,
            spawn: SpawnRule {
                margin: robot_radius + 0.25,
                min_goal_distance: 1.0,
            },
        }
    }

    /// 8 × 8 m room, no obstacles.
    pub fn empty() -> Self {
        Self::base("empty", 4.0, Vec::new())
    }

    /// 8 × 8 m room with three boxes.
    pub fn simple() -> Self {
        Self::base(
            "simple",
            4.0,
            vec![
                Rect::new(1.5, 1.5, 0.5, 0.5),
                Rect::new(-1.6, -0.8, 0.4, 0.9),
                Rect::new(1.2, -2.3, 0.9, 0.3),
            ],
        )
    }

    /// 10 × 10 m room with wall segments forming corridors.
    pub fn complex() -> Self {
        Self::base(
            "complex",
            5.0,
            vec![
                Rect::new(-2.8, 2.0, 1.4, 0.15),
                Rect::new(2.6, 2.0, 1.2, 0.15),
                Rect::new(-0.6, -1.4, 0.15, 1.6),
                Rect::new(2.6, -0.9, 1.3, 0.15),
                Rect::new(-3.4, -2.6, 0.6, 0.6),
                Rect::new(0.4, 3.9, 0.3, 0.6),
                Rect::new(3.6, 3.6, 0.5, 0.3),
                Rect::new(1.6, -3.6, 0.3, 0.9),
                Rect::new(-3.9, 0.4, 0.5, 0.3),
            ],
        )
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "empty" => Some(Self::empty()),
            "simple" => Some(Self::simple()),
            "complex" => Some(Self::complex()),
            _ => None,
        }
    }

    /// A preset name, or a path to a TOML world file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        match Self::preset(name_or_path) {
            Some(w) => Ok(w),
            None => Self::load(Path::new(name_or_path)),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: WorldSpec = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<world>".into(),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("world spec serializes")
    }

    /// Hash of the geometry and sensor layout. Name, timing and spawn rules
    /// are left out, so a horizon override keeps the fingerprint.
    pub fn fingerprint(&self) -> String {
        let geometry = (self.half_extents, &self.obstacles, self.robot_radius, self.scan);
        crate::fingerprint(serde_json::to_string(&geometry).expect("world serializes").as_bytes())
    }

    pub fn diagonal(&self) -> f64 {
        2.0 * self.half_extents[0].hypot(self.half_extents[1])
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("half_extents[0]", self.half_extents[0]),
            ("half_extents[1]", self.half_extents[1]),
            ("robot_radius", self.robot_radius),
            ("scan.fov", self.scan.fov),
            ("scan.max_range", self.scan.max_range),
            ("dt", self.dt),
            ("reach_threshold", self.reach_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Spec(format!("{name} must be positive, got {v}")));
            }
        }
        if self.scan.beams == 0 || self.scan.stack == 0 || self.horizon == 0 {
            return Err(Error::Spec("beams, stack and horizon must be positive".into()));
        }
        if self.spawn.margin < self.robot_radius {
            return Err(Error::Spec("spawn margin must be at least the robot radius".into()));
        }
        for (i, r) in self.obstacles.iter().enumerate() {
            let (lo, hi) = (r.min(), r.max());
            let inside = r.half_extents.iter().all(|h| *h > 0.0)
                && lo[0] >= -self.half_extents[0]
                && lo[1] >= -self.half_extents[1]
                && hi[0] <= self.half_extents[0]
                && hi[1] <= self.half_extents[1];
            if !inside {
                return Err(Error::Spec(format!("obstacle {i} is degenerate or leaves the room")));
            }
        }
        Ok(())
    }

    /// Smallest distance from `p` to any obstacle.
    pub fn obstacle_clearance(&self, p: [f64; 2]) -> f64 {
        self.obstacles.iter().map(|r| r.distance_to(p)).fold(f64::INFINITY, f64::min)
    }

    /// Whether a disc of the robot's radius swept along `a → b` touches a wall
    /// or an obstacle.
    pub fn swept_collision(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        let r = self.robot_radius;
        for p in [a, b] {
            if p[0].abs() + r > self.half_extents[0] || p[1].abs() + r > self.half_extents[1] {
                return true;
            }
        }
        self.obstacles.iter().any(|o| o.segment_distance(a, b) < r)
    }

    /// Disc-at-a-point version of [`Self::swept_collision`].
    pub fn disc_collision(&self, p: [f64; 2]) -> bool {
        self.swept_collision(p, p)
    }

    /// Exact distance along a ray to the first wall or obstacle, clamped to
    /// the scanner range.
    pub fn cast(&self, origin: [f64; 2], angle: f64) -> f64 {
        let dir = [angle.cos(), angle.sin()];
        let mut t = f64::INFINITY;
        for k in 0..2 {
            let h = self.half_extents[k];
            if dir[k] > 0.0 {
                t = t.min((h - origin[k]) / dir[k]);
            } else if dir[k] < 0.0 {
                t = t.min((-h - origin[k]) / dir[k]);
            }
        }
        t = t.max(0.0);
        for o in &self.obstacles {
            if let Some(hit) = o.ray_hit(origin, dir) {
                t = t.min(hit);
            }
        }
        t.min(self.scan.max_range)
    }

    /// Full scan from `pose`, scanner at the robot centre.
    pub fn raycast(&self, pose: &Pose) -> Vec<f64> {
        (0..self.scan.beams)
            .map(|i| self.cast([pose.x, pose.y], pose.theta + self.scan.beam_angle(i)))
            .collect()
    }

    /// Seeded start pose and target.
    pub fn spawn(&self, seed: u64) -> Result<(Pose, [f64; 2])> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = self.spawn.margin;
        let (hx, hy) = (self.half_extents[0] - m, self.half_extents[1] - m);
        if hx <= 0.0 || hy <= 0.0 {
            return Err(Error::Spec("spawn margin leaves no free space".into()));
        }
        const ATTEMPTS: usize = 1000;
        let draw = |rng: &mut ChaCha8Rng| [rng.random_range(-hx..=hx), rng.random_range(-hy..=hy)];

        let target = (0..ATTEMPTS)
            .map(|_| draw(&mut rng))
            .find(|p| self.obstacle_clearance(*p) > self.robot_radius)
            .ok_or_else(|| Error::Spec(format!("no free target position after {ATTEMPTS} attempts")))?;
        let start = (0..ATTEMPTS)
            .map(|_| draw(&mut rng))
            .find(|p| {
                self.obstacle_clearance(*p) > m
                    && (p[0] - target[0]).hypot(p[1] - target[1]) >= self.spawn.min_goal_distance
            })
            .ok_or_else(|| Error::Spec(format!("no free start position after {ATTEMPTS} attempts")))?;
        let theta = normalize_angle(rng.random_range(-PI..PI));
        Ok((
            Pose {
                x: start[0],
                y: start[1],
                theta,
            },
            target,
        ))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RobotState {
    pub pose: Pose,
    pub v: f64,
    pub omega: f64,
}

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// World point expressed in the body frame of `pose` (x forward, y left).
pub fn to_local_frame(target: [f64; 2], pose: &Pose) -> [f64; 2] {
    let (s, c) = pose.theta.sin_cos();
    let dx = target[0] - pose.x;
    let dy = target[1] - pose.y;
    [c * dx + s * dy, -s * dx + c * dy]
}

pub fn to_world_frame(local: [f64; 2], pose: &Pose) -> [f64; 2] {
    let (s, c) = pose.theta.sin_cos();
    [pose.x + c * local[0] - s * local[1], pose.y + s * local[0] + c * local[1]]
}

/// One Euler step of the unicycle model.
pub fn integrate(pose: &Pose, action: Action, dt: f64) -> Pose {
    Pose {
        x: pose.x + action.v * pose.theta.cos() * dt,
        y: pose.y + action.v * pose.theta.sin() * dt,
        theta: normalize_angle(pose.theta + action.omega * dt),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Terminal {
    None,
    Reach,
    Crash,
    Timeout,
}

impl Terminal {
    pub fn is_end(self) -> bool {
        self != Terminal::None
    }

    /// Whether the transition ends the MDP (no bootstrapping). A timeout only
    /// truncates the episode.
    pub fn is_absorbing(self) -> bool {
        matches!(self, Terminal::Reach | Terminal::Crash)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Terminal::None => "NONE",
            Terminal::Reach => "REACH",
            Terminal::Crash => "CRASH",
            Terminal::Timeout => "TIMEOUT",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Dense,
    Sparse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub kind: RewardKind,
    pub reach: f64,
    pub crash: f64,
    /// Time penalty `C` inside the dense term.
    pub dense_penalty: f64,
    /// Per-step penalty of the sparse reward.
    pub time_penalty: f64,
    /// `γ_p` applied to positive dense rewards earned by the controller.
    pub controller_discount: f64,
}

impl RewardSpec {
    pub fn dense() -> Self {
        Self {
            kind: RewardKind::Dense,
            reach: 2.0,
            crash: -2.0,
            dense_penalty: 0.01,
            time_penalty: 0.05,
            controller_discount: 0.5,
        }
    }

    pub fn sparse() -> Self {
        Self {
            kind: RewardKind::Sparse,
            ..Self::dense()
        }
    }

    pub fn reward(&self, d_prev: f64, d_now: f64, dt: f64, sigma: SwitchChoice, outcome: Terminal) -> f64 {
        match self.kind {
            RewardKind::Dense => dense_reward(d_prev, d_now, dt, sigma, outcome, self),
            RewardKind::Sparse => sparse_reward(outcome, self),
        }
    }
}

/// Distance-progress shaping: `γ_p·((d_prev − d_now)·Δt − C)` away from the
/// terminal cases.
pub fn dense_reward(d_prev: f64, d_now: f64, dt: f64, sigma: SwitchChoice, outcome: Terminal, spec: &RewardSpec) -> f64 {
    match outcome {
        Terminal::Crash => spec.crash,
        Terminal::Reach => spec.reach,
        Terminal::None | Terminal::Timeout => {
            let r = (d_prev - d_now) * dt - spec.dense_penalty;
            if sigma == SwitchChoice::Controller && r > 0.0 {
                spec.controller_discount * r
            } else {
                r
            }
        }
    }
}

pub fn sparse_reward(outcome: Terminal, spec: &RewardSpec) -> f64 {
    match outcome {
        Terminal::Crash => spec.crash,
        Terminal::Reach => spec.reach,
        Terminal::None | Terminal::Timeout => -spec.time_penalty,
    }
}

/// Evaluation score: −0.01 per step, +2 on reaching the goal.
pub fn eval_metric(steps: usize, reached: bool) -> f64 {
    let base = -0.01 * steps as f64;
    if reached {
        base + 2.0
    } else {
        base
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub terminal: Terminal,
}

/// A running episode.
#[derive(Clone, Debug)]
pub struct NavEnv {
    spec: WorldSpec,
    reward: RewardSpec,
    state: RobotState,
    target: [f64; 2],
    stack: VecDeque<Arc<[f64]>>,
    steps: usize,
    finished: bool,
}

impl NavEnv {
    pub fn new(spec: WorldSpec, reward: RewardSpec) -> Result<Self> {
        spec.validate()?;
        let (pose, target) = spec.spawn(0)?;
        let mut env = Self {
            spec,
            reward,
            state: RobotState {
                pose,
                v: 0.0,
                omega: 0.0,
            },
            target,
            stack: VecDeque::new(),
            steps: 0,
            finished: false,
        };
        env.place(pose, target);
        Ok(env)
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn reward_spec(&self) -> &RewardSpec {
        &self.reward
    }

    pub fn state(&self) -> &RobotState {
        &self.state
    }

    pub fn target(&self) -> [f64; 2] {
        self.target
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn distance_to_goal(&self) -> f64 {
        let p = self.state.pose;
        (self.target[0] - p.x).hypot(self.target[1] - p.y)
    }

    pub fn reset(&mut self, seed: u64) -> Result<Observation> {
        let (pose, target) = self.spec.spawn(seed)?;
        self.place(pose, target);
        Ok(self.observation())
    }

    /// Puts the robot at rest at `pose` with a fresh scan stack (the first scan
    /// repeated).
    pub fn place(&mut self, pose: Pose, target: [f64; 2]) {
        self.state = RobotState {
            pose,
            v: 0.0,
            omega: 0.0,
        };
        self.target = target;
        self.steps = 0;
        self.finished = false;
        let scan: Arc<[f64]> = self.spec.raycast(&pose).into();
        self.stack = std::iter::repeat_n(scan, self.spec.scan.stack).collect();
    }

    pub fn observation(&self) -> Observation {
        Observation {
            scan_stack: self.stack.iter().cloned().collect(),
            speed: [self.state.v, self.state.omega],
            target_local: to_local_frame(self.target, &self.state.pose),
        }
    }

    /// Applies `action` for one control period. Crash takes priority over
    /// reach, reach over timeout.
    pub fn step(&mut self, action: Action, sigma: SwitchChoice) -> StepOutcome {
        assert!(!self.finished, "step called on a finished episode");
        let d_prev = self.distance_to_goal();
        let start = self.state.pose;
        let pose = integrate(&start, action, self.spec.dt);
        self.state = RobotState {
            pose,
            v: action.v,
            omega: action.omega,
        };
        self.steps += 1;
        let d_now = self.distance_to_goal();

        let terminal = if self.spec.swept_collision(start.position(), pose.position()) {
            Terminal::Crash
        } else if d_now < self.spec.reach_threshold {
            Terminal::Reach
        } else if self.steps >= self.spec.horizon {
            Terminal::Timeout
        } else {
            Terminal::None
        };
        self.finished = terminal.is_end();

        self.stack.pop_front();
        self.stack.push_back(self.spec.raycast(&pose).into());
        let reward = self.reward.reward(d_prev, d_now, self.spec.dt, sigma, terminal);
        StepOutcome {
            observation: self.observation(),
            reward,
            terminal,
        }
    }
}
