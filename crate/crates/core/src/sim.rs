//! Crowd-navigation benchmark: seeded scenarios, goal-seeking pedestrians
//! that ignore the robot, nominal controllers and a fixed-rate closed loop.
//!
//! Pedestrians obey the same input bounds the HJ game assumes for the
//! obstacle (turn rate for the unicycle walker, acceleration for the double
//! integrator) unless the scenario is generated in noncompliant mode.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{failure, BoxBounds, CollisionGeometry, GroundLimits, Profile, QuadLimits};
use crate::filter::{filter_step_with_bounds, FilterConfig, Observation, ObstacleTracker, QpStatus};
use crate::math::{atan2, cos, hypot, sin, sqrt, wrap_angle};
use crate::net::ResidualModel;
use crate::{Error, Result};

/// Gain of the pedestrian heading controller (rad/s per rad of error).
const PED_TURN_GAIN: f64 = 1.5;
/// Gain of the pedestrian velocity tracking (1/s).
const PED_ACCEL_GAIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Method {
    Filtered,
    NominalOnly,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Filtered => "filtered",
            Method::NominalOnly => "nominal-only",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "filtered" | "cn-cbf" => Some(Method::Filtered),
            "nominal-only" | "nominal" => Some(Method::NominalOnly),
            _ => None,
        }
    }
}

/// Knobs of the benchmark that are not part of a scenario draw.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct SimConfig {
    /// Arena is `[-arena_half, arena_half]²`.
    pub arena_half: f64,
    pub sensing_radius: f64,
    pub timeout: f64,
    pub rate_hz: f64,
    pub ped_speed_min: f64,
    pub ped_speed_max: f64,
    pub robot_goal_tolerance: f64,
    pub ped_goal_tolerance: f64,
    /// A pedestrian gives up on a goal after this long and draws a new one.
    pub ped_goal_timeout: f64,
    /// Minimum initial distance between robot and pedestrian centres beyond
    /// `R_min`.
    pub spawn_clearance: f64,
    /// Pedestrians leaving the arena grown by this margin are reflected.
    pub walk_margin: f64,
    pub compliant: bool,
    pub geometry: CollisionGeometry,
    pub ground: GroundLimits,
    pub quad: QuadLimits,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            arena_half: 6.0,
            sensing_radius: 6.0,
            timeout: 60.0,
            rate_hz: 250.0,
            ped_speed_min: 0.5,
            ped_speed_max: 1.5,
            robot_goal_tolerance: 0.3,
            ped_goal_tolerance: 0.5,
            ped_goal_timeout: 20.0,
            spawn_clearance: 0.5,
            // Twice the tightest turning radius of the fastest walker: a
            // compliant walker heading for an arena goal never gets there.
            walk_margin: 9.0,
            compliant: true,
            geometry: CollisionGeometry::default(),
            ground: GroundLimits::default(),
            quad: QuadLimits::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.arena_half > 0.0
            && self.sensing_radius > 0.0
            && self.timeout > 0.0
            && self.rate_hz > 0.0
            && self.ped_speed_min >= 0.0
            && self.ped_speed_max >= self.ped_speed_min
            && self.robot_goal_tolerance > 0.0
            && self.ped_goal_tolerance > 0.0
            && self.spawn_clearance >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig("simulation parameters out of range".into()))
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// Turn-rate bound of unicycle walkers (twice the game bound when
    /// noncompliant).
    pub fn ped_turn_limit(&self) -> f64 {
        self.ground.omega_o_max * if self.compliant { 1.0 } else { 2.0 }
    }

    /// Per-axis acceleration bound of double-integrator walkers.
    pub fn ped_accel_limit(&self) -> f64 {
        self.quad.d_max * if self.compliant { 1.0 } else { 2.0 }
    }
}

/// A pedestrian walking between random goals.
#[derive(Debug, Clone, PartialEq)]
pub struct PedestrianAgent {
    pub id: u64,
    /// `[x, y, θ, v]` (unicycle) or `[x, y, vx, vy]` (double integrator).
    pub state: [f64; 4],
    pub speed: f64,
    pub goal: [f64; 2],
    pub goal_tolerance: f64,
    /// Time spent on the current goal.
    pub goal_elapsed: f64,
    /// Input applied in the last step: turn rate, or accelerations.
    pub last_input: [f64; 2],
    pub reflections: u32,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub seed: u64,
    pub profile: Profile,
    pub robot_start: Vec<f64>,
    pub robot_goal: [f64; 2],
    pub pedestrians: Vec<PedestrianAgent>,
}

fn draw_goal(rng: &mut ChaCha8Rng, half: f64) -> [f64; 2] {
    // interior goals keep walkers well inside the arena
    let g = 0.9 * half;
    [rng.random_range(-g..g), rng.random_range(-g..g)]
}

/// Deterministic scenario for `(seed, m)`: robot on the left edge heading
/// for the right edge, `m` walkers placed uniformly in the arena at least
/// `R_min + spawn_clearance` away from the robot.
pub fn spawn_scenario(seed: u64, m: usize, profile: Profile, cfg: &SimConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = cfg.arena_half;
    let lane = h - 2.0;
    let start = [-h + 1.0, rng.random_range(-lane..lane)];
    let robot_goal = [h - 1.0, rng.random_range(-lane..lane)];
    let robot_start = match profile {
        Profile::Ground => vec![start[0], start[1], atan2(robot_goal[1] - start[1], robot_goal[0] - start[0])],
        Profile::Quad => vec![start[0], start[1], 0.0, 0.0],
    };
    let min_sep = cfg.geometry.r_min() + cfg.spawn_clearance;
    let mut pedestrians = Vec::with_capacity(m);
    for i in 0..m {
        let mut placed = None;
        for _ in 0..1000 {
            let p = [rng.random_range(-h..h), rng.random_range(-h..h)];
            if hypot(p[0] - start[0], p[1] - start[1]) >= min_sep {
                placed = Some(p);
                break;
            }
        }
        let p = placed.ok_or(Error::Placement { what: "pedestrian", attempts: 1000 })?;
        let speed = rng.random_range(cfg.ped_speed_min..=cfg.ped_speed_max);
        let heading = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
        let state = match profile {
            Profile::Ground => [p[0], p[1], heading, speed],
            Profile::Quad => [p[0], p[1], speed * cos(heading), speed * sin(heading)],
        };
        // each walker owns a goal stream so its path never depends on the robot
        let mut ped_rng = ChaCha8Rng::seed_from_u64(seed);
        ped_rng.set_stream(i as u64 + 1);
        let goal = draw_goal(&mut ped_rng, h);
        pedestrians.push(PedestrianAgent {
            id: i as u64,
            state,
            speed,
            goal,
            goal_tolerance: cfg.ped_goal_tolerance,
            goal_elapsed: 0.0,
            last_input: [0.0; 2],
            reflections: 0,
            rng: ped_rng,
        });
    }
    Ok(Scenario { seed, profile, robot_start, robot_goal, pedestrians })
}

/// One explicit Euler step of a walker. Unicycle walkers turn toward the
/// goal with saturated turn rate at constant speed; double-integrator
/// walkers track a goal-directed velocity with saturated acceleration.
pub fn pedestrian_step(agent: &mut PedestrianAgent, dt: f64, profile: Profile, cfg: &SimConfig) {
    let s = agent.state;
    let (dx, dy) = (agent.goal[0] - s[0], agent.goal[1] - s[1]);
    match profile {
        Profile::Ground => {
            let lim = cfg.ped_turn_limit();
            let e = wrap_angle(atan2(dy, dx) - s[2]);
            let omega = (PED_TURN_GAIN * e).clamp(-lim, lim);
            agent.state = [s[0] + s[3] * cos(s[2]) * dt, s[1] + s[3] * sin(s[2]) * dt, wrap_angle(s[2] + omega * dt), s[3]];
            agent.last_input = [omega, 0.0];
        }
        Profile::Quad => {
            let lim = cfg.ped_accel_limit();
            let d = hypot(dx, dy).max(1e-9);
            let vd = [agent.speed * dx / d, agent.speed * dy / d];
            let a = [(PED_ACCEL_GAIN * (vd[0] - s[2])).clamp(-lim, lim), (PED_ACCEL_GAIN * (vd[1] - s[3])).clamp(-lim, lim)];
            let vmax = cfg.quad.v_o_max;
            agent.state = [
                s[0] + s[2] * dt,
                s[1] + s[3] * dt,
                (s[2] + a[0] * dt).clamp(-vmax, vmax),
                (s[3] + a[1] * dt).clamp(-vmax, vmax),
            ];
            agent.last_input = a;
        }
    }
    // safety net for long walks; never reached by compliant walkers
    let wall = cfg.arena_half + cfg.walk_margin;
    for k in 0..2 {
        if agent.state[k].abs() > wall {
            agent.state[k] = agent.state[k].signum() * (2.0 * wall - agent.state[k].abs());
            match profile {
                Profile::Ground => {
                    let (c, sn) = (cos(agent.state[2]), sin(agent.state[2]));
                    agent.state[2] = if k == 0 { atan2(sn, -c) } else { atan2(-sn, c) };
                }
                Profile::Quad => agent.state[2 + k] = -agent.state[2 + k],
            }
            agent.reflections += 1;
        }
    }
    agent.goal_elapsed += dt;
    let reached = hypot(agent.goal[0] - agent.state[0], agent.goal[1] - agent.state[1]) <= agent.goal_tolerance;
    if reached || agent.goal_elapsed >= cfg.ped_goal_timeout {
        agent.goal = draw_goal(&mut agent.rng, cfg.arena_half);
        agent.goal_elapsed = 0.0;
    }
}

/// Proportional go-to-goal law for the unicycle: `ω = clamp(2e)`,
/// `v = clamp(cos e)` with heading error `e`.
pub fn nominal_ground(x: &[f64], goal: &[f64; 2], lim: &GroundLimits) -> [f64; 2] {
    let e = wrap_angle(atan2(goal[1] - x[1], goal[0] - x[0]) - x[2]);
    [cos(e).clamp(lim.v_min, lim.v_max), (2.0 * e).clamp(-lim.omega_max, lim.omega_max)]
}

/// Discrete LQR gain `[k_p, k_v]` for one axis of the double integrator
/// sampled at `dt` (zero-order hold), state weight `q·I`, input weight `r`.
/// Solved by the structure-preserving doubling iteration.
pub fn lqr_gain(dt: f64, q: f64, r: f64) -> [f64; 2] {
    type M = [[f64; 2]; 2];
    let mul = |a: &M, b: &M| -> M { core::array::from_fn(|i| core::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j])) };
    let add = |a: &M, b: &M| -> M { core::array::from_fn(|i| core::array::from_fn(|j| a[i][j] + b[i][j])) };
    let tr = |a: &M| -> M { [[a[0][0], a[1][0]], [a[0][1], a[1][1]]] };
    let inv = |a: &M| -> M {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]]
    };
    let a: M = [[1.0, dt], [0.0, 1.0]];
    let b = [0.5 * dt * dt, dt];
    let mut ak = a;
    let mut gk: M = core::array::from_fn(|i| core::array::from_fn(|j| b[i] * b[j] / r));
    let mut hk: M = [[q, 0.0], [0.0, q]];
    for _ in 0..100 {
        let w = inv(&add(&[[1.0, 0.0], [0.0, 1.0]], &mul(&gk, &hk)));
        let aw = mul(&ak, &w);
        let next_a = mul(&aw, &ak);
        let next_g = add(&gk, &mul(&mul(&aw, &gk), &tr(&ak)));
        let next_h = add(&hk, &mul(&mul(&tr(&ak), &hk), &mul(&w, &ak)));
        let delta = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (next_h[i][j] - hk[i][j]).abs()).fold(0.0, f64::max);
        ak = next_a;
        gk = next_g;
        hk = next_h;
        if delta <= 1e-14 * (1.0 + hk[0][0].abs()) {
            break;
        }
    }
    let p = hk;
    // K = (r + bᵀPb)⁻¹ bᵀPA
    let pb = [p[0][0] * b[0] + p[0][1] * b[1], p[1][0] * b[0] + p[1][1] * b[1]];
    let denom = r + b[0] * pb[0] + b[1] * pb[1];
    let bpa = [pb[0] * a[0][0] + pb[1] * a[1][0], pb[0] * a[0][1] + pb[1] * a[1][1]];
    [bpa[0] / denom, bpa[1] / denom]
}

/// LQR go-to-goal for the double integrator, decoupled per axis and clamped
/// to the acceleration box.
pub fn nominal_quad(x: &[f64], goal: &[f64; 2], gain: &[f64; 2], lim: &QuadLimits) -> [f64; 2] {
    let ax = -(gain[0] * (x[0] - goal[0]) + gain[1] * x[2]);
    let ay = -(gain[0] * (x[1] - goal[1]) + gain[1] * x[3]);
    [ax.clamp(-lim.a_max, lim.a_max), ay.clamp(-lim.a_max, lim.a_max)]
}

/// Acceleration box that also keeps each velocity component within
/// `±v_max` after one step of length `dt`.
pub fn quad_step_bounds(x: &[f64], dt: f64, lim: &QuadLimits) -> BoxBounds {
    let axis = |v: f64| {
        let lo = ((-lim.v_max - v) / dt).max(-lim.a_max);
        let hi = ((lim.v_max - v) / dt).min(lim.a_max);
        if lo <= hi {
            (lo, hi)
        } else {
            let m = 0.5 * (lo + hi);
            (m, m)
        }
    };
    let (lx, hx) = axis(x[2]);
    let (ly, hy) = axis(x[3]);
    BoxBounds { lower: vec![lx, ly], upper: vec![hx, hy] }
}

fn robot_flow(profile: Profile, x: &[f64], u: &[f64; 2]) -> [f64; 4] {
    match profile {
        Profile::Ground => [u[0] * cos(x[2]), u[0] * sin(x[2]), u[1], 0.0],
        Profile::Quad => [x[2], x[3], u[0], u[1]],
    }
}

/// Classic RK4 step with the input held constant.
pub fn rk4_step(profile: Profile, x: &[f64], u: &[f64; 2], dt: f64) -> Vec<f64> {
    let n = x.len();
    let shift = |base: &[f64], k: &[f64; 4], s: f64| -> Vec<f64> { (0..n).map(|i| base[i] + s * k[i]).collect() };
    let k1 = robot_flow(profile, x, u);
    let k2 = robot_flow(profile, &shift(x, &k1, 0.5 * dt), u);
    let k3 = robot_flow(profile, &shift(x, &k2, 0.5 * dt), u);
    let k4 = robot_flow(profile, &shift(x, &k3, dt), u);
    let mut out: Vec<f64> = (0..n).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect();
    if profile == Profile::Ground {
        out[2] = wrap_angle(out[2]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    Success,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeMetrics {
    pub termination: Termination,
    pub success: bool,
    pub collision: bool,
    pub timeout: bool,
    pub path_length: f64,
    /// Time of termination (time to goal on success).
    pub time: f64,
    pub time_to_goal: Option<f64>,
    /// Smallest signed clearance `ℓ` to any walker over the episode.
    pub min_clearance: f64,
    /// Smallest composite barrier value seen by the filter.
    pub min_h: f64,
    pub intervention_fraction: f64,
    pub slack_steps: usize,
    pub max_slack: f64,
    pub steps: usize,
    /// Largest walker input magnitude (turn rate or per-axis acceleration).
    pub max_ped_input: f64,
    /// Steps in which some walker exceeded the game's disturbance bound.
    pub noncompliant_steps: usize,
    pub reflections: u32,
}

/// One logged step.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub robot: Vec<f64>,
    pub u_ref: [f64; 2],
    pub u: [f64; 2],
    pub h: f64,
    pub sdf_min: f64,
    pub slack: f64,
    pub sensed: usize,
    pub pedestrians: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub metrics: EpisodeMetrics,
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

/// Closed loop at `cfg.rate_hz`: sense walkers within the sensing radius,
/// compute the nominal input, filter it (or only clamp it), then integrate
/// the robot with RK4 and the walkers with Euler. Ends on reaching the goal,
/// on collision (`min ℓ <= 0`) or on timeout.
pub fn run_episode(
    scenario: &Scenario,
    method: Method,
    model: Option<&ResidualModel>,
    filter: &FilterConfig,
    cfg: &SimConfig,
    log: bool,
) -> Result<EpisodeOutcome> {
    cfg.validate()?;
    let profile = scenario.profile;
    if method == Method::Filtered {
        match model {
            None => return Err(Error::InvalidConfig("filtered method needs a model".into())),
            Some(m) if m.profile != profile => {
                return Err(Error::InvalidConfig("model profile does not match the scenario".into()));
            }
            _ => {}
        }
        filter.validate()?;
    }
    let dt = cfg.dt();
    let r_min = cfg.geometry.r_min();
    let game_bound = match profile {
        Profile::Ground => cfg.ground.omega_o_max,
        Profile::Quad => cfg.quad.d_max,
    };
    let gain = lqr_gain(dt, 1.0, 1.0);
    let mut x = scenario.robot_start.clone();
    let mut peds = scenario.pedestrians.clone();
    let mut tracker = ObstacleTracker::new(profile.periodic_dim().map(|_| 2));
    let max_steps = libm::ceil(cfg.timeout * cfg.rate_hz) as usize;
    let mut m = EpisodeMetrics {
        termination: Termination::Timeout,
        success: false,
        collision: false,
        timeout: false,
        path_length: 0.0,
        time: 0.0,
        time_to_goal: None,
        min_clearance: f64::INFINITY,
        min_h: f64::INFINITY,
        intervention_fraction: 0.0,
        slack_steps: 0,
        max_slack: 0.0,
        steps: 0,
        max_ped_input: 0.0,
        noncompliant_steps: 0,
        reflections: 0,
    };
    let mut interventions = 0usize;
    let mut trajectory = log.then(Vec::new);
    let clearance = |x: &[f64], peds: &[PedestrianAgent]| -> f64 {
        peds.iter().map(|p| failure(&[p.state[0] - x[0], p.state[1] - x[1], 0.0, 0.0], r_min)).fold(f64::INFINITY, f64::min)
    };
    let mut ids = Vec::with_capacity(peds.len());
    let mut states = Vec::with_capacity(peds.len());
    let mut radii = Vec::with_capacity(peds.len());
    let bounds_for = |x: &[f64]| match profile {
        Profile::Ground => filter.bounds.clone(),
        Profile::Quad => quad_step_bounds(x, dt, &cfg.quad),
    };
    let mut termination = None;
    let c0 = clearance(&x, &peds);
    m.min_clearance = c0;
    if c0 <= 0.0 {
        termination = Some(Termination::Collision);
    }
    let mut step = 0usize;
    while termination.is_none() && step < max_steps {
        let t = step as f64 * dt;
        ids.clear();
        states.clear();
        radii.clear();
        for p in &peds {
            if hypot(p.state[0] - x[0], p.state[1] - x[1]) <= cfg.sensing_radius {
                ids.push(p.id);
                states.push(p.state);
                radii.push(cfg.geometry.obstacle_radius);
            }
        }
        let u_ref = match profile {
            Profile::Ground => nominal_ground(&x, &scenario.robot_goal, &cfg.ground),
            Profile::Quad => nominal_quad(&x, &scenario.robot_goal, &gain, &cfg.quad),
        };
        let bounds = bounds_for(&x);
        let (u, h, slack) = match method {
            Method::NominalOnly => {
                let u = bounds.clamp(&u_ref);
                ([u[0], u[1]], f64::NAN, 0.0)
            }
            Method::Filtered => {
                let obs = Observation { ids: &ids, states: &states, radii: &radii };
                let out = filter_step_with_bounds(&x, &u_ref, obs, &mut tracker, model.unwrap(), filter, &bounds, t)?;
                let d = &out.diagnostics;
                if d.h < m.min_h {
                    m.min_h = d.h;
                }
                if d.status == QpStatus::Slack {
                    m.slack_steps += 1;
                    m.max_slack = m.max_slack.max(d.slack);
                }
                if d.intervened {
                    interventions += 1;
                }
                ([out.u[0], out.u[1]], d.h, d.slack)
            }
        };
        if let Some(tr) = trajectory.as_mut() {
            tr.push(TrajectoryRow {
                t,
                robot: x.clone(),
                u_ref,
                u,
                h,
                sdf_min: clearance(&x, &peds),
                slack,
                sensed: ids.len(),
                pedestrians: peds.iter().map(|p| [p.state[0], p.state[1]]).collect(),
            });
        }
        let next = rk4_step(profile, &x, &u, dt);
        m.path_length += hypot(next[0] - x[0], next[1] - x[1]);
        x = next;
        let mut over = false;
        for (i, p) in peds.iter_mut().enumerate() {
            pedestrian_step(p, dt, profile, cfg);
            let mag = p.last_input[0].abs().max(p.last_input[1].abs());
            m.max_ped_input = m.max_ped_input.max(mag);
            let violated = mag > game_bound * (1.0 + 1e-12) || p.reflections > 0;
            if violated && cfg.compliant {
                return Err(Error::NonCompliant { index: i });
            }
            over |= violated;
        }
        if over {
            m.noncompliant_steps += 1;
        }
        step += 1;
        let c = clearance(&x, &peds);
        m.min_clearance = m.min_clearance.min(c);
        if c <= 0.0 {
            termination = Some(Termination::Collision);
        } else if hypot(x[0] - scenario.robot_goal[0], x[1] - scenario.robot_goal[1]) <= cfg.robot_goal_tolerance {
            termination = Some(Termination::Success);
        }
    }
    let termination = termination.unwrap_or(Termination::Timeout);
    m.steps = step;
    m.time = step as f64 * dt;
    m.termination = termination;
    m.success = termination == Termination::Success;
    m.collision = termination == Termination::Collision;
    m.timeout = termination == Termination::Timeout;
    m.time_to_goal = m.success.then_some(m.time);
    m.intervention_fraction = if step > 0 { interventions as f64 / step as f64 } else { 0.0 };
    m.reflections = peds.iter().map(|p| p.reflections).sum();
    Ok(EpisodeOutcome { metrics: m, trajectory })
}

/// Per-episode benchmark row.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeRow {
    pub method: Method,
    pub obstacles: usize,
    pub seed: u64,
    pub metrics: EpisodeMetrics,
}

/// Aggregate over the episodes of one `(method, M)` cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CellSummary {
    pub method: Method,
    pub obstacles: usize,
    pub episodes: usize,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    /// Over successful episodes.
    pub path_length_mean: f64,
    pub path_length_std: f64,
    pub time_to_goal_mean: f64,
    pub time_to_goal_std: f64,
    pub min_clearance: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkReport {
    pub profile: Profile,
    pub compliant: bool,
    pub rows: Vec<EpisodeRow>,
    pub cells: Vec<CellSummary>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, sqrt(var))
}

/// Aggregates rows into one summary per `(method, M)` in first-seen order.
pub fn summarize(rows: &[EpisodeRow]) -> Vec<CellSummary> {
    let mut keys: Vec<(Method, usize)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.method, r.obstacles)) {
            keys.push((r.method, r.obstacles));
        }
    }
    keys.into_iter()
        .map(|(method, obstacles)| {
            let cell: Vec<&EpisodeRow> = rows.iter().filter(|r| r.method == method && r.obstacles == obstacles).collect();
            let n = cell.len() as f64;
            let frac = |f: &dyn Fn(&EpisodeMetrics) -> bool| 100.0 * cell.iter().filter(|r| f(&r.metrics)).count() as f64 / n;
            let ok: Vec<&&EpisodeRow> = cell.iter().filter(|r| r.metrics.success).collect();
            let (pl_m, pl_s) = mean_std(&ok.iter().map(|r| r.metrics.path_length).collect::<Vec<_>>());
            let (tg_m, tg_s) = mean_std(&ok.iter().map(|r| r.metrics.time).collect::<Vec<_>>());
            CellSummary {
                method,
                obstacles,
                episodes: cell.len(),
                success_rate: frac(&|m| m.success),
                collision_rate: frac(&|m| m.collision),
                timeout_rate: frac(&|m| m.timeout),
                path_length_mean: pl_m,
                path_length_std: pl_s,
                time_to_goal_mean: tg_m,
                time_to_goal_std: tg_s,
                min_clearance: cell.iter().map(|r| r.metrics.min_clearance).fold(f64::INFINITY, f64::min),
            }
        })
        .collect()
}

/// Benchmark matrix description.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPlan {
    pub profile: Profile,
    pub obstacle_counts: Vec<usize>,
    pub scenarios: usize,
    pub base_seed: u64,
    pub methods: Vec<Method>,
}

impl BenchmarkPlan {
    /// Episodes in report order: for each M, each seed, each method. Every
    /// method sees the same seed list.
    pub fn episodes(&self) -> Vec<(usize, u64, Method)> {
        let mut out = Vec::new();
        for &m in &self.obstacle_counts {
            for i in 0..self.scenarios {
                for &method in &self.methods {
                    out.push((m, self.base_seed + i as u64, method));
                }
            }
        }
        out
    }
}

/// Runs every episode of `plan` (in parallel under `std`) and assembles the
/// report in plan order.
pub fn run_benchmark(
    plan: &BenchmarkPlan,
    model: Option<&ResidualModel>,
    filter: &FilterConfig,
    cfg: &SimConfig,
) -> Result<BenchmarkReport> {
    let episodes = plan.episodes();
    let run = |&(m, seed, method): &(usize, u64, Method)| -> Result<EpisodeRow> {
        let sc = spawn_scenario(seed, m, plan.profile, cfg)?;
        let out = run_episode(&sc, method, model, filter, cfg, false)?;
        Ok(EpisodeRow { method, obstacles: m, seed, metrics: out.metrics })
    };
    #[cfg(feature = "std")]
    let rows: Result<Vec<EpisodeRow>> = {
        use rayon::prelude::*;
        episodes.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "std"))]
    let rows: Result<Vec<EpisodeRow>> = episodes.iter().map(run).collect();
    let rows = rows?;
    Ok(BenchmarkReport { profile: plan.profile, compliant: cfg.compliant, cells: summarize(&rows), rows })
}

/// Short human-readable label such as `filtered/M=5`.
pub fn cell_label(c: &CellSummary) -> String {
    alloc::format!("{}/M={}", c.method.name(), c.obstacles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn ped(state: [f64; 4], goal: [f64; 2]) -> PedestrianAgent {
        PedestrianAgent {
            id: 0,
            state,
            speed: 1.0,
            goal,
            goal_tolerance: 0.5,
            goal_elapsed: 0.0,
            last_input: [0.0; 2],
            reflections: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    #[test]
    fn scenarios_are_deterministic_and_separated() {
        let cfg = SimConfig::default();
        let a = spawn_scenario(3, 5, Profile::Ground, &cfg).unwrap();
        let b = spawn_scenario(3, 5, Profile::Ground, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(spawn_scenario(3, 0, Profile::Ground, &cfg).unwrap().pedestrians.is_empty());
        for seed in 0..100 {
            for profile in [Profile::Ground, Profile::Quad] {
                let s = spawn_scenario(seed, 15, profile, &cfg).unwrap();
                for p in &s.pedestrians {
                    let d = hypot(p.state[0] - s.robot_start[0], p.state[1] - s.robot_start[1]);
                    assert!(d >= cfg.geometry.r_min() + 0.5);
                    assert!(p.speed >= 0.5 && p.speed <= 1.5);
                }
            }
        }
    }

    #[test]
    fn walker_heads_straight_for_goal_ahead() {
        let cfg = SimConfig::default();
        let mut p = ped([0.0, 0.0, 0.0, 1.2], [5.0, 0.0]);
        pedestrian_step(&mut p, 0.01, Profile::Ground, &cfg);
        assert_eq!(p.state[2], 0.0);
        assert!((p.state[0] - 0.012).abs() < 1e-15);
    }

    #[test]
    fn walker_turn_saturates_for_goal_behind() {
        let cfg = SimConfig::default();
        let mut p = ped([0.0, 0.0, 0.0, 1.0], [-5.0, 0.01]);
        pedestrian_step(&mut p, 0.01, Profile::Ground, &cfg);
        assert!((p.last_input[0] - 0.35).abs() < 1e-15);
        let nc = SimConfig { compliant: false, ..SimConfig::default() };
        let mut p = ped([0.0, 0.0, 0.0, 1.0], [-5.0, 0.01]);
        pedestrian_step(&mut p, 0.01, Profile::Ground, &nc);
        assert!((p.last_input[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn long_walks_stay_compliant_and_bounded() {
        let cfg = SimConfig::default();
        for profile in [Profile::Ground, Profile::Quad] {
            let sc = spawn_scenario(11, 10, profile, &cfg).unwrap();
            let mut peds = sc.pedestrians.clone();
            let bound = match profile {
                Profile::Ground => cfg.ground.omega_o_max,
                Profile::Quad => cfg.quad.d_max,
            };
            let mut goals = 0;
            for _ in 0..10_000 {
                for p in peds.iter_mut() {
                    let g = p.goal;
                    pedestrian_step(p, 0.01, profile, &cfg);
                    goals += (p.goal != g) as usize;
                    assert!(p.last_input[0].abs() <= bound && p.last_input[1].abs() <= bound);
                    assert!(p.state[0].abs() <= cfg.arena_half + cfg.walk_margin);
                    assert!(p.state[1].abs() <= cfg.arena_half + cfg.walk_margin);
                    if profile == Profile::Quad {
                        assert!(p.state[2].abs() <= 1.5 && p.state[3].abs() <= 1.5);
                    }
                }
            }
            assert!(peds.iter().all(|p| p.reflections == 0));
            assert!(goals > 10, "walkers should cycle through goals");
        }
    }

    #[test]
    fn nominal_ground_examples() {
        let lim = GroundLimits::default();
        assert_eq!(nominal_ground(&[0.0, 0.0, 0.0], &[5.0, 0.0], &lim), [1.0, 0.0]);
        let u = nominal_ground(&[0.0, 0.0, 0.0], &[0.0, 5.0], &lim);
        assert_eq!(u[1], 0.8);
        assert_eq!(u[0], 0.25);
    }

    #[test]
    fn ground_robot_reaches_goal_in_empty_arena() {
        let cfg = SimConfig::default();
        for seed in 0..5 {
            let sc = spawn_scenario(seed, 0, Profile::Ground, &cfg).unwrap();
            let out = run_episode(&sc, Method::NominalOnly, None, &FilterConfig::new(cfg.ground.control_bounds()), &cfg, false).unwrap();
            assert!(out.metrics.success);
            assert!(out.metrics.time <= cfg.timeout);
        }
    }

    /// Naive Riccati fixed-point iteration.
    fn riccati_oracle(dt: f64) -> [f64; 2] {
        let a = [[1.0, dt], [0.0, 1.0]];
        let b = [0.5 * dt * dt, dt];
        let mut p = [[1.0, 0.0], [0.0, 1.0]];
        let mut k = [0.0; 2];
        for _ in 0..2_000_000 {
            let pb = [p[0][0] * b[0] + p[0][1] * b[1], p[1][0] * b[0] + p[1][1] * b[1]];
            let s = 1.0 + b[0] * pb[0] + b[1] * pb[1];
            let bpa = [pb[0] * a[0][0] + pb[1] * a[1][0], pb[0] * a[0][1] + pb[1] * a[1][1]];
            k = [bpa[0] / s, bpa[1] / s];
            let mut np = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let mut apa = 0.0;
                    for r in 0..2 {
                        for c in 0..2 {
                            apa += a[r][i] * p[r][c] * a[c][j];
                        }
                    }
                    np[i][j] = if i == j { 1.0 } else { 0.0 } + apa - bpa[i] * bpa[j] / s;
                }
            }
            let diff = (0..4).map(|q| (np[q / 2][q % 2] - p[q / 2][q % 2]).abs()).fold(0.0, f64::max);
            p = np;
            if diff < 1e-13 {
                break;
            }
        }
        k
    }

    #[test]
    fn lqr_gain_matches_fixed_point_iteration() {
        let dt = 1.0 / 50.0;
        let k = lqr_gain(dt, 1.0, 1.0);
        let o = riccati_oracle(dt);
        assert!((k[0] - o[0]).abs() < 1e-8 && (k[1] - o[1]).abs() < 1e-8, "{k:?} vs {o:?}");
        // continuous-time limit is [1, √3]
        let k = lqr_gain(1.0 / 250.0, 1.0, 1.0);
        assert!((k[0] - 1.0).abs() < 0.01 && (k[1] - 3f64.sqrt()).abs() < 0.01);
    }

    #[test]
    fn nominal_quad_examples() {
        let lim = QuadLimits::default();
        let k = lqr_gain(0.004, 1.0, 1.0);
        assert_eq!(nominal_quad(&[1.0, 2.0, 0.0, 0.0], &[1.0, 2.0], &k, &lim), [0.0, 0.0]);
        let u = nominal_quad(&[0.5, 2.0, 0.0, 0.0], &[1.0, 2.0], &k, &lim);
        assert!(u[0] > 0.0 && u[1] == 0.0);
    }

    #[test]
    fn quad_bounds_respect_velocity_limit() {
        let lim = QuadLimits::default();
        let b = quad_step_bounds(&[0.0, 0.0, 1.999, -2.0], 0.004, &lim);
        assert!((b.upper[0] - 0.25).abs() < 1e-9);
        assert_eq!(b.lower[1], 0.0);
        assert_eq!(b.lower[0], -2.0);
    }

    #[test]
    fn rk4_is_exact_for_straight_motion() {
        let x = rk4_step(Profile::Ground, &[0.0, 0.0, PI / 2.0], &[1.0, 0.0], 0.5);
        assert!((x[1] - 0.5).abs() < 1e-15 && x[0].abs() < 1e-15);
        // circular arc: radius v/ω
        let mut x = vec![0.0, 0.0, 0.0];
        for _ in 0..250 {
            x = rk4_step(Profile::Ground, &x, &[1.0, 0.5], 0.004);
        }
        let (r, th): (f64, f64) = (2.0, 0.5);
        assert!((x[0] - r * th.sin()).abs() < 1e-10);
        assert!((x[1] - r * (1.0 - th.cos())).abs() < 1e-10);
    }

    #[test]
    fn parked_walker_on_path_is_hit_without_filter() {
        let cfg = SimConfig::default();
        let mut sc = spawn_scenario(0, 1, Profile::Ground, &cfg).unwrap();
        sc.robot_start = vec![-5.0, 0.0, 0.0];
        sc.robot_goal = [5.0, 0.0];
        sc.pedestrians[0].state = [0.0, 0.0, 0.0, 0.0];
        sc.pedestrians[0].speed = 0.0;
        let out = run_episode(&sc, Method::NominalOnly, None, &FilterConfig::new(cfg.ground.control_bounds()), &cfg, false).unwrap();
        assert!(out.metrics.collision);
        assert!(out.metrics.min_clearance <= 0.0);
    }

    #[test]
    fn summary_recomputes_from_rows() {
        let mk = |success: bool, len: f64| EpisodeMetrics {
            termination: if success { Termination::Success } else { Termination::Collision },
            success,
            collision: !success,
            timeout: false,
            path_length: len,
            time: len,
            time_to_goal: success.then_some(len),
            min_clearance: 0.1,
            min_h: 0.0,
            intervention_fraction: 0.0,
            slack_steps: 0,
            max_slack: 0.0,
            steps: 1,
            max_ped_input: 0.0,
            noncompliant_steps: 0,
            reflections: 0,
        };
        let rows = vec![
            EpisodeRow { method: Method::Filtered, obstacles: 5, seed: 0, metrics: mk(true, 10.0) },
            EpisodeRow { method: Method::Filtered, obstacles: 5, seed: 1, metrics: mk(true, 12.0) },
            EpisodeRow { method: Method::Filtered, obstacles: 5, seed: 2, metrics: mk(false, 3.0) },
            EpisodeRow { method: Method::NominalOnly, obstacles: 5, seed: 0, metrics: mk(false, 3.0) },
        ];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert!((s[0].success_rate - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(s[0].path_length_mean, 11.0);
        assert_eq!(s[0].path_length_std, 1.0);
        assert_eq!(s[1].success_rate, 0.0);
        assert_eq!(cell_label(&s[0]), "filtered/M=5");
    }
}
