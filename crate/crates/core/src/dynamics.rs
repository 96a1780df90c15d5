//! Robot, obstacle and relative dynamics for the two supported robot types.
//!
//! * **Ground**: a kinematic unicycle `x = [x, y, θ]` with `u = [v, ω]`
//!   avoiding unicycle pedestrians `o = [x, y, θ, v]` whose turn rate is the
//!   disturbance. The relative state is expressed in the robot frame, which
//!   makes the relative flow a function of `z` alone.
//! * **Quad**: a planar double integrator `x = [x, y, vx, vy]` with
//!   acceleration input, avoiding double-integrator pedestrians. The
//!   relative state is simply `z = o - x` in the world frame.
//!
//! Both share the failure function `ℓ(z) = ‖(z₀, z₁)‖ - R_min`.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::GridSpec;
use crate::math::{cos, hypot, sign0, sin, sin_cos, wrap_angle};

/// Relative state, always four-dimensional.
pub type RelState = [f64; 4];
/// Robot and obstacle Jacobians of the relative state, row-major `[z][state]`.
pub type Jacobian = [[f64; 4]; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Profile {
    Ground,
    Quad,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Ground => "ground",
            Profile::Quad => "quad",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "ground" => Some(Profile::Ground),
            "quad" => Some(Profile::Quad),
            _ => None,
        }
    }

    /// Dimension of the robot state.
    pub fn robot_dim(self) -> usize {
        match self {
            Profile::Ground => 3,
            Profile::Quad => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundRobotState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl GroundRobotState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundControl {
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianUnicycleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
}

impl PedestrianUnicycleState {
    pub fn new(x: f64, y: f64, theta: f64, v: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta), v }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.theta, self.v]
    }

    pub fn from_array(o: &[f64; 4]) -> Self {
        Self { x: o[0], y: o[1], theta: o[2], v: o[3] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadRobotState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl QuadRobotState {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.vx, self.vy]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadControl {
    pub ax: f64,
    pub ay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PedestrianDIState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl PedestrianDIState {
    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.vx, self.vy]
    }
}

/// Axis-aligned box of admissible inputs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> crate::Result<Self> {
        if lower.len() != upper.len() {
            return Err(crate::Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(crate::Error::InvalidConfig("box bounds require lower <= upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn clamp(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &h))| v.clamp(l, h))
            .collect()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, h)| 0.5 * (l + h)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CollisionGeometry {
    pub robot_radius: f64,
    pub obstacle_radius: f64,
}

impl Default for CollisionGeometry {
    fn default() -> Self {
        Self { robot_radius: 0.3, obstacle_radius: 0.3 }
    }
}

impl CollisionGeometry {
    pub fn new(robot_radius: f64, obstacle_radius: f64) -> crate::Result<Self> {
        if !(robot_radius >= 0.0 && obstacle_radius >= 0.0) {
            return Err(crate::Error::InvalidConfig("radii must be non-negative".into()));
        }
        Ok(Self { robot_radius, obstacle_radius })
    }

    pub fn r_min(&self) -> f64 {
        self.robot_radius + self.obstacle_radius
    }
}

/// Signed distance between robot and obstacle discs.
#[inline]
pub fn failure(z: &RelState, r_min: f64) -> f64 {
    hypot(z[0], z[1]) - r_min
}

/// Gradient of [`failure`] with respect to `z`; zero at the degenerate origin.
#[inline]
pub fn failure_grad(z: &RelState) -> RelState {
    let d = hypot(z[0], z[1]);
    if d > 0.0 {
        [z[0] / d, z[1] / d, 0.0, 0.0]
    } else {
        [0.0; 4]
    }
}

// ---------------------------------------------------------------------------
// Ground robot

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroundLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub omega_max: f64,
    /// Pedestrian turn-rate bound, the disturbance of the HJ game.
    pub omega_o_max: f64,
    /// Largest pedestrian speed covered by the default grid.
    pub v_o_max: f64,
}

impl Default for GroundLimits {
    fn default() -> Self {
        Self { v_min: 0.25, v_max: 1.0, omega_max: 0.8, omega_o_max: 0.35, v_o_max: 1.5 }
    }
}

impl GroundLimits {
    pub fn control_bounds(&self) -> BoxBounds {
        BoxBounds {
            lower: vec![self.v_min, -self.omega_max],
            upper: vec![self.v_max, self.omega_max],
        }
    }
}

/// Relative state in the robot frame.
pub fn rho_ground(x: &GroundRobotState, o: &PedestrianUnicycleState) -> RelState {
    let (s, c) = sin_cos(x.theta);
    let dx = o.x - x.x;
    let dy = o.y - x.y;
    [c * dx + s * dy, -s * dx + c * dy, wrap_angle(o.theta - x.theta), o.v]
}

/// Inverse of the positional part of [`rho_ground`]: robot-frame offset back
/// to the world-frame offset `o - x`.
pub fn ground_offset_to_world(theta_r: f64, z: &RelState) -> [f64; 2] {
    let (s, c) = sin_cos(theta_r);
    [c * z[0] - s * z[1], s * z[0] + c * z[1]]
}

pub fn relative_flow_ground(z: &RelState, u: &GroundControl, omega_o: f64) -> RelState {
    let (s, c) = sin_cos(z[2]);
    [
        -u.v + z[3] * c + u.omega * z[1],
        z[3] * s - u.omega * z[0],
        omega_o - u.omega,
        0.0,
    ]
}

/// Unicycle in control-affine form: `f = 0`, `g = [[cos θ, 0], [sin θ, 0], [0, 1]]`.
pub fn robot_affine_ground(x: &GroundRobotState) -> ([f64; 3], [[f64; 2]; 3]) {
    let (s, c) = sin_cos(x.theta);
    ([0.0; 3], [[c, 0.0], [s, 0.0], [0.0, 1.0]])
}

pub fn pedestrian_flow_unicycle(o: &PedestrianUnicycleState, omega_o: f64) -> [f64; 4] {
    let (s, c) = sin_cos(o.theta);
    [o.v * c, o.v * s, omega_o, 0.0]
}

/// `(∂z/∂x, ∂z/∂o)` of [`rho_ground`]. Column 3 of `∂z/∂x` is unused.
pub fn jacobians_ground(x: &GroundRobotState, o: &PedestrianUnicycleState) -> (Jacobian, Jacobian) {
    let (s, c) = sin_cos(x.theta);
    let dx = o.x - x.x;
    let dy = o.y - x.y;
    let z0 = c * dx + s * dy;
    let z1 = -s * dx + c * dy;
    let dzdx = [
        [-c, -s, z1, 0.0],
        [s, -c, -z0, 0.0],
        [0.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ];
    let dzdo = [
        [c, s, 0.0, 0.0],
        [-s, c, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ];
    (dzdx, dzdo)
}

/// Saddle-point inputs of the relative game together with the Hamiltonian
/// value `p · ζ(z, u*, d*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalInputs<D> {
    pub control: [f64; 2],
    pub disturbance: D,
    pub hamiltonian: f64,
}

/// Bang-bang optimal inputs for the ground game. A zero switching
/// coefficient selects the midpoint of the interval.
pub fn optimal_inputs_ground(z: &RelState, p: &RelState, lim: &GroundLimits) -> OptimalInputs<f64> {
    // -p0 * v_r
    let v = if p[0] < 0.0 {
        lim.v_max
    } else if p[0] > 0.0 {
        lim.v_min
    } else {
        0.5 * (lim.v_min + lim.v_max)
    };
    let omega = lim.omega_max * sign0(p[0] * z[1] - p[1] * z[0] - p[2]);
    let omega_o = -lim.omega_o_max * sign0(p[2]);
    let u = GroundControl { v, omega };
    let f = relative_flow_ground(z, &u, omega_o);
    OptimalInputs { control: [v, omega], disturbance: omega_o, hamiltonian: dot4(p, &f) }
}

// ---------------------------------------------------------------------------
// Quadrotor

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadLimits {
    pub a_max: f64,
    pub v_max: f64,
    /// Pedestrian acceleration bound, the disturbance of the HJ game.
    pub d_max: f64,
    pub v_o_max: f64,
}

impl Default for QuadLimits {
    fn default() -> Self {
        Self { a_max: 2.0, v_max: 2.0, d_max: 1.0, v_o_max: 1.5 }
    }
}

impl QuadLimits {
    pub fn control_bounds(&self) -> BoxBounds {
        BoxBounds { lower: vec![-self.a_max; 2], upper: vec![self.a_max; 2] }
    }
}

pub fn rho_quad(x: &QuadRobotState, o: &PedestrianDIState) -> RelState {
    [o.x - x.x, o.y - x.y, o.vx - x.vx, o.vy - x.vy]
}

pub fn relative_flow_quad(z: &RelState, u: &QuadControl, d: &[f64; 2]) -> RelState {
    [z[2], z[3], d[0] - u.ax, d[1] - u.ay]
}

pub fn robot_affine_quad(x: &QuadRobotState) -> ([f64; 4], [[f64; 2]; 4]) {
    ([x.vx, x.vy, 0.0, 0.0], [[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
}

pub fn jacobians_quad() -> (Jacobian, Jacobian) {
    let mut neg = [[0.0; 4]; 4];
    let mut id = [[0.0; 4]; 4];
    for i in 0..4 {
        neg[i][i] = -1.0;
        id[i][i] = 1.0;
    }
    (neg, id)
}

pub fn optimal_inputs_quad(z: &RelState, p: &RelState, lim: &QuadLimits) -> OptimalInputs<[f64; 2]> {
    let u = [-lim.a_max * sign0(p[2]), -lim.a_max * sign0(p[3])];
    let d = [-lim.d_max * sign0(p[2]), -lim.d_max * sign0(p[3])];
    let f = relative_flow_quad(z, &QuadControl { ax: u[0], ay: u[1] }, &d);
    OptimalInputs { control: u, disturbance: d, hamiltonian: dot4(p, &f) }
}

#[inline]
pub(crate) fn dot4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

// ---------------------------------------------------------------------------
// Relative games as seen by the HJ solver

/// A two-player relative game `ż = ζ(z, u, d)` with `u` maximizing and `d`
/// minimizing `∇V · ζ`.
pub trait RelativeGame: Sync {
    type Disturbance: Copy + core::fmt::Debug + Send + Sync;

    fn flow(&self, z: &RelState, u: &[f64; 2], d: &Self::Disturbance) -> RelState;

    fn optimal_inputs(&self, z: &RelState, p: &RelState) -> OptimalInputs<Self::Disturbance>;

    #[inline]
    fn hamiltonian(&self, z: &RelState, p: &RelState) -> f64 {
        self.optimal_inputs(z, p).hamiltonian
    }

    /// Upper bound of `|∂H/∂p_j|` over the grid, i.e. of `|ζ_j|` over states
    /// in the grid and all admissible inputs.
    fn max_flow_magnitudes(&self, grid: &GridSpec) -> [f64; 4];

    /// Upper bound of `|ζ_j|` at the single state `z` over all admissible
    /// inputs. Never exceeds [`Self::max_flow_magnitudes`] for `z` on the grid.
    fn local_flow_magnitudes(&self, z: &RelState) -> [f64; 4];

    /// Bound vertices and midpoints, used by the brute-force oracle.
    fn control_candidates(&self) -> Vec<[f64; 2]>;
    fn disturbance_candidates(&self) -> Vec<Self::Disturbance>;

    fn r_min(&self) -> f64;

    fn failure(&self, z: &RelState) -> f64 {
        failure(z, self.r_min())
    }

    /// Grid layout of the default solve.
    fn default_grid(&self) -> GridSpec;
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroundGame {
    pub limits: GroundLimits,
    pub geometry: CollisionGeometry,
}

impl RelativeGame for GroundGame {
    type Disturbance = f64;

    #[inline]
    fn flow(&self, z: &RelState, u: &[f64; 2], d: &f64) -> RelState {
        relative_flow_ground(z, &GroundControl { v: u[0], omega: u[1] }, *d)
    }

    #[inline]
    fn optimal_inputs(&self, z: &RelState, p: &RelState) -> OptimalInputs<f64> {
        optimal_inputs_ground(z, p, &self.limits)
    }

    #[inline]
    fn hamiltonian(&self, z: &RelState, p: &RelState) -> f64 {
        // Same as optimal_inputs_ground without the bookkeeping; the solver
        // calls this once per node and step.
        let lim = &self.limits;
        let v = if p[0] < 0.0 {
            lim.v_max
        } else if p[0] > 0.0 {
            lim.v_min
        } else {
            0.5 * (lim.v_min + lim.v_max)
        };
        let (s, c) = sin_cos(z[2]);
        let sw = p[0] * z[1] - p[1] * z[0] - p[2];
        p[0] * (-v + z[3] * c) + p[1] * z[3] * s + lim.omega_max * sw.abs() - lim.omega_o_max * p[2].abs()
    }

    fn max_flow_magnitudes(&self, grid: &GridSpec) -> [f64; 4] {
        let lim = &self.limits;
        let ax = &grid.axes;
        let x_abs = ax[0].lower.abs().max(ax[0].upper.abs());
        let y_abs = ax[1].lower.abs().max(ax[1].upper.abs());
        let vo = ax[3].lower.abs().max(ax[3].upper.abs());
        [
            lim.v_max + vo + lim.omega_max * y_abs,
            vo + lim.omega_max * x_abs,
            lim.omega_o_max + lim.omega_max,
            0.0,
        ]
    }

    fn local_flow_magnitudes(&self, z: &RelState) -> [f64; 4] {
        let lim = &self.limits;
        let (s, c) = sin_cos(z[2]);
        let a = z[3] * c;
        [
            (lim.v_min - a).abs().max((lim.v_max - a).abs()) + lim.omega_max * z[1].abs(),
            (z[3] * s).abs() + lim.omega_max * z[0].abs(),
            lim.omega_o_max + lim.omega_max,
            0.0,
        ]
    }

    fn control_candidates(&self) -> Vec<[f64; 2]> {
        let l = &self.limits;
        let mut out = Vec::with_capacity(9);
        for v in [l.v_min, 0.5 * (l.v_min + l.v_max), l.v_max] {
            for w in [-l.omega_max, 0.0, l.omega_max] {
                out.push([v, w]);
            }
        }
        out
    }

    fn disturbance_candidates(&self) -> Vec<f64> {
        vec![-self.limits.omega_o_max, 0.0, self.limits.omega_o_max]
    }

    fn r_min(&self) -> f64 {
        self.geometry.r_min()
    }

    fn default_grid(&self) -> GridSpec {
        GridSpec::ground_default(self.limits.v_o_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QuadGame {
    pub limits: QuadLimits,
    pub geometry: CollisionGeometry,
}

impl RelativeGame for QuadGame {
    type Disturbance = [f64; 2];

    #[inline]
    fn flow(&self, z: &RelState, u: &[f64; 2], d: &[f64; 2]) -> RelState {
        relative_flow_quad(z, &QuadControl { ax: u[0], ay: u[1] }, d)
    }

    #[inline]
    fn optimal_inputs(&self, z: &RelState, p: &RelState) -> OptimalInputs<[f64; 2]> {
        optimal_inputs_quad(z, p, &self.limits)
    }

    #[inline]
    fn hamiltonian(&self, z: &RelState, p: &RelState) -> f64 {
        let gap = self.limits.a_max - self.limits.d_max;
        p[0] * z[2] + p[1] * z[3] + gap * (p[2].abs() + p[3].abs())
    }

    fn max_flow_magnitudes(&self, grid: &GridSpec) -> [f64; 4] {
        let ax = &grid.axes;
        let acc = self.limits.a_max + self.limits.d_max;
        [
            ax[2].lower.abs().max(ax[2].upper.abs()),
            ax[3].lower.abs().max(ax[3].upper.abs()),
            acc,
            acc,
        ]
    }

    fn local_flow_magnitudes(&self, z: &RelState) -> [f64; 4] {
        let acc = self.limits.a_max + self.limits.d_max;
        [z[2].abs(), z[3].abs(), acc, acc]
    }

    fn control_candidates(&self) -> Vec<[f64; 2]> {
        let a = self.limits.a_max;
        let mut out = Vec::with_capacity(9);
        for ax in [-a, 0.0, a] {
            for ay in [-a, 0.0, a] {
                out.push([ax, ay]);
            }
        }
        out
    }

    fn disturbance_candidates(&self) -> Vec<[f64; 2]> {
        let d = self.limits.d_max;
        let mut out = Vec::with_capacity(9);
        for dx in [-d, 0.0, d] {
            for dy in [-d, 0.0, d] {
                out.push([dx, dy]);
            }
        }
        out
    }

    fn r_min(&self) -> f64 {
        self.geometry.r_min()
    }

    fn default_grid(&self) -> GridSpec {
        GridSpec::quad_default(self.limits.v_max + self.limits.v_o_max)
    }
}

// ---------------------------------------------------------------------------
// Profile-level dispatch used by the composite barrier and the filter, where
// robot states are plain slices of length `Profile::robot_dim`.

impl Profile {
    pub fn relative_state(self, x: &[f64], o: &[f64; 4]) -> RelState {
        match self {
            Profile::Ground => rho_ground(
                &GroundRobotState { x: x[0], y: x[1], theta: x[2] },
                &PedestrianUnicycleState::from_array(o),
            ),
            Profile::Quad => rho_quad(
                &QuadRobotState { x: x[0], y: x[1], vx: x[2], vy: x[3] },
                &PedestrianDIState { x: o[0], y: o[1], vx: o[2], vy: o[3] },
            ),
        }
    }

    pub fn jacobians(self, x: &[f64], o: &[f64; 4]) -> (Jacobian, Jacobian) {
        match self {
            Profile::Ground => jacobians_ground(
                &GroundRobotState { x: x[0], y: x[1], theta: x[2] },
                &PedestrianUnicycleState::from_array(o),
            ),
            Profile::Quad => jacobians_quad(),
        }
    }

    /// Drift `f(x)` and input matrix `g(x)` padded to four rows.
    pub fn robot_affine(self, x: &[f64]) -> ([f64; 4], [[f64; 2]; 4]) {
        match self {
            Profile::Ground => {
                let (f, g) = robot_affine_ground(&GroundRobotState { x: x[0], y: x[1], theta: x[2] });
                ([f[0], f[1], f[2], 0.0], [g[0], g[1], g[2], [0.0, 0.0]])
            }
            Profile::Quad => robot_affine_quad(&QuadRobotState { x: x[0], y: x[1], vx: x[2], vy: x[3] }),
        }
    }

    /// Relative-state angle dimension that is periodic, if any.
    pub fn periodic_dim(self) -> Option<usize> {
        match self {
            Profile::Ground => Some(2),
            Profile::Quad => None,
        }
    }

    /// Pedestrian state flow under disturbance `d` (turn rate for ground,
    /// acceleration for quad).
    pub fn obstacle_flow(self, o: &[f64; 4], d: &[f64; 2]) -> [f64; 4] {
        match self {
            Profile::Ground => pedestrian_flow_unicycle(&PedestrianUnicycleState::from_array(o), d[0]),
            Profile::Quad => [o[2], o[3], d[0], d[1]],
        }
    }
}

/// Robot-frame unit vector helper used by tests and the simulator.
pub fn heading_vector(theta: f64) -> [f64; 2] {
    [cos(theta), sin(theta)]
}
