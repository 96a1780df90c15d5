//! Composite barrier over many obstacles.
//!
//! Per-obstacle barriers `h̄_i = h̄(ρ(x, o_i))` are merged with the smooth
//! minimum `η = -(1/β) ln Σ_i exp(-β h̄_i)`, which satisfies
//! `min_i h̄_i - ln(M)/β <= η <= min_i h̄_i`. Its state gradient and explicit
//! time derivative follow from the softmax weights
//! `w_i = exp(-β h̄_i) / Σ_j exp(-β h̄_j)`.

use alloc::vec::Vec;

use crate::dynamics::RelState;
use crate::grid::DIMS;
use crate::math::{exp, ln};
use crate::net::ResidualModel;
use crate::{Error, Result};

/// `-(1/β) ln Σ exp(-β h_i)`, evaluated with the minimum factored out.
pub fn aggregate(hbars: &[f64], beta: f64) -> Result<f64> {
    let m = min_of(hbars)?;
    check_beta(beta)?;
    let s: f64 = hbars.iter().map(|h| exp(-beta * (h - m))).sum();
    Ok(m - ln(s) / beta)
}

/// Softmax weights `∂η/∂h̄_i`; they sum to one.
pub fn softmax_weights(hbars: &[f64], beta: f64) -> Result<Vec<f64>> {
    let m = min_of(hbars)?;
    check_beta(beta)?;
    let e: Vec<f64> = hbars.iter().map(|h| exp(-beta * (h - m))).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|v| v / s).collect())
}

fn min_of(hbars: &[f64]) -> Result<f64> {
    if hbars.is_empty() {
        return Err(Error::NoObstacles);
    }
    Ok(hbars.iter().copied().fold(f64::INFINITY, f64::min))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig("beta must be positive and finite".into()))
    }
}

/// Obstacles currently considered by the filter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObstacleSet {
    pub states: Vec<[f64; 4]>,
    /// Estimated `ȯ_i`.
    pub rates: Vec<[f64; 4]>,
    /// Obstacle radii `R_o`.
    pub radii: Vec<f64>,
}

impl ObstacleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: [f64; 4], rate: [f64; 4], radius: f64) {
        self.states.push(state);
        self.rates.push(rate);
        self.radii.push(radius);
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.states.len();
        if self.rates.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.rates.len() });
        }
        if self.radii.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: self.radii.len() });
        }
        if let Some(i) = self.rates.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteRate(i));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositeOutput {
    pub h: f64,
    /// `∂h/∂x` over the robot state.
    pub grad_x: Vec<f64>,
    /// Explicit time derivative through the obstacle motion.
    pub dh_dt: f64,
    pub per_obstacle_hbar: Vec<f64>,
    /// Per-obstacle failure values `ℓ(z_i)` (signed clearances).
    pub per_obstacle_failure: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CompositeOutput {
    /// Smallest signed clearance over the obstacles.
    pub fn min_failure(&self) -> f64 {
        self.per_obstacle_failure.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates `h`, `∂h/∂x` and `∂h/∂t` for robot state `x` (length of the
/// model profile's robot dimension) against every obstacle in `obs`.
pub fn composite_value_and_grads(
    x: &[f64],
    obs: &ObstacleSet,
    model: &ResidualModel,
    beta: f64,
) -> Result<CompositeOutput> {
    let profile = model.profile;
    let n = profile.robot_dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    obs.validate()?;
    if obs.is_empty() {
        return Err(Error::NoObstacles);
    }
    let m = obs.len();
    let mut hbars = Vec::with_capacity(m);
    let mut fails = Vec::with_capacity(m);
    let mut grads: Vec<RelState> = Vec::with_capacity(m);
    for (o, radius) in obs.states.iter().zip(&obs.radii) {
        let z = profile.relative_state(x, o);
        let r_min = model.geometry.robot_radius + radius;
        let (h, g) = model.hbar_with_grad_radius(&z, r_min);
        hbars.push(h);
        fails.push(crate::dynamics::failure(&z, r_min));
        grads.push(g);
    }
    let h = aggregate(&hbars, beta)?;
    let weights = softmax_weights(&hbars, beta)?;
    let mut grad_x = alloc::vec![0.0; n];
    let mut dh_dt = 0.0;
    for i in 0..m {
        let (dzdx, dzdo) = profile.jacobians(x, &obs.states[i]);
        let g = &grads[i];
        let w = weights[i];
        for (c, gx) in grad_x.iter_mut().enumerate() {
            *gx += w * (0..DIMS).map(|j| g[j] * dzdx[j][c]).sum::<f64>();
        }
        let rate = &obs.rates[i];
        dh_dt += w * (0..DIMS).map(|j| g[j] * (0..4).map(|c| dzdo[j][c] * rate[c]).sum::<f64>()).sum::<f64>();
    }
    Ok(CompositeOutput { h, grad_x, dh_dt, per_obstacle_hbar: hbars, per_obstacle_failure: fails, weights })
}

/// A 2D cut through the relative state space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceSpec {
    /// Indices of the two free dimensions (horizontal, vertical).
    pub free: [usize; 2],
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub resolution: [usize; 2],
    /// Values of all dimensions; the free ones are overwritten.
    pub fixed: RelState,
}

/// Scalar samples on a regular 2D lattice, row-major with rows along the
/// vertical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl Slice2D {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.xs.len() + col]
    }

    /// Samples `f` on the lattice described by `lower`, `upper` and
    /// `resolution`. A resolution of one samples the lower bound.
    pub fn sample(lower: [f64; 2], upper: [f64; 2], resolution: [usize; 2], mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let axis = |k: usize| -> Vec<f64> {
            let n = resolution[k].max(1);
            if n == 1 {
                alloc::vec![lower[k]]
            } else {
                (0..n).map(|i| lower[k] + (upper[k] - lower[k]) * i as f64 / (n - 1) as f64).collect()
            }
        };
        let xs = axis(0);
        let ys = axis(1);
        let mut values = Vec::with_capacity(xs.len() * ys.len());
        for &y in &ys {
            for &x in &xs {
                values.push(f(x, y));
            }
        }
        Self { xs, ys, values }
    }
}

/// `h̄` of a single obstacle on a relative-state slice.
pub fn slice_export(model: &ResidualModel, spec: &SliceSpec) -> Slice2D {
    Slice2D::sample(spec.lower, spec.upper, spec.resolution, |a, b| {
        let mut z = spec.fixed;
        z[spec.free[0]] = a;
        z[spec.free[1]] = b;
        model.hbar(&z)
    })
}

/// Composite `h` over robot positions: the robot template `x` has its first
/// two (position) components replaced by the lattice coordinates.
pub fn composite_slice(
    model: &ResidualModel,
    obs: &ObstacleSet,
    robot: &[f64],
    beta: f64,
    lower: [f64; 2],
    upper: [f64; 2],
    resolution: [usize; 2],
) -> Result<Slice2D> {
    if obs.is_empty() {
        return Err(Error::NoObstacles);
    }
    let mut x = robot.to_vec();
    let mut err = None;
    let slice = Slice2D::sample(lower, upper, resolution, |a, b| {
        x[0] = a;
        x[1] = b;
        match composite_value_and_grads(&x, obs, model, beta) {
            Ok(out) => out.h,
            Err(e) => {
                err.get_or_insert(e);
                f64::NAN
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(slice),
    }
}
