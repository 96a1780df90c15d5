//! CBF-QP safety filter.
//!
//! Each step estimates obstacle rates by backward differences, evaluates the
//! composite barrier and solves
//!
//! ```text
//! min ½‖u - u_ref‖² + P s²   s.t.  a·u + s ≥ b,  s ≥ 0,  lower ≤ u ≤ upper
//! ```
//!
//! with `a = gᵀ ∇h` and `b = -(∇h·f + ∂h/∂t + k h)`. The slack is only used
//! when no input in the box satisfies the constraint.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::composite::{composite_value_and_grads, CompositeOutput, ObstacleSet};
use crate::dynamics::BoxBounds;
use crate::math::wrap_angle;
use crate::net::ResidualModel;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FilterConfig {
    /// Slope of the linear class-κ function `α(h) = k h`.
    pub k: f64,
    /// Log-sum-exp sharpness.
    pub beta: f64,
    pub bounds: BoxBounds,
    pub slack_penalty: f64,
    pub rate_hz: f64,
}

impl FilterConfig {
    pub fn new(bounds: BoxBounds) -> Self {
        Self { k: 4.0, beta: 4.0, bounds, slack_penalty: 1e4, rate_hz: 250.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.beta > 0.0 && self.slack_penalty > 1.0 && self.rate_hz > 0.0) {
            return Err(Error::InvalidConfig("k, beta, rate must be positive and slack_penalty > 1".into()));
        }
        Ok(())
    }
}

/// Previous obstacle observations for backward-difference rates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObstacleTracker {
    previous: BTreeMap<u64, [f64; 4]>,
    previous_time: Option<f64>,
    /// State component holding an angle, differenced on the circle.
    angle_component: Option<usize>,
}

/// Output of [`ObstacleTracker::estimate_rates`].
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub rates: Vec<[f64; 4]>,
    /// The id had no previous observation; its rate is zero.
    pub first_seen: Vec<bool>,
}

impl ObstacleTracker {
    pub fn new(angle_component: Option<usize>) -> Self {
        Self { previous: BTreeMap::new(), previous_time: None, angle_component }
    }

    /// `(o(t) - o(t - δt)) / δt` per id. Ids seen for the first time get a
    /// zero rate. The stored observations are replaced by the current ones.
    pub fn estimate_rates(&mut self, ids: &[u64], states: &[[f64; 4]], t: f64) -> Result<RateEstimate> {
        if ids.len() != states.len() {
            return Err(Error::DimensionMismatch { expected: ids.len(), got: states.len() });
        }
        let dt = match self.previous_time {
            Some(prev) if !(t > prev) => return Err(Error::NonMonotoneTime { previous: prev, current: t }),
            Some(prev) => Some(t - prev),
            None => None,
        };
        let mut rates = Vec::with_capacity(ids.len());
        let mut first_seen = Vec::with_capacity(ids.len());
        for (id, o) in ids.iter().zip(states) {
            match (dt, self.previous.get(id)) {
                (Some(dt), Some(p)) => {
                    let mut r = [0.0; 4];
                    for c in 0..4 {
                        let mut d = o[c] - p[c];
                        if self.angle_component == Some(c) {
                            d = wrap_angle(d);
                        }
                        r[c] = d / dt;
                    }
                    rates.push(r);
                    first_seen.push(false);
                }
                _ => {
                    rates.push([0.0; 4]);
                    first_seen.push(true);
                }
            }
        }
        self.previous = ids.iter().copied().zip(states.iter().copied()).collect();
        self.previous_time = Some(t);
        Ok(RateEstimate { rates, first_seen })
    }
}

/// Affine constraint `a·u ≥ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: Vec<f64>,
    pub b: f64,
}

impl LinearConstraint {
    pub fn lhs(&self, u: &[f64]) -> f64 {
        dot(&self.a, u)
    }
}

/// `a = gᵀ ∇h`, `b = -(∇h·f + ∂h/∂t + k h)` for `ẋ = f + g u`; `f` and the
/// rows of `g` are indexed by robot state component.
pub fn build_constraint(f: &[f64], g: &[[f64; 2]], composite: &CompositeOutput, k: f64) -> LinearConstraint {
    let grad = &composite.grad_x;
    let a = (0..2).map(|j| grad.iter().zip(g).map(|(gx, row)| gx * row[j]).sum()).collect();
    let b = -(dot(grad, f) + composite.dh_dt + k * composite.h);
    LinearConstraint { a, b }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum QpStatus {
    /// The clamped reference already satisfies the constraint.
    Inactive,
    /// The constraint binds and is met exactly.
    Active,
    /// No input in the box satisfies the constraint; slack is positive.
    Slack,
}

impl QpStatus {
    pub fn name(self) -> &'static str {
        match self {
            QpStatus::Inactive => "inactive",
            QpStatus::Active => "active",
            QpStatus::Slack => "slack",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: Vec<f64>,
    pub slack: f64,
    /// Multiplier of the barrier constraint.
    pub multiplier: f64,
    pub objective: f64,
    pub status: QpStatus,
}

/// Largest `a·u` over the box.
fn max_lhs(c: &LinearConstraint, bounds: &BoxBounds) -> f64 {
    c.a.iter().zip(bounds.lower.iter().zip(&bounds.upper)).map(|(a, (l, u))| (a * l).max(a * u)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn half_sq_dist(u: &[f64], r: &[f64]) -> f64 {
    0.5 * u.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

/// Face of the box: each coordinate is free (0), at its lower (1) or upper
/// (2) bound; encoded base 3.
fn face_assignment(mut code: usize, n: usize) -> Vec<u8> {
    let mut out = vec![0u8; n];
    for v in out.iter_mut() {
        *v = (code % 3) as u8;
        code /= 3;
    }
    out
}

fn snap_to_box(u: &mut [f64], bounds: &BoxBounds, tol: f64) -> bool {
    for (j, v) in u.iter_mut().enumerate() {
        let (l, h) = (bounds.lower[j], bounds.upper[j]);
        if *v < l - tol || *v > h + tol {
            return false;
        }
        *v = v.clamp(l, h);
    }
    true
}

/// Globally optimal solution by enumerating every box face with the barrier
/// constraint active or inactive. If some input in the box satisfies the
/// constraint the slack is zero and `u` solves the unslacked problem;
/// otherwise the slack-penalized problem is solved.
pub fn solve_qp(u_ref: &[f64], constraint: &LinearConstraint, bounds: &BoxBounds, slack_penalty: f64) -> QpSolution {
    let n = u_ref.len();
    debug_assert_eq!(constraint.a.len(), n);
    debug_assert_eq!(bounds.dim(), n);
    let clamped = bounds.clamp(u_ref);
    let scale = 1.0 + constraint.b.abs() + constraint.a.iter().map(|v| v.abs()).sum::<f64>();
    let tol = 1e-12 * scale;
    if constraint.lhs(&clamped) >= constraint.b {
        return QpSolution {
            objective: half_sq_dist(&clamped, u_ref),
            u: clamped,
            slack: 0.0,
            multiplier: 0.0,
            status: QpStatus::Inactive,
        };
    }
    let feasible = max_lhs(constraint, bounds) >= constraint.b;
    let mut best: Option<QpSolution> = None;
    for code in 0..3usize.pow(n as u32) {
        let face = face_assignment(code, n);
        let mut u = vec![0.0; n];
        let mut fixed_lhs = 0.0;
        let mut a_norm2 = 0.0;
        let mut a_dot_r = 0.0;
        for j in 0..n {
            match face[j] {
                1 => u[j] = bounds.lower[j],
                2 => u[j] = bounds.upper[j],
                _ => {
                    a_norm2 += constraint.a[j] * constraint.a[j];
                    a_dot_r += constraint.a[j] * u_ref[j];
                }
            }
            if face[j] != 0 {
                fixed_lhs += constraint.a[j] * u[j];
            }
        }
        let c = constraint.b - fixed_lhs;
        let (multiplier, slack) = if feasible {
            // a_F·u_F = c on the face: u_F = r_F + λ a_F
            if a_norm2 > 0.0 {
                let lambda = (c - a_dot_r) / a_norm2;
                for j in 0..n {
                    if face[j] == 0 {
                        u[j] = u_ref[j] + lambda * constraint.a[j];
                    }
                }
                (lambda, 0.0)
            } else {
                if (c - a_dot_r).abs() > tol {
                    continue;
                }
                for j in 0..n {
                    if face[j] == 0 {
                        u[j] = u_ref[j];
                    }
                }
                (0.0, 0.0)
            }
        } else {
            // stationarity of ½‖u - r‖² + P (c - a_F·u_F)² over the free part
            let t = (a_dot_r + 2.0 * slack_penalty * c * a_norm2) / (1.0 + 2.0 * slack_penalty * a_norm2);
            let lambda = 2.0 * slack_penalty * (c - t);
            for j in 0..n {
                if face[j] == 0 {
                    u[j] = u_ref[j] + lambda * constraint.a[j];
                }
            }
            (lambda, 0.0)
        };
        if multiplier < -tol || !snap_to_box(&mut u, bounds, tol) {
            continue;
        }
        let lhs = constraint.lhs(&u);
        let (slack, objective) = if feasible {
            if lhs < constraint.b - tol {
                continue;
            }
            (slack, half_sq_dist(&u, u_ref))
        } else {
            let s = (constraint.b - lhs).max(0.0);
            (s, half_sq_dist(&u, u_ref) + slack_penalty * s * s)
        };
        let cand = QpSolution {
            u,
            slack,
            multiplier: multiplier.max(0.0),
            objective,
            status: if feasible { QpStatus::Active } else { QpStatus::Slack },
        };
        if best.as_ref().is_none_or(|b| cand.objective < b.objective) {
            best = Some(cand);
        }
    }
    best.unwrap_or_else(|| {
        // Unreachable for a valid box; fall back to the clamped reference.
        let s = (constraint.b - constraint.lhs(&clamped)).max(0.0);
        QpSolution {
            objective: half_sq_dist(&clamped, u_ref) + slack_penalty * s * s,
            u: clamped,
            slack: s,
            multiplier: 0.0,
            status: QpStatus::Slack,
        }
    })
}

/// Largest violation among the KKT conditions of the problem that
/// [`solve_qp`] solved for `sol` (hard constraint when `sol.slack == 0`,
/// penalized otherwise): stationarity, primal and dual feasibility and
/// complementary slackness.
pub fn kkt_residual(sol: &QpSolution, u_ref: &[f64], c: &LinearConstraint, bounds: &BoxBounds, slack_penalty: f64) -> f64 {
    let mut worst = 0.0f64;
    let lambda = if sol.slack > 0.0 { 2.0 * slack_penalty * sol.slack } else { sol.multiplier };
    worst = worst.max(-lambda);
    let lhs = c.lhs(&sol.u);
    // primal: a·u + s ≥ b
    worst = worst.max(c.b - lhs - sol.slack);
    // complementarity of the barrier row
    worst = worst.max((lambda * (lhs + sol.slack - c.b)).abs());
    for j in 0..u_ref.len() {
        let (l, h) = (bounds.lower[j], bounds.upper[j]);
        let u = sol.u[j];
        worst = worst.max(l - u).max(u - h);
        // gradient of the Lagrangian without box multipliers
        let g = u - u_ref[j] - lambda * c.a[j];
        let viol = if l == h {
            0.0
        } else if u <= l {
            (-g).max(0.0)
        } else if u >= h {
            g.max(0.0)
        } else {
            g.abs()
        };
        worst = worst.max(viol);
    }
    worst
}

/// Per-step record of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterDiagnostics {
    pub t: f64,
    /// Composite barrier value (infinite without obstacles).
    pub h: f64,
    /// Smallest signed clearance `min_i ℓ(z_i)`.
    pub sdf_min: f64,
    pub slack: f64,
    pub status: QpStatus,
    pub u: Vec<f64>,
    pub u_ref: Vec<f64>,
    pub obstacle_count: usize,
    /// The obstacle set differs from the previous step (composite jump).
    pub set_changed: bool,
    pub intervened: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    pub u: Vec<f64>,
    pub composite: Option<CompositeOutput>,
    pub diagnostics: FilterDiagnostics,
}

/// Obstacles observed at one instant.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub ids: &'a [u64],
    pub states: &'a [[f64; 4]],
    pub radii: &'a [f64],
}

/// Rates, composite barrier, constraint and QP for one control step.
/// Without obstacles the clamped reference passes through.
pub fn filter_step(
    x: &[f64],
    u_ref: &[f64],
    obs: Observation<'_>,
    tracker: &mut ObstacleTracker,
    model: &ResidualModel,
    config: &FilterConfig,
    t: f64,
) -> Result<FilterOutput> {
    filter_step_with_bounds(x, u_ref, obs, tracker, model, config, &config.bounds, t)
}

/// [`filter_step`] with input bounds that override `config.bounds`, e.g.
/// accelerations tightened to respect a velocity limit.
#[allow(clippy::too_many_arguments)]
pub fn filter_step_with_bounds(
    x: &[f64],
    u_ref: &[f64],
    obs: Observation<'_>,
    tracker: &mut ObstacleTracker,
    model: &ResidualModel,
    config: &FilterConfig,
    bounds: &BoxBounds,
    t: f64,
) -> Result<FilterOutput> {
    if u_ref.len() != bounds.dim() {
        return Err(Error::DimensionMismatch { expected: bounds.dim(), got: u_ref.len() });
    }
    if obs.radii.len() != obs.ids.len() {
        return Err(Error::DimensionMismatch { expected: obs.ids.len(), got: obs.radii.len() });
    }
    let set_changed = obs.ids.len() != tracker.previous.len() || obs.ids.iter().any(|id| !tracker.previous.contains_key(id));
    let est = tracker.estimate_rates(obs.ids, obs.states, t)?;
    if obs.ids.is_empty() {
        let u = bounds.clamp(u_ref);
        let intervened = u != u_ref;
        return Ok(FilterOutput {
            diagnostics: FilterDiagnostics {
                t,
                h: f64::INFINITY,
                sdf_min: f64::INFINITY,
                slack: 0.0,
                status: QpStatus::Inactive,
                u: u.clone(),
                u_ref: u_ref.to_vec(),
                obstacle_count: 0,
                set_changed,
                intervened,
            },
            u,
            composite: None,
        });
    }
    let set = ObstacleSet { states: obs.states.to_vec(), rates: est.rates, radii: obs.radii.to_vec() };
    let comp = composite_value_and_grads(x, &set, model, config.beta)?;
    let (f, g) = model.profile.robot_affine(x);
    let n = x.len();
    let constraint = build_constraint(&f[..n], &g[..n], &comp, config.k);
    let sol = solve_qp(u_ref, &constraint, bounds, config.slack_penalty);
    let intervened = sol.u != u_ref;
    Ok(FilterOutput {
        diagnostics: FilterDiagnostics {
            t,
            h: comp.h,
            sdf_min: comp.min_failure(),
            slack: sol.slack,
            status: sol.status,
            u: sol.u.clone(),
            u_ref: u_ref.to_vec(),
            obstacle_count: obs.ids.len(),
            set_changed,
            intervened,
        },
        u: sol.u,
        composite: Some(comp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{CollisionGeometry, GroundLimits, Profile};
    use crate::net::{MlpParams, Normalization, ARCHITECTURE};
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bounds2() -> BoxBounds {
        GroundLimits::default().control_bounds()
    }

    #[test]
    fn rate_examples() {
        let mut tr = ObstacleTracker::new(None);
        let first = tr.estimate_rates(&[7], &[[0.95, 2.0, 0.0, 1.0]], 1.0).unwrap();
        assert_eq!(first.rates, vec![[0.0; 4]]);
        assert_eq!(first.first_seen, vec![true]);
        let r = tr.estimate_rates(&[7], &[[1.0, 2.0, 0.0, 1.0]], 1.05).unwrap();
        for (got, want) in r.rates[0].iter().zip([1.0, 0.0, 0.0, 0.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        let r = tr.estimate_rates(&[7, 8], &[[1.0, 2.0, 0.0, 1.0], [3.0; 4]], 1.1).unwrap();
        assert_eq!(r.rates[0], [0.0; 4]);
        assert_eq!(r.first_seen, vec![false, true]);
        assert!(matches!(tr.estimate_rates(&[7], &[[0.0; 4]], 1.1), Err(Error::NonMonotoneTime { .. })));
    }

    #[test]
    fn angle_rates_wrap() {
        let mut tr = ObstacleTracker::new(Some(2));
        tr.estimate_rates(&[1], &[[0.0, 0.0, PI - 0.01, 1.0]], 0.0).unwrap();
        let r = tr.estimate_rates(&[1], &[[0.0, 0.0, -PI + 0.01, 1.0]], 0.1).unwrap();
        assert!((r.rates[0][2] - 0.2).abs() < 1e-9);
    }

    fn composite(h: f64, grad: Vec<f64>, dh_dt: f64) -> CompositeOutput {
        CompositeOutput {
            h,
            grad_x: grad,
            dh_dt,
            per_obstacle_hbar: vec![h],
            per_obstacle_failure: vec![h],
            weights: vec![1.0],
        }
    }

    #[test]
    fn constraint_examples() {
        let c = build_constraint(&[0.0; 3], &[[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]], &composite(0.5, vec![0.0; 3], -1.0), 4.0);
        assert_eq!(c.a, vec![0.0, 0.0]);
        assert_eq!(c.b, -(-1.0 + 2.0));
        // drift-free unicycle
        let th: f64 = 0.3;
        let g = [[th.cos(), 0.0], [th.sin(), 0.0], [0.0, 1.0]];
        let grad = vec![0.2, -0.7, 0.4];
        let c = build_constraint(&[0.0; 3], &g, &composite(0.1, grad.clone(), 0.05), 4.0);
        let u = [0.6, -0.3];
        let xdot: Vec<f64> = g.iter().map(|row| row[0] * u[0] + row[1] * u[1]).collect();
        assert!((c.lhs(&u) - dot(&grad, &xdot)).abs() < 1e-15);
        assert_eq!(c.b, -(0.05 + 0.4));
    }

    #[test]
    fn random_constraint_matches_dynamics_recompute() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let (f, g) = Profile::Quad.robot_affine(&x);
            let grad: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let comp = composite(rng.random_range(-1.0..1.0), grad.clone(), rng.random_range(-1.0..1.0));
            let c = build_constraint(&f, &g, &comp, 4.0);
            let u = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let xdot: Vec<f64> = (0..4).map(|i| f[i] + g[i][0] * u[0] + g[i][1] * u[1]).collect();
            let lhs = c.lhs(&u) - c.b;
            let expect = dot(&grad, &xdot) + comp.dh_dt + 4.0 * comp.h;
            assert!((lhs - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn qp_examples() {
        let b = bounds2();
        // inactive
        let c = LinearConstraint { a: vec![1.0, 0.0], b: 0.0 };
        let s = solve_qp(&[2.0, 0.1], &c, &b, 1e4);
        assert_eq!(s.u, vec![1.0, 0.1]);
        assert_eq!((s.slack, s.status), (0.0, QpStatus::Inactive));
        // 1D projection onto a half-line
        let b1 = BoxBounds::new(vec![-1.0], vec![1.0]).unwrap();
        let c = LinearConstraint { a: vec![-1.0], b: 0.5 };
        let s = solve_qp(&[1.0], &c, &b1, 1e4);
        assert!((s.u[0] + 0.5).abs() < 1e-15);
        assert_eq!(s.slack, 0.0);
        assert_eq!(s.status, QpStatus::Active);
        assert!(kkt_residual(&s, &[1.0], &c, &b1, 1e4) < 1e-12);
        // infeasible: slack picks up the gap
        let c = LinearConstraint { a: vec![1.0], b: 2.0 };
        let s = solve_qp(&[0.0], &c, &b1, 1e4);
        assert_eq!(s.status, QpStatus::Slack);
        assert_eq!(s.u, vec![1.0]);
        assert!((s.slack - 1.0).abs() < 1e-12);
        assert!(kkt_residual(&s, &[0.0], &c, &b1, 1e4) < 1e-9);
    }

    #[test]
    fn qp_is_optimal_on_random_instances() {
        // Coarse oracle: the returned point is feasible and no lattice point
        // of the box beats it.
        let b = bounds2();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let r = [rng.random_range(-0.5..1.5), rng.random_range(-1.5..1.5)];
            let c = LinearConstraint { a: vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)], b: rng.random_range(-2.0..2.0) };
            let s = solve_qp(&r, &c, &b, 1e4);
            assert!(b.contains(&s.u));
            assert!(kkt_residual(&s, &r, &c, &b, 1e4) < 1e-8, "{s:?}");
            let feasible = max_lhs(&c, &b) >= c.b;
            assert_eq!(feasible, s.slack == 0.0);
            for i in 0..=60 {
                for j in 0..=60 {
                    let u = [
                        b.lower[0] + (b.upper[0] - b.lower[0]) * i as f64 / 60.0,
                        b.lower[1] + (b.upper[1] - b.lower[1]) * j as f64 / 60.0,
                    ];
                    let lhs = c.lhs(&u);
                    let obj = if feasible {
                        if lhs < c.b {
                            continue;
                        }
                        half_sq_dist(&u, &r)
                    } else {
                        half_sq_dist(&u, &r) + 1e4 * (c.b - lhs).max(0.0).powi(2)
                    };
                    assert!(s.objective <= obj + 1e-12 * (1.0 + obj), "{s:?} {r:?} {c:?} u={u:?} obj={obj} feasible={feasible}");
                }
            }
        }
    }

    #[test]
    fn minimal_intervention() {
        let b = bounds2();
        let c = LinearConstraint { a: vec![0.3, -0.2], b: -1.0 };
        let s = solve_qp(&[0.5, 0.1], &c, &b, 1e4);
        assert_eq!(s.u, vec![0.5, 0.1]);
    }

    fn model() -> ResidualModel {
        ResidualModel {
            profile: Profile::Ground,
            params: MlpParams::init(&ARCHITECTURE, 3),
            normalization: Normalization { lower: [-5.0, -5.0, -PI, 0.0], upper: [5.0, 5.0, PI, 1.5] },
            geometry: CollisionGeometry::default(),
        }
    }

    #[test]
    fn no_obstacles_pass_clamped_reference() {
        let cfg = FilterConfig::new(bounds2());
        let mut tr = ObstacleTracker::new(Some(2));
        let obs = Observation { ids: &[], states: &[], radii: &[] };
        let out = filter_step(&[0.0, 0.0, 0.0], &[2.0, -0.1], obs, &mut tr, &model(), &cfg, 0.0).unwrap();
        assert_eq!(out.u, vec![1.0, -0.1]);
        assert!(out.composite.is_none());
    }

    #[test]
    fn far_obstacle_leaves_reference_untouched() {
        let cfg = FilterConfig::new(bounds2());
        let mut tr = ObstacleTracker::new(Some(2));
        let states = [[4.5, 4.0, 0.0, 0.5]];
        let obs = Observation { ids: &[1], states: &states, radii: &[0.3] };
        let out = filter_step(&[0.0, 0.0, PI], &[0.8, 0.2], obs, &mut tr, &model(), &cfg, 0.0).unwrap();
        assert_eq!(out.u, vec![0.8, 0.2]);
        assert!(!out.diagnostics.intervened);
        assert!(out.diagnostics.set_changed);
        let out = filter_step(&[0.0, 0.0, PI], &[0.8, 0.2], obs, &mut tr, &model(), &cfg, 0.004).unwrap();
        assert!(!out.diagnostics.set_changed);
    }
}
