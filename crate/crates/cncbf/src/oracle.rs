//! Independent oracle suites: DP comparison of the HJ solve, finite-difference
//! gradient checks, grid-search QP checks and the aggregation sandwich.

use std::path::{Path, PathBuf};

use cncbf_core::composite::{aggregate, composite_value_and_grads, ObstacleSet};
use cncbf_core::dynamics::{BoxBounds, GroundGame, GroundLimits, Profile, QuadGame, QuadLimits};
use cncbf_core::filter::{solve_qp, LinearConstraint, QpSolution};
use cncbf_core::grid::{Axis, GridSpec, DIMS};
use cncbf_core::hj::{dp_oracle, solve, SolverConfig, ValueField};
use cncbf_core::net::{MlpParams, Normalization, ResidualModel, ARCHITECTURE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::commands::load_weights;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Dp,
    Grad,
    Qp,
    Aggregate,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Dp, Suite::Grad, Suite::Qp, Suite::Aggregate];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Dp => "dp",
            Suite::Grad => "grad",
            Suite::Qp => "qp",
            Suite::Aggregate => "aggregate",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Outcome of one check: the worst observed metric against its threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: Suite,
    pub name: String,
    pub cases: usize,
    pub worst: f64,
    pub threshold: f64,
    pub passed: bool,
    pub note: String,
}

impl Check {
    fn new(suite: Suite, name: impl Into<String>, cases: usize, worst: f64, threshold: f64) -> Self {
        Self { suite, name: name.into(), cases, worst, threshold, passed: worst <= threshold, note: String::new() }
    }

    fn failed(suite: Suite, name: impl Into<String>, note: String) -> Self {
        Self { suite, name: name.into(), cases: 0, worst: f64::NAN, threshold: f64::NAN, passed: false, note }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}/{}: worst {:.3e} (threshold {:.3e}, {} cases){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.suite.name(),
            self.name,
            self.worst,
            self.threshold,
            self.cases,
            if self.note.is_empty() { String::new() } else { format!(" {}", self.note) }
        )
    }
}

// ---------------------------------------------------------------------------
// dp

/// Coarse grids under 10⁵ nodes spanning the default domains.
pub fn coarse_grid(profile: Profile) -> GridSpec {
    use std::f64::consts::PI;
    let axes = match profile {
        Profile::Ground => [
            Axis::new(21, -5.0, 5.0, false),
            Axis::new(21, -5.0, 5.0, false),
            Axis::new(12, -PI, PI, true),
            Axis::new(10, 0.0, GroundLimits::default().v_o_max, false),
        ],
        Profile::Quad => [
            Axis::new(21, -5.0, 5.0, false),
            Axis::new(21, -5.0, 5.0, false),
            Axis::new(9, -3.5, 3.5, false),
            Axis::new(9, -3.5, 3.5, false),
        ],
    };
    GridSpec::new(axes).expect("coarse grid is valid")
}

pub const DP_STEP: f64 = 0.1;
pub const DP_TOL: f64 = 1e-4;

/// Solves `profile` on `spec` with the PDE scheme, then runs the
/// semi-Lagrangian dynamic program to the horizon the PDE solve reached so
/// both approximate the same finite-horizon game.
pub fn solve_both(profile: Profile, spec: &GridSpec) -> CliResult<(ValueField, ValueField)> {
    let cfg = SolverConfig::default();
    Ok(match profile {
        Profile::Ground => {
            let g = GroundGame::default();
            let (v, rep) = solve(&g, spec, &cfg)?;
            (v, dp_oracle(&g, spec, DP_STEP, rep.horizon, DP_TOL)?)
        }
        Profile::Quad => {
            let g = QuadGame::default();
            let (v, rep) = solve(&g, spec, &cfg)?;
            (v, dp_oracle(&g, spec, DP_STEP, rep.horizon, DP_TOL)?)
        }
    })
}

/// Largest nodewise `|V_pde - V_dp|` on the coarse grid of `profile`,
/// against two cell diagonals.
pub fn dp_check(profile: Profile) -> CliResult<Check> {
    let spec = coarse_grid(profile);
    let (pde, dp) = solve_both(profile, &spec)?;
    let diff = pde.values.iter().zip(&dp.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let note = format!("[{} nodes, {} dp steps]", spec.len(), dp.iteration_count);
    Ok(Check::new(Suite::Dp, format!("{}_vs_dp", profile.name()), spec.len(), diff, 2.0 * spec.cell_diagonal()).with_note(note))
}

// ---------------------------------------------------------------------------
// grad

/// `|g - fd| / max(|g|, floor)`.
pub fn fd_relative_error(analytic: f64, fd: f64, floor: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(floor)
}

pub const NET_FD_STEP: f64 = 1e-5;
pub const NET_FD_FLOOR: f64 = 1e-3;
pub const COMPOSITE_FD_STEP: f64 = 1e-6;
pub const COMPOSITE_FD_FLOOR: f64 = 1e-2;

/// Input gradient of the MLP against central differences at `draws` points
/// of the normalized box. With `params == None` every draw uses freshly
/// seeded parameters.
pub fn net_gradient_check(params: Option<&MlpParams>, draws: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for i in 0..draws {
        let own;
        let p = match params {
            Some(p) => p,
            None => {
                own = MlpParams::init(&ARCHITECTURE, seed.wrapping_add(i as u64));
                &own
            }
        };
        let x: [f64; DIMS] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let (_, g) = p.forward_with_grad(&x);
        for d in 0..DIMS {
            let mut xp = x;
            let mut xm = x;
            xp[d] += NET_FD_STEP;
            xm[d] -= NET_FD_STEP;
            let fd = (p.forward(&xp) - p.forward(&xm)) / (2.0 * NET_FD_STEP);
            worst = worst.max(fd_relative_error(g[d], fd, NET_FD_FLOOR));
        }
    }
    Check::new(Suite::Grad, "forward_with_grad", draws, worst, 1e-5)
}

/// Robot state and `m` obstacles within the training box of the relative
/// state, away from the nonsmooth points of `ℓ`.
pub fn random_scene(profile: Profile, m: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, ObstacleSet) {
    use std::f64::consts::PI;
    let mut obs = ObstacleSet::new();
    let x = match profile {
        Profile::Ground => vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-PI..PI)],
        Profile::Quad => vec![
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ],
    };
    for _ in 0..m {
        let r: f64 = rng.random_range(0.8..4.5);
        let phi: f64 = rng.random_range(-PI..PI);
        let (px, py) = (x[0] + r * phi.cos(), x[1] + r * phi.sin());
        let (state, rate) = match profile {
            Profile::Ground => {
                let th: f64 = rng.random_range(-PI..PI);
                let v: f64 = rng.random_range(0.2..1.4);
                ([px, py, th, v], [v * th.cos(), v * th.sin(), rng.random_range(-0.35..0.35), 0.0])
            }
            Profile::Quad => {
                let v = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
                ([px, py, v[0], v[1]], [v[0], v[1], rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            }
        };
        obs.push(state, rate, 0.3);
    }
    (x, obs)
}

/// Model with seeded weights and the default normalization of `profile`.
pub fn seeded_model(profile: Profile, seed: u64) -> ResidualModel {
    let grid = crate::commands::default_grid(profile);
    ResidualModel {
        profile,
        params: MlpParams::init(&ARCHITECTURE, seed),
        normalization: Normalization::from_grid(&grid),
        geometry: Default::default(),
    }
}

/// `∂h/∂x` of the composite barrier (M = 5) against central differences.
pub fn composite_gradient_check(model: Option<&ResidualModel>, profile: Profile, draws: usize, seed: u64, beta: f64) -> CliResult<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst = 0.0f64;
    for i in 0..draws {
        let own;
        let mdl = match model {
            Some(m) => m,
            None => {
                own = seeded_model(profile, seed.wrapping_add(i as u64));
                &own
            }
        };
        let (x, obs) = random_scene(mdl.profile, 5, &mut rng);
        let out = composite_value_and_grads(&x, &obs, mdl, beta)?;
        for c in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += COMPOSITE_FD_STEP;
            xm[c] -= COMPOSITE_FD_STEP;
            let fd = (composite_value_and_grads(&xp, &obs, mdl, beta)?.h - composite_value_and_grads(&xm, &obs, mdl, beta)?.h)
                / (2.0 * COMPOSITE_FD_STEP);
            worst = worst.max(fd_relative_error(out.grad_x[c], fd, COMPOSITE_FD_FLOOR));
        }
    }
    let name = format!("composite_grad_x_{}", model.map_or(profile, |m| m.profile).name());
    Ok(Check::new(Suite::Grad, name, draws, worst, 1e-4))
}

// ---------------------------------------------------------------------------
// qp

pub const QP_GRID_STEP: f64 = 1e-3;
pub const QP_SLACK_PENALTY: f64 = 1e4;

#[derive(Debug, Clone)]
pub struct QpInstance {
    pub u_ref: Vec<f64>,
    pub constraint: LinearConstraint,
    pub bounds: BoxBounds,
}

/// Alternates the ground and quad input boxes; about one instance in five
/// is infeasible and one in five has an inactive constraint.
pub fn random_qp(rng: &mut ChaCha8Rng, i: usize) -> QpInstance {
    let bounds = if i % 2 == 0 {
        GroundLimits::default().control_bounds()
    } else {
        let a = QuadLimits::default().a_max;
        BoxBounds { lower: vec![-a; 2], upper: vec![a; 2] }
    };
    let span: Vec<f64> = (0..2).map(|j| bounds.upper[j] - bounds.lower[j]).collect();
    let u_ref: Vec<f64> = (0..2).map(|j| bounds.lower[j] + span[j] * rng.random_range(-0.5..1.5)).collect();
    let a: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
    let max_lhs: f64 = (0..2).map(|j| (a[j] * bounds.lower[j]).max(a[j] * bounds.upper[j])).sum();
    let min_lhs: f64 = (0..2).map(|j| (a[j] * bounds.lower[j]).min(a[j] * bounds.upper[j])).sum();
    let b = match rng.random_range(0..5) {
        0 => max_lhs + rng.random_range(0.01..0.5),
        1 => min_lhs - rng.random_range(0.0..0.5),
        _ => min_lhs + (max_lhs - min_lhs) * rng.random_range(0.05..0.95),
    };
    QpInstance { u_ref, constraint: LinearConstraint { a, b }, bounds }
}

fn qp_objective(u: &[f64], inst: &QpInstance, hard: bool) -> Option<f64> {
    let c = &inst.constraint;
    let lhs = c.a[0] * u[0] + c.a[1] * u[1];
    let dist = 0.5 * ((u[0] - inst.u_ref[0]).powi(2) + (u[1] - inst.u_ref[1]).powi(2));
    if hard {
        (lhs >= c.b).then_some(dist)
    } else {
        let s = (c.b - lhs).max(0.0);
        Some(dist + QP_SLACK_PENALTY * s * s)
    }
}

/// Best objective over a regular grid of the box with spacing
/// [`QP_GRID_STEP`]: the hard-constrained problem when some box point meets
/// the constraint, else the slack-penalized one. `None` when the feasible
/// set holds no grid point.
pub fn grid_search_objective(inst: &QpInstance) -> Option<f64> {
    let b = &inst.bounds;
    let c = &inst.constraint;
    let max_lhs: f64 = (0..2).map(|j| (c.a[j] * b.lower[j]).max(c.a[j] * b.upper[j])).sum();
    let hard = max_lhs >= c.b;
    let n: Vec<usize> = (0..2).map(|j| ((b.upper[j] - b.lower[j]) / QP_GRID_STEP).round() as usize).collect();
    let mut best: Option<f64> = None;
    for i in 0..=n[0] {
        let u0 = if i == n[0] { b.upper[0] } else { b.lower[0] + i as f64 * QP_GRID_STEP };
        for k in 0..=n[1] {
            let u1 = if k == n[1] { b.upper[1] } else { b.lower[1] + k as f64 * QP_GRID_STEP };
            if let Some(v) = qp_objective(&[u0, u1], inst, hard) {
                if best.is_none_or(|b| v < b) {
                    best = Some(v);
                }
            }
        }
    }
    best
}

/// KKT residual of `sol` with the barrier multiplier recovered from the
/// solution alone: `2 P s` under slack, zero when the row is slack, a least
/// squares fit over the coordinates strictly inside the box otherwise, and
/// the best nonnegative value among the sign breakpoints when every
/// coordinate sits on a bound.
pub fn independent_kkt(sol: &QpSolution, inst: &QpInstance) -> f64 {
    let c = &inst.constraint;
    let (l, h) = (&inst.bounds.lower, &inst.bounds.upper);
    let u = &sol.u;
    let r = &inst.u_ref;
    let n = u.len();
    let lhs: f64 = (0..n).map(|j| c.a[j] * u[j]).sum();
    let scale = 1.0 + c.b.abs() + c.a.iter().map(|v| v.abs()).sum::<f64>();
    let residual = |lambda: f64| -> f64 {
        let mut worst = (-lambda).max(0.0);
        worst = worst.max(c.b - lhs - sol.slack);
        worst = worst.max((lambda * (lhs + sol.slack - c.b)).abs());
        for j in 0..n {
            let g = u[j] - r[j] - lambda * c.a[j];
            let viol = if u[j] <= l[j] {
                (-g).max(0.0)
            } else if u[j] >= h[j] {
                g.max(0.0)
            } else {
                g.abs()
            };
            worst = worst.max(viol);
        }
        worst
    };
    if sol.slack > 0.0 {
        return residual(2.0 * QP_SLACK_PENALTY * sol.slack);
    }
    if lhs > c.b + 1e-12 * scale {
        return residual(0.0);
    }
    let free: Vec<usize> = (0..n).filter(|&j| u[j] > l[j] && u[j] < h[j] && c.a[j] != 0.0).collect();
    if !free.is_empty() {
        let num: f64 = free.iter().map(|&j| c.a[j] * (u[j] - r[j])).sum();
        let den: f64 = free.iter().map(|&j| c.a[j] * c.a[j]).sum();
        return residual(num / den);
    }
    let mut candidates = vec![0.0];
    candidates.extend((0..n).filter(|&j| c.a[j] != 0.0).map(|j| ((u[j] - r[j]) / c.a[j]).max(0.0)));
    candidates.into_iter().map(residual).fold(f64::INFINITY, f64::min)
}

/// Objective gap, KKT residual and exact bound satisfaction on `instances`
/// random problems.
pub fn qp_checks(instances: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9b);
    let mut gap = 0.0f64;
    let mut kkt = 0.0f64;
    let mut out_of_box = 0usize;
    let mut no_grid_point = 0usize;
    for i in 0..instances {
        let inst = random_qp(&mut rng, i);
        let sol = solve_qp(&inst.u_ref, &inst.constraint, &inst.bounds, QP_SLACK_PENALTY);
        if (0..2).any(|j| !(sol.u[j] >= inst.bounds.lower[j] && sol.u[j] <= inst.bounds.upper[j])) {
            out_of_box += 1;
        }
        kkt = kkt.max(independent_kkt(&sol, &inst));
        match grid_search_objective(&inst) {
            Some(best) => gap = gap.max(sol.objective - best),
            None => no_grid_point += 1,
        }
    }
    vec![
        Check::new(Suite::Qp, "objective_gap", instances, gap, 1e-5)
            .with_note(format!("[{no_grid_point} instances without a feasible grid point]")),
        Check::new(Suite::Qp, "kkt_residual", instances, kkt, 1e-8),
        Check::new(Suite::Qp, "bounds", instances, out_of_box as f64, 0.0),
    ]
}

// ---------------------------------------------------------------------------
// aggregate

/// Worst violation of `min - ln(M)/β ≤ η ≤ min` over `tuples` random draws.
pub fn aggregate_check(tuples: usize, seed: u64) -> CliResult<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa99);
    let mut worst = 0.0f64;
    for _ in 0..tuples {
        let m = rng.random_range(1..=20usize);
        let beta: f64 = rng.random_range(0.1..100.0);
        let h: Vec<f64> = (0..m).map(|_| rng.random_range(-10.0..10.0)).collect();
        let eta = aggregate(&h, beta)?;
        let min = h.iter().copied().fold(f64::INFINITY, f64::min);
        let lower = min - (m as f64).ln() / beta;
        worst = worst.max(lower - eta).max(eta - min);
    }
    Ok(Check::new(Suite::Aggregate, "log_sum_exp_sandwich", tuples, worst, 1e-12))
}

// ---------------------------------------------------------------------------
// command

#[derive(Debug, Clone)]
pub struct OracleOptions {
    pub suites: Vec<Suite>,
    pub profiles: Vec<Profile>,
    pub seed: u64,
    pub draws: usize,
    pub weights: Option<PathBuf>,
    pub beta: f64,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub draws: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn grad_suite(opts: &OracleOptions, weights: Option<&Path>) -> CliResult<Vec<Check>> {
    let mut checks = Vec::new();
    match weights {
        Some(p) => {
            let (_, model) = match load_weights(p, None) {
                Ok(m) => m,
                Err(e) => return Ok(vec![Check::failed(Suite::Grad, "weights", e.to_string())]),
            };
            checks.push(net_gradient_check(Some(&model.params), opts.draws, opts.seed));
            checks.push(composite_gradient_check(Some(&model), model.profile, opts.draws, opts.seed, opts.beta)?);
        }
        None => {
            checks.push(net_gradient_check(None, opts.draws, opts.seed));
            for &p in &opts.profiles {
                checks.push(composite_gradient_check(None, p, opts.draws, opts.seed, opts.beta)?);
            }
        }
    }
    Ok(checks)
}

pub fn cmd_oracle(opts: &OracleOptions, mut on_check: impl FnMut(&Check)) -> CliResult<OracleReport> {
    if opts.suites.is_empty() {
        return Err(CliError::Usage("no oracle suite selected".into()));
    }
    if opts.draws == 0 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    let mut checks = Vec::new();
    let mut push = |c: Check, checks: &mut Vec<Check>| {
        on_check(&c);
        checks.push(c);
    };
    for suite in &opts.suites {
        match suite {
            Suite::Dp => {
                for &p in &opts.profiles {
                    push(dp_check(p)?, &mut checks);
                }
            }
            Suite::Grad => {
                for c in grad_suite(opts, opts.weights.as_deref())? {
                    push(c, &mut checks);
                }
            }
            Suite::Qp => {
                for c in qp_checks(opts.draws, opts.seed) {
                    push(c, &mut checks);
                }
            }
            Suite::Aggregate => push(aggregate_check(10 * opts.draws, opts.seed)?, &mut checks),
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    let report = OracleReport { seed: opts.seed, draws: opts.draws, checks, passed };
    if let Some(dir) = &opts.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join("oracle_report.json");
        let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
        s.push('\n');
        std::fs::write(&path, s).map_err(|e| CliError::io(&path, e))?;
    }
    Ok(report)
}
