//! Subcommand implementations. Each writes its artifacts into an output
//! directory and records them in that directory's manifest.

use std::path::{Path, PathBuf};

use cncbf_core::composite::{slice_export, Slice2D, SliceSpec};
use cncbf_core::contour::{zero_contour, Polyline};
use cncbf_core::dynamics::{CollisionGeometry, GroundGame, Profile, QuadGame};
use cncbf_core::filter::FilterConfig;
use cncbf_core::grid::{Axis, GridSpec, DIMS};
use cncbf_core::hj::{solve_with, SolveReport, SolverConfig, ValueField};
use cncbf_core::net::ResidualModel;
use cncbf_core::sim::{
    cell_label, run_benchmark, run_episode, spawn_scenario, BenchmarkPlan, BenchmarkReport, EpisodeMetrics, Method,
    SimConfig,
};
use cncbf_core::train::{build_dataset, evaluate, train_with, ErrorStats, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::manifest::{check_artifact, config_hash, sha256_file, PipelineManifest};
use crate::{field_io, report, weights};

pub const FIELD_FILE: &str = "value.cnvf";
pub const WEIGHTS_FILE: &str = "weights.json";

fn write_text(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    write_text(dir, name, &s)
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn default_grid(profile: Profile) -> GridSpec {
    match profile {
        Profile::Ground => GridSpec::ground_default(GroundGame::default().limits.v_o_max),
        Profile::Quad => GridSpec::quad_default(3.5),
    }
}

/// Default grid of `profile` with node counts replaced by `counts`.
pub fn grid_with_counts(profile: Profile, counts: Option<[usize; DIMS]>) -> CliResult<GridSpec> {
    let base = default_grid(profile);
    let Some(counts) = counts else {
        return Ok(base);
    };
    let axes: [Axis; DIMS] = std::array::from_fn(|d| Axis { count: counts[d], ..base.axes[d] });
    GridSpec::new(axes).map_err(|e| CliError::Usage(e.to_string()))
}

/// Profile implied by a grid: only the ground profile has a periodic axis.
pub fn profile_of_grid(spec: &GridSpec) -> Profile {
    if spec.axes.iter().any(|a| a.periodic) {
        Profile::Ground
    } else {
        Profile::Quad
    }
}

// ---------------------------------------------------------------------------
// solve

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub profile: Profile,
    pub grid: Option<[usize; DIMS]>,
    pub solver: SolverConfig,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveSummary {
    pub profile: Profile,
    pub grid: GridSpec,
    pub node_count: usize,
    pub solver: SolverConfig,
    pub seed: u64,
    pub report: SolveReport,
    pub min_value: f64,
    pub value_field_sha256: String,
}

pub fn solve_field(profile: Profile, spec: &GridSpec, cfg: &SolverConfig, mut progress: impl FnMut(usize, f64)) -> CliResult<(ValueField, SolveReport)> {
    let r = match profile {
        Profile::Ground => solve_with(&GroundGame::default(), spec, cfg, &mut progress),
        Profile::Quad => solve_with(&QuadGame::default(), spec, cfg, &mut progress),
    };
    Ok(r?)
}

/// Writes the field and its report; fails with a numerical error (after
/// writing) when the solve did not converge.
pub fn cmd_solve(opts: &SolveOptions, mut progress: impl FnMut(usize, f64)) -> CliResult<SolveSummary> {
    let spec = grid_with_counts(opts.profile, opts.grid)?;
    opts.solver.validate()?;
    ensure_dir(&opts.out)?;
    let mut manifest = PipelineManifest::open(&opts.out, opts.profile)?;
    let (field, rep) = solve_field(opts.profile, &spec, &opts.solver, &mut progress)?;
    field_io::write(&opts.out.join(FIELD_FILE), &field)?;
    let summary = SolveSummary {
        profile: opts.profile,
        grid: spec,
        node_count: spec.len(),
        solver: opts.solver,
        seed: opts.seed,
        report: rep,
        min_value: field.min_value(),
        value_field_sha256: sha256_file(&opts.out.join(FIELD_FILE))?,
    };
    write_json(&opts.out, "solve_report.json", &summary)?;
    manifest.record("value_field", &opts.out, FIELD_FILE)?;
    manifest.record("solve_report", &opts.out, "solve_report.json")?;
    manifest.config_sha256.insert("solve".into(), config_hash(&(opts.profile, &spec, &opts.solver, opts.seed)));
    manifest.save(&opts.out)?;
    if !rep.converged {
        return Err(CliError::Numerical(format!(
            "solve did not converge within {} s (residual {:.3e}); report written",
            opts.solver.max_horizon, rep.residual
        )));
    }
    Ok(summary)
}

// ---------------------------------------------------------------------------
// train

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub field: PathBuf,
    pub profile: Option<Profile>,
    pub config: TrainConfig,
    pub subsample: f64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub profile: Profile,
    pub parameter_count: usize,
    pub samples: usize,
    pub subsample: f64,
    pub config: TrainConfig,
    pub best_epoch: usize,
    pub train_error: ErrorStats,
    pub validation_error: ErrorStats,
    pub grid_sha256: String,
}

/// Loads a value field and works out its profile, refusing a requested
/// profile that disagrees with the grid or with the field's manifest.
pub fn load_field(path: &Path, requested: Option<Profile>) -> CliResult<(ValueField, Profile)> {
    let manifest = check_artifact(path, requested)?;
    let field = field_io::read(path)?;
    let implied = profile_of_grid(&field.spec);
    for (what, p) in [("requested", requested), ("manifest", manifest.map(|m| m.profile))] {
        if let Some(p) = p {
            if p != implied {
                return Err(CliError::Validation(format!(
                    "{} holds a {} grid but the {what} profile is {}",
                    path.display(),
                    implied.name(),
                    p.name()
                )));
            }
        }
    }
    Ok((field, implied))
}

pub fn cmd_train(opts: &TrainOptions, mut progress: impl FnMut(usize, f64, f64)) -> CliResult<TrainSummary> {
    if !(opts.subsample > 0.0 && opts.subsample <= 1.0) {
        return Err(CliError::Usage("--subsample must be in (0, 1]".into()));
    }
    opts.config.validate()?;
    let (field, profile) = load_field(&opts.field, opts.profile)?;
    ensure_dir(&opts.out)?;
    let mut manifest = PipelineManifest::open(&opts.out, profile)?;
    let grid_sha256 = sha256_file(&opts.field)?;
    let geometry = CollisionGeometry::default();
    let full = build_dataset(&field, &geometry);
    let ds = if opts.subsample < 1.0 { full.subsample(opts.subsample, opts.config.seed) } else { full };
    let out = train_with(&ds, &opts.config, |r| progress(r.epoch, r.train_mse, r.validation_mse))?;
    let model = out.model(profile, &ds, geometry);
    let summary = TrainSummary {
        profile,
        parameter_count: model.params.param_count(),
        samples: ds.len(),
        subsample: opts.subsample,
        config: opts.config.clone(),
        best_epoch: out.best_epoch,
        train_error: evaluate(&out.params, &ds, &out.train_indices),
        validation_error: evaluate(&out.params, &ds, &out.validation_indices),
        grid_sha256: grid_sha256.clone(),
    };
    let provenance = weights::Provenance {
        grid_sha256,
        seed: opts.config.seed,
        epochs: opts.config.epochs,
        best_epoch: out.best_epoch,
        subsample: opts.subsample,
        config_sha256: config_hash(&(&opts.config, opts.subsample)),
    };
    weights::write(&opts.out.join(WEIGHTS_FILE), &weights::WeightFile::from_model(&model, provenance))?;
    write_text(&opts.out, "loss_history.csv", &report::loss_history_csv(&out.history))?;
    write_json(&opts.out, "train_report.json", &summary)?;
    manifest.record("weights", &opts.out, WEIGHTS_FILE)?;
    manifest.record("loss_history", &opts.out, "loss_history.csv")?;
    manifest.record("train_report", &opts.out, "train_report.json")?;
    manifest.config_sha256.insert("train".into(), config_hash(&(&opts.config, opts.subsample)));
    manifest.save(&opts.out)?;
    Ok(summary)
}

/// Loads weights, verifying the neighbouring manifest when there is one.
pub fn load_weights(path: &Path, profile: Option<Profile>) -> CliResult<(weights::WeightFile, ResidualModel)> {
    check_artifact(path, profile)?;
    weights::load_model(path, profile)
}

// ---------------------------------------------------------------------------
// inspect

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Inspection {
    ValueField {
        profile: Profile,
        grid: GridSpec,
        node_count: usize,
        min_value: f64,
        max_value: f64,
        safe_fraction: f64,
        sha256: String,
    },
    Weights {
        profile: Profile,
        architecture: weights::Architecture,
        r_min: f64,
        provenance: weights::Provenance,
        sha256: String,
    },
}

pub fn cmd_inspect(field: Option<&Path>, weights_path: Option<&Path>) -> CliResult<Vec<Inspection>> {
    if field.is_none() && weights_path.is_none() {
        return Err(CliError::Usage("inspect needs --field and/or --weights".into()));
    }
    let mut out = Vec::new();
    if let Some(p) = field {
        let (f, profile) = load_field(p, None)?;
        let max = f.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let safe = f.values.iter().filter(|v| **v >= 0.0).count() as f64 / f.values.len() as f64;
        out.push(Inspection::ValueField {
            profile,
            grid: f.spec,
            node_count: f.spec.len(),
            min_value: f.min_value(),
            max_value: max,
            safe_fraction: safe,
            sha256: sha256_file(p)?,
        });
    }
    if let Some(p) = weights_path {
        let (w, model) = load_weights(p, None)?;
        out.push(Inspection::Weights {
            profile: model.profile,
            architecture: w.architecture,
            r_min: model.geometry.r_min(),
            provenance: w.provenance,
            sha256: sha256_file(p)?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// slice

#[derive(Debug, Clone)]
pub enum SliceSource {
    Weights(PathBuf),
    Field(PathBuf),
}

#[derive(Debug, Clone)]
pub struct SliceOptions {
    pub source: SliceSource,
    pub profile: Option<Profile>,
    pub free: [usize; 2],
    /// Values of the remaining dimensions in increasing index order.
    pub fixed: Option<Vec<f64>>,
    pub lower: Option<[f64; 2]>,
    pub upper: Option<[f64; 2]>,
    pub resolution: [usize; 2],
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SliceSummary {
    pub profile: Profile,
    pub source: String,
    pub free: [usize; 2],
    pub fixed: [f64; DIMS],
    pub lower: [f64; 2],
    pub upper: [f64; 2],
    pub resolution: [usize; 2],
    pub min_value: f64,
    pub max_value: f64,
    pub contour_polylines: usize,
    pub contour_points: usize,
    /// Smallest distance from the origin of a contour point when the free
    /// axes are the relative position, else `None`.
    pub contour_min_radius: Option<f64>,
    pub r_min: f64,
    /// Whether the contour enters the open `R_min` disk.
    pub contour_enters_disk: Option<bool>,
}

pub fn axis_names(profile: Profile) -> [&'static str; DIMS] {
    match profile {
        Profile::Ground => ["x_rel", "y_rel", "theta_rel", "v_o"],
        Profile::Quad => ["x_rel", "y_rel", "vx_rel", "vy_rel"],
    }
}

/// Heading `π`, pedestrian speed 1.2 for the ground robot; zero relative
/// velocity for the quadrotor.
pub fn default_fixed(profile: Profile) -> [f64; DIMS] {
    match profile {
        Profile::Ground => [0.0, 0.0, std::f64::consts::PI, 1.2],
        Profile::Quad => [0.0; DIMS],
    }
}

pub struct SliceResult {
    pub slice: Slice2D,
    pub contour: Vec<Polyline>,
    pub summary: SliceSummary,
}

pub fn compute_slice(opts: &SliceOptions) -> CliResult<SliceResult> {
    let [a, b] = opts.free;
    if a >= DIMS || b >= DIMS || a == b {
        return Err(CliError::Usage(format!("free dimensions must be two distinct indices below {DIMS}")));
    }
    if opts.resolution.contains(&0) {
        return Err(CliError::Usage("resolution must be at least 1".into()));
    }
    enum Eval {
        Model(ResidualModel),
        Field(ValueField),
    }
    let (eval, profile, source) = match &opts.source {
        SliceSource::Weights(p) => {
            let (_, m) = load_weights(p, opts.profile)?;
            let profile = m.profile;
            (Eval::Model(m), profile, "weights")
        }
        SliceSource::Field(p) => {
            let (f, profile) = load_field(p, opts.profile)?;
            (Eval::Field(f), profile, "value_field")
        }
    };
    let mut fixed = default_fixed(profile);
    if let Some(v) = &opts.fixed {
        let others: Vec<usize> = (0..DIMS).filter(|d| *d != a && *d != b).collect();
        if v.len() != others.len() {
            return Err(CliError::Usage(format!("--fixed needs {} values", others.len())));
        }
        for (d, x) in others.into_iter().zip(v) {
            fixed[d] = *x;
        }
    }
    let grid = default_grid(profile);
    let lower = opts.lower.unwrap_or([grid.axes[a].lower, grid.axes[b].lower]);
    let upper = opts.upper.unwrap_or([grid.axes[a].upper, grid.axes[b].upper]);
    let at = |x: f64, y: f64| {
        let mut z = fixed;
        z[a] = x;
        z[b] = y;
        z
    };
    let r_min = CollisionGeometry::default().r_min();
    let (slice, contour, r_min) = match &eval {
        Eval::Model(m) => {
            let spec = SliceSpec { free: opts.free, lower, upper, resolution: opts.resolution, fixed };
            let slice = slice_export(m, &spec);
            let f = |x: f64, y: f64| m.hbar(&at(x, y));
            let contour = zero_contour(&slice, Some(&f));
            (slice, contour, m.geometry.r_min())
        }
        Eval::Field(field) => {
            let mut err = None;
            let mut f = |x: f64, y: f64| match field.interpolate(&at(x, y)) {
                Ok(v) => v.value,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            };
            let slice = Slice2D::sample(lower, upper, opts.resolution, &mut f);
            if let Some(e) = err {
                return Err(e.into());
            }
            let contour = zero_contour(&slice, None);
            (slice, contour, r_min)
        }
    };
    let position_axes = opts.free == [0, 1] || opts.free == [1, 0];
    let contour_min_radius = position_axes.then(|| {
        contour.iter().flat_map(|l| l.points.iter()).map(|p| p[0].hypot(p[1])).fold(f64::INFINITY, f64::min)
    });
    let summary = SliceSummary {
        profile,
        source: source.into(),
        free: opts.free,
        fixed,
        lower,
        upper,
        resolution: opts.resolution,
        min_value: slice.values.iter().copied().fold(f64::INFINITY, f64::min),
        max_value: slice.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        contour_polylines: contour.len(),
        contour_points: contour.iter().map(|l| l.points.len()).sum(),
        contour_min_radius,
        r_min,
        contour_enters_disk: contour_min_radius.map(|r| r < r_min),
    };
    Ok(SliceResult { slice, contour, summary })
}

pub fn cmd_slice(opts: &SliceOptions) -> CliResult<SliceSummary> {
    let res = compute_slice(opts)?;
    ensure_dir(&opts.out)?;
    let mut manifest = PipelineManifest::open(&opts.out, res.summary.profile)?;
    let names = axis_names(res.summary.profile);
    let [a, b] = opts.free;
    let fixed_desc: Vec<String> =
        (0..DIMS).filter(|d| *d != a && *d != b).map(|d| format!("{}={}", names[d], res.summary.fixed[d])).collect();
    let meta = format!(
        "source={} profile={} axes={},{} fixed={} resolution={}x{}",
        res.summary.source,
        res.summary.profile.name(),
        names[a],
        names[b],
        fixed_desc.join(";"),
        opts.resolution[0],
        opts.resolution[1]
    );
    write_text(&opts.out, "slice.csv", &report::slice_csv(&res.slice, [names[a], names[b]], &meta))?;
    write_text(&opts.out, "contour.csv", &report::contour_csv(&res.contour))?;
    let disk = res.summary.contour_min_radius.map(|_| res.summary.r_min);
    let title = format!("{} slice, {}", res.summary.source, fixed_desc.join(", "));
    write_text(&opts.out, "slice.svg", &report::slice_svg(&res.slice, &res.contour, [names[a], names[b]], &title, disk))?;
    write_json(&opts.out, "slice_report.json", &res.summary)?;
    for (role, f) in [("slice", "slice.csv"), ("contour", "contour.csv"), ("slice_svg", "slice.svg"), ("slice_report", "slice_report.json")] {
        manifest.record(role, &opts.out, f)?;
    }
    manifest.save(&opts.out)?;
    Ok(res.summary)
}

// ---------------------------------------------------------------------------
// simulate

/// Scenario configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub seed: u64,
    pub obstacles: usize,
    pub profile: Profile,
    #[serde(default)]
    pub sim: SimConfig,
}

#[derive(Debug, Clone)]
pub struct FilterKnobs {
    pub k: f64,
    pub beta: f64,
}

/// `k = 0.5` rather than the filter's own default of 4: the learned
/// barrier is slightly optimistic and a flatter class-κ slope starts
/// evasive action earlier.
impl Default for FilterKnobs {
    fn default() -> Self {
        Self { k: 0.5, beta: 4.0 }
    }
}

pub fn filter_config(profile: Profile, sim: &SimConfig, knobs: &FilterKnobs) -> FilterConfig {
    let bounds = match profile {
        Profile::Ground => sim.ground.control_bounds(),
        Profile::Quad => cncbf_core::dynamics::BoxBounds {
            lower: vec![-sim.quad.a_max; 2],
            upper: vec![sim.quad.a_max; 2],
        },
    };
    let mut cfg = FilterConfig::new(bounds);
    cfg.k = knobs.k;
    cfg.beta = knobs.beta;
    cfg.rate_hz = sim.rate_hz;
    cfg
}

#[derive(Debug, Clone)]
pub struct SimulateOptions {
    pub scenario: ScenarioFile,
    pub method: Method,
    pub weights: Option<PathBuf>,
    pub filter: FilterKnobs,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub scenario: ScenarioFile,
    pub method: Method,
    pub compliant: bool,
    pub k: f64,
    pub beta: f64,
    pub metrics: EpisodeMetrics,
    /// Smallest logged composite barrier value (filtered runs).
    pub min_logged_h: Option<f64>,
}

fn model_for(method_needs: bool, weights: Option<&Path>, profile: Profile) -> CliResult<Option<ResidualModel>> {
    match (method_needs, weights) {
        (true, None) => Err(CliError::Usage("the filtered method needs --weights".into())),
        (_, Some(p)) => Ok(Some(load_weights(p, Some(profile))?.1)),
        (false, None) => Ok(None),
    }
}

pub fn cmd_simulate(opts: &SimulateOptions) -> CliResult<SimulateSummary> {
    let sc = &opts.scenario;
    sc.sim.validate()?;
    let model = model_for(opts.method == Method::Filtered, opts.weights.as_deref(), sc.profile)?;
    let scenario = spawn_scenario(sc.seed, sc.obstacles, sc.profile, &sc.sim)?;
    let fcfg = filter_config(sc.profile, &sc.sim, &opts.filter);
    let out = run_episode(&scenario, opts.method, model.as_ref(), &fcfg, &sc.sim, true)?;
    let rows = out.trajectory.unwrap_or_default();
    ensure_dir(&opts.out)?;
    let mut manifest = PipelineManifest::open(&opts.out, sc.profile)?;
    let robot_names: &[&str] = match sc.profile {
        Profile::Ground => &["x", "y", "theta"],
        Profile::Quad => &["x", "y", "vx", "vy"],
    };
    let min_logged_h =
        (opts.method == Method::Filtered).then(|| rows.iter().map(|r| r.h).filter(|h| h.is_finite()).fold(f64::INFINITY, f64::min));
    let summary = SimulateSummary {
        scenario: sc.clone(),
        method: opts.method,
        compliant: sc.sim.compliant,
        k: opts.filter.k,
        beta: opts.filter.beta,
        metrics: out.metrics,
        min_logged_h,
    };
    write_text(&opts.out, "trajectory.csv", &report::trajectory_csv(&rows, robot_names))?;
    write_text(&opts.out, "diagnostics.csv", &report::diagnostics_csv(&rows))?;
    let title = format!(
        "seed {} M={} {} ({})",
        sc.seed,
        sc.obstacles,
        opts.method.name(),
        if sc.sim.compliant { "compliant" } else { "noncompliant" }
    );
    write_text(&opts.out, "trajectory.svg", &report::trajectory_svg(&rows, scenario.robot_goal, sc.sim.arena_half, &title))?;
    write_json(&opts.out, "scenario.json", sc)?;
    write_json(&opts.out, "metrics.json", &summary)?;
    for (role, f) in [
        ("trajectory", "trajectory.csv"),
        ("diagnostics", "diagnostics.csv"),
        ("trajectory_svg", "trajectory.svg"),
        ("scenario", "scenario.json"),
        ("metrics", "metrics.json"),
    ] {
        manifest.record(role, &opts.out, f)?;
    }
    manifest.config_sha256.insert("simulate".into(), config_hash(&(sc, opts.method, opts.filter.k, opts.filter.beta)));
    manifest.save(&opts.out)?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// bench

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub profile: Profile,
    pub obstacle_counts: Vec<usize>,
    pub scenarios: usize,
    pub methods: Vec<Method>,
    pub base_seed: u64,
    pub sim: SimConfig,
    pub weights: Option<PathBuf>,
    pub filter: FilterKnobs,
    pub out: PathBuf,
}

/// Filtered success rates that rise with `M`, as `(smaller M, larger M)`.
pub fn trend_violations(report: &BenchmarkReport) -> Vec<(usize, usize)> {
    let mut cells: Vec<_> = report.cells.iter().filter(|c| c.method == Method::Filtered).collect();
    cells.sort_by_key(|c| c.obstacles);
    cells.windows(2).filter(|w| w[1].success_rate > w[0].success_rate).map(|w| (w[0].obstacles, w[1].obstacles)).collect()
}

pub fn cmd_bench(opts: &BenchOptions) -> CliResult<BenchmarkReport> {
    if opts.obstacle_counts.is_empty() || opts.methods.is_empty() || opts.scenarios == 0 {
        return Err(CliError::Usage("bench needs at least one M, one method and one scenario".into()));
    }
    opts.sim.validate()?;
    let model = model_for(opts.methods.contains(&Method::Filtered), opts.weights.as_deref(), opts.profile)?;
    let plan = BenchmarkPlan {
        profile: opts.profile,
        obstacle_counts: opts.obstacle_counts.clone(),
        scenarios: opts.scenarios,
        base_seed: opts.base_seed,
        methods: opts.methods.clone(),
    };
    let fcfg = filter_config(opts.profile, &opts.sim, &opts.filter);
    let rep = run_benchmark(&plan, model.as_ref(), &fcfg, &opts.sim)?;
    ensure_dir(&opts.out)?;
    let mut manifest = PipelineManifest::open(&opts.out, opts.profile)?;
    write_text(&opts.out, "episodes.csv", &report::episodes_csv(&rep.rows))?;
    write_text(&opts.out, "summary.csv", &report::summary_csv(&rep))?;
    #[derive(Serialize)]
    struct Summary<'a> {
        profile: Profile,
        compliant: bool,
        scenarios: usize,
        base_seed: u64,
        k: f64,
        beta: f64,
        cells: &'a [cncbf_core::sim::CellSummary],
        trend_warnings: Vec<String>,
    }
    let warnings: Vec<String> = trend_violations(&rep)
        .into_iter()
        .map(|(a, b)| format!("filtered success rate at M={b} exceeds M={a}"))
        .collect();
    write_json(
        &opts.out,
        "summary.json",
        &Summary {
            profile: opts.profile,
            compliant: opts.sim.compliant,
            scenarios: opts.scenarios,
            base_seed: opts.base_seed,
            k: opts.filter.k,
            beta: opts.filter.beta,
            cells: &rep.cells,
            trend_warnings: warnings,
        },
    )?;
    let groups: Vec<String> = opts.obstacle_counts.iter().map(|m| format!("M={m}")).collect();
    let series = |f: &dyn Fn(&cncbf_core::sim::CellSummary) -> f64| -> Vec<(String, Vec<f64>)> {
        opts.methods
            .iter()
            .map(|&method| {
                let vals = opts
                    .obstacle_counts
                    .iter()
                    .map(|&m| rep.cells.iter().find(|c| c.method == method && c.obstacles == m).map_or(f64::NAN, f))
                    .collect();
                (method.name().to_string(), vals)
            })
            .collect()
    };
    let prof = opts.profile.name();
    write_text(&opts.out, "success_rate.svg", &report::bar_chart_svg(&format!("{prof}: success rate"), "success [%]", &groups, &series(&|c| c.success_rate)))?;
    write_text(
        &opts.out,
        "path_length.svg",
        &report::bar_chart_svg(&format!("{prof}: path length (successful runs)"), "path length [m]", &groups, &series(&|c| c.path_length_mean)),
    )?;
    write_text(
        &opts.out,
        "time_to_goal.svg",
        &report::bar_chart_svg(&format!("{prof}: time to goal (successful runs)"), "time [s]", &groups, &series(&|c| c.time_to_goal_mean)),
    )?;
    for (role, f) in [
        ("episodes", "episodes.csv"),
        ("summary", "summary.csv"),
        ("summary_json", "summary.json"),
        ("success_svg", "success_rate.svg"),
        ("path_length_svg", "path_length.svg"),
        ("time_svg", "time_to_goal.svg"),
    ] {
        manifest.record(role, &opts.out, f)?;
    }
    manifest.config_sha256.insert(
        "bench".into(),
        config_hash(&(&opts.obstacle_counts, opts.scenarios, &opts.methods, opts.base_seed, &opts.sim, opts.filter.k, opts.filter.beta)),
    );
    manifest.save(&opts.out)?;
    Ok(rep)
}

/// Plain-text table of the benchmark cells.
pub fn bench_table(rep: &BenchmarkReport) -> String {
    let mut s = String::from("cell                     success  collision  timeout  path[m]        time[s]\n");
    for c in &rep.cells {
        s.push_str(&format!(
            "{:<24} {:>6.1}%  {:>8.1}%  {:>6.1}%  {:>5.2}±{:<5.2}  {:>5.2}±{:<5.2}\n",
            cell_label(c),
            c.success_rate,
            c.collision_rate,
            c.timeout_rate,
            c.path_length_mean,
            c.path_length_std,
            c.time_to_goal_mean,
            c.time_to_goal_std
        ));
    }
    s
}
