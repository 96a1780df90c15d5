//! End-to-end acceptance run: one PASS/FAIL line per criterion. Exits
//! nonzero when any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cncbf::commands::{default_grid, filter_config, FilterKnobs};
use cncbf::manifest::sha256_file;
use cncbf::oracle;
use cncbf_core::composite::{slice_export, SliceSpec};
use cncbf_core::contour::zero_contour;
use cncbf_core::dynamics::{failure, GroundGame, Profile, RelativeGame};
use cncbf_core::filter::{filter_step, ObstacleTracker, Observation};
use cncbf_core::hj::{solve_with, SolverConfig, ValueField};
use cncbf_core::net::{MlpParams, ResidualModel, ARCHITECTURE};
use cncbf_core::sim::{run_benchmark, BenchmarkPlan, BenchmarkReport, CellSummary, Method, SimConfig};
use cncbf_core::train::{build_dataset, evaluate, train_with, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    warn_only: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, warn_only: false, detail }
}

struct Ledger {
    results: Vec<(usize, &'static str, Outcome)>,
}

impl Ledger {
    fn record(&mut self, id: usize, name: &'static str, o: Outcome) {
        let tag = match (o.passed, o.warn_only) {
            (true, _) => "PASS",
            (false, true) => "WARN",
            (false, false) => "FAIL",
        };
        println!("{tag} [{id:>2}] {name}: {}", o.detail);
        self.results.push((id, name, o));
    }

    fn failures(&self) -> usize {
        self.results.iter().filter(|(_, _, o)| !o.passed && !o.warn_only).count()
    }
}

fn mins(d: Duration) -> f64 {
    d.as_secs_f64() / 60.0
}

fn criterion_1(l: &mut Ledger) {
    let n = MlpParams::init(&ARCHITECTURE, 0).param_count();
    l.record(1, "architecture parameter count", outcome(n == 4837, format!("{n} parameters (expected 4837)")));
}

fn criterion_2(l: &mut Ledger, field: &ValueField) {
    let spec = default_grid(Profile::Ground);
    let counts = spec.counts();
    let n = field.values.len();
    l.record(
        2,
        "default ground grid size",
        outcome(n == 1_280_000 && counts == [80, 80, 20, 10], format!("{counts:?} -> {n} values (expected 1280000)")),
    );
}

fn criterion_3(l: &mut Ledger) {
    let t = Instant::now();
    let mut passed = true;
    let mut parts = Vec::new();
    for p in [Profile::Ground, Profile::Quad] {
        let nodes = oracle::coarse_grid(p).len();
        match oracle::dp_check(p) {
            Ok(c) => {
                passed &= c.passed && nodes <= 100_000;
                parts.push(format!("{} {} nodes max|V-V_dp| {:.3} <= {:.3}", p.name(), nodes, c.worst, c.threshold));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("{}: {e}", p.name()));
            }
        }
    }
    let el = t.elapsed();
    passed &= el <= Duration::from_secs(300);
    parts.push(format!("{:.1} s (limit 300 s)", el.as_secs_f64()));
    l.record(3, "HJ solve vs DP oracle on coarse grids", outcome(passed, parts.join("; ")));
}

fn criterion_4(l: &mut Ledger) -> ValueField {
    let game = GroundGame::default();
    let spec = default_grid(Profile::Ground);
    let t = Instant::now();
    let (field, rep) = solve_with(&game, &spec, &SolverConfig::default(), |_, _| {}).expect("ground solve");
    let el = t.elapsed();
    let above = field
        .values
        .iter()
        .enumerate()
        .filter(|(i, v)| **v > game.failure(&spec.coords_flat(*i)))
        .count();
    let passed = rep.converged && above == 0 && rep.max_increase <= 0.0 && el <= Duration::from_secs(1800);
    l.record(
        4,
        "HJ invariants and full ground solve",
        outcome(
            passed,
            format!(
                "converged {} after {} steps; nodes with V > l: {above}; largest step increase {:.3e}; {:.1} min (limit 30)",
                rep.converged,
                rep.steps,
                rep.max_increase,
                mins(el)
            ),
        ),
    );
    field
}

fn criterion_7(l: &mut Ledger, field: &ValueField) -> ResidualModel {
    let geometry = GroundGame::default().geometry;
    let cfg = TrainConfig { epochs: 500, ..Default::default() };
    let t = Instant::now();
    let ds = build_dataset(field, &geometry).subsample(0.1, cfg.seed);
    let out = train_with(&ds, &cfg, |_| {}).expect("training");
    let el = t.elapsed();
    let val = evaluate(&out.params, &ds, &out.validation_indices);
    let model = out.model(Profile::Ground, &ds, geometry);

    // zero contour of the slice θ_rel = π, v_o = 1.2 over the relative position
    let grid = default_grid(Profile::Ground);
    let spec = SliceSpec {
        free: [0, 1],
        lower: [grid.axes[0].lower, grid.axes[1].lower],
        upper: [grid.axes[0].upper, grid.axes[1].upper],
        resolution: [201, 201],
        fixed: [0.0, 0.0, std::f64::consts::PI, 1.2],
    };
    let slice = slice_export(&model, &spec);
    let f = |x: f64, y: f64| model.hbar(&[x, y, std::f64::consts::PI, 1.2]);
    let contour = zero_contour(&slice, Some(&f));
    let points: usize = contour.iter().map(|c| c.points.len()).sum();
    let min_r = contour.iter().flat_map(|c| c.points.iter()).map(|p| p[0].hypot(p[1])).fold(f64::INFINITY, f64::min);
    let r_min = geometry.r_min();
    let passed = val.mean_abs <= 0.05 && val.p95_abs <= 0.20 && el <= Duration::from_secs(600) && points > 0 && min_r >= r_min;
    l.record(
        7,
        "desk-scale training and slice contour",
        outcome(
            passed,
            format!(
                "validation mean |h-V| {:.4} (<= 0.05), p95 {:.4} (<= 0.20), {:.1} min (limit 10); contour {points} points, min radius {:.3} vs R_min {:.3}",
                val.mean_abs,
                val.p95_abs,
                mins(el),
                min_r,
                r_min
            ),
        ),
    );
    model
}

fn criterion_5(l: &mut Ledger, model: &ResidualModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let r_min = model.geometry.r_min();
    let mut bad_r = 0usize;
    let mut bad_h = 0usize;
    let draws = 1_000_000;
    for _ in 0..draws {
        let z = [
            rng.random_range(-8.0..8.0),
            rng.random_range(-8.0..8.0),
            rng.random_range(-7.0..7.0),
            rng.random_range(0.0..2.0),
        ];
        let r = model.residual(&z);
        if !(r > 0.0) {
            bad_r += 1;
        }
        if !(model.hbar(&z) < failure(&z, r_min)) {
            bad_h += 1;
        }
    }
    l.record(
        5,
        "residual positivity and h < l",
        outcome(bad_r == 0 && bad_h == 0, format!("{draws} draws: r <= 0 at {bad_r}, h >= l at {bad_h}")),
    );
}

fn criterion_6(l: &mut Ledger, model: &ResidualModel) {
    let net = oracle::net_gradient_check(None, 1000, 6);
    let net_trained = oracle::net_gradient_check(Some(&model.params), 1000, 6);
    let comp_g = oracle::composite_gradient_check(None, Profile::Ground, 1000, 6, 4.0).expect("composite");
    let comp_q = oracle::composite_gradient_check(None, Profile::Quad, 1000, 6, 4.0).expect("composite");
    let comp_t = oracle::composite_gradient_check(Some(model), Profile::Ground, 1000, 6, 4.0).expect("composite");
    let net_worst = net.worst.max(net_trained.worst);
    let comp_worst = comp_g.worst.max(comp_q.worst).max(comp_t.worst);
    l.record(
        6,
        "gradient fidelity",
        outcome(
            net_worst <= 1e-5 && comp_worst <= 1e-4,
            format!("forward_with_grad worst rel err {net_worst:.2e} (<= 1e-5); composite grad_x worst rel err {comp_worst:.2e} (<= 1e-4); 1000 draws each"),
        ),
    );
}

fn criterion_8(l: &mut Ledger) {
    let c = oracle::aggregate_check(10_000, 8).expect("aggregate");
    l.record(8, "aggregation sandwich", outcome(c.passed, format!("worst violation {:.2e} over {} tuples (<= 1e-12)", c.worst, c.cases)));
}

fn criterion_9(l: &mut Ledger) {
    let checks = oracle::qp_checks(1000, 9);
    let passed = checks.iter().all(|c| c.passed);
    let detail = checks.iter().map(|c| format!("{} {:.2e} (<= {:.0e}) {}", c.name, c.worst, c.threshold, c.note)).collect::<Vec<_>>().join("; ");
    l.record(9, "QP optimality vs grid search", outcome(passed, detail));
}

fn cell(rep: &BenchmarkReport, method: Method, m: usize) -> &CellSummary {
    rep.cells.iter().find(|c| c.method == method && c.obstacles == m).expect("cell present")
}

fn bench(model: &ResidualModel, counts: Vec<usize>, methods: Vec<Method>) -> (BenchmarkReport, Duration) {
    let sim = SimConfig::default();
    let fcfg = filter_config(Profile::Ground, &sim, &FilterKnobs::default());
    let plan = BenchmarkPlan { profile: Profile::Ground, obstacle_counts: counts, scenarios: 100, base_seed: 0, methods };
    let t = Instant::now();
    let rep = run_benchmark(&plan, Some(model), &fcfg, &sim).expect("benchmark");
    (rep, t.elapsed())
}

fn criterion_10(l: &mut Ledger, model: &ResidualModel) -> f64 {
    let (rep, el) = bench(model, vec![5], vec![Method::Filtered, Method::NominalOnly]);
    let f = cell(&rep, Method::Filtered, 5);
    let n = cell(&rep, Method::NominalOnly, 5);
    let min_l = rep
        .rows
        .iter()
        .filter(|r| r.method == Method::Filtered)
        .map(|r| r.metrics.min_clearance)
        .fold(f64::INFINITY, f64::min);
    let passed = f.success_rate >= 95.0 && n.success_rate <= f.success_rate - 20.0 && min_l >= -0.05 && el <= Duration::from_secs(1200);
    l.record(
        10,
        "end-to-end safety, M=5 compliant",
        outcome(
            passed,
            format!(
                "filtered {:.0}% (>= 95), nominal {:.0}% (gap {:.0} >= 20 points), filtered min l {:.3} (>= -0.05), {:.1} min (limit 20)",
                f.success_rate,
                n.success_rate,
                f.success_rate - n.success_rate,
                min_l,
                mins(el)
            ),
        ),
    );
    f.success_rate
}

fn criterion_11(l: &mut Ledger, model: &ResidualModel, success_5: f64) {
    let (rep, _) = bench(model, vec![15], vec![Method::Filtered]);
    let s15 = cell(&rep, Method::Filtered, 15).success_rate;
    l.record(
        11,
        "scaling trend M=15 vs M=5",
        Outcome { passed: s15 <= success_5, warn_only: true, detail: format!("filtered success M=15 {s15:.0}% vs M=5 {success_5:.0}%") },
    );
}

fn criterion_12(l: &mut Ledger, model: &ResidualModel) {
    let sim = SimConfig::default();
    let cfg = filter_config(Profile::Ground, &sim, &FilterKnobs::default());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = 15;
    let ids: Vec<u64> = (0..m as u64).collect();
    let radii = vec![sim.geometry.obstacle_radius; m];
    let mut states: Vec<[f64; 4]> = (0..m)
        .map(|_| {
            [
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-3.1..3.1),
                rng.random_range(0.5..1.5),
            ]
        })
        .collect();
    let mut tracker = ObstacleTracker::new(Profile::Ground.periodic_dim());
    let dt = 1.0 / sim.rate_hz;
    let mut times = Vec::with_capacity(1000);
    let mut x = [0.0, 0.0, 0.0];
    for step in 0..1000 {
        for s in &mut states {
            s[0] += dt * s[3] * s[2].cos();
            s[1] += dt * s[3] * s[2].sin();
        }
        x[0] += dt * 0.5;
        let obs = Observation { ids: &ids, states: &states, radii: &radii };
        let t = Instant::now();
        let out = filter_step(&x, &[1.0, 0.0], obs, &mut tracker, model, &cfg, step as f64 * dt).expect("filter step");
        times.push(t.elapsed());
        std::hint::black_box(out);
    }
    times.sort();
    let median = times[times.len() / 2];
    l.record(
        12,
        "filter latency at M=15",
        outcome(median <= Duration::from_millis(4), format!("median {:.3} ms over 1000 steps (<= 4 ms)", median.as_secs_f64() * 1e3)),
    );
}

fn run_cli(args: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_cncbf")).args(args).output().expect("binary runs");
    status.status.code().unwrap_or(-1)
}

fn hashes(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("read dir") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("prefix").display().to_string();
                out.insert(rel, sha256_file(&p).expect("hash"));
            }
        }
    }
    out
}

fn pipeline(root: &Path) -> Vec<(String, i32)> {
    let s = |p: PathBuf| p.display().to_string();
    let solve = s(root.join("solve"));
    let train = s(root.join("train"));
    let field = s(root.join("solve").join("value.cnvf"));
    let weights = s(root.join("train").join("weights.json"));
    let steps: Vec<(&str, Vec<String>)> = vec![
        ("solve", vec!["solve", "--grid", "21,21,12,6", "--out", &solve].into_iter().map(String::from).collect()),
        (
            "train",
            vec!["train", "--field", &field, "--epochs", "3", "--subsample", "0.5", "--batch", "512", "--out", &train]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        ("slice", vec!["slice", "--weights", &weights, "--resolution", "41,41", "--out", &s(root.join("slice"))].into_iter().map(String::from).collect()),
        (
            "simulate",
            vec!["simulate", "--seed", "3", "--m", "3", "--weights", &weights, "--out", &s(root.join("simulate"))]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "bench",
            vec!["bench", "--m-list", "2,4", "--n", "2", "--weights", &weights, "--out", &s(root.join("bench"))]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
        (
            "oracle",
            vec!["oracle", "--suite", "grad,qp,aggregate", "--n", "20", "--weights", &weights, "--out", &s(root.join("oracle"))]
                .into_iter()
                .map(String::from)
                .collect(),
        ),
    ];
    steps
        .into_iter()
        .map(|(name, args)| {
            let refs: Vec<&str> = args.iter().map(String::as_str).collect();
            (name.to_string(), run_cli(&refs))
        })
        .collect()
}

fn criterion_13(l: &mut Ledger) {
    let base = std::env::temp_dir().join(format!("cncbf-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&base);
    let a = pipeline(&base.join("a"));
    let b = pipeline(&base.join("b"));
    let codes_ok = a.iter().chain(&b).all(|(_, c)| *c == 0);
    let ha = hashes(&base.join("a"));
    let hb = hashes(&base.join("b"));
    let differing: Vec<&String> = ha.keys().filter(|k| ha.get(*k) != hb.get(*k)).collect();
    let passed = codes_ok && !ha.is_empty() && ha.len() == hb.len() && differing.is_empty();
    let detail = format!(
        "{} commands, {} artifacts compared, {} differ{}",
        a.len(),
        ha.len(),
        differing.len(),
        if codes_ok { String::new() } else { format!("; exit codes {a:?} / {b:?}") }
    );
    let _ = std::fs::remove_dir_all(&base);
    l.record(13, "determinism of every command", outcome(passed, detail));
}

fn main() {
    let mut l = Ledger { results: Vec::new() };
    let t = Instant::now();
    criterion_1(&mut l);
    criterion_8(&mut l);
    criterion_9(&mut l);
    criterion_3(&mut l);
    let field = criterion_4(&mut l);
    criterion_2(&mut l, &field);
    let model = criterion_7(&mut l, &field);
    drop(field);
    criterion_5(&mut l, &model);
    criterion_6(&mut l, &model);
    criterion_12(&mut l, &model);
    let s5 = criterion_10(&mut l, &model);
    criterion_11(&mut l, &model, s5);
    criterion_13(&mut l);
    let failures = l.failures();
    println!("acceptance: {} criteria, {failures} failed, {:.1} min", l.results.len(), mins(t.elapsed()));
    if failures > 0 {
        std::process::exit(1);
    }
}
