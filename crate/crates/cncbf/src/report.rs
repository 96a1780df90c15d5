//! CSV and SVG emitters.

use std::fmt::Write as _;

use cncbf_core::composite::Slice2D;
use cncbf_core::contour::Polyline;
use cncbf_core::sim::{BenchmarkReport, EpisodeRow, TrajectoryRow};
use cncbf_core::train::EpochRecord;

pub fn loss_history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_mse,validation_mse,learning_rate\n");
    for r in history {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_mse, r.validation_mse, r.learning_rate);
    }
    s
}

/// Metadata comment, column header, then one `(a, b, value)` row per sample
/// with the first axis varying fastest.
pub fn slice_csv(slice: &Slice2D, axis_names: [&str; 2], metadata: &str) -> String {
    let mut s = format!("# {metadata}\n{},{},value\n", axis_names[0], axis_names[1]);
    for (row, y) in slice.ys.iter().enumerate() {
        for (col, x) in slice.xs.iter().enumerate() {
            let _ = writeln!(s, "{x},{y},{}", slice.at(col, row));
        }
    }
    s
}

pub fn contour_csv(lines: &[Polyline]) -> String {
    let mut s = String::from("polyline,closed,point,x,y\n");
    for (i, l) in lines.iter().enumerate() {
        for (k, p) in l.points.iter().enumerate() {
            let _ = writeln!(s, "{i},{},{k},{},{}", l.closed, p[0], p[1]);
        }
    }
    s
}

pub fn trajectory_csv(rows: &[TrajectoryRow], robot_names: &[&str]) -> String {
    let peds = rows.first().map_or(0, |r| r.pedestrians.len());
    let mut s = String::from("t");
    for n in robot_names {
        let _ = write!(s, ",{n}");
    }
    s.push_str(",u_ref_0,u_ref_1,u_0,u_1,h,sdf_min,slack,sensed");
    for i in 0..peds {
        let _ = write!(s, ",ped{i}_x,ped{i}_y");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{}", r.t);
        for v in &r.robot {
            let _ = write!(s, ",{v}");
        }
        let _ = write!(s, ",{},{},{},{},{},{},{},{}", r.u_ref[0], r.u_ref[1], r.u[0], r.u[1], r.h, r.sdf_min, r.slack, r.sensed);
        for p in &r.pedestrians {
            let _ = write!(s, ",{},{}", p[0], p[1]);
        }
        s.push('\n');
    }
    s
}

/// Filter diagnostics, one row per control step.
pub fn diagnostics_csv(rows: &[TrajectoryRow]) -> String {
    let mut s = String::from("t,h,sdf_min,slack,u_0,u_1,u_ref_0,u_ref_1,obstacles\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{},{},{},{}", r.t, r.h, r.sdf_min, r.slack, r.u[0], r.u[1], r.u_ref[0], r.u_ref[1], r.sensed);
    }
    s
}

pub fn episodes_csv(rows: &[EpisodeRow]) -> String {
    let mut s = String::from(
        "method,obstacles,seed,termination,path_length,time,min_clearance,min_h,intervention_fraction,slack_steps,max_slack,steps,max_ped_input\n",
    );
    for r in rows {
        let m = &r.metrics;
        let term = if m.success {
            "success"
        } else if m.collision {
            "collision"
        } else {
            "timeout"
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.method.name(),
            r.obstacles,
            r.seed,
            term,
            m.path_length,
            m.time,
            m.min_clearance,
            m.min_h,
            m.intervention_fraction,
            m.slack_steps,
            m.max_slack,
            m.steps,
            m.max_ped_input
        );
    }
    s
}

pub fn summary_csv(report: &BenchmarkReport) -> String {
    let mut s = String::from(
        "method,obstacles,episodes,success_rate,collision_rate,timeout_rate,path_length_mean,path_length_std,time_to_goal_mean,time_to_goal_std,min_clearance\n",
    );
    for c in &report.cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            c.method.name(),
            c.obstacles,
            c.episodes,
            c.success_rate,
            c.collision_rate,
            c.timeout_rate,
            c.path_length_mean,
            c.path_length_std,
            c.time_to_goal_mean,
            c.time_to_goal_std,
            c.min_clearance
        );
    }
    s
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const PAD: f64 = 56.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue below zero, red above, white at zero.
fn diverging(v: f64, scale: f64) -> String {
    let t = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let (r, g, b) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r.round() as u8, g.round() as u8, b.round() as u8)
}

struct Frame {
    lower: [f64; 2],
    upper: [f64; 2],
}

impl Frame {
    fn map(&self, p: [f64; 2]) -> (f64, f64) {
        let sx = (W - 2.0 * PAD) / (self.upper[0] - self.lower[0]).max(f64::MIN_POSITIVE);
        let sy = (H - 2.0 * PAD) / (self.upper[1] - self.lower[1]).max(f64::MIN_POSITIVE);
        (PAD + (p[0] - self.lower[0]) * sx, H - PAD - (p[1] - self.lower[1]) * sy)
    }

    fn axes(&self, s: &mut String, names: [&str; 2]) {
        let (x0, y0) = self.map(self.lower);
        let (x1, y1) = self.map(self.upper);
        let _ = writeln!(s, "<rect x=\"{x0:.2}\" y=\"{y1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>", x1 - x0, y0 - y1);
        let _ = writeln!(s, "<text x=\"{x0:.2}\" y=\"{:.2}\">{}</text>", y0 + 16.0, self.lower[0]);
        let _ = writeln!(s, "<text x=\"{x1:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", y0 + 16.0, self.upper[0]);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{y0:.2}\" text-anchor=\"end\">{}</text>", x0 - 4.0, self.lower[1]);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", x0 - 4.0, y1 + 10.0, self.upper[1]);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", (x0 + x1) / 2.0, y0 + 32.0, escape(names[0]));
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 {:.2} {:.2})\">{}</text>",
            x0 - 36.0,
            (y0 + y1) / 2.0,
            x0 - 36.0,
            (y0 + y1) / 2.0,
            escape(names[1])
        );
    }
}

fn polyline(s: &mut String, f: &Frame, pts: &[[f64; 2]], closed: bool, style: &str) {
    if pts.is_empty() {
        return;
    }
    let tag = if closed { "polygon" } else { "polyline" };
    let _ = write!(s, "<{tag} fill=\"none\" {style} points=\"");
    for p in pts {
        let (x, y) = f.map(*p);
        let _ = write!(s, "{x:.2},{y:.2} ");
    }
    s.push_str("\"/>\n");
}

/// Heat map of a slice with its zero contour and an optional circle of
/// radius `disk` around the origin.
pub fn slice_svg(slice: &Slice2D, contour: &[Polyline], axis_names: [&str; 2], title: &str, disk: Option<f64>) -> String {
    let mut s = svg_open(title);
    let nx = slice.xs.len();
    let ny = slice.ys.len();
    let lower = [slice.xs[0], slice.ys[0]];
    let upper = [slice.xs[nx - 1], slice.ys[ny - 1]];
    let f = Frame { lower, upper: [upper[0].max(lower[0] + 1e-9), upper[1].max(lower[1] + 1e-9)] };
    let scale = slice.values.iter().filter(|v| v.is_finite()).fold(0.0f64, |a, v| a.max(v.abs()));
    let hx = if nx > 1 { (upper[0] - lower[0]) / (nx - 1) as f64 } else { 1.0 };
    let hy = if ny > 1 { (upper[1] - lower[1]) / (ny - 1) as f64 } else { 1.0 };
    for (row, y) in slice.ys.iter().enumerate() {
        for (col, x) in slice.xs.iter().enumerate() {
            let (x0, y0) = f.map([x - hx / 2.0, y + hy / 2.0]);
            let (x1, y1) = f.map([x + hx / 2.0, y - hy / 2.0]);
            let _ = writeln!(
                s,
                "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                x1 - x0,
                y1 - y0,
                diverging(slice.at(col, row), scale)
            );
        }
    }
    if let Some(r) = disk {
        let pts: Vec<[f64; 2]> = (0..96).map(|k| {
            let a = k as f64 * std::f64::consts::TAU / 96.0;
            [r * a.cos(), r * a.sin()]
        }).collect();
        polyline(&mut s, &f, &pts, true, "stroke=\"gray\" stroke-dasharray=\"4 3\"");
    }
    for l in contour {
        polyline(&mut s, &f, &l.points, l.closed, "stroke=\"black\" stroke-width=\"1.5\"");
    }
    f.axes(&mut s, axis_names);
    s.push_str("</svg>\n");
    s
}

/// Grouped bar chart: one group per label, one bar per series.
pub fn bar_chart_svg(title: &str, y_label: &str, groups: &[String], series: &[(String, Vec<f64>)]) -> String {
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut s = svg_open(title);
    let max = series.iter().flat_map(|(_, v)| v.iter()).filter(|v| v.is_finite()).fold(0.0f64, |a, &v| a.max(v));
    let top = if max > 0.0 { max * 1.1 } else { 1.0 };
    let f = Frame { lower: [0.0, 0.0], upper: [groups.len().max(1) as f64, top] };
    let bar_w = 0.8 / series.len().max(1) as f64;
    for (g, label) in groups.iter().enumerate() {
        for (k, (_, values)) in series.iter().enumerate() {
            let v = values.get(g).copied().unwrap_or(f64::NAN);
            if !v.is_finite() {
                continue;
            }
            let x = g as f64 + 0.1 + k as f64 * bar_w;
            let (x0, y0) = f.map([x, v]);
            let (x1, y1) = f.map([x + bar_w, 0.0]);
            let _ = writeln!(
                s,
                "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                x1 - x0,
                y1 - y0,
                COLORS[k % COLORS.len()]
            );
        }
        let (cx, cy) = f.map([g as f64 + 0.5, 0.0]);
        let _ = writeln!(s, "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", cy + 16.0, escape(label));
    }
    for (k, (name, _)) in series.iter().enumerate() {
        let y = 40.0 + 16.0 * k as f64;
        let _ = writeln!(s, "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{}\"/>", W - 170.0, y - 9.0, COLORS[k % COLORS.len()]);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{y:.2}\">{}</text>", W - 155.0, escape(name));
    }
    let (x0, y0) = f.map([0.0, 0.0]);
    let (x1, y1) = f.map([f.upper[0], top]);
    let _ = writeln!(s, "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x1:.2}\" y2=\"{y0:.2}\" stroke=\"black\"/>");
    let _ = writeln!(s, "<line x1=\"{x0:.2}\" y1=\"{y0:.2}\" x2=\"{x0:.2}\" y2=\"{y1:.2}\" stroke=\"black\"/>");
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{:.3}</text>", x0 - 4.0, y1 + 4.0, top);
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 {:.2} {:.2})\">{}</text>",
        x0 - 36.0,
        (y0 + y1) / 2.0,
        x0 - 36.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    s.push_str("</svg>\n");
    s
}

/// Top view of an episode: robot path, pedestrian paths, start and goal.
pub fn trajectory_svg(rows: &[TrajectoryRow], goal: [f64; 2], half: f64, title: &str) -> String {
    let mut s = svg_open(title);
    let f = Frame { lower: [-half, -half], upper: [half, half] };
    let stride = (rows.len() / 2000).max(1);
    let peds = rows.first().map_or(0, |r| r.pedestrians.len());
    for i in 0..peds {
        let pts: Vec<[f64; 2]> = rows.iter().step_by(stride).map(|r| r.pedestrians[i]).collect();
        polyline(&mut s, &f, &pts, false, "stroke=\"#d62728\" stroke-opacity=\"0.6\"");
    }
    let pts: Vec<[f64; 2]> = rows.iter().step_by(stride).map(|r| [r.robot[0], r.robot[1]]).collect();
    polyline(&mut s, &f, &pts, false, "stroke=\"#1f77b4\" stroke-width=\"2\"");
    if let Some(r) = rows.first() {
        let (x, y) = f.map([r.robot[0], r.robot[1]]);
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"4\" fill=\"#1f77b4\"/>");
    }
    let (x, y) = f.map(goal);
    let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"5\" fill=\"none\" stroke=\"green\" stroke-width=\"2\"/>");
    f.axes(&mut s, ["x [m]", "y [m]"]);
    s.push_str("</svg>\n");
    s
}
