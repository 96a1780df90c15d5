//! Zero-level contours of 2D slices by marching squares.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::composite::Slice2D;

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

/// Lattice edge: horizontal `(i, j)–(i+1, j)` or vertical `(i, j)–(i, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// Zero crossings of `slice`, joined into polylines.
///
/// Samples with value `>= 0` count as inside. Crossing points are placed by
/// linear interpolation, or, when `refine` evaluates the underlying function,
/// by bisection along the edge; the refined point is the end of the final
/// bracket where `refine >= 0`, so it lies in the closed superlevel set.
pub fn zero_contour(slice: &Slice2D, refine: Option<&dyn Fn(f64, f64) -> f64>) -> Vec<Polyline> {
    let nx = slice.xs.len();
    let ny = slice.ys.len();
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let inside = |i: usize, j: usize| slice.at(i, j) >= 0.0;
    let mut segments: Vec<[Edge; 2]> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let c = [inside(i, j), inside(i + 1, j), inside(i + 1, j + 1), inside(i, j + 1)];
            let case = c.iter().enumerate().fold(0u8, |acc, (k, &b)| acc | ((b as u8) << k));
            // edges: bottom, right, top, left
            let e = [Edge::H(i, j), Edge::V(i + 1, j), Edge::H(i, j + 1), Edge::V(i, j)];
            let pairs: &[(usize, usize)] = match case {
                0 | 15 => &[],
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(3, 2)],
                5 | 10 => {
                    let centre = 0.25 * (slice.at(i, j) + slice.at(i + 1, j) + slice.at(i + 1, j + 1) + slice.at(i, j + 1));
                    // corners 0 and 2 share a sign; the centre decides whether they connect
                    let diag_inside = c[0];
                    if (centre >= 0.0) == diag_inside {
                        &[(3, 2), (0, 1)]
                    } else {
                        &[(3, 0), (1, 2)]
                    }
                }
                _ => unreachable!(),
            };
            for &(a, b) in pairs {
                segments.push([e[a], e[b]]);
            }
        }
    }
    let mut points: BTreeMap<Edge, [f64; 2]> = BTreeMap::new();
    for s in &segments {
        for &e in s {
            points.entry(e).or_insert_with(|| crossing(slice, e, refine));
        }
    }
    join(&segments, &points)
}

fn crossing(slice: &Slice2D, e: Edge, refine: Option<&dyn Fn(f64, f64) -> f64>) -> [f64; 2] {
    let (p0, p1, v0, v1) = match e {
        Edge::H(i, j) => ([slice.xs[i], slice.ys[j]], [slice.xs[i + 1], slice.ys[j]], slice.at(i, j), slice.at(i + 1, j)),
        Edge::V(i, j) => ([slice.xs[i], slice.ys[j]], [slice.xs[i], slice.ys[j + 1]], slice.at(i, j), slice.at(i, j + 1)),
    };
    let lerp = |t: f64| [p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])];
    match refine {
        None => lerp((v0 / (v0 - v1)).clamp(0.0, 1.0)),
        Some(f) => {
            // bracket [lo, hi] in edge parameter with f(lo) >= 0 > f(hi)
            let (mut good, mut bad) = if v0 >= 0.0 { (0.0, 1.0) } else { (1.0, 0.0) };
            for _ in 0..60 {
                let mid = 0.5 * (good + bad);
                let p = lerp(mid);
                if f(p[0], p[1]) >= 0.0 {
                    good = mid;
                } else {
                    bad = mid;
                }
            }
            lerp(good)
        }
    }
}

fn join(segments: &[[Edge; 2]], points: &BTreeMap<Edge, [f64; 2]>) -> Vec<Polyline> {
    let mut by_edge: BTreeMap<Edge, Vec<usize>> = BTreeMap::new();
    for (k, s) in segments.iter().enumerate() {
        for e in s {
            by_edge.entry(*e).or_default().push(k);
        }
    }
    let mut used = alloc::vec![false; segments.len()];
    let mut out = Vec::new();
    let next_of = |edge: Edge, from: usize, used: &[bool]| -> Option<usize> {
        by_edge[&edge].iter().copied().find(|&k| k != from && !used[k])
    };
    // Open chains start at edges with a single segment (lattice border).
    let mut starts: Vec<usize> = by_edge.values().filter(|v| v.len() == 1).map(|v| v[0]).collect();
    starts.extend(0..segments.len());
    for start in starts {
        if used[start] {
            continue;
        }
        used[start] = true;
        let s = segments[start];
        // orient so that the free end comes first for open chains
        let (first, mut tail) = if by_edge[&s[1]].len() == 1 { (s[1], s[0]) } else { (s[0], s[1]) };
        let mut chain = alloc::vec![first, tail];
        let mut cur = start;
        while let Some(k) = next_of(tail, cur, &used) {
            used[k] = true;
            let seg = segments[k];
            tail = if seg[0] == tail { seg[1] } else { seg[0] };
            chain.push(tail);
            cur = k;
        }
        let closed = chain.len() > 2 && chain.first() == chain.last();
        if closed {
            chain.pop();
        }
        out.push(Polyline { points: chain.iter().map(|e| points[e]).collect(), closed });
    }
    out
}
