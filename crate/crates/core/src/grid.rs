//! Rectilinear 4D grids and multilinear interpolation over them.

use alloc::format;
use alloc::vec::Vec;

use crate::math::{floor, TAU};
use crate::{Error, Result};

pub const DIMS: usize = 4;

/// One grid axis. Periodic axes cover `[lower, upper)` with `count` nodes;
/// bounded axes include both end points.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Axis {
    pub count: usize,
    pub lower: f64,
    pub upper: f64,
    pub periodic: bool,
}

impl Axis {
    pub const fn new(count: usize, lower: f64, upper: f64, periodic: bool) -> Self {
        Self { count, lower, upper, periodic }
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.upper - self.lower) / self.count as f64
        } else {
            (self.upper - self.lower) / (self.count - 1) as f64
        }
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.lower + i as f64 * self.spacing()
    }

    /// Lower node, upper node and weight of the upper node for coordinate
    /// `x`. The flag reports clamping on bounded axes.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, usize, f64, bool) {
        let h = self.spacing();
        if self.periodic {
            let period = self.upper - self.lower;
            let mut u = (x - self.lower) / h;
            let n = self.count as f64;
            if !(0.0..n).contains(&u) {
                let shifted = (x - self.lower) - period * floor((x - self.lower) / period);
                u = shifted / h;
            }
            let fl = floor(u);
            let mut i0 = fl as usize;
            let mut t = u - fl;
            if i0 >= self.count {
                // rounding put us exactly on the seam
                i0 = 0;
                t = 0.0;
            }
            (i0, (i0 + 1) % self.count, t, false)
        } else {
            let clamped = x < self.lower || x > self.upper;
            let xc = x.clamp(self.lower, self.upper);
            let u = (xc - self.lower) / h;
            let i0 = (floor(u) as usize).min(self.count - 2);
            let t = (u - i0 as f64).clamp(0.0, 1.0);
            (i0, i0 + 1, t, clamped)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub axes: [Axis; DIMS],
}

impl GridSpec {
    pub fn new(axes: [Axis; DIMS]) -> Result<Self> {
        let spec = Self { axes };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (d, a) in self.axes.iter().enumerate() {
            if a.count < 2 {
                return Err(Error::InvalidGrid(format!("axis {d} needs at least 2 nodes")));
            }
            if !(a.upper > a.lower) || !a.lower.is_finite() || !a.upper.is_finite() {
                return Err(Error::InvalidGrid(format!("axis {d} needs finite upper > lower")));
            }
            if a.periodic && ((a.upper - a.lower) - TAU).abs() > 1e-9 {
                return Err(Error::InvalidGrid(format!(
                    "axis {d} is periodic but does not span one full turn"
                )));
            }
        }
        Ok(())
    }

    /// Relative grid of the ground robot: robot-frame position, relative
    /// heading (periodic) and pedestrian speed.
    pub fn ground_default(v_o_max: f64) -> Self {
        use core::f64::consts::PI;
        Self {
            axes: [
                Axis::new(80, -5.0, 5.0, false),
                Axis::new(80, -5.0, 5.0, false),
                Axis::new(20, -PI, PI, true),
                Axis::new(10, 0.0, v_o_max, false),
            ],
        }
    }

    /// Relative grid of the quadrotor: world-frame position and velocity.
    pub fn quad_default(v_rel_max: f64) -> Self {
        Self {
            axes: [
                Axis::new(80, -5.0, 5.0, false),
                Axis::new(80, -5.0, 5.0, false),
                Axis::new(20, -v_rel_max, v_rel_max, false),
                Axis::new(20, -v_rel_max, v_rel_max, false),
            ],
        }
    }

    /// Same extents with new node counts.
    pub fn with_counts(&self, counts: [usize; DIMS]) -> Self {
        let mut axes = self.axes;
        for (a, c) in axes.iter_mut().zip(counts) {
            a.count = c;
        }
        Self { axes }
    }

    pub fn counts(&self) -> [usize; DIMS] {
        core::array::from_fn(|d| self.axes[d].count)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Row-major strides, last dimension fastest.
    pub fn strides(&self) -> [usize; DIMS] {
        let mut s = [1; DIMS];
        for d in (0..DIMS - 1).rev() {
            s[d] = s[d + 1] * self.axes[d + 1].count;
        }
        s
    }

    pub fn spacings(&self) -> [f64; DIMS] {
        core::array::from_fn(|d| self.axes[d].spacing())
    }

    /// Euclidean length of one cell's diagonal.
    pub fn cell_diagonal(&self) -> f64 {
        crate::math::sqrt(self.spacings().iter().map(|h| h * h).sum())
    }

    pub fn unravel(&self, mut flat: usize) -> [usize; DIMS] {
        let mut idx = [0; DIMS];
        for d in (0..DIMS).rev() {
            let n = self.axes[d].count;
            idx[d] = flat % n;
            flat /= n;
        }
        idx
    }

    pub fn ravel(&self, idx: &[usize; DIMS]) -> usize {
        let s = self.strides();
        (0..DIMS).map(|d| idx[d] * s[d]).sum()
    }

    pub fn coords(&self, idx: &[usize; DIMS]) -> [f64; DIMS] {
        core::array::from_fn(|d| self.axes[d].node(idx[d]))
    }

    pub fn coords_flat(&self, flat: usize) -> [f64; DIMS] {
        self.coords(&self.unravel(flat))
    }

    /// All node coordinates in storage order.
    pub fn all_coords(&self) -> Vec<[f64; DIMS]> {
        (0..self.len()).map(|i| self.coords_flat(i)).collect()
    }
}

/// Result of a multilinear lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolated {
    pub value: f64,
    /// Some bounded coordinate was outside the grid and got clamped.
    pub clamped: bool,
}

/// Multilinear interpolation of `values` laid out on `spec` at `z`.
pub fn interpolate(spec: &GridSpec, values: &[f64], z: &[f64; DIMS]) -> Result<Interpolated> {
    if z.iter().any(|v| v.is_nan()) {
        return Err(Error::NanQuery);
    }
    Ok(interpolate_unchecked(spec, &spec.strides(), values, z))
}

#[inline]
pub(crate) fn interpolate_unchecked(
    spec: &GridSpec,
    strides: &[usize; DIMS],
    values: &[f64],
    z: &[f64; DIMS],
) -> Interpolated {
    let mut lo = [0usize; DIMS];
    let mut hi = [0usize; DIMS];
    let mut t = [0.0; DIMS];
    let mut clamped = false;
    for d in 0..DIMS {
        let (a, b, w, c) = spec.axes[d].locate(z[d]);
        lo[d] = a * strides[d];
        hi[d] = b * strides[d];
        t[d] = w;
        clamped |= c;
    }
    let mut acc = 0.0;
    for corner in 0..(1 << DIMS) {
        let mut w = 1.0;
        let mut off = 0;
        for d in 0..DIMS {
            if corner & (1 << d) != 0 {
                w *= t[d];
                off += hi[d];
            } else {
                w *= 1.0 - t[d];
                off += lo[d];
            }
        }
        if w != 0.0 {
            acc += w * values[off];
        }
    }
    Interpolated { value: acc, clamped }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn small() -> GridSpec {
        GridSpec::new([
            Axis::new(5, -1.0, 1.0, false),
            Axis::new(4, 0.0, 3.0, false),
            Axis::new(8, -PI, PI, true),
            Axis::new(3, 0.0, 1.0, false),
        ])
        .unwrap()
    }

    #[test]
    fn validation() {
        let mut g = small();
        g.axes[0].count = 1;
        assert!(g.validate().is_err());
        let mut g = small();
        g.axes[1].periodic = true;
        assert!(g.validate().is_err());
        let mut g = small();
        g.axes[3].upper = g.axes[3].lower;
        assert!(g.validate().is_err());
    }

    #[test]
    fn ravel_unravel() {
        let g = small();
        assert_eq!(g.len(), 5 * 4 * 8 * 3);
        for i in 0..g.len() {
            assert_eq!(g.ravel(&g.unravel(i)), i);
        }
        assert_eq!(g.strides(), [96, 24, 3, 1]);
    }

    #[test]
    fn default_grid_sizes() {
        assert_eq!(GridSpec::ground_default(1.5).len(), 1_280_000);
        assert_eq!(GridSpec::quad_default(3.5).len(), 2_560_000);
    }

    fn trilinear(z: &[f64; 4]) -> f64 {
        // multilinear in the bounded dims, constant along the periodic one
        1.0 + 2.0 * z[0] - 0.5 * z[1] + 0.25 * z[0] * z[1] * z[3] + z[1] * z[3]
    }

    #[test]
    fn node_and_midpoint_lookup() {
        let g = small();
        let vals: Vec<f64> = (0..g.len()).map(|i| i as f64).collect();
        for i in [0, 17, 200, g.len() - 1] {
            let z = g.coords_flat(i);
            let r = interpolate(&g, &vals, &z).unwrap();
            assert!((r.value - i as f64).abs() < 1e-9);
            assert!(!r.clamped);
        }
        let lin: Vec<f64> = g.all_coords().iter().map(|z| z[0]).collect();
        let r = interpolate(&g, &lin, &[0.25, 1.0, 0.0, 0.5]).unwrap();
        assert!((r.value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn clamps_and_rejects_nan() {
        let g = small();
        let lin: Vec<f64> = g.all_coords().iter().map(|z| z[0]).collect();
        let r = interpolate(&g, &lin, &[3.0, 1.0, 0.0, 0.5]).unwrap();
        assert!(r.clamped);
        assert!((r.value - 1.0).abs() < 1e-12);
        assert_eq!(interpolate(&g, &lin, &[f64::NAN, 0.0, 0.0, 0.0]), Err(Error::NanQuery));
    }

    #[test]
    fn periodic_seam() {
        let g = small();
        let f: Vec<f64> = g.all_coords().iter().map(|z| crate::math::cos(z[2])).collect();
        // Between the last node (3π/4) and the wrapped first node (-π = π).
        let a = 3.0 * PI / 4.0;
        let mid = 0.5 * (a + PI);
        let expect = 0.5 * (crate::math::cos(a) + crate::math::cos(PI));
        let r = interpolate(&g, &f, &[0.0, 1.0, mid, 0.5]).unwrap();
        assert!((r.value - expect).abs() < 1e-12);
        let r2 = interpolate(&g, &f, &[0.0, 1.0, mid - 2.0 * PI, 0.5]).unwrap();
        assert!((r2.value - expect).abs() < 1e-12);
        let r3 = interpolate(&g, &f, &[0.0, 1.0, PI, 0.5]).unwrap();
        assert!((r3.value + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn multilinear_reproduces_multilinear(x in -1.0..1.0f64, y in 0.0..3.0f64,
                                               th in -10.0..10.0f64, v in 0.0..1.0f64) {
            let g = small();
            let vals: Vec<f64> = g.all_coords().iter().map(trilinear).collect();
            let z = [x, y, th, v];
            let r = interpolate(&g, &vals, &z).unwrap();
            prop_assert!((r.value - trilinear(&z)).abs() < 1e-10);
        }
    }
}
