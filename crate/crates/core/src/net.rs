//! Residual MLP `r(z) > 0` and the barrier `h̄(z) = ℓ(z) - r(z)`.
//!
//! Hidden layers use `sin`, the output uses `softplus`, so `r` is strictly
//! positive for every parameter value and `h̄ < ℓ` holds by construction.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{failure, failure_grad, CollisionGeometry, Profile, RelState};
use crate::grid::{GridSpec, DIMS};
use crate::math::{sigmoid, sin_cos, softplus, sqrt, wrap_angle};
use crate::{Error, Result};

/// Layer widths of the residual network, input to output.
pub const ARCHITECTURE: [usize; 8] = [4, 48, 48, 24, 24, 12, 12, 1];

/// Dense layer `y = W x + b` with `W` stored row-major (`n_out × n_in`).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weights: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    #[inline]
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.n_in).zip(&self.bias)) {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Weights of a `sin`-hidden, `softplus`-output MLP.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros(sizes: &[usize]) -> Self {
        Self { layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect() }
    }

    /// Weights `U(±√(6/fan_in))`, biases `U(±1/√fan_in)`, from a seeded
    /// ChaCha8 stream.
    pub fn init(sizes: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(sizes);
        for layer in &mut p.layers {
            let w = sqrt(6.0 / layer.n_in as f64);
            let b = 1.0 / sqrt(layer.n_in as f64);
            for v in &mut layer.weights {
                *v = rng.random_range(-w..w);
            }
            for v in &mut layer.bias {
                *v = rng.random_range(-b..b);
            }
        }
        p
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.layers.iter().map(|l| l.n_in).collect();
        if let Some(last) = self.layers.last() {
            s.push(last.n_out);
        }
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.n_in)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.last().map(|l| l.n_out) != Some(1) {
            return Err(Error::InvalidConfig("network must end in a single output".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return Err(Error::InvalidConfig(alloc::format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && self.layers[i - 1].n_out != l.n_in {
                return Err(Error::InvalidConfig(alloc::format!("layer {i} input does not match previous output")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!("layer {i} has non-finite parameters")));
            }
        }
        Ok(())
    }

    /// Flat view in layer order, weights before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
    }

    fn widest(&self) -> usize {
        self.layers.iter().map(|l| l.n_out.max(l.n_in)).max().unwrap_or(0)
    }

    /// `r(x)`.
    pub fn forward(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim());
        let w = self.widest();
        let mut a = vec![0.0; w];
        let mut b = vec![0.0; w];
        a[..x.len()].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            l.apply(&a[..l.n_in], &mut b[..l.n_out]);
            if i < last {
                for v in &mut b[..l.n_out] {
                    *v = crate::math::sin(*v);
                }
            }
            core::mem::swap(&mut a, &mut b);
        }
        softplus(a[0])
    }

    /// `r(x)` and `∇_x r` by reverse-mode accumulation.
    pub fn forward_with_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let last = self.layers.len() - 1;
        // activations per layer input and derivative of each hidden activation
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut dacts: Vec<Vec<f64>> = Vec::with_capacity(last);
        acts.push(x.to_vec());
        let mut pre_out = 0.0;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; l.n_out];
            l.apply(&acts[i], &mut z);
            if i < last {
                let mut d = vec![0.0; l.n_out];
                for (v, dv) in z.iter_mut().zip(&mut d) {
                    let (s, c) = sin_cos(*v);
                    *v = s;
                    *dv = c;
                }
                dacts.push(d);
                acts.push(z);
            } else {
                pre_out = z[0];
            }
        }
        let r = softplus(pre_out);
        // backward: g holds ∂r/∂(pre-activation) of the current layer
        let mut g = vec![sigmoid(pre_out)];
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            let mut up = vec![0.0; l.n_in];
            for (row, gi) in l.weights.chunks_exact(l.n_in).zip(&g) {
                for (u, w) in up.iter_mut().zip(row) {
                    *u += gi * w;
                }
            }
            if i > 0 {
                for (u, d) in up.iter_mut().zip(&dacts[i - 1]) {
                    *u *= d;
                }
            }
            g = up;
        }
        (r, g)
    }
}

/// Per-dimension affine map of a box onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalization {
    pub lower: [f64; DIMS],
    pub upper: [f64; DIMS],
}

impl Normalization {
    pub fn from_grid(spec: &GridSpec) -> Self {
        Self {
            lower: core::array::from_fn(|d| spec.axes[d].lower),
            upper: core::array::from_fn(|d| spec.axes[d].upper),
        }
    }

    #[inline]
    pub fn scale(&self, d: usize) -> f64 {
        2.0 / (self.upper[d] - self.lower[d])
    }

    #[inline]
    pub fn normalize(&self, z: &RelState) -> RelState {
        core::array::from_fn(|d| (z[d] - self.lower[d]) * self.scale(d) - 1.0)
    }

    #[inline]
    pub fn denormalize(&self, n: &RelState) -> RelState {
        core::array::from_fn(|d| (n[d] + 1.0) / self.scale(d) + self.lower[d])
    }
}

/// A trained residual network with everything needed to evaluate `h̄`
/// on raw relative states.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResidualModel {
    pub profile: Profile,
    pub params: MlpParams,
    pub normalization: Normalization,
    pub geometry: CollisionGeometry,
}

impl ResidualModel {
    /// Normalized network input and, per dimension, whether the raw value
    /// was outside the training box and got clamped onto it.
    fn prepare(&self, z: &RelState) -> (RelState, [bool; DIMS]) {
        let mut z = *z;
        let periodic = self.profile.periodic_dim();
        if let Some(d) = periodic {
            z[d] = wrap_angle(z[d]);
        }
        let mut n = self.normalization.normalize(&z);
        let mut clamped = [false; DIMS];
        for d in 0..DIMS {
            if Some(d) != periodic && !(-1.0..=1.0).contains(&n[d]) {
                n[d] = n[d].clamp(-1.0, 1.0);
                clamped[d] = true;
            }
        }
        (n, clamped)
    }

    /// `r(z)`. Outside the training box the input is clamped onto it, which
    /// keeps `r` bounded and positive where the network was never fitted.
    pub fn residual(&self, z: &RelState) -> f64 {
        self.params.forward(&self.prepare(z).0)
    }

    pub fn residual_with_grad(&self, z: &RelState) -> (f64, RelState) {
        let (n, clamped) = self.prepare(z);
        let (r, g) = self.params.forward_with_grad(&n);
        (r, core::array::from_fn(|d| if clamped[d] { 0.0 } else { g[d] * self.normalization.scale(d) }))
    }

    /// `h̄(z) = ℓ(z) - r(z)`.
    pub fn hbar(&self, z: &RelState) -> f64 {
        failure(z, self.geometry.r_min()) - self.residual(z)
    }

    /// `h̄(z)` with `ℓ` evaluated at a caller-chosen collision radius.
    pub fn hbar_with_radius(&self, z: &RelState, r_min: f64) -> f64 {
        failure(z, r_min) - self.residual(z)
    }

    pub fn hbar_with_grad(&self, z: &RelState) -> (f64, RelState) {
        self.hbar_with_grad_radius(z, self.geometry.r_min())
    }

    pub fn hbar_with_grad_radius(&self, z: &RelState, r_min: f64) -> (f64, RelState) {
        let (r, gr) = self.residual_with_grad(z);
        let gl = failure_grad(z);
        (failure(z, r_min) - r, core::array::from_fn(|d| gl[d] - gr[d]))
    }
}
