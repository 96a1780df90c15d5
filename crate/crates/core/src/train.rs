//! Regression of `h̄ = ℓ - r` onto a converged value function.
//!
//! The loss is the mean squared error between `h̄(z)` and `V(z)`, i.e.
//! between `r(z)` and the nonnegative residual target `ℓ(z) - V(z)`.
//! Minibatch gradients are computed by batched dense kernels over fixed-size
//! chunks whose partial gradients are summed in chunk order, so results do
//! not depend on the number of worker threads.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{failure, CollisionGeometry, Profile, RelState};
use crate::hj::ValueField;
use crate::math::{ceil, sigmoid, sin_cos, softplus, sqrt};
use crate::net::{Layer, MlpParams, Normalization, ResidualModel, ARCHITECTURE};
use crate::{Error, Result};

/// Samples per gradient chunk. Part of the determinism contract: changing it
/// changes floating-point summation order.
const CHUNK: usize = 256;

/// Stream offsets so that split, shuffle and init draws are independent.
const SPLIT_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const SHUFFLE_STREAM: u64 = 0xc2b2_ae3d_27d4_eb4f;

/// One sample per grid node with normalized inputs and residual targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub normalization: Normalization,
    pub inputs: Vec<RelState>,
    /// `ℓ(z) - V(z) >= 0`, the regression target of `r`.
    pub residual_targets: Vec<f64>,
    /// Raw value `V(z)` for reporting.
    pub values: Vec<f64>,
    /// The sample lies within one angular cell of the `±π` seam.
    pub near_seam: Vec<bool>,
    /// The source field had converged.
    pub converged: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Seeded subset with `round(fraction · len)` samples, in storage order.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Self {
        let n = self.len();
        let keep = (libm::round(fraction.clamp(0.0, 1.0) * n as f64) as usize).min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(keep);
        idx.sort_unstable();
        self.select(&idx)
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            normalization: self.normalization,
            inputs: idx.iter().map(|&i| self.inputs[i]).collect(),
            residual_targets: idx.iter().map(|&i| self.residual_targets[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            near_seam: idx.iter().map(|&i| self.near_seam[i]).collect(),
            converged: self.converged,
        }
    }

    /// Seeded train/validation index split; the validation part has
    /// `round(validation_fraction · len)` samples.
    pub fn split(&self, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let n = self.len();
        let n_val = (libm::round(validation_fraction * n as f64) as usize).min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ SPLIT_STREAM));
        let val = idx.split_off(n - n_val);
        (idx, val)
    }
}

/// One sample per node of `field`. Inputs are mapped affinely onto
/// `[-1, 1]` by the grid extents, the angle included (no sin/cos embedding).
pub fn build_dataset(field: &ValueField, geometry: &CollisionGeometry) -> Dataset {
    let spec = &field.spec;
    let normalization = Normalization::from_grid(spec);
    let r_min = geometry.r_min();
    let n = spec.len();
    let mut inputs = Vec::with_capacity(n);
    let mut residual_targets = Vec::with_capacity(n);
    let mut near_seam = Vec::with_capacity(n);
    let seam_band: Option<(usize, f64)> = spec.axes.iter().position(|a| a.periodic).map(|d| (d, spec.axes[d].spacing()));
    for i in 0..n {
        let z = spec.coords_flat(i);
        inputs.push(normalization.normalize(&z));
        // V <= ℓ holds for solver output; clamp guards fields from elsewhere.
        residual_targets.push((failure(&z, r_min) - field.values[i]).max(0.0));
        near_seam.push(match seam_band {
            Some((d, h)) => core::f64::consts::PI - z[d].abs() <= h * 1.0000001,
            None => false,
        });
    }
    Dataset { normalization, inputs, residual_targets, values: field.values.clone(), near_seam, converged: field.converged }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Learning rate at the last epoch as a fraction of `learning_rate`;
    /// the rate decays geometrically in between. `1.0` keeps it constant.
    pub final_lr_fraction: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    pub layer_sizes: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10_000,
            learning_rate: 1e-3,
            final_lr_fraction: 1.0,
            batch_size: 4096,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            validation_fraction: 0.1,
            layer_sizes: ARCHITECTURE.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(Error::InvalidConfig("validation_fraction must be in (0, 0.5)".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.final_lr_fraction > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::InvalidConfig("Adam betas must be in [0, 1) and eps > 0".into()));
        }
        if self.layer_sizes.len() < 2 || self.layer_sizes[0] != 4 || self.layer_sizes.last() != Some(&1) {
            return Err(Error::InvalidConfig("layer sizes must run from 4 inputs to 1 output".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub learning_rate: f64,
}

/// Error statistics of `|h̄ - V|` on a sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ErrorStats {
    pub count: usize,
    pub mse: f64,
    pub mean_abs: f64,
    pub p95_abs: f64,
    pub max_abs: f64,
    /// Mean absolute error restricted to samples near the angular seam.
    pub seam_mean_abs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation MSE.
    pub params: MlpParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

impl TrainOutcome {
    pub fn model(&self, profile: Profile, dataset: &Dataset, geometry: CollisionGeometry) -> ResidualModel {
        ResidualModel { profile, params: self.params.clone(), normalization: dataset.normalization, geometry }
    }
}

/// Per-chunk scratch buffers for the batched forward/backward pass.
struct Workspace {
    /// Post-activation per layer input (`acts[0]` is the input batch).
    acts: Vec<Vec<f64>>,
    /// `cos` of the pre-activation of each hidden layer.
    dacts: Vec<Vec<f64>>,
    out: Vec<f64>,
    g: Vec<f64>,
    g_prev: Vec<f64>,
}

impl Workspace {
    fn new(sizes: &[usize], rows: usize) -> Self {
        let widest = sizes.iter().copied().max().unwrap_or(1);
        Self {
            acts: sizes[..sizes.len() - 1].iter().map(|&n| vec![0.0; n * rows]).collect(),
            dacts: sizes[1..sizes.len() - 1].iter().map(|&n| vec![0.0; n * rows]).collect(),
            out: vec![0.0; rows],
            g: vec![0.0; widest * rows],
            g_prev: vec![0.0; widest * rows],
        }
    }
}

/// `C (m×n) = beta·C + A (m×k) · B (k×n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
#[inline]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: every caller passes slices whose extents cover the m×k, k×n and
    // m×n index ranges under the given strides; the sizes are asserted below.
    debug_assert!(a.len() >= ((m as isize - 1) * rsa + (k as isize - 1) * csa + 1) as usize || k == 0);
    debug_assert!(b.len() >= ((k as isize - 1) * rsb + (n as isize - 1) * csb + 1) as usize || k == 0);
    debug_assert!(c.len() >= ((m as isize - 1) * rsc + (n as isize - 1) * csc + 1) as usize);
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Batched forward pass over `rows` samples already copied into
/// `ws.acts[0]`; leaves pre-output values in `ws.out`.
fn forward_batch(params: &MlpParams, ws: &mut Workspace, rows: usize, keep_derivatives: bool) {
    let last = params.layers.len() - 1;
    for (i, l) in params.layers.iter().enumerate() {
        let (ni, no) = (l.n_in as isize, l.n_out as isize);
        let (head, tail) = ws.acts.split_at_mut(i + 1);
        let input = &head[i][..rows * l.n_in];
        let z: &mut [f64] = if i < last { &mut tail[0][..rows * l.n_out] } else { &mut ws.out[..rows] };
        for row in z.chunks_exact_mut(l.n_out) {
            row.copy_from_slice(&l.bias);
        }
        // Z = A · Wᵀ + b
        gemm(rows, l.n_in, l.n_out, input, ni, 1, &l.weights, 1, ni, 1.0, z, no, 1);
        if i < last {
            if keep_derivatives {
                for (v, d) in z.iter_mut().zip(ws.dacts[i].iter_mut()) {
                    let (s, c) = sin_cos(*v);
                    *v = s;
                    *d = c;
                }
            } else {
                for v in z.iter_mut() {
                    *v = crate::math::sin(*v);
                }
            }
        }
    }
}

/// Adds the gradient of `Σ (r - t)² · scale` over the chunk to `grad`
/// (laid out as [`MlpParams::to_flat`]) and returns the unscaled squared
/// error sum.
fn chunk_gradient(params: &MlpParams, ws: &mut Workspace, targets: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
    let rows = targets.len();
    forward_batch(params, ws, rows, true);
    let mut sse = 0.0;
    for (g, (o, t)) in ws.g.iter_mut().zip(ws.out.iter().zip(targets)) {
        let e = softplus(*o) - t;
        sse += e * e;
        *g = 2.0 * e * scale * sigmoid(*o);
    }
    let offsets = layer_offsets(&params.layers);
    for i in (0..params.layers.len()).rev() {
        let l = &params.layers[i];
        let (ni, no) = (l.n_in as isize, l.n_out as isize);
        let g = &ws.g[..rows * l.n_out];
        let a = &ws.acts[i][..rows * l.n_in];
        let (w_off, b_off) = offsets[i];
        // dW += Gᵀ · A
        gemm(l.n_out, rows, l.n_in, g, 1, no, a, ni, 1, 1.0, &mut grad[w_off..w_off + l.weights.len()], ni, 1);
        let db = &mut grad[b_off..b_off + l.n_out];
        for row in g.chunks_exact(l.n_out) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        if i > 0 {
            // G_prev = (G · W) ⊙ cos(Z_prev)
            let gp = &mut ws.g_prev[..rows * l.n_in];
            gemm(rows, l.n_out, l.n_in, g, no, 1, &l.weights, ni, 1, 0.0, gp, ni, 1);
            for (v, d) in gp.iter_mut().zip(&ws.dacts[i - 1][..rows * l.n_in]) {
                *v *= d;
            }
            core::mem::swap(&mut ws.g, &mut ws.g_prev);
        }
    }
    sse
}

fn layer_offsets(layers: &[Layer]) -> Vec<(usize, usize)> {
    let mut k = 0;
    layers
        .iter()
        .map(|l| {
            let w = k;
            k += l.weights.len();
            let b = k;
            k += l.bias.len();
            (w, b)
        })
        .collect()
}

fn load_chunk(ws: &mut Workspace, dataset: &Dataset, idx: &[usize], targets: &mut Vec<f64>) {
    targets.clear();
    let input = &mut ws.acts[0];
    for (row, &i) in input.chunks_exact_mut(4).zip(idx) {
        row.copy_from_slice(&dataset.inputs[i]);
        targets.push(dataset.residual_targets[i]);
    }
}

/// Gradient of the minibatch MSE over `batch` and its summed squared error.
fn batch_gradient(params: &MlpParams, dataset: &Dataset, batch: &[usize], grad: &mut [f64]) -> f64 {
    let sizes = params.sizes();
    let scale = 1.0 / batch.len() as f64;
    let n_params = grad.len();
    let work = |idx: &[usize]| -> (Vec<f64>, f64) {
        let mut ws = Workspace::new(&sizes, CHUNK);
        let mut targets = Vec::with_capacity(CHUNK);
        load_chunk(&mut ws, dataset, idx, &mut targets);
        let mut g = vec![0.0; n_params];
        let sse = chunk_gradient(params, &mut ws, &targets, scale, &mut g);
        (g, sse)
    };
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut sse = 0.0;
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        if rayon::current_num_threads() > 1 && batch.len() > CHUNK {
            let parts: Vec<(Vec<f64>, f64)> = batch.par_chunks(CHUNK).map(work).collect();
            for (g, s) in parts {
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
                sse += s;
            }
            return sse;
        }
    }
    #[cfg(not(feature = "std"))]
    let _ = work;
    // Sequential path: same chunking and summation order as above.
    let mut ws = Workspace::new(&sizes, CHUNK);
    let mut targets = Vec::with_capacity(CHUNK);
    let mut g = vec![0.0; grad.len()];
    for idx in batch.chunks(CHUNK) {
        load_chunk(&mut ws, dataset, idx, &mut targets);
        g.iter_mut().for_each(|v| *v = 0.0);
        sse += chunk_gradient(params, &mut ws, &targets, scale, &mut g);
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    sse
}

/// Residual predictions `r(z)` for the given samples.
pub fn predict(params: &MlpParams, dataset: &Dataset, idx: &[usize]) -> Vec<f64> {
    let sizes = params.sizes();
    let run = |part: &[usize]| -> Vec<f64> {
        let mut ws = Workspace::new(&sizes, CHUNK);
        let mut targets = Vec::with_capacity(CHUNK);
        let mut out = Vec::with_capacity(part.len());
        for c in part.chunks(CHUNK) {
            load_chunk(&mut ws, dataset, c, &mut targets);
            forward_batch(params, &mut ws, c.len(), false);
            out.extend(ws.out[..c.len()].iter().map(|o| softplus(*o)));
        }
        out
    };
    #[cfg(feature = "std")]
    {
        use rayon::prelude::*;
        if rayon::current_num_threads() > 1 {
            return idx.par_chunks(CHUNK * 16).flat_map_iter(run).collect();
        }
    }
    run(idx)
}

/// `|h̄ - V|` statistics over the given samples.
pub fn evaluate(params: &MlpParams, dataset: &Dataset, idx: &[usize]) -> ErrorStats {
    let r = predict(params, dataset, idx);
    let mut errs: Vec<f64> = idx.iter().zip(&r).map(|(&i, r)| (r - dataset.residual_targets[i]).abs()).collect();
    let n = errs.len();
    let mut seam_sum = 0.0;
    let mut seam_n = 0usize;
    for (&i, e) in idx.iter().zip(&errs) {
        if dataset.near_seam[i] {
            seam_sum += e;
            seam_n += 1;
        }
    }
    let mse = errs.iter().map(|e| e * e).sum::<f64>() / n.max(1) as f64;
    let mean_abs = errs.iter().sum::<f64>() / n.max(1) as f64;
    errs.sort_unstable_by(f64::total_cmp);
    let p95_abs = if n == 0 { 0.0 } else { errs[(ceil(0.95 * n as f64) as usize).clamp(1, n) - 1] };
    ErrorStats {
        count: n,
        mse,
        mean_abs,
        p95_abs,
        max_abs: errs.last().copied().unwrap_or(0.0),
        seam_mean_abs: (seam_n > 0).then(|| seam_sum / seam_n as f64),
    }
}

/// Adam optimizer state.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - libm::pow(cfg.adam_beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(cfg.adam_beta2, self.t as f64);
        for ((p, g), (m, v)) in theta.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = cfg.adam_beta1 * *m + (1.0 - cfg.adam_beta1) * g;
            *v = cfg.adam_beta2 * *v + (1.0 - cfg.adam_beta2) * g * g;
            *p -= lr * (*m / c1) / (sqrt(*v / c2) + cfg.adam_eps);
        }
    }
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, config, |_| {})
}

/// Trains from a seeded initialization and returns the parameters with the
/// best validation MSE. `progress` sees every epoch record.
pub fn train_with(dataset: &Dataset, config: &TrainConfig, mut progress: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut train_idx, val_idx) = dataset.split(config.validation_fraction, config.seed);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params = MlpParams::init(&config.layer_sizes, config.seed);
    let mut theta = params.to_flat();
    let mut grad = vec![0.0; theta.len()];
    let mut adam = Adam::new(theta.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_STREAM);
    let mut best = (f64::INFINITY, 0usize, params.clone());
    let mut history = Vec::with_capacity(config.epochs);
    let decay = if config.epochs > 1 {
        libm::pow(config.final_lr_fraction, 1.0 / (config.epochs - 1) as f64)
    } else {
        1.0
    };
    let mut lr = config.learning_rate;
    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut sse = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            sse += batch_gradient(&params, dataset, batch, &mut grad);
            adam.step(&mut theta, &grad, lr, config);
            params.set_flat(&theta);
        }
        let train_mse = sse / train_idx.len() as f64;
        let r = predict(&params, dataset, &val_idx);
        let validation_mse =
            val_idx.iter().zip(&r).map(|(&i, r)| {
                let e = r - dataset.residual_targets[i];
                e * e
            }).sum::<f64>() / val_idx.len() as f64;
        if !train_mse.is_finite() || !validation_mse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let rec = EpochRecord { epoch, train_mse, validation_mse, learning_rate: lr };
        progress(&rec);
        history.push(rec);
        if validation_mse < best.0 {
            best = (validation_mse, epoch, params.clone());
        }
        lr *= decay;
    }
    Ok(TrainOutcome { params: best.2, best_epoch: best.1, history, train_indices: train_idx, validation_indices: val_idx })
}
