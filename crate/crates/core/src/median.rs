//! The l_p^p-median cost sketch.
//!
//! One instance of the sampling estimator keeps two Count-Min compressed
//! families of per-coordinate p-stable sketches of the exponentially scaled
//! data `y_ij = x_ij / u_j^{1/p}`. The first locates the sampled coordinate
//! and its mass, the second estimates that coordinate's optimal 1-d cost.
//! A separate sketch of the whole stacked input estimates the total mass Z.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::countmin::{add_block_into, buckets_for, rows_for, BucketHash, CountMinTable};
use crate::error::{Error, Result};
use crate::fixed;
use crate::precision::{argmax, draw_scaling, ExponentialScaling};
use crate::rng::{hash_words, stable_entry, SeedCtx, StableParams};
use crate::stable_sketch::{grid_min_from_entries, norm_from_entries, MAX_EPS, MIN_WIDTH};

const STREAM_MEDIAN: u64 = 0x6d65_6469_616e;
const TAG_Z: u64 = 1;
const TAG_INSTANCE: u64 = 2;
const TAG_U: u64 = 3;
const TAG_ALPHA: u64 = 4;
const TAG_BETA: u64 = 5;
const TAG_ALPHA_HASH: u64 = 6;
const TAG_BETA_HASH: u64 = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianSketchConfig {
    pub p: f64,
    pub eps: f64,
    pub delta: f64,
    pub dim: usize,
    pub c1: f64,
    pub c2: f64,
    pub eps1: f64,
    pub eps2: f64,
    /// Sampling instances per repetition.
    pub samples: usize,
    pub reps: usize,
    pub z_width: usize,
    pub alpha_width: usize,
    pub beta_width: usize,
    pub cm_rows: usize,
    pub cm_buckets: usize,
}

fn ceil_usize(x: f64) -> usize {
    x.ceil().max(1.0) as usize
}

impl MedianSketchConfig {
    pub fn new(p: f64, eps: f64, delta: f64, dim: usize) -> Result<Self> {
        if !(1.0..=2.0).contains(&p) {
            return Err(Error::Domain(format!("p = {p} not in [1, 2]")));
        }
        if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Domain(format!("need eps > 0 and delta in (0, 1), got {eps}, {delta}")));
        }
        if dim == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        let eps = eps.min(MAX_EPS);
        let mut c = MedianSketchConfig {
            p,
            eps,
            delta,
            dim,
            c1: 0.25,
            c2: 0.25,
            eps1: 0.0,
            eps2: 0.0,
            samples: ceil_usize(6.0 / (eps * eps)),
            reps: ceil_usize(3.0 * (1.0 / delta).ln()),
            z_width: ceil_usize(32.0 / (eps * eps)).max(MIN_WIDTH),
            alpha_width: ceil_usize(3.0 / (eps * eps)).max(MIN_WIDTH),
            beta_width: ceil_usize(8.0 / (eps * eps)).max(MIN_WIDTH),
            cm_rows: rows_for(dim, delta),
            cm_buckets: buckets_for(eps, p),
        };
        c.set_constants(0.25, 0.25);
        Ok(c)
    }

    /// Recompute eps1 and eps2 from the constants c1, c2.
    pub fn set_constants(&mut self, c1: f64, c2: f64) {
        let (p, e, d) = (self.p, self.eps, self.delta);
        self.c1 = c1;
        self.c2 = c2;
        self.eps1 = c1 * e.powf(1.0 + 2.0 / p) * d.powf(1.0 + 1.0 / p);
        self.eps2 = c2 * e.powf(1.0 + 1.0 / p) * d.powf(1.0 / p);
    }

    pub fn with_samples(mut self, samples: usize, reps: usize) -> Self {
        self.samples = samples.max(1);
        self.reps = reps.max(1);
        self
    }

    pub fn with_widths(mut self, z: usize, alpha: usize, beta: usize) -> Self {
        self.z_width = z.max(MIN_WIDTH);
        self.alpha_width = alpha.max(MIN_WIDTH);
        self.beta_width = beta.max(MIN_WIDTH);
        self
    }

    pub fn with_count_min(mut self, rows: usize, buckets: usize) -> Self {
        self.cm_rows = rows.max(1);
        self.cm_buckets = buckets.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 <= self.eps2 && self.eps2 <= self.eps) {
            return Err(Error::Domain("need eps1 <= eps2 <= eps".into()));
        }
        if self.z_width < MIN_WIDTH || self.alpha_width < MIN_WIDTH || self.beta_width < MIN_WIDTH {
            return Err(Error::Domain(format!("all widths must be at least {MIN_WIDTH}")));
        }
        StableParams::new(self.p).map(|_| ())
    }

    pub fn alpha_len(&self) -> usize {
        self.cm_rows * self.cm_buckets * self.alpha_width
    }

    pub fn instance_len(&self) -> usize {
        self.cm_rows * self.cm_buckets * (self.alpha_width + self.beta_width)
    }

    pub fn rep_len(&self) -> usize {
        self.z_width + self.samples * self.instance_len()
    }

    /// Length of the complete linear state.
    pub fn state_len(&self) -> usize {
        self.reps * self.rep_len()
    }

    pub fn fingerprint(&self) -> u64 {
        hash_words(&[
            self.p.to_bits(),
            self.eps.to_bits(),
            self.delta.to_bits(),
            self.dim as u64,
            self.c1.to_bits(),
            self.c2.to_bits(),
            self.samples as u64,
            self.reps as u64,
            self.z_width as u64,
            self.alpha_width as u64,
            self.beta_width as u64,
            self.cm_rows as u64,
            self.cm_buckets as u64,
        ])
    }
}

/// `minmax(l, x, u)`: x projected onto [l, u].
pub fn minmax(l: f64, x: f64, u: f64) -> f64 {
    if x <= l {
        l
    } else if x >= u {
        u
    } else {
        x
    }
}

/// Median, averaging the two middle values for even lengths.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenteredInput {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl CenteredInput {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |x| x.len())
    }

    pub fn is_zero(&self) -> bool {
        self.points.iter().all(|x| x.iter().all(|&v| v == 0.0))
    }
}

pub(crate) fn check_weights(weights: &[f64]) -> Result<()> {
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || !((sum - 1.0).abs() <= 1e-9) {
        return Err(Error::WeightsNotNormalized(sum));
    }
    Ok(())
}

/// `x_i <- x_i - sum_h lambda_h x_h`.
pub fn center(points: &[Vec<f64>], weights: &[f64]) -> Result<CenteredInput> {
    if points.len() != weights.len() {
        return Err(Error::LengthMismatch { expected: points.len(), found: weights.len() });
    }
    check_weights(weights)?;
    let d = points.first().map_or(0, |x| x.len());
    if let Some(x) = points.iter().find(|x| x.len() != d) {
        return Err(Error::LengthMismatch { expected: d, found: x.len() });
    }
    // Mean taken relative to the first point, so identical inputs center to exact zeros.
    let mean: Vec<f64> = match points.first() {
        None => vec![],
        Some(x0) => (0..d)
            .map(|j| x0[j] + points.iter().zip(weights).map(|(x, l)| l * (x[j] - x0[j])).sum::<f64>())
            .collect(),
    };
    let points = points.iter().map(|x| x.iter().zip(&mean).map(|(v, m)| v - m).collect()).collect();
    Ok(CenteredInput { points, weights: weights.to_vec() })
}

/// Uniform weights `1/n`.
pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianCostTriple {
    pub j_hat: usize,
    pub alpha_hat: f64,
    pub beta_hat: f64,
}

impl MedianCostTriple {
    /// `minmax(2^-p, (beta/alpha)^p, 1)`; 1 when alpha is zero.
    pub fn clamped_ratio(&self, p: f64) -> f64 {
        if self.alpha_hat <= 0.0 {
            return 1.0;
        }
        minmax(2f64.powf(-p), (self.beta_hat / self.alpha_hat).powf(p), 1.0)
    }
}

#[derive(Clone, Debug)]
pub struct InstanceKeys {
    pub scaling: ExponentialScaling,
    inv_root: Vec<f64>,
    pub alpha: SeedCtx,
    pub beta: SeedCtx,
    pub alpha_hash: BucketHash,
    pub beta_hash: BucketHash,
}

/// The implicit sketch matrix of a [`MedianSketchConfig`] under a seed.
///
/// `family` selects an independent copy; the clustering driver uses one
/// family per cluster size.
#[derive(Clone, Debug)]
pub struct MedianSketch {
    pub config: MedianSketchConfig,
    pub seed: u64,
    pub family: u64,
    params: StableParams,
    z_ctx: Vec<SeedCtx>,
    keys: Vec<InstanceKeys>,
}

impl MedianSketch {
    pub fn new(config: MedianSketchConfig, seed: u64) -> Result<Self> {
        Self::with_family(config, seed, 0)
    }

    pub fn with_family(config: MedianSketchConfig, seed: u64, family: u64) -> Result<Self> {
        config.validate()?;
        let params = StableParams::new(config.p)?;
        let root = SeedCtx::new(seed, STREAM_MEDIAN).derive(family);
        let z_ctx = (0..config.reps as u64).map(|r| root.derive_path(&[TAG_Z, r])).collect();
        let mut keys = Vec::with_capacity(config.reps * config.samples);
        for r in 0..config.reps as u64 {
            for l in 0..config.samples as u64 {
                let base = root.derive_path(&[TAG_INSTANCE, r, l]);
                let scaling = draw_scaling(config.dim, &base.derive(TAG_U));
                let inv_root = (0..config.dim).map(|j| scaling.inv_root(j, config.p)).collect();
                keys.push(InstanceKeys {
                    scaling,
                    inv_root,
                    alpha: base.derive(TAG_ALPHA),
                    beta: base.derive(TAG_BETA),
                    alpha_hash: BucketHash::new(config.cm_rows, config.cm_buckets, base.derive(TAG_ALPHA_HASH))?,
                    beta_hash: BucketHash::new(config.cm_rows, config.cm_buckets, base.derive(TAG_BETA_HASH))?,
                });
            }
        }
        Ok(MedianSketch { config, seed, family, params, z_ctx, keys })
    }

    pub fn keys(&self, rep: usize, sample: usize) -> &InstanceKeys {
        &self.keys[rep * self.config.samples + sample]
    }

    /// Adds `scale * S_Z[slot] x` into a Z block.
    pub fn add_z(&self, rep: usize, slot: usize, x: &[f64], scale: f64, z: &mut [f64]) {
        let d = self.config.dim;
        let ctx = &self.z_ctx[rep];
        for (j, &v) in x.iter().enumerate() {
            if v == 0.0 || scale == 0.0 {
                continue;
            }
            let col = (slot * d + j) as u64;
            let y = v * scale;
            for (k, e) in z.iter_mut().enumerate() {
                *e += stable_entry(self.params, ctx, k as u64, col) * y;
            }
        }
    }

    /// Adds `scale * S[slot] x` into one instance's (alpha, beta) cells.
    pub fn add_instance(
        &self,
        keys: &InstanceKeys,
        slot: usize,
        x: &[f64],
        scale: f64,
        cells: &mut [f64],
        block: &mut Vec<f64>,
    ) {
        let c = &self.config;
        let (acells, bcells) = cells.split_at_mut(c.alpha_len());
        for (j, &v) in x.iter().enumerate() {
            if v == 0.0 || scale == 0.0 {
                continue;
            }
            let y = v * keys.inv_root[j] * scale;
            let col = (slot * c.dim + j) as u64;
            block.clear();
            block.extend((0..c.alpha_width).map(|k| stable_entry(self.params, &keys.alpha, k as u64, col) * y));
            add_block_into(&keys.alpha_hash, c.alpha_width, acells, j, block);
            block.clear();
            block.extend((0..c.beta_width).map(|k| stable_entry(self.params, &keys.beta, k as u64, col) * y));
            add_block_into(&keys.beta_hash, c.beta_width, bcells, j, block);
        }
    }

    /// Adds `scale * S[slot] x` into a complete state vector.
    pub fn add_point(&self, slot: usize, x: &[f64], scale: f64, state: &mut [f64]) {
        let c = &self.config;
        let mut block = Vec::with_capacity(c.alpha_width.max(c.beta_width));
        for r in 0..c.reps {
            let rep = &mut state[r * c.rep_len()..(r + 1) * c.rep_len()];
            let (z, rest) = rep.split_at_mut(c.z_width);
            self.add_z(r, slot, x, scale, z);
            for (l, cells) in rest.chunks_exact_mut(c.instance_len()).enumerate() {
                self.add_instance(self.keys(r, l), slot, x, scale, cells, &mut block);
            }
        }
    }

    /// `sum_h lambda_h^{1/p} S_h`, one column block per coordinate, so the
    /// centering term of a point costs one pass over its coordinates.
    pub fn weighted_columns(&self, weights: &[f64]) -> WeightedColumns {
        let c = &self.config;
        let d = c.dim;
        let w = c.alpha_width + c.beta_width;
        let mut z = vec![0.0; c.reps * d * c.z_width];
        let mut inst = vec![0.0; self.keys.len() * d * w];
        for (h, &l) in weights.iter().enumerate() {
            let s = l.powf(1.0 / c.p);
            if s == 0.0 {
                continue;
            }
            for j in 0..d {
                let col = (h * d + j) as u64;
                for (r, ctx) in self.z_ctx.iter().enumerate() {
                    let out = &mut z[(r * d + j) * c.z_width..][..c.z_width];
                    for (k, e) in out.iter_mut().enumerate() {
                        *e += stable_entry(self.params, ctx, k as u64, col) * s;
                    }
                }
                for (t, keys) in self.keys.iter().enumerate() {
                    let out = &mut inst[(t * d + j) * w..][..w];
                    let (a, b) = out.split_at_mut(c.alpha_width);
                    for (k, e) in a.iter_mut().enumerate() {
                        *e += stable_entry(self.params, &keys.alpha, k as u64, col) * s;
                    }
                    for (k, e) in b.iter_mut().enumerate() {
                        *e += stable_entry(self.params, &keys.beta, k as u64, col) * s;
                    }
                }
            }
        }
        WeightedColumns { z, inst }
    }

    /// Adds `scale * sum_h lambda_h^{1/p} S_h x` using precomputed columns.
    pub fn add_weighted(&self, cols: &WeightedColumns, x: &[f64], scale: f64, state: &mut [f64]) {
        let c = &self.config;
        let d = c.dim;
        let w = c.alpha_width + c.beta_width;
        let mut block = Vec::with_capacity(w);
        for r in 0..c.reps {
            let rep = &mut state[r * c.rep_len()..(r + 1) * c.rep_len()];
            let (z, rest) = rep.split_at_mut(c.z_width);
            for (j, &v) in x.iter().enumerate() {
                let y = v * scale;
                if y == 0.0 {
                    continue;
                }
                for (e, m) in z.iter_mut().zip(&cols.z[(r * d + j) * c.z_width..][..c.z_width]) {
                    *e += m * y;
                }
            }
            for (l, cells) in rest.chunks_exact_mut(c.instance_len()).enumerate() {
                let t = r * c.samples + l;
                let keys = &self.keys[t];
                let (acells, bcells) = cells.split_at_mut(c.alpha_len());
                for (j, &v) in x.iter().enumerate() {
                    let y = v * keys.inv_root[j] * scale;
                    if y == 0.0 {
                        continue;
                    }
                    let col = &cols.inst[(t * d + j) * w..][..w];
                    block.clear();
                    block.extend(col[..c.alpha_width].iter().map(|m| m * y));
                    add_block_into(&keys.alpha_hash, c.alpha_width, acells, j, &block);
                    block.clear();
                    block.extend(col[c.alpha_width..].iter().map(|m| m * y));
                    add_block_into(&keys.beta_hash, c.beta_width, bcells, j, &block);
                }
            }
        }
    }

    /// Contribution of point `slot` to the centered state:
    /// `lambda_i^{1/p} S_i x - lambda_i sum_h lambda_h^{1/p} S_h x`.
    pub fn centered_contribution(&self, slot: usize, x: &[f64], weights: &[f64]) -> Vec<f64> {
        self.centered_contribution_with(&self.weighted_columns(weights), slot, x, weights)
    }

    pub fn centered_contribution_with(&self, cols: &WeightedColumns, slot: usize, x: &[f64], weights: &[f64]) -> Vec<f64> {
        let p = self.config.p;
        let mut out = vec![0.0; self.config.state_len()];
        self.add_point(slot, x, weights[slot].powf(1.0 / p), &mut out);
        self.add_weighted(cols, x, -weights[slot], &mut out);
        out
    }

    /// `sum_i lambda_i^{1/p} S'_j[., i]` for the beta family of one instance.
    fn beta_ones(&self, keys: &InstanceKeys, j: usize, weights: &[f64]) -> Vec<f64> {
        let c = &self.config;
        let mut b = vec![0.0; c.beta_width];
        for (i, &l) in weights.iter().enumerate() {
            let s = l.powf(1.0 / c.p);
            if s == 0.0 {
                continue;
            }
            let col = (i * c.dim + j) as u64;
            for (k, e) in b.iter_mut().enumerate() {
                *e += stable_entry(self.params, &keys.beta, k as u64, col) * s;
            }
        }
        b
    }

    /// The main-lemma triple from one instance's cells.
    pub fn triple_from_cells(&self, keys: &InstanceKeys, cells: &[f64], weights: &[f64]) -> MedianCostTriple {
        let c = &self.config;
        let (acells, bcells) = cells.split_at(c.alpha_len());
        let alphas = alphas_from_cells(&keys.alpha_hash, c.alpha_width, acells, c.dim, c.p);
        self.finish_triple(keys, &alphas, |j| {
            let rows = (0..c.cm_rows)
                .map(|r| {
                    let off = (r * c.cm_buckets + keys.beta_hash.bucket(r, j)) * c.beta_width;
                    bcells[off..off + c.beta_width].to_vec()
                })
                .collect();
            (rows, self.beta_ones(keys, j, weights))
        })
    }

    /// Selects j from the alphas and estimates its optimal cost.
    ///
    /// `beta_side(j)` returns the beta cell coordinate j hashes to in every
    /// Count-Min row, and the weighted all-ones image `S'_j (lambda^{1/p} o 1)`.
    fn finish_triple(
        &self,
        keys: &InstanceKeys,
        alphas: &[f64],
        beta_side: impl FnOnce(usize) -> (Vec<Vec<f64>>, Vec<f64>),
    ) -> MedianCostTriple {
        let c = &self.config;
        let p = c.p;
        if alphas.iter().all(|&a| a == 0.0) {
            return MedianCostTriple { j_hat: 0, alpha_hat: 0.0, beta_hat: 0.0 };
        }
        let j = argmax(alphas.iter().copied());
        let gamma = alphas[j];
        let (rows, b) = beta_side(j);
        let mut scratch = Vec::with_capacity(c.beta_width);
        let mut betas: Vec<f64> =
            rows.iter().map(|cell| grid_min_from_entries(cell, &b, gamma, c.eps, p, &mut scratch)).collect();
        let beta = median(&mut betas);
        let back = keys.scaling.root(j, p);
        MedianCostTriple { j_hat: j, alpha_hat: gamma * back, beta_hat: beta * back }
    }

    /// The triple computed straight from a centered input. Only the beta
    /// blocks that share a bucket with the selected coordinate are built;
    /// the result equals [`Self::triple_from_cells`] on the full cells up to
    /// summation order.
    pub fn triple_direct(&self, rep: usize, sample: usize, input: &CenteredInput, acells: &mut Vec<f64>) -> MedianCostTriple {
        let c = &self.config;
        let keys = self.keys(rep, sample);
        let scales: Vec<f64> = input.weights.iter().map(|l| l.powf(1.0 / c.p)).collect();
        acells.clear();
        acells.resize(c.alpha_len(), 0.0);
        let mut block = Vec::with_capacity(c.alpha_width);
        for (i, x) in input.points.iter().enumerate() {
            for (j, &v) in x.iter().enumerate() {
                if v == 0.0 || scales[i] == 0.0 {
                    continue;
                }
                let y = v * keys.inv_root[j] * scales[i];
                let col = (i * c.dim + j) as u64;
                block.clear();
                block.extend((0..c.alpha_width).map(|k| stable_entry(self.params, &keys.alpha, k as u64, col) * y));
                add_block_into(&keys.alpha_hash, c.alpha_width, acells, j, &block);
            }
        }
        let alphas = alphas_from_cells(&keys.alpha_hash, c.alpha_width, acells, c.dim, c.p);
        self.finish_triple(keys, &alphas, |jhat| {
            let w = c.beta_width;
            let mut ones = vec![0.0; w];
            let mut blocks: Vec<Option<Vec<f64>>> = vec![None; c.dim];
            let needed: Vec<usize> = (0..c.dim)
                .filter(|&j| (0..c.cm_rows).any(|r| keys.beta_hash.bucket(r, j) == keys.beta_hash.bucket(r, jhat)))
                .collect();
            for &j in &needed {
                let mut z = vec![0.0; w];
                for (i, x) in input.points.iter().enumerate() {
                    if scales[i] == 0.0 || (x[j] == 0.0 && j != jhat) {
                        continue;
                    }
                    let y = x[j] * keys.inv_root[j] * scales[i];
                    let col = (i * c.dim + j) as u64;
                    for k in 0..w {
                        let e = stable_entry(self.params, &keys.beta, k as u64, col);
                        z[k] += e * y;
                        if j == jhat {
                            ones[k] += e * scales[i];
                        }
                    }
                }
                blocks[j] = Some(z);
            }
            let rows = (0..c.cm_rows)
                .map(|r| {
                    let target = keys.beta_hash.bucket(r, jhat);
                    let mut cell = vec![0.0; w];
                    for j in needed.iter().copied().filter(|&j| keys.beta_hash.bucket(r, j) == target) {
                        for (a, b) in cell.iter_mut().zip(blocks[j].as_ref().expect("built above")) {
                            *a += b;
                        }
                    }
                    cell
                })
                .collect();
            (rows, ones)
        })
    }

    fn z_hat(&self, z: &[f64]) -> f64 {
        norm_from_entries(z, self.config.p, &mut Vec::with_capacity(z.len())).powf(self.config.p)
    }

    /// Estimate from a complete (already centered) state vector.
    pub fn estimate_from_state(&self, state: &[f64], weights: &[f64]) -> Result<f64> {
        let c = &self.config;
        if state.len() != c.state_len() {
            return Err(Error::LengthMismatch { expected: c.state_len(), found: state.len() });
        }
        let mut reps: Vec<f64> = (0..c.reps)
            .map(|r| {
                let rep = &state[r * c.rep_len()..(r + 1) * c.rep_len()];
                let (z, rest) = rep.split_at(c.z_width);
                let zhat = self.z_hat(z);
                if zhat == 0.0 {
                    return 0.0;
                }
                let total: f64 = rest
                    .chunks_exact(c.instance_len())
                    .enumerate()
                    .map(|(l, cells)| self.triple_from_cells(self.keys(r, l), cells, weights).clamped_ratio(c.p))
                    .sum();
                zhat * total / c.samples as f64
            })
            .collect();
        Ok(median(&mut reps))
    }

    /// Per-rep Z estimate of a centered input.
    pub fn estimate_z_rep(&self, rep: usize, input: &CenteredInput) -> f64 {
        let mut z = vec![0.0; self.config.z_width];
        for (i, (x, &l)) in input.points.iter().zip(&input.weights).enumerate() {
            self.add_z(rep, i, x, l.powf(1.0 / self.config.p), &mut z);
        }
        self.z_hat(&z)
    }

    /// One instance's cells built directly from a centered input.
    pub fn instance_cells(&self, rep: usize, sample: usize, input: &CenteredInput, cells: &mut Vec<f64>) {
        let c = &self.config;
        cells.clear();
        cells.resize(c.instance_len(), 0.0);
        let mut block = Vec::with_capacity(c.alpha_width.max(c.beta_width));
        let keys = self.keys(rep, sample);
        for (i, (x, &l)) in input.points.iter().zip(&input.weights).enumerate() {
            self.add_instance(keys, i, x, l.powf(1.0 / c.p), cells, &mut block);
        }
    }

    /// Driver that materializes one instance at a time.
    pub fn estimate_direct(&self, input: &CenteredInput) -> Result<f64> {
        let c = &self.config;
        if input.dim() != c.dim {
            return Err(Error::LengthMismatch { expected: c.dim, found: input.dim() });
        }
        if input.is_zero() {
            return Ok(0.0);
        }
        let mut cells = Vec::with_capacity(c.instance_len());
        let mut reps: Vec<f64> = (0..c.reps)
            .map(|r| {
                let zhat = self.estimate_z_rep(r, input);
                if zhat == 0.0 {
                    return 0.0;
                }
                let total: f64 =
                    (0..c.samples).map(|l| self.triple_direct(r, l, input, &mut cells).clamped_ratio(c.p)).sum();
                zhat * total / c.samples as f64
            })
            .collect();
        Ok(median(&mut reps))
    }
}

/// Per-coordinate alpha estimates from alpha cells: median over rows of the
/// norm estimate of the block coordinate j hashes to.
pub fn alphas_from_cells(hash: &BucketHash, width: usize, cells: &[f64], d: usize, p: f64) -> Vec<f64> {
    let mut scratch = Vec::with_capacity(width);
    let mut per_row = vec![0.0; hash.rows];
    (0..d)
        .map(|j| {
            for (r, slot) in per_row.iter_mut().enumerate() {
                let off = (r * hash.buckets + hash.bucket(r, j)) * width;
                *slot = norm_from_entries(&cells[off..off + width], p, &mut scratch);
            }
            median(&mut per_row)
        })
        .collect()
}

/// alpha_1..alpha_d from a compressed table of per-coordinate sketches.
pub fn recover_alphas(table: &CountMinTable, d: usize, p: f64) -> Vec<f64> {
    alphas_from_cells(&table.hash, table.block_len, &table.cells, d, p)
}

/// Z estimate (the p-th power of the norm estimate) using repetition 0.
pub fn estimate_z(input: &CenteredInput, config: &MedianSketchConfig, seed: u64) -> Result<f64> {
    let sk = MedianSketch::new(config.clone().with_samples(1, 1), seed)?;
    Ok(sk.estimate_z_rep(0, input))
}

/// One instance of the main-lemma estimator.
pub fn estimate_triple(input: &CenteredInput, config: &MedianSketchConfig, seed: u64) -> Result<MedianCostTriple> {
    let sk = MedianSketch::new(config.clone().with_samples(1, 1), seed)?;
    if input.dim() != config.dim {
        return Err(Error::LengthMismatch { expected: config.dim, found: input.dim() });
    }
    let mut cells = Vec::new();
    sk.instance_cells(0, 0, input, &mut cells);
    Ok(sk.triple_from_cells(sk.keys(0, 0), &cells, &input.weights))
}

/// Estimate of `min_y sum_i lambda_i ||x_i - y||_p^p`.
pub fn estimate_median_cost(
    points: &[Vec<f64>],
    weights: &[f64],
    config: &MedianSketchConfig,
    seed: u64,
) -> Result<f64> {
    let input = center(points, weights)?;
    MedianSketch::new(config.clone(), seed)?.estimate_direct(&input)
}

/// Estimate of the unweighted cost `min_y sum_i ||x_i - y||_p^p`.
pub fn estimate_total_median_cost(points: &[Vec<f64>], config: &MedianSketchConfig, seed: u64) -> Result<f64> {
    let n = points.len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(n as f64 * estimate_median_cost(points, &uniform_weights(n), config, seed)?)
}

/// Cached `sum_h lambda_h^{1/p} S_h` column blocks for one weight vector.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedColumns {
    z: Vec<f64>,
    inst: Vec<f64>,
}

/// Mergeable linear state over a known weight vector, with centering folded
/// into every point's contribution.
#[derive(Clone, Debug)]
pub struct MedianCostState {
    pub sketch: MedianSketch,
    pub weights: Vec<f64>,
    pub acc: Vec<i128>,
    columns: Arc<WeightedColumns>,
}

impl MedianCostState {
    pub fn new(config: MedianSketchConfig, seed: u64, weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        let sketch = MedianSketch::new(config, seed)?;
        let len = sketch.config.state_len();
        let columns = Arc::new(sketch.weighted_columns(&weights));
        Ok(MedianCostState { sketch, weights, acc: vec![0; len], columns })
    }

    pub fn ingest(&mut self, slot: usize, x: &[f64]) -> Result<()> {
        if slot >= self.weights.len() {
            return Err(Error::IndexOutOfRange { index: slot, len: self.weights.len() });
        }
        if x.len() != self.sketch.config.dim {
            return Err(Error::LengthMismatch { expected: self.sketch.config.dim, found: x.len() });
        }
        let c = self.sketch.centered_contribution_with(&self.columns, slot, x, &self.weights);
        fixed::accumulate(&mut self.acc, &c);
        Ok(())
    }

    pub fn fingerprint(&self) -> u64 {
        let mut w: Vec<u64> = vec![self.sketch.config.fingerprint(), self.sketch.seed];
        w.extend(self.weights.iter().map(|l| l.to_bits()));
        hash_words(&w)
    }

    pub fn merge(&mut self, other: &MedianCostState) -> Result<()> {
        if self.fingerprint() != other.fingerprint() {
            return Err(Error::ConfigMismatch);
        }
        for (a, b) in self.acc.iter_mut().zip(&other.acc) {
            *a = a.wrapping_add(*b);
        }
        Ok(())
    }

    /// Same configuration and weights with a different accumulator.
    pub fn with_acc(&self, acc: Vec<i128>) -> Result<Self> {
        if acc.len() != self.acc.len() {
            return Err(Error::LengthMismatch { expected: self.acc.len(), found: acc.len() });
        }
        Ok(MedianCostState { acc, ..self.clone() })
    }

    pub fn state(&self) -> Vec<f64> {
        fixed::to_f64(&self.acc)
    }

    pub fn estimate(&self) -> Result<f64> {
        if self.acc.iter().all(|&a| a == 0) {
            return Ok(0.0);
        }
        self.sketch.estimate_from_state(&self.state(), &self.weights)
    }
}
