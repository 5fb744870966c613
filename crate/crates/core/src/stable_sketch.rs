//! Indyk-style linear l_p sketches: norm, shifted-norm, and grid-minimized
//! center estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{hash_words, median_abs_stable, stable_entry, SeedCtx, StableParams};

pub const MIN_WIDTH: usize = 8;
pub const MAX_EPS: f64 = 0.9;

/// The implicit `width x columns` matrix of i.i.d. p-stable entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSketchConfig {
    pub p: f64,
    pub width: usize,
    pub columns: usize,
    pub seed: SeedCtx,
}

impl LpSketchConfig {
    /// Widths below [`MIN_WIDTH`] are raised to it.
    pub fn new(p: f64, width: usize, columns: usize, seed: SeedCtx) -> Result<Self> {
        StableParams::new(p)?;
        Ok(LpSketchConfig { p, width: width.max(MIN_WIDTH), columns, seed })
    }

    pub fn params(&self) -> StableParams {
        StableParams::new(self.p).expect("validated at construction")
    }

    pub fn config_id(&self) -> u64 {
        hash_words(&[
            self.p.to_bits(),
            self.width as u64,
            self.columns as u64,
            self.seed.master_seed,
            self.seed.stream_id,
        ])
    }

    #[inline]
    pub fn entry(&self, row: usize, col: usize) -> f64 {
        stable_entry(self.params(), &self.seed, row as u64, col as u64)
    }

    /// `S (lambda^{1/p} o 1)`: the sketch of the all-ones vector, weighted.
    pub fn ones_image(&self, weights: &Weights) -> Result<SketchVector> {
        let vals: Vec<(usize, f64)> = (0..self.columns).map(|i| (i, 1.0)).collect();
        apply_sketch(self, &vals, weights)
    }
}

/// Per-column weights lambda_i; `Uniform` means lambda_i = 1.
#[derive(Clone, Debug, PartialEq)]
pub enum Weights<'a> {
    Uniform,
    Given(&'a [f64]),
}

impl Weights<'_> {
    fn scale(&self, p: f64, i: usize) -> Result<f64> {
        match self {
            Weights::Uniform => Ok(1.0),
            Weights::Given(w) => {
                let l = *w.get(i).ok_or(Error::IndexOutOfRange { index: i, len: w.len() })?;
                if !(l >= 0.0) {
                    return Err(Error::Domain(format!("negative weight {l}")));
                }
                Ok(l.powf(1.0 / p))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchVector {
    pub config_id: u64,
    pub p: f64,
    pub entries: Vec<f64>,
}

impl SketchVector {
    pub fn zeros(config: &LpSketchConfig) -> Self {
        SketchVector { config_id: config.config_id(), p: config.p, entries: vec![0.0; config.width] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One streaming update: column `index` gains `value` with weight scale
    /// already folded in.
    pub fn update(&mut self, config: &LpSketchConfig, index: usize, scaled_value: f64) -> Result<()> {
        if index >= config.columns {
            return Err(Error::IndexOutOfRange { index, len: config.columns });
        }
        if self.config_id != config.config_id() {
            return Err(Error::ConfigMismatch);
        }
        if scaled_value == 0.0 {
            return Ok(());
        }
        for (k, e) in self.entries.iter_mut().enumerate() {
            *e += config.entry(k, index) * scaled_value;
        }
        Ok(())
    }

    pub fn add(&mut self, other: &SketchVector) -> Result<()> {
        if self.config_id != other.config_id || self.entries.len() != other.entries.len() {
            return Err(Error::ConfigMismatch);
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a += b;
        }
        Ok(())
    }

    pub fn sub(&mut self, other: &SketchVector) -> Result<()> {
        if self.config_id != other.config_id || self.entries.len() != other.entries.len() {
            return Err(Error::ConfigMismatch);
        }
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            *a -= b;
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> SketchVector {
        SketchVector {
            config_id: self.config_id,
            p: self.p,
            entries: self.entries.iter().map(|e| e * c).collect(),
        }
    }

    /// Adds `err * chi` for an independent standard p-stable vector chi.
    pub fn inject_noise(&mut self, err: f64, ctx: &SeedCtx) -> Result<()> {
        let params = StableParams::new(self.p)?;
        for (k, e) in self.entries.iter_mut().enumerate() {
            *e += err * stable_entry(params, ctx, k as u64, 0);
        }
        Ok(())
    }
}

/// `S (lambda^{1/p} o x)` for a sparse list of coordinates, folded left to
/// right in the given order.
pub fn apply_sketch(
    config: &LpSketchConfig,
    values: &[(usize, f64)],
    weights: &Weights,
) -> Result<SketchVector> {
    let mut sk = SketchVector::zeros(config);
    for &(i, v) in values {
        let scale = weights.scale(config.p, i)?;
        sk.update(config, i, scale * v)?;
    }
    Ok(sk)
}

/// Median of |v| (upper median for even lengths). `scratch` is reused.
pub fn median_abs(values: &[f64], scratch: &mut Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    scratch.clear();
    scratch.extend(values.iter().map(|v| v.abs()));
    let mid = scratch.len() / 2;
    let (_, m, _) = scratch.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    *m
}

/// Median estimator on raw sketch entries.
pub fn norm_from_entries(entries: &[f64], p: f64, scratch: &mut Vec<f64>) -> f64 {
    let params = StableParams::new(p).expect("valid p");
    median_abs(entries, scratch) / median_abs_stable(params)
}

pub fn estimate_norm(sk: &SketchVector) -> f64 {
    norm_from_entries(&sk.entries, sk.p, &mut Vec::with_capacity(sk.len()))
}

/// Norm estimate of `a - y b`, reusing `scratch`.
pub fn shifted_from_entries(a: &[f64], b: &[f64], y: f64, p: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend(a.iter().zip(b).map(|(ai, bi)| (ai - y * bi).abs()));
    let mid = scratch.len() / 2;
    let (_, m, _) = scratch.select_nth_unstable_by(mid, |x, z| x.total_cmp(z));
    *m / median_abs_stable(StableParams::new(p).expect("valid p"))
}

pub fn estimate_shifted_norm(
    sk: &SketchVector,
    config: &LpSketchConfig,
    weights: &Weights,
    y: f64,
) -> Result<f64> {
    if sk.config_id != config.config_id() {
        return Err(Error::ConfigMismatch);
    }
    let ones = config.ones_image(weights)?;
    Ok(shifted_from_entries(&sk.entries, &ones.entries, y, sk.p, &mut Vec::new()))
}

/// Number of grid candidates, both endpoints included.
pub fn grid_size(eps: f64, p: f64) -> usize {
    let eps = eps.min(MAX_EPS);
    (16.0 * 2f64.powf(p) / eps).ceil() as usize
}

/// Evenly spaced candidates over `[-4 gamma, 4 gamma]`.
pub fn grid_candidates(gamma: f64, eps: f64, p: f64) -> Vec<f64> {
    if gamma == 0.0 {
        return vec![0.0];
    }
    let t = grid_size(eps, p).max(2);
    let step = 8.0 * gamma / (t - 1) as f64;
    (0..t).map(|l| if l + 1 == t { 4.0 * gamma } else { -4.0 * gamma + l as f64 * step }).collect()
}

/// Minimum over the grid of the shifted-norm estimate of `a - y b`.
pub fn grid_min_from_entries(
    a: &[f64],
    b: &[f64],
    gamma: f64,
    eps: f64,
    p: f64,
    scratch: &mut Vec<f64>,
) -> f64 {
    let scale = median_abs_stable(StableParams::new(p).expect("valid p"));
    let mid = a.len() / 2;
    let mut best = f64::INFINITY;
    for y in grid_candidates(gamma, eps, p) {
        // The median beats `best` only if more than half the entries do.
        if best.is_finite() && a.iter().zip(b).filter(|(ai, bi)| (*ai - y * *bi).abs() < best).count() <= mid {
            continue;
        }
        scratch.clear();
        scratch.extend(a.iter().zip(b).map(|(ai, bi)| (ai - y * bi).abs()));
        let (_, m, _) = scratch.select_nth_unstable_by(mid, |x, z| x.total_cmp(z));
        if *m < best {
            best = *m;
        }
    }
    best / scale
}

pub fn minimize_center(
    sk: &SketchVector,
    config: &LpSketchConfig,
    weights: &Weights,
    gamma: f64,
    eps: f64,
) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::NegativeGamma(gamma));
    }
    if sk.config_id != config.config_id() {
        return Err(Error::ConfigMismatch);
    }
    let ones = config.ones_image(weights)?;
    Ok(grid_min_from_entries(&sk.entries, &ones.entries, gamma, eps, sk.p, &mut Vec::new()))
}
