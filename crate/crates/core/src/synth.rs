//! Seeded synthetic instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal cloud around the origin.
pub fn gaussian_cloud(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut r)).collect()).collect()
}

/// `blobs` spherical Gaussian blobs with standard deviation `sigma`; blob b is
/// centered at `b * separation * sigma` along every axis. Points are dealt to
/// blobs round-robin.
pub fn gaussian_blobs(n: usize, d: usize, blobs: usize, separation: f64, sigma: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    let blobs = blobs.max(1);
    (0..n)
        .map(|i| {
            let c = (i % blobs) as f64 * separation * sigma;
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    c + sigma * z
                })
                .collect()
        })
        .collect()
}

/// Uniform points in `[lo, hi]^d`.
pub fn uniform_cube(n: usize, d: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| (0..d).map(|_| r.random_range(lo..hi)).collect()).collect()
}

/// Two-cluster stress set in `{0,1}^{2n}` from the indexing reduction: unit
/// vectors `e_i` for a random subset of the first `alpha n` axes, padded with
/// `e_i + e_j` points that share one queried axis i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardInstance {
    pub points: Vec<Vec<f64>>,
    pub query_axis: usize,
    /// Whether `e_query` is among the points.
    pub contains_query: bool,
}

pub fn indexing_instance(n: usize, alpha: f64, seed: u64) -> HardInstance {
    let mut r = rng(seed);
    let an = ((alpha * n as f64).floor() as usize).clamp(1, n);
    let bits: Vec<bool> = (0..an).map(|_| r.random_bool(0.5)).collect();
    let query_axis = r.random_range(0..an);
    let dim = 2 * n;
    let unit = |axes: &[usize]| {
        let mut v = vec![0.0; dim];
        for &a in axes {
            v[a] = 1.0;
        }
        v
    };
    let mut points: Vec<Vec<f64>> = (0..an).filter(|&i| bits[i]).map(|i| unit(&[i])).collect();
    let k = points.len();
    points.extend((an..an + n - k).map(|j| unit(&[query_axis, j])));
    HardInstance { points, query_axis, contains_query: bits[query_axis] }
}
