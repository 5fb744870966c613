//! Brute-force ground truth at desk scale.

use crate::error::{Error, Result};
use crate::partition::{members, min_partition_cost, PARTITION_CAP};

pub const MAX_POINTS: usize = 200;
pub const MAX_DIM: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct ExactInstance {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub p: f64,
    /// Per coordinate, (value, weight) sorted by value.
    sorted: Vec<Vec<(f64, f64)>>,
}

impl ExactInstance {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>, p: f64) -> Result<Self> {
        if !(1.0..=2.0).contains(&p) {
            return Err(Error::Domain(format!("oracle needs p in [1, 2], got {p}")));
        }
        if points.len() != weights.len() {
            return Err(Error::LengthMismatch { expected: points.len(), found: weights.len() });
        }
        let d = points.first().map_or(0, |x| x.len());
        if points.len() > MAX_POINTS || d > MAX_DIM {
            return Err(Error::TooLarge(format!("n = {}, d = {d}", points.len())));
        }
        if let Some(x) = points.iter().find(|x| x.len() != d) {
            return Err(Error::LengthMismatch { expected: d, found: x.len() });
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Domain("weights must be nonnegative".into()));
        }
        let sorted = (0..d)
            .map(|j| {
                let mut col: Vec<(f64, f64)> = points.iter().zip(&weights).map(|(x, &w)| (x[j], w)).collect();
                col.sort_by(|a, b| a.0.total_cmp(&b.0));
                col
            })
            .collect();
        Ok(ExactInstance { points, weights, p, sorted })
    }

    /// Unit weights.
    pub fn unweighted(points: Vec<Vec<f64>>, p: f64) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0; n], p)
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.sorted.len()
    }

    /// Minimizer and minimum of `sum_i w_i |x_ij - c|^p` over c.
    pub fn coordinate_optimum(&self, j: usize) -> (f64, f64) {
        min_cost_1d(&self.sorted[j], self.p)
    }

    fn subset(&self, mask: u32) -> ExactInstance {
        let idx: Vec<usize> = members(mask).collect();
        ExactInstance::new(
            idx.iter().map(|&i| self.points[i].clone()).collect(),
            idx.iter().map(|&i| self.weights[i]).collect(),
            self.p,
        )
        .expect("subset of a valid instance")
    }
}

/// `sum_i w_i |v_i - c|^p`.
pub fn cost_1d(col: &[(f64, f64)], c: f64, p: f64) -> f64 {
    col.iter().map(|&(v, w)| w * (v - c).abs().powf(p)).sum()
}

/// Exact 1-d weighted l_p^p center of a value-sorted column.
pub fn min_cost_1d(col: &[(f64, f64)], p: f64) -> (f64, f64) {
    if col.is_empty() {
        return (0.0, 0.0);
    }
    let total: f64 = col.iter().map(|c| c.1).sum();
    if total <= 0.0 {
        return (col[0].0, 0.0);
    }
    let c = if p == 1.0 {
        let mut acc = 0.0;
        let mut med = col[col.len() - 1].0;
        for &(v, w) in col {
            acc += w;
            if acc >= total / 2.0 {
                med = v;
                break;
            }
        }
        med
    } else if p == 2.0 {
        col.iter().map(|&(v, w)| v * w).sum::<f64>() / total
    } else {
        golden_section(|c| cost_1d(col, c, p), col[0].0, col[col.len() - 1].0, 1e-10)
    };
    (c, cost_1d(col, c, p))
}

/// Minimizer of a unimodal function on [lo, hi] to the given bracket width.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
        if hi - lo <= tol.max(f64::EPSILON * hi.abs().max(lo.abs())) {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    [lo, mid, hi].into_iter().min_by(|x, y| f(*x).total_cmp(&f(*y))).unwrap()
}

/// `sum_j min_c sum_i w_i |x_ij - c|^p`.
pub fn exact_median_cost(inst: &ExactInstance) -> f64 {
    (0..inst.dim()).map(|j| inst.coordinate_optimum(j).1).sum()
}

/// Minimum over partitions into at most k blocks of the summed block costs.
pub fn exact_k_cost(inst: &ExactInstance, k: usize) -> Result<f64> {
    let n = inst.n();
    if n > PARTITION_CAP {
        return Err(Error::TooLarge(format!("exact k-cost enumerates partitions only for n <= {PARTITION_CAP}, got {n}")));
    }
    if k == 0 {
        return Err(Error::KOutOfRange { k, size: n });
    }
    if k >= n {
        return Ok(0.0);
    }
    Ok(min_partition_cost(n, k, |mask| exact_median_cost(&inst.subset(mask))).best)
}

/// `min_{z in P} sum_i w_i ||x_i - z||_p^p` by the double loop.
pub fn exact_medoid_cost(inst: &ExactInstance) -> f64 {
    let p = inst.p;
    if inst.n() == 0 {
        return 0.0;
    }
    inst.points
        .iter()
        .map(|z| {
            inst.points
                .iter()
                .zip(&inst.weights)
                .map(|(x, w)| w * x.iter().zip(z).map(|(a, b)| (a - b).abs().powf(p)).sum::<f64>())
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// `Pr[j] = sum_i w_i |x_ij|^p / Z` on the given (uncentered) coordinates.
pub fn exact_sampling_dist(inst: &ExactInstance) -> Vec<f64> {
    let masses = coordinate_masses(inst);
    let z: f64 = masses.iter().sum();
    if z == 0.0 {
        return vec![0.0; masses.len()];
    }
    masses.iter().map(|m| m / z).collect()
}

pub fn coordinate_masses(inst: &ExactInstance) -> Vec<f64> {
    (0..inst.dim()).map(|j| inst.sorted[j].iter().map(|&(v, w)| w * v.abs().powf(inst.p)).sum()).collect()
}

/// Weights normalized to sum to 1 and points moved to weighted mean zero.
pub fn exactly_centered(inst: &ExactInstance) -> ExactInstance {
    let total: f64 = inst.weights.iter().sum();
    let lambda: Vec<f64> = inst.weights.iter().map(|w| w / total).collect();
    let d = inst.dim();
    let mean: Vec<f64> = (0..d).map(|j| inst.points.iter().zip(&lambda).map(|(x, l)| l * x[j]).sum()).collect();
    let pts = inst.points.iter().map(|x| x.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
    ExactInstance::new(pts, lambda, inst.p).expect("valid")
}

/// Per-coordinate ratio `min_c cost_j(c) / cost_j(0)` after exact centering
/// (`None` for coordinates with zero mass).
pub fn coordinate_ratios(inst: &ExactInstance) -> Vec<Option<f64>> {
    let c = exactly_centered(inst);
    let masses = coordinate_masses(&c);
    (0..c.dim())
        .map(|j| if masses[j] > 0.0 { Some(c.coordinate_optimum(j).1 / masses[j]) } else { None })
        .collect()
}

/// Every coordinate ratio lies in `[2^-p, 1]` up to roundoff.
pub fn verify_ratio_bounds(inst: &ExactInstance) -> bool {
    let lo = 2f64.powf(-inst.p);
    coordinate_ratios(inst).into_iter().flatten().all(|r| r >= lo - 1e-9 && r <= 1.0 + 1e-9)
}
