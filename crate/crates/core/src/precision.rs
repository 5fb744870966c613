//! Precision sampling: exponential scalings, scaled argmax, and the event-E check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{prf_unit, sample_exponential, SeedCtx};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialScaling {
    pub u: Vec<f64>,
}

impl ExponentialScaling {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// `u_j^{-1/p}`, the factor turning x into y.
    #[inline]
    pub fn inv_root(&self, j: usize, p: f64) -> f64 {
        self.u[j].powf(-1.0 / p)
    }

    /// `u_j^{1/p}`, the factor turning y back into x.
    #[inline]
    pub fn root(&self, j: usize, p: f64) -> f64 {
        self.u[j].powf(1.0 / p)
    }
}

/// d independent Exp(1) draws from `seed` (row 0, column j).
pub fn draw_scaling(d: usize, seed: &SeedCtx) -> ExponentialScaling {
    ExponentialScaling { u: (0..d).map(|j| sample_exponential(prf_unit(seed, 0, j as u64).0)).collect() }
}

/// Index maximizing `masses_j / u_j`; ties go to the smallest index.
pub fn argmax_scaled(masses: &[f64], scaling: &ExponentialScaling) -> Result<usize> {
    if masses.len() != scaling.len() {
        return Err(Error::LengthMismatch { expected: scaling.len(), found: masses.len() });
    }
    if !masses.iter().any(|&m| m > 0.0) {
        return Err(Error::AllZeroMasses);
    }
    Ok(argmax(masses.iter().zip(&scaling.u).map(|(m, u)| m / u)))
}

pub(crate) fn argmax(it: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, v) in it.enumerate() {
        if v > best.1 {
            best = (j, v);
        }
    }
    best.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventEReport {
    pub w: Vec<f64>,
    pub j_star: usize,
    /// Runner-up; `None` when d = 1.
    pub j_star2: Option<usize>,
    pub eta: f64,
    pub cond_mass: bool,
    pub cond_gap: bool,
}

impl EventEReport {
    pub fn holds(&self) -> bool {
        self.cond_mass && self.cond_gap
    }
}

/// `eps * delta * 2^-p / 1000`.
pub fn event_eta(eps: f64, delta: f64, p: f64) -> f64 {
    eps * delta * 2f64.powf(-p) / 1000.0
}

pub fn check_event_e(
    masses: &[f64],
    scaling: &ExponentialScaling,
    eps: f64,
    delta: f64,
    p: f64,
) -> Result<EventEReport> {
    if masses.len() != scaling.len() {
        return Err(Error::LengthMismatch { expected: scaling.len(), found: masses.len() });
    }
    let w: Vec<f64> = masses.iter().zip(&scaling.u).map(|(m, u)| m / u).collect();
    let j_star = argmax(w.iter().copied());
    let j_star2 = if w.len() > 1 {
        Some(argmax(w.iter().enumerate().map(|(j, &v)| if j == j_star { f64::NEG_INFINITY } else { v })))
    } else {
        None
    };
    let eta = event_eta(eps, delta, p);
    let total: f64 = w.iter().sum();
    let top = w[j_star];
    let second = j_star2.map_or(0.0, |j| w[j]);
    Ok(EventEReport {
        cond_mass: top >= eta * total,
        cond_gap: top >= (1.0 + eta) * second,
        w,
        j_star,
        j_star2,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_value() {
        assert!((event_eta(0.5, 0.5, 1.0) - 0.000125).abs() < 1e-18);
    }

    #[test]
    fn redraw_is_identical() {
        let s = SeedCtx::new(3, 4);
        assert_eq!(draw_scaling(10, &s), draw_scaling(10, &s));
        let one = draw_scaling(1, &s);
        assert!(one.u[0] > 0.0);
    }

    #[test]
    fn single_and_zero_masses() {
        let s = draw_scaling(1, &SeedCtx::new(1, 1));
        assert_eq!(argmax_scaled(&[0.3], &s).unwrap(), 0);
        let s4 = draw_scaling(4, &SeedCtx::new(1, 1));
        assert_eq!(argmax_scaled(&[0.0; 4], &s4), Err(Error::AllZeroMasses));
    }

    #[test]
    fn dominant_mass_satisfies_event() {
        for seed in 0..50 {
            let s = draw_scaling(2, &SeedCtx::new(seed, 0));
            let r = check_event_e(&[1.0, 0.0], &s, 0.5, 0.5, 1.0).unwrap();
            assert!(r.cond_mass && r.cond_gap);
            assert_eq!(r.j_star, 0);
            assert_eq!(r.j_star2, Some(1));
        }
    }
}
