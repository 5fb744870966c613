//! Counter-addressed pseudorandomness and stable variates.
//!
//! Every random quantity used by the sketches is a pure function of a
//! [`SeedCtx`] and a pair of integer coordinates, so sketch matrices never
//! need to be stored.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp applied to every unit-interval input before it reaches a log or a
/// trigonometric singularity.
pub const UNIT_CLAMP: f64 = 1e-12;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const K_ROW: u64 = 0xd1b5_4a32_d192_ed03;
const K_COL: u64 = 0xaef1_7502_108e_f2d9;
const K_SECOND: u64 = 0x6a09_e667_f3bc_c909;

/// splitmix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a word sequence (config fingerprints, stream tags).
pub fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(GOLDEN, |h, &w| mix64(h ^ mix64(w.wrapping_add(K_COL))))
}

/// Address of an independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "SeedRepr", into = "SeedRepr")]
pub struct SeedCtx {
    pub master_seed: u64,
    pub stream_id: u64,
    key: u64,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
struct SeedRepr {
    master_seed: u64,
    stream_id: u64,
}

impl From<SeedRepr> for SeedCtx {
    fn from(r: SeedRepr) -> Self {
        SeedCtx::new(r.master_seed, r.stream_id)
    }
}

impl From<SeedCtx> for SeedRepr {
    fn from(c: SeedCtx) -> Self {
        SeedRepr { master_seed: c.master_seed, stream_id: c.stream_id }
    }
}

impl SeedCtx {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let key = mix64(mix64(master_seed.wrapping_add(GOLDEN)) ^ stream_id.wrapping_mul(K_SECOND));
        SeedCtx { master_seed, stream_id, key }
    }

    /// Child stream labelled by `tag`. Distinct tags give unrelated streams.
    pub fn derive(&self, tag: u64) -> Self {
        let id = mix64(self.stream_id ^ mix64(tag.wrapping_add(GOLDEN).wrapping_mul(K_ROW)));
        SeedCtx::new(self.master_seed, id)
    }

    pub fn derive_path(&self, tags: &[u64]) -> Self {
        tags.iter().fold(*self, |c, &t| c.derive(t))
    }

    /// Raw 64-bit words for cell (row, col).
    #[inline]
    pub fn words(&self, row: u64, col: u64) -> (u64, u64) {
        let h = mix64(self.key ^ row.wrapping_mul(K_ROW));
        let h = mix64(h ^ col.wrapping_mul(K_COL).wrapping_add(GOLDEN));
        (mix64(h ^ K_SECOND), mix64(h.wrapping_add(K_ROW)))
    }

    #[inline]
    pub fn word(&self, row: u64, col: u64) -> u64 {
        self.words(row, col).0
    }
}

#[inline]
fn to_unit(w: u64) -> f64 {
    let u = ((w >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    u.clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP)
}

/// The (theta source, r source) uniform pair for matrix cell (row, col).
#[inline]
pub fn prf_unit(ctx: &SeedCtx, row: u64, col: u64) -> (f64, f64) {
    let (a, b) = ctx.words(row, col);
    (to_unit(a), to_unit(b))
}

/// Exponent of a p-stable law, with the closed-form branches tagged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    p: f64,
}

impl StableParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 2.0) {
            return Err(Error::Domain(format!("stable exponent p = {p} not in (0, 2]")));
        }
        Ok(StableParams { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// The magnitude map of the Chambers-Mallows-Stuck construction for
/// p in (0, 1): `sin(p t) / cos(t)^(1/p) * (cos(t (1-p)) / ln(1/r))^((1-p)/p)`.
pub fn cms_map(p: f64, r: f64, theta: f64) -> f64 {
    let w = -r.ln();
    (p * theta).sin() / theta.cos().powf(1.0 / p)
        * ((theta * (1.0 - p)).cos() / w).powf((1.0 - p) / p)
}

/// A standard p-stable variate (characteristic function `exp(-|t|^p)`).
#[inline]
pub fn sample_p_stable(params: StableParams, theta_src: f64, r_src: f64) -> f64 {
    let ts = theta_src.clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP);
    let rs = r_src.clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP);
    let p = params.p;
    if p == 1.0 {
        ((ts - 0.5) * PI).tan()
    } else if p == 2.0 {
        // Box-Muller, scaled to variance 2.
        2.0 * (-rs.ln()).sqrt() * (2.0 * PI * ts).cos()
    } else {
        let theta = (ts - 0.5) * PI;
        let w = -rs.ln();
        let log_mag = ((theta * (1.0 - p)).cos().ln() - w.ln()) * ((1.0 - p) / p) - theta.cos().ln() / p;
        (p * theta).sin() * log_mag.exp()
    }
}

/// p-stable variate for cell (row, col) of the implicit matrix addressed by `ctx`.
#[inline]
pub fn stable_entry(params: StableParams, ctx: &SeedCtx, row: u64, col: u64) -> f64 {
    let (t, r) = prf_unit(ctx, row, col);
    sample_p_stable(params, t, r)
}

/// Exp(1) variate by inversion.
#[inline]
pub fn sample_exponential(u: f64) -> f64 {
    -(u.clamp(UNIT_CLAMP, 1.0 - UNIT_CLAMP)).ln()
}

/// Third quartile of the standard normal.
const NORMAL_Q3: f64 = 0.674_489_750_196_081_7;

/// The value m with `P(|X| < m) = 1/2` for X standard p-stable.
///
/// p = 1 and p = 2 are closed form. Other exponents integrate the
/// conditional probability over the angle of the CMS representation (the
/// radial part is exponential, so it integrates in closed form) and bisect.
pub fn median_abs_stable(params: StableParams) -> f64 {
    let p = params.p;
    if p == 1.0 {
        return 1.0;
    }
    if p == 2.0 {
        return std::f64::consts::SQRT_2 * NORMAL_Q3;
    }
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&p.to_bits()) {
        return *v;
    }
    let v = median_abs_by_quadrature(p);
    cache.lock().unwrap().insert(p.to_bits(), v);
    v
}

/// P(|X| < m) for the CMS representation, by midpoint quadrature in theta.
pub fn abs_stable_cdf(p: f64, m: f64) -> f64 {
    const N: usize = 20_000;
    let q = p / (1.0 - p);
    let h = (PI / 2.0) / N as f64;
    let mut acc = 0.0;
    for i in 0..N {
        let th = (i as f64 + 0.5) * h;
        let a = (p * th).sin() / th.cos().powf(1.0 / p);
        let b = (th * (1.0 - p)).cos();
        let t = b * (a / m).powf(q);
        let f = if p < 1.0 { (-t).exp() } else { -(-t).exp_m1() };
        acc += f;
    }
    acc * h * 2.0 / PI
}

fn median_abs_by_quadrature(p: f64) -> f64 {
    if (p - 1.0).abs() < 1e-9 {
        return 1.0;
    }
    // Bisect in log space; the CDF is increasing in m.
    let (mut lo, mut hi) = (-30.0_f64, 30.0_f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if abs_stable_cdf(p, mid.exp()) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}
