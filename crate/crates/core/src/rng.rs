//! Seeded randomness: chain stream derivation and the handful of standard
//! distributions the samplers and generators need.
//!
//! Everything is deterministic given a `u64` seed.  Chains and auxiliary
//! consumers (cohort generation, replicate simulation) get independent
//! ChaCha streams derived from the master seed, so adding a consumer never
//! perturbs another's draws.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Independent stream `stream` of the master seed.
///
/// Stream ids: chain `c` uses `c`; non-chain consumers use ids from
/// [`aux_stream`] with a high offset so they never collide with chains.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream.into());
    rng
}

/// Stream id for auxiliary consumer `k` (cohort generation, p-value
/// replicates, prior-predictive Monte Carlo, ...).
pub fn aux_stream(k: u64) -> u64 {
    1 << 32 | k
}

/// Uniform draw on the open interval (0, 1).
pub fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 && u < 1.0 {
            return u;
        }
    }
}

/// Standard normal via Box-Muller.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1 = uniform_open(rng);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Double-exponential (Laplace) draw with location 0 and rate `tau`,
/// by inverting the CDF.
pub fn laplace<R: Rng + ?Sized>(rng: &mut R, tau: f64) -> f64 {
    let u = uniform_open(rng) - 0.5;
    -u.signum() * (1.0 - 2.0 * u.abs()).ln() / tau
}

/// Gamma draw with the given shape and unit scale (Marsaglia-Tsang, with the
/// standard boost for shape < 1).
pub fn gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    assert!(shape > 0.0, "gamma shape must be positive");
    if shape < 1.0 {
        let g = gamma(rng, shape + 1.0);
        let u = uniform_open(rng);
        return g * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = standard_normal(rng);
        let v = (1.0 + c * x).powi(3);
        if v <= 0.0 {
            continue;
        }
        let u = uniform_open(rng);
        if u.ln() < 0.5 * x * x + d - d * v + d * v.ln() {
            return d * v;
        }
    }
}

/// Beta(a, b) draw via two gammas.
pub fn beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    let x = gamma(rng, a);
    let y = gamma(rng, b);
    x / (x + y)
}

/// Dirichlet draw with the given concentration vector.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let gs: Vec<f64> = alpha.iter().map(|&a| gamma(rng, a)).collect();
    let total: f64 = gs.iter().sum();
    gs.into_iter().map(|g| g / total).collect()
}

/// Log-sum-exp of a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Sample an index proportionally to `exp(log_weights)`.
pub fn categorical_from_log_weights<R: Rng + ?Sized>(rng: &mut R, log_weights: &[f64]) -> usize {
    let norm = log_sum_exp(log_weights);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, lw) in log_weights.iter().enumerate() {
        acc += (lw - norm).exp();
        if u < acc {
            return i;
        }
    }
    log_weights.len() - 1
}
