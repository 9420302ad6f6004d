//! The bridge random-effect distribution and the marginalized logit link.
//!
//! A logistic regression with a bridge-distributed random intercept keeps a
//! logistic marginal: integrating the random effect out of
//! `logistic(b + eta)` yields `logistic(phi * eta)`, so conditional
//! regression effects attenuate by the factor `phi` and both scales keep an
//! odds-ratio interpretation.  Density, distribution function, quantile and
//! moments all have closed forms, which this module implements directly.

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::float::Real;

/// Lower bound of the admissible `phi` range.
pub const PHI_MIN: f64 = 1e-6;
/// Upper bound of the admissible `phi` range.
pub const PHI_MAX: f64 = 1.0 - 1e-6;

/// Heterogeneity/attenuation parameter of the bridge distribution.
///
/// `phi` close to 1 means a degenerate random effect (no heterogeneity);
/// `phi` close to 0 means the random effect dominates.  The degenerate
/// limits are excluded: construction requires `phi` in `[1e-6, 1 - 1e-6]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeParam<T> {
    phi: T,
}

impl<T: Real> BridgeParam<T> {
    pub fn new(phi: T) -> Result<Self> {
        let lo = T::of(PHI_MIN);
        let hi = T::of(PHI_MAX);
        if !(phi >= lo && phi <= hi) {
            return Err(Error::PhiOutOfRange {
                value: phi.to_f64().unwrap_or(f64::NAN),
                lo: PHI_MIN,
                hi: PHI_MAX,
            });
        }
        Ok(BridgeParam { phi })
    }

    pub fn phi(&self) -> T {
        self.phi
    }

    /// Variance of the bridge distribution: `pi^2 (phi^-2 - 1) / 3`.
    pub fn variance(&self) -> T {
        let pi2 = T::PI() * T::PI();
        let inv = self.phi.recip();
        pi2 * (inv * inv - T::one()) / T::of(3.0)
    }

    /// Density `sin(phi pi) / (2 pi (cosh(phi b) + cos(phi pi)))`.
    pub fn pdf(&self, b: T) -> T {
        let x = self.phi * b;
        if x.abs() > T::of(30.0) {
            self.log_pdf(b).exp()
        } else {
            let s = (self.phi * T::PI()).sin();
            let c = (self.phi * T::PI()).cos();
            s / (T::of(2.0) * T::PI() * (x.cosh() + c))
        }
    }

    /// Log density, stable for arbitrarily large `|b|` where `cosh` overflows.
    pub fn log_pdf(&self, b: T) -> T {
        let s = (self.phi * T::PI()).sin();
        let c = (self.phi * T::PI()).cos();
        let x = (self.phi * b).abs();
        // log(cosh x + c) = x - log 2 + log1p(exp(-2x) + 2 c exp(-x))
        let log_cosh_plus_c = if x > T::of(30.0) {
            x - T::of(2.0).ln()
        } else {
            x - T::of(2.0).ln() + ((-T::of(2.0) * x).exp() + T::of(2.0) * c * (-x).exp()).ln_1p()
        };
        s.ln() - (T::of(2.0) * T::PI()).ln() - log_cosh_plus_c
    }

    /// Distribution function, via the closed-form antiderivative
    /// `1 - 1/(2 phi) + atan((exp(phi b) + cos(phi pi)) / sin(phi pi)) / (pi phi)`.
    pub fn cdf(&self, b: T) -> T {
        if b > T::zero() {
            // evaluate in the lower tail where exp(phi b) cannot overflow
            return T::one() - self.cdf(-b);
        }
        let s = (self.phi * T::PI()).sin();
        let c = (self.phi * T::PI()).cos();
        let inv = (self.phi * T::of(2.0)).recip();
        let t = ((self.phi * b).exp() + c) / s;
        let v = T::one() - inv + t.atan() / (T::PI() * self.phi);
        v.max(T::zero()).min(T::one())
    }

    /// Quantile function `(1/phi) log(sin(pi phi u) / sin(pi phi (1 - u)))`
    /// for `u` in the open unit interval.
    pub fn quantile(&self, u: T) -> T {
        let a = (T::PI() * self.phi * u).sin();
        let b = (T::PI() * self.phi * (T::one() - u)).sin();
        (a / b).ln() / self.phi
    }

    /// One exact inverse-CDF draw.
    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        // u = 0 or 1 would map to the infinite tails; the open interval is
        // enforced by resampling the (measure-zero) endpoints.
        loop {
            let u = T::of(rng.random::<f64>());
            if u > T::zero() && u < T::one() {
                return self.quantile(u);
            }
        }
    }

    /// `n` i.i.d. inverse-CDF draws; deterministic given the RNG state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<T>> {
        if n == 0 {
            return Err(Error::EmptySample);
        }
        Ok((0..n).map(|_| self.sample_one(rng)).collect())
    }
}

/// Overflow-safe logistic function `exp(x) / (1 + exp(x))`.
pub fn logistic<T: Real>(x: T) -> T {
    if x >= T::zero() {
        (T::one() + (-x).exp()).recip()
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(x))` without overflow.
pub fn log1p_exp<T: Real>(x: T) -> T {
    if x > T::of(33.0) {
        x
    } else if x < T::of(-33.0) {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(logistic(x))`.
pub fn log_logistic<T: Real>(x: T) -> T {
    -log1p_exp(-x)
}

/// Marginal success probability `E_B[logistic(B + eta)] = logistic(phi * eta)`
/// under a bridge random intercept.
pub fn marginalize_logit<T: Real>(eta: T, phi: &BridgeParam<T>) -> T {
    logistic(phi.phi() * eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn bp(phi: f64) -> BridgeParam<f64> {
        BridgeParam::new(phi).unwrap()
    }

    #[test]
    fn rejects_boundary_phi() {
        assert!(BridgeParam::new(0.0).is_err());
        assert!(BridgeParam::new(1.0).is_err());
        assert!(BridgeParam::new(-0.2).is_err());
        assert!(BridgeParam::new(f64::NAN).is_err());
        assert!(BridgeParam::new(0.5f32).is_ok());
    }

    #[test]
    fn pdf_at_zero_phi_half() {
        // sin(pi/2) = 1, cosh 0 = 1, cos(pi/2) = 0
        let f = bp(0.5).pdf(0.0);
        assert!((f - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn pdf_is_symmetric() {
        let d = bp(0.37);
        for b in [0.1, 0.9, 3.4, 17.0] {
            assert_eq!(d.pdf(b), d.pdf(-b));
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        let d = bp(0.7);
        let half = 60.0 / 0.7;
        let mass = integrate(|b| d.pdf(b), -half, half, 1e-10);
        assert!((mass - 1.0).abs() < 1e-8, "mass = {mass}");
    }

    #[test]
    fn log_pdf_matches_pdf_and_is_finite_in_far_tail() {
        let d = bp(0.6);
        for b in [0.0, 1.0, -4.0, 40.0, 1e4, -1e6] {
            let lp = d.log_pdf(b);
            assert!(lp.is_finite());
            if b.abs() < 500.0 {
                assert!((lp.exp() - d.pdf(b)).abs() <= 5e-14 * d.pdf(b));
            }
        }
    }

    #[test]
    fn variance_closed_form() {
        // phi = 0.5 gives pi^2 (4 - 1) / 3 = pi^2
        assert!((bp(0.5).variance() - std::f64::consts::PI.powi(2)).abs() < 1e-12);
        // phi -> 1 limit collapses to zero
        assert!(bp(PHI_MAX).variance() < 1e-5);
        // inverting the law at variance 2 (the density-overlay setup)
        let phi_var2 = (1.0 + 6.0 / std::f64::consts::PI.powi(2)).powf(-0.5);
        assert!((bp(phi_var2).variance() - 2.0).abs() < 1e-12);
        assert!((phi_var2 - 0.7886182484214371).abs() < 1e-12);
    }

    #[test]
    fn cdf_basics() {
        for phi in [0.2, 0.5, 0.9] {
            let d = bp(phi);
            assert!((d.cdf(0.0) - 0.5).abs() < 1e-12);
            assert!((d.cdf(1e3) - 1.0).abs() < 1e-10);
            assert!(d.cdf(-1e3) < 1e-10);
        }
    }

    #[test]
    fn cdf_matches_quadrature() {
        let d = bp(0.5);
        let lo = -60.0 / 0.5;
        let q = integrate(|x| d.pdf(x), lo, 1.0, 1e-10);
        assert!((d.cdf(1.0) - q).abs() < 1e-8, "cdf {} quad {}", d.cdf(1.0), q);
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let d = bp(0.7);
        let a = d.sample(&mut ChaCha20Rng::seed_from_u64(9), 1).unwrap();
        let b = d.sample(&mut ChaCha20Rng::seed_from_u64(9), 1).unwrap();
        assert_eq!(a, b);
        assert!(d.sample(&mut ChaCha20Rng::seed_from_u64(9), 0).is_err());
    }

    #[test]
    fn sample_moments_match_closed_form() {
        let d = bp(0.7);
        let n = 200_000;
        let xs = d.sample(&mut ChaCha20Rng::seed_from_u64(42), n).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma = d.variance().sqrt();
        assert!(mean.abs() < 3.0 * sigma / (n as f64).sqrt(), "mean {mean}");
        assert!((var / d.variance() - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn marginalize_logit_examples() {
        // eta = 0 is exactly 1/2 for any phi
        assert_eq!(marginalize_logit(0.0, &bp(0.3)), 0.5);
        // phi -> 1: a unit covariate shift moves 0.5 to ~0.73
        let p = marginalize_logit(1.0, &bp(PHI_MAX));
        assert!((p - 0.7310585786300049).abs() < 1e-6);
        // overflow safety far in both tails
        assert_eq!(marginalize_logit(1e3, &bp(0.9)), 1.0);
        assert!(marginalize_logit(-1e3, &bp(0.9)) >= 0.0);
    }

    #[test]
    fn marginalize_logit_matches_quadrature_mixture() {
        let phi = bp(0.8);
        let eta = 2.0;
        let half = 60.0 / 0.8;
        let mix = integrate(|b| logistic(b + eta) * phi.pdf(b), -half, half, 1e-12);
        assert!((marginalize_logit(eta, &phi) - mix).abs() < 1e-6);
    }

    #[test]
    fn marginalize_logit_matches_monte_carlo_mixture() {
        // the same identity through the sampler: the Monte Carlo average of
        // conditional probabilities over bridge draws
        let phi = bp(0.8);
        let eta = 2.0;
        let mut rng = ChaCha20Rng::seed_from_u64(88);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += logistic(phi.sample_one(&mut rng) + eta);
        }
        let mc = acc / n as f64;
        assert!((marginalize_logit(eta, &phi) - mc).abs() < 3e-3, "mc {mc}");
    }

    proptest! {
        #[test]
        fn cdf_quantile_round_trip(phi in 0.05f64..0.95, u in 0.001f64..0.999) {
            let d = bp(phi);
            let b = d.quantile(u);
            prop_assert!((d.cdf(b) - u).abs() < 1e-10);
        }

        #[test]
        fn cdf_monotone_and_symmetric(phi in 0.05f64..0.95, b in -30.0f64..30.0) {
            let d = bp(phi);
            prop_assert!(d.cdf(b + 0.5) >= d.cdf(b));
            prop_assert!((d.cdf(-b) - (1.0 - d.cdf(b))).abs() < 1e-12);
        }
    }
}
