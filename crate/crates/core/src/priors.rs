//! Prior specifications: double-exponential regression priors, the Beta
//! heterogeneity prior, Dirichlet change-point weights, the eight named
//! model configurations, and prior-predictive calibration checks.

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::model::{design_vectors, linear_predictor, ChargeRecord, DesignConfig};
use crate::rng::{beta as beta_draw, laplace};
use crate::stats::central_interval;

/// Beta(a, b) prior on the heterogeneity parameter; Beta(1, 1) is the
/// uniform benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiPrior {
    pub a: f64,
    pub b: f64,
}

impl PhiPrior {
    pub fn uniform() -> Self {
        PhiPrior { a: 1.0, b: 1.0 }
    }

    /// Beta(2, 1): mass skewed toward 1, mean 2/3.
    pub fn skewed() -> Self {
        PhiPrior { a: 2.0, b: 1.0 }
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }
}

/// Positive Dirichlet concentrations over the candidate change-point years.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletWeights {
    pub years: Vec<i32>,
    pub alpha: Vec<f64>,
}

impl DirichletWeights {
    pub fn new(years: Vec<i32>, alpha: Vec<f64>) -> Result<Self> {
        if years.len() != alpha.len() || years.is_empty() {
            return Err(Error::InvalidParameter(
                "Dirichlet weights must pair one positive alpha with each candidate year".into(),
            ));
        }
        if alpha.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidParameter("Dirichlet alphas must be positive".into()));
        }
        Ok(DirichletWeights { years, alpha })
    }

    pub fn alpha_plus(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

/// Prior expectations `alpha_j / alpha_plus` per candidate year.
pub fn dirichlet_expectations(weights: &DirichletWeights) -> Vec<f64> {
    let total = weights.alpha_plus();
    weights.alpha.iter().map(|a| a / total).collect()
}

/// Change-point prior structure.
#[derive(Debug, Clone, PartialEq)]
pub enum ChangepointPrior {
    /// Unknown year with Dirichlet-distributed probabilities.
    Dirichlet(DirichletWeights),
    /// Known change-point year.
    Fixed(i32),
    /// No change-point structure at all.
    None,
}

/// Full prior configuration; `model_id` records which of the eight named
/// configurations this is, when applicable.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Rate of the zero-centered double-exponential prior on each
    /// regression coefficient (prior variance `2 / tau^2`).
    pub beta_tau: f64,
    pub phi_prior: PhiPrior,
    pub changepoint: ChangepointPrior,
    pub model_id: Option<u8>,
}

/// Default double-exponential rate: prior variance 1 per coordinate.
pub const DEFAULT_BETA_TAU: f64 = std::f64::consts::SQRT_2;

impl ModelSpec {
    /// One of the eight named configurations over the given candidate years
    /// (which must have length 5 for models 1-6, matching the three
    /// published Dirichlet calibrations).
    pub fn model(id: u8, candidate_years: &[i32]) -> Result<Self> {
        let dir = |alpha: Vec<f64>| -> Result<ChangepointPrior> {
            if candidate_years.len() != alpha.len() {
                return Err(Error::InvalidParameter(format!(
                    "model {id} requires {} candidate years, got {}",
                    alpha.len(),
                    candidate_years.len()
                )));
            }
            Ok(ChangepointPrior::Dirichlet(DirichletWeights::new(
                candidate_years.to_vec(),
                alpha,
            )?))
        };
        let enthusiastic = vec![1.0, 1.0, 1.0, 6.0, 1.0];
        let moderate = vec![1.6, 1.6, 1.6, 5.0, 1.6];
        let skeptical = vec![1.5, 1.5, 1.5, 3.0, 1.5];
        let (phi_prior, changepoint) = match id {
            1 => (PhiPrior::uniform(), dir(enthusiastic)?),
            2 => (PhiPrior::uniform(), dir(moderate)?),
            3 => (PhiPrior::uniform(), dir(skeptical)?),
            4 => (PhiPrior::skewed(), dir(enthusiastic)?),
            5 => (PhiPrior::skewed(), dir(moderate)?),
            6 => (PhiPrior::skewed(), dir(skeptical)?),
            7 => (PhiPrior::uniform(), ChangepointPrior::None),
            8 => (PhiPrior::uniform(), ChangepointPrior::Fixed(1995)),
            _ => {
                return Err(Error::InvalidParameter(format!("model id must be 1..=8, got {id}")));
            }
        };
        Ok(ModelSpec {
            beta_tau: DEFAULT_BETA_TAU,
            phi_prior,
            changepoint,
            model_id: Some(id),
        })
    }

    /// Whether the model carries change-point basis terms at all.
    pub fn has_changepoint(&self) -> bool {
        !matches!(self.changepoint, ChangepointPrior::None)
    }

    /// Stable textual form used for hashing and manifests.
    pub fn canonical_string(&self) -> String {
        let cp = match &self.changepoint {
            ChangepointPrior::Dirichlet(w) => {
                let pairs: Vec<String> =
                    w.years.iter().zip(&w.alpha).map(|(y, a)| format!("{y}:{a}")).collect();
                format!("dirichlet({})", pairs.join(","))
            }
            ChangepointPrior::Fixed(y) => format!("fixed({y})"),
            ChangepointPrior::None => "none".into(),
        };
        format!(
            "tau={};phi=beta({},{});cp={};id={}",
            self.beta_tau,
            self.phi_prior.a,
            self.phi_prior.b,
            cp,
            self.model_id.map(|i| i.to_string()).unwrap_or_else(|| "custom".into()),
        )
    }
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::model(1, &(1992..=1996).collect::<Vec<_>>()).unwrap()
    }
}

/// Log density of the i.i.d. double-exponential prior over a coefficient
/// block: `sum_k log(tau/2) - tau |beta_k|`.
pub fn log_prior_beta(beta: &[f64], tau: f64) -> f64 {
    debug_assert!(tau > 0.0);
    beta.iter().map(|b| (tau / 2.0).ln() - tau * b.abs()).sum()
}

/// Beta(a, b) log density on (0, 1), negative infinity outside.
pub fn log_prior_phi(phi: f64, a: f64, b: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0);
    if !(0.0..=1.0).contains(&phi) || phi == 0.0 || phi == 1.0 {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * phi.ln() + (b - 1.0) * (1.0 - phi).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
}

/// Dirichlet log density with the standard `gamma_j^(alpha_j - 1)` kernel;
/// negative infinity off the simplex.
pub fn log_dirichlet_density(gamma: &[f64], alpha: &[f64]) -> f64 {
    debug_assert_eq!(gamma.len(), alpha.len());
    if gamma.iter().any(|&g| !(g > 0.0 && g < 1.0)) || (gamma.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return f64::NEG_INFINITY;
    }
    let mut lp = ln_gamma(alpha.iter().sum());
    for (&g, &a) in gamma.iter().zip(alpha) {
        lp += (a - 1.0) * g.ln() - ln_gamma(a);
    }
    lp
}

/// Log gamma function (Lanczos, g = 7, n = 9), accurate to ~1e-13 relative.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// A central Monte Carlo interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

fn draw_phi<R: Rng + ?Sized>(rng: &mut R, prior: &PhiPrior) -> f64 {
    if prior.a == 1.0 && prior.b == 1.0 {
        rng.random::<f64>()
    } else {
        beta_draw(rng, prior.a, prior.b)
    }
}

/// Central 95% prior interval of the marginal odds multiplier
/// `exp(phi * beta_k)` for a unit covariate change.
pub fn prior_predictive_odds<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R, n_draws: usize) -> Interval {
    let draws: Vec<f64> = (0..n_draws)
        .map(|_| {
            let phi = draw_phi(rng, &spec.phi_prior);
            let beta = laplace(rng, spec.beta_tau);
            (phi * beta).exp()
        })
        .collect();
    let (lo, hi) = central_interval(&draws, 0.95);
    Interval { lo, hi }
}

/// Same check pooled over several heterogeneity priors (equal draw counts
/// per prior).
pub fn prior_predictive_odds_pooled<R: Rng + ?Sized>(
    tau: f64,
    phi_priors: &[PhiPrior],
    rng: &mut R,
    n_draws_per_prior: usize,
) -> Interval {
    let mut draws = Vec::with_capacity(phi_priors.len() * n_draws_per_prior);
    for prior in phi_priors {
        for _ in 0..n_draws_per_prior {
            let phi = draw_phi(rng, prior);
            let beta = laplace(rng, tau);
            draws.push((phi * beta).exp());
        }
    }
    let (lo, hi) = central_interval(&draws, 0.95);
    Interval { lo, hi }
}

/// Fixed covariate profile for prior-predictive probability checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateProfile {
    pub age: f64,
    pub repeat_offense: bool,
    pub severe: bool,
}

/// Central 95% prior interval of the marginal success probability
/// `p* = logistic(phi * beta . x*(t, T))` for the given profile, year and
/// change-point year.
pub fn prior_predictive_pstar<R: Rng + ?Sized>(
    spec: &ModelSpec,
    year: i32,
    t_cp: Option<i32>,
    profile: &CovariateProfile,
    cfg: &DesignConfig,
    rng: &mut R,
    n_draws: usize,
) -> Interval {
    let record = ChargeRecord {
        youth_id: String::new(),
        year,
        age: profile.age,
        repeat_offense: profile.repeat_offense,
        severe: profile.severe,
        outcome: true,
    };
    let t_cp = if spec.has_changepoint() { t_cp } else { None };
    let dv = design_vectors(&record, t_cp, cfg);
    let dim = dv.x1.len() + dv.x2.len();
    let draws: Vec<f64> = (0..n_draws)
        .map(|_| {
            let phi = draw_phi(rng, &spec.phi_prior);
            let beta: Vec<f64> = (0..dim).map(|_| laplace(rng, spec.beta_tau)).collect();
            let eta = linear_predictor(&beta[..dv.x1.len()], &beta[dv.x1.len()..], &dv);
            crate::bridge::logistic(phi * eta)
        })
        .collect();
    let (lo, hi) = central_interval(&draws, 0.95);
    Interval { lo, hi }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_stream;

    #[test]
    fn named_models_reproduce_published_pairings() {
        let years: Vec<i32> = (1992..=1996).collect();
        let m1 = ModelSpec::model(1, &years).unwrap();
        assert_eq!(m1.phi_prior, PhiPrior::uniform());
        match &m1.changepoint {
            ChangepointPrior::Dirichlet(w) => assert_eq!(w.alpha, vec![1.0, 1.0, 1.0, 6.0, 1.0]),
            _ => panic!("model 1 must have a Dirichlet change-point prior"),
        }
        let m5 = ModelSpec::model(5, &years).unwrap();
        assert_eq!(m5.phi_prior, PhiPrior::skewed());
        match &m5.changepoint {
            ChangepointPrior::Dirichlet(w) => assert_eq!(w.alpha, vec![1.6, 1.6, 1.6, 5.0, 1.6]),
            _ => panic!(),
        }
        let m7 = ModelSpec::model(7, &years).unwrap();
        assert_eq!(m7.changepoint, ChangepointPrior::None);
        assert!(!m7.has_changepoint());
        let m8 = ModelSpec::model(8, &years).unwrap();
        assert_eq!(m8.changepoint, ChangepointPrior::Fixed(1995));
        assert!(ModelSpec::model(9, &years).is_err());
        for id in 1..=8 {
            assert_eq!(ModelSpec::model(id, &years).unwrap().beta_tau, DEFAULT_BETA_TAU);
        }
    }

    #[test]
    fn dirichlet_expectation_calibrations() {
        let years: Vec<i32> = (1992..=1996).collect();
        let e = |alpha: Vec<f64>| {
            dirichlet_expectations(&DirichletWeights::new(years.clone(), alpha).unwrap())
        };
        let a = e(vec![1.0, 1.0, 1.0, 6.0, 1.0]);
        assert!((a[3] - 0.6).abs() < 1e-15);
        for j in [0, 1, 2, 4] {
            assert!((a[j] - 0.1).abs() < 1e-15);
        }
        let b = e(vec![1.6, 1.6, 1.6, 5.0, 1.6]);
        assert!((b[3] - 5.0 / 11.4).abs() < 1e-15);
        assert!((b[0] - 1.6 / 11.4).abs() < 1e-15);
        let c = e(vec![1.5, 1.5, 1.5, 3.0, 1.5]);
        assert!((c[3] - 1.0 / 3.0).abs() < 1e-15);
        assert!((c[0] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_weights_validation() {
        assert!(DirichletWeights::new(vec![1992], vec![1.0, 2.0]).is_err());
        assert!(DirichletWeights::new(vec![1992], vec![0.0]).is_err());
        assert!(DirichletWeights::new(vec![], vec![]).is_err());
    }

    #[test]
    fn de_log_prior_values() {
        let tau = DEFAULT_BETA_TAU;
        let p = 6;
        let at_zero = log_prior_beta(&vec![0.0; p], tau);
        assert!((at_zero - p as f64 * (tau / 2.0).ln()).abs() < 1e-12);
        // one coordinate away from zero subtracts tau |beta|
        let v = log_prior_beta(&[1.5], tau);
        assert!((v - ((tau / 2.0).ln() - tau * 1.5)).abs() < 1e-12);
    }

    #[test]
    fn de_prior_variance_is_one_at_default_rate() {
        let mut rng = seeded_stream(21, 0);
        let n = 200_000;
        let mut s2 = 0.0;
        for _ in 0..n {
            let x = laplace(&mut rng, DEFAULT_BETA_TAU);
            s2 += x * x;
        }
        assert!((s2 / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn beta_prior_log_density() {
        // Beta(2,1) density is 2 phi: at 0.5 the log density is log(1) = 0
        assert!(log_prior_phi(0.5, 2.0, 1.0).abs() < 1e-12);
        // uniform prior has zero log density everywhere on (0,1)
        for phi in [0.01, 0.4, 0.99] {
            assert!(log_prior_phi(phi, 1.0, 1.0).abs() < 1e-12);
        }
        assert_eq!(log_prior_phi(-0.1, 2.0, 1.0), f64::NEG_INFINITY);
        assert_eq!(log_prior_phi(1.0, 2.0, 1.0), f64::NEG_INFINITY);
        // Beta(2,1) mean is 2/3
        assert!((PhiPrior::skewed().mean() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ln_gamma_reference_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
        assert!((ln_gamma(10.5) - 13.940_625_219_403_763).abs() < 1e-10);
    }

    #[test]
    fn log_priors_are_finite_on_support_never_nan() {
        for phi in [1e-6, 0.3, 1.0 - 1e-6] {
            let v = log_prior_phi(phi, 2.0, 1.0);
            assert!(v.is_finite(), "phi {phi} -> {v}");
        }
        let g = log_dirichlet_density(&[0.2, 0.2, 0.2, 0.2, 0.2], &[1.0, 1.0, 1.0, 6.0, 1.0]);
        assert!(g.is_finite());
        let off = log_dirichlet_density(&[0.5, 0.5, 0.2, -0.1, -0.1], &[1.0; 5]);
        assert_eq!(off, f64::NEG_INFINITY);
        assert!(!log_prior_beta(&[3.0, -2.0], DEFAULT_BETA_TAU).is_nan());
    }

    #[test]
    fn odds_interval_degenerate_and_symmetry() {
        // tiny-variance beta prior concentrates the multiplier at 1
        let spec = ModelSpec {
            beta_tau: 1e9,
            phi_prior: PhiPrior::uniform(),
            changepoint: ChangepointPrior::None,
            model_id: None,
        };
        let mut rng = seeded_stream(22, 0);
        let iv = prior_predictive_odds(&spec, &mut rng, 20_000);
        assert!((iv.lo - 1.0).abs() < 1e-3 && (iv.hi - 1.0).abs() < 1e-3);

        // symmetric prior: endpoints are reciprocal up to MC error
        let spec = ModelSpec::default();
        let iv = prior_predictive_odds(&spec, &mut rng, 400_000);
        assert!((iv.lo * iv.hi - 1.0).abs() < 0.05, "{iv:?}");
    }

    #[test]
    fn pstar_flat_profile_is_half() {
        // with a design vector of all zeros the probability is exactly 1/2
        let spec = ModelSpec::model(7, &(1992..=1996).collect::<Vec<_>>()).unwrap();
        let cfg = DesignConfig {
            age_center: 14.6,
            year_center: 1996.0,
            notification: crate::model::NotificationCoding::Excluded,
        };
        // zero out the intercept contribution by a point-mass-at-zero prior
        let spec0 = ModelSpec { beta_tau: 1e9, ..spec };
        let profile = CovariateProfile { age: 14.6, repeat_offense: false, severe: false };
        let mut rng = seeded_stream(23, 0);
        let iv = prior_predictive_pstar(&spec0, 1996, None, &profile, &cfg, &mut rng, 10_000);
        assert!((iv.lo - 0.5).abs() < 1e-3 && (iv.hi - 0.5).abs() < 1e-3);
    }

    #[test]
    fn pstar_widens_as_tau_shrinks() {
        let years: Vec<i32> = (1992..=1996).collect();
        let spec = ModelSpec::model(1, &years).unwrap();
        let wide = ModelSpec { beta_tau: 0.5, ..spec.clone() };
        let cfg = DesignConfig::default();
        let profile = CovariateProfile { age: 14.6, repeat_offense: true, severe: true };
        let mut rng = seeded_stream(24, 0);
        let narrow_iv = prior_predictive_pstar(&spec, 1996, Some(1995), &profile, &cfg, &mut rng, 120_000);
        let wide_iv = prior_predictive_pstar(&wide, 1996, Some(1995), &profile, &cfg, &mut rng, 120_000);
        assert!(wide_iv.lo < narrow_iv.lo);
        assert!(wide_iv.hi > narrow_iv.hi);
    }

    #[test]
    fn canonical_string_is_stable() {
        let years: Vec<i32> = (1992..=1996).collect();
        let a = ModelSpec::model(4, &years).unwrap().canonical_string();
        let b = ModelSpec::model(4, &years).unwrap().canonical_string();
        assert_eq!(a, b);
        assert!(a.contains("beta(2,1)"));
    }
}
