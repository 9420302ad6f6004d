//! Bayesian inference for longitudinal binary panels with bridge-distributed
//! youth random effects and an unknown discrete change-point year.
//!
//! The model is a random-intercept logistic regression whose random effect
//! follows the bridge distribution, so that conditional (within-youth) and
//! marginal (population-averaged) effects are both logistic and differ only
//! by the attenuation factor `phi`.  The regression includes an unknown
//! change-point year with indicator, linear, quadratic and repeat-offense
//! interaction terms; inference runs by a systematic-scan Gibbs sampler with
//! slice-sampled conditionals, and fits are compared by DIC, CPO/LPML and a
//! posterior-predictive chi-square p-value.
//!
//! The distribution/link kernels ([`bridge`], [`slice`]) are generic over
//! the scalar type; the sampling pipeline and file formats are `f64`.

pub mod bridge;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod float;
pub mod mcmc;
pub mod model;
pub mod persist;
pub mod priors;
pub mod quad;
pub mod rng;
pub mod slice;
pub mod stats;
pub mod summary;

pub use error::{Error, Result};

/// Bridge distribution at working precision.
pub type Bridge = bridge::BridgeParam<f64>;
/// Single-precision bridge distribution.
pub type Bridge32 = bridge::BridgeParam<f32>;
/// Slice tuning at working precision.
pub type Slice = slice::SliceTuning<f64>;

pub use data::{generate_cohort, load_panel, save_panel, CohortShape, CohortTruth, TrueParams};
pub use diagnostics::{
    bayesian_pvalue, compute_cpo_lpml, compute_dic, DevianceKind, FitSummary,
};
pub use mcmc::{
    autocorrelation_and_ess, gelman_rubin, gelman_rubin_all, run_chains, PosteriorDraws,
    SamplerConfig, Snapshot,
};
pub use model::{
    conditional_prob, design_vectors, log_likelihood, log_posterior, ChainState, ChargeRecord,
    DesignConfig, DesignVector, Panel, PanelOptions,
};
pub use priors::{
    dirichlet_expectations, prior_predictive_odds, prior_predictive_pstar, ChangepointPrior,
    CovariateProfile, DirichletWeights, ModelSpec, PhiPrior,
};
pub use summary::{summarize_posterior, PosteriorSummary};
