//! Systematic-scan Gibbs sampler over (B, beta, phi, T, gamma) with
//! slice-sampled scalar conditionals, multi-chain management, and the
//! split-chain convergence diagnostics.
//!
//! Every continuous scalar conditional (each random effect, each regression
//! coordinate, the heterogeneity parameter) is log-concave, and is updated
//! with the stepping-out/shrinkage slice kernel; the change-point year is an
//! exact discrete Gibbs draw over the candidate set, and the mixing weights
//! are conjugate Dirichlet given the year.

use rand::{Rng, RngExt};
use rand_chacha::ChaCha20Rng;

use crate::bridge::{log_logistic, BridgeParam, PHI_MAX, PHI_MIN};
use crate::error::{Error, Result};
use crate::model::{design_x1, design_x2, ChainState, DesignConfig, Panel, X2_DIM};
use crate::priors::{dirichlet_expectations, log_prior_phi, ChangepointPrior, ModelSpec};
use crate::rng::{categorical_from_log_weights, dirichlet, seeded_stream, standard_normal};
use crate::slice::{slice_sample, SliceError, SliceTuning};
use crate::stats::{mean, variance};

/// Slice-kernel tuning per block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceTuningSet {
    pub width_random_effect: f64,
    pub width_beta: f64,
    pub width_phi: f64,
    pub max_step_outs: u32,
}

impl Default for SliceTuningSet {
    fn default() -> Self {
        SliceTuningSet {
            width_random_effect: 2.0,
            width_beta: 1.0,
            width_phi: 0.25,
            // overdispersed starts can put the quadratic change-point term
            // near -100 on the logit scale, displacing early random-effect
            // conditionals by hundreds of units; the budget must cover the
            // cold-start walk back
            max_step_outs: 1024,
        }
    }
}

impl SliceTuningSet {
    fn random_effect(&self) -> SliceTuning<f64> {
        SliceTuning { width: self.width_random_effect, max_step_outs: self.max_step_outs }
    }
    fn beta(&self) -> SliceTuning<f64> {
        SliceTuning { width: self.width_beta, max_step_outs: self.max_step_outs }
    }
    fn phi(&self) -> SliceTuning<f64> {
        SliceTuning { width: self.width_phi, max_step_outs: self.max_step_outs }
    }
}

/// Sampler protocol configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub n_chains: usize,
    pub seed: u64,
    pub slice: SliceTuningSet,
    /// Integrate the Dirichlet weights out of the year update instead of
    /// sampling them (the marginal prior of the single latent year is
    /// `alpha_j / alpha_plus`).
    pub collapse_gamma: bool,
    /// Scale of the per-chain overdispersed initialization jitter.
    pub jitter_scale: f64,
    /// Number of (change-point coefficients, year) sweeps per iteration.
    /// The year and its coefficients co-adapt; sweeping the block more than
    /// once per scan speeds cross-year mixing when the break location is
    /// ambiguous.
    pub cp_block_sweeps: usize,
    /// Every this many iterations, draw the year with the random effects
    /// integrated out (per-cluster quadrature) and then redraw all random
    /// effects — a partially collapsed block that hops between competing
    /// break years even when the per-youth effects have adapted to the
    /// current one.  Zero disables the move.
    pub collapsed_t_every: usize,
}

impl SamplerConfig {
    pub fn new(seed: u64) -> Self {
        SamplerConfig {
            n_iterations: 50_000,
            burn_in: 45_000,
            thinning: 1,
            n_chains: 2,
            seed,
            slice: SliceTuningSet::default(),
            collapse_gamma: false,
            jitter_scale: 1.0,
            cp_block_sweeps: 1,
            collapsed_t_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.n_iterations {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_iterations ({})",
                self.burn_in, self.n_iterations
            )));
        }
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be at least 1".into()));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        Ok(())
    }

    /// Retained snapshots per chain.
    pub fn retained_per_chain(&self) -> usize {
        (self.n_iterations - self.burn_in).div_ceil(self.thinning)
    }

    /// Stable textual form for hashing and manifests.
    pub fn canonical_string(&self) -> String {
        format!(
            "iters={};burn={};thin={};chains={};seed={};widths={},{},{};maxstep={};collapse={};jitter={};cpsweeps={};collapsedt={}",
            self.n_iterations,
            self.burn_in,
            self.thinning,
            self.n_chains,
            self.seed,
            self.slice.width_random_effect,
            self.slice.width_beta,
            self.slice.width_phi,
            self.slice.max_step_outs,
            self.collapse_gamma,
            self.jitter_scale,
            self.cp_block_sweeps,
            self.collapsed_t_every,
        )
    }
}

/// Names and extraction of every scalar parameter in a chain state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub x1_names: Vec<String>,
    pub x2_names: Vec<String>,
    pub candidate_years: Vec<i32>,
    pub has_t: bool,
    pub has_gamma: bool,
    pub n_clusters: usize,
}

impl ParamLayout {
    pub fn for_run(panel: &Panel, spec: &ModelSpec, cfg: &DesignConfig) -> Self {
        let (has_t, has_gamma, candidate_years) = match &spec.changepoint {
            ChangepointPrior::Dirichlet(w) => (true, true, w.years.clone()),
            ChangepointPrior::Fixed(y) => (true, false, vec![*y]),
            ChangepointPrior::None => (false, false, Vec::new()),
        };
        ParamLayout {
            x1_names: cfg.x1_names().iter().map(|s| s.to_string()).collect(),
            x2_names: if spec.has_changepoint() {
                crate::model::x2_names().iter().map(|s| s.to_string()).collect()
            } else {
                Vec::new()
            },
            candidate_years,
            has_t,
            has_gamma,
            n_clusters: panel.n_clusters(),
        }
    }

    /// All scalar parameter names, in persistence order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.x1_names.iter().map(|n| format!("beta1.{n}")).collect();
        names.extend(self.x2_names.iter().map(|n| format!("beta2.{n}")));
        names.push("phi".into());
        if self.has_t {
            names.push("T".into());
        }
        if self.has_gamma {
            names.extend(self.candidate_years.iter().map(|y| format!("gamma.{y}")));
        }
        names.extend((0..self.n_clusters).map(|i| format!("B.{i}")));
        names
    }

    /// Value of a named scalar in a state.
    pub fn value(&self, state: &ChainState, name: &str) -> Option<f64> {
        if let Some(rest) = name.strip_prefix("beta1.") {
            let k = self.x1_names.iter().position(|n| n == rest)?;
            return state.beta1.get(k).copied();
        }
        if let Some(rest) = name.strip_prefix("beta2.") {
            let k = self.x2_names.iter().position(|n| n == rest)?;
            return state.beta2.get(k).copied();
        }
        if name == "phi" {
            return Some(state.phi.phi());
        }
        if name == "T" {
            return state.t_cp.map(|t| t as f64);
        }
        if let Some(rest) = name.strip_prefix("gamma.") {
            let year: i32 = rest.parse().ok()?;
            let pos = self.candidate_years.iter().position(|&y| y == year)?;
            return state.gamma.as_ref()?.get(pos).copied();
        }
        if let Some(rest) = name.strip_prefix("B.") {
            let k: usize = rest.parse().ok()?;
            return state.b.get(k).copied();
        }
        None
    }

    /// Flat numeric row of a state in `param_names` order.
    pub fn row(&self, state: &ChainState) -> Vec<f64> {
        let mut row = Vec::with_capacity(
            self.x1_names.len()
                + self.x2_names.len()
                + 1
                + usize::from(self.has_t)
                + if self.has_gamma { self.candidate_years.len() } else { 0 }
                + self.n_clusters,
        );
        row.extend_from_slice(&state.beta1);
        row.extend_from_slice(&state.beta2);
        row.push(state.phi.phi());
        if self.has_t {
            row.push(state.t_cp.map(|t| t as f64).unwrap_or(f64::NAN));
        }
        if self.has_gamma {
            match &state.gamma {
                Some(g) => row.extend_from_slice(g),
                None => row.extend(std::iter::repeat(f64::NAN).take(self.candidate_years.len())),
            }
        }
        row.extend_from_slice(&state.b);
        row
    }

    /// Rebuild a state from a flat numeric row.
    pub fn state_from_row(&self, row: &[f64]) -> Result<ChainState> {
        let expect = self.param_names().len();
        if row.len() != expect {
            return Err(Error::Data {
                row: None,
                msg: format!("draw row has {} values, layout expects {expect}", row.len()),
            });
        }
        let mut it = row.iter().copied();
        let beta1: Vec<f64> = (&mut it).take(self.x1_names.len()).collect();
        let beta2: Vec<f64> = (&mut it).take(self.x2_names.len()).collect();
        let phi = BridgeParam::new(it.next().unwrap())?;
        let t_cp = if self.has_t { Some(it.next().unwrap() as i32) } else { None };
        let gamma = if self.has_gamma {
            Some((&mut it).take(self.candidate_years.len()).collect())
        } else {
            None
        };
        let b: Vec<f64> = it.collect();
        Ok(ChainState { beta1, beta2, b, phi, t_cp, gamma })
    }
}

/// One retained draw.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub chain: usize,
    /// 1-based iteration index within the chain.
    pub iteration: usize,
    pub state: ChainState,
    pub log_likelihood: f64,
    /// Per-record conditional log densities, for the predictive ordinates.
    pub obs_log_lik: Vec<f64>,
}

/// Retained post-burn-in samples of all chains, chain-major.
#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub snapshots: Vec<Snapshot>,
    pub n_chains: usize,
    pub layout: ParamLayout,
}

impl PosteriorDraws {
    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    /// Per-chain series of one named scalar.
    pub fn series(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let mut out = vec![Vec::new(); self.n_chains];
        for s in &self.snapshots {
            match self.layout.value(&s.state, name) {
                Some(v) => out[s.chain].push(v),
                None => {
                    return Err(Error::InvalidParameter(format!("unknown parameter {name:?}")));
                }
            }
        }
        Ok(out)
    }

    /// Pooled values of one named scalar across chains.
    pub fn pooled(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.series(name)?.concat())
    }

    /// Recompute and store the per-record log densities (used after loading
    /// draws from disk, where only the states are persisted).
    pub fn attach_observation_log_likelihoods(&mut self, panel: &Panel, cfg: &DesignConfig) {
        for s in &mut self.snapshots {
            s.obs_log_lik = crate::model::observation_log_likelihoods(&s.state, panel, cfg);
            s.log_likelihood = s.obs_log_lik.iter().sum();
        }
    }
}

/// Per-record design cache shared by every update of a run.
struct DesignCache {
    x1: Vec<Vec<f64>>,
    /// Change-point basis per record and candidate year; empty when the
    /// model has no change-point.
    x2: Vec<Vec<[f64; X2_DIM]>>,
    y: Vec<bool>,
    cluster: Vec<usize>,
    cluster_ranges: Vec<(usize, usize)>,
    candidates: Vec<i32>,
}

impl DesignCache {
    fn build(panel: &Panel, spec: &ModelSpec, cfg: &DesignConfig) -> Result<Self> {
        let candidates: Vec<i32> = match &spec.changepoint {
            ChangepointPrior::Dirichlet(w) => {
                if w.years != panel.candidate_years() {
                    return Err(Error::Config(format!(
                        "Dirichlet years {:?} do not match panel candidate years {:?}",
                        w.years,
                        panel.candidate_years()
                    )));
                }
                w.years.clone()
            }
            ChangepointPrior::Fixed(y) => vec![*y],
            ChangepointPrior::None => Vec::new(),
        };
        let records = panel.records();
        let x1 = records.iter().map(|r| design_x1(r, cfg)).collect();
        let x2 = if candidates.is_empty() {
            vec![Vec::new(); records.len()]
        } else {
            records
                .iter()
                .map(|r| candidates.iter().map(|&t| design_x2(r, t)).collect())
                .collect()
        };
        Ok(DesignCache {
            x1,
            x2,
            y: records.iter().map(|r| r.outcome).collect(),
            cluster: (0..records.len()).map(|i| panel.record_cluster(i)).collect(),
            cluster_ranges: (0..panel.n_clusters()).map(|c| panel.cluster_range(c)).collect(),
            candidates,
        })
    }

    fn candidate_index(&self, t_cp: Option<i32>) -> Option<usize> {
        t_cp.and_then(|t| self.candidates.iter().position(|&c| c == t))
    }

    /// Fixed-effect linear predictor of one record under candidate `cand`.
    fn eta_fixed(&self, rec: usize, beta1: &[f64], beta2: &[f64], cand: Option<usize>) -> f64 {
        let mut eta: f64 = self.x1[rec].iter().zip(beta1).map(|(x, b)| x * b).sum();
        if let Some(c) = cand {
            eta += self.x2[rec][c].iter().zip(beta2).map(|(x, b)| x * b).sum::<f64>();
        }
        eta
    }

    fn bernoulli(&self, rec: usize, eta: f64) -> f64 {
        if self.y[rec] {
            log_logistic(eta)
        } else {
            log_logistic(-eta)
        }
    }

    fn log_likelihood(&self, state: &ChainState, cand: Option<usize>) -> f64 {
        (0..self.y.len())
            .map(|r| {
                let eta = state.b[self.cluster[r]] + self.eta_fixed(r, &state.beta1, &state.beta2, cand);
                self.bernoulli(r, eta)
            })
            .sum()
    }

    fn observation_log_likelihoods(&self, state: &ChainState, cand: Option<usize>) -> Vec<f64> {
        (0..self.y.len())
            .map(|r| {
                let eta = state.b[self.cluster[r]] + self.eta_fixed(r, &state.beta1, &state.beta2, cand);
                self.bernoulli(r, eta)
            })
            .collect()
    }

    /// Slice update of one random effect.  The bracket width scales with
    /// the current bridge standard deviation: for small `phi` the prior is
    /// nearly flat over hundreds of units and a fixed width would exhaust
    /// the step-out budget.
    fn update_b<R: Rng + ?Sized>(
        &self,
        i: usize,
        state: &ChainState,
        mut tuning: SliceTuning<f64>,
        rng: &mut R,
    ) -> std::result::Result<f64, SliceError> {
        tuning.width = tuning.width.max(state.phi.variance().sqrt());
        let (lo, hi) = self.cluster_ranges[i];
        let cand = self.candidate_index(state.t_cp);
        let fixed: Vec<(usize, f64)> = (lo..hi)
            .map(|r| (r, self.eta_fixed(r, &state.beta1, &state.beta2, cand)))
            .collect();
        let phi = state.phi;
        slice_sample(
            state.b[i],
            |v: f64| {
                fixed.iter().map(|&(r, eta)| self.bernoulli(r, eta + v)).sum::<f64>() + phi.log_pdf(v)
            },
            (f64::NEG_INFINITY, f64::INFINITY),
            tuning,
            rng,
        )
    }

    /// Slice update of one regression coordinate; `block2` selects the
    /// change-point block.
    fn update_beta<R: Rng + ?Sized>(
        &self,
        block2: bool,
        k: usize,
        state: &ChainState,
        tau: f64,
        tuning: SliceTuning<f64>,
        rng: &mut R,
    ) -> std::result::Result<f64, SliceError> {
        let cand = self.candidate_index(state.t_cp);
        let current = if block2 { state.beta2[k] } else { state.beta1[k] };
        // records with a zero covariate value contribute a constant
        let mut active: Vec<(f64, f64, bool)> = Vec::new();
        for r in 0..self.y.len() {
            let x = if block2 {
                match cand {
                    Some(c) => self.x2[r][c][k],
                    None => 0.0,
                }
            } else {
                self.x1[r][k]
            };
            if x != 0.0 {
                let eta_rest = state.b[self.cluster[r]]
                    + self.eta_fixed(r, &state.beta1, &state.beta2, cand)
                    - current * x;
                active.push((x, eta_rest, self.y[r]));
            }
        }
        slice_sample(
            current,
            |v: f64| {
                let ll: f64 = active
                    .iter()
                    .map(|&(x, eta_rest, y)| {
                        let eta = eta_rest + v * x;
                        if y {
                            log_logistic(eta)
                        } else {
                            log_logistic(-eta)
                        }
                    })
                    .sum();
                ll - tau * v.abs()
            },
            (f64::NEG_INFINITY, f64::INFINITY),
            tuning,
            rng,
        )
    }

    /// Slice update of the heterogeneity parameter on its clamped support.
    fn update_phi<R: Rng + ?Sized>(
        &self,
        state: &ChainState,
        spec: &ModelSpec,
        tuning: SliceTuning<f64>,
        rng: &mut R,
    ) -> std::result::Result<f64, SliceError> {
        let b = state.b.clone();
        let (a, bb) = (spec.phi_prior.a, spec.phi_prior.b);
        slice_sample(
            state.phi.phi(),
            |v: f64| {
                let d = match BridgeParam::new(v) {
                    Ok(d) => d,
                    Err(_) => return f64::NEG_INFINITY,
                };
                b.iter().map(|&bi| d.log_pdf(bi)).sum::<f64>() + log_prior_phi(v, a, bb)
            },
            (PHI_MIN, PHI_MAX),
            tuning,
            rng,
        )
    }

    /// Exact discrete Gibbs draw of the change-point year.
    fn update_t<R: Rng + ?Sized>(
        &self,
        state: &ChainState,
        log_prior_t: &[f64],
        rng: &mut R,
    ) -> i32 {
        let log_w: Vec<f64> = (0..self.candidates.len())
            .map(|c| self.log_likelihood(state, Some(c)) + log_prior_t[c])
            .collect();
        self.candidates[categorical_from_log_weights(rng, &log_w)]
    }

    /// Log marginal likelihood of one cluster with its random effect
    /// integrated out: `log ∫ prod_j Bernoulli(y_j | eta_j + b) f_B(b|phi) db`,
    /// by Laplace-centered adaptive quadrature on the (log-concave)
    /// integrand.
    fn cluster_marginal_loglik(
        &self,
        cluster: usize,
        beta1: &[f64],
        beta2: &[f64],
        cand: Option<usize>,
        phi: BridgeParam<f64>,
    ) -> f64 {
        let (lo, hi) = self.cluster_ranges[cluster];
        let fixed: Vec<(f64, bool)> = (lo..hi)
            .map(|r| (self.eta_fixed(r, beta1, beta2, cand), self.y[r]))
            .collect();
        let log_g = |b: f64| -> f64 {
            fixed
                .iter()
                .map(|&(eta, y)| if y { log_logistic(eta + b) } else { log_logistic(-eta - b) })
                .sum::<f64>()
                + phi.log_pdf(b)
        };
        let grad = |b: f64| -> f64 {
            let mut d: f64 = fixed
                .iter()
                .map(|&(eta, y)| (y as u8 as f64) - crate::bridge::logistic(eta + b))
                .sum();
            let x = phi.phi() * b;
            let c = (phi.phi() * std::f64::consts::PI).cos();
            d -= if x.abs() > 30.0 {
                phi.phi() * x.signum()
            } else {
                phi.phi() * x.sinh() / (x.cosh() + c)
            };
            d
        };

        // find the mode by bisection on the gradient (log-concave target)
        let sigma = phi.variance().sqrt();
        let mut a = -10.0 * sigma - 60.0;
        let mut b = 10.0 * sigma + 60.0;
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if grad(m) > 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        let mode = 0.5 * (a + b);
        let peak = log_g(mode);

        // curvature-scaled integration range around the mode
        let h = 1e-4;
        let curv = (grad(mode + h) - grad(mode - h)) / (2.0 * h);
        let width = if curv < -1e-12 { (-1.0 / curv).sqrt() } else { sigma.max(1.0) };
        let span = 12.0 * width.max(0.5);
        let mass = crate::quad::integrate(|x| (log_g(x) - peak).exp(), mode - span, mode + span, 1e-9);
        peak + mass.ln()
    }

    /// Partially collapsed year draw: sample `T` with every random effect
    /// integrated out.  The caller must redraw the random effects from
    /// their new conditionals immediately afterwards for the block to be a
    /// valid joint (T, B) update.
    fn update_t_collapsed_b<R: Rng + ?Sized>(
        &self,
        state: &ChainState,
        log_prior_t: &[f64],
        rng: &mut R,
    ) -> i32 {
        let log_w: Vec<f64> = (0..self.candidates.len())
            .map(|c| {
                let marg: f64 = (0..self.cluster_ranges.len())
                    .map(|i| {
                        self.cluster_marginal_loglik(i, &state.beta1, &state.beta2, Some(c), state.phi)
                    })
                    .sum();
                marg + log_prior_t[c]
            })
            .collect();
        self.candidates[categorical_from_log_weights(rng, &log_w)]
    }
}

fn slice_err_to_error(
    err: SliceError,
    target: &str,
    chain: usize,
    iteration: usize,
    state: &ChainState,
    max_step_outs: u32,
) -> Error {
    let dump = format!(
        "beta1={:?} beta2={:?} phi={} T={:?} ({})",
        state.beta1,
        state.beta2,
        state.phi.phi(),
        state.t_cp,
        match err {
            SliceError::StepOutExceeded => "step-out budget exhausted",
            SliceError::ShrinkageStalled => "shrinkage stalled",
        },
    );
    Error::SliceStepOut {
        target: target.into(),
        max_step_outs,
        chain,
        iteration,
        state_dump: dump,
    }
}

/// Draw a new value for random effect `i` from its full conditional.
pub fn update_random_effect<R: Rng + ?Sized>(
    i: usize,
    state: &ChainState,
    panel: &Panel,
    spec: &ModelSpec,
    cfg: &DesignConfig,
    tuning: &SliceTuningSet,
    rng: &mut R,
) -> Result<f64> {
    let cache = DesignCache::build(panel, spec, cfg)?;
    cache
        .update_b(i, state, tuning.random_effect(), rng)
        .map_err(|e| slice_err_to_error(e, &format!("B[{i}]"), 0, 0, state, tuning.max_step_outs))
}

/// Block selector for [`update_beta_coordinate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaBlock {
    Observed(usize),
    Changepoint(usize),
}

/// Draw a new value for one regression coordinate from its full conditional.
pub fn update_beta_coordinate<R: Rng + ?Sized>(
    which: BetaBlock,
    state: &ChainState,
    panel: &Panel,
    spec: &ModelSpec,
    cfg: &DesignConfig,
    tuning: &SliceTuningSet,
    rng: &mut R,
) -> Result<f64> {
    let cache = DesignCache::build(panel, spec, cfg)?;
    let (block2, k) = match which {
        BetaBlock::Observed(k) => (false, k),
        BetaBlock::Changepoint(k) => (true, k),
    };
    cache
        .update_beta(block2, k, state, spec.beta_tau, tuning.beta(), rng)
        .map_err(|e| slice_err_to_error(e, &format!("beta[{which:?}]"), 0, 0, state, tuning.max_step_outs))
}

/// Draw a new heterogeneity parameter from its full conditional.
pub fn update_phi<R: Rng + ?Sized>(
    state: &ChainState,
    panel: &Panel,
    spec: &ModelSpec,
    cfg: &DesignConfig,
    tuning: &SliceTuningSet,
    rng: &mut R,
) -> Result<f64> {
    let cache = DesignCache::build(panel, spec, cfg)?;
    cache
        .update_phi(state, spec, tuning.phi(), rng)
        .map_err(|e| slice_err_to_error(e, "phi", 0, 0, state, tuning.max_step_outs))
}

/// Exact discrete Gibbs draw of the change-point year (`None` for models
/// without a change-point).
pub fn update_changepoint<R: Rng + ?Sized>(
    state: &ChainState,
    panel: &Panel,
    spec: &ModelSpec,
    cfg: &DesignConfig,
    rng: &mut R,
) -> Result<Option<i32>> {
    match &spec.changepoint {
        ChangepointPrior::None => Ok(None),
        ChangepointPrior::Fixed(y) => Ok(Some(*y)),
        ChangepointPrior::Dirichlet(w) => {
            let cache = DesignCache::build(panel, spec, cfg)?;
            let log_prior: Vec<f64> = match &state.gamma {
                Some(g) => g.iter().map(|&x| x.ln()).collect(),
                None => {
                    let total = w.alpha_plus();
                    w.alpha.iter().map(|a| (a / total).ln()).collect()
                }
            };
            Ok(Some(cache.update_t(state, &log_prior, rng)))
        }
    }
}

/// Conjugate Dirichlet draw of the year probabilities given the current year.
pub fn update_gamma<R: Rng + ?Sized>(
    state: &ChainState,
    spec: &ModelSpec,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let ChangepointPrior::Dirichlet(w) = &spec.changepoint else {
        return Err(Error::InvalidParameter(
            "gamma update requires a Dirichlet change-point prior".into(),
        ));
    };
    let mut alpha = w.alpha.clone();
    if let Some(t) = state.t_cp {
        if let Some(pos) = w.years.iter().position(|&y| y == t) {
            alpha[pos] += 1.0;
        }
    }
    Ok(dirichlet(rng, &alpha))
}

/// Deterministic initial state for one chain: prior-mean heterogeneity,
/// prior-modal year, prior-expectation weights, and zero coefficients plus
/// overdispersed jitter on the fixed effects drawn from the chain's own
/// stream.
fn initial_state<R: Rng + ?Sized>(
    panel: &Panel,
    spec: &ModelSpec,
    cfg: &DesignConfig,
    jitter_scale: f64,
    rng: &mut R,
) -> ChainState {
    let x1_dim = cfg.x1_dim();
    let x2_dim = if spec.has_changepoint() { X2_DIM } else { 0 };
    let mut beta1 = vec![0.0; x1_dim];
    let mut beta2 = vec![0.0; x2_dim];
    for b in beta1.iter_mut().chain(beta2.iter_mut()) {
        *b += jitter_scale * standard_normal(rng);
    }

    let phi = BridgeParam::new(spec.phi_prior.mean().clamp(PHI_MIN, PHI_MAX)).unwrap();

    let (t_cp, gamma) = match &spec.changepoint {
        ChangepointPrior::Dirichlet(w) => {
            let modal = w
                .years
                .iter()
                .zip(&w.alpha)
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(y, _)| *y);
            (modal, Some(dirichlet_expectations(w)))
        }
        ChangepointPrior::Fixed(y) => (Some(*y), None),
        ChangepointPrior::None => (None, None),
    };

    ChainState {
        beta1,
        beta2,
        b: vec![0.0; panel.n_clusters()],
        phi,
        t_cp,
        gamma,
    }
}

/// Joint Metropolis rescale of the heterogeneity parameter and every random
/// effect along their coupled direction: `phi` moves on the logit scale and
/// `B` rescales by the bridge-sd ratio.  The single-site scan mixes this
/// pair slowly because the `phi` conditional is narrow given `B`; the
/// rescale move traverses the ridge in one step.
fn phi_rescale_move<R: Rng + ?Sized>(
    cache: &DesignCache,
    state: &mut ChainState,
    spec: &ModelSpec,
    rng: &mut R,
) {
    if state.b.is_empty() {
        return;
    }
    let phi_old = state.phi.phi();
    let z = (phi_old / (1.0 - phi_old)).ln() + 0.15 * standard_normal(rng);
    let phi_new = (1.0 / (1.0 + (-z).exp())).clamp(PHI_MIN, PHI_MAX);
    let Ok(dist_new) = BridgeParam::new(phi_new) else { return };
    let scale = (dist_new.variance() / state.phi.variance()).sqrt();
    let b_new: Vec<f64> = state.b.iter().map(|b| b * scale).collect();

    let cand = cache.candidate_index(state.t_cp);
    let mut log_acc = 0.0;
    // outcome likelihood at the rescaled effects
    {
        let mut proposed = state.clone();
        proposed.b = b_new.clone();
        log_acc += cache.log_likelihood(&proposed, cand) - cache.log_likelihood(state, cand);
    }
    // random-effect density and Jacobian of the rescale
    for (&bn, &bo) in b_new.iter().zip(&state.b) {
        log_acc += dist_new.log_pdf(bn) - state.phi.log_pdf(bo);
    }
    log_acc += state.b.len() as f64 * scale.ln();
    // phi prior and the logit-space proposal Jacobian
    log_acc += log_prior_phi(phi_new, spec.phi_prior.a, spec.phi_prior.b)
        - log_prior_phi(phi_old, spec.phi_prior.a, spec.phi_prior.b);
    log_acc += (phi_new * (1.0 - phi_new)).ln() - (phi_old * (1.0 - phi_old)).ln();

    if rng.random::<f64>().ln() < log_acc {
        state.phi = dist_new;
        state.b = b_new;
    }
}

fn run_single_chain(
    chain: usize,
    panel: &Panel,
    spec: &ModelSpec,
    cfg: &DesignConfig,
    config: &SamplerConfig,
) -> Result<Vec<Snapshot>> {
    let cache = DesignCache::build(panel, spec, cfg)?;
    let mut rng: ChaCha20Rng = seeded_stream(config.seed, chain as u64);
    let mut state = initial_state(panel, spec, cfg, config.jitter_scale, &mut rng);
    let collapse = config.collapse_gamma;
    if collapse {
        state.gamma = None;
    }

    let mut out = Vec::with_capacity(config.retained_per_chain());
    for iteration in 1..=config.n_iterations {
        let ctx = |e: SliceError, target: &str, st: &ChainState| {
            slice_err_to_error(e, target, chain, iteration, st, config.slice.max_step_outs)
        };

        for i in 0..state.b.len() {
            state.b[i] = cache
                .update_b(i, &state, config.slice.random_effect(), &mut rng)
                .map_err(|e| ctx(e, &format!("B[{i}]"), &state))?;
        }
        for k in 0..state.beta1.len() {
            state.beta1[k] = cache
                .update_beta(false, k, &state, spec.beta_tau, config.slice.beta(), &mut rng)
                .map_err(|e| ctx(e, &format!("beta1[{k}]"), &state))?;
        }
        for k in 0..state.beta2.len() {
            state.beta2[k] = cache
                .update_beta(true, k, &state, spec.beta_tau, config.slice.beta(), &mut rng)
                .map_err(|e| ctx(e, &format!("beta2[{k}]"), &state))?;
        }
        // the heterogeneity step applies a few slice transitions; its
        // conditional is cheap and the extra transitions decorrelate the
        // within-conditional slice walk
        for _ in 0..3 {
            state.phi = BridgeParam::new(
                cache
                    .update_phi(&state, spec, config.slice.phi(), &mut rng)
                    .map_err(|e| ctx(e, "phi", &state))?,
            )?;
        }
        phi_rescale_move(&cache, &mut state, spec, &mut rng);
        if let ChangepointPrior::Dirichlet(w) = &spec.changepoint {
            let log_prior: Vec<f64> = match (&state.gamma, collapse) {
                (Some(g), false) => g.iter().map(|&x| x.ln()).collect(),
                _ => {
                    let total = w.alpha_plus();
                    w.alpha.iter().map(|a| (a / total).ln()).collect()
                }
            };
            state.t_cp = Some(cache.update_t(&state, &log_prior, &mut rng));
            for _ in 1..config.cp_block_sweeps.max(1) {
                for i in 0..state.b.len() {
                    state.b[i] = cache
                        .update_b(i, &state, config.slice.random_effect(), &mut rng)
                        .map_err(|e| ctx(e, &format!("B[{i}]"), &state))?;
                }
                for k in 0..state.beta2.len() {
                    state.beta2[k] = cache
                        .update_beta(true, k, &state, spec.beta_tau, config.slice.beta(), &mut rng)
                        .map_err(|e| ctx(e, &format!("beta2[{k}]"), &state))?;
                }
                state.t_cp = Some(cache.update_t(&state, &log_prior, &mut rng));
            }
            // partially collapsed block: year with random effects
            // integrated out, then a full redraw of the random effects
            if config.collapsed_t_every > 0 && iteration % config.collapsed_t_every == 0 {
                state.t_cp = Some(cache.update_t_collapsed_b(&state, &log_prior, &mut rng));
                for i in 0..state.b.len() {
                    state.b[i] = cache
                        .update_b(i, &state, config.slice.random_effect(), &mut rng)
                        .map_err(|e| ctx(e, &format!("B[{i}]"), &state))?;
                }
            }
            if !collapse {
                state.gamma = Some(update_gamma(&state, spec, &mut rng)?);
            }
        }

        if iteration > config.burn_in && (iteration - config.burn_in - 1) % config.thinning == 0 {
            let cand = cache.candidate_index(state.t_cp);
            let obs = cache.observation_log_likelihoods(&state, cand);
            let ll = obs.iter().sum();
            out.push(Snapshot {
                chain,
                iteration,
                state: state.clone(),
                log_likelihood: ll,
                obs_log_lik: obs,
            });
        }
    }
    Ok(out)
}

/// Run the full systematic-scan Gibbs sampler: all chains, independent
/// streams, retained snapshots in chain-major order.
pub fn run_chains(
    panel: &Panel,
    spec: &ModelSpec,
    cfg: &DesignConfig,
    config: &SamplerConfig,
) -> Result<PosteriorDraws> {
    config.validate()?;
    let mut layout = ParamLayout::for_run(panel, spec, cfg);
    // under the collapsed sampler the mixing weights are integrated out and
    // never materialize in the chain state
    if config.collapse_gamma {
        layout.has_gamma = false;
        layout.candidate_years.clear();
    }

    let mut per_chain: Vec<Result<Vec<Snapshot>>> = Vec::with_capacity(config.n_chains);
    if config.n_chains == 1 {
        per_chain.push(run_single_chain(0, panel, spec, cfg, config));
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..config.n_chains)
                .map(|chain| scope.spawn(move || run_single_chain(chain, panel, spec, cfg, config)))
                .collect();
            for h in handles {
                per_chain.push(h.join().expect("chain thread panicked"));
            }
        });
    }

    let mut snapshots = Vec::with_capacity(config.n_chains * config.retained_per_chain());
    for result in per_chain {
        snapshots.extend(result?);
    }
    Ok(PosteriorDraws {
        snapshots,
        n_chains: config.n_chains,
        layout,
    })
}

/// Split-chain potential scale reduction factor for one named parameter.
///
/// A parameter that is exactly constant over all draws has no variance on
/// either side of the ratio and is reported as 1 by convention.
pub fn gelman_rubin(draws: &PosteriorDraws, name: &str) -> Result<f64> {
    if draws.n_chains < 2 {
        return Err(Error::SingleChain(draws.n_chains));
    }
    let chains = draws.series(name)?;
    psrf_from_chains(&chains)
}

fn psrf_from_chains(chains: &[Vec<f64>]) -> Result<f64> {
    let min_len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if min_len < 4 {
        return Err(Error::NoDraws);
    }
    let half = min_len / 2;
    let mut split: Vec<&[f64]> = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        split.push(&c[..half]);
        split.push(&c[half..2 * half]);
    }

    let first = split[0][0];
    if split.iter().all(|s| s.iter().all(|&v| v == first)) {
        return Ok(1.0);
    }

    let len = half as f64;
    let means: Vec<f64> = split.iter().map(|s| mean(s)).collect();
    let within = mean(&split.iter().map(|s| variance(s)).collect::<Vec<_>>());
    let between_over_n = variance(&means);
    if within == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((((len - 1.0) / len * within + between_over_n) / within).sqrt())
}

/// PSRF for every scalar parameter of the run.
pub fn gelman_rubin_all(draws: &PosteriorDraws) -> Result<Vec<(String, f64)>> {
    draws
        .layout
        .param_names()
        .into_iter()
        .map(|name| gelman_rubin(draws, &name).map(|v| (name, v)))
        .collect()
}

/// Autocorrelation function (averaged over chains) up to `max_lag`, and the
/// effective sample size from Geyer's initial-positive-sequence truncation.
pub fn autocorrelation_and_ess(
    draws: &PosteriorDraws,
    name: &str,
    max_lag: usize,
) -> Result<(Vec<f64>, f64)> {
    let chains = draws.series(name)?;
    let min_len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if max_lag >= min_len {
        return Err(Error::InvalidParameter(format!(
            "max_lag {max_lag} must be below the retained chain length {min_len}"
        )));
    }

    let mut acf = vec![0.0; max_lag + 1];
    for c in chains.iter() {
        let m = mean(c);
        let c0: f64 = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / c.len() as f64;
        if c0 == 0.0 {
            // constant chain: lag-0 autocorrelation 1, all higher lags 0
            acf[0] += 1.0;
            continue;
        }
        for (lag, slot) in acf.iter_mut().enumerate() {
            let cov: f64 = (0..c.len() - lag).map(|i| (c[i] - m) * (c[i + lag] - m)).sum::<f64>()
                / c.len() as f64;
            *slot += cov / c0;
        }
    }
    for a in acf.iter_mut() {
        *a /= chains.len() as f64;
    }

    // Geyer initial positive sequence on pairs (rho_{2k-1} + rho_{2k})
    let n_total: usize = chains.iter().map(|c| c.len()).sum();
    let mut tau = 1.0;
    let mut lag = 1;
    while lag + 1 <= max_lag {
        let pair = acf[lag] + acf[lag + 1];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    let ess = (n_total as f64 / tau).min(n_total as f64);
    Ok((acf, ess))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ChargeRecord, PanelOptions};
    use crate::rng::seeded_stream;

    fn empty_panel(n: usize) -> Panel {
        Panel::empty_with_clusters(
            (0..n).map(|i| format!("y{i}")).collect(),
            PanelOptions::default(),
        )
    }

    fn rec(id: &str, year: i32, rep: bool, y: bool) -> ChargeRecord {
        ChargeRecord {
            youth_id: id.into(),
            year,
            age: 14.6,
            repeat_offense: rep,
            severe: true,
            outcome: y,
        }
    }

    #[test]
    fn config_validation_and_retention_arithmetic() {
        let mut c = SamplerConfig::new(1);
        c.n_iterations = 10;
        c.burn_in = 5;
        assert!(c.validate().is_ok());
        assert_eq!(c.retained_per_chain(), 5);
        c.thinning = 2;
        assert_eq!(c.retained_per_chain(), 3);
        c.burn_in = 10;
        assert!(c.validate().is_err());
        c.burn_in = 5;
        c.n_chains = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn retained_snapshot_count_is_exact() {
        let panel = empty_panel(3);
        let spec = ModelSpec::default();
        let cfg = DesignConfig::default();
        let mut config = SamplerConfig::new(7);
        config.n_iterations = 10;
        config.burn_in = 5;
        config.n_chains = 2;
        let draws = run_chains(&panel, &spec, &cfg, &config).unwrap();
        assert_eq!(draws.snapshots.len(), 10);
        assert!(draws.snapshots.iter().all(|s| s.iteration > 5));
    }

    #[test]
    fn no_changepoint_model_has_no_t_or_gamma() {
        let panel = empty_panel(3);
        let spec = ModelSpec::model(7, &(1992..=1996).collect::<Vec<_>>()).unwrap();
        let cfg = DesignConfig::default();
        let mut config = SamplerConfig::new(7);
        config.n_iterations = 8;
        config.burn_in = 4;
        let draws = run_chains(&panel, &spec, &cfg, &config).unwrap();
        for s in &draws.snapshots {
            assert!(s.state.t_cp.is_none());
            assert!(s.state.gamma.is_none());
            assert!(s.state.beta2.is_empty());
        }
        assert!(!draws.layout.param_names().iter().any(|n| n == "T" || n.starts_with("gamma")));
    }

    #[test]
    fn fixed_changepoint_model_pins_t() {
        let records = vec![
            rec("a", 1993, false, true),
            rec("a", 1996, true, false),
            rec("b", 1994, false, true),
            rec("b", 1997, true, true),
        ];
        let (panel, _) = Panel::from_records(records, PanelOptions::default()).unwrap();
        let spec = ModelSpec::model(8, &(1992..=1996).collect::<Vec<_>>()).unwrap();
        let cfg = DesignConfig::for_panel(&panel);
        let mut config = SamplerConfig::new(3);
        config.n_iterations = 30;
        config.burn_in = 10;
        let draws = run_chains(&panel, &spec, &cfg, &config).unwrap();
        assert!(draws.snapshots.iter().all(|s| s.state.t_cp == Some(1995)));
        assert!(draws.snapshots.iter().all(|s| s.state.gamma.is_none()));
    }

    #[test]
    fn runs_are_deterministic_given_seed() {
        let records = vec![
            rec("a", 1993, false, true),
            rec("a", 1996, true, false),
            rec("b", 1994, false, true),
            rec("b", 1997, true, true),
        ];
        let (panel, _) = Panel::from_records(records, PanelOptions::default()).unwrap();
        let spec = ModelSpec::default();
        let cfg = DesignConfig::for_panel(&panel);
        let mut config = SamplerConfig::new(99);
        config.n_iterations = 40;
        config.burn_in = 20;
        let a = run_chains(&panel, &spec, &cfg, &config).unwrap();
        let b = run_chains(&panel, &spec, &cfg, &config).unwrap();
        for (x, y) in a.snapshots.iter().zip(&b.snapshots) {
            assert_eq!(x.state.beta1, y.state.beta1);
            assert_eq!(x.state.b, y.state.b);
            assert_eq!(x.state.phi.phi(), y.state.phi.phi());
            assert_eq!(x.state.t_cp, y.state.t_cp);
            assert_eq!(x.log_likelihood, y.log_likelihood);
        }
    }

    #[test]
    fn update_changepoint_degenerate_cases() {
        let panel = empty_panel(2);
        let cfg = DesignConfig::default();
        let mut rng = seeded_stream(5, 0);

        // fixed prior always returns the pinned year
        let spec8 = ModelSpec::model(8, &(1992..=1996).collect::<Vec<_>>()).unwrap();
        let state = initial_state(&panel, &spec8, &cfg, 0.0, &mut rng);
        for _ in 0..5 {
            assert_eq!(update_changepoint(&state, &panel, &spec8, &cfg, &mut rng).unwrap(), Some(1995));
        }

        // a point-mass gamma pins the draw
        let spec1 = ModelSpec::default();
        let mut state = initial_state(&panel, &spec1, &cfg, 0.0, &mut rng);
        state.gamma = Some(vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        for _ in 0..5 {
            assert_eq!(update_changepoint(&state, &panel, &spec1, &cfg, &mut rng).unwrap(), Some(1993));
        }
    }

    #[test]
    fn changepoint_uniform_when_likelihood_flat() {
        // beta2 = 0 makes the likelihood invariant to T; with flat gamma the
        // draw must be uniform over the candidates (chi-square GoF).
        let records = vec![
            rec("a", 1993, false, true),
            rec("a", 1996, true, false),
            rec("b", 1994, false, true),
            rec("b", 1997, true, true),
        ];
        let (panel, _) = Panel::from_records(records, PanelOptions::default()).unwrap();
        let spec = ModelSpec::default();
        let cfg = DesignConfig::for_panel(&panel);
        let mut rng = seeded_stream(17, 0);
        let mut state = initial_state(&panel, &spec, &cfg, 0.0, &mut rng);
        state.beta2 = vec![0.0; 4];
        state.gamma = Some(vec![0.2; 5]);
        let n = 10_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            let t = update_changepoint(&state, &panel, &spec, &cfg, &mut rng).unwrap().unwrap();
            counts[(t - 1992) as usize] += 1;
        }
        let expected = n as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 1% critical value of chi-square with 4 degrees of freedom
        assert!(chi2 < 13.2767, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn gamma_update_is_conjugate() {
        let spec = ModelSpec::default(); // Dir(1,1,1,6,1)
        let panel = empty_panel(1);
        let cfg = DesignConfig::default();
        let mut rng = seeded_stream(29, 0);
        let mut state = initial_state(&panel, &spec, &cfg, 0.0, &mut rng);
        state.t_cp = Some(1995);
        let n = 60_000;
        let mut m95 = 0.0;
        for _ in 0..n {
            let g = update_gamma(&state, &spec, &mut rng).unwrap();
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            m95 += g[3];
        }
        // posterior Dir(1,1,1,7,1): E[gamma_95] = 7/11
        assert!((m95 / n as f64 - 7.0 / 11.0).abs() < 0.01);

        let spec7 = ModelSpec::model(7, &(1992..=1996).collect::<Vec<_>>()).unwrap();
        assert!(update_gamma(&state, &spec7, &mut rng).is_err());
    }

    #[test]
    fn random_effect_prior_recovery_without_observations() {
        // a cluster with no records draws marginally from the bridge prior
        let panel = empty_panel(1);
        let spec = ModelSpec::default();
        let cfg = DesignConfig::default();
        let mut rng = seeded_stream(31, 0);
        let mut state = initial_state(&panel, &spec, &cfg, 0.0, &mut rng);
        state.phi = BridgeParam::new(0.7).unwrap();
        let tuning = SliceTuningSet::default();
        let n = 60_000;
        let mut s2 = 0.0;
        let mut b = 0.0;
        for _ in 0..n {
            b = update_random_effect(0, &state, &panel, &spec, &cfg, &tuning, &mut rng).unwrap();
            state.b[0] = b;
            s2 += b * b;
        }
        let _ = b;
        let var = s2 / n as f64;
        let want = BridgeParam::new(0.7).unwrap().variance();
        assert!((var / want - 1.0).abs() < 0.03, "var {var} want {want}");
    }

    #[test]
    fn informative_cluster_pulls_random_effect_positive() {
        // twenty all-positive outcomes with zero coefficients: the
        // conditional mean of B must be positive (checked against the
        // quadrature mean of the true conditional)
        let mut records = Vec::new();
        for j in 0..20 {
            records.push(rec("a", 1990 + (j % 10), false, true));
        }
        records.push(rec("z", 1990, false, true));
        records.push(rec("z", 1991, false, false));
        let (panel, _) = Panel::from_records(records, PanelOptions::default()).unwrap();
        let spec = ModelSpec::model(7, &(1992..=1996).collect::<Vec<_>>()).unwrap();
        let cfg = DesignConfig::for_panel(&panel);
        let mut rng = seeded_stream(37, 0);
        let mut state = initial_state(&panel, &spec, &cfg, 0.0, &mut rng);
        state.beta1 = vec![0.0; cfg.x1_dim()];
        state.phi = BridgeParam::new(0.6).unwrap();
        let tuning = SliceTuningSet::default();

        let cluster_a = panel.cluster_index("a").unwrap();
        let n = 20_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let b = update_random_effect(cluster_a, &state, &panel, &spec, &cfg, &tuning, &mut rng).unwrap();
            state.b[cluster_a] = b;
            sum += b;
        }
        let mc_mean = sum / n as f64;

        let d = BridgeParam::new(0.6).unwrap();
        let target = |v: f64| (20.0 * crate::bridge::log_logistic(v) + d.log_pdf(v)).exp();
        let quad_mean = crate::quad::density_mean(target, -40.0, 60.0, 1e-12);
        assert!(quad_mean > 0.0);
        assert!((mc_mean - quad_mean).abs() < 0.1, "mc {mc_mean} quad {quad_mean}");
    }

    #[test]
    fn phi_posterior_concentrates_on_generating_value() {
        // B drawn i.i.d. from the bridge law at 0.8: the phi conditional
        // given those effects concentrates near 0.8
        let mut rng = seeded_stream(43, 0);
        let gen = BridgeParam::new(0.8).unwrap();
        let b: Vec<f64> = gen.sample(&mut rng, 500).unwrap();
        let panel = empty_panel(500);
        let spec = ModelSpec::model(4, &(1992..=1996).collect::<Vec<_>>()).unwrap();
        let cfg = DesignConfig::default();
        let tuning = SliceTuningSet::default();
        let mut state = initial_state(&panel, &spec, &cfg, 0.0, &mut rng);
        state.b = b;
        let n = 5_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let p = update_phi(&state, &panel, &spec, &cfg, &tuning, &mut rng).unwrap();
            state.phi = BridgeParam::new(p).unwrap();
            acc += p;
        }
        let mean = acc / n as f64;
        assert!((mean - 0.8).abs() < 0.05, "phi posterior mean {mean}");
    }

    #[test]
    fn collinear_columns_mix_and_identify_their_sum() {
        // every record post-change and a repeat offense: intercept, repeat,
        // change-point and interaction columns are identical, so only their
        // sum is identifiable; the sampler must still mix and recover it
        let mut rng = seeded_stream(44, 0);
        let gen = BridgeParam::new(0.75).unwrap();
        let total = 0.4; // 0.5 + 0.3 - 0.6 + 0.2
        let mut records = Vec::new();
        for i in 0..400 {
            let id = format!("y{i}");
            let b_i: f64 = gen.sample_one(&mut rng);
            for _ in 0..2 {
                let p = crate::bridge::logistic(b_i + total);
                records.push(ChargeRecord {
                    youth_id: id.clone(),
                    year: 1995,
                    age: 14.6,
                    repeat_offense: true,
                    severe: false,
                    outcome: rng.random::<f64>() < p,
                });
            }
        }
        let (panel, _) = Panel::from_records(records, PanelOptions::default()).unwrap();
        let spec = ModelSpec::model(8, &(1992..=1996).collect::<Vec<_>>()).unwrap();
        let cfg = DesignConfig {
            age_center: 14.6,
            year_center: 1995.0,
            notification: crate::model::NotificationCoding::Excluded,
        };
        let mut config = SamplerConfig::new(45);
        config.n_iterations = 3_000;
        config.burn_in = 1_000;
        config.n_chains = 2;
        let draws = run_chains(&panel, &spec, &cfg, &config).unwrap();

        let sums: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                draws
                    .snapshots
                    .iter()
                    .filter(|s| s.chain == c)
                    .map(|s| {
                        s.state.beta1[0] + s.state.beta1[2] + s.state.beta2[0] + s.state.beta2[3]
                    })
                    .collect()
            })
            .collect();
        let pooled: Vec<f64> = sums.concat();
        let m = mean(&pooled);
        let sd = variance(&pooled).sqrt();
        assert!((m - total).abs() < 2.0 * sd + 0.1, "sum {m} vs {total} (sd {sd})");
        // the identifiable functional mixes across chains
        let psrf = psrf_from_chains(&sums).unwrap();
        assert!(psrf < 1.1, "psrf of identifiable sum {psrf}");
    }

    #[test]
    fn updates_are_reproducible_for_frozen_rng() {
        let panel = empty_panel(2);
        let spec = ModelSpec::default();
        let cfg = DesignConfig::default();
        let tuning = SliceTuningSet::default();
        let mut r1 = seeded_stream(8, 3);
        let mut r2 = seeded_stream(8, 3);
        let state = initial_state(&panel, &spec, &cfg, 0.0, &mut seeded_stream(1, 1));
        assert_eq!(
            update_random_effect(0, &state, &panel, &spec, &cfg, &tuning, &mut r1).unwrap(),
            update_random_effect(0, &state, &panel, &spec, &cfg, &tuning, &mut r2).unwrap()
        );
        assert_eq!(
            update_phi(&state, &panel, &spec, &cfg, &tuning, &mut r1).unwrap(),
            update_phi(&state, &panel, &spec, &cfg, &tuning, &mut r2).unwrap()
        );
        assert_eq!(
            update_gamma(&state, &spec, &mut r1).unwrap(),
            update_gamma(&state, &spec, &mut r2).unwrap()
        );
    }

    #[test]
    fn collapsed_and_explicit_gamma_agree_on_t_posterior() {
        // tiny informative panel: the posterior over T must match between
        // the explicit-gamma and collapsed samplers
        let mut records = Vec::new();
        for i in 0..6 {
            let id = format!("y{i}");
            records.push(rec(&id, 1992 + (i % 3), false, true));
            records.push(rec(&id, 1995, true, false));
            records.push(rec(&id, 1996, true, false));
        }
        let (panel, _) = Panel::from_records(records, PanelOptions::default()).unwrap();
        let spec = ModelSpec::default();
        let cfg = DesignConfig::for_panel(&panel);

        let run = |collapse: bool, seed: u64| {
            let mut config = SamplerConfig::new(seed);
            config.n_iterations = 4_000;
            config.burn_in = 500;
            config.n_chains = 1;
            config.collapse_gamma = collapse;
            let draws = run_chains(&panel, &spec, &cfg, &config).unwrap();
            let mut freq = [0.0; 5];
            for s in &draws.snapshots {
                freq[(s.state.t_cp.unwrap() - 1992) as usize] += 1.0;
            }
            let total: f64 = freq.iter().sum();
            freq.map(|f| f / total)
        };
        let explicit = run(false, 41);
        let collapsed = run(true, 42);
        for j in 0..5 {
            assert!(
                (explicit[j] - collapsed[j]).abs() < 0.06,
                "year {} explicit {} collapsed {}",
                1992 + j,
                explicit[j],
                collapsed[j]
            );
        }
    }

    #[test]
    fn psrf_oracles() {
        // two i.i.d. standard normal chains: PSRF within [0.99, 1.02]
        let mut rng = seeded_stream(51, 0);
        let chains: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..5_000).map(|_| standard_normal(&mut rng)).collect())
            .collect();
        let r = psrf_from_chains(&chains).unwrap();
        assert!((0.99..=1.02).contains(&r), "psrf {r}");

        // disjoint means: far above 1.5
        let shifted: Vec<Vec<f64>> = vec![
            chains[0].clone(),
            chains[1].iter().map(|x| x + 10.0).collect(),
        ];
        let r = psrf_from_chains(&shifted).unwrap();
        assert!(r > 1.5, "psrf {r}");

        // constant parameter: 1 by convention
        let constant = vec![vec![2.5; 100], vec![2.5; 100]];
        assert_eq!(psrf_from_chains(&constant).unwrap(), 1.0);
    }

    #[test]
    fn gelman_rubin_requires_two_chains() {
        let panel = empty_panel(2);
        let spec = ModelSpec::default();
        let cfg = DesignConfig::default();
        let mut config = SamplerConfig::new(7);
        config.n_iterations = 20;
        config.burn_in = 10;
        config.n_chains = 1;
        let draws = run_chains(&panel, &spec, &cfg, &config).unwrap();
        assert!(matches!(gelman_rubin(&draws, "phi"), Err(Error::SingleChain(1))));
    }

    #[test]
    fn acf_and_ess_oracles() {
        let panel = empty_panel(1);
        let spec = ModelSpec::model(7, &(1992..=1996).collect::<Vec<_>>()).unwrap();
        let cfg = DesignConfig::default();
        let layout = ParamLayout::for_run(&panel, &spec, &cfg);

        let wrap = |chains: Vec<Vec<f64>>| {
            let mut snaps = Vec::new();
            for (c, chain) in chains.iter().enumerate() {
                for (i, &v) in chain.iter().enumerate() {
                    snaps.push(Snapshot {
                        chain: c,
                        iteration: i + 1,
                        state: ChainState {
                            beta1: vec![0.0; 6],
                            beta2: vec![],
                            b: vec![v],
                            phi: BridgeParam::new(0.5).unwrap(),
                            t_cp: None,
                            gamma: None,
                        },
                        log_likelihood: 0.0,
                        obs_log_lik: vec![],
                    });
                }
            }
            PosteriorDraws { snapshots: snaps, n_chains: chains.len(), layout: layout.clone() }
        };

        // i.i.d. draws: lag-1 autocorrelation within 2/sqrt(n); lag 0 exactly 1
        let mut rng = seeded_stream(61, 0);
        let n = 20_000;
        let iid: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
        let draws = wrap(vec![iid]);
        let (acf, ess) = autocorrelation_and_ess(&draws, "B.0", 40).unwrap();
        assert_eq!(acf[0], 1.0);
        assert!(acf[1].abs() < 2.0 / (n as f64).sqrt() * 2.0, "acf1 {}", acf[1]);
        assert!(ess > 0.8 * n as f64, "ess {ess}");

        // AR(1) with rho = 0.9: lag-1 autocorrelation close to 0.9
        let mut x = 0.0;
        let ar: Vec<f64> = (0..n)
            .map(|_| {
                x = 0.9 * x + standard_normal(&mut rng) * (1.0f64 - 0.81).sqrt();
                x
            })
            .collect();
        let draws = wrap(vec![ar]);
        let (acf, ess) = autocorrelation_and_ess(&draws, "B.0", 200).unwrap();
        assert!((acf[1] - 0.9).abs() < 0.02, "acf1 {}", acf[1]);
        // theoretical integrated autocorrelation time is (1+rho)/(1-rho) = 19
        assert!(ess < 0.12 * n as f64, "ess {ess}");

        // max_lag must stay below the retained length
        assert!(autocorrelation_and_ess(&draws, "B.0", n).is_err());
    }
}
