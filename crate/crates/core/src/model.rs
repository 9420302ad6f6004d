//! Longitudinal panel model: charge records clustered by youth, the
//! change-point design basis, and the conditional/marginal probability,
//! likelihood and joint posterior evaluations.

use crate::bridge::{log_logistic, logistic, marginalize_logit, BridgeParam};
use crate::error::{Error, Result};
use crate::priors::{log_dirichlet_density, log_prior_beta, log_prior_phi, ChangepointPrior, ModelSpec};

/// One binary-outcome observation: a charge against a youth in a given year.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeRecord {
    pub youth_id: String,
    pub year: i32,
    pub age: f64,
    pub repeat_offense: bool,
    pub severe: bool,
    /// `true` = the prosecutor moved the charge forward.
    pub outcome: bool,
}

/// Structural options of a panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelOptions {
    /// Inclusive study window for the calendar year.
    pub window: (i32, i32),
    /// Ordered candidate change-point years.
    pub candidate_years: Vec<i32>,
    /// When `true`, clusters with fewer than two records are rejected;
    /// otherwise they are admitted with a warning.
    pub strict_clusters: bool,
}

impl Default for PanelOptions {
    fn default() -> Self {
        PanelOptions {
            window: (1988, 2005),
            candidate_years: (1992..=1996).collect(),
            strict_clusters: true,
        }
    }
}

/// Validated panel: records grouped into youth clusters, year-sorted within
/// each cluster.  Immutable after construction.
#[derive(Debug, Clone)]
pub struct Panel {
    records: Vec<ChargeRecord>,
    cluster_bounds: Vec<(usize, usize)>,
    cluster_ids: Vec<String>,
    record_cluster: Vec<usize>,
    id_lookup: Vec<(String, usize)>,
    options: PanelOptions,
}

impl Panel {
    /// Group, sort and validate records.  Returns the panel plus any
    /// lenient-mode warnings.
    pub fn from_records(records: Vec<ChargeRecord>, options: PanelOptions) -> Result<(Self, Vec<String>)> {
        for (i, r) in records.iter().enumerate() {
            if r.year < options.window.0 || r.year > options.window.1 {
                return Err(Error::data(
                    Some(i + 1),
                    format!(
                        "year {} outside study window {}..={}",
                        r.year, options.window.0, options.window.1
                    ),
                ));
            }
            if !(r.age > 0.0) {
                return Err(Error::data(Some(i + 1), format!("age must be positive, got {}", r.age)));
            }
        }

        // Clusters in order of first appearance; stable year sort inside.
        let mut cluster_ids: Vec<String> = Vec::new();
        let mut members: Vec<Vec<ChargeRecord>> = Vec::new();
        for r in records {
            match cluster_ids.iter().position(|id| *id == r.youth_id) {
                Some(ix) => members[ix].push(r),
                None => {
                    cluster_ids.push(r.youth_id.clone());
                    members.push(vec![r]);
                }
            }
        }

        let mut warnings = Vec::new();
        for (id, m) in cluster_ids.iter().zip(&members) {
            if m.len() < 2 {
                if options.strict_clusters {
                    return Err(Error::data(
                        None,
                        format!("youth {id:?} has {} record(s); panels require at least 2 per cluster", m.len()),
                    ));
                }
                warnings.push(format!("youth {id:?} has {} record(s) (< 2)", m.len()));
            }
        }

        let mut flat = Vec::new();
        let mut cluster_bounds = Vec::new();
        let mut record_cluster = Vec::new();
        for (ci, mut m) in members.into_iter().enumerate() {
            m.sort_by_key(|r| r.year);
            let start = flat.len();
            record_cluster.extend(std::iter::repeat(ci).take(m.len()));
            flat.extend(m);
            cluster_bounds.push((start, flat.len()));
        }

        let mut id_lookup: Vec<(String, usize)> =
            cluster_ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        id_lookup.sort();

        Ok((
            Panel {
                records: flat,
                cluster_bounds,
                cluster_ids,
                record_cluster,
                id_lookup,
                options,
            },
            warnings,
        ))
    }

    /// A panel of `ids.len()` clusters with no observations, for prior
    /// recovery runs where the likelihood is identically zero.
    pub fn empty_with_clusters(ids: Vec<String>, options: PanelOptions) -> Self {
        let n = ids.len();
        let mut id_lookup: Vec<(String, usize)> =
            ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        id_lookup.sort();
        Panel {
            records: Vec::new(),
            cluster_bounds: vec![(0, 0); n],
            cluster_ids: ids,
            record_cluster: Vec::new(),
            id_lookup,
            options,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_bounds.len()
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[ChargeRecord] {
        &self.records
    }

    pub fn cluster_records(&self, cluster: usize) -> &[ChargeRecord] {
        let (a, b) = self.cluster_bounds[cluster];
        &self.records[a..b]
    }

    pub fn cluster_range(&self, cluster: usize) -> (usize, usize) {
        self.cluster_bounds[cluster]
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.cluster_ids
    }

    /// Cluster index of a record already in the panel.
    pub fn record_cluster(&self, record_idx: usize) -> usize {
        self.record_cluster[record_idx]
    }

    /// Cluster index for a youth id, if present.
    pub fn cluster_index(&self, youth_id: &str) -> Option<usize> {
        self.id_lookup
            .binary_search_by(|(id, _)| id.as_str().cmp(youth_id))
            .ok()
            .map(|pos| self.id_lookup[pos].1)
    }

    pub fn candidate_years(&self) -> &[i32] {
        &self.options.candidate_years
    }

    pub fn window(&self) -> (i32, i32) {
        self.options.window
    }

    pub fn options(&self) -> &PanelOptions {
        &self.options
    }

    /// Median age across records (the default centering constant).
    pub fn median_age(&self) -> f64 {
        if self.records.is_empty() {
            return DEFAULT_AGE_CENTER;
        }
        let mut ages: Vec<f64> = self.records.iter().map(|r| r.age).collect();
        ages.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = ages.len();
        if n % 2 == 1 {
            ages[n / 2]
        } else {
            0.5 * (ages[n / 2 - 1] + ages[n / 2])
        }
    }

    /// Pooled fraction of records with a positive outcome.
    pub fn observed_rate(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NAN;
        }
        self.records.iter().filter(|r| r.outcome).count() as f64 / self.records.len() as f64
    }
}

/// Fallback age centering when a panel carries no records.
pub const DEFAULT_AGE_CENTER: f64 = 14.6;

/// How the post-notification indicator is coded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NotificationCoding {
    /// Indicator of `year >= y` (default, with y = 2000).
    FromYear(i32),
    /// Indicator of the single year `y`.
    SingleYear(i32),
    /// Drop the indicator from the design.
    Excluded,
}

/// Covariate coding configuration shared by all design-vector construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignConfig {
    pub age_center: f64,
    pub year_center: f64,
    pub notification: NotificationCoding,
}

impl DesignConfig {
    pub fn for_panel(panel: &Panel) -> Self {
        DesignConfig {
            age_center: panel.median_age(),
            year_center: 1995.0,
            notification: NotificationCoding::FromYear(2000),
        }
    }

    pub fn x1_dim(&self) -> usize {
        match self.notification {
            NotificationCoding::Excluded => 5,
            _ => 6,
        }
    }

    pub fn x1_names(&self) -> Vec<&'static str> {
        let mut names = vec!["intercept", "age", "repeat_offense", "severe", "year"];
        if self.notification != NotificationCoding::Excluded {
            names.push("notification");
        }
        names
    }
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            age_center: DEFAULT_AGE_CENTER,
            year_center: 1995.0,
            notification: NotificationCoding::FromYear(2000),
        }
    }
}

/// Number of change-point basis terms.
pub const X2_DIM: usize = 4;

pub fn x2_names() -> [&'static str; X2_DIM] {
    ["changepoint", "cp_linear", "cp_quadratic", "cp_x_repeat"]
}

/// Observed-covariate part of the design: intercept, centered age, repeat
/// indicator, severity indicator, centered year, and (optionally) the
/// post-notification indicator.
pub fn design_x1(record: &ChargeRecord, cfg: &DesignConfig) -> Vec<f64> {
    let mut x = Vec::with_capacity(cfg.x1_dim());
    x.push(1.0);
    x.push(record.age - cfg.age_center);
    x.push(record.repeat_offense as u8 as f64);
    x.push(record.severe as u8 as f64);
    x.push(record.year as f64 - cfg.year_center);
    match cfg.notification {
        NotificationCoding::FromYear(y) => x.push((record.year >= y) as u8 as f64),
        NotificationCoding::SingleYear(y) => x.push((record.year == y) as u8 as f64),
        NotificationCoding::Excluded => {}
    }
    x
}

/// Change-point basis at change-point year `t_cp`: indicator, linear and
/// quadratic post-change terms, and the repeat-offense interaction.
/// `year == t_cp` counts as post-change.
pub fn design_x2(record: &ChargeRecord, t_cp: i32) -> [f64; X2_DIM] {
    if record.year < t_cp {
        return [0.0; X2_DIM];
    }
    let d = (record.year - t_cp) as f64;
    [1.0, d, d * d, record.repeat_offense as u8 as f64]
}

/// Full design vector; `x2` is empty when the model carries no change-point.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignVector {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

pub fn design_vectors(record: &ChargeRecord, t_cp: Option<i32>, cfg: &DesignConfig) -> DesignVector {
    DesignVector {
        x1: design_x1(record, cfg),
        x2: match t_cp {
            Some(t) => design_x2(record, t).to_vec(),
            None => Vec::new(),
        },
    }
}

/// Current position of one Gibbs chain.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub beta1: Vec<f64>,
    /// Change-point coefficients; empty for a no-change-point model.
    pub beta2: Vec<f64>,
    /// Youth random effects, one per panel cluster.
    pub b: Vec<f64>,
    pub phi: BridgeParam<f64>,
    /// Current change-point year, absent for a no-change-point model.
    pub t_cp: Option<i32>,
    /// Probabilities over candidate years, present only under a Dirichlet
    /// change-point prior with explicit mixing weights.
    pub gamma: Option<Vec<f64>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fixed-effect linear predictor `beta1 . x1 + beta2 . x2`.
pub fn linear_predictor(beta1: &[f64], beta2: &[f64], dv: &DesignVector) -> f64 {
    dot(beta1, &dv.x1) + dot(beta2, &dv.x2)
}

/// Conditional probability of a positive outcome given the youth's random
/// effect.  The record's youth id must map to a cluster of the panel.
pub fn conditional_prob(
    state: &ChainState,
    panel: &Panel,
    record: &ChargeRecord,
    cfg: &DesignConfig,
) -> Result<f64> {
    let ci = panel
        .cluster_index(&record.youth_id)
        .ok_or_else(|| Error::UnknownYouth(record.youth_id.clone()))?;
    let dv = design_vectors(record, state.t_cp, cfg);
    Ok(logistic(state.b[ci] + linear_predictor(&state.beta1, &state.beta2, &dv)))
}

/// Marginal probability of a positive outcome, integrating the bridge
/// random effect out: `logistic(phi * (beta . x))`.
pub fn marginal_prob(
    beta1: &[f64],
    beta2: &[f64],
    phi: &BridgeParam<f64>,
    record: &ChargeRecord,
    t_cp: Option<i32>,
    cfg: &DesignConfig,
) -> f64 {
    let dv = design_vectors(record, t_cp, cfg);
    marginalize_logit(linear_predictor(beta1, beta2, &dv), phi)
}

/// Bernoulli log likelihood of the whole panel under `state`.
pub fn log_likelihood(state: &ChainState, panel: &Panel, cfg: &DesignConfig) -> f64 {
    let mut total = 0.0;
    for (idx, rec) in panel.records().iter().enumerate() {
        let ci = panel.record_cluster(idx);
        let dv = design_vectors(rec, state.t_cp, cfg);
        let eta = state.b[ci] + linear_predictor(&state.beta1, &state.beta2, &dv);
        total += if rec.outcome { log_logistic(eta) } else { log_logistic(-eta) };
    }
    total
}

/// Per-record conditional log densities `log f(y_ij | state)`, used by the
/// predictive-ordinate machinery.
pub fn observation_log_likelihoods(state: &ChainState, panel: &Panel, cfg: &DesignConfig) -> Vec<f64> {
    panel
        .records()
        .iter()
        .enumerate()
        .map(|(idx, rec)| {
            let ci = panel.record_cluster(idx);
            let dv = design_vectors(rec, state.t_cp, cfg);
            let eta = state.b[ci] + linear_predictor(&state.beta1, &state.beta2, &dv);
            if rec.outcome {
                log_logistic(eta)
            } else {
                log_logistic(-eta)
            }
        })
        .collect()
}

/// Unnormalized log posterior: likelihood plus random-effect, change-point,
/// regression and heterogeneity prior terms.  States outside the prior
/// support yield negative infinity rather than an error.
pub fn log_posterior(state: &ChainState, panel: &Panel, spec: &ModelSpec, cfg: &DesignConfig) -> f64 {
    let mut lp = log_likelihood(state, panel, cfg);

    for &b in &state.b {
        lp += state.phi.log_pdf(b);
    }

    match &spec.changepoint {
        ChangepointPrior::Dirichlet(w) => {
            let (Some(t), Some(gamma)) = (state.t_cp, state.gamma.as_ref()) else {
                return f64::NEG_INFINITY;
            };
            if gamma.len() != w.alpha.len()
                || gamma.iter().any(|&g| !(g > 0.0))
                || (gamma.iter().sum::<f64>() - 1.0).abs() > 1e-12
            {
                return f64::NEG_INFINITY;
            }
            let Some(pos) = w.years.iter().position(|&y| y == t) else {
                return f64::NEG_INFINITY;
            };
            lp += gamma[pos].ln();
            lp += log_dirichlet_density(gamma, &w.alpha);
        }
        ChangepointPrior::Fixed(y) => {
            if state.t_cp != Some(*y) {
                return f64::NEG_INFINITY;
            }
        }
        ChangepointPrior::None => {}
    }

    lp += log_prior_beta(&state.beta1, spec.beta_tau);
    lp += log_prior_beta(&state.beta2, spec.beta_tau);
    lp += log_prior_phi(state.phi.phi(), spec.phi_prior.a, spec.phi_prior.b);
    lp
}

/// Gradient of the log posterior in the continuous regression and
/// random-effect coordinates (the double-exponential prior is
/// nondifferentiable only at exactly zero).
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub b: Vec<f64>,
}

pub fn log_posterior_grad(
    state: &ChainState,
    panel: &Panel,
    spec: &ModelSpec,
    cfg: &DesignConfig,
) -> Gradient {
    let mut g1 = vec![0.0; state.beta1.len()];
    let mut g2 = vec![0.0; state.beta2.len()];
    let mut gb = vec![0.0; state.b.len()];

    for (idx, rec) in panel.records().iter().enumerate() {
        let ci = panel.record_cluster(idx);
        let dv = design_vectors(rec, state.t_cp, cfg);
        let eta = state.b[ci] + linear_predictor(&state.beta1, &state.beta2, &dv);
        let resid = (rec.outcome as u8 as f64) - logistic(eta);
        for (g, x) in g1.iter_mut().zip(&dv.x1) {
            *g += resid * x;
        }
        for (g, x) in g2.iter_mut().zip(&dv.x2) {
            *g += resid * x;
        }
        gb[ci] += resid;
    }

    let tau = spec.beta_tau;
    for (g, &beta) in g1.iter_mut().zip(&state.beta1) {
        *g -= tau * beta.signum();
    }
    for (g, &beta) in g2.iter_mut().zip(&state.beta2) {
        *g -= tau * beta.signum();
    }

    // d/db log f_B(b | phi) = -phi sinh(phi b) / (cosh(phi b) + cos(phi pi))
    let phi = state.phi.phi();
    let c = (phi * std::f64::consts::PI).cos();
    for (g, &b) in gb.iter_mut().zip(&state.b) {
        let x = phi * b;
        let d = if x.abs() > 30.0 {
            -phi * x.signum()
        } else {
            -phi * x.sinh() / (x.cosh() + c)
        };
        *g += d;
    }

    Gradient { beta1: g1, beta2: g2, b: gb }
}
