//! Model comparison and adequacy: DIC with its effective parameter count,
//! conditional predictive ordinates with the pseudo-marginal likelihood,
//! and the posterior-predictive chi-square p-value.

use rand::{Rng, RngExt};

use crate::bridge::BridgeParam;
use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;
use crate::model::{
    log_likelihood, marginal_prob, observation_log_likelihoods, ChainState, DesignConfig, Panel,
};
use crate::rng::log_sum_exp;
use crate::stats::mean;

/// Whether the deviance conditions on the youth random effects (the
/// default) or integrates them out through the attenuated link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DevianceKind {
    Conditional,
    Marginalized,
}

/// Deviance information criterion decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DicResult {
    pub d_bar: f64,
    pub d_at_plugin: f64,
    pub p_d: f64,
    pub dic: f64,
}

/// Plug-in state: posterior means of the continuous parameters, posterior
/// mode of the discrete change-point year.
pub fn plugin_state(draws: &PosteriorDraws) -> Result<ChainState> {
    let snaps = &draws.snapshots;
    if snaps.is_empty() {
        return Err(Error::NoDraws);
    }
    let g = snaps.len() as f64;
    let first = &snaps[0].state;

    let mut beta1 = vec![0.0; first.beta1.len()];
    let mut beta2 = vec![0.0; first.beta2.len()];
    let mut b = vec![0.0; first.b.len()];
    let mut phi = 0.0;
    let mut gamma = first.gamma.as_ref().map(|gm| vec![0.0; gm.len()]);
    let mut t_counts: std::collections::BTreeMap<i32, usize> = std::collections::BTreeMap::new();

    for s in snaps {
        for (acc, v) in beta1.iter_mut().zip(&s.state.beta1) {
            *acc += v / g;
        }
        for (acc, v) in beta2.iter_mut().zip(&s.state.beta2) {
            *acc += v / g;
        }
        for (acc, v) in b.iter_mut().zip(&s.state.b) {
            *acc += v / g;
        }
        phi += s.state.phi.phi() / g;
        if let (Some(acc), Some(gm)) = (gamma.as_mut(), s.state.gamma.as_ref()) {
            for (a, v) in acc.iter_mut().zip(gm) {
                *a += v / g;
            }
        }
        if let Some(t) = s.state.t_cp {
            *t_counts.entry(t).or_insert(0) += 1;
        }
    }

    // posterior mode of T; ties resolve to the earliest year
    let t_cp = t_counts.iter().max_by_key(|(_, &c)| c).map(|(&t, _)| t);
    Ok(ChainState {
        beta1,
        beta2,
        b,
        phi: BridgeParam::new(phi.clamp(crate::bridge::PHI_MIN, crate::bridge::PHI_MAX))?,
        t_cp,
        gamma,
    })
}

fn deviance(state: &ChainState, panel: &Panel, cfg: &DesignConfig, kind: DevianceKind) -> f64 {
    match kind {
        DevianceKind::Conditional => -2.0 * log_likelihood(state, panel, cfg),
        DevianceKind::Marginalized => {
            let mut ll = 0.0;
            for r in panel.records() {
                let p = marginal_prob(&state.beta1, &state.beta2, &state.phi, r, state.t_cp, cfg);
                ll += if r.outcome { p.ln() } else { (1.0 - p).ln() };
            }
            -2.0 * ll
        }
    }
}

/// Posterior-mean deviance, plug-in deviance, effective parameter count and
/// DIC.
pub fn compute_dic(
    draws: &PosteriorDraws,
    panel: &Panel,
    cfg: &DesignConfig,
    kind: DevianceKind,
) -> Result<DicResult> {
    if draws.snapshots.is_empty() {
        return Err(Error::NoDraws);
    }
    let d_bar = match kind {
        DevianceKind::Conditional => {
            // stored per-draw log likelihoods are the conditional ones
            mean(&draws.snapshots.iter().map(|s| -2.0 * s.log_likelihood).collect::<Vec<_>>())
        }
        DevianceKind::Marginalized => mean(
            &draws
                .snapshots
                .iter()
                .map(|s| deviance(&s.state, panel, cfg, kind))
                .collect::<Vec<_>>(),
        ),
    };
    let plugin = plugin_state(draws)?;
    let d_at_plugin = deviance(&plugin, panel, cfg, kind);
    let p_d = d_bar - d_at_plugin;
    Ok(DicResult {
        d_bar,
        d_at_plugin,
        p_d,
        dic: d_bar + p_d,
    })
}

/// Conditional predictive ordinates and the log pseudo-marginal likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct CpoResult {
    /// Per-record CPO (harmonic-mean estimate).
    pub cpo: Vec<f64>,
    pub lpml: f64,
    /// Number of records whose CPO underflowed to zero.
    pub underflows: usize,
}

/// Harmonic-mean CPO per observation: `[mean_g 1/f(y_ij | theta_g)]^-1`,
/// evaluated in log space.
pub fn compute_cpo_lpml(draws: &PosteriorDraws, panel: &Panel, cfg: &DesignConfig) -> Result<CpoResult> {
    if draws.snapshots.is_empty() {
        return Err(Error::NoDraws);
    }
    let n_obs = panel.n_records();
    let g = draws.snapshots.len();
    let lg = (g as f64).ln();

    // per-record vectors of -log f across draws
    let mut neg_logf = vec![Vec::with_capacity(g); n_obs];
    for s in &draws.snapshots {
        let obs = if s.obs_log_lik.len() == n_obs {
            s.obs_log_lik.clone()
        } else {
            observation_log_likelihoods(&s.state, panel, cfg)
        };
        for (j, l) in obs.into_iter().enumerate() {
            neg_logf[j].push(-l);
        }
    }

    let mut cpo = Vec::with_capacity(n_obs);
    let mut lpml = 0.0;
    let mut underflows = 0;
    for v in &neg_logf {
        let log_cpo = -(log_sum_exp(v) - lg);
        lpml += log_cpo;
        let c = log_cpo.exp();
        if c == 0.0 {
            underflows += 1;
        }
        cpo.push(c);
    }
    Ok(CpoResult { cpo, lpml, underflows })
}

/// Posterior-predictive check result.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PValueResult {
    pub p: f64,
    /// Number of probability clampings applied inside the discrepancy.
    pub clamped: usize,
}

const P_CLAMP: f64 = 1e-12;

fn chi_square_discrepancy(y: &[bool], p: &[f64], clamped: &mut usize) -> f64 {
    y.iter()
        .zip(p)
        .map(|(&yi, &pi)| {
            let mut pc = pi;
            if !(P_CLAMP..=1.0 - P_CLAMP).contains(&pc) {
                pc = pc.clamp(P_CLAMP, 1.0 - P_CLAMP);
                *clamped += 1;
            }
            let d = (yi as u8 as f64) - pc;
            d * d / (pc * (1.0 - pc))
        })
        .sum()
}

/// Bayesian p-value: the fraction of retained draws whose replicate
/// chi-square discrepancy exceeds the observed one.
pub fn bayesian_pvalue<R: Rng + ?Sized>(
    draws: &PosteriorDraws,
    panel: &Panel,
    cfg: &DesignConfig,
    rng: &mut R,
) -> Result<PValueResult> {
    if draws.snapshots.is_empty() {
        return Err(Error::NoDraws);
    }
    let y_obs: Vec<bool> = panel.records().iter().map(|r| r.outcome).collect();
    let mut exceed = 0usize;
    let mut clamped = 0usize;
    for s in &draws.snapshots {
        // conditional success probabilities at this draw
        let p: Vec<f64> = panel
            .records()
            .iter()
            .enumerate()
            .map(|(idx, rec)| {
                let ci = panel.record_cluster(idx);
                let dv = crate::model::design_vectors(rec, s.state.t_cp, cfg);
                crate::bridge::logistic(
                    s.state.b[ci]
                        + crate::model::linear_predictor(&s.state.beta1, &s.state.beta2, &dv),
                )
            })
            .collect();
        let chi_obs = chi_square_discrepancy(&y_obs, &p, &mut clamped);
        let y_rep: Vec<bool> = p.iter().map(|&pi| rng.random::<f64>() < pi).collect();
        let chi_rep = chi_square_discrepancy(&y_rep, &p, &mut clamped);
        if chi_rep > chi_obs {
            exceed += 1;
        }
    }
    Ok(PValueResult {
        p: exceed as f64 / draws.snapshots.len() as f64,
        clamped,
    })
}

/// Bundle of the fit diagnostics written into run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub d_bar: f64,
    pub d_at_plugin: f64,
    pub p_d: f64,
    pub dic: f64,
    pub lpml: f64,
    pub cpo_underflows: usize,
    pub bayesian_p: f64,
    pub discrepancy_clamped: usize,
    pub deviance: DevianceKind,
}

impl FitSummary {
    pub fn compute<R: Rng + ?Sized>(
        draws: &PosteriorDraws,
        panel: &Panel,
        cfg: &DesignConfig,
        kind: DevianceKind,
        rng: &mut R,
    ) -> Result<FitSummary> {
        let dic = compute_dic(draws, panel, cfg, kind)?;
        let cpo = compute_cpo_lpml(draws, panel, cfg)?;
        let pv = bayesian_pvalue(draws, panel, cfg, rng)?;
        Ok(FitSummary {
            d_bar: dic.d_bar,
            d_at_plugin: dic.d_at_plugin,
            p_d: dic.p_d,
            dic: dic.dic,
            lpml: cpo.lpml,
            cpo_underflows: cpo.underflows,
            bayesian_p: pv.p,
            discrepancy_clamped: pv.clamped,
            deviance: kind,
        })
    }
}
