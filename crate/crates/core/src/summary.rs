//! Posterior summarization: marginal odds-ratio tables, change-point
//! probabilities, and predicted proportion-by-year series.

use crate::error::{Error, Result};
use crate::mcmc::PosteriorDraws;
use crate::model::{design_vectors, linear_predictor, ChargeRecord, DesignConfig, Panel};
use crate::priors::CovariateProfile;
use crate::stats::{central_interval, mean, quantile, std_dev};

/// Mean, standard deviation and central 95% interval of a draw column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryStats {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl SummaryStats {
    pub fn from_draws(xs: &[f64]) -> SummaryStats {
        let (lo, hi) = central_interval(xs, 0.95);
        SummaryStats {
            mean: mean(xs),
            sd: std_dev(xs),
            lo,
            hi,
        }
    }
}

/// One marginal odds-ratio line of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct OddsRatioRow {
    pub label: String,
    pub stats: SummaryStats,
}

/// Posterior evidence about the change-point year.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangepointProb {
    pub year: i32,
    /// Posterior frequency of `T = year` over retained draws.
    pub posterior: f64,
    /// Central 95% interval of the mixing weight, when gamma was sampled.
    pub gamma_interval: Option<(f64, f64)>,
}

/// Observed and predicted proportion for one calendar year.
#[derive(Debug, Clone, PartialEq)]
pub struct YearSeriesRow {
    pub year: i32,
    pub n_records: usize,
    pub observed: Option<f64>,
    pub predicted: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Predicted probability series for one covariate profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSeriesRow {
    pub label: String,
    pub year: i32,
    pub predicted: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Full posterior summary of a fitted run.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub odds_ratios: Vec<OddsRatioRow>,
    pub phi: SummaryStats,
    pub changepoint: Vec<ChangepointProb>,
    pub year_series: Vec<YearSeriesRow>,
    pub profile_series: Vec<ProfileSeriesRow>,
}

fn column(draws: &PosteriorDraws, name: &str) -> Result<Vec<f64>> {
    draws.pooled(name)
}

/// Summarize a posterior draw set: marginal odds ratios `exp(phi beta_k)`
/// per covariate (with the repeat-offense effect reported separately before
/// and after the change-point), the heterogeneity parameter, change-point
/// probabilities, and predicted proportion series (90% bands).
pub fn summarize_posterior(
    draws: &PosteriorDraws,
    panel: &Panel,
    cfg: &DesignConfig,
    profiles: &[(String, CovariateProfile)],
) -> Result<PosteriorSummary> {
    if draws.is_empty() {
        return Err(Error::NoDraws);
    }
    let phi_draws = column(draws, "phi")?;
    let has_cp = !draws.layout.x2_names.is_empty();

    let mut odds_ratios = Vec::new();
    let or_stats = |beta: Vec<f64>| -> SummaryStats {
        let ors: Vec<f64> =
            beta.iter().zip(&phi_draws).map(|(b, p)| (b * p).exp()).collect();
        SummaryStats::from_draws(&ors)
    };

    for name in draws.layout.x1_names.clone() {
        if name == "intercept" {
            continue;
        }
        let beta = column(draws, &format!("beta1.{name}"))?;
        if name == "repeat_offense" && has_cp {
            odds_ratios.push(OddsRatioRow {
                label: "repeat_offense (before changepoint)".into(),
                stats: or_stats(beta.clone()),
            });
            // after the change-point the main effect and interaction combine
            let inter = column(draws, "beta2.cp_x_repeat")?;
            let combined: Vec<f64> = beta.iter().zip(&inter).map(|(a, b)| a + b).collect();
            odds_ratios.push(OddsRatioRow {
                label: "repeat_offense (after changepoint)".into(),
                stats: or_stats(combined),
            });
        } else {
            odds_ratios.push(OddsRatioRow {
                label: name.clone(),
                stats: or_stats(beta),
            });
        }
    }
    for name in draws.layout.x2_names.clone() {
        let beta = column(draws, &format!("beta2.{name}"))?;
        odds_ratios.push(OddsRatioRow {
            label: name.clone(),
            stats: or_stats(beta),
        });
    }

    let phi = SummaryStats::from_draws(&phi_draws);

    let mut changepoint = Vec::new();
    if draws.layout.has_t {
        let t_draws = column(draws, "T")?;
        let total = t_draws.len() as f64;
        for &year in &draws.layout.candidate_years.clone() {
            let freq = t_draws.iter().filter(|&&t| t as i32 == year).count() as f64 / total;
            let gamma_interval = if draws.layout.has_gamma {
                let g = column(draws, &format!("gamma.{year}"))?;
                Some(central_interval(&g, 0.95))
            } else {
                None
            };
            changepoint.push(ChangepointProb {
                year,
                posterior: freq,
                gamma_interval,
            });
        }
    }

    // Predicted (population-average) proportion by calendar year, with the
    // observed proportion overlaid.
    let (y0, y1) = panel.window();
    let mut year_series = Vec::new();
    for year in y0..=y1 {
        let idx: Vec<usize> = (0..panel.n_records())
            .filter(|&i| panel.records()[i].year == year)
            .collect();
        let observed = if idx.is_empty() {
            None
        } else {
            Some(
                idx.iter().filter(|&&i| panel.records()[i].outcome).count() as f64
                    / idx.len() as f64,
            )
        };
        if idx.is_empty() {
            continue;
        }
        let mut per_draw = Vec::with_capacity(draws.snapshots.len());
        for s in &draws.snapshots {
            let mut acc = 0.0;
            for &i in &idx {
                let r = &panel.records()[i];
                acc += crate::model::marginal_prob(
                    &s.state.beta1,
                    &s.state.beta2,
                    &s.state.phi,
                    r,
                    s.state.t_cp,
                    cfg,
                );
            }
            per_draw.push(acc / idx.len() as f64);
        }
        let (lo, hi) = central_interval(&per_draw, 0.90);
        year_series.push(YearSeriesRow {
            year,
            n_records: idx.len(),
            observed,
            predicted: mean(&per_draw),
            lo,
            hi,
        });
    }

    // Profile series: marginal probability for a fixed covariate profile.
    let mut profile_series = Vec::new();
    for (label, profile) in profiles {
        for year in y0..=y1 {
            let rec = ChargeRecord {
                youth_id: String::new(),
                year,
                age: profile.age,
                repeat_offense: profile.repeat_offense,
                severe: profile.severe,
                outcome: true,
            };
            let per_draw: Vec<f64> = draws
                .snapshots
                .iter()
                .map(|s| {
                    let dv = design_vectors(&rec, s.state.t_cp, cfg);
                    crate::bridge::logistic(
                        s.state.phi.phi() * linear_predictor(&s.state.beta1, &s.state.beta2, &dv),
                    )
                })
                .collect();
            let (lo, hi) = central_interval(&per_draw, 0.90);
            profile_series.push(ProfileSeriesRow {
                label: label.clone(),
                year,
                predicted: mean(&per_draw),
                lo,
                hi,
            });
        }
    }

    Ok(PosteriorSummary {
        odds_ratios,
        phi,
        changepoint,
        year_series,
        profile_series,
    })
}

impl PosteriorSummary {
    /// Human-readable report block.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("marginal odds ratios (mean, sd, 95% interval)\n");
        for row in &self.odds_ratios {
            out.push_str(&format!(
                "  {:<36} {:>8.3} {:>8.3}  ({:.3}, {:.3})\n",
                row.label, row.stats.mean, row.stats.sd, row.stats.lo, row.stats.hi
            ));
        }
        out.push_str(&format!(
            "phi (attenuation): mean {:.3}, sd {:.3}, 95% ({:.3}, {:.3})\n",
            self.phi.mean, self.phi.sd, self.phi.lo, self.phi.hi
        ));
        if !self.changepoint.is_empty() {
            out.push_str("changepoint year posterior\n");
            for c in &self.changepoint {
                match c.gamma_interval {
                    Some((lo, hi)) => out.push_str(&format!(
                        "  P[T={}] = {:.3}   gamma 95% ({:.3}, {:.3})\n",
                        c.year, c.posterior, lo, hi
                    )),
                    None => out.push_str(&format!("  P[T={}] = {:.3}\n", c.year, c.posterior)),
                }
            }
        }
        out
    }

    /// Tidy year series (year, n, observed, predicted, 90% band).
    pub fn year_series_tsv(&self) -> String {
        let mut out = String::from("year\tn\tobserved\tpredicted\tlo90\thi90\n");
        for r in &self.year_series {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.year,
                r.n_records,
                r.observed.map(|o| o.to_string()).unwrap_or_else(|| "NA".into()),
                r.predicted,
                r.lo,
                r.hi
            ));
        }
        out
    }

    /// Tidy profile series (profile, year, predicted, 90% band).
    pub fn profile_series_tsv(&self) -> String {
        let mut out = String::from("profile\tyear\tpredicted\tlo90\thi90\n");
        for r in &self.profile_series {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.label, r.year, r.predicted, r.lo, r.hi
            ));
        }
        out
    }
}

/// Quantiles of one named parameter column (convenience for reports).
pub fn parameter_quantiles(draws: &PosteriorDraws, name: &str, qs: &[f64]) -> Result<Vec<f64>> {
    let xs = draws.pooled(name)?;
    if xs.is_empty() {
        return Err(Error::NoDraws);
    }
    Ok(qs.iter().map(|&q| quantile(&xs, q)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::BridgeParam;
    use crate::mcmc::{ParamLayout, Snapshot};
    use crate::model::{ChainState, NotificationCoding, PanelOptions};
    use crate::priors::ModelSpec;

    fn tiny_panel() -> (Panel, DesignConfig) {
        let mk = |id: &str, year: i32, rep: bool, y: bool| ChargeRecord {
            youth_id: id.into(),
            year,
            age: 14.6,
            repeat_offense: rep,
            severe: true,
            outcome: y,
        };
        let records = vec![
            mk("a", 1993, false, true),
            mk("a", 1996, true, false),
            mk("b", 1994, false, true),
            mk("b", 1996, true, true),
        ];
        let (panel, _) = Panel::from_records(records, PanelOptions::default()).unwrap();
        let cfg = DesignConfig {
            age_center: 14.6,
            year_center: 1995.0,
            notification: NotificationCoding::FromYear(2000),
        };
        (panel, cfg)
    }

    fn constant_draws(panel: &Panel, cfg: &DesignConfig, beta_age: f64, phi: f64, g: usize) -> PosteriorDraws {
        let spec = ModelSpec::default();
        let layout = ParamLayout::for_run(panel, &spec, cfg);
        let state = ChainState {
            beta1: vec![0.0, beta_age, -0.5, 0.2, 0.1, 0.0],
            beta2: vec![-1.0, 0.0, 0.0, 0.6],
            b: vec![0.0; panel.n_clusters()],
            phi: BridgeParam::new(phi).unwrap(),
            t_cp: Some(1995),
            gamma: Some(vec![0.1, 0.1, 0.1, 0.6, 0.1]),
        };
        let snapshots = (0..g)
            .map(|i| Snapshot {
                chain: 0,
                iteration: i + 1,
                state: state.clone(),
                log_likelihood: 0.0,
                obs_log_lik: vec![],
            })
            .collect();
        PosteriorDraws { snapshots, n_chains: 1, layout }
    }

    #[test]
    fn constructed_draws_give_exact_odds_ratio() {
        let (panel, cfg) = tiny_panel();
        // phi pinned at its upper bound, age coefficient at log(1.15):
        // the age odds ratio is exactly 1.15 with zero spread
        let draws = constant_draws(&panel, &cfg, 1.15f64.ln(), crate::bridge::PHI_MAX, 40);
        let summary = summarize_posterior(&draws, &panel, &cfg, &[]).unwrap();
        let age = summary.odds_ratios.iter().find(|r| r.label == "age").unwrap();
        assert!((age.stats.mean - 1.15).abs() < 1e-4);
        assert!(age.stats.sd.abs() < 1e-12);
    }

    #[test]
    fn repeat_after_changepoint_combines_interaction() {
        let (panel, cfg) = tiny_panel();
        let draws = constant_draws(&panel, &cfg, 0.1, 0.8, 25);
        let summary = summarize_posterior(&draws, &panel, &cfg, &[]).unwrap();
        let after = summary
            .odds_ratios
            .iter()
            .find(|r| r.label.contains("after changepoint"))
            .unwrap();
        // recomputed directly from the constant draws: exp(phi (b_rep + b_int))
        let want = (0.8f64 * (-0.5 + 0.6)).exp();
        assert!((after.stats.mean - want).abs() < 1e-12);
        let before = summary
            .odds_ratios
            .iter()
            .find(|r| r.label.contains("before changepoint"))
            .unwrap();
        assert!((before.stats.mean - (0.8f64 * -0.5).exp()).abs() < 1e-12);
    }

    #[test]
    fn changepoint_frequencies_and_series_shape() {
        let (panel, cfg) = tiny_panel();
        let draws = constant_draws(&panel, &cfg, 0.1, 0.8, 25);
        let summary = summarize_posterior(&draws, &panel, &cfg, &[(
            "severe_repeat".into(),
            CovariateProfile { age: 14.6, repeat_offense: true, severe: true },
        )]).unwrap();
        let p95 = summary.changepoint.iter().find(|c| c.year == 1995).unwrap();
        assert_eq!(p95.posterior, 1.0);
        // observed years only in the year series
        assert!(summary.year_series.iter().all(|r| r.n_records > 0));
        // 18 window years in the profile series
        assert_eq!(summary.profile_series.len(), 18);
        let text = summary.render_text();
        assert!(text.contains("phi"));
        assert!(summary.year_series_tsv().starts_with("year\t"));
        assert!(summary.profile_series_tsv().contains("severe_repeat"));
    }

    #[test]
    fn empty_draws_is_an_error() {
        let (panel, cfg) = tiny_panel();
        let spec = ModelSpec::default();
        let layout = ParamLayout::for_run(&panel, &spec, &cfg);
        let empty = PosteriorDraws { snapshots: vec![], n_chains: 1, layout };
        assert!(summarize_posterior(&empty, &panel, &cfg, &[]).is_err());
    }
}
