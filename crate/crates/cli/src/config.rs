//! Run configuration: a flat key/value text file plus command-line
//! overrides, resolved into the concrete pipeline inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use bridgecp::diagnostics::DevianceKind;
use bridgecp::model::{DesignConfig, NotificationCoding, Panel, PanelOptions};
use bridgecp::priors::{ChangepointPrior, CovariateProfile, DirichletWeights, ModelSpec, PhiPrior};
use bridgecp::{CohortShape, SamplerConfig, TrueParams};

/// Where the panel comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Generate(CohortShape),
}

/// Age centering: resolved per panel or pinned to a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgeCenter {
    PanelMedian,
    Value(f64),
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: DataSource,
    pub spec: ModelSpec,
    pub model_label: String,
    pub candidate_years: Vec<i32>,
    pub window: (i32, i32),
    pub strict_clusters: bool,
    pub age_center: AgeCenter,
    pub year_center: f64,
    pub notification: NotificationCoding,
    pub sampler: SamplerConfig,
    pub deviance: DevianceKind,
    pub truth: TrueParams,
    pub profiles: Vec<(String, CovariateProfile)>,
    pub seed: u64,
    pub out: PathBuf,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub model: Option<u8>,
}

fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected `key = value`, got {raw:?}", i + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parse_year_range(s: &str) -> Result<(i32, i32)> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| anyhow!("expected a year range like 1988..2005, got {s:?}"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| anyhow!("bad number {x:?}: {e}")))
        .collect()
}

fn default_profiles(age: f64) -> Vec<(String, CovariateProfile)> {
    let mut out = Vec::new();
    for (sev_label, severe) in [("severe", true), ("nonsevere", false)] {
        for (rep_label, repeat) in [("repeat", true), ("first", false)] {
            out.push((
                format!("{sev_label}_{rep_label}"),
                CovariateProfile { age, repeat_offense: repeat, severe },
            ));
        }
    }
    out
}

impl RunConfig {
    pub fn from_file(path: &Path, over: &Overrides) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        RunConfig::from_text(&text, over)
    }

    pub fn from_text(text: &str, over: &Overrides) -> Result<RunConfig> {
        let map = parse_kv(text)?;
        let get = |k: &str| map.get(k).map(|s| s.as_str());

        let window = match get("data.window") {
            Some(s) => parse_year_range(s)?,
            None => (1988, 2005),
        };
        let candidate_years: Vec<i32> = match get("candidate_years") {
            Some(s) => {
                let (a, b) = parse_year_range(s)?;
                (a..=b).collect()
            }
            None => (1992..=1996).collect(),
        };

        // data source: exactly one
        let data = match (get("data.path"), get("data.generate")) {
            (Some(_), Some(_)) => bail!("config must set exactly one of data.path / data.generate"),
            (Some(p), None) => DataSource::File(PathBuf::from(p)),
            (None, Some(kind)) => {
                let mut shape = CohortShape {
                    window,
                    ..CohortShape::default()
                };
                if let Some(law) = get("data.year_law") {
                    shape.year_law = match law {
                        "uniform" => bridgecp::data::YearLaw::Uniform,
                        s if s.starts_with("gaps") => {
                            let parts: Vec<&str> = s.split_whitespace().collect();
                            if parts.len() != 3 {
                                bail!("data.year_law gaps needs `gaps <lo>..<hi> <max_gap>`");
                            }
                            let first = parse_year_range(parts[1])?;
                            bridgecp::data::YearLaw::FirstThenGaps {
                                first,
                                max_gap: parts[2].parse()?,
                            }
                        }
                        other => bail!("bad data.year_law {other:?}"),
                    };
                }
                match kind {
                    "default" => {}
                    "custom" => {
                        let spec = get("data.clusters")
                            .ok_or_else(|| anyhow!("data.generate = custom requires data.clusters"))?;
                        let mut sizes = Vec::new();
                        for part in spec.split(',') {
                            let (size, count) = part
                                .split_once(':')
                                .ok_or_else(|| anyhow!("bad cluster entry {part:?}, expected size:count"))?;
                            sizes.push((size.trim().parse()?, count.trim().parse()?));
                        }
                        shape.cluster_sizes = sizes;
                    }
                    other => bail!("data.generate must be `default` or `custom`, got {other:?}"),
                }
                if shape.n_clusters() == 0 {
                    bail!("generator shape has zero clusters");
                }
                DataSource::Generate(shape)
            }
            (None, None) => bail!("config must set a data source (data.path or data.generate)"),
        };

        // model: named 1..8 or custom pieces
        let model_key = over
            .model
            .map(|m| m.to_string())
            .or_else(|| get("model").map(|s| s.to_string()))
            .unwrap_or_else(|| "1".into());
        let (spec, model_label) = if model_key == "custom" {
            let tau = match get("model.tau") {
                Some(s) => s.parse()?,
                None => bridgecp::priors::DEFAULT_BETA_TAU,
            };
            let phi_prior = match get("model.phi_prior").unwrap_or("uniform") {
                "uniform" => PhiPrior::uniform(),
                s => {
                    let parts: Vec<&str> = s.split_whitespace().collect();
                    if parts.len() == 3 && parts[0] == "beta" {
                        PhiPrior { a: parts[1].parse()?, b: parts[2].parse()? }
                    } else {
                        bail!("model.phi_prior must be `uniform` or `beta A B`, got {s:?}");
                    }
                }
            };
            let changepoint = match get("model.changepoint").unwrap_or("none") {
                "none" => ChangepointPrior::None,
                s if s.starts_with("fixed") => {
                    let year = s
                        .split_whitespace()
                        .nth(1)
                        .ok_or_else(|| anyhow!("model.changepoint = fixed needs a year"))?;
                    ChangepointPrior::Fixed(year.parse()?)
                }
                s if s.starts_with("dirichlet") => {
                    let alphas = parse_f64_list(
                        s.strip_prefix("dirichlet").unwrap().trim(),
                    )?;
                    ChangepointPrior::Dirichlet(
                        DirichletWeights::new(candidate_years.clone(), alphas)
                            .map_err(|e| anyhow!("{e}"))?,
                    )
                }
                other => bail!("bad model.changepoint {other:?}"),
            };
            (
                ModelSpec { beta_tau: tau, phi_prior, changepoint, model_id: None },
                "custom".to_string(),
            )
        } else {
            let id: u8 = model_key
                .parse()
                .map_err(|_| anyhow!("model must be 1..8 or `custom`, got {model_key:?}"))?;
            (
                ModelSpec::model(id, &candidate_years).map_err(|e| anyhow!("{e}"))?,
                format!("model-{id}"),
            )
        };

        let age_center = match get("design.age_center").unwrap_or("panel_median") {
            "panel_median" => AgeCenter::PanelMedian,
            s => AgeCenter::Value(s.parse()?),
        };
        let year_center: f64 = match get("design.year_center") {
            Some(s) => s.parse()?,
            None => 1995.0,
        };
        let notification = match get("design.notification").unwrap_or("from2000") {
            "from2000" => NotificationCoding::FromYear(2000),
            "single2000" => NotificationCoding::SingleYear(2000),
            "excluded" => NotificationCoding::Excluded,
            s if s.starts_with("from") => NotificationCoding::FromYear(s[4..].parse()?),
            other => bail!("bad design.notification {other:?}"),
        };

        let seed = match over.seed.or_else(|| get("seed").and_then(|s| s.parse().ok())) {
            Some(s) => s,
            None => bail!("a seed is mandatory: set `seed = <u64>` or pass --seed"),
        };

        let mut sampler = SamplerConfig::new(seed);
        if let Some(s) = get("sampler.iterations") {
            sampler.n_iterations = s.parse()?;
        }
        if let Some(s) = get("sampler.burn_in") {
            sampler.burn_in = s.parse()?;
        }
        if let Some(s) = get("sampler.thinning") {
            sampler.thinning = s.parse()?;
        }
        if let Some(s) = get("sampler.chains") {
            sampler.n_chains = s.parse()?;
        }
        if let Some(s) = get("sampler.collapse_gamma") {
            sampler.collapse_gamma = s.parse()?;
        }
        if let Some(s) = get("sampler.cp_block_sweeps") {
            sampler.cp_block_sweeps = s.parse()?;
        }
        if let Some(s) = get("sampler.collapsed_t_every") {
            sampler.collapsed_t_every = s.parse()?;
        }
        sampler.validate().map_err(|e| anyhow!("{e}"))?;

        let deviance = match get("deviance").unwrap_or("conditional") {
            "conditional" => DevianceKind::Conditional,
            "marginalized" => DevianceKind::Marginalized,
            other => bail!("deviance must be conditional or marginalized, got {other:?}"),
        };

        // generating truth (simulate only; recovery defaults otherwise)
        let dim1 = match notification {
            NotificationCoding::Excluded => 5,
            _ => 6,
        };
        let mut truth = TrueParams {
            beta1: {
                let mut b = vec![0.9, 0.14, -0.6, 0.45, 0.1, 0.0];
                b.truncate(dim1);
                b
            },
            beta2: vec![-1.36, 0.0, 0.0, 0.75],
            phi: 0.8,
            t_cp: Some(1995),
        };
        if let Some(s) = get("truth.phi") {
            truth.phi = s.parse()?;
        }
        if let Some(s) = get("truth.changepoint") {
            truth.t_cp = if s == "none" { None } else { Some(s.parse()?) };
        }
        if truth.t_cp.is_none() {
            truth.beta2.clear();
        }
        if let Some(s) = get("truth.beta1") {
            truth.beta1 = parse_f64_list(s)?;
        }
        if let Some(s) = get("truth.beta2") {
            truth.beta2 = parse_f64_list(s)?;
        }

        let out = over
            .out
            .clone()
            .or_else(|| get("out").map(PathBuf::from))
            .ok_or_else(|| anyhow!("an output directory is mandatory: set `out = <dir>` or pass --out"))?;

        let strict_clusters = match get("data.strict_clusters") {
            Some(s) => s.parse()?,
            None => true,
        };

        let profile_age = match age_center {
            AgeCenter::Value(v) => v,
            AgeCenter::PanelMedian => 14.6,
        };

        Ok(RunConfig {
            data,
            spec,
            model_label,
            candidate_years,
            window,
            strict_clusters,
            age_center,
            year_center,
            notification,
            sampler,
            deviance,
            truth,
            profiles: default_profiles(profile_age),
            seed,
            out,
        })
    }

    pub fn panel_options(&self) -> PanelOptions {
        PanelOptions {
            window: self.window,
            candidate_years: self.candidate_years.clone(),
            strict_clusters: self.strict_clusters,
        }
    }

    /// Design configuration resolved against a loaded panel.
    pub fn design_for(&self, panel: &Panel) -> DesignConfig {
        DesignConfig {
            age_center: match self.age_center {
                AgeCenter::PanelMedian => panel.median_age(),
                AgeCenter::Value(v) => v,
            },
            year_center: self.year_center,
            notification: self.notification,
        }
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
data.generate = default
model = 1
sampler.iterations = 100
sampler.burn_in = 50
seed = 7
out = /tmp/run
";

    #[test]
    fn parses_minimal_config() {
        let cfg = RunConfig::from_text(BASE, &Overrides::default()).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model_label, "model-1");
        assert!(matches!(cfg.data, DataSource::Generate(_)));
        assert_eq!(cfg.sampler.n_iterations, 100);
        assert_eq!(cfg.candidate_years, (1992..=1996).collect::<Vec<_>>());
    }

    #[test]
    fn seed_is_mandatory() {
        let text = "data.generate = default\nout = /tmp/x\n";
        let err = RunConfig::from_text(text, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("seed"));
        // flag satisfies the requirement
        let over = Overrides { seed: Some(3), ..Default::default() };
        assert!(RunConfig::from_text(text, &over).is_ok());
    }

    #[test]
    fn exactly_one_data_source() {
        let text = "data.path = a.csv\ndata.generate = default\nseed = 1\nout = /tmp/x\n";
        assert!(RunConfig::from_text(text, &Overrides::default()).is_err());
        let text = "seed = 1\nout = /tmp/x\n";
        assert!(RunConfig::from_text(text, &Overrides::default()).is_err());
    }

    #[test]
    fn model_override_wins() {
        let over = Overrides { model: Some(7), ..Default::default() };
        let cfg = RunConfig::from_text(BASE, &over).unwrap();
        assert_eq!(cfg.model_label, "model-7");
        assert!(!cfg.spec.has_changepoint());
    }

    #[test]
    fn custom_model_pieces() {
        let text = "\
data.generate = default
model = custom
model.phi_prior = beta 2 1
model.changepoint = dirichlet 1,1,1,6,1
seed = 1
out = /tmp/x
";
        let cfg = RunConfig::from_text(text, &Overrides::default()).unwrap();
        assert_eq!(cfg.model_label, "custom");
        assert_eq!(cfg.spec.phi_prior, PhiPrior::skewed());
        assert!(matches!(cfg.spec.changepoint, ChangepointPrior::Dirichlet(_)));
    }

    #[test]
    fn malformed_shape_rejected_before_work() {
        let text = "\
data.generate = custom
data.clusters = 2:0
seed = 1
out = /tmp/x
";
        let err = RunConfig::from_text(text, &Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("zero clusters"), "{err}");
    }
}
