//! Panel ingestion and persistence, plus synthetic cohort generation that
//! mirrors the study's cluster-size and covariate structure.

use std::io::Write;
use std::path::Path;

use rand::RngExt;

use crate::bridge::{logistic, BridgeParam};
use crate::error::{Error, Result};
use crate::model::{
    design_vectors, linear_predictor, ChargeRecord, DesignConfig, Panel, PanelOptions,
};
use crate::rng::{aux_stream, seeded_stream, standard_normal};

/// Canonical CSV header of a panel file.
pub const PANEL_HEADER: &str = "youth_id,year,age,repeat_offense,severe,outcome";

fn parse_binary(field: &str, row: usize, col: &str) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::data(
            Some(row),
            format!("column {col:?} must be 0 or 1, got {other:?}"),
        )),
    }
}

/// Parse a panel CSV file (header mandatory, schema fixed).  Row numbers in
/// errors are 1-based file lines.
pub fn load_panel(path: &Path, options: PanelOptions) -> Result<(Panel, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_panel_csv(&text, options)
}

pub fn parse_panel_csv(text: &str, options: PanelOptions) -> Result<(Panel, Vec<String>)> {
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.next() else {
        return Err(Error::data(None, "empty file, expected a header row"));
    };
    if header.trim() != PANEL_HEADER {
        return Err(Error::data(
            Some(1),
            format!("header must be {PANEL_HEADER:?}, got {header:?}"),
        ));
    }

    let mut records = Vec::new();
    for (i, line) in lines {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(|f| f.trim()).collect();
        if fields.len() != 6 {
            return Err(Error::data(Some(row), format!("expected 6 columns, got {}", fields.len())));
        }
        let year: i32 = fields[1]
            .parse()
            .map_err(|_| Error::data(Some(row), format!("column \"year\" must be an integer, got {:?}", fields[1])))?;
        if year < options.window.0 || year > options.window.1 {
            return Err(Error::data(
                Some(row),
                format!("column \"year\": {year} outside study window {}..={}", options.window.0, options.window.1),
            ));
        }
        let age: f64 = fields[2]
            .parse()
            .map_err(|_| Error::data(Some(row), format!("column \"age\" must be a number, got {:?}", fields[2])))?;
        if !(age > 0.0) {
            return Err(Error::data(Some(row), format!("column \"age\" must be positive, got {age}")));
        }
        records.push(ChargeRecord {
            youth_id: fields[0].to_string(),
            year,
            age,
            repeat_offense: parse_binary(fields[3], row, "repeat_offense")?,
            severe: parse_binary(fields[4], row, "severe")?,
            outcome: parse_binary(fields[5], row, "outcome")?,
        });
    }
    Panel::from_records(records, options)
}

/// Canonical CSV rendering of a panel (also the hashing base).
pub fn panel_to_csv(panel: &Panel) -> String {
    let mut out = String::from(PANEL_HEADER);
    out.push('\n');
    for r in panel.records() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.youth_id, r.year, r.age, r.repeat_offense as u8, r.severe as u8, r.outcome as u8
        ));
    }
    out
}

pub fn save_panel(path: &Path, panel: &Panel) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(panel_to_csv(panel).as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))
}

/// How charge years are drawn within a cluster.
#[derive(Debug, Clone, PartialEq)]
pub enum YearLaw {
    /// Every year uniform over the window, sorted within the cluster.
    Uniform,
    /// First charge uniform in `first`, each later charge 1..=`max_gap`
    /// years after the previous one (clamped to the window end).
    FirstThenGaps { first: (i32, i32), max_gap: u32 },
}

/// Cohort structure for the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortShape {
    /// (cluster size, number of clusters) pairs.
    pub cluster_sizes: Vec<(usize, usize)>,
    /// Year support; years are drawn by `year_law` and clamped to it.
    pub window: (i32, i32),
    pub year_law: YearLaw,
    /// Ages are normal around this center (sd 2.2), rounded to one decimal
    /// and clamped to `age_range`.
    pub age_center: f64,
    pub age_range: (f64, f64),
    /// Severity rates conditional on the repeat indicator.
    pub severe_rate_first: f64,
    pub severe_rate_repeat: f64,
}

impl Default for CohortShape {
    /// The documented default: 358 clusters (326 of size 2, 28 of size 3,
    /// 3 of size 4, 1 of size 5; 753 records), ages around 14.6 in [9, 19],
    /// and severity rates tied to the repeat indicator.
    fn default() -> Self {
        CohortShape {
            cluster_sizes: vec![(2, 326), (3, 28), (4, 3), (5, 1)],
            window: (1988, 2005),
            year_law: YearLaw::Uniform,
            age_center: 14.6,
            age_range: (9.0, 19.0),
            severe_rate_first: 322.0 / 358.0,
            severe_rate_repeat: 284.0 / 395.0,
        }
    }
}

impl CohortShape {
    pub fn n_clusters(&self) -> usize {
        self.cluster_sizes.iter().map(|(_, c)| c).sum()
    }

    pub fn n_records(&self) -> usize {
        self.cluster_sizes.iter().map(|(s, c)| s * c).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clusters() == 0 {
            return Err(Error::Config("cohort shape has zero clusters".into()));
        }
        if self.window.0 > self.window.1 {
            return Err(Error::Config("cohort window is empty".into()));
        }
        for p in [self.severe_rate_first, self.severe_rate_repeat] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("severity rate {p} outside [0,1]")));
            }
        }
        if let YearLaw::FirstThenGaps { first, max_gap } = &self.year_law {
            if first.0 > first.1 || first.0 < self.window.0 || first.1 > self.window.1 {
                return Err(Error::Config(format!(
                    "first-charge range {}..{} must lie inside the window {}..{}",
                    first.0, first.1, self.window.0, self.window.1
                )));
            }
            if *max_gap == 0 {
                return Err(Error::Config("max_gap must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// Generating parameter values for a synthetic cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParams {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub phi: f64,
    pub t_cp: Option<i32>,
}

/// Everything latent behind a generated cohort, for recovery scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTruth {
    pub params: TrueParams,
    pub b: Vec<f64>,
    pub seed: u64,
}

/// Generate a synthetic cohort from the model itself: bridge random effects,
/// covariates from the shape laws, outcomes from the conditional
/// probabilities.  Deterministic given the seed.
pub fn generate_cohort(
    shape: &CohortShape,
    params: &TrueParams,
    cfg: &DesignConfig,
    seed: u64,
) -> Result<(Panel, CohortTruth)> {
    shape.validate()?;
    if params.beta1.len() != cfg.x1_dim() {
        return Err(Error::Config(format!(
            "true beta1 has {} coordinates, design expects {}",
            params.beta1.len(),
            cfg.x1_dim()
        )));
    }
    if params.t_cp.is_some() && params.beta2.len() != crate::model::X2_DIM {
        return Err(Error::Config(format!(
            "true beta2 has {} coordinates, change-point basis expects {}",
            params.beta2.len(),
            crate::model::X2_DIM
        )));
    }
    let phi = BridgeParam::new(params.phi)?;
    let mut rng = seeded_stream(seed, aux_stream(0));

    let n_clusters = shape.n_clusters();
    let width = (n_clusters as f64).log10().floor() as usize + 1;
    let mut records = Vec::with_capacity(shape.n_records());
    let mut b_all = Vec::with_capacity(n_clusters);
    let mut cluster_no = 0usize;

    for &(size, count) in &shape.cluster_sizes {
        for _ in 0..count {
            let id = format!("y{cluster_no:0width$}");
            cluster_no += 1;
            let b_i: f64 = phi.sample_one(&mut rng);
            b_all.push(b_i);

            let mut years: Vec<i32> = match &shape.year_law {
                YearLaw::Uniform => (0..size)
                    .map(|_| rng.random_range(shape.window.0..=shape.window.1))
                    .collect(),
                YearLaw::FirstThenGaps { first, max_gap } => {
                    let mut year = rng.random_range(first.0..=first.1);
                    let mut ys = vec![year];
                    for _ in 1..size {
                        year = (year + rng.random_range(1..=*max_gap as i32)).min(shape.window.1);
                        ys.push(year);
                    }
                    ys
                }
            };
            years.sort_unstable();

            for (j, &year) in years.iter().enumerate() {
                let raw_age = shape.age_center + 2.2 * standard_normal(&mut rng);
                let age = (raw_age.clamp(shape.age_range.0, shape.age_range.1) * 10.0).round() / 10.0;
                let repeat = j > 0;
                let severe_rate = if repeat { shape.severe_rate_repeat } else { shape.severe_rate_first };
                let severe = rng.random::<f64>() < severe_rate;
                let mut rec = ChargeRecord {
                    youth_id: id.clone(),
                    year,
                    age,
                    repeat_offense: repeat,
                    severe,
                    outcome: false,
                };
                let dv = design_vectors(&rec, params.t_cp, cfg);
                let p = logistic(b_i + linear_predictor(&params.beta1, &params.beta2, &dv));
                rec.outcome = rng.random::<f64>() < p;
                records.push(rec);
            }
        }
    }

    let options = PanelOptions {
        window: shape.window,
        ..PanelOptions::default()
    };
    let (panel, _) = Panel::from_records(records, options)?;
    Ok((
        panel,
        CohortTruth {
            params: params.clone(),
            b: b_all,
            seed,
        },
    ))
}

/// Write the truth record sidecar as structured text.
pub fn write_truth(path: &Path, truth: &CohortTruth) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("seed = {}\n", truth.seed));
    out.push_str(&format!("phi = {}\n", truth.params.phi));
    match truth.params.t_cp {
        Some(t) => out.push_str(&format!("changepoint = {t}\n")),
        None => out.push_str("changepoint = none\n"),
    }
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    out.push_str(&format!("beta1 = {}\n", join(&truth.params.beta1)));
    out.push_str(&format!("beta2 = {}\n", join(&truth.params.beta2)));
    out.push_str(&format!("b = {}\n", join(&truth.b)));
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Read a truth record sidecar back.
pub fn read_truth(path: &Path) -> Result<CohortTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut seed = None;
    let mut phi = None;
    let mut t_cp = None;
    let mut beta1 = Vec::new();
    let mut beta2 = Vec::new();
    let mut b = Vec::new();
    let parse_list = |v: &str| -> Result<Vec<f64>> {
        if v.trim().is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|x| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::data(None, format!("bad number {x:?} in truth file")))
            })
            .collect()
    };
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else { continue };
        let (k, v) = (k.trim(), v.trim());
        match k {
            "seed" => seed = v.parse().ok(),
            "phi" => phi = v.parse().ok(),
            "changepoint" => t_cp = if v == "none" { None } else { Some(v.parse().map_err(|_| Error::data(None, "bad changepoint in truth file"))?) },
            "beta1" => beta1 = parse_list(v)?,
            "beta2" => beta2 = parse_list(v)?,
            "b" => b = parse_list(v)?,
            _ => {}
        }
    }
    Ok(CohortTruth {
        params: TrueParams {
            beta1,
            beta2,
            phi: phi.ok_or_else(|| Error::data(None, "truth file missing phi"))?,
            t_cp,
        },
        b,
        seed: seed.ok_or_else(|| Error::data(None, "truth file missing seed"))?,
    })
}
