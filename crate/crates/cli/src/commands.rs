//! Subcommand implementations batching the pipeline: simulate, fit,
//! compare, summarize, diagnose.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use bridgecp::data::{panel_to_csv, write_truth};
use bridgecp::diagnostics::{DevianceKind, FitSummary};
use bridgecp::mcmc::{autocorrelation_and_ess, gelman_rubin_all};
use bridgecp::model::{DesignConfig, NotificationCoding, Panel};
use bridgecp::persist::{fingerprint, read_draws, write_draws, Manifest};
use bridgecp::priors::ChangepointPrior;
use bridgecp::rng::{aux_stream, seeded_stream};
use bridgecp::{generate_cohort, load_panel, run_chains, summarize_posterior, PosteriorDraws};

use crate::config::{AgeCenter, DataSource, Overrides, RunConfig};

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

/// Render the resolved configuration as a re-loadable config file rooted at
/// the run directory.
fn stored_config_text(cfg: &RunConfig, design: &DesignConfig) -> String {
    let mut out = String::new();
    out.push_str("data.path = panel.csv\n");
    let _ = writeln!(out, "data.window = {}..{}", cfg.window.0, cfg.window.1);
    let _ = writeln!(out, "data.strict_clusters = {}", cfg.strict_clusters);
    let (c0, c1) = (
        cfg.candidate_years.first().copied().unwrap_or(1992),
        cfg.candidate_years.last().copied().unwrap_or(1996),
    );
    let _ = writeln!(out, "candidate_years = {c0}..{c1}");
    match cfg.spec.model_id {
        Some(id) => {
            let _ = writeln!(out, "model = {id}");
        }
        None => {
            out.push_str("model = custom\n");
            let _ = writeln!(out, "model.tau = {}", cfg.spec.beta_tau);
            let _ = writeln!(out, "model.phi_prior = beta {} {}", cfg.spec.phi_prior.a, cfg.spec.phi_prior.b);
            match &cfg.spec.changepoint {
                ChangepointPrior::Dirichlet(w) => {
                    let alphas: Vec<String> = w.alpha.iter().map(|a| a.to_string()).collect();
                    let _ = writeln!(out, "model.changepoint = dirichlet {}", alphas.join(","));
                }
                ChangepointPrior::Fixed(y) => {
                    let _ = writeln!(out, "model.changepoint = fixed {y}");
                }
                ChangepointPrior::None => out.push_str("model.changepoint = none\n"),
            }
        }
    }
    let _ = writeln!(out, "design.age_center = {}", design.age_center);
    let _ = writeln!(out, "design.year_center = {}", design.year_center);
    let notif = match design.notification {
        NotificationCoding::FromYear(y) => format!("from{y}"),
        NotificationCoding::SingleYear(y) => format!("single{y}"),
        NotificationCoding::Excluded => "excluded".into(),
    };
    let _ = writeln!(out, "design.notification = {notif}");
    let _ = writeln!(out, "sampler.iterations = {}", cfg.sampler.n_iterations);
    let _ = writeln!(out, "sampler.burn_in = {}", cfg.sampler.burn_in);
    let _ = writeln!(out, "sampler.thinning = {}", cfg.sampler.thinning);
    let _ = writeln!(out, "sampler.chains = {}", cfg.sampler.n_chains);
    let _ = writeln!(out, "sampler.collapse_gamma = {}", cfg.sampler.collapse_gamma);
    let _ = writeln!(out, "sampler.cp_block_sweeps = {}", cfg.sampler.cp_block_sweeps);
    let _ = writeln!(out, "sampler.collapsed_t_every = {}", cfg.sampler.collapsed_t_every);
    let dev = match cfg.deviance {
        DevianceKind::Conditional => "conditional",
        DevianceKind::Marginalized => "marginalized",
    };
    let _ = writeln!(out, "deviance = {dev}");
    let _ = writeln!(out, "seed = {}", cfg.seed);
    out
}

/// Generate a cohort and write the panel plus truth sidecar.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let DataSource::Generate(shape) = &cfg.data else {
        bail!("simulate requires data.generate in the config");
    };
    let design = DesignConfig {
        age_center: match cfg.age_center {
            AgeCenter::PanelMedian => shape.age_center,
            AgeCenter::Value(v) => v,
        },
        year_center: cfg.year_center,
        notification: cfg.notification,
    };
    let (panel, truth) =
        generate_cohort(shape, &cfg.truth, &design, cfg.seed).map_err(|e| anyhow!("{e}"))?;
    ensure_out_dir(&cfg.out)?;
    write_file(&cfg.out.join("panel.csv"), &panel_to_csv(&panel))?;
    write_truth(&cfg.out.join("truth.txt"), &truth).map_err(|e| anyhow!("{e}"))?;
    println!(
        "wrote {} ({} clusters, {} records) and truth.txt",
        cfg.out.join("panel.csv").display(),
        panel.n_clusters(),
        panel.n_records()
    );
    Ok(())
}

fn resolve_panel(cfg: &RunConfig) -> Result<(Panel, Option<bridgecp::CohortTruth>)> {
    match &cfg.data {
        DataSource::File(path) => {
            let (panel, warnings) =
                load_panel(path, cfg.panel_options()).map_err(|e| anyhow!("{e}"))?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            Ok((panel, None))
        }
        DataSource::Generate(shape) => {
            let design = DesignConfig {
                age_center: match cfg.age_center {
                    AgeCenter::PanelMedian => shape.age_center,
                    AgeCenter::Value(v) => v,
                },
                year_center: cfg.year_center,
                notification: cfg.notification,
            };
            let mut shape = shape.clone();
            shape.window = cfg.window;
            let (panel, truth) =
                generate_cohort(&shape, &cfg.truth, &design, cfg.seed).map_err(|e| anyhow!("{e}"))?;
            Ok((panel, Some(truth)))
        }
    }
}

fn render_fit_report(summary: &FitSummary, panel_hash: &str, config_hash: &str, model: &str) -> String {
    let dev = match summary.deviance {
        DevianceKind::Conditional => "conditional",
        DevianceKind::Marginalized => "marginalized",
    };
    format!(
        "model = {model}\nd_bar = {}\nd_at_plugin = {}\np_d = {}\ndic = {}\nlpml = {}\n\
         cpo_underflows = {}\nbayesian_p = {}\ndiscrepancy_clamped = {}\ndeviance = {dev}\n\
         panel_hash = {panel_hash}\nconfig_hash = {config_hash}\n",
        summary.d_bar,
        summary.d_at_plugin,
        summary.p_d,
        summary.dic,
        summary.lpml,
        summary.cpo_underflows,
        summary.bayesian_p,
        summary.discrepancy_clamped,
    )
}

fn parse_fit_report(path: &Path) -> Result<std::collections::BTreeMap<String, String>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut map = std::collections::BTreeMap::new();
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    Ok(map)
}

/// Fit the configured model: run the chains, write draws, manifest,
/// diagnostics and summary tables.
pub fn cmd_fit(cfg: &RunConfig) -> Result<()> {
    let (panel, truth) = resolve_panel(cfg)?;
    let design = cfg.design_for(&panel);

    let draws = run_chains(&panel, &cfg.spec, &design, &cfg.sampler).map_err(|e| anyhow!("{e}"))?;

    let panel_csv = panel_to_csv(&panel);
    let panel_hash = fingerprint(&panel_csv);
    let stored_config = stored_config_text(cfg, &design);
    let config_hash = fingerprint(&stored_config);
    let spec_hash = fingerprint(&cfg.spec.canonical_string());

    ensure_out_dir(&cfg.out)?;
    write_file(&cfg.out.join("panel.csv"), &panel_csv)?;
    if let Some(truth) = &truth {
        write_truth(&cfg.out.join("truth.txt"), truth).map_err(|e| anyhow!("{e}"))?;
    }
    write_file(&cfg.out.join("config.txt"), &stored_config)?;
    write_draws(&cfg.out.join("draws.tsv"), &draws).map_err(|e| anyhow!("{e}"))?;

    Manifest {
        seed: cfg.seed,
        config_hash: config_hash.clone(),
        spec_hash,
        panel_hash: panel_hash.clone(),
        model_label: cfg.model_label.clone(),
        n_chains: cfg.sampler.n_chains,
        n_iterations: cfg.sampler.n_iterations,
        burn_in: cfg.sampler.burn_in,
        thinning: cfg.sampler.thinning,
        n_clusters: panel.n_clusters(),
        n_records: panel.n_records(),
    }
    .write(&cfg.out.join("manifest.txt"))
    .map_err(|e| anyhow!("{e}"))?;

    let mut pvalue_rng = seeded_stream(cfg.seed, aux_stream(1));
    let summary =
        FitSummary::compute(&draws, &panel, &design, cfg.deviance, &mut pvalue_rng).map_err(|e| anyhow!("{e}"))?;
    write_file(
        &cfg.out.join("fit.txt"),
        &render_fit_report(&summary, &panel_hash, &config_hash, &cfg.model_label),
    )?;

    let posterior = summarize_posterior(&draws, &panel, &design, &cfg.profiles).map_err(|e| anyhow!("{e}"))?;
    write_file(&cfg.out.join("summary.txt"), &posterior.render_text())?;
    write_file(&cfg.out.join("year_series.tsv"), &posterior.year_series_tsv())?;
    write_file(&cfg.out.join("profile_series.tsv"), &posterior.profile_series_tsv())?;

    println!(
        "{}: DIC {:.1} (d_bar {:.1}, p_D {:.1}), LPML {:.2}, bayesian p {:.3}",
        cfg.model_label, summary.dic, summary.d_bar, summary.p_d, summary.lpml, summary.bayesian_p
    );
    println!("artifacts in {}", cfg.out.display());
    Ok(())
}

struct RunArtifacts {
    dir: PathBuf,
    manifest: Manifest,
    fit: std::collections::BTreeMap<String, String>,
}

fn load_run(dir: &Path) -> Result<RunArtifacts> {
    let manifest = Manifest::read(&dir.join("manifest.txt")).map_err(|e| anyhow!("{e}"))?;
    let fit = parse_fit_report(&dir.join("fit.txt"))?;
    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        manifest,
        fit,
    })
}

/// Compare two or more fitted runs on the same panel.
pub fn cmd_compare(dirs: &[PathBuf]) -> Result<String> {
    if dirs.len() < 2 {
        bail!("compare needs at least two run directories");
    }
    let runs: Vec<RunArtifacts> = dirs.iter().map(|d| load_run(d)).collect::<Result<_>>()?;
    for r in &runs[1..] {
        if r.manifest.panel_hash != runs[0].manifest.panel_hash {
            bail!(
                "runs were fitted on different panels: {} has panel {} but {} has panel {}",
                runs[0].dir.display(),
                runs[0].manifest.panel_hash,
                r.dir.display(),
                r.manifest.panel_hash
            );
        }
    }

    let num = |r: &RunArtifacts, key: &str| -> Result<f64> {
        r.fit
            .get(key)
            .ok_or_else(|| anyhow!("{} missing {key}", r.dir.display()))?
            .parse()
            .map_err(|e| anyhow!("bad {key} in {}: {e}", r.dir.display()))
    };

    let mut rows: Vec<(String, f64, f64, f64, f64, String)> = Vec::new();
    for r in &runs {
        rows.push((
            r.manifest.model_label.clone(),
            num(r, "d_bar")?,
            num(r, "p_d")?,
            num(r, "dic")?,
            num(r, "lpml")?,
            r.dir.display().to_string(),
        ));
    }
    rows.sort_by(|a, b| a.3.partial_cmp(&b.3).unwrap());

    let best_dic = rows[0].3;
    let mut out = String::new();
    let _ = writeln!(out, "{:<12} {:>10} {:>8} {:>10} {:>10}  {:<10} run", "model", "d_bar", "p_d", "dic", "lpml", "vs_best");
    for (i, (label, d_bar, p_d, dic, lpml, dir)) in rows.iter().enumerate() {
        let delta = dic - best_dic;
        let flag = if i == 0 {
            "best".to_string()
        } else if delta > 10.0 {
            format!("+{delta:.1} decisive")
        } else {
            format!("+{delta:.1}")
        };
        let _ = writeln!(out, "{label:<12} {d_bar:>10.2} {p_d:>8.2} {dic:>10.2} {lpml:>10.2}  {flag:<10} {dir}");
    }
    Ok(out)
}

/// Reload a run directory: panel, design and draws (with per-record log
/// likelihoods reattached).
pub fn load_run_dir(dir: &Path) -> Result<(RunConfig, Panel, DesignConfig, PosteriorDraws)> {
    let over = Overrides {
        out: Some(dir.to_path_buf()),
        ..Default::default()
    };
    let mut cfg = RunConfig::from_file(&dir.join("config.txt"), &over)?;
    cfg.data = DataSource::File(dir.join("panel.csv"));
    let (panel, _) = load_panel(&dir.join("panel.csv"), cfg.panel_options()).map_err(|e| anyhow!("{e}"))?;
    let design = cfg.design_for(&panel);
    let mut draws = read_draws(&dir.join("draws.tsv")).map_err(|e| anyhow!("{e}"))?;
    draws.attach_observation_log_likelihoods(&panel, &design);
    Ok((cfg, panel, design, draws))
}

/// Re-summarize an existing draws file.
pub fn cmd_summarize(dir: &Path) -> Result<String> {
    let (cfg, panel, design, draws) = load_run_dir(dir)?;
    let posterior = summarize_posterior(&draws, &panel, &design, &cfg.profiles).map_err(|e| anyhow!("{e}"))?;
    write_file(&dir.join("summary.txt"), &posterior.render_text())?;
    write_file(&dir.join("year_series.tsv"), &posterior.year_series_tsv())?;
    write_file(&dir.join("profile_series.tsv"), &posterior.profile_series_tsv())?;
    Ok(posterior.render_text())
}

/// Convergence report: PSRF for every parameter, ESS and lag-1
/// autocorrelation for the headline parameters.
pub fn cmd_diagnose(dir: &Path, max_lag: usize) -> Result<String> {
    let (_, _, _, draws) = load_run_dir(dir)?;
    let mut out = String::new();

    let retained = draws.snapshots.len() / draws.n_chains.max(1);
    let lag = max_lag.min(retained.saturating_sub(2)).max(1);

    if draws.n_chains >= 2 {
        let all = gelman_rubin_all(&draws).map_err(|e| anyhow!("{e}"))?;
        let worst = all
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .map(|(n, v)| format!("{n} ({v:.4})"))
            .unwrap_or_default();
        let over: Vec<&(String, f64)> = all.iter().filter(|(_, v)| *v >= 1.1).collect();
        let _ = writeln!(out, "psrf: {} parameters, worst {worst}, {} at or above 1.1", all.len(), over.len());
        for (name, v) in &over {
            let _ = writeln!(out, "  psrf {name} = {v:.4}");
        }
        let _ = writeln!(out, "{:<28} {:>8} {:>10} {:>8}", "parameter", "psrf", "ess", "acf1");
        for (name, psrf) in all.iter().filter(|(n, _)| !n.starts_with("B.")) {
            let (acf, ess) = autocorrelation_and_ess(&draws, name, lag).map_err(|e| anyhow!("{e}"))?;
            let _ = writeln!(out, "{name:<28} {psrf:>8.4} {ess:>10.1} {:>8.3}", acf.get(1).copied().unwrap_or(0.0));
        }
    } else {
        let _ = writeln!(out, "psrf unavailable with a single chain; reporting ESS only");
        let _ = writeln!(out, "{:<28} {:>10} {:>8}", "parameter", "ess", "acf1");
        for name in draws.layout.param_names().iter().filter(|n| !n.starts_with("B.")) {
            let (acf, ess) = autocorrelation_and_ess(&draws, name, lag).map_err(|e| anyhow!("{e}"))?;
            let _ = writeln!(out, "{name:<28} {ess:>10.1} {:>8.3}", acf.get(1).copied().unwrap_or(0.0));
        }
    }
    Ok(out)
}
