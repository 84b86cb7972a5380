//! One function per subcommand. Each writes its artifacts into the output
//! directory and returns their file names.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;

use ekw_core::bootstrap::{self, BootstrapConfig, BootstrapResult};
use ekw_core::decision::{self, SweepConfig};
use ekw_core::likelihood::{self, EstimateResult, EstimationConfig, LikelihoodConfig};
use ekw_core::model::ModelParameters;
use ekw_core::panel;
use ekw_core::pipeline::{self, PolicyQoi};
use ekw_core::simulate::{self, PolicyEvaluator};
use ekw_core::solver;
use ekw_core::stats::chi2_quantile;
use ekw_core::toy;

use crate::config::RunConfig;

pub type Artifacts = Vec<String>;

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<fs::File>> {
    let path = dir.join(name);
    let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn prepare_output(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").with_context(|| format!("output directory {} is not writable", dir.display()))?;
    fs::remove_file(&probe)?;
    Ok(())
}

/// Policy name made safe for a file name.
fn file_stem(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

fn load_model(cfg: &RunConfig) -> anyhow::Result<ModelParameters> {
    Ok(ModelParameters::load(cfg.model_path()?)?)
}

fn load_estimate(cfg: &RunConfig) -> anyhow::Result<EstimateResult> {
    let path = cfg.estimate_path();
    let text = fs::read_to_string(&path).with_context(|| format!("reading estimate file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing estimate file {}", path.display()))
}

pub fn toy(alpha: f64, draws: usize, seed: u64, out: &Path) -> anyhow::Result<Artifacts> {
    let report = toy::toy_report(alpha, draws, seed)?;
    Ok(report.write_to(out)?)
}

pub fn simulate(cfg: &RunConfig) -> anyhow::Result<Artifacts> {
    let p = load_model(cfg)?;
    let seeds = cfg.seeds();
    let sol = solver::solve(&p, cfg.simulate.emax_draws, seeds.emax)?;
    let panel = simulate::simulate_panel(&p, &sol, cfg.simulate.persons, seeds.simulation)?;
    let out = &cfg.output_dir;
    panel::write_panel(&panel, create(out, "panel.csv")?)?;
    let summary = simulate::summarize(&panel)?;
    simulate::write_summary_csv(&summary, create(out, "summary.csv")?)?;
    Ok(vec!["panel.csv".into(), "summary.csv".into()])
}

pub fn estimate(cfg: &RunConfig) -> anyhow::Result<Artifacts> {
    let model = load_model(cfg)?;
    let start = match &cfg.estimate.start {
        Some(path) => ModelParameters::load(path)?,
        None => model.clone(),
    };
    if cfg.estimate.free.is_empty() {
        bail!("estimate.free lists no parameters");
    }
    let data = panel::load_panel(cfg.data_path()?, start.schooling.h_max)?;
    let seeds = cfg.seeds();
    let e = &cfg.estimate;
    let lik = LikelihoodConfig { n_sim: e.n_sim, tau: e.tau, emax_draws: e.emax_draws, ..LikelihoodConfig::new(seeds.likelihood, seeds.emax) };
    let est_cfg = EstimationConfig {
        nelder_mead: e.nelder_mead,
        bfgs: e.bfgs,
        fd_step: e.fd_step,
        ridge_threshold: e.ridge_threshold,
        ..EstimationConfig::new(e.free.clone(), lik)
    };
    let result = likelihood::estimate(&data, &start, &est_cfg)?;
    tracing::info!(loglik = result.loglik, converged = result.converged, "estimation finished");
    write_json(&cfg.output_dir, "estimate.json", &result)?;
    Ok(vec!["estimate.json".into()])
}

fn policy_qoi(cfg: &RunConfig, est: &EstimateResult) -> anyhow::Result<PolicyQoi> {
    if cfg.policies.is_empty() {
        bail!("config lists no policies");
    }
    let base = est.parameters.clone();
    let evaluator = PolicyEvaluator::new(&base, cfg.qoi.persons, cfg.qoi.emax_draws, cfg.seeds().qoi)?;
    Ok(PolicyQoi::new(base, est.space()?, cfg.policies.clone(), cfg.qoi.measure, evaluator)?)
}

#[derive(Serialize)]
struct BootstrapReport<'a> {
    policies: Vec<String>,
    parameters: Vec<String>,
    /// The draws live in unconstrained coordinates.
    coordinates: &'static str,
    #[serde(flatten)]
    result: &'a BootstrapResult,
}

pub fn bootstrap(cfg: &RunConfig) -> anyhow::Result<Artifacts> {
    let est = load_estimate(cfg)?;
    let qoi = policy_qoi(cfg, &est)?;
    let b = BootstrapConfig::new(cfg.bootstrap.draws, cfg.bootstrap.alpha, cfg.seeds().bootstrap)?;
    let sigma = est.unconstrained_sigma_matrix()?;
    let result = bootstrap::cs_bootstrap(&est.unconstrained_hat, &sigma, |u| qoi.evaluate(u), &b)?;
    let names = qoi.policy_names();
    let report = BootstrapReport {
        policies: names.clone(),
        parameters: qoi.space().names(),
        coordinates: "unconstrained",
        result: &result,
    };
    write_json(&cfg.output_dir, "bootstrap.json", &report)?;
    bootstrap::write_qoi_samples(&result, &names, create(&cfg.output_dir, "qoi_samples.csv")?)?;
    let files: Vec<String> = names.iter().map(|n| format!("qoi_samples_{}.csv", file_stem(n))).collect();
    if files.iter().collect::<std::collections::BTreeSet<_>>().len() < files.len() {
        bail!("policy names map to the same sample file name; rename them");
    }
    let mut artifacts = vec!["bootstrap.json".to_string(), "qoi_samples.csv".to_string()];
    for (g, (name, file)) in names.iter().zip(files).enumerate() {
        bootstrap::write_policy_samples(&result, g, name, create(&cfg.output_dir, &file)?)?;
        artifacts.push(file);
    }
    Ok(artifacts)
}

pub fn trace(cfg: &RunConfig) -> anyhow::Result<Artifacts> {
    let est = load_estimate(cfg)?;
    let qoi = policy_qoi(cfg, &est)?;
    let k = match cfg.trace.parameter {
        Some(path) => est
            .free
            .iter()
            .position(|p| *p == path)
            .with_context(|| format!("trace parameter `{path}` is not a free parameter"))?,
        None => 0,
    };
    let z = chi2_quantile(1, 1.0 - cfg.bootstrap.alpha).sqrt();
    let se = est.unconstrained_std_errors();
    let t = pipeline::parameter_trace(&qoi, &est.unconstrained_hat, &se, k, z, cfg.trace.points)?;
    pipeline::write_trace_csv(&t, create(&cfg.output_dir, "trace.csv")?)?;
    write_json(&cfg.output_dir, "trace.json", &t)?;
    Ok(vec!["trace.csv".into(), "trace.json".into()])
}

pub fn rank(cfg: &RunConfig) -> anyhow::Result<Artifacts> {
    let est = load_estimate(cfg)?;
    let qoi = policy_qoi(cfg, &est)?;
    let mut alphas = vec![cfg.bootstrap.alpha];
    alphas.extend(cfg.decision.alpha_grid.iter().copied().filter(|a| *a != cfg.bootstrap.alpha));
    let sweep_cfg = SweepConfig {
        draws: cfg.bootstrap.draws,
        uniform_draws: cfg.decision.uniform_draws,
        seed: cfg.seeds().bootstrap,
        tie_tol: cfg.decision.tie_tol,
    };
    let sigma = est.unconstrained_sigma_matrix()?;
    let sweep = decision::alpha_sweep(
        &est.unconstrained_hat,
        &sigma,
        |u| qoi.evaluate(u),
        &qoi.policy_names(),
        &cfg.decision.rules,
        &sweep_cfg,
        &alphas,
    )?;
    let table = &sweep.levels[0].table;
    write_json(&cfg.output_dir, "decision_table.json", table)?;
    table.write_rank_matrix(create(&cfg.output_dir, "decision_ranks.csv")?)?;
    write_json(&cfg.output_dir, "alpha_sweep.json", &sweep)?;
    Ok(vec!["decision_table.json".into(), "decision_ranks.csv".into(), "alpha_sweep.json".into()])
}

pub fn fit(cfg: &RunConfig) -> anyhow::Result<Artifacts> {
    let p = if cfg.fit.use_estimate { load_estimate(cfg)?.parameters } else { load_model(cfg)? };
    let data = panel::load_panel(cfg.data_path()?, p.schooling.h_max)?;
    let seeds = cfg.seeds();
    let report = pipeline::fit_report(&data, &p, cfg.simulate.emax_draws, seeds.emax, seeds.simulation)?;
    pipeline::write_fit_csv(&report, create(&cfg.output_dir, "fit.csv")?)?;
    Ok(vec!["fit.csv".into()])
}
