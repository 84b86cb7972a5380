use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use ekw_cli::commands;
use ekw_cli::config::RunConfig;
use ekw_cli::manifest::{digest_file, Manifest};

#[derive(Parser)]
#[command(name = "ekw", version, about = "Solve, simulate, estimate and rank policies in a dynamic schooling model")]
struct Cli {
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Two-policy scalar illustration with all four decision rules.
    Toy {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a panel and its per-period summary.
    Simulate(Common),
    /// Simulated maximum likelihood on the configured data.
    Estimate(Common),
    /// Confidence-set bootstrap of the policy effects.
    Bootstrap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Policy effects along one parameter's marginal interval.
    Trace(Common),
    /// Decision table under every configured rule and alpha.
    Rank(Common),
    /// Observed against simulated summaries.
    Fit(Common),
}

fn load(common: &Common) -> anyhow::Result<(RunConfig, String)> {
    let (mut cfg, text) = RunConfig::load(&common.config)?;
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    Ok((cfg, text))
}

fn digest_inputs(m: &mut Manifest, inputs: &[(&str, Option<&Path>)]) -> anyhow::Result<()> {
    for (role, path) in inputs {
        if let Some(path) = path {
            m.inputs.push(digest_file(role, path)?);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("configuring thread pool")?;
    }
    match cli.command {
        Command::Toy { config, alpha, draws, seed, out } => {
            let (block, text, dir) = match &config {
                Some(path) => {
                    let (cfg, text) = RunConfig::load(path)?;
                    (cfg.toy.clone(), Some((text, cfg.seeds())), cfg.output_dir)
                }
                None => (Default::default(), None, PathBuf::from("out")),
            };
            let alpha = alpha.unwrap_or(block.alpha);
            let draws = draws.unwrap_or(block.draws);
            let seed = seed.or(block.seed).unwrap_or(ekw_core::toy::DEFAULT_TOY_SEED);
            let dir = out.unwrap_or(dir);
            commands::prepare_output(&dir)?;
            let artifacts = commands::toy(alpha, draws, seed, &dir)?;
            let mut m = Manifest::new("toy", seed);
            if let Some((text, seeds)) = text {
                m = m.with_config(&text, seeds);
            }
            m.arguments = vec![("alpha".into(), alpha.to_string()), ("draws".into(), draws.to_string())];
            m.write(&dir, &artifacts)?;
        }
        Command::Bootstrap { common, draws, alpha } => {
            let (mut cfg, text) = load(&common)?;
            let mut m = Manifest::new("bootstrap", cfg.seed);
            if let Some(d) = draws {
                cfg.bootstrap.draws = d;
                m.arguments.push(("draws".into(), d.to_string()));
            }
            if let Some(a) = alpha {
                cfg.bootstrap.alpha = a;
                m.arguments.push(("alpha".into(), a.to_string()));
            }
            commands::prepare_output(&cfg.output_dir)?;
            let mut m = m.with_config(&text, cfg.seeds());
            digest_inputs(&mut m, &[("estimate", Some(&cfg.estimate_path()))])?;
            let artifacts = commands::bootstrap(&cfg)?;
            m.write(&cfg.output_dir, &artifacts)?;
        }
        other => {
            let (name, common) = match &other {
                Command::Simulate(c) => ("simulate", c),
                Command::Estimate(c) => ("estimate", c),
                Command::Trace(c) => ("trace", c),
                Command::Rank(c) => ("rank", c),
                Command::Fit(c) => ("fit", c),
                Command::Toy { .. } | Command::Bootstrap { .. } => unreachable!("handled above"),
            };
            let (cfg, text) = load(common)?;
            commands::prepare_output(&cfg.output_dir)?;
            let mut m = Manifest::new(name, cfg.seed).with_config(&text, cfg.seeds());
            let estimate_path = cfg.estimate_path();
            let inputs: Vec<(&str, Option<&Path>)> = match name {
                "simulate" => vec![("model", cfg.model.as_deref())],
                "estimate" => vec![
                    ("model", cfg.model.as_deref()),
                    ("data", cfg.data.as_deref()),
                    ("start", cfg.estimate.start.as_deref()),
                ],
                "fit" if cfg.fit.use_estimate => vec![("estimate", Some(&estimate_path)), ("data", cfg.data.as_deref())],
                "fit" => vec![("model", cfg.model.as_deref()), ("data", cfg.data.as_deref())],
                _ => vec![("estimate", Some(&estimate_path))],
            };
            digest_inputs(&mut m, &inputs)?;
            let artifacts = match name {
                "simulate" => commands::simulate(&cfg)?,
                "estimate" => commands::estimate(&cfg)?,
                "trace" => commands::trace(&cfg)?,
                "rank" => commands::rank(&cfg)?,
                _ => commands::fit(&cfg)?,
            };
            m.write(&cfg.output_dir, &artifacts)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.chain().find_map(|c| c.downcast_ref::<ekw_core::Error>()).map_or("Error", |c| c.kind());
            let report = serde_json::json!({ "error": kind, "message": format!("{e:#}") });
            eprintln!("{report}");
            ExitCode::FAILURE
        }
    }
}
