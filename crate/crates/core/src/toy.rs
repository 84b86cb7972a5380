//! The two-policy scalar illustration.
//!
//! One parameter with estimate 3 and standard deviation 0.75 drives two
//! candidate models, `exp(theta)` and `29.08 - 3 theta`. They predict almost
//! the same outcome at the estimate but disagree sharply across the 90%
//! confidence interval, which separates the four decision rules.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{self, BootstrapConfig, Interval};
use crate::decision::{self, DecisionTable, QoiMatrix, Rule, RuleInputs};
use crate::error::{Error, Result};
use crate::stats::chi2_quantile;

/// Default seed for the toy run when none is given.
pub const DEFAULT_TOY_SEED: u64 = 20_191_028;
pub const DEFAULT_TOY_DRAWS: usize = 30_000;
/// Tolerance under which the two point predictions count as equal.
pub const TOY_TIE_TOL: f64 = 0.01;

const LINEAR_INTERCEPT: f64 = 29.08;
const LINEAR_SLOPE: f64 = 3.0;
const HISTOGRAM_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyEstimate {
    pub mean: f64,
    pub sd: f64,
}

impl Default for ToyEstimate {
    fn default() -> Self {
        Self { mean: 3.0, sd: 0.75 }
    }
}

impl ToyEstimate {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidParameter { field: "sd".into(), reason: format!("must be positive, got {sd}") });
        }
        Ok(Self { mean, sd })
    }

    /// `mean +/- sd * sqrt(chi2_1(1 - alpha))`.
    pub fn interval(&self, alpha: f64) -> Result<Interval> {
        bootstrap::check_alpha(alpha)?;
        let half = self.sd * chi2_quantile(1, 1.0 - alpha).sqrt();
        Ok(Interval { lo: self.mean - half, hi: self.mean + half })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToyPolicy {
    /// `exp(theta)`
    Exponential = 1,
    /// `29.08 - 3 theta`
    Linear = 2,
}

impl ToyPolicy {
    pub const BOTH: [ToyPolicy; 2] = [ToyPolicy::Exponential, ToyPolicy::Linear];

    pub fn name(self) -> &'static str {
        match self {
            ToyPolicy::Exponential => "g1",
            ToyPolicy::Linear => "g2",
        }
    }
}

impl TryFrom<u8> for ToyPolicy {
    type Error = Error;

    fn try_from(g: u8) -> Result<Self> {
        match g {
            1 => Ok(ToyPolicy::Exponential),
            2 => Ok(ToyPolicy::Linear),
            _ => Err(Error::Config(format!("toy policy must be 1 or 2, got {g}"))),
        }
    }
}

pub fn toy_model(g: ToyPolicy, theta: f64) -> f64 {
    match g {
        ToyPolicy::Exponential => theta.exp(),
        ToyPolicy::Linear => LINEAR_INTERCEPT - LINEAR_SLOPE * theta,
    }
}

pub fn toy_qoi(theta: f64) -> Vec<f64> {
    ToyPolicy::BOTH.iter().map(|&g| toy_model(g, theta)).collect()
}

/// Confidence interval for the default estimate.
pub fn toy_interval(alpha: f64) -> Result<(f64, f64)> {
    let i = ToyEstimate::default().interval(alpha)?;
    Ok((i.lo, i.hi))
}

/// Where the two models agree: the root of `exp(theta) + 3 theta - 29.08`.
pub fn crossing_point() -> f64 {
    let f = |t: f64| toy_model(ToyPolicy::Exponential, t) - toy_model(ToyPolicy::Linear, t);
    // f is increasing, so bisection on a sign change is exact enough
    let (mut lo, mut hi) = (0.0, 6.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub theta: f64,
    pub y1: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub policy: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretRow {
    pub theta: f64,
    pub regret_g1: f64,
    pub regret_g2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySummary {
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub analytic_interval: Interval,
    pub theta_cs: Interval,
    pub cs_per_policy: Vec<Interval>,
    pub point_qoi: Vec<f64>,
    pub crossing: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyReport {
    pub summary: ToySummary,
    pub table: DecisionTable,
    pub trace: Vec<TraceRow>,
    pub distribution: Vec<HistogramBin>,
    pub regret: Vec<RegretRow>,
    /// Accepted draws of the parameter, in draw order.
    pub accepted_theta: Vec<f64>,
    pub cs_samples: QoiMatrix,
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn histogram(policy: &str, samples: &[f64], bins: usize) -> Vec<HistogramBin> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = samples.len() as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| HistogramBin {
            policy: policy.to_string(),
            lo: lo + k as f64 * width,
            hi: lo + (k + 1) as f64 * width,
            count,
            density: count as f64 / (n * width),
        })
        .collect()
}

/// Full pipeline on the toy: bootstrap, all four rules and the plot tables.
pub fn toy_report(alpha: f64, n_draws: usize, seed: u64) -> Result<ToyReport> {
    let est = ToyEstimate::default();
    let cfg = BootstrapConfig::new(n_draws, alpha, seed)?;
    let sigma = DMatrix::from_element(1, 1, est.sd * est.sd);
    let qoi = |x: &[f64]| Ok(toy_qoi(x[0]));
    let boot = bootstrap::cs_bootstrap(&[est.mean], &sigma, qoi, &cfg)?;

    let uniform = bootstrap::uniform_ellipsoid_sample(&[est.mean], &sigma, alpha, n_draws, seed)?;
    let uniform_samples = QoiMatrix::from_rows(uniform.iter().map(|x| toy_qoi(x[0])).collect())?;
    let cs_samples = QoiMatrix::from(&boot);
    let inputs = RuleInputs { point_qoi: boot.point_qoi.clone(), cs_samples: cs_samples.clone(), uniform_samples };
    let names: Vec<String> = ToyPolicy::BOTH.iter().map(|g| g.name().to_string()).collect();
    let table = decision::decide(&names, &inputs, &Rule::ALL, &decision::linear, TOY_TIE_TOL)?;

    let accepted_theta: Vec<f64> = boot.accepted.iter().map(|x| x[0]).collect();
    let theta_cs = Interval {
        lo: accepted_theta.iter().copied().fold(f64::INFINITY, f64::min),
        hi: accepted_theta.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    let analytic = est.interval(alpha)?;
    let trace = grid(0.0, 6.0, 601)
        .map(|theta| TraceRow {
            theta,
            y1: toy_model(ToyPolicy::Exponential, theta),
            y2: toy_model(ToyPolicy::Linear, theta),
        })
        .collect();
    let regret = grid(analytic.lo, analytic.hi, 201)
        .map(|theta| {
            let (y1, y2) = (toy_model(ToyPolicy::Exponential, theta), toy_model(ToyPolicy::Linear, theta));
            let best = y1.max(y2);
            RegretRow { theta, regret_g1: best - y1, regret_g2: best - y2 }
        })
        .collect();
    let distribution = names
        .iter()
        .enumerate()
        .flat_map(|(g, name)| histogram(name, &boot.policy_samples(g), HISTOGRAM_BINS))
        .collect();

    Ok(ToyReport {
        summary: ToySummary {
            alpha,
            draws: n_draws,
            seed,
            acceptance_rate: boot.acceptance_rate,
            analytic_interval: analytic,
            theta_cs,
            cs_per_policy: boot.cs_per_policy.clone(),
            point_qoi: boot.point_qoi.clone(),
            crossing: crossing_point(),
        },
        table,
        trace,
        distribution,
        regret,
        accepted_theta,
        cs_samples,
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_csv<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

impl ToyReport {
    /// Writes `fig1_trace.csv`, `fig3_dist.csv`, `fig4_regret.csv`,
    /// `decision_table.json`, `decision_ranks.csv` and `toy_summary.json`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        write_csv(&self.trace, create(&dir.join("fig1_trace.csv"))?)?;
        write_csv(&self.distribution, create(&dir.join("fig3_dist.csv"))?)?;
        write_csv(&self.regret, create(&dir.join("fig4_regret.csv"))?)?;
        write_json(&self.table, &dir.join("decision_table.json"))?;
        self.table.write_rank_matrix(create(&dir.join("decision_ranks.csv"))?)?;
        write_json(&self.summary, &dir.join("toy_summary.json"))?;
        Ok(["fig1_trace.csv", "fig3_dist.csv", "fig4_regret.csv", "decision_table.json", "decision_ranks.csv", "toy_summary.json"]
            .map(String::from)
            .to_vec())
    }
}
