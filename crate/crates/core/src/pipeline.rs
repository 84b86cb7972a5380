//! Glue between estimation output, policy simulation and the bootstrap: the
//! quantity-of-interest map over unconstrained coordinates, one-parameter
//! traces and observed-versus-simulated fit tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::ParameterSpace;
use crate::model::ModelParameters;
use crate::panel::Panel;
use crate::simulate::{self, PanelSummary, PolicyEffect, PolicyEvaluator, PolicyTransform};
use crate::solver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QoiMeasure {
    #[default]
    MeanSchooling,
    HighSchoolGrad,
    CollegeGrad,
}

impl QoiMeasure {
    pub fn of(self, e: &PolicyEffect) -> f64 {
        match self {
            QoiMeasure::MeanSchooling => e.delta_mean_schooling,
            QoiMeasure::HighSchoolGrad => e.delta_hs_grad,
            QoiMeasure::CollegeGrad => e.delta_college_grad,
        }
    }
}

/// Policy effects as a function of the free parameters.
#[derive(Debug, Clone)]
pub struct PolicyQoi {
    base: ModelParameters,
    space: ParameterSpace,
    policies: Vec<PolicyTransform>,
    evaluator: PolicyEvaluator,
    measure: QoiMeasure,
}

impl PolicyQoi {
    pub fn new(
        base: ModelParameters,
        space: ParameterSpace,
        policies: Vec<PolicyTransform>,
        measure: QoiMeasure,
        evaluator: PolicyEvaluator,
    ) -> Result<Self> {
        if policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        Ok(Self { base, space, policies, evaluator, measure })
    }

    pub fn policy_names(&self) -> Vec<String> {
        self.policies.iter().map(|p| p.name.clone()).collect()
    }

    pub fn space(&self) -> &ParameterSpace {
        &self.space
    }

    pub fn base(&self) -> &ModelParameters {
        &self.base
    }

    pub fn at_parameters(&self, p: &ModelParameters) -> Result<Vec<f64>> {
        Ok(self.evaluator.effects(p, &self.policies)?.iter().map(|e| self.measure.of(e)).collect())
    }

    /// Effects at unconstrained point `u`.
    pub fn evaluate(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.at_parameters(&self.space.apply(&self.base, u)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub unconstrained: f64,
    pub value: f64,
    pub qoi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterTrace {
    pub parameter: String,
    pub z: f64,
    pub policies: Vec<String>,
    pub points: Vec<TracePoint>,
}

/// Moves free coordinate `k` across `u_hat[k] +/- z * se[k]` with every other
/// coordinate held at `u_hat`.
pub fn parameter_trace(
    qoi: &PolicyQoi,
    u_hat: &[f64],
    u_se: &[f64],
    k: usize,
    z: f64,
    n_points: usize,
) -> Result<ParameterTrace> {
    if k >= u_hat.len() || u_se.len() != u_hat.len() {
        return Err(Error::Dimension(format!("coordinate {k} out of range for {} parameters", u_hat.len())));
    }
    if n_points < 2 {
        return Err(Error::Config("a trace needs at least two points".into()));
    }
    let (lo, hi) = (u_hat[k] - z * u_se[k], u_hat[k] + z * u_se[k]);
    let points = (0..n_points)
        .map(|i| {
            let mut u = u_hat.to_vec();
            u[k] = lo + (hi - lo) * i as f64 / (n_points - 1) as f64;
            let value = qoi.space.to_natural(&qoi.base, &u)[k];
            Ok(TracePoint { unconstrained: u[k], value, qoi: qoi.evaluate(&u)? })
        })
        .collect::<Result<_>>()?;
    Ok(ParameterTrace { parameter: qoi.space.paths()[k].to_string(), z, policies: qoi.policy_names(), points })
}

pub fn write_trace_csv<W: Write>(trace: &ParameterTrace, mut out: W) -> Result<()> {
    writeln!(out, "value,unconstrained,{}", trace.policies.join(","))?;
    for p in &trace.points {
        let q: Vec<String> = p.qoi.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{},{}", p.value, p.unconstrained, q.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub observed: PanelSummary,
    pub simulated: PanelSummary,
}

/// Summaries of `observed` against a panel simulated at `p` with as many
/// persons as `observed` has.
pub fn fit_report(observed: &Panel, p: &ModelParameters, emax_draws: usize, emax_seed: u64, sim_seed: u64) -> Result<FitReport> {
    let sol = solver::solve(p, emax_draws, emax_seed)?;
    let simulated = simulate::simulate_panel(p, &sol, observed.num_persons(), sim_seed)?;
    Ok(FitReport { observed: simulate::summarize(observed)?, simulated: simulate::summarize(&simulated)? })
}

pub fn write_fit_csv<W: Write>(fit: &FitReport, mut out: W) -> Result<()> {
    writeln!(out, "source,{}", simulate::SUMMARY_HEADER)?;
    for (source, summary) in [("observed", &fit.observed), ("simulated", &fit.simulated)] {
        let mut buf = Vec::new();
        simulate::write_summary_csv(summary, &mut buf)?;
        let text = String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))?;
        for line in text.lines().skip(1) {
            writeln!(out, "{source},{line}")?;
        }
    }
    Ok(())
}
