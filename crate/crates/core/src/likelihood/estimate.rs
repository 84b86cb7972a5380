//! Maximum simulated likelihood over a free-parameter subset and the
//! outer-product-of-gradients covariance.
//!
//! The search runs in standardized coordinates: unconstrained values shifted
//! by the start and divided by standard errors from an OPG at the start. A
//! Nelder-Mead phase is followed by BFGS started from the inverse OPG;
//! convergence means the gradient norm in these units is below `grad_tol`.

use std::cell::RefCell;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::space::{ParameterSpace, Transform};
use super::{LikelihoodConfig, LikelihoodProblem};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetrize, to_rows};
use crate::model::{ModelParameters, ParamPath};
use crate::optimize::{bfgs, nelder_mead, BfgsOptions, NelderMeadOptions};
use crate::panel::Panel;

fn default_fd_step() -> f64 {
    0.01
}
fn default_ridge_threshold() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    pub free: Vec<ParamPath>,
    pub likelihood: LikelihoodConfig,
    #[serde(default)]
    pub nelder_mead: NelderMeadOptions,
    #[serde(default)]
    pub bfgs: BfgsOptions,
    /// Finite-difference step in standard-error units.
    #[serde(default = "default_fd_step")]
    pub fd_step: f64,
    /// Largest ridge, relative to a unit-diagonal information matrix, accepted
    /// before the information is declared singular.
    #[serde(default = "default_ridge_threshold")]
    pub ridge_threshold: f64,
}

impl EstimationConfig {
    pub fn new(free: Vec<ParamPath>, likelihood: LikelihoodConfig) -> Self {
        Self {
            free,
            likelihood,
            nelder_mead: NelderMeadOptions::default(),
            bfgs: BfgsOptions::default(),
            fd_step: default_fd_step(),
            ridge_threshold: default_ridge_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub free: Vec<ParamPath>,
    /// Free parameters in natural units.
    pub theta_hat: Vec<f64>,
    pub sigma_hat: Vec<Vec<f64>>,
    pub std_errors: Vec<f64>,
    pub transforms: Vec<Transform>,
    /// Free parameters in the unconstrained coordinates used for the search
    /// and for parameter draws.
    pub unconstrained_hat: Vec<f64>,
    pub unconstrained_sigma: Vec<Vec<f64>>,
    pub loglik: f64,
    pub start_loglik: f64,
    pub converged: bool,
    pub gradient_norm: f64,
    pub nelder_mead_evals: usize,
    pub bfgs_iterations: usize,
    /// Ridge added to the standardized information matrix (0 if none).
    pub ridge: f64,
    /// Full parameter set at the estimate.
    pub parameters: ModelParameters,
}

/// Smallest squared Cholesky pivot accepted for the unit-diagonal information.
const PIVOT_TOL: f64 = 1e-8;

/// Inverse of `S'S` for per-person scores `S` (persons by parameters), with a
/// ridge on the standardized matrix when it is not numerically positive
/// definite. Returns the covariance and the ridge used.
pub fn opg_covariance(scores: &DMatrix<f64>, ridge_threshold: f64) -> Result<(DMatrix<f64>, f64)> {
    let info = symmetrize(&(scores.transpose() * scores));
    let n = info.nrows();
    let d: Vec<f64> = (0..n).map(|i| info[(i, i)]).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::SingularInformation { ridge: f64::INFINITY });
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| info[(i, j)] / (d[i] * d[j]).sqrt());
    let mut ridge = 0.0;
    let chol = loop {
        let m = &scaled + DMatrix::identity(n, n) * ridge;
        if let Ok(c) = cholesky(&m) {
            if c.l_dirty().diagonal().iter().all(|d| d * d >= PIVOT_TOL) {
                break c;
            }
        }
        ridge = if ridge == 0.0 { 1e-12 } else { ridge * 10.0 };
        if ridge > ridge_threshold {
            return Err(Error::SingularInformation { ridge });
        }
    };
    if ridge > 0.0 {
        warn!(ridge, "information matrix regularized");
    }
    let inv = chol.inverse();
    let cov = DMatrix::from_fn(n, n, |i, j| inv[(i, j)] / (d[i] * d[j]).sqrt());
    Ok((symmetrize(&cov), ridge))
}

struct Objective<'a> {
    problem: LikelihoodProblem<'a>,
    space: ParameterSpace,
    base: ModelParameters,
}

impl Objective<'_> {
    fn person_logliks(&self, u: &[f64]) -> Result<Vec<f64>> {
        let p = self.space.apply(&self.base, u)?;
        self.problem.person_logliks(&p)
    }

    fn loglik(&self, u: &[f64]) -> f64 {
        match self.person_logliks(u) {
            Ok(v) => {
                let s: f64 = v.iter().sum();
                if s.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    s
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Central-difference scores, persons by coordinates, with step `steps[k]`.
    fn scores(&self, u: &[f64], steps: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.problem.panel().num_persons();
        let mut out = DMatrix::zeros(n, u.len());
        let mut x = u.to_vec();
        for k in 0..u.len() {
            x[k] = u[k] + steps[k];
            let up = self.person_logliks(&x)?;
            x[k] = u[k] - steps[k];
            let dn = self.person_logliks(&x)?;
            x[k] = u[k];
            for i in 0..n {
                out[(i, k)] = (up[i] - dn[i]) / (2.0 * steps[k]);
            }
        }
        Ok(out)
    }
}

fn relative_steps(u: &[f64]) -> Vec<f64> {
    u.iter().map(|x| 1e-4 * x.abs().max(1.0)).collect()
}

/// OPG covariance of the unconstrained coordinates at `u_hat`.
pub fn score_covariance(
    panel: &Panel,
    base: &ModelParameters,
    space: &ParameterSpace,
    u_hat: &[f64],
    cfg: &EstimationConfig,
) -> Result<DMatrix<f64>> {
    let problem = LikelihoodProblem::new(panel, base, &cfg.likelihood)?;
    let obj = Objective { problem, space: space.clone(), base: base.clone() };
    let scores = obj.scores(u_hat, &relative_steps(u_hat))?;
    Ok(opg_covariance(&scores, cfg.ridge_threshold)?.0)
}

pub fn estimate(panel: &Panel, start: &ModelParameters, cfg: &EstimationConfig) -> Result<EstimateResult> {
    if panel.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let space = ParameterSpace::new(cfg.free.clone(), start)?;
    let problem = LikelihoodProblem::new(panel, start, &cfg.likelihood)?;
    let obj = Objective { problem, space: space.clone(), base: start.clone() };
    let l = space.dim();
    let u0 = space.to_unconstrained(start)?;
    let start_loglik = obj.loglik(&u0);
    if !start_loglik.is_finite() {
        return Err(Error::InvalidParameter { field: "start".into(), reason: "log-likelihood is not finite".into() });
    }

    // Standard errors at the start define the search coordinates.
    let scores0 = obj.scores(&u0, &relative_steps(&u0))?;
    let (scale, h0) = match opg_covariance(&scores0, 1e-2) {
        Ok((cov, _)) => {
            let scale: Vec<f64> = (0..l).map(|k| cov[(k, k)].sqrt()).collect();
            let h0 = DMatrix::from_fn(l, l, |i, j| cov[(i, j)] / (scale[i] * scale[j]));
            (scale, h0)
        }
        Err(_) => {
            warn!("information at the start is singular; searching in relative units");
            (relative_steps(&u0).iter().map(|h| h * 100.0).collect(), DMatrix::identity(l, l))
        }
    };
    let to_u = |y: &[f64]| -> Vec<f64> { u0.iter().zip(&scale).zip(y).map(|((u, s), y)| u + s * y).collect() };
    let objective = |y: &[f64]| -obj.loglik(&to_u(y));

    let nm = if cfg.nelder_mead.max_evals > 0 {
        nelder_mead(objective, &vec![0.0; l], &cfg.nelder_mead)
    } else {
        crate::optimize::OptimResult {
            x: vec![0.0; l],
            f: -start_loglik,
            evaluations: 0,
            iterations: 0,
            converged: false,
            grad_norm: None,
        }
    };
    debug!(loglik = -nm.f, evals = nm.evaluations, "simplex phase done");

    let steps: Vec<f64> = scale.iter().map(|s| s * cfg.fd_step).collect();
    // Scores from the latest gradient call, reused when BFGS stops there.
    type ScoreCache = Option<(Vec<f64>, Result<DMatrix<f64>>)>;
    let last_scores: RefCell<ScoreCache> = RefCell::new(None);
    let gradient = |y: &[f64]| -> Vec<f64> {
        let u = to_u(y);
        let scores = obj.scores(&u, &steps);
        let g = match &scores {
            Ok(s) => (0..l).map(|k| -scale[k] * s.column(k).sum()).collect(),
            Err(_) => vec![f64::NAN; l],
        };
        *last_scores.borrow_mut() = Some((y.to_vec(), scores));
        g
    };
    let refined = bfgs(objective, gradient, &nm.x, nm.f, &h0, &cfg.bfgs);
    debug!(loglik = -refined.f, iterations = refined.iterations, converged = refined.converged, "quasi-Newton phase done");

    let u_hat = to_u(&refined.x);
    let scores = match last_scores.into_inner() {
        Some((y, Ok(s))) if y == refined.x => s,
        _ => obj.scores(&u_hat, &steps)?,
    };
    let (sigma_u, ridge) = opg_covariance(&scores, cfg.ridge_threshold)?;
    let jac = space.jacobian(start, &u_hat);
    let sigma = symmetrize(&(&jac * &sigma_u * jac.transpose()));
    let parameters = space.apply(start, &u_hat)?;
    let gradient_norm = refined.grad_norm.unwrap_or(f64::NAN);
    Ok(EstimateResult {
        free: cfg.free.clone(),
        theta_hat: space.natural(&parameters)?,
        std_errors: (0..l).map(|k| sigma[(k, k)].sqrt()).collect(),
        sigma_hat: to_rows(&sigma),
        transforms: space.transforms().to_vec(),
        unconstrained_hat: u_hat,
        unconstrained_sigma: to_rows(&sigma_u),
        loglik: -refined.f,
        start_loglik,
        converged: refined.converged && gradient_norm.is_finite(),
        gradient_norm,
        nelder_mead_evals: nm.evaluations,
        bfgs_iterations: refined.iterations,
        ridge,
        parameters,
    })
}

impl EstimateResult {
    pub fn space(&self) -> Result<ParameterSpace> {
        ParameterSpace::new(self.free.clone(), &self.parameters)
    }

    pub fn unconstrained_sigma_matrix(&self) -> Result<DMatrix<f64>> {
        crate::linalg::from_rows(&self.unconstrained_sigma)
    }

    /// Standard errors of the unconstrained coordinates.
    pub fn unconstrained_std_errors(&self) -> Vec<f64> {
        (0..self.unconstrained_sigma.len()).map(|k| self.unconstrained_sigma[k][k].sqrt()).collect()
    }

    /// `theta_hat + z * std_errors`, used for marginal intervals.
    pub fn marginal_interval(&self, k: usize, z: f64) -> (f64, f64) {
        (self.theta_hat[k] - z * self.std_errors[k], self.theta_hat[k] + z * self.std_errors[k])
    }
}
