//! Simulated likelihood of a panel.
//!
//! A person-period contributes the smoothed simulated probability that the
//! observed choice is optimal. When a wage is observed the chosen shock is
//! recovered from the log-wage equation, the other shocks are drawn from their
//! conditional normal and the lognormal wage density multiplies the
//! probability. Smoothing replaces the optimality indicator with a logit
//! kernel of temperature `tau`. Draws come in antithetic pairs and are keyed
//! by `(seed, person_id, t)`.

mod estimate;
mod space;

pub use estimate::{estimate, opg_covariance, score_covariance, EstimateResult, EstimationConfig};
pub use space::{ParameterSpace, Transform};

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{utility_components, ModelParameters, StateSpace, DEFAULT_STATE_CAP, NUM_ALTERNATIVES, NUM_WORKING};
use crate::panel::{Observation, Panel};
use crate::rng::{self, Domain};
use crate::solver::{solve_in, Solution};
use crate::stats::normal_pdf;

pub const DEFAULT_N_SIM: usize = 200;
pub const DEFAULT_TAU: f64 = 500.0;
pub const DEFAULT_FLOOR: f64 = 1e-300;

fn default_n_sim() -> usize {
    DEFAULT_N_SIM
}
fn default_tau() -> f64 {
    DEFAULT_TAU
}
fn default_floor() -> f64 {
    DEFAULT_FLOOR
}
fn default_emax_draws() -> usize {
    crate::solver::DEFAULT_EMAX_DRAWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodConfig {
    /// Simulated shock vectors per observation, rounded up to an even number.
    #[serde(default = "default_n_sim")]
    pub n_sim: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Draws for the Emax integration inside each likelihood evaluation.
    #[serde(default = "default_emax_draws")]
    pub emax_draws: usize,
    pub emax_seed: u64,
    pub seed: u64,
}

impl LikelihoodConfig {
    pub fn new(seed: u64, emax_seed: u64) -> Self {
        Self {
            n_sim: DEFAULT_N_SIM,
            tau: DEFAULT_TAU,
            floor: DEFAULT_FLOOR,
            emax_draws: default_emax_draws(),
            emax_seed,
            seed,
        }
    }

    fn pairs(&self) -> usize {
        self.n_sim.div_ceil(2).max(1)
    }

    fn check(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.floor > 0.0) {
            return Err(Error::Config("likelihood floor must be positive".into()));
        }
        if self.emax_draws == 0 {
            return Err(Error::Config("emax_draws must be at least 1".into()));
        }
        Ok(())
    }
}

/// Standard normal base draws of one observation; each is used with its negation.
pub fn observation_draws(seed: u64, person_id: u32, t: u32, pairs: usize) -> Vec<[f64; NUM_ALTERNATIVES]> {
    let mut rng = rng::stream(seed, Domain::LikelihoodDraws, person_id as u64, t as u64);
    (0..pairs)
        .map(|_| std::array::from_fn(|_| rng::standard_normal(&mut rng)))
        .collect()
}

/// Shock quantities of one parameter vector needed by every contribution.
#[derive(Debug, Clone)]
struct ShockStructure {
    chol: [[f64; NUM_ALTERNATIVES]; NUM_ALTERNATIVES],
    sd: [f64; NUM_WORKING],
    cond: [Conditional; NUM_WORKING],
}

/// Normal law of the other four shocks given the shock of working alternative `a`.
#[derive(Debug, Clone, Copy)]
struct Conditional {
    others: [usize; 4],
    /// Regression of the other shocks on the known one.
    slope: [f64; 4],
    /// Lower factor of the conditional covariance (columns may be zero).
    chol: [[f64; 4]; 4],
}

impl ShockStructure {
    fn new(p: &ModelParameters) -> Self {
        let sigma = p.shock_covariance();
        let cond = std::array::from_fn(|a| {
            let others: [usize; 4] = {
                let mut o = [0; 4];
                let mut n = 0;
                for b in 0..NUM_ALTERNATIVES {
                    if b != a {
                        o[n] = b;
                        n += 1;
                    }
                }
                o
            };
            let var = sigma[a][a];
            let slope = others.map(|b| sigma[b][a] / var);
            let mut cov = [[0.0; 4]; 4];
            for i in 0..4 {
                for j in 0..4 {
                    cov[i][j] = sigma[others[i]][others[j]] - slope[i] * slope[j] * var;
                }
            }
            Conditional { others, slope, chol: semidefinite_cholesky(&cov) }
        });
        Self { chol: p.shock_chol, sd: std::array::from_fn(|a| sigma[a][a].sqrt()), cond }
    }
}

/// Cholesky factor that zeroes columns whose pivot is negligible relative to
/// the diagonal entry, so singular conditional covariances are handled.
fn semidefinite_cholesky(a: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut l = [[0.0; 4]; 4];
    for j in 0..4 {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if d <= 1e-12 * a[j][j].abs() || d <= 0.0 {
            continue;
        }
        let dj = d.sqrt();
        l[j][j] = dj;
        for i in j + 1..4 {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / dj;
        }
    }
    l
}

/// Smoothed probability that alternative `a` attains the maximum of `v`.
#[inline]
fn logit_kernel(v: &[f64; NUM_ALTERNATIVES], a: usize, tau: f64) -> f64 {
    let mut den = 1.0;
    for (b, vb) in v.iter().enumerate() {
        let x = (vb - v[a]) / tau;
        // exp(-40) is below the rounding unit of `den`.
        if b != a && x > -40.0 {
            den += x.exp();
        }
    }
    1.0 / den
}

fn contribution_with(
    obs: &Observation,
    idx: usize,
    p: &ModelParameters,
    sol: &Solution,
    shocks: &ShockStructure,
    draws: &[[f64; NUM_ALTERNATIVES]],
    tau: f64,
) -> Result<f64> {
    let a = obs.choice.index();
    if obs.wage.is_some() && !obs.choice.is_working() {
        return Err(Error::InconsistentObservation {
            person_id: obs.person_id,
            t: obs.t(),
            reason: "wage recorded for a non-working choice".into(),
        });
    }
    let c = utility_components(&obs.state, p);
    let cont = sol.continuation(idx, p.delta);
    let fixed: [f64; NUM_ALTERNATIVES] = std::array::from_fn(|b| c.nonwage[b] + cont[b]);
    let level: [f64; NUM_WORKING] = std::array::from_fn(|b| c.log_wage[b].exp());
    let value = |b: usize, e: f64| if b < NUM_WORKING { fixed[b] + level[b] * e.exp() } else { fixed[b] + e };
    let mut sum = 0.0;

    match obs.wage {
        Some(w) => {
            let eps_a = w.ln() - c.log_wage[a];
            let cond = &shocks.cond[a];
            let mut v = [0.0; NUM_ALTERNATIVES];
            v[a] = fixed[a] + w;
            for z in draws {
                for sign in [1.0, -1.0] {
                    for i in 0..4 {
                        let mut e = cond.slope[i] * eps_a;
                        for k in 0..=i {
                            e += sign * cond.chol[i][k] * z[k];
                        }
                        v[cond.others[i]] = value(cond.others[i], e);
                    }
                    sum += logit_kernel(&v, a, tau);
                }
            }
            let prob = sum / (2 * draws.len()) as f64;
            let sd = shocks.sd[a];
            Ok(prob * normal_pdf(eps_a / sd) / (sd * w))
        }
        None => {
            for z in draws {
                for sign in [1.0, -1.0] {
                    let mut v = [0.0; NUM_ALTERNATIVES];
                    for (b, vb) in v.iter_mut().enumerate() {
                        let mut e = 0.0;
                        for k in 0..=b {
                            e += shocks.chol[b][k] * z[k];
                        }
                        *vb = value(b, sign * e);
                    }
                    sum += logit_kernel(&v, a, tau);
                }
            }
            Ok(sum / (2 * draws.len()) as f64)
        }
    }
}

/// Likelihood contribution of one person-period: a probability, or a
/// probability times a wage density when a wage is observed.
pub fn observation_contribution(
    obs: &Observation,
    p: &ModelParameters,
    sol: &Solution,
    n_sim: usize,
    tau: f64,
    seed: u64,
) -> Result<f64> {
    let idx = sol.space().index_of(&obs.state).ok_or(Error::UnknownState(obs.state))?;
    let draws = observation_draws(seed, obs.person_id, obs.t(), n_sim.div_ceil(2).max(1));
    contribution_with(obs, idx, p, sol, &ShockStructure::new(p), &draws, tau)
}

/// A panel prepared for repeated likelihood evaluation: state indices and
/// simulation draws are computed once.
#[derive(Debug, Clone)]
pub struct LikelihoodProblem<'a> {
    panel: &'a Panel,
    space: Arc<StateSpace>,
    cfg: LikelihoodConfig,
    state_index: Vec<u32>,
    draws: Vec<[f64; NUM_ALTERNATIVES]>,
}

impl<'a> LikelihoodProblem<'a> {
    pub fn new(panel: &'a Panel, p: &ModelParameters, cfg: &LikelihoodConfig) -> Result<Self> {
        cfg.check()?;
        let space = Arc::new(StateSpace::build(p, DEFAULT_STATE_CAP)?);
        let state_index = panel
            .rows()
            .iter()
            .map(|o| space.index_of(&o.state).map(|i| i as u32).ok_or(Error::UnknownState(o.state)))
            .collect::<Result<Vec<_>>>()?;
        let pairs = cfg.pairs();
        let draws = panel
            .rows()
            .par_iter()
            .flat_map_iter(|o| observation_draws(cfg.seed, o.person_id, o.t(), pairs))
            .collect();
        Ok(Self { panel, space, cfg: cfg.clone(), state_index, draws })
    }

    pub fn panel(&self) -> &Panel {
        self.panel
    }

    pub fn config(&self) -> &LikelihoodConfig {
        &self.cfg
    }

    pub fn solve(&self, p: &ModelParameters) -> Result<Solution> {
        solve_in(self.space.clone(), p, self.cfg.emax_draws, self.cfg.emax_seed)
    }

    /// Log-likelihood of each person, in id order.
    pub fn person_logliks(&self, p: &ModelParameters) -> Result<Vec<f64>> {
        if self.panel.is_empty() {
            return Ok(Vec::new());
        }
        let sol = self.solve(p)?;
        self.person_logliks_with(p, &sol)
    }

    pub fn person_logliks_with(&self, p: &ModelParameters, sol: &Solution) -> Result<Vec<f64>> {
        let shocks = ShockStructure::new(p);
        let pairs = self.cfg.pairs();
        self.panel
            .person_ranges()
            .par_iter()
            .map(|range| {
                let mut ll = 0.0;
                for i in range.clone() {
                    let draws = &self.draws[i * pairs..(i + 1) * pairs];
                    let c = contribution_with(
                        &self.panel.rows()[i],
                        self.state_index[i] as usize,
                        p,
                        sol,
                        &shocks,
                        draws,
                        self.cfg.tau,
                    )?;
                    ll += c.max(self.cfg.floor).ln();
                }
                Ok(ll)
            })
            .collect()
    }

    pub fn loglik(&self, p: &ModelParameters) -> Result<f64> {
        Ok(self.person_logliks(p)?.iter().sum())
    }
}

/// Sum of floored log contributions over all person-periods.
pub fn log_likelihood(panel: &Panel, p: &ModelParameters, cfg: &LikelihoodConfig) -> Result<f64> {
    if panel.is_empty() {
        return Ok(0.0);
    }
    LikelihoodProblem::new(panel, p, cfg)?.loglik(p)
}
