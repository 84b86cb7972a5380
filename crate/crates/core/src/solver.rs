//! Backward induction with Monte Carlo integration of the expected maximum.
//!
//! Each period uses one matrix of shock draws addressed by `(seed, t)` and
//! shared by every state of that period. Working alternatives are evaluated
//! per draw through the wage exponent; school and home add the shock.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{
    immediate_utilities, lower_mul, utility_components, Alternative, ModelParameters, ShockDraw,
    StatePoint, StateSpace, DEFAULT_STATE_CAP, NO_SUCCESSOR, NUM_ALTERNATIVES, NUM_WORKING,
};
use crate::rng::{self, Domain};

pub const DEFAULT_EMAX_DRAWS: usize = 400;

type Chol = [[f64; NUM_ALTERNATIVES]; NUM_ALTERNATIVES];

/// Shock draws of one period together with the exponentiated working shocks.
#[derive(Debug, Clone)]
pub struct PeriodDraws {
    pub eps: Vec<[f64; NUM_ALTERNATIVES]>,
    pub exp_eps: Vec<[f64; NUM_WORKING]>,
}

impl PeriodDraws {
    /// `n_draws` correlated draws for period `t`. An all-zero factor makes the
    /// shocks degenerate, and a single zero draw then gives exact expectations.
    pub fn generate(chol: &Chol, n_draws: usize, seed: u64, t: u32) -> Self {
        if chol.iter().flatten().all(|&v| v == 0.0) {
            return Self { eps: vec![[0.0; NUM_ALTERNATIVES]], exp_eps: vec![[1.0; NUM_WORKING]] };
        }
        let mut rng = rng::stream(seed, Domain::EmaxDraws, t as u64, 0);
        let mut eps = Vec::with_capacity(n_draws);
        let mut exp_eps = Vec::with_capacity(n_draws);
        for _ in 0..n_draws {
            let mut z = [0.0; NUM_ALTERNATIVES];
            for v in z.iter_mut() {
                *v = rng::standard_normal(&mut rng);
            }
            let e = lower_mul(chol, &z);
            exp_eps.push([e[0].exp(), e[1].exp(), e[2].exp()]);
            eps.push(e);
        }
        Self { eps, exp_eps }
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }
}

/// How the shock of one alternative enters its total value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AltValue {
    /// `value + eps`.
    Additive(f64),
    /// `fixed + level * exp(eps)`, with `level` the shock-free wage.
    Wage { fixed: f64, level: f64 },
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte Carlo mean (and standard error) of `max_a value_a(eps)` over `draws`.
pub fn expected_max_values(values: &[AltValue; NUM_ALTERNATIVES], draws: &PeriodDraws) -> MonteCarloEstimate {
    let n = draws.len();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for d in 0..n {
        let mut best = f64::NEG_INFINITY;
        for (a, v) in values.iter().enumerate() {
            let x = match *v {
                AltValue::Additive(base) => base + draws.eps[d][a],
                AltValue::Wage { fixed, level } => {
                    let e = if a < NUM_WORKING { draws.exp_eps[d][a] } else { draws.eps[d][a].exp() };
                    fixed + level * e
                }
                AltValue::Unavailable => continue,
            };
            if x > best {
                best = x;
            }
        }
        sum += best;
        sum_sq += best * best;
    }
    let mean = sum / n as f64;
    let var = if n > 1 { ((sum_sq - n as f64 * mean * mean) / (n as f64 - 1.0)).max(0.0) } else { 0.0 };
    MonteCarloEstimate { mean, std_error: (var / n as f64).sqrt() }
}

/// `E[max_a (values_a + eps_a)]` with `eps ~ N(0, L L')`. Entries equal to
/// negative infinity mark unavailable alternatives.
pub fn expected_max(values: &[f64; NUM_ALTERNATIVES], shock_chol: &Chol, n_draws: usize, seed: u64) -> f64 {
    expected_max_with_error(values, shock_chol, n_draws, seed).mean
}

pub fn expected_max_with_error(
    values: &[f64; NUM_ALTERNATIVES],
    shock_chol: &Chol,
    n_draws: usize,
    seed: u64,
) -> MonteCarloEstimate {
    assert!(n_draws >= 1, "expected_max needs at least one draw");
    let draws = PeriodDraws::generate(shock_chol, n_draws, seed, 0);
    let alts = values.map(|v| if v == f64::NEG_INFINITY { AltValue::Unavailable } else { AltValue::Additive(v) });
    expected_max_values(&alts, &draws)
}

/// Solved model: expected maximum value at every enumerated state.
#[derive(Debug, Clone)]
pub struct Solution {
    space: Arc<StateSpace>,
    emax: Vec<f64>,
    pub draws_used: usize,
    pub seed: u64,
}

impl Solution {
    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn emax_values(&self) -> &[f64] {
        &self.emax
    }

    pub fn emax(&self, s: &StatePoint) -> Result<f64> {
        self.space.index_of(s).map(|i| self.emax[i]).ok_or(Error::UnknownState(*s))
    }

    pub fn emax_at(&self, idx: usize) -> f64 {
        self.emax[idx]
    }

    /// `delta * emax` of each successor; zero in the last period.
    pub fn continuation(&self, idx: usize, delta: f64) -> [f64; NUM_ALTERNATIVES] {
        let succ = self.space.successors(idx);
        let mut out = [0.0; NUM_ALTERNATIVES];
        for a in 0..NUM_ALTERNATIVES {
            if succ[a] != NO_SUCCESSOR {
                out[a] = delta * self.emax[succ[a] as usize];
            }
        }
        out
    }
}

pub fn solve(p: &ModelParameters, n_draws: usize, seed: u64) -> Result<Solution> {
    let space = Arc::new(StateSpace::build(p, DEFAULT_STATE_CAP)?);
    solve_in(space, p, n_draws, seed)
}

/// Backward induction over a prebuilt state space.
pub fn solve_in(space: Arc<StateSpace>, p: &ModelParameters, n_draws: usize, seed: u64) -> Result<Solution> {
    if !space.matches(p) {
        return Err(Error::Config("state space was built for different model dimensions".into()));
    }
    assert!(n_draws >= 1, "solve needs at least one draw");
    let mut emax = vec![0.0; space.len()];
    for t in (space.t_min()..=space.t_max()).rev() {
        let draws = PeriodDraws::generate(&p.shock_chol, n_draws, seed, t);
        let range = space.period(t);
        let values: Vec<f64> = {
            let emax = &emax;
            let space = &space;
            range
                .clone()
                .into_par_iter()
                .map(|i| state_emax(space, emax, i, p, &draws))
                .collect()
        };
        emax[range].copy_from_slice(&values);
    }
    Ok(Solution { space, emax, draws_used: n_draws, seed })
}

fn state_emax(space: &StateSpace, emax: &[f64], i: usize, p: &ModelParameters, draws: &PeriodDraws) -> f64 {
    let s = space.state(i);
    let c = utility_components(s, p);
    let succ = space.successors(i);
    let mut fixed = c.nonwage;
    for a in 0..NUM_ALTERNATIVES {
        if succ[a] != NO_SUCCESSOR {
            fixed[a] += p.delta * emax[succ[a] as usize];
        }
    }
    let level = [c.log_wage[0].exp(), c.log_wage[1].exp(), c.log_wage[2].exp()];
    let mut sum = 0.0;
    for (e, x) in draws.eps.iter().zip(&draws.exp_eps) {
        let v0 = fixed[0] + level[0] * x[0];
        let v1 = fixed[1] + level[1] * x[1];
        let v2 = fixed[2] + level[2] * x[2];
        let v3 = fixed[3] + e[3];
        let v4 = fixed[4] + e[4];
        sum += v0.max(v1).max(v2).max(v3).max(v4);
    }
    sum / draws.len() as f64
}

/// Total value of each alternative: immediate utility plus discounted continuation.
pub fn choice_values(
    s: &StatePoint,
    eps: &ShockDraw,
    sol: &Solution,
    p: &ModelParameters,
) -> Result<[f64; NUM_ALTERNATIVES]> {
    let idx = sol.space.index_of(s).ok_or(Error::UnknownState(*s))?;
    Ok(choice_values_at(sol, idx, eps, p))
}

/// `choice_values` for the state stored at `idx`.
pub fn choice_values_at(sol: &Solution, idx: usize, eps: &ShockDraw, p: &ModelParameters) -> [f64; NUM_ALTERNATIVES] {
    let u = immediate_utilities(sol.space.state(idx), eps, p).utility;
    let cont = sol.continuation(idx, p.delta);
    std::array::from_fn(|a| u[a] + cont[a])
}

/// Maximizer of total value; ties go to the lowest alternative code.
pub fn argmax_lowest(values: &[f64; NUM_ALTERNATIVES]) -> Alternative {
    let mut best = 0;
    for a in 1..NUM_ALTERNATIVES {
        if values[a] > values[best] {
            best = a;
        }
    }
    Alternative::from_index(best)
}

pub fn optimal_choice(s: &StatePoint, eps: &ShockDraw, sol: &Solution, p: &ModelParameters) -> Result<Alternative> {
    Ok(argmax_lowest(&choice_values(s, eps, sol, p)?))
}

const CACHE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CachedSolution {
    version: u32,
    key: String,
    n_draws: usize,
    seed: u64,
    emax: Vec<f64>,
}

/// Hash of the inputs that determine a solution.
pub fn solution_key(p: &ModelParameters, n_draws: usize, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(p).expect("parameters serialize"));
    h.update(n_draws.to_le_bytes());
    h.update(seed.to_le_bytes());
    hex::encode(h.finalize())
}

/// Directory of solved models keyed by `solution_key`.
#[derive(Debug, Clone)]
pub struct SolutionCache {
    dir: PathBuf,
}

impl SolutionCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Self { dir: dir.as_ref().to_path_buf() })
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("solution-v{CACHE_VERSION}-{key}.json"))
    }

    pub fn load(&self, p: &ModelParameters, n_draws: usize, seed: u64) -> Result<Option<Solution>> {
        let key = solution_key(p, n_draws, seed);
        let path = self.path_for(&key);
        if !path.exists() {
            return Ok(None);
        }
        let cached: CachedSolution = serde_json::from_slice(&std::fs::read(&path)?)?;
        let space = Arc::new(StateSpace::build(p, DEFAULT_STATE_CAP)?);
        if cached.version != CACHE_VERSION || cached.key != key || cached.emax.len() != space.len() {
            return Ok(None);
        }
        Ok(Some(Solution { space, emax: cached.emax, draws_used: n_draws, seed }))
    }

    pub fn store(&self, p: &ModelParameters, sol: &Solution) -> Result<PathBuf> {
        let key = solution_key(p, sol.draws_used, sol.seed);
        let cached = CachedSolution {
            version: CACHE_VERSION,
            key: key.clone(),
            n_draws: sol.draws_used,
            seed: sol.seed,
            emax: sol.emax.clone(),
        };
        let path = self.path_for(&key);
        std::fs::write(&path, serde_json::to_vec(&cached)?)?;
        Ok(path)
    }

    pub fn get_or_solve(&self, p: &ModelParameters, n_draws: usize, seed: u64) -> Result<Solution> {
        if let Some(sol) = self.load(p, n_draws, seed)? {
            return Ok(sol);
        }
        let sol = solve(p, n_draws, seed)?;
        self.store(p, &sol)?;
        Ok(sol)
    }
}
