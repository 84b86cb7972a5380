//! The structural model: alternatives, parameters, immediate utilities and the
//! deterministic laws of motion.
//!
//! Working alternatives (blue collar, white collar, military) pay a log-linear
//! wage `exp(e + r_s h + r_k k_a + r_kk k_a^2 + sum_b c_b k_b + eps_a)` on top of
//! a non-pecuniary constant that is reduced by a switching cost when the
//! previous choice differs. School carries tuition, re-enrollment and
//! age-trend terms. Money is in 1987 dollars per year.

mod params;
mod paths;
mod state;

pub use params::{
    Horizon, InitialSchooling, ModelParameters, NonPecuniary, SchoolingRules, WageCoefficients,
    WageEquations,
};
pub use paths::ParamPath;
pub use state::{enumerate_states, StatePoint, StateSpace, DEFAULT_STATE_CAP, NO_SUCCESSOR};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_ALTERNATIVES: usize = 5;
pub const NUM_WORKING: usize = 3;
pub const HIGH_SCHOOL_YEARS: u32 = 12;
pub const COLLEGE_YEARS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    #[serde(alias = "blue_collar")]
    Blue = 1,
    #[serde(alias = "white_collar")]
    White = 2,
    Military = 3,
    School = 4,
    Home = 5,
}

impl Alternative {
    pub const ALL: [Alternative; NUM_ALTERNATIVES] = [
        Alternative::Blue,
        Alternative::White,
        Alternative::Military,
        Alternative::School,
        Alternative::Home,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Zero-based position, used to index per-alternative arrays.
    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1..=5 => Some(Self::ALL[code as usize - 1]),
            _ => None,
        }
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn is_working(self) -> bool {
        self.index() < NUM_WORKING
    }

    pub fn name(self) -> &'static str {
        match self {
            Alternative::Blue => "blue",
            Alternative::White => "white",
            Alternative::Military => "military",
            Alternative::School => "school",
            Alternative::Home => "home",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name).or(match name {
            "blue_collar" => Some(Alternative::Blue),
            "white_collar" => Some(Alternative::White),
            _ => None,
        })
    }
}

impl std::fmt::Display for Alternative {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Realised shock vector: log units for working alternatives, dollars for
/// school and home.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockDraw {
    pub eps: [f64; NUM_ALTERNATIVES],
}

impl ShockDraw {
    pub const ZERO: ShockDraw = ShockDraw { eps: [0.0; NUM_ALTERNATIVES] };

    pub fn new(eps: [f64; NUM_ALTERNATIVES]) -> Self {
        Self { eps }
    }

    /// `L z` for a lower-triangular factor `L`.
    pub fn from_standard(chol: &[[f64; NUM_ALTERNATIVES]; NUM_ALTERNATIVES], z: &[f64; NUM_ALTERNATIVES]) -> Self {
        Self { eps: lower_mul(chol, z) }
    }

    pub fn is_finite(&self) -> bool {
        self.eps.iter().all(|e| e.is_finite())
    }
}

#[inline]
pub(crate) fn lower_mul(
    chol: &[[f64; NUM_ALTERNATIVES]; NUM_ALTERNATIVES],
    z: &[f64; NUM_ALTERNATIVES],
) -> [f64; NUM_ALTERNATIVES] {
    let mut out = [0.0; NUM_ALTERNATIVES];
    for i in 0..NUM_ALTERNATIVES {
        let mut acc = 0.0;
        for j in 0..=i {
            acc += chol[i][j] * z[j];
        }
        out[i] = acc;
    }
    out
}

/// Shock-free parts of the immediate utilities at a state.
///
/// For working alternative `a` the utility is `nonwage[a] + exp(log_wage[a] + eps[a])`;
/// for school and home it is `nonwage[a] + eps[a]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityComponents {
    pub nonwage: [f64; NUM_ALTERNATIVES],
    pub log_wage: [f64; NUM_WORKING],
}

impl UtilityComponents {
    pub fn utility(&self, a: usize, eps: f64) -> f64 {
        if a < NUM_WORKING {
            self.nonwage[a] + (self.log_wage[a] + eps).exp()
        } else {
            self.nonwage[a] + eps
        }
    }
}

pub fn utility_components(s: &StatePoint, p: &ModelParameters) -> UtilityComponents {
    let ty = s.type_id as usize - 1;
    let endow = &p.endowments[ty];
    let h = s.h as f64;
    let lag = s.lagged_choice;
    let mut nonwage = [0.0; NUM_ALTERNATIVES];
    let mut log_wage = [0.0; NUM_WORKING];

    for a in 0..NUM_WORKING {
        let coef = p.wage.get(a);
        let own = s.k[a] as f64;
        let mut lw = endow[a] + coef.return_schooling * h + coef.return_own_exp * own
            + coef.return_own_exp_sq * own * own;
        for (slot, other) in WageCoefficients::cross_order(a).into_iter().enumerate() {
            lw += coef.cross_exp[slot] * s.k[other] as f64;
        }
        log_wage[a] = lw;
        let switching = if lag.index() != a { p.nonpec.switch_cost[a] } else { 0.0 };
        nonwage[a] = p.nonpec.constant[a] - switching;
    }

    let school = Alternative::School.index();
    let in_school = lag == Alternative::School;
    let mut u4 = endow[school] + p.nonpec.constant[school];
    if s.h >= HIGH_SCHOOL_YEARS {
        u4 -= p.beta_tc1;
    }
    if s.h >= COLLEGE_YEARS {
        u4 -= p.beta_tc2;
    }
    u4 += p.gamma_44 * s.t as f64;
    if s.t < 18 {
        u4 += p.gamma_45;
    }
    if !in_school {
        u4 -= if s.h < HIGH_SCHOOL_YEARS { p.beta_rc1 } else { p.beta_rc2 };
    }
    nonwage[school] = u4;

    let home = Alternative::Home.index();
    nonwage[home] = endow[home] + p.nonpec.constant[home];

    UtilityComponents { nonwage, log_wage }
}

/// Utilities in dollars and wages (working alternatives only).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImmediateUtilities {
    pub utility: [f64; NUM_ALTERNATIVES],
    pub wage: [Option<f64>; NUM_ALTERNATIVES],
}

pub fn immediate_utilities(s: &StatePoint, eps: &ShockDraw, p: &ModelParameters) -> ImmediateUtilities {
    let c = utility_components(s, p);
    let mut utility = [0.0; NUM_ALTERNATIVES];
    let mut wage = [None; NUM_ALTERNATIVES];
    for a in 0..NUM_ALTERNATIVES {
        if a < NUM_WORKING {
            let w = (c.log_wage[a] + eps.eps[a]).exp();
            wage[a] = Some(w);
            utility[a] = c.nonwage[a] + w;
        } else {
            utility[a] = c.nonwage[a] + eps.eps[a];
        }
    }
    ImmediateUtilities { utility, wage }
}

/// Law of motion without the horizon check.
pub(crate) fn advance(s: &StatePoint, a: Alternative, h_max: u32) -> StatePoint {
    let mut next = *s;
    next.t += 1;
    if a == Alternative::School && next.h < h_max {
        next.h += 1;
    }
    if a.is_working() {
        next.k[a.index()] += 1;
    }
    next.lagged_choice = a;
    next
}

pub fn transition(s: &StatePoint, a: Alternative, p: &ModelParameters) -> Result<StatePoint> {
    if s.t >= p.horizon.t_max {
        return Err(Error::HorizonExceeded { t: s.t, t_max: p.horizon.t_max });
    }
    Ok(advance(s, a, p.schooling.h_max))
}

/// Completed schooling after the choice made in the last period.
pub fn completed_schooling(s: &StatePoint, choice: Alternative, h_max: u32) -> u32 {
    if choice == Alternative::School && s.h < h_max {
        s.h + 1
    } else {
        s.h
    }
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Zero-coefficient model: every utility term vanishes unless a test sets it.
    pub fn blank_parameters(t_min: u32, t_max: u32) -> ModelParameters {
        ModelParameters {
            delta: 0.0,
            beta_tc1: 0.0,
            beta_tc2: 0.0,
            beta_rc1: 0.0,
            beta_rc2: 0.0,
            gamma_44: 0.0,
            gamma_45: 0.0,
            type_shares: vec![1.0],
            endowments: vec![[0.0; NUM_ALTERNATIVES]],
            shock_chol: identity_chol(),
            horizon: Horizon { t_min, t_max },
            schooling: SchoolingRules::default(),
            initial_schooling: vec![InitialSchooling { years: 10, probability: 1.0 }],
            wage: WageEquations::default(),
            nonpec: NonPecuniary::default(),
        }
    }

    pub fn identity_chol() -> [[f64; NUM_ALTERNATIVES]; NUM_ALTERNATIVES] {
        let mut m = [[0.0; NUM_ALTERNATIVES]; NUM_ALTERNATIVES];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        m
    }

    pub fn state(t: u32, h: u32, k: [u32; 3], lag: Alternative) -> StatePoint {
        StatePoint { t, h, k, lagged_choice: lag, type_id: 1 }
    }
}
