use std::collections::{BTreeSet, HashMap};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{advance, Alternative, ModelParameters, NUM_ALTERNATIVES};
use crate::error::{Error, Result};

pub const DEFAULT_STATE_CAP: usize = 2_000_000;
pub const NO_SUCCESSOR: u32 = u32::MAX;

/// Observable state. Field order defines the canonical ordering: period first,
/// then schooling, experience, lagged choice and type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StatePoint {
    pub t: u32,
    pub h: u32,
    pub k: [u32; 3],
    pub lagged_choice: Alternative,
    /// One-based endowment type.
    pub type_id: u32,
}

impl StatePoint {
    pub fn experience_total(&self) -> u32 {
        self.k.iter().sum()
    }

    /// Accumulated schooling plus experience never exceeds elapsed periods.
    pub fn within_time_budget(&self, h_initial: u32, t_min: u32) -> bool {
        self.h >= h_initial
            && self.t >= t_min
            && self.h - h_initial + self.experience_total() <= self.t - t_min
    }
}

/// States reachable from the initial conditions, grouped by period, with a
/// precomputed successor table.
#[derive(Debug, Clone)]
pub struct StateSpace {
    states: Vec<StatePoint>,
    periods: Vec<Range<usize>>,
    successors: Vec<[u32; NUM_ALTERNATIVES]>,
    index: HashMap<StatePoint, u32>,
    t_min: u32,
    t_max: u32,
    h_max: u32,
    entry_lag: Alternative,
    num_types: usize,
    initial_years: Vec<u32>,
}

impl StateSpace {
    pub fn build(p: &ModelParameters, cap: usize) -> Result<Self> {
        let t_min = p.horizon.t_min;
        let t_max = p.horizon.t_max;
        let h_max = p.schooling.h_max;
        let entry_lag = p.schooling.entry_lag;
        let initial_years: Vec<u32> = p.initial_schooling.iter().map(|s| s.years).collect::<BTreeSet<_>>().into_iter().collect();

        let mut layer: BTreeSet<StatePoint> = BTreeSet::new();
        for type_id in 1..=p.num_types() as u32 {
            for &h in &initial_years {
                layer.insert(StatePoint { t: t_min, h, k: [0; 3], lagged_choice: entry_lag, type_id });
            }
        }

        let mut states = Vec::new();
        let mut periods = Vec::new();
        for t in t_min..=t_max {
            let start = states.len();
            if start + layer.len() > cap {
                return Err(Error::StateSpaceTooLarge { cap });
            }
            states.extend(layer.iter().copied());
            periods.push(start..states.len());
            if t == t_max {
                break;
            }
            let mut next = BTreeSet::new();
            for s in &layer {
                for a in Alternative::ALL {
                    next.insert(advance(s, a, h_max));
                }
            }
            layer = next;
        }

        let index: HashMap<StatePoint, u32> =
            states.iter().enumerate().map(|(i, s)| (*s, i as u32)).collect();
        let successors = states
            .iter()
            .map(|s| {
                let mut row = [NO_SUCCESSOR; NUM_ALTERNATIVES];
                if s.t < t_max {
                    for a in Alternative::ALL {
                        row[a.index()] = index[&advance(s, a, h_max)];
                    }
                }
                row
            })
            .collect();

        Ok(Self {
            states,
            periods,
            successors,
            index,
            t_min,
            t_max,
            h_max,
            entry_lag,
            num_types: p.num_types(),
            initial_years,
        })
    }

    /// Whether a solution over this space is valid for `p` (same horizon,
    /// schooling rules, types and initial schooling support).
    pub fn matches(&self, p: &ModelParameters) -> bool {
        let years: Vec<u32> = p.initial_schooling.iter().map(|s| s.years).collect::<BTreeSet<_>>().into_iter().collect();
        self.t_min == p.horizon.t_min
            && self.t_max == p.horizon.t_max
            && self.h_max == p.schooling.h_max
            && self.entry_lag == p.schooling.entry_lag
            && self.num_types == p.num_types()
            && self.initial_years == years
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[StatePoint] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &StatePoint {
        &self.states[i]
    }

    /// Index range of the states of period `t`.
    pub fn period(&self, t: u32) -> Range<usize> {
        self.periods[(t - self.t_min) as usize].clone()
    }

    pub fn t_min(&self) -> u32 {
        self.t_min
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    pub fn h_max(&self) -> u32 {
        self.h_max
    }

    pub fn initial_years(&self) -> &[u32] {
        &self.initial_years
    }

    pub fn index_of(&self, s: &StatePoint) -> Option<usize> {
        self.index.get(s).map(|&i| i as usize)
    }

    /// Successor indices by alternative; `NO_SUCCESSOR` in the last period.
    pub fn successors(&self, i: usize) -> &[u32; NUM_ALTERNATIVES] {
        &self.successors[i]
    }

    /// Time-budget check against the initial schooling support.
    pub fn satisfies_budget(&self, s: &StatePoint) -> bool {
        self.initial_years.iter().any(|&h0| s.within_time_budget(h0, self.t_min))
    }
}

/// The reachable states, duplicate-free and in canonical order.
pub fn enumerate_states(p: &ModelParameters, cap: usize) -> Result<Vec<StatePoint>> {
    Ok(StateSpace::build(p, cap)?.states)
}
