//! Synthetic panels, descriptive summaries and counterfactual policy effects.
//!
//! Person `i` draws its type, initial schooling and every period shock from
//! the stream `(seed, i)`, so a baseline and a counterfactual simulated with
//! the same seed face identical draws.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    completed_schooling, immediate_utilities, Alternative, ModelParameters, ParamPath, ShockDraw,
    StatePoint, StateSpace, COLLEGE_YEARS, DEFAULT_STATE_CAP, HIGH_SCHOOL_YEARS, NO_SUCCESSOR,
    NUM_ALTERNATIVES, NUM_WORKING,
};
use crate::panel::{Observation, Panel};
use crate::rng::{self, Domain};
use crate::solver::{argmax_lowest, choice_values_at, solve_in, Solution};

/// Wage cells with fewer observations are flagged as suppressed.
pub const MIN_WAGE_CELL: usize = 10;

fn check_target(p: &ModelParameters, target_type: Option<u32>) -> Result<()> {
    match target_type {
        Some(j) if j == 0 || j as usize > p.num_types() => Err(Error::InvalidParameter {
            field: "target_type".into(),
            reason: format!("type {j} outside 1..={}", p.num_types()),
        }),
        _ => Ok(()),
    }
}

fn check_solution(p: &ModelParameters, sol: &Solution) -> Result<()> {
    if sol.space().matches(p) {
        Ok(())
    } else {
        Err(Error::Config("solution was computed for different model dimensions".into()))
    }
}

/// Draws the entry state of one person; the rng then continues with shocks.
fn entry(p: &ModelParameters, sol: &Solution, person_id: u32, seed: u64, target_type: Option<u32>) -> (ChaCha8Rng, usize) {
    let mut rng = rng::stream(seed, Domain::Simulation, person_id as u64, 0);
    let drawn = rng::categorical(&mut rng, &p.type_shares) as u32 + 1;
    let probs: Vec<f64> = p.initial_schooling.iter().map(|s| s.probability).collect();
    let h = p.initial_schooling[rng::categorical(&mut rng, &probs)].years;
    let root = StatePoint {
        t: p.horizon.t_min,
        h,
        k: [0; 3],
        lagged_choice: p.schooling.entry_lag,
        type_id: target_type.unwrap_or(drawn),
    };
    let idx = sol.space().index_of(&root).expect("entry states are enumerated");
    (rng, idx)
}

fn draw_shock(rng: &mut ChaCha8Rng, p: &ModelParameters) -> ShockDraw {
    let mut z = [0.0; NUM_ALTERNATIVES];
    for v in z.iter_mut() {
        *v = rng::standard_normal(rng);
    }
    ShockDraw::from_standard(&p.shock_chol, &z)
}

/// Walks one life cycle, calling `visit(state index, choice, shock)` each period.
fn walk_person(
    p: &ModelParameters,
    sol: &Solution,
    person_id: u32,
    seed: u64,
    target_type: Option<u32>,
    mut visit: impl FnMut(usize, Alternative, &ShockDraw),
) {
    let (mut rng, mut idx) = entry(p, sol, person_id, seed, target_type);
    loop {
        let eps = draw_shock(&mut rng, p);
        let choice = argmax_lowest(&choice_values_at(sol, idx, &eps, p));
        visit(idx, choice, &eps);
        let next = sol.space().successors(idx)[choice.index()];
        if next == NO_SUCCESSOR {
            break;
        }
        idx = next as usize;
    }
}

/// Panel rows together with the shock realized at each row.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: Panel,
    pub shocks: Vec<ShockDraw>,
}

pub fn simulate_panel(p: &ModelParameters, sol: &Solution, n_persons: usize, seed: u64) -> Result<Panel> {
    Ok(simulate_detailed(p, sol, n_persons, seed, None)?.panel)
}

pub fn simulate_detailed(
    p: &ModelParameters,
    sol: &Solution,
    n_persons: usize,
    seed: u64,
    target_type: Option<u32>,
) -> Result<SimulatedPanel> {
    check_solution(p, sol)?;
    check_target(p, target_type)?;
    let people: Vec<Vec<(Observation, ShockDraw)>> = (1..=n_persons as u32)
        .into_par_iter()
        .map(|person_id| {
            let mut rows = Vec::with_capacity(p.horizon.periods() as usize);
            walk_person(p, sol, person_id, seed, target_type, |idx, choice, eps| {
                let state = *sol.space().state(idx);
                let wage = immediate_utilities(&state, eps, p).wage[choice.index()];
                rows.push((Observation { person_id, state, choice, wage }, *eps));
            });
            rows
        })
        .collect();
    let (rows, shocks): (Vec<_>, Vec<_>) = people.into_iter().flatten().unzip();
    Ok(SimulatedPanel { panel: Panel::from_rows(rows, p.schooling.h_max)?, shocks })
}

/// `(type_id, completed schooling)` per simulated person, in id order.
pub fn final_schooling(
    p: &ModelParameters,
    sol: &Solution,
    n_persons: usize,
    seed: u64,
    target_type: Option<u32>,
) -> Result<Vec<(u32, u32)>> {
    check_solution(p, sol)?;
    check_target(p, target_type)?;
    let h_max = p.schooling.h_max;
    Ok((1..=n_persons as u32)
        .into_par_iter()
        .map(|person_id| {
            let mut last = (0, Alternative::Home);
            walk_person(p, sol, person_id, seed, target_type, |idx, choice, _| last = (idx, choice));
            let s = sol.space().state(last.0);
            (s.type_id, completed_schooling(s, last.1, h_max))
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeSummary {
    pub t: u32,
    pub persons: usize,
    pub counts: [usize; NUM_ALTERNATIVES],
    pub shares: [f64; NUM_ALTERNATIVES],
    pub wage_obs: [usize; NUM_WORKING],
    pub mean_wage: [Option<f64>; NUM_WORKING],
    /// Fewer than `MIN_WAGE_CELL` observed wages in the cell.
    pub suppressed: [bool; NUM_WORKING],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub ages: Vec<AgeSummary>,
}

pub fn summarize(panel: &Panel) -> Result<PanelSummary> {
    if panel.is_empty() {
        return Err(Error::EmptyPanel);
    }
    // choice counts, wage counts and wage sums per age
    type Cell = ([usize; NUM_ALTERNATIVES], [usize; NUM_WORKING], [f64; NUM_WORKING]);
    let mut cells: BTreeMap<u32, Cell> = BTreeMap::new();
    for o in panel.rows() {
        let cell = cells.entry(o.t()).or_default();
        cell.0[o.choice.index()] += 1;
        if let Some(w) = o.wage {
            cell.1[o.choice.index()] += 1;
            cell.2[o.choice.index()] += w;
        }
    }
    let ages = cells
        .into_iter()
        .map(|(t, (counts, wage_obs, wage_sum))| {
            let persons: usize = counts.iter().sum();
            AgeSummary {
                t,
                persons,
                counts,
                shares: counts.map(|c| c as f64 / persons as f64),
                wage_obs,
                mean_wage: std::array::from_fn(|a| (wage_obs[a] > 0).then(|| wage_sum[a] / wage_obs[a] as f64)),
                suppressed: wage_obs.map(|n| n < MIN_WAGE_CELL),
            }
        })
        .collect();
    Ok(PanelSummary { ages })
}

pub const SUMMARY_HEADER: &str = "period,persons,share_blue,share_white,share_military,share_school,share_home,\
wage_blue,wage_white,wage_military,n_wage_blue,n_wage_white,n_wage_military,\
suppressed_blue,suppressed_white,suppressed_military";

pub fn write_summary_csv<W: Write>(summary: &PanelSummary, mut out: W) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for a in &summary.ages {
        let shares: Vec<String> = a.shares.iter().map(|s| s.to_string()).collect();
        let wages: Vec<String> = a.mean_wage.iter().map(|w| w.map(|w| w.to_string()).unwrap_or_default()).collect();
        let n: Vec<String> = a.wage_obs.iter().map(|n| n.to_string()).collect();
        let sup: Vec<String> = a.suppressed.iter().map(|s| s.to_string()).collect();
        writeln!(out, "{},{},{},{},{},{}", a.t, a.persons, shares.join(","), wages.join(","), n.join(","), sup.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEdit {
    pub path: ParamPath,
    /// Added to the parameter in its native units.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyTransform {
    pub name: String,
    #[serde(default)]
    pub edits: Vec<PolicyEdit>,
    /// Restrict the simulated population to one type.
    #[serde(default)]
    pub target_type: Option<u32>,
}

impl PolicyTransform {
    pub fn identity(name: &str) -> Self {
        Self { name: name.into(), edits: Vec::new(), target_type: None }
    }

    /// Lowers the post-high-school tuition cost by `amount` dollars.
    pub fn tuition_subsidy(name: &str, amount: f64) -> Self {
        Self {
            name: name.into(),
            edits: vec![PolicyEdit { path: ParamPath::BetaTc1, delta: -amount }],
            target_type: None,
        }
    }

    pub fn apply(&self, p: &ModelParameters) -> Result<ModelParameters> {
        let mut q = p.clone();
        for e in &self.edits {
            e.path.shift(&mut q, e.delta)?;
        }
        q.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchoolingEffect {
    pub persons: usize,
    pub delta_mean_schooling: f64,
    pub delta_hs_grad: f64,
    pub delta_college_grad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEffect {
    pub delta_mean_schooling: f64,
    pub delta_hs_grad: f64,
    pub delta_college_grad: f64,
    /// Indexed by type (position `j` holds type `j + 1`); absent for targeted policies.
    pub by_type: Option<Vec<SchoolingEffect>>,
}

fn effect_over<'a>(pairs: impl Iterator<Item = (&'a (u32, u32), &'a (u32, u32))>) -> SchoolingEffect {
    let (mut n, mut dh, mut dhs, mut dcol) = (0usize, 0i64, 0i64, 0i64);
    let ind = |h: u32, cut: u32| (h >= cut) as i64;
    for (b, c) in pairs {
        n += 1;
        dh += c.1 as i64 - b.1 as i64;
        dhs += ind(c.1, HIGH_SCHOOL_YEARS) - ind(b.1, HIGH_SCHOOL_YEARS);
        dcol += ind(c.1, COLLEGE_YEARS) - ind(b.1, COLLEGE_YEARS);
    }
    let d = n.max(1) as f64;
    SchoolingEffect {
        persons: n,
        delta_mean_schooling: dh as f64 / d,
        delta_hs_grad: dhs as f64 / d,
        delta_college_grad: dcol as f64 / d,
    }
}

/// Compares paired outcomes from simulations that share their draws.
pub fn compare_outcomes(base: &[(u32, u32)], cf: &[(u32, u32)], num_types: usize, with_types: bool) -> PolicyEffect {
    debug_assert_eq!(base.len(), cf.len());
    let all = effect_over(base.iter().zip(cf));
    let by_type = with_types.then(|| {
        (1..=num_types as u32)
            .map(|j| effect_over(base.iter().zip(cf).filter(|(b, _)| b.0 == j)))
            .collect()
    });
    PolicyEffect {
        delta_mean_schooling: all.delta_mean_schooling,
        delta_hs_grad: all.delta_hs_grad,
        delta_college_grad: all.delta_college_grad,
        by_type,
    }
}

/// Evaluates policies against a baseline with common seeds, reusing one state
/// space for every solve.
#[derive(Debug, Clone)]
pub struct PolicyEvaluator {
    space: Arc<StateSpace>,
    pub n_persons: usize,
    pub n_draws: usize,
    pub seed: u64,
}

impl PolicyEvaluator {
    pub fn new(p: &ModelParameters, n_persons: usize, n_draws: usize, seed: u64) -> Result<Self> {
        Ok(Self { space: Arc::new(StateSpace::build(p, DEFAULT_STATE_CAP)?), n_persons, n_draws, seed })
    }

    pub fn solve(&self, p: &ModelParameters) -> Result<Solution> {
        solve_in(self.space.clone(), p, self.n_draws, self.seed)
    }

    pub fn effects(&self, p: &ModelParameters, policies: &[PolicyTransform]) -> Result<Vec<PolicyEffect>> {
        let base_sol = self.solve(p)?;
        let mut baselines: BTreeMap<Option<u32>, Vec<(u32, u32)>> = BTreeMap::new();
        let mut out = Vec::with_capacity(policies.len());
        for policy in policies {
            check_target(p, policy.target_type)?;
            if let std::collections::btree_map::Entry::Vacant(slot) = baselines.entry(policy.target_type) {
                slot.insert(final_schooling(p, &base_sol, self.n_persons, self.seed, policy.target_type)?);
            }
            let q = policy.apply(p)?;
            let sol = self.solve(&q)?;
            let cf = final_schooling(&q, &sol, self.n_persons, self.seed, policy.target_type)?;
            out.push(compare_outcomes(&baselines[&policy.target_type], &cf, p.num_types(), policy.target_type.is_none()));
        }
        Ok(out)
    }
}

pub fn policy_effect(
    p: &ModelParameters,
    policy: &PolicyTransform,
    n_persons: usize,
    n_draws: usize,
    seed: u64,
) -> Result<PolicyEffect> {
    let ev = PolicyEvaluator::new(p, n_persons, n_draws, seed)?;
    Ok(ev.effects(p, std::slice::from_ref(policy))?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{transition, utility_components, InitialSchooling};
    use crate::solver::solve;

    fn calibration() -> ModelParameters {
        crate::test_support::desk_model(6)
    }

    #[test]
    fn degenerate_shocks_give_the_dominant_path() {
        let mut p = crate::model::testing::blank_parameters(16, 19);
        for i in 0..5 {
            p.shock_chol[i][i] = 1e-12;
        }
        p.nonpec.constant = [0.0, 0.0, 0.0, 0.0, 50.0];
        let sol = solve(&p, 5, 1).unwrap();
        let panel = simulate_panel(&p, &sol, 1, 3).unwrap();
        assert_eq!(panel.len(), 4);
        assert!(panel.rows().iter().all(|o| o.choice == Alternative::Home && o.wage.is_none()));
    }

    #[test]
    fn panels_are_reproducible_and_consistent() {
        let p = calibration();
        let sol = solve(&p, 50, 4).unwrap();
        let a = simulate_detailed(&p, &sol, 40, 9, None).unwrap();
        let b = simulate_detailed(&p, &sol, 40, 9, None).unwrap();
        assert_eq!(a.panel, b.panel);
        assert_eq!(a.panel.num_persons(), 40);
        for (o, eps) in a.panel.rows().iter().zip(&a.shocks) {
            let c = utility_components(&o.state, &p);
            match o.choice {
                c_ if c_.is_working() => {
                    let w = (c.log_wage[c_.index()] + eps.eps[c_.index()]).exp();
                    assert_eq!(o.wage, Some(w));
                }
                _ => assert_eq!(o.wage, None),
            }
        }
        for i in 0..a.panel.num_persons() {
            for w in a.panel.person(i).windows(2) {
                assert_eq!(transition(&w[0].state, w[0].choice, &p).unwrap(), w[1].state);
            }
        }
    }

    #[test]
    fn summaries_partition_choices() {
        let p = calibration();
        let sol = solve(&p, 50, 4).unwrap();
        let panel = simulate_panel(&p, &sol, 30, 2).unwrap();
        let s = summarize(&panel).unwrap();
        assert_eq!(s.ages.len(), p.horizon.periods() as usize);
        for a in &s.ages {
            assert!((a.shares.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(a.persons, 30);
        }
        assert_eq!(summarize(&Panel::default()), Err(Error::EmptyPanel));
    }

    #[test]
    fn single_school_row_and_wage_suppression() {
        let st = |t| StatePoint { t, h: 10, k: [0; 3], lagged_choice: Alternative::School, type_id: 1 };
        let one = Panel::from_rows(
            vec![Observation { person_id: 1, state: st(16), choice: Alternative::School, wage: None }],
            20,
        )
        .unwrap();
        let s = summarize(&one).unwrap();
        assert_eq!(s.ages[0].shares[3], 1.0);

        let rows = |n: u32| {
            (1..=n)
                .map(|i| Observation { person_id: i, state: st(16), choice: Alternative::Blue, wage: Some(100.0) })
                .collect::<Vec<_>>()
        };
        let nine = summarize(&Panel::from_rows(rows(9), 20).unwrap()).unwrap();
        assert!(nine.ages[0].suppressed[0]);
        let ten = summarize(&Panel::from_rows(rows(10), 20).unwrap()).unwrap();
        assert!(!ten.ages[0].suppressed[0]);
        assert_eq!(ten.ages[0].mean_wage[0], Some(100.0));
    }

    #[test]
    fn identity_policy_has_exactly_zero_effect() {
        let p = calibration();
        let e = policy_effect(&p, &PolicyTransform::identity("none"), 200, 50, 5).unwrap();
        assert_eq!(e.delta_mean_schooling, 0.0);
        assert_eq!(e.delta_hs_grad, 0.0);
        assert_eq!(e.delta_college_grad, 0.0);
        assert!(e.by_type.unwrap().iter().all(|t| t.delta_mean_schooling == 0.0));
    }

    #[test]
    fn subsidy_raises_schooling() {
        let p = calibration();
        let e = policy_effect(&p, &PolicyTransform::tuition_subsidy("subsidy", 2000.0), 300, 100, 5).unwrap();
        assert!(e.delta_mean_schooling >= 0.0, "{e:?}");
    }

    #[test]
    fn targeted_policy_simulates_one_type() {
        let p = calibration();
        let mut policy = PolicyTransform::tuition_subsidy("t2", 2000.0);
        policy.target_type = Some(2);
        let sol = solve(&p, 30, 1).unwrap();
        let out = final_schooling(&p, &sol, 50, 1, Some(2)).unwrap();
        assert!(out.iter().all(|o| o.0 == 2));
        let e = policy_effect(&p, &policy, 50, 30, 1).unwrap();
        assert!(e.by_type.is_none());
        policy.target_type = Some(9);
        assert!(policy_effect(&p, &policy, 50, 30, 1).is_err());
    }

    #[test]
    fn initial_conditions_follow_their_distribution() {
        let mut p = crate::model::testing::blank_parameters(16, 16);
        p.initial_schooling = vec![
            InitialSchooling { years: 9, probability: 0.25 },
            InitialSchooling { years: 10, probability: 0.75 },
        ];
        let sol = solve(&p, 5, 1).unwrap();
        let panel = simulate_panel(&p, &sol, 4000, 11).unwrap();
        let nine = panel.rows().iter().filter(|o| o.state.h == 9).count() as f64 / 4000.0;
        assert!((nine - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / 4000.0).sqrt() + 1e-3);
    }
}
