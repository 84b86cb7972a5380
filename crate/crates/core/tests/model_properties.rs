//! Properties of the solver and the simulator on random calibrations.

mod common;

use common::desk;
use ekw_core::model::{utility_components, Alternative, ModelParameters};
use ekw_core::simulate::{self, PolicyTransform};
use ekw_core::solver::{self, solve};
use proptest::prelude::*;

fn calibration(periods: u32, tc1: f64, school: f64, delta: f64, rs_white: f64) -> ModelParameters {
    let mut p = desk(periods);
    p.beta_tc1 = tc1;
    p.endowments[0][3] = school;
    p.delta = delta;
    p.wage.white.return_schooling = rs_white;
    p.validate().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tuition_cut_raises_emax_everywhere(
        tc1 in 0.0f64..8000.0, cut in 1.0f64..4000.0, school in 0.0f64..20000.0,
        delta in 0.5f64..0.97, rs in 0.0f64..0.12, seed in 0u64..100,
    ) {
        let p = calibration(4, tc1, school, delta, rs);
        let mut q = p.clone();
        q.beta_tc1 -= cut;
        let a = solve(&p, 40, seed).unwrap();
        let b = solver::solve_in(a.space().clone(), &q, 40, seed).unwrap();
        for i in 0..a.space().len() {
            if a.space().state(i).h < p.schooling.h_max {
                prop_assert!(b.emax_at(i) >= a.emax_at(i), "state {i}");
            }
        }
    }

    #[test]
    fn continuation_only_adds_value_when_utilities_are_positive(delta in 0.05f64..0.97, seed in 0u64..100) {
        // No switching costs or negative constants: every working value is a positive wage,
        // so each period's maximum and hence every continuation value is positive.
        let mut p = desk(4);
        p.nonpec.switch_cost = [0.0; 3];
        p.nonpec.constant = [0.0; 5];
        p.beta_tc1 = 0.0;
        p.beta_tc2 = 0.0;
        p.beta_rc1 = 0.0;
        p.beta_rc2 = 0.0;
        p.delta = delta;
        let p = p.validate().unwrap();
        let mut myopic = p.clone();
        myopic.delta = 0.0;
        let with = solve(&p, 30, seed).unwrap();
        let without = solver::solve_in(with.space().clone(), &myopic, 30, seed).unwrap();
        for i in 0..with.space().len() {
            prop_assert!(with.emax_at(i) >= without.emax_at(i));
            prop_assert!(without.emax_at(i) > 0.0);
        }
    }

    #[test]
    fn reported_wages_match_state_and_shock(seed in 0u64..1000) {
        let p = desk(5);
        let sol = solve(&p, 30, 3).unwrap();
        let sim = simulate::simulate_detailed(&p, &sol, 40, seed, None).unwrap();
        for (o, e) in sim.panel.rows().iter().zip(&sim.shocks) {
            match o.wage {
                Some(w) => {
                    let a = o.choice.index();
                    let expect = (utility_components(&o.state, &p).log_wage[a] + e.eps[a]).exp();
                    prop_assert!((w - expect).abs() <= 1e-9 * expect);
                }
                None => prop_assert!(!o.choice.is_working()),
            }
        }
    }
}

#[test]
fn emax_seed_noise_shrinks_with_draws() {
    let p = desk(3);
    // Draws are common across states within a period, so per-state errors are
    // correlated; average the gap over several seed pairs.
    let gap = |n: usize| {
        (0..32u64)
            .map(|s| {
                let a = solve(&p, n, 2 * s).unwrap();
                let b = solver::solve_in(a.space().clone(), &p, n, 2 * s + 1).unwrap();
                let k = a.space().len() as f64;
                a.emax_values().iter().zip(b.emax_values()).map(|(x, y)| (x - y).abs()).sum::<f64>() / k
            })
            .sum::<f64>()
            / 32.0
    };
    let (coarse, fine) = (gap(100), gap(1600));
    // 16x the draws should shrink the gap about 4x
    assert!(fine < coarse / 2.0, "{coarse} vs {fine}");
    assert!(fine > coarse / 8.0, "{coarse} vs {fine}");
    let again = solve(&p, 100, 1).unwrap();
    assert_eq!(again.emax_values(), solve(&p, 100, 1).unwrap().emax_values());
}

#[test]
fn simulated_states_follow_the_laws_of_motion() {
    let p = desk(6);
    let sol = solve(&p, 50, 4).unwrap();
    let panel = simulate::simulate_panel(&p, &sol, 100, 5).unwrap();
    for r in panel.person_ranges().iter().cloned() {
        let rows = &panel.rows()[r];
        for w in rows.windows(2) {
            let next = ekw_core::model::transition(&w[0].state, w[0].choice, &p).unwrap();
            assert_eq!(next, w[1].state);
        }
    }
}

#[test]
fn desk_subsidy_effect_is_positive() {
    let p = desk(10);
    let e = simulate::policy_effect(&p, &PolicyTransform::tuition_subsidy("s", 2000.0), 2000, 200, 8).unwrap();
    assert!(e.delta_mean_schooling > 0.05, "{e:?}");
    assert!(e.delta_college_grad >= 0.0);
    let _ = Alternative::School;
}
