//! Likelihood and estimator checks against independent computations.

mod common;

use common::desk;
use ekw_core::likelihood::{self, observation_contribution, observation_draws, EstimationConfig, LikelihoodConfig};
use ekw_core::model::{ModelParameters, ParamPath, ShockDraw};
use ekw_core::optimize::{BfgsOptions, NelderMeadOptions};
use ekw_core::panel::Panel;
use ekw_core::simulate;
use ekw_core::solver::{self, solve};

fn panel(p: &ModelParameters, persons: usize, emax_seed: u64, sim_seed: u64) -> Panel {
    let sol = solve(p, 200, emax_seed).unwrap();
    simulate::simulate_panel(p, &sol, persons, sim_seed).unwrap()
}

fn lik(seed: u64) -> LikelihoodConfig {
    LikelihoodConfig { n_sim: 100, emax_draws: 200, ..LikelihoodConfig::new(seed, 11) }
}

fn paths(names: &[&str]) -> Vec<ParamPath> {
    names.iter().map(|n| n.parse().unwrap()).collect()
}

#[test]
fn small_tau_matches_the_frequency_simulator() {
    let p = desk(4);
    let sol = solve(&p, 100, 2).unwrap();
    let data = panel(&p, 60, 2, 3);
    let n_sim = 40;
    let mut checked = 0;
    for obs in data.rows().iter().filter(|o| o.wage.is_none()) {
        let kernel = observation_contribution(obs, &p, &sol, n_sim, 1e-9, 17).unwrap();
        let z = observation_draws(17, obs.person_id, obs.t(), n_sim / 2);
        let mut hits = 0;
        for zi in &z {
            for sign in [1.0, -1.0] {
                let zs = zi.map(|v| sign * v);
                let eps = ShockDraw::from_standard(&p.shock_chol, &zs);
                let v = solver::choice_values(&obs.state, &eps, &sol, &p).unwrap();
                hits += usize::from(solver::argmax_lowest(&v) == obs.choice);
            }
        }
        let freq = hits as f64 / n_sim as f64;
        assert!((kernel - freq).abs() < 1e-6, "{kernel} vs {freq} at {obs:?}");
        checked += 1;
    }
    assert!(checked > 50);
}

#[test]
fn fixed_parameters_stay_at_their_start_and_fit_improves() {
    let truth = desk(4);
    let data = panel(&truth, 300, 5, 6);
    let mut start = truth.clone();
    start.beta_tc1 *= 1.3;
    start.delta = 0.9;
    let cfg = EstimationConfig {
        nelder_mead: NelderMeadOptions { max_evals: 40, ..Default::default() },
        bfgs: BfgsOptions { max_iter: 5, ..Default::default() },
        ..EstimationConfig::new(paths(&["beta_tc1", "delta"]), lik(7))
    };
    let est = likelihood::estimate(&data, &start, &cfg).unwrap();
    assert!(est.loglik >= est.start_loglik);
    let mut reset = est.parameters.clone();
    reset.beta_tc1 = start.beta_tc1;
    reset.delta = start.delta;
    assert_eq!(reset, start);
    assert_eq!(est.std_errors.len(), 2);
    assert!(est.std_errors.iter().all(|s| s.is_finite() && *s > 0.0));
}

#[test]
fn discount_factor_estimate_sits_at_the_profile_peak() {
    let truth = desk(5);
    let data = panel(&truth, 400, 8, 9);
    let cfg = lik(10);
    let problem = likelihood::LikelihoodProblem::new(&data, &truth, &cfg).unwrap();
    let grid: Vec<f64> = (0..=24).map(|i| 0.5 + 0.02 * i as f64).collect();
    let profile: Vec<f64> = grid
        .iter()
        .map(|&d| {
            let mut q = truth.clone();
            q.delta = d;
            problem.loglik(&q).unwrap()
        })
        .collect();
    let best = (0..grid.len()).max_by(|&a, &b| profile[a].total_cmp(&profile[b])).unwrap();
    let (lo, hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(grid.len() - 1)]);
    // moving away from the truth by 0.1 costs likelihood
    let at = |d: f64| profile[grid.iter().position(|g| (g - d).abs() < 1e-9).unwrap()];
    assert!(at(0.94) < profile[best] && at(0.74) < profile[best]);

    let est = likelihood::estimate(&data, &truth, &EstimationConfig::new(paths(&["delta"]), cfg)).unwrap();
    let d = est.theta_hat[0];
    assert!(d >= lo && d <= hi, "delta {d} outside [{lo}, {hi}], grid peak {}", grid[best]);
    assert!(est.loglik >= profile[best] - 1e-6 * profile[best].abs());
}

#[test]
fn standard_errors_track_sampling_spread() {
    let truth = desk(4);
    let free = paths(&["beta_tc1", "wage.white.return_schooling"]);
    let reps = 30;
    let mut hats = Vec::new();
    let mut vars = Vec::new();
    for r in 0..reps {
        let data = panel(&truth, 300, 20 + r, 100 + r);
        let cfg = EstimationConfig {
            nelder_mead: NelderMeadOptions { max_evals: 60, ..Default::default() },
            ..EstimationConfig::new(free.clone(), lik(200 + r))
        };
        let est = likelihood::estimate(&data, &truth, &cfg).unwrap();
        hats.push(est.theta_hat.clone());
        vars.push(est.std_errors.iter().map(|s| s * s).collect::<Vec<_>>());
    }
    for k in 0..free.len() {
        let mean = hats.iter().map(|h| h[k]).sum::<f64>() / reps as f64;
        let empirical = hats.iter().map(|h| (h[k] - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        let reported = vars.iter().map(|v| v[k]).sum::<f64>() / reps as f64;
        let ratio = empirical / reported;
        assert!((0.5..=2.0).contains(&ratio), "{}: empirical {empirical} vs reported {reported}", free[k]);
    }
}
