//! Minimizers: Nelder-Mead for the derivative-free phase and BFGS with an
//! Armijo backtracking line search for refinement.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Euclidean norm of the last gradient (BFGS only).
    pub grad_norm: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    pub initial_step: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evals: 200, f_tol: 1e-3, initial_step: 1.0 }
    }
}

pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> OptimResult {
    let n = x0.len();
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0, &mut evals)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut iterations = 0;
    let mut converged = false;
    while evals < opts.max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if n == 0 || (simplex[n].1 - simplex[0].1).abs() <= opts.f_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64, worst: &[f64]| -> Vec<f64> {
            centroid.iter().zip(worst).map(|(c, w)| c + t * (c - w)).collect()
        };
        let worst = simplex[n].0.clone();
        let xr = along(1.0, &worst);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0, &worst);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(0.5, &worst);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5, &worst);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&vertex.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let v = eval(&x, &mut evals);
                    *vertex = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    OptimResult { x, f, evaluations: evals, iterations, converged, grad_norm: None }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged when the gradient norm falls below this.
    pub grad_tol: f64,
    /// Longest trial step, in coordinate units.
    pub max_step: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 100, grad_tol: 1e-2, max_step: 5.0, max_backtracks: 30 }
    }
}

/// Minimizes `f` from `x0` given its value `f0` there. `gradient` returns the
/// gradient at a point; `h0` is the starting inverse Hessian.
pub fn bfgs(
    mut f: impl FnMut(&[f64]) -> f64,
    mut gradient: impl FnMut(&[f64]) -> Vec<f64>,
    x0: &[f64],
    f0: f64,
    h0: &DMatrix<f64>,
    opts: &BfgsOptions,
) -> OptimResult {
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f0;
    let mut h = h0.clone();
    let mut g = DVector::from_vec(gradient(x.as_slice()));
    let mut evals = 0;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let gn = g.norm();
        if gn < opts.grad_tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let mut d = -(&h * &g);
        if g.dot(&d) >= 0.0 {
            h = DMatrix::identity(n, n);
            d = -g.clone();
        }
        let len = d.norm();
        if len > opts.max_step {
            d *= opts.max_step / len;
        }
        let slope = g.dot(&d);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = &x + alpha * &d;
            evals += 1;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else { break };
        let g_new = DVector::from_vec(gradient(x_new.as_slice()));
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - rho * &s * y.transpose();
            let right = &eye - rho * &y * s.transpose();
            h = &left * &h * &right + rho * &s * s.transpose();
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    OptimResult {
        x: x.as_slice().to_vec(),
        f: fx,
        evaluations: evals,
        iterations,
        converged,
        grad_norm: Some(g.norm()),
    }
}

/// Central-difference gradient with step `h` in every coordinate.
pub fn central_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let dn = f(&xp);
            xp[i] = x[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 0.5 * (x[2] - 0.5).powi(2);
        let opts = NelderMeadOptions { max_evals: 2000, f_tol: 1e-12, initial_step: 1.0 };
        let r = nelder_mead(f, &[0.0, 0.0, 0.0], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-4 && (r.x[1] + 1.0).abs() < 1e-4 && (r.x[2] - 0.5).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_never_increases_best_value() {
        let x0 = [-1.2, 1.0];
        let r = nelder_mead(rosenbrock, &x0, &NelderMeadOptions { max_evals: 50, ..Default::default() });
        assert!(r.f <= rosenbrock(&x0));
        assert!(r.evaluations <= 50 + 2);
    }

    #[test]
    fn bfgs_solves_rosenbrock() {
        let x0 = [-1.2, 1.0];
        let grad = |x: &[f64]| central_gradient(rosenbrock, x, 1e-6);
        let opts = BfgsOptions { max_iter: 500, grad_tol: 1e-6, ..Default::default() };
        let r = bfgs(rosenbrock, grad, &x0, rosenbrock(&x0), &DMatrix::identity(2, 2), &opts);
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn exact_inverse_hessian_converges_in_one_step() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = |x: &[f64]| {
            let v = DVector::from_column_slice(x);
            0.5 * (v.transpose() * &a * &v)[(0, 0)] - v[0]
        };
        let grad = |x: &[f64]| {
            let v = DVector::from_column_slice(x);
            let g = &a * v - DVector::from_column_slice(&[1.0, 0.0]);
            g.as_slice().to_vec()
        };
        let h0 = a.clone().try_inverse().unwrap();
        let r = bfgs(f, grad, &[2.0, -2.0], f(&[2.0, -2.0]), &h0, &BfgsOptions { grad_tol: 1e-10, ..Default::default() });
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
    }

    #[test]
    fn central_gradient_of_cubic() {
        let g = central_gradient(|x| x[0].powi(3) + 2.0 * x[1], &[2.0, 5.0], 1e-4);
        assert!((g[0] - 12.0).abs() < 1e-6);
        assert!((g[1] - 2.0).abs() < 1e-9);
    }
}
