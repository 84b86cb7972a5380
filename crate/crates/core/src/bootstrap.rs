//! Confidence-set bootstrap.
//!
//! Parameter draws come from the estimator's asymptotic normal distribution.
//! Draws inside the chi-square ellipsoid at level `1 - alpha` survive, and the
//! confidence set for each quantity of interest is the range of its values over
//! the survivors.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::{self, Domain};
use crate::stats::chi2_quantile;

/// Shrink factor applied to the ellipsoid radius so that rounding never
/// pushes a sampled point outside the membership test.
const RADIUS_SHRINK: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Total number of normal draws.
    pub draws: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(draws: usize, alpha: f64, seed: u64) -> Result<Self> {
        let cfg = Self { draws, alpha, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 {
            return Err(Error::Config("bootstrap needs at least one draw".into()));
        }
        check_alpha(self.alpha)
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub alpha: f64,
    pub draws: usize,
    /// Acceptance threshold on the squared Mahalanobis distance.
    pub threshold: f64,
    /// Index of each accepted draw among all `draws`.
    pub accepted_index: Vec<usize>,
    pub accepted: Vec<Vec<f64>>,
    /// One row per accepted draw, one column per policy.
    pub qoi_samples: Vec<Vec<f64>>,
    pub cs_per_policy: Vec<Interval>,
    pub point_qoi: Vec<f64>,
    pub acceptance_rate: f64,
}

impl BootstrapResult {
    pub fn num_policies(&self) -> usize {
        self.point_qoi.len()
    }

    /// Samples of one policy's quantity, in draw order.
    pub fn policy_samples(&self, g: usize) -> Vec<f64> {
        self.qoi_samples.iter().map(|row| row[g]).collect()
    }
}

/// Factored covariance reused across many distance evaluations.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    center: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl Ellipsoid {
    pub fn new(theta_hat: &[f64], sigma_hat: &DMatrix<f64>) -> Result<Self> {
        if sigma_hat.nrows() != theta_hat.len() || theta_hat.is_empty() {
            return Err(Error::Dimension(format!(
                "covariance is {}x{} for {} parameters",
                sigma_hat.nrows(),
                sigma_hat.ncols(),
                theta_hat.len()
            )));
        }
        Ok(Self { center: DVector::from_column_slice(theta_hat), chol: linalg::cholesky(sigma_hat)? })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        self.center.as_slice()
    }

    pub fn mahalanobis_sq(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim() {
            return Err(Error::Dimension(format!("expected {} coordinates, got {}", self.dim(), theta.len())));
        }
        let d = DVector::from_column_slice(theta) - &self.center;
        let w = self.chol.l().solve_lower_triangular(&d).ok_or(Error::SingularCovariance)?;
        Ok(w.norm_squared())
    }

    /// `center + L z` with `L` the lower Cholesky factor.
    fn map(&self, z: &DVector<f64>) -> Vec<f64> {
        (&self.center + self.chol.l() * z).as_slice().to_vec()
    }
}

/// `(theta - theta_hat)' sigma_hat^{-1} (theta - theta_hat)` by a triangular solve.
pub fn mahalanobis_sq(theta: &[f64], theta_hat: &[f64], sigma_hat: &DMatrix<f64>) -> Result<f64> {
    Ellipsoid::new(theta_hat, sigma_hat)?.mahalanobis_sq(theta)
}

fn standard_normal_vector(seed: u64, domain: Domain, m: usize, dim: usize) -> DVector<f64> {
    let mut rng = rng::stream(seed, domain, m as u64, 0);
    DVector::from_iterator(dim, (0..dim).map(|_| rng::standard_normal(&mut rng)))
}

/// The raw normal draws and their distances, shared by every alpha level.
#[derive(Debug, Clone)]
pub struct DrawBank {
    pub draws: Vec<Vec<f64>>,
    pub distances: Vec<f64>,
}

impl DrawBank {
    pub fn generate(ellipsoid: &Ellipsoid, m: usize, seed: u64) -> Result<Self> {
        let dim = ellipsoid.dim();
        let pairs: Vec<(Vec<f64>, f64)> = (0..m)
            .into_par_iter()
            .map(|i| {
                let theta = ellipsoid.map(&standard_normal_vector(seed, Domain::Bootstrap, i, dim));
                let d = ellipsoid.mahalanobis_sq(&theta)?;
                Ok((theta, d))
            })
            .collect::<Result<_>>()?;
        let (draws, distances) = pairs.into_iter().unzip();
        Ok(Self { draws, distances })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Indices of draws within the `1 - alpha` ellipsoid.
    pub fn accepted(&self, threshold: f64) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.distances[i] <= threshold).collect()
    }
}

pub fn acceptance_threshold(dim: usize, alpha: f64) -> f64 {
    chi2_quantile(dim, 1.0 - alpha)
}

fn evaluate_rows<F>(qoi: &F, points: &[&[f64]]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    points.par_iter().map(|x| qoi(x)).collect()
}

fn ranges(rows: &[Vec<f64>], policies: usize) -> Vec<Interval> {
    (0..policies)
        .map(|g| {
            let (lo, hi) = rows
                .iter()
                .map(|r| r[g])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            Interval { lo, hi }
        })
        .collect()
}

fn check_rows(rows: &[Vec<f64>], policies: usize) -> Result<()> {
    for row in rows {
        if row.len() != policies {
            return Err(Error::Dimension(format!("quantity map returned {} values, expected {policies}", row.len())));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { field: "qoi".into(), reason: format!("non-finite value {v}") });
        }
    }
    Ok(())
}

/// Runs the bootstrap once per alpha in `alphas`, reusing one set of raw
/// draws. The quantity map is evaluated once per draw accepted at the
/// largest set; smaller sets take subsets of those rows.
pub fn cs_bootstrap_sweep<F>(
    theta_hat: &[f64],
    sigma_hat: &DMatrix<f64>,
    qoi: F,
    draws: usize,
    seed: u64,
    alphas: &[f64],
) -> Result<Vec<BootstrapResult>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if draws == 0 {
        return Err(Error::Config("bootstrap needs at least one draw".into()));
    }
    if alphas.is_empty() {
        return Err(Error::Config("alpha grid is empty".into()));
    }
    for &a in alphas {
        check_alpha(a)?;
    }
    let ellipsoid = Ellipsoid::new(theta_hat, sigma_hat)?;
    let bank = DrawBank::generate(&ellipsoid, draws, seed)?;
    let point_qoi = qoi(theta_hat)?;
    let policies = point_qoi.len();
    check_rows(std::slice::from_ref(&point_qoi), policies)?;

    let dim = ellipsoid.dim();
    let widest = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let pool = bank.accepted(acceptance_threshold(dim, widest));
    let points: Vec<&[f64]> = pool.iter().map(|&i| bank.draws[i].as_slice()).collect();
    let pool_rows = evaluate_rows(&qoi, &points)?;
    check_rows(&pool_rows, policies)?;

    alphas
        .iter()
        .map(|&alpha| {
            let threshold = acceptance_threshold(dim, alpha);
            let keep: Vec<usize> = (0..pool.len()).filter(|&k| bank.distances[pool[k]] <= threshold).collect();
            if keep.is_empty() {
                return Err(Error::NoAcceptedDraws);
            }
            let qoi_samples: Vec<Vec<f64>> = keep.iter().map(|&k| pool_rows[k].clone()).collect();
            Ok(BootstrapResult {
                alpha,
                draws,
                threshold,
                accepted_index: keep.iter().map(|&k| pool[k]).collect(),
                accepted: keep.iter().map(|&k| bank.draws[pool[k]].clone()).collect(),
                cs_per_policy: ranges(&qoi_samples, policies),
                qoi_samples,
                point_qoi: point_qoi.clone(),
                acceptance_rate: keep.len() as f64 / draws as f64,
            })
        })
        .collect()
}

pub fn cs_bootstrap<F>(
    theta_hat: &[f64],
    sigma_hat: &DMatrix<f64>,
    qoi: F,
    cfg: &BootstrapConfig,
) -> Result<BootstrapResult>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    cfg.validate()?;
    let mut out = cs_bootstrap_sweep(theta_hat, sigma_hat, qoi, cfg.draws, cfg.seed, &[cfg.alpha])?;
    Ok(out.remove(0))
}

/// `n` points uniform on the `1 - alpha` ellipsoid. Point `i` uses the same
/// underlying numbers at every alpha, so sets at different levels are radial
/// rescalings of each other.
pub fn uniform_ellipsoid_sample(
    theta_hat: &[f64],
    sigma_hat: &DMatrix<f64>,
    alpha: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_alpha(alpha)?;
    let ellipsoid = Ellipsoid::new(theta_hat, sigma_hat)?;
    let dim = ellipsoid.dim();
    let radius = acceptance_threshold(dim, alpha).sqrt() * RADIUS_SHRINK;
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::Ellipsoid, i as u64, 0);
            let mut z = DVector::from_iterator(dim, (0..dim).map(|_| rng::standard_normal(&mut rng)));
            let norm = z.norm();
            let u = rng::open_unit(&mut rng);
            let r = radius * u.powf(1.0 / dim as f64);
            if norm > 0.0 {
                z *= r / norm;
            }
            ellipsoid.map(&z)
        })
        .collect())
}

/// Writes the accepted-draw sample matrix with one column per policy.
pub fn write_qoi_samples<W: Write>(result: &BootstrapResult, policies: &[String], out: W) -> Result<()> {
    if policies.len() != result.num_policies() {
        return Err(Error::Dimension(format!(
            "{} policy names for {} policies",
            policies.len(),
            result.num_policies()
        )));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["draw".to_string()];
    header.extend(policies.iter().cloned());
    w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
    for (idx, row) in result.accepted_index.iter().zip(&result.qoi_samples) {
        let mut rec = vec![idx.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

/// Writes the accepted-draw samples of policy `g` alone.
pub fn write_policy_samples<W: Write>(result: &BootstrapResult, g: usize, name: &str, out: W) -> Result<()> {
    if g >= result.num_policies() {
        return Err(Error::Dimension(format!("policy {g} of {}", result.num_policies())));
    }
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["draw", name]).map_err(io)?;
    for (idx, row) in result.accepted_index.iter().zip(&result.qoi_samples) {
        w.write_record([idx.to_string(), row[g].to_string()]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn mahalanobis_examples() {
        let eye = DMatrix::<f64>::identity(3, 3);
        assert_eq!(mahalanobis_sq(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &eye).unwrap(), 0.0);
        assert!((mahalanobis_sq(&[0.0, 1.0, 0.0], &[0.0; 3], &eye).unwrap() - 1.0).abs() < 1e-15);
        let four = eye * 4.0;
        assert!((mahalanobis_sq(&[2.0, 0.0, 0.0], &[0.0; 3], &four).unwrap() - 1.0).abs() < 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(mahalanobis_sq(&[0.0, 0.0], &[1.0, 1.0], &bad).unwrap_err(), Error::SingularCovariance);
    }

    #[test]
    fn correlated_distance_matches_explicit_inverse() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let inv = s.clone().try_inverse().unwrap();
        let d = DVector::from_column_slice(&[0.7, -1.3]);
        let expect = (d.transpose() * inv * &d)[(0, 0)];
        let got = mahalanobis_sq(&[1.7, -0.3], &[1.0, 1.0], &s).unwrap();
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn scalar_identity_interval() {
        let cfg = BootstrapConfig::new(30_000, 0.1, 11).unwrap();
        let r = cs_bootstrap(&[3.0], &scalar(0.5625), |x| Ok(vec![x[0], 29.08 - 3.0 * x[0]]), &cfg).unwrap();
        let half = 0.75 * chi2_quantile(1, 0.9).sqrt();
        assert!((r.cs_per_policy[0].lo - (3.0 - half)).abs() < 0.02);
        assert!((r.cs_per_policy[0].hi - (3.0 + half)).abs() < 0.02);
        assert!((r.acceptance_rate - 0.9).abs() < 3.0 * (0.09f64 / 30_000.0).sqrt());
        assert_eq!(r.point_qoi, vec![3.0, 20.08]);
        for row in &r.qoi_samples {
            assert!(row.iter().zip(&r.cs_per_policy).all(|(v, cs)| cs.contains(*v)));
        }
    }

    #[test]
    fn draws_are_order_independent_and_nested() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let q = |x: &[f64]| Ok(vec![x[0] + x[1], (x[0] - 1.0).max(0.0)]);
        let sweep = cs_bootstrap_sweep(&[1.0, 0.0], &s, q, 2000, 5, &[0.2, 0.05, 0.1]).unwrap();
        let one = cs_bootstrap(&[1.0, 0.0], &s, q, &BootstrapConfig::new(2000, 0.1, 5).unwrap()).unwrap();
        assert_eq!(sweep[2], one);
        for g in 0..2 {
            assert!(sweep[1].cs_per_policy[g].contains_interval(&sweep[2].cs_per_policy[g]));
            assert!(sweep[2].cs_per_policy[g].contains_interval(&sweep[0].cs_per_policy[g]));
        }
        // the kinked quantity is bounded below by zero
        assert!(sweep.iter().all(|r| r.cs_per_policy[1].lo >= 0.0));
    }

    #[test]
    fn tiny_draw_count_can_reject_everything() {
        let cfg = BootstrapConfig::new(1, 0.999, 3).unwrap();
        let r = cs_bootstrap(&[0.0], &scalar(1.0), |x| Ok(vec![x[0]]), &cfg);
        assert_eq!(r.unwrap_err(), Error::NoAcceptedDraws);
        assert!(BootstrapConfig::new(0, 0.1, 1).is_err());
        assert!(BootstrapConfig::new(10, 1.0, 1).is_err());
    }

    #[test]
    fn uniform_scalar_mean_and_membership() {
        let n = 20_000;
        let pts = uniform_ellipsoid_sample(&[3.0], &scalar(0.5625), 0.1, n, 9).unwrap();
        let half = 0.75 * chi2_quantile(1, 0.9).sqrt();
        let mean = pts.iter().map(|p| p[0]).sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 3.0 * half / (3.0 * n as f64).sqrt());
        assert!(pts.iter().all(|p| (p[0] - 3.0).abs() <= half));
    }

    #[test]
    fn uniform_disc_area_scaling() {
        let n = 40_000;
        let eye = DMatrix::<f64>::identity(2, 2);
        let pts = uniform_ellipsoid_sample(&[0.0, 0.0], &eye, 0.1, n, 4).unwrap();
        let r = chi2_quantile(2, 0.9).sqrt();
        let inner = pts.iter().filter(|p| p[0].hypot(p[1]) <= 0.5 * r).count() as f64 / n as f64;
        assert!((inner - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / n as f64).sqrt());
    }

    #[test]
    fn sample_csv_layout() {
        let cfg = BootstrapConfig::new(50, 0.5, 1).unwrap();
        let r = cs_bootstrap(&[0.0], &scalar(1.0), |x| Ok(vec![x[0], 2.0 * x[0]]), &cfg).unwrap();
        let mut buf = Vec::new();
        write_qoi_samples(&r, &["a".into(), "b".into()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("draw,a,b\n"));
        assert_eq!(text.lines().count(), r.accepted.len() + 1);
        assert!(text.ends_with('\n'));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ellipsoid_points_pass_membership(
            a in 0.1f64..5.0, b in 0.1f64..5.0, rho in -0.9f64..0.9,
            alpha in 0.01f64..0.99, seed in 0u64..1000,
        ) {
            let c = rho * (a * b).sqrt();
            let s = DMatrix::from_row_slice(2, 2, &[a, c, c, b]);
            let theta = [1.0, -2.0];
            let bound = acceptance_threshold(2, alpha);
            for p in uniform_ellipsoid_sample(&theta, &s, alpha, 200, seed).unwrap() {
                prop_assert!(mahalanobis_sq(&p, &theta, &s).unwrap() <= bound);
            }
        }

        #[test]
        fn intervals_cover_samples(alpha in 0.05f64..0.9, seed in 0u64..1000) {
            let cfg = BootstrapConfig::new(300, alpha, seed).unwrap();
            let r = cs_bootstrap(&[0.5], &scalar(2.0), |x| Ok(vec![x[0].exp(), -x[0]]), &cfg).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.acceptance_rate));
            for row in &r.qoi_samples {
                for (v, cs) in row.iter().zip(&r.cs_per_policy) {
                    prop_assert!(cs.lo <= cs.hi && cs.contains(*v));
                }
            }
        }
    }
}
