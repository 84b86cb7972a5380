//! Free parameters and their unconstrained coordinates.
//!
//! The discount factor goes through a logit, Cholesky diagonals through a log,
//! and free type shares through a softmax against the lowest-indexed fixed
//! share, which keeps the share vector on the simplex. Everything else is
//! unbounded and left as is.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParameters, ParamPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `(0, 1)` through the logistic function.
    Logit,
    /// `(0, inf)` through the exponential.
    Log,
    /// Softmax member of the free type-share group.
    Share,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    paths: Vec<ParamPath>,
    transforms: Vec<Transform>,
    /// Type index of the fixed share that absorbs the residual mass.
    share_reference: Option<usize>,
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ParameterSpace {
    pub fn new(paths: Vec<ParamPath>, base: &ModelParameters) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for path in &paths {
            if !seen.insert(*path) {
                return Err(Error::Config(format!("parameter `{path}` listed twice")));
            }
            path.get(base)?;
        }
        let transforms: Vec<Transform> = paths
            .iter()
            .map(|path| match path {
                ParamPath::Delta => Transform::Logit,
                p if p.is_chol_diagonal() => Transform::Log,
                ParamPath::TypeShare(_) => Transform::Share,
                _ => Transform::Identity,
            })
            .collect();
        let share_reference = if transforms.contains(&Transform::Share) {
            let free: Vec<usize> = paths
                .iter()
                .filter_map(|p| if let ParamPath::TypeShare(j) = p { Some(*j) } else { None })
                .collect();
            let reference = (0..base.num_types()).find(|j| !free.contains(j)).ok_or_else(|| {
                Error::Config("at least one type share must stay fixed to anchor the simplex".into())
            })?;
            for &j in free.iter().chain([&reference]) {
                if base.type_shares[j] <= 0.0 {
                    return Err(Error::InvalidParameter {
                        field: format!("type_share.{}", j + 1),
                        reason: "free shares and their reference must be positive".into(),
                    });
                }
            }
            Some(reference)
        } else {
            None
        };
        let space = Self { paths, transforms, share_reference };
        for (path, t) in space.paths.iter().zip(&space.transforms) {
            let v = path.get(base)?;
            let ok = match t {
                Transform::Logit => v > 0.0 && v < 1.0,
                Transform::Log => v > 0.0,
                _ => true,
            };
            if !ok {
                return Err(Error::InvalidParameter {
                    field: path.to_string(),
                    reason: format!("value {v} is on the boundary of its domain"),
                });
            }
        }
        Ok(space)
    }

    pub fn dim(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[ParamPath] {
        &self.paths
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn names(&self) -> Vec<String> {
        self.paths.iter().map(|p| p.to_string()).collect()
    }

    /// Natural-unit values of the free parameters.
    pub fn natural(&self, p: &ModelParameters) -> Result<Vec<f64>> {
        self.paths.iter().map(|path| path.get(p)).collect()
    }

    pub fn to_unconstrained(&self, p: &ModelParameters) -> Result<Vec<f64>> {
        let reference = self.share_reference.map(|j| p.type_shares[j]);
        self.paths
            .iter()
            .zip(&self.transforms)
            .map(|(path, t)| {
                let v = path.get(p)?;
                Ok(match t {
                    Transform::Identity => v,
                    Transform::Logit => (v / (1.0 - v)).ln(),
                    Transform::Log => v.ln(),
                    Transform::Share => (v / reference.expect("share group has a reference")).ln(),
                })
            })
            .collect()
    }

    /// Natural values at unconstrained point `u`. Share values depend on the
    /// mass fixed outside the group, taken from `base`.
    pub fn to_natural(&self, base: &ModelParameters, u: &[f64]) -> Vec<f64> {
        let (mass, denom) = self.share_normalizer(base, u);
        u.iter()
            .zip(&self.transforms)
            .map(|(&x, t)| match t {
                Transform::Identity => x,
                Transform::Logit => logistic(x),
                Transform::Log => x.exp(),
                Transform::Share => mass * x.exp() / denom,
            })
            .collect()
    }

    fn share_normalizer(&self, base: &ModelParameters, u: &[f64]) -> (f64, f64) {
        let Some(reference) = self.share_reference else { return (1.0, 1.0) };
        let free: Vec<usize> = self
            .paths
            .iter()
            .filter_map(|p| if let ParamPath::TypeShare(j) = p { Some(*j) } else { None })
            .collect();
        let fixed_outside: f64 = (0..base.num_types())
            .filter(|j| *j != reference && !free.contains(j))
            .map(|j| base.type_shares[j])
            .sum();
        let denom = 1.0
            + u.iter().zip(&self.transforms).filter(|(_, t)| **t == Transform::Share).map(|(x, _)| x.exp()).sum::<f64>();
        (1.0 - fixed_outside, denom)
    }

    /// `base` with the free parameters set from `u`; the result is validated.
    pub fn apply(&self, base: &ModelParameters, u: &[f64]) -> Result<ModelParameters> {
        if u.len() != self.dim() {
            return Err(Error::Dimension(format!("expected {} coordinates, got {}", self.dim(), u.len())));
        }
        let mut p = base.clone();
        for (path, v) in self.paths.iter().zip(self.to_natural(base, u)) {
            path.set(&mut p, v)?;
        }
        if let Some(reference) = self.share_reference {
            let (mass, denom) = self.share_normalizer(base, u);
            p.type_shares[reference] = mass / denom;
        }
        p.validate()
    }

    /// Derivatives of the natural values with respect to the coordinates.
    pub fn jacobian(&self, base: &ModelParameters, u: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let nat = self.to_natural(base, u);
        let (mass, _) = self.share_normalizer(base, u);
        DMatrix::from_fn(n, n, |i, j| match self.transforms[i] {
            Transform::Identity => (i == j) as u8 as f64,
            Transform::Logit => {
                if i == j {
                    nat[i] * (1.0 - nat[i])
                } else {
                    0.0
                }
            }
            Transform::Log => {
                if i == j {
                    nat[i]
                } else {
                    0.0
                }
            }
            Transform::Share => match self.transforms[j] {
                Transform::Share => nat[i] * ((i == j) as u8 as f64 - nat[j] / mass),
                _ => 0.0,
            },
        })
    }
}
