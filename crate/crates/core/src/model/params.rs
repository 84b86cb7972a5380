use serde::{Deserialize, Serialize};

use super::{Alternative, NUM_ALTERNATIVES, NUM_WORKING};
use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

/// Wage equation of one working alternative. The constant lives in the type
/// endowment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WageCoefficients {
    pub return_schooling: f64,
    pub return_own_exp: f64,
    pub return_own_exp_sq: f64,
    /// Returns to experience in the other two working alternatives, in code
    /// order (for white collar: blue, military).
    #[serde(default)]
    pub cross_exp: [f64; 2],
}

impl WageCoefficients {
    /// Working-alternative indices matching the slots of `cross_exp`.
    pub fn cross_order(own: usize) -> [usize; 2] {
        match own {
            0 => [1, 2],
            1 => [0, 2],
            _ => [0, 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WageEquations {
    pub blue: WageCoefficients,
    pub white: WageCoefficients,
    pub military: WageCoefficients,
}

impl WageEquations {
    pub fn get(&self, a: usize) -> &WageCoefficients {
        match a {
            0 => &self.blue,
            1 => &self.white,
            2 => &self.military,
            _ => panic!("alternative {a} has no wage equation"),
        }
    }

    pub fn get_mut(&mut self, a: usize) -> &mut WageCoefficients {
        match a {
            0 => &mut self.blue,
            1 => &mut self.white,
            2 => &mut self.military,
            _ => panic!("alternative {a} has no wage equation"),
        }
    }
}

/// Constant utility terms in dollars.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonPecuniary {
    /// One constant per alternative, added on top of the endowment for school
    /// and home.
    #[serde(default)]
    pub constant: [f64; NUM_ALTERNATIVES],
    /// Cost of entering a working alternative from a different previous choice.
    #[serde(default)]
    pub switch_cost: [f64; NUM_WORKING],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    pub t_min: u32,
    pub t_max: u32,
}

impl Horizon {
    pub fn periods(&self) -> u32 {
        self.t_max - self.t_min + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchoolingRules {
    #[serde(default = "default_h_max")]
    pub h_max: u32,
    #[serde(default = "default_entry_lag")]
    pub entry_lag: Alternative,
}

fn default_h_max() -> u32 {
    20
}

fn default_entry_lag() -> Alternative {
    Alternative::School
}

impl Default for SchoolingRules {
    fn default() -> Self {
        Self { h_max: default_h_max(), entry_lag: default_entry_lag() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSchooling {
    pub years: u32,
    pub probability: f64,
}

/// All structural parameters of the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParameters {
    pub delta: f64,
    /// Tuition after high school (subtracted when h >= 12).
    pub beta_tc1: f64,
    /// College tuition (subtracted when h >= 16).
    pub beta_tc2: f64,
    /// Re-enrollment cost below twelve years of schooling.
    pub beta_rc1: f64,
    /// Re-enrollment cost at or above twelve years.
    pub beta_rc2: f64,
    /// Schooling utility trend per year of age.
    pub gamma_44: f64,
    /// Schooling utility shifter for ages below 18.
    pub gamma_45: f64,
    pub type_shares: Vec<f64>,
    /// Rows are types; columns follow alternative code order. Log-skill units
    /// for working alternatives, dollars for school and home.
    pub endowments: Vec<[f64; NUM_ALTERNATIVES]>,
    /// Lower Cholesky factor of the shock covariance.
    pub shock_chol: [[f64; NUM_ALTERNATIVES]; NUM_ALTERNATIVES],
    pub horizon: Horizon,
    #[serde(default)]
    pub schooling: SchoolingRules,
    pub initial_schooling: Vec<InitialSchooling>,
    pub wage: WageEquations,
    #[serde(default)]
    pub nonpec: NonPecuniary,
}

impl ModelParameters {
    pub fn num_types(&self) -> usize {
        self.type_shares.len()
    }

    /// Shock covariance `L L'`.
    pub fn shock_covariance(&self) -> [[f64; NUM_ALTERNATIVES]; NUM_ALTERNATIVES] {
        let l = &self.shock_chol;
        let mut s = [[0.0; NUM_ALTERNATIVES]; NUM_ALTERNATIVES];
        for i in 0..NUM_ALTERNATIVES {
            for j in 0..NUM_ALTERNATIVES {
                s[i][j] = (0..NUM_ALTERNATIVES).map(|k| l[i][k] * l[j][k]).sum();
            }
        }
        s
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: ModelParameters = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        p.validate()
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Checks every invariant and hands the parameters back unchanged.
    pub fn validate(self) -> Result<Self> {
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<()> {
        let h = &self.horizon;
        // A single-period model (t_min == t_max) is allowed.
        if h.t_min > h.t_max {
            return Err(Error::BadHorizon {
                reason: format!("t_min = {} exceeds t_max = {}", h.t_min, h.t_max),
            });
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter {
                field: "delta".into(),
                reason: format!("discount factor {} outside [0, 1)", self.delta),
            });
        }
        check_simplex("type_shares", self.type_shares.iter().copied())?;
        check_simplex("initial_schooling", self.initial_schooling.iter().map(|s| s.probability))?;
        if self.endowments.len() != self.type_shares.len() {
            return Err(Error::InvalidParameter {
                field: "endowments".into(),
                reason: format!(
                    "{} rows for {} types",
                    self.endowments.len(),
                    self.type_shares.len()
                ),
            });
        }
        for (i, row) in self.shock_chol.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonPDCovariance {
                        field: format!("shock_chol[{}][{}]", i + 1, j + 1),
                        reason: "non-finite entry".into(),
                    });
                }
                if j > i && *v != 0.0 {
                    return Err(Error::NonPDCovariance {
                        field: format!("shock_chol[{}][{}]", i + 1, j + 1),
                        reason: "factor must be lower triangular".into(),
                    });
                }
                if j == i && *v <= 0.0 {
                    return Err(Error::NonPDCovariance {
                        field: format!("shock_chol[{}][{}]", i + 1, j + 1),
                        reason: format!("diagonal entry {v} is not positive"),
                    });
                }
            }
        }
        let h_max = self.schooling.h_max;
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.initial_schooling {
            if s.years > h_max {
                return Err(Error::InvalidParameter {
                    field: "initial_schooling".into(),
                    reason: format!("{} years exceeds h_max = {h_max}", s.years),
                });
            }
            if !seen.insert(s.years) {
                return Err(Error::InvalidParameter {
                    field: "initial_schooling".into(),
                    reason: format!("{} years listed twice", s.years),
                });
            }
        }
        let scalars = [
            ("beta_tc1", self.beta_tc1),
            ("beta_tc2", self.beta_tc2),
            ("beta_rc1", self.beta_rc1),
            ("beta_rc2", self.beta_rc2),
            ("gamma_44", self.gamma_44),
            ("gamma_45", self.gamma_45),
        ];
        for (name, v) in scalars {
            if !v.is_finite() {
                return Err(Error::InvalidParameter { field: name.into(), reason: "not finite".into() });
            }
        }
        if self.endowments.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { field: "endowments".into(), reason: "not finite".into() });
        }
        Ok(())
    }
}

fn check_simplex(field: &str, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    let mut n = 0;
    for v in values {
        n += 1;
        if !(v >= 0.0) {
            let sum = f64::NAN;
            return Err(Error::NonSimplexShares { field: field.into(), sum });
        }
        sum += v;
    }
    if n == 0 || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::NonSimplexShares { field: field.into(), sum });
    }
    Ok(())
}
