//! Dotted parameter paths such as `beta_tc1`, `wage.white.return_schooling`
//! or `shock_chol.4.4`. Used by policy edits, free-parameter masks and the
//! flattening of parameter vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Alternative, ModelParameters, NUM_ALTERNATIVES, NUM_WORKING};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WageTerm {
    Schooling,
    OwnExp,
    OwnExpSq,
    /// Cross experience from another working alternative (alternative index).
    Cross(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamPath {
    Delta,
    BetaTc1,
    BetaTc2,
    BetaRc1,
    BetaRc2,
    Gamma44,
    Gamma45,
    /// Zero-based type and alternative.
    Endowment { type_idx: usize, alt: usize },
    Wage { alt: usize, term: WageTerm },
    NonpecConstant(usize),
    SwitchCost(usize),
    /// Zero-based row and column, row >= column.
    ShockChol { row: usize, col: usize },
    TypeShare(usize),
}

impl ParamPath {
    pub fn get(&self, p: &ModelParameters) -> Result<f64> {
        self.check(p)?;
        Ok(match *self {
            ParamPath::Delta => p.delta,
            ParamPath::BetaTc1 => p.beta_tc1,
            ParamPath::BetaTc2 => p.beta_tc2,
            ParamPath::BetaRc1 => p.beta_rc1,
            ParamPath::BetaRc2 => p.beta_rc2,
            ParamPath::Gamma44 => p.gamma_44,
            ParamPath::Gamma45 => p.gamma_45,
            ParamPath::Endowment { type_idx, alt } => p.endowments[type_idx][alt],
            ParamPath::Wage { alt, term } => {
                let c = p.wage.get(alt);
                match term {
                    WageTerm::Schooling => c.return_schooling,
                    WageTerm::OwnExp => c.return_own_exp,
                    WageTerm::OwnExpSq => c.return_own_exp_sq,
                    WageTerm::Cross(other) => c.cross_exp[cross_slot(alt, other)],
                }
            }
            ParamPath::NonpecConstant(a) => p.nonpec.constant[a],
            ParamPath::SwitchCost(a) => p.nonpec.switch_cost[a],
            ParamPath::ShockChol { row, col } => p.shock_chol[row][col],
            ParamPath::TypeShare(j) => p.type_shares[j],
        })
    }

    pub fn set(&self, p: &mut ModelParameters, value: f64) -> Result<()> {
        self.check(p)?;
        let slot: &mut f64 = match *self {
            ParamPath::Delta => &mut p.delta,
            ParamPath::BetaTc1 => &mut p.beta_tc1,
            ParamPath::BetaTc2 => &mut p.beta_tc2,
            ParamPath::BetaRc1 => &mut p.beta_rc1,
            ParamPath::BetaRc2 => &mut p.beta_rc2,
            ParamPath::Gamma44 => &mut p.gamma_44,
            ParamPath::Gamma45 => &mut p.gamma_45,
            ParamPath::Endowment { type_idx, alt } => &mut p.endowments[type_idx][alt],
            ParamPath::Wage { alt, term } => {
                let c = p.wage.get_mut(alt);
                match term {
                    WageTerm::Schooling => &mut c.return_schooling,
                    WageTerm::OwnExp => &mut c.return_own_exp,
                    WageTerm::OwnExpSq => &mut c.return_own_exp_sq,
                    WageTerm::Cross(other) => &mut c.cross_exp[cross_slot(alt, other)],
                }
            }
            ParamPath::NonpecConstant(a) => &mut p.nonpec.constant[a],
            ParamPath::SwitchCost(a) => &mut p.nonpec.switch_cost[a],
            ParamPath::ShockChol { row, col } => &mut p.shock_chol[row][col],
            ParamPath::TypeShare(j) => &mut p.type_shares[j],
        };
        *slot = value;
        Ok(())
    }

    /// Adds `delta` in native units.
    pub fn shift(&self, p: &mut ModelParameters, delta: f64) -> Result<()> {
        let v = self.get(p)?;
        self.set(p, v + delta)
    }

    pub fn is_chol_diagonal(&self) -> bool {
        matches!(self, ParamPath::ShockChol { row, col } if row == col)
    }

    fn check(&self, p: &ModelParameters) -> Result<()> {
        let ok = match *self {
            ParamPath::Endowment { type_idx, .. } => type_idx < p.endowments.len(),
            ParamPath::TypeShare(j) => j < p.type_shares.len(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::UnknownParameter(self.to_string()))
        }
    }
}

fn cross_slot(own: usize, other: usize) -> usize {
    super::WageCoefficients::cross_order(own)
        .iter()
        .position(|&o| o == other)
        .expect("validated cross-experience pair")
}

fn parse_alt(s: &str) -> Option<usize> {
    if let Ok(code) = s.parse::<u8>() {
        return Alternative::from_code(code).map(|a| a.index());
    }
    Alternative::from_name(s).map(|a| a.index())
}

fn parse_one_based(s: &str, limit: usize) -> Option<usize> {
    let v: usize = s.parse().ok()?;
    (1..=limit).contains(&v).then(|| v - 1)
}

impl FromStr for ParamPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownParameter(s.to_string());
        let parts: Vec<&str> = s.trim().split('.').collect();
        let path = match parts.as_slice() {
            ["delta"] => ParamPath::Delta,
            ["beta_tc1"] => ParamPath::BetaTc1,
            ["beta_tc2"] => ParamPath::BetaTc2,
            ["beta_rc1"] => ParamPath::BetaRc1,
            ["beta_rc2"] => ParamPath::BetaRc2,
            ["gamma_44"] => ParamPath::Gamma44,
            ["gamma_45"] => ParamPath::Gamma45,
            ["endowment", j, a] => {
                let type_idx: usize = j.parse::<usize>().ok().filter(|&j| j >= 1).ok_or_else(unknown)? - 1;
                ParamPath::Endowment { type_idx, alt: parse_alt(a).ok_or_else(unknown)? }
            }
            ["wage", a, term @ ..] => {
                let alt = parse_alt(a).filter(|&a| a < NUM_WORKING).ok_or_else(unknown)?;
                let term = match term {
                    ["return_schooling"] => WageTerm::Schooling,
                    ["return_own_exp"] => WageTerm::OwnExp,
                    ["return_own_exp_sq"] => WageTerm::OwnExpSq,
                    ["cross_exp", other] => {
                        let other = parse_alt(other)
                            .filter(|&o| o < NUM_WORKING && o != alt)
                            .ok_or_else(unknown)?;
                        WageTerm::Cross(other)
                    }
                    _ => return Err(unknown()),
                };
                ParamPath::Wage { alt, term }
            }
            ["nonpec", "constant", a] => ParamPath::NonpecConstant(parse_alt(a).ok_or_else(unknown)?),
            ["nonpec", "switch_cost", a] => {
                ParamPath::SwitchCost(parse_alt(a).filter(|&a| a < NUM_WORKING).ok_or_else(unknown)?)
            }
            ["shock_chol", r, c] => {
                let row = parse_one_based(r, NUM_ALTERNATIVES).ok_or_else(unknown)?;
                let col = parse_one_based(c, NUM_ALTERNATIVES).ok_or_else(unknown)?;
                if col > row {
                    return Err(unknown());
                }
                ParamPath::ShockChol { row, col }
            }
            ["type_share", j] => {
                ParamPath::TypeShare(j.parse::<usize>().ok().filter(|&j| j >= 1).ok_or_else(unknown)? - 1)
            }
            _ => return Err(unknown()),
        };
        Ok(path)
    }
}

impl fmt::Display for ParamPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alt = |a: usize| Alternative::from_index(a).name();
        match *self {
            ParamPath::Delta => write!(f, "delta"),
            ParamPath::BetaTc1 => write!(f, "beta_tc1"),
            ParamPath::BetaTc2 => write!(f, "beta_tc2"),
            ParamPath::BetaRc1 => write!(f, "beta_rc1"),
            ParamPath::BetaRc2 => write!(f, "beta_rc2"),
            ParamPath::Gamma44 => write!(f, "gamma_44"),
            ParamPath::Gamma45 => write!(f, "gamma_45"),
            ParamPath::Endowment { type_idx, alt: a } => write!(f, "endowment.{}.{}", type_idx + 1, alt(a)),
            ParamPath::Wage { alt: a, term } => match term {
                WageTerm::Schooling => write!(f, "wage.{}.return_schooling", alt(a)),
                WageTerm::OwnExp => write!(f, "wage.{}.return_own_exp", alt(a)),
                WageTerm::OwnExpSq => write!(f, "wage.{}.return_own_exp_sq", alt(a)),
                WageTerm::Cross(o) => write!(f, "wage.{}.cross_exp.{}", alt(a), alt(o)),
            },
            ParamPath::NonpecConstant(a) => write!(f, "nonpec.constant.{}", alt(a)),
            ParamPath::SwitchCost(a) => write!(f, "nonpec.switch_cost.{}", alt(a)),
            ParamPath::ShockChol { row, col } => write!(f, "shock_chol.{}.{}", row + 1, col + 1),
            ParamPath::TypeShare(j) => write!(f, "type_share.{}", j + 1),
        }
    }
}

impl Serialize for ParamPath {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ParamPath {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testing::blank_parameters;
    use super::*;

    #[test]
    fn display_parse_round_trip() {
        let paths = [
            "delta",
            "beta_tc1",
            "gamma_45",
            "endowment.2.school",
            "wage.white.return_schooling",
            "wage.military.cross_exp.white",
            "nonpec.constant.home",
            "nonpec.switch_cost.blue",
            "shock_chol.4.2",
            "type_share.3",
        ];
        for s in paths {
            let p: ParamPath = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        let numeric: ParamPath = "endowment.1.4".parse().unwrap();
        assert_eq!(numeric.to_string(), "endowment.1.school");
    }

    #[test]
    fn rejects_bad_paths() {
        for s in ["alpha", "wage.school.return_schooling", "shock_chol.1.2", "wage.blue.cross_exp.blue", "endowment.0.blue"] {
            assert!(s.parse::<ParamPath>().is_err(), "{s}");
        }
    }

    #[test]
    fn get_set_shift() {
        let mut p = blank_parameters(16, 20);
        let path: ParamPath = "beta_tc1".parse().unwrap();
        path.set(&mut p, 5000.0).unwrap();
        path.shift(&mut p, -2000.0).unwrap();
        assert_eq!(p.beta_tc1, 3000.0);

        let cross: ParamPath = "wage.military.cross_exp.white".parse().unwrap();
        cross.set(&mut p, 0.25).unwrap();
        assert_eq!(p.wage.military.cross_exp, [0.0, 0.25]);

        let missing: ParamPath = "endowment.3.blue".parse().unwrap();
        assert!(missing.get(&p).is_err());
    }
}
