//! Policy rankings under as-if optimization, maximin, minimax regret and
//! subjective Bayes with a uniform prior over the confidence set.
//!
//! Every rule reduces to a criterion value per policy. Policies are sorted by
//! criterion, and a policy joins the group of the current group's leader when
//! its value is within `tie_tol` of the leader's. Groups share a rank; inside a
//! group policies are listed by index.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{self, BootstrapResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    AsIf,
    Maximin,
    MinimaxRegret,
    Bayes,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::AsIf, Rule::Maximin, Rule::MinimaxRegret, Rule::Bayes];

    pub fn name(self) -> &'static str {
        match self {
            Rule::AsIf => "as_if",
            Rule::Maximin => "maximin",
            Rule::MinimaxRegret => "minimax_regret",
            Rule::Bayes => "bayes",
        }
    }

    /// Minimax regret prefers small criterion values; the others prefer large.
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Rule::MinimaxRegret)
    }
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown decision rule `{s}`")))
    }
}

/// Quantities of interest evaluated jointly: row `m` holds every policy's value
/// at the same parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoiMatrix {
    rows: Vec<Vec<f64>>,
    policies: usize,
}

impl QoiMatrix {
    pub fn new(rows: Vec<Vec<f64>>, policies: usize) -> Result<Self> {
        if let Some(r) = rows.iter().find(|r| r.len() != policies) {
            return Err(Error::Dimension(format!("row has {} values, expected {policies}", r.len())));
        }
        Ok(Self { rows, policies })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let policies = rows.first().map_or(0, Vec::len);
        Self::new(rows, policies)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn num_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn num_policies(&self) -> usize {
        self.policies
    }

    fn require_rows(&self) -> Result<()> {
        if self.rows.is_empty() || self.policies == 0 {
            Err(Error::EmptySamples)
        } else {
            Ok(())
        }
    }
}

impl From<&BootstrapResult> for QoiMatrix {
    fn from(r: &BootstrapResult) -> Self {
        Self { rows: r.qoi_samples.clone(), policies: r.num_policies() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub rule: Rule,
    pub values: Vec<f64>,
    /// Competition rank per policy; 1 is chosen.
    pub ranks: Vec<usize>,
    /// Policy indices from best to worst.
    pub order: Vec<usize>,
    /// Groups of two or more policies sharing a rank.
    pub ties: Vec<Vec<usize>>,
}

impl Ranking {
    pub fn chosen(&self) -> Vec<usize> {
        (0..self.ranks.len()).filter(|&g| self.ranks[g] == 1).collect()
    }

    fn from_values(rule: Rule, values: Vec<f64>, tie_tol: f64) -> Self {
        let better = |a: f64, b: f64| if rule.higher_is_better() { b.total_cmp(&a) } else { a.total_cmp(&b) };
        let mut sorted: Vec<usize> = (0..values.len()).collect();
        sorted.sort_by(|&i, &j| better(values[i], values[j]).then(i.cmp(&j)));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for g in sorted {
            match groups.last_mut() {
                Some(group) if (values[g] - values[group[0]]).abs() <= tie_tol => group.push(g),
                _ => groups.push(vec![g]),
            }
        }
        let mut ranks = vec![0; values.len()];
        let mut order = Vec::with_capacity(values.len());
        let mut next = 1;
        for group in &mut groups {
            group.sort_unstable();
            for &g in group.iter() {
                ranks[g] = next;
            }
            next += group.len();
            order.extend(group.iter().copied());
        }
        let ties = groups.into_iter().filter(|g| g.len() > 1).collect();
        Self { rule, values, ranks, order, ties }
    }
}

/// Utility applied to each quantity of interest before ranking. The rules
/// expect a non-decreasing map.
pub type Utility<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

pub fn linear(x: f64) -> f64 {
    x
}

fn check_tol(tie_tol: f64) -> Result<()> {
    if tie_tol >= 0.0 && tie_tol.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("tie_tol must be finite and non-negative, got {tie_tol}")))
    }
}

pub fn as_if_rank_with(point_qoi: &[f64], u: Utility, tie_tol: f64) -> Result<Ranking> {
    check_tol(tie_tol)?;
    Ok(Ranking::from_values(Rule::AsIf, point_qoi.iter().map(|&y| u(y)).collect(), tie_tol))
}

pub fn maximin_rank_with(samples: &QoiMatrix, u: Utility, tie_tol: f64) -> Result<Ranking> {
    check_tol(tie_tol)?;
    samples.require_rows()?;
    let values = (0..samples.policies)
        .map(|g| samples.rows.iter().map(|r| u(r[g])).fold(f64::INFINITY, f64::min))
        .collect();
    Ok(Ranking::from_values(Rule::Maximin, values, tie_tol))
}

pub fn minimax_regret_rank_with(samples: &QoiMatrix, u: Utility, tie_tol: f64) -> Result<Ranking> {
    check_tol(tie_tol)?;
    samples.require_rows()?;
    let mut worst = vec![f64::NEG_INFINITY; samples.policies];
    for row in &samples.rows {
        let utils: Vec<f64> = row.iter().map(|&y| u(y)).collect();
        let best = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (w, x) in worst.iter_mut().zip(&utils) {
            *w = w.max(best - x);
        }
    }
    Ok(Ranking::from_values(Rule::MinimaxRegret, worst, tie_tol))
}

pub fn bayes_rank_with(uniform_samples: &QoiMatrix, u: Utility, tie_tol: f64) -> Result<Ranking> {
    check_tol(tie_tol)?;
    uniform_samples.require_rows()?;
    let n = uniform_samples.num_samples() as f64;
    let values = (0..uniform_samples.policies)
        .map(|g| uniform_samples.rows.iter().map(|r| u(r[g])).sum::<f64>() / n)
        .collect();
    Ok(Ranking::from_values(Rule::Bayes, values, tie_tol))
}

pub fn as_if_rank(point_qoi: &[f64], tie_tol: f64) -> Result<Ranking> {
    as_if_rank_with(point_qoi, &linear, tie_tol)
}

pub fn maximin_rank(samples: &QoiMatrix, tie_tol: f64) -> Result<Ranking> {
    maximin_rank_with(samples, &linear, tie_tol)
}

pub fn minimax_regret_rank(samples: &QoiMatrix, tie_tol: f64) -> Result<Ranking> {
    minimax_regret_rank_with(samples, &linear, tie_tol)
}

pub fn bayes_rank(uniform_samples: &QoiMatrix, tie_tol: f64) -> Result<Ranking> {
    bayes_rank_with(uniform_samples, &linear, tie_tol)
}

/// Everything the four rules read.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleInputs {
    pub point_qoi: Vec<f64>,
    /// Quantities at the accepted bootstrap draws.
    pub cs_samples: QoiMatrix,
    /// Quantities at uniform draws from the confidence ellipsoid.
    pub uniform_samples: QoiMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTable {
    pub policies: Vec<String>,
    pub tie_tol: f64,
    pub rule_ranks: BTreeMap<Rule, Vec<usize>>,
    pub rule_values: BTreeMap<Rule, Vec<f64>>,
    pub ties: BTreeMap<Rule, Vec<Vec<usize>>>,
    pub rankings: Vec<Ranking>,
}

impl DecisionTable {
    pub fn ranking(&self, rule: Rule) -> Option<&Ranking> {
        self.rankings.iter().find(|r| r.rule == rule)
    }

    pub fn chosen(&self, rule: Rule) -> Option<Vec<usize>> {
        self.ranking(rule).map(Ranking::chosen)
    }

    /// Rules as rows, policies as columns, competition ranks as entries.
    pub fn write_rank_matrix<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut header = vec!["rule".to_string()];
        header.extend(self.policies.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for r in &self.rankings {
            let mut rec = vec![r.rule.to_string()];
            rec.extend(r.ranks.iter().map(|k| k.to_string()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Io(e.to_string()))
    }
}

pub fn decide(
    policies: &[String],
    inputs: &RuleInputs,
    rules: &[Rule],
    u: Utility,
    tie_tol: f64,
) -> Result<DecisionTable> {
    let n = policies.len();
    if inputs.point_qoi.len() != n
        || inputs.cs_samples.num_policies() != n
        || inputs.uniform_samples.num_policies() != n
    {
        return Err(Error::Dimension(format!("rule inputs do not match {n} policies")));
    }
    let mut rankings = Vec::new();
    for &rule in rules {
        if rankings.iter().any(|r: &Ranking| r.rule == rule) {
            continue;
        }
        rankings.push(match rule {
            Rule::AsIf => as_if_rank_with(&inputs.point_qoi, u, tie_tol)?,
            Rule::Maximin => maximin_rank_with(&inputs.cs_samples, u, tie_tol)?,
            Rule::MinimaxRegret => minimax_regret_rank_with(&inputs.cs_samples, u, tie_tol)?,
            Rule::Bayes => bayes_rank_with(&inputs.uniform_samples, u, tie_tol)?,
        });
    }
    Ok(DecisionTable {
        policies: policies.to_vec(),
        tie_tol,
        rule_ranks: rankings.iter().map(|r| (r.rule, r.order.clone())).collect(),
        rule_values: rankings.iter().map(|r| (r.rule, r.values.clone())).collect(),
        ties: rankings.iter().map(|r| (r.rule, r.ties.clone())).collect(),
        rankings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLevel {
    pub alpha: f64,
    pub acceptance_rate: f64,
    pub table: DecisionTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweep {
    pub levels: Vec<SweepLevel>,
    /// Whether the chosen set of each rule is the same at every alpha.
    pub stable: BTreeMap<Rule, bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Normal draws shared by every alpha.
    pub draws: usize,
    /// Uniform ellipsoid draws for the Bayes rule at each alpha.
    pub uniform_draws: usize,
    pub seed: u64,
    pub tie_tol: f64,
}

/// Full decision pipeline at each alpha in `alphas`. The same normal draws
/// and the same uniform base numbers are used at every level.
pub fn alpha_sweep<F>(
    theta_hat: &[f64],
    sigma_hat: &DMatrix<f64>,
    qoi: F,
    policies: &[String],
    rules: &[Rule],
    cfg: &SweepConfig,
    alphas: &[f64],
) -> Result<AlphaSweep>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let results = bootstrap::cs_bootstrap_sweep(theta_hat, sigma_hat, &qoi, cfg.draws, cfg.seed, alphas)?;
    let mut levels = Vec::with_capacity(results.len());
    for r in &results {
        let uniform_samples = if rules.contains(&Rule::Bayes) {
            let pts = bootstrap::uniform_ellipsoid_sample(theta_hat, sigma_hat, r.alpha, cfg.uniform_draws, cfg.seed)?;
            let rows = evaluate_all(&qoi, &pts)?;
            QoiMatrix::new(rows, policies.len())?
        } else {
            QoiMatrix::new(Vec::new(), policies.len())?
        };
        let inputs = RuleInputs { point_qoi: r.point_qoi.clone(), cs_samples: QoiMatrix::from(r), uniform_samples };
        levels.push(SweepLevel {
            alpha: r.alpha,
            acceptance_rate: r.acceptance_rate,
            table: decide(policies, &inputs, rules, &linear, cfg.tie_tol)?,
        });
    }
    let stable = rules
        .iter()
        .map(|&rule| {
            let first = levels[0].table.chosen(rule);
            (rule, levels.iter().all(|l| l.table.chosen(rule) == first))
        })
        .collect();
    Ok(AlphaSweep { levels, stable })
}

pub(crate) fn evaluate_all<F>(qoi: &F, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    use rayon::prelude::*;
    points.par_iter().map(|x| qoi(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[f64]]) -> QoiMatrix {
        QoiMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn as_if_examples() {
        let r = as_if_rank(&[1.0, 2.0, 3.0], 0.0).unwrap();
        assert_eq!(r.ranks, vec![3, 2, 1]);
        assert_eq!(r.order, vec![2, 1, 0]);
        assert_eq!(as_if_rank(&[5.0], 0.0).unwrap().ranks, vec![1]);
        let toy = as_if_rank(&[3f64.exp(), 20.08], 0.01).unwrap();
        assert_eq!(toy.ranks, vec![1, 1]);
        assert_eq!(toy.ties, vec![vec![0, 1]]);
        assert!(as_if_rank(&[1.0], -1.0).is_err());
    }

    #[test]
    fn ties_group_around_the_leader() {
        // 0.0 and 0.6 are each within 0.5 of 0.3 but not of each other
        let r = as_if_rank(&[0.0, 0.3, 0.6, 0.3], 0.5).unwrap();
        assert_eq!(r.ranks, vec![4, 1, 1, 1]);
        assert_eq!(r.order, vec![1, 2, 3, 0]);
        assert_eq!(r.ties, vec![vec![1, 2, 3]]);
    }

    #[test]
    fn maximin_and_regret_basics() {
        let same = m(&[&[1.0, 1.0], &[3.0, 3.0]]);
        assert_eq!(maximin_rank(&same, 0.0).unwrap().ranks, vec![1, 1]);
        let reg = minimax_regret_rank(&same, 0.0).unwrap();
        assert_eq!(reg.values, vec![0.0, 0.0]);
        assert_eq!(reg.ranks, vec![1, 1]);

        let dom = m(&[&[1.0, 2.0, 0.0], &[4.0, 5.0, 4.5], &[0.0, 0.5, -1.0]]);
        assert_eq!(maximin_rank(&dom, 0.0).unwrap().chosen(), vec![1]);
        let reg = minimax_regret_rank(&dom, 0.0).unwrap();
        assert_eq!(reg.values[1], 0.0);
        assert_eq!(reg.chosen(), vec![1]);

        let empty = QoiMatrix::new(Vec::new(), 2).unwrap();
        assert_eq!(maximin_rank(&empty, 0.0).unwrap_err(), Error::EmptySamples);
        assert_eq!(minimax_regret_rank(&empty, 0.0).unwrap_err(), Error::EmptySamples);
        assert_eq!(bayes_rank(&empty, 0.0).unwrap_err(), Error::EmptySamples);
        assert!(QoiMatrix::new(vec![vec![1.0]], 2).is_err());
    }

    #[test]
    fn regret_needs_joint_rows() {
        // each column has the same marginal, but the pairing decides the regret
        let joint = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let aligned = m(&[&[0.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(minimax_regret_rank(&joint, 0.0).unwrap().values, vec![1.0, 1.0]);
        assert_eq!(minimax_regret_rank(&aligned, 0.0).unwrap().values, vec![0.0, 0.0]);
    }

    #[test]
    fn bayes_of_constants_matches_as_if() {
        let point = [2.0, 7.0, 7.0, -1.0];
        let rows = vec![point.to_vec(); 5];
        let b = bayes_rank(&QoiMatrix::from_rows(rows).unwrap(), 0.0).unwrap();
        let a = as_if_rank(&point, 0.0).unwrap();
        assert_eq!(b.ranks, a.ranks);
        assert_eq!(b.order, a.order);
    }

    #[test]
    fn decision_table_layout() {
        let inputs = RuleInputs {
            point_qoi: vec![1.0, 2.0],
            cs_samples: m(&[&[0.0, 3.0], &[2.0, 1.0]]),
            uniform_samples: m(&[&[1.0, 2.0]]),
        };
        let names = vec!["a".to_string(), "b".to_string()];
        let t = decide(&names, &inputs, &Rule::ALL, &linear, 0.0).unwrap();
        assert_eq!(t.rule_ranks[&Rule::AsIf], vec![1, 0]);
        assert_eq!(t.rule_values[&Rule::Maximin], vec![0.0, 1.0]);
        let mut buf = Vec::new();
        t.write_rank_matrix(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rule,a,b\nas_if,2,1\nmaximin,2,1\nminimax_regret,2,1\nbayes,2,1\n");
        let json = serde_json::to_string(&t).unwrap();
        assert!(json.contains("\"minimax_regret\""));
        assert!(decide(&names[..1], &inputs, &Rule::ALL, &linear, 0.0).is_err());
    }

    #[test]
    fn rule_names_round_trip() {
        for r in Rule::ALL {
            assert_eq!(r.name().parse::<Rule>().unwrap(), r);
        }
        assert!("median".parse::<Rule>().is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..5, 1usize..20).prop_flat_map(|(g, n)| prop::collection::vec(prop::collection::vec(-50.0f64..50.0, g), n))
    }

    fn is_permutation(order: &[usize]) -> bool {
        let mut seen = order.to_vec();
        seen.sort_unstable();
        seen.iter().enumerate().all(|(i, &v)| i == v)
    }

    proptest! {
        #[test]
        fn rankings_are_consistent_permutations(rows in matrix_strategy(), tol in 0.0f64..1.0) {
            let q = QoiMatrix::from_rows(rows.clone()).unwrap();
            for r in [
                as_if_rank(&rows[0], tol).unwrap(),
                maximin_rank(&q, tol).unwrap(),
                minimax_regret_rank(&q, tol).unwrap(),
                bayes_rank(&q, tol).unwrap(),
            ] {
                prop_assert!(is_permutation(&r.order));
                let sign = if r.rule.higher_is_better() { 1.0 } else { -1.0 };
                for w in r.order.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    prop_assert!(r.ranks[a] <= r.ranks[b]);
                    if r.ranks[a] < r.ranks[b] {
                        prop_assert!(sign * (r.values[a] - r.values[b]) >= 0.0);
                    }
                }
            }
        }

        #[test]
        fn affine_utility_keeps_rankings(rows in matrix_strategy(), scale in 0.1f64..10.0, shift in -100.0f64..100.0) {
            let q = QoiMatrix::from_rows(rows.clone()).unwrap();
            let u = move |x: f64| scale * x + shift;
            // a zero tolerance would let rounding split exact ties, so use a tiny one
            let tol = 1e-9;
            let pairs = [
                (as_if_rank(&rows[0], tol).unwrap(), as_if_rank_with(&rows[0], &u, tol * scale).unwrap()),
                (maximin_rank(&q, tol).unwrap(), maximin_rank_with(&q, &u, tol * scale).unwrap()),
                (minimax_regret_rank(&q, tol).unwrap(), minimax_regret_rank_with(&q, &u, tol * scale).unwrap()),
                (bayes_rank(&q, tol).unwrap(), bayes_rank_with(&q, &u, tol * scale).unwrap()),
            ];
            for (a, b) in pairs {
                prop_assert_eq!(a.ranks, b.ranks, "{}", a.rule);
            }
        }
    }
}
