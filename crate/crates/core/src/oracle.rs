//! Brute-force ground truth for small horizons: every history-dependent
//! stopping rule on every one of the `2^N` paths.
//!
//! A rule marks each node of the depth-`N` binary history tree (prefixes of
//! length `< N`) as stop or continue, giving `2^(2^N - 1)` rules. Rules that
//! induce the same stopping index on every path are identified; counts of
//! optimal rules are over these classes.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::dpsolver::{self, SolveReport, Uniqueness};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Execution};
use crate::report::ser_rational;
use crate::rewards::RewardSpec;
use crate::scalar::Rational;
use crate::walkdist::WalkParams;

pub const DEFAULT_MAX_N: usize = 4;
/// Stopping maps are packed 3 bits per path into a `u128`.
pub const HARD_MAX_N: usize = 5;

/// One path of the walk: steps are bits of the path index, bit `j` set
/// meaning step `j + 1` is up.
#[derive(Debug, Clone)]
struct Path {
    s: Vec<i64>,
    z: Vec<usize>,
    max: i64,
    prob: Rational,
}

fn paths(w: &WalkParams) -> Vec<Path> {
    let n = w.n();
    let q = w.q();
    (0..1usize << n)
        .map(|bits| {
            let mut s = vec![0i64];
            let mut z = vec![0usize];
            let (mut m, mut prob) = (0i64, Rational::one());
            for j in 0..n {
                let up = bits >> j & 1 == 1;
                let next = s[j] + if up { 1 } else { -1 };
                prob *= if up { w.p() } else { &q };
                m = m.max(next);
                s.push(next);
                z.push((m - next) as usize);
            }
            Path { s, z, max: m, prob }
        })
        .collect()
}

/// Heap index of the history node after `k` steps of path `bits`.
fn node(k: usize, bits: usize) -> usize {
    (1 << k) - 1 + (bits & ((1 << k) - 1))
}

/// A history-dependent rule: bit `node` set means stop at that node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct HistoryRule {
    pub horizon: usize,
    pub stop_nodes: u64,
}

impl HistoryRule {
    pub fn stops_at(&self, node: usize) -> bool {
        self.stop_nodes >> node & 1 == 1
    }

    /// Stopping index on every path: first stop node along the path, else `N`.
    pub fn stopping_map(&self) -> Vec<u8> {
        let n = self.horizon;
        (0..1usize << n)
            .map(|bits| {
                (0..n)
                    .find(|&k| self.stops_at(node(k, bits)))
                    .unwrap_or(n) as u8
            })
            .collect()
    }

    pub fn count(horizon: usize) -> u64 {
        1u64 << ((1u64 << horizon) - 1)
    }
}

fn pack(map: &[u8]) -> u128 {
    map.iter()
        .enumerate()
        .fold(0u128, |acc, (i, &t)| acc | (t as u128) << (3 * i))
}

#[derive(Debug, Clone, Serialize)]
pub struct RuleClass {
    /// Stopping index per path.
    pub stopping: Vec<u8>,
    /// Smallest member rule.
    pub representative: HistoryRule,
    pub n_rules: u64,
    #[serde(serialize_with = "ser_rational")]
    pub value: Rational,
}

#[derive(Debug, Clone, Serialize)]
pub struct Enumeration {
    pub horizon: usize,
    #[serde(serialize_with = "ser_rational")]
    pub optimum: Rational,
    pub n_rules_total: u64,
    pub n_classes: usize,
    pub n_optimal_classes: usize,
    pub n_optimal_rules: u64,
    pub sample_optimal: Vec<RuleClass>,
    #[serde(skip)]
    pub classes: Vec<RuleClass>,
}

impl Enumeration {
    pub fn optimal_classes(&self) -> impl Iterator<Item = &RuleClass> {
        self.classes.iter().filter(|c| c.value == self.optimum)
    }
}

const SAMPLE: usize = 8;

fn check_size(w: &WalkParams, max_n: usize) -> Result<()> {
    let max = max_n.min(HARD_MAX_N);
    if w.n() > max {
        return Err(Error::OracleTooLarge { n: w.n(), max });
    }
    Ok(())
}

/// Exhaustive maximum of `E[f(M_N - S_tau)]` over all history rules.
pub fn enumerate_optimum(
    w: &WalkParams,
    f: &RewardSpec,
    max_n: usize,
    exec: Execution,
) -> Result<Enumeration> {
    check_size(w, max_n)?;
    let n = w.n();
    let all = paths(w);
    // f(M_N - S_k) on every path and time.
    let payoff: Vec<Vec<Rational>> = all
        .iter()
        .map(|p| {
            p.s.iter()
                .map(|s| f.exact((p.max - s) as u64))
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .collect::<std::result::Result<_, _>>()?;

    let total = HistoryRule::count(n);
    let chunks = 64u64.min(total);
    let per_chunk = total.div_ceil(chunks);
    let partial = map_indexed(exec, chunks as usize, |c| {
        let mut local: BTreeMap<u128, (u64, u64, Vec<u8>)> = BTreeMap::new();
        let lo = c as u64 * per_chunk;
        let hi = (lo + per_chunk).min(total);
        for mask in lo..hi {
            let rule = HistoryRule { horizon: n, stop_nodes: mask };
            let map = rule.stopping_map();
            local
                .entry(pack(&map))
                .and_modify(|e| e.0 += 1)
                .or_insert((1, mask, map));
        }
        local
    });
    let mut merged: BTreeMap<u128, (u64, u64, Vec<u8>)> = BTreeMap::new();
    for local in partial {
        for (key, (count, rep, map)) in local {
            merged
                .entry(key)
                .and_modify(|e| {
                    e.0 += count;
                    e.1 = e.1.min(rep);
                })
                .or_insert((count, rep, map));
        }
    }

    let classes: Vec<RuleClass> = merged
        .into_values()
        .map(|(n_rules, rep, stopping)| {
            let value = all
                .iter()
                .zip(&payoff)
                .zip(&stopping)
                .fold(Rational::zero(), |acc, ((p, pay), &t)| acc + &p.prob * &pay[t as usize]);
            RuleClass {
                stopping,
                representative: HistoryRule { horizon: n, stop_nodes: rep },
                n_rules,
                value,
            }
        })
        .collect();
    let optimum = classes
        .iter()
        .map(|c| &c.value)
        .max()
        .cloned()
        .expect("at least one rule");
    let optimal: Vec<&RuleClass> = classes.iter().filter(|c| c.value == optimum).collect();
    Ok(Enumeration {
        horizon: n,
        n_rules_total: total,
        n_classes: classes.len(),
        n_optimal_classes: optimal.len(),
        n_optimal_rules: optimal.iter().map(|c| c.n_rules).sum(),
        sample_optimal: optimal.iter().take(SAMPLE).map(|c| (*c).clone()).collect(),
        optimum,
        classes,
    })
}

/// Whether the backward-induction tables permit every action the class
/// takes on every path.
fn dp_permits(dp: &SolveReport<Rational>, all: &[Path], class: &RuleClass) -> bool {
    all.iter().zip(&class.stopping).all(|(p, &t)| {
        let t = t as usize;
        (0..t).all(|k| dp.allows_continue(k, p.z[k])) && dp.allows_stop(t, p.z[t])
    })
}

fn stops_at_max_or_horizon(all: &[Path], class: &RuleClass, n: usize) -> bool {
    all.iter()
        .zip(&class.stopping)
        .all(|(p, &t)| t as usize == n || p.z[t as usize] == 0)
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossValidation {
    #[serde(serialize_with = "ser_rational")]
    pub optimum: Rational,
    pub n_rules_total: u64,
    pub n_classes: usize,
    pub n_optimal_classes: usize,
    pub dp_match: bool,
    pub classification: Uniqueness,
    /// Oracle-optimal classes are exactly those the DP permits.
    pub optimal_set_match: bool,
    /// The optimal set has the shape the classification claims.
    pub classification_consistent: bool,
}

impl CrossValidation {
    pub fn passed(&self) -> bool {
        self.dp_match && self.optimal_set_match && self.classification_consistent
    }
}

/// Oracle against backward induction: same optimum, same optimal set, and
/// an optimal set shaped as the uniqueness class says.
pub fn cross_validate_report(
    w: &WalkParams,
    f: &RewardSpec,
    max_n: usize,
    exec: Execution,
) -> Result<CrossValidation> {
    let en = enumerate_optimum(w, f, max_n, exec)?;
    let dp = dpsolver::solve(w, f)?;
    let all = paths(w);
    let n = w.n();

    let optimal_set_match = en
        .classes
        .iter()
        .all(|c| (c.value == en.optimum) == dp_permits(&dp, &all, c));

    let optimal: Vec<&RuleClass> = en.optimal_classes().collect();
    let classification_consistent = match dp.unique {
        Uniqueness::UniqueTau0 => optimal.len() == 1 && optimal[0].stopping.iter().all(|&t| t == 0),
        Uniqueness::UniqueTauN => {
            optimal.len() == 1 && optimal[0].stopping.iter().all(|&t| t as usize == n)
        }
        Uniqueness::TieClass => {
            let expected: BTreeSet<&Vec<u8>> = en
                .classes
                .iter()
                .filter(|c| stops_at_max_or_horizon(&all, c, n))
                .map(|c| &c.stopping)
                .collect();
            let got: BTreeSet<&Vec<u8>> = optimal.iter().map(|c| &c.stopping).collect();
            expected == got
        }
        Uniqueness::NotUnique => optimal.len() > 1,
        Uniqueness::Unknown => optimal.len() == 1,
    };

    Ok(CrossValidation {
        dp_match: en.optimum == dp.optimal_value,
        optimum: en.optimum,
        n_rules_total: en.n_rules_total,
        n_classes: en.n_classes,
        n_optimal_classes: en.n_optimal_classes,
        classification: dp.unique,
        optimal_set_match,
        classification_consistent,
    })
}

pub fn cross_validate(w: &WalkParams, f: &RewardSpec) -> Result<bool> {
    Ok(cross_validate_report(w, f, DEFAULT_MAX_N, Execution::default())?.passed())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, ratio};

    fn walk(p: Rational, n: usize) -> WalkParams {
        WalkParams::new(p, n).unwrap()
    }

    fn run(p: Rational, n: usize, f: &RewardSpec) -> Enumeration {
        enumerate_optimum(&walk(p, n), f, DEFAULT_MAX_N, Execution::default()).unwrap()
    }

    #[test]
    fn class_counts() {
        // c(0) = 1, c(d) = 1 + c(d-1)^2
        let f = RewardSpec::geometric(ratio(1, 2)).unwrap();
        let counts: Vec<usize> = (0..=4).map(|n| run(ratio(1, 2), n, &f).n_classes).collect();
        assert_eq!(counts, vec![1, 2, 5, 26, 677]);
        assert_eq!(run(ratio(1, 2), 4, &f).n_rules_total, 32768);
    }

    #[test]
    fn one_step_rules_tie_for_fair_walk() {
        let f = RewardSpec::geometric(ratio(1, 2)).unwrap();
        let en = run(ratio(1, 2), 1, &f);
        // tau = 0: f(M_1) in {f(1), f(0)}; tau = 1: f(Z_1) in {f(0), f(1)}
        assert_eq!(en.optimum, ratio(3, 4));
        assert_eq!(en.n_optimal_classes, 2);
    }

    #[test]
    fn counterexample_optimum() {
        let f = RewardSpec::table_i64(&[1, 1, 0]);
        let en = run(ratio(1, 3), 2, &f);
        assert_eq!(en.optimum, int(1));
        let stop_at_one = vec![1u8; 4];
        assert!(en.optimal_classes().any(|c| c.stopping == stop_at_one));
    }

    #[test]
    fn favourable_walk_unique_never_stop() {
        let w = walk(ratio(3, 4), 3);
        let f = RewardSpec::geometric(ratio(1, 2)).unwrap();
        let en = enumerate_optimum(&w, &f, DEFAULT_MAX_N, Execution::default()).unwrap();
        assert_eq!(en.optimum, dpsolver::solve(&w, &f).unwrap().value_tau_n);
        assert_eq!(en.n_optimal_classes, 1);
        assert!(en.sample_optimal[0].stopping.iter().all(|&t| t == 3));
    }

    #[test]
    fn cross_validation_examples() {
        let geo = RewardSpec::geometric(ratio(1, 2)).unwrap();
        assert!(cross_validate(&walk(ratio(1, 3), 3), &geo).unwrap());

        let r = cross_validate_report(&walk(ratio(1, 2), 2), &RewardSpec::indicator_top(), 4, Execution::default()).unwrap();
        assert!(r.passed());
        assert_eq!(r.classification, Uniqueness::TieClass);

        let lin = RewardSpec::linear(int(2));
        let r = cross_validate_report(&walk(ratio(1, 2), 2), &lin, 4, Execution::default()).unwrap();
        assert!(r.passed());
        assert_eq!(r.classification, Uniqueness::NotUnique);
        assert_eq!(r.n_optimal_classes, r.n_classes);
    }

    #[test]
    fn refuses_large_horizons() {
        let f = RewardSpec::indicator_top();
        let r = enumerate_optimum(&walk(ratio(1, 2), 5), &f, DEFAULT_MAX_N, Execution::default());
        assert!(matches!(r, Err(Error::OracleTooLarge { n: 5, max: 4 })));
        let r = enumerate_optimum(&walk(ratio(1, 2), 6), &f, 10, Execution::default());
        assert!(matches!(r, Err(Error::OracleTooLarge { n: 6, max: 5 })));
    }

    #[test]
    fn oracle_dominates_explicit_policies() {
        let w = walk(ratio(2, 5), 4);
        let f = RewardSpec::table_i64(&[5, 3, 2, 2, 0]);
        let en = enumerate_optimum(&w, &f, 4, Execution::default()).unwrap();
        for pol in [
            dpsolver::PolicyTable::stop_immediately(4),
            dpsolver::PolicyTable::never_stop(4),
            dpsolver::PolicyTable::stop_at_max_after(4, 2),
        ] {
            assert!(en.optimum >= dpsolver::evaluate_policy(&w, &f, &pol).unwrap());
        }
    }
}
