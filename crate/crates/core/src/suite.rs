//! The exact verification grid behind `verify-discrete`: optimality of the
//! bang-bang rules, the key inequality and its corollary, and the
//! reflection / time-reversal identities.

use serde::Serialize;

use crate::dpsolver::{predicts_tau0, solve, tie_class_values};
use crate::error::Result;
use crate::grids;
use crate::par::{map_slice, Execution};
use crate::report::Expectation;
use crate::rewards::{classify, Probe, RewardSpec};
use crate::scalar::{format_rational, Rational};
use crate::walkdist::{
    check_corollary, check_key_inequality, expected_corollary, expected_key, reflection_check,
    time_reversal_check, InequalityReport, WalkParams,
};

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub check: &'static str,
    pub reward: String,
    pub p: String,
    pub n: usize,
    pub i: Option<u64>,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SummaryRow {
    pub check: &'static str,
    pub reward: String,
    pub cells: usize,
    pub strict: usize,
    pub equal: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiscreteVerification {
    pub grid_version: &'static str,
    pub passed: bool,
    pub summary: Vec<SummaryRow>,
    pub failures: Vec<Failure>,
}

struct Tally {
    rows: Vec<SummaryRow>,
    failures: Vec<Failure>,
}

impl Tally {
    fn new() -> Self {
        Self { rows: Vec::new(), failures: Vec::new() }
    }

    fn row(&mut self, check: &'static str, reward: &str) -> usize {
        match self.rows.iter().position(|r| r.check == check && r.reward == reward) {
            Some(i) => i,
            None => {
                self.rows.push(SummaryRow {
                    check,
                    reward: reward.to_string(),
                    ..Default::default()
                });
                self.rows.len() - 1
            }
        }
    }

    fn record(&mut self, check: &'static str, reward: &str, ok: bool, fail: impl FnOnce() -> Failure) {
        let r = self.row(check, reward);
        self.rows[r].cells += 1;
        if !ok {
            self.rows[r].failed += 1;
            self.failures.push(fail());
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn inequality(&mut self, check: &'static str, name: &str, p: &Rational, n: usize, i: u64, rep: &InequalityReport, e: Expectation) {
        let r = self.row(check, name);
        self.rows[r].strict += usize::from(rep.strict);
        self.rows[r].equal += usize::from(rep.equal());
        self.record(check, name, rep.meets(e), || Failure {
            check,
            reward: name.to_string(),
            p: format_rational(p),
            n,
            i: Some(i),
            detail: serde_json::json!({ "expected": e, "report": rep }),
        });
    }

    fn merge(&mut self, other: Tally) {
        for row in other.rows {
            let r = self.row(row.check, &row.reward);
            let t = &mut self.rows[r];
            t.cells += row.cells;
            t.strict += row.strict;
            t.equal += row.equal;
            t.failed += row.failed;
        }
        self.failures.extend(other.failures);
    }
}

/// Optimal value against the predicted bang-bang rule for `N = 1..=n_max`,
/// and at `p = 1/2` every tie-class rule against the optimum.
fn optimality_cell(name: &str, f: &RewardSpec, p: &Rational, n_max: usize) -> Result<Tally> {
    let mut t = Tally::new();
    for n in 1..=n_max {
        let w = WalkParams::new(p.clone(), n)?;
        let r = solve(&w, f)?;
        let predicted = if predicts_tau0(&w) { &r.value_tau0 } else { &r.value_tau_n };
        t.record("bang_bang_optimal", name, r.optimal_value == *predicted, || Failure {
            check: "bang_bang_optimal",
            reward: name.to_string(),
            p: format_rational(p),
            n,
            i: None,
            detail: serde_json::to_value(&r).unwrap_or_default(),
        });
        if *p == crate::scalar::ratio(1, 2) {
            let values = tie_class_values::<Rational>(&w, f)?;
            let bad = values.iter().position(|v| *v != r.optimal_value);
            t.record("tie_class_optimal", name, bad.is_none(), || Failure {
                check: "tie_class_optimal",
                reward: name.to_string(),
                p: format_rational(p),
                n,
                i: None,
                detail: serde_json::json!({ "mask": bad }),
            });
        }
    }
    Ok(t)
}

/// Key inequality and corollary for `n <= n_max`, `i <= i_max`, applied to
/// the walk with up-probability `max(p, 1-p)`.
fn inequality_cell(name: &str, f: &RewardSpec, p: &Rational, n_max: usize, i_max: u64) -> Result<Tally> {
    let mut t = Tally::new();
    let flags = classify(f, &Probe::Discrete(f.upper().unwrap_or(grids::TABLE_UPPER)));
    let base = WalkParams::new(p.clone(), 0)?;
    let up = if predicts_tau0(&base) { base.swapped() } else { base };
    for n in 0..=n_max {
        let w = up.with_horizon(n);
        for i in 0..=i_max {
            let key = check_key_inequality(&w, f, i)?;
            t.inequality("key_inequality", name, w.p(), n, i, &key, expected_key(w.p(), n, i, &flags));
            let cor = check_corollary(&w, f, i)?;
            t.inequality("corollary", name, w.p(), n, i, &cor, expected_corollary(w.p(), n, i, &flags));
        }
    }
    Ok(t)
}

fn identity_cell(p: &Rational, n_max: usize) -> Result<Tally> {
    let mut t = Tally::new();
    for n in 0..=n_max {
        let w = WalkParams::new(p.clone(), n)?;
        for (check, ok) in [("reflection", reflection_check(&w)), ("time_reversal", time_reversal_check(&w))] {
            t.record(check, "-", ok, || Failure {
                check,
                reward: "-".into(),
                p: format_rational(p),
                n,
                i: None,
                detail: serde_json::Value::Null,
            });
        }
    }
    Ok(t)
}

/// Runs the versioned default grid.
pub fn verify_discrete(exec: Execution) -> Result<DiscreteVerification> {
    let families = grids::discrete_families();
    let ps = grids::p_grid();
    let mut cells = Vec::new();
    for (fi, _) in families.iter().enumerate() {
        for (pi, _) in ps.iter().enumerate() {
            cells.push((0u8, fi, pi));
            cells.push((1u8, fi, pi));
        }
    }
    for (pi, _) in ps.iter().enumerate() {
        cells.push((2u8, 0, pi));
    }
    let parts = map_slice(exec, &cells, |&(kind, fi, pi)| match kind {
        0 => optimality_cell(families[fi].0, &families[fi].1, &ps[pi], grids::OPTIMALITY_N_MAX),
        1 => inequality_cell(families[fi].0, &families[fi].1, &ps[pi], grids::INEQUALITY_N_MAX, grids::INEQUALITY_I_MAX),
        _ => identity_cell(&ps[pi], grids::IDENTITY_N_MAX),
    });
    let mut all = Tally::new();
    for part in parts {
        all.merge(part?);
    }
    Ok(DiscreteVerification {
        grid_version: grids::GRID_VERSION,
        passed: all.failures.is_empty(),
        summary: all.rows,
        failures: all.failures,
    })
}
