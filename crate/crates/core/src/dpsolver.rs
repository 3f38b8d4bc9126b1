//! Backward induction for `sup_tau E[f(M_N - S_tau)]` on the drawdown chain.
//!
//! Stopping at time `k` with drawdown `z` is worth `G(N-k, z)`, so the
//! problem reduces to a Markov stopping problem for `Z_k = M_k - S_k`:
//!
//! ```text
//! V_N(z) = f(z)
//! V_k(z) = max( G(N-k, z),  p V_{k+1}(z-1 v 0) + q V_{k+1}(z+1) )
//! ```
//!
//! Works for any `f`; convexity is only needed for the bang-bang structure
//! of the answer.

use std::collections::VecDeque;
use std::io::{Read, Write};

use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::report::{ser_rational, ser_scalar};
use crate::rewards::RewardSpec;
use crate::scalar::{Rational, Scalar};
use crate::walkdist::{ValueTables, WalkParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Stop,
    Continue,
    /// Stopping and continuing are worth exactly the same. Acts as `Stop`.
    Tie,
}

impl Decision {
    pub fn stops(self) -> bool {
        matches!(self, Decision::Stop | Decision::Tie)
    }

    fn as_str(self) -> &'static str {
        match self {
            Decision::Stop => "STOP",
            Decision::Continue => "CONTINUE",
            Decision::Tie => "TIE",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "STOP" => Some(Decision::Stop),
            "CONTINUE" => Some(Decision::Continue),
            "TIE" => Some(Decision::Tie),
            _ => None,
        }
    }
}

/// Drawdown chain: from `z > 0` to `z-1` w.p. `p` and `z+1` w.p. `q`; from
/// `0` it stays at `0` w.p. `p`.
#[derive(Debug, Clone)]
pub struct ZChain<S> {
    up: S,
    down: S,
}

impl<S: Scalar> ZChain<S> {
    pub fn new(w: &WalkParams) -> Self {
        Self {
            up: S::from_rational(w.p()),
            down: S::from_rational(&w.q()),
        }
    }

    pub fn transitions(&self, z: usize) -> [(usize, S); 2] {
        [(z.saturating_sub(1), self.up.clone()), (z + 1, self.down.clone())]
    }

    /// One step of the chain applied to a distribution over `0..len`.
    pub fn push_forward(&self, dist: &[S]) -> Vec<S> {
        let mut next = vec![S::zero(); dist.len() + 1];
        for (z, mass) in dist.iter().enumerate() {
            if mass.is_zero() {
                continue;
            }
            for (to, pr) in self.transitions(z) {
                next[to] = next[to].clone() + mass.clone() * pr;
            }
        }
        next
    }
}

/// Stop/continue decision per state `(k, z)`, `0 <= z <= k <= N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolicyTable {
    horizon: usize,
    rows: Vec<Vec<Decision>>,
}

impl PolicyTable {
    pub fn new(horizon: usize, rows: Vec<Vec<Decision>>) -> Result<Self> {
        if rows.len() != horizon + 1 {
            return Err(Error::Policy(format!(
                "expected {} rows, got {}",
                horizon + 1,
                rows.len()
            )));
        }
        for (k, row) in rows.iter().enumerate() {
            if row.len() != k + 1 {
                return Err(Error::Policy(format!(
                    "row {k} has {} states, expected {}",
                    row.len(),
                    k + 1
                )));
            }
        }
        if rows[horizon].iter().any(|d| *d != Decision::Stop) {
            return Err(Error::Policy("every state at the horizon must STOP".into()));
        }
        Ok(Self { horizon, rows })
    }

    /// Builds a table from a rule; the horizon row is forced to `Stop`.
    pub fn from_fn(horizon: usize, mut rule: impl FnMut(usize, usize) -> Decision) -> Self {
        let rows = (0..=horizon)
            .map(|k| {
                (0..=k)
                    .map(|z| if k == horizon { Decision::Stop } else { rule(k, z) })
                    .collect()
            })
            .collect();
        Self { horizon, rows }
    }

    /// `tau = 0`.
    pub fn stop_immediately(horizon: usize) -> Self {
        Self::from_fn(horizon, |_, _| Decision::Stop)
    }

    /// `tau = N`.
    pub fn never_stop(horizon: usize) -> Self {
        Self::from_fn(horizon, |_, _| Decision::Continue)
    }

    /// Stop the first time the walk sits at its running maximum (`z = 0`),
    /// including time 0; so this is `tau = 0`. Use
    /// [`PolicyTable::stop_at_max_after`] to skip the first `k0` steps.
    pub fn stop_at_running_max(horizon: usize) -> Self {
        Self::stop_at_max_after(horizon, 0)
    }

    /// Continue up to time `k0`, then stop at the first `z = 0` (or at `N`).
    pub fn stop_at_max_after(horizon: usize, k0: usize) -> Self {
        Self::from_fn(horizon, |k, z| {
            if k >= k0 && z == 0 {
                Decision::Stop
            } else {
                Decision::Continue
            }
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn decision(&self, k: usize, z: usize) -> Decision {
        self.rows[k][z]
    }

    pub fn stops_at(&self, k: usize, z: usize) -> bool {
        self.rows[k][z].stops()
    }

    pub fn rows(&self) -> &[Vec<Decision>] {
        &self.rows
    }

    /// CSV rows `k,z,decision`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["k", "z", "decision"])?;
        for (k, row) in self.rows.iter().enumerate() {
            for (z, d) in row.iter().enumerate() {
                w.write_record([k.to_string(), z.to_string(), d.as_str().to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`PolicyTable::write_csv`]. Every state must
    /// be listed exactly once.
    pub fn read_csv<R: Read>(horizon: usize, input: R) -> Result<Self> {
        let mut rows: Vec<Vec<Option<Decision>>> = (0..=horizon).map(|k| vec![None; k + 1]).collect();
        let mut r = csv::Reader::from_reader(input);
        for rec in r.records() {
            let rec = rec?;
            let bad = || Error::Policy(format!("bad row {:?}", rec.iter().collect::<Vec<_>>()));
            if rec.len() != 3 {
                return Err(bad());
            }
            let k: usize = rec[0].trim().parse().map_err(|_| bad())?;
            let z: usize = rec[1].trim().parse().map_err(|_| bad())?;
            let d = Decision::parse(&rec[2]).ok_or_else(bad)?;
            let slot = rows
                .get_mut(k)
                .and_then(|row| row.get_mut(z))
                .ok_or_else(bad)?;
            if slot.replace(d).is_some() {
                return Err(Error::Policy(format!("state ({k},{z}) listed twice")));
            }
        }
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(k, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(z, d)| d.ok_or_else(|| Error::Policy(format!("state ({k},{z}) missing"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(horizon, rows)
    }
}

impl Serialize for PolicyTable {
    fn serialize<Z: serde::Serializer>(&self, s: Z) -> Result<Z::Ok, Z::Error> {
        #[derive(Serialize)]
        struct Row<'a> {
            k: usize,
            decisions: &'a [Decision],
        }
        s.collect_seq(
            self.rows
                .iter()
                .enumerate()
                .map(|(k, r)| Row { k, decisions: r }),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Uniqueness {
    /// Stopping at once is strictly better than continuing at the root.
    UniqueTau0,
    /// Continuing is strictly better at every state before the horizon.
    UniqueTauN,
    /// Ties exactly on `{(k, 0) : k < N}` and strict continuation elsewhere:
    /// the optimal rules are those with `S_tau = M_tau` or `tau = N`.
    TieClass,
    /// A tie is reachable under some optimal rule.
    NotUnique,
    /// Floating-point mode, or a unique optimal rule outside the classes
    /// above.
    Unknown,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport<S: Scalar> {
    pub horizon: usize,
    #[serde(serialize_with = "ser_rational")]
    pub p: Rational,
    #[serde(serialize_with = "ser_scalar")]
    pub optimal_value: S,
    pub policy: PolicyTable,
    /// `E[f(M_N)]`.
    #[serde(serialize_with = "ser_scalar")]
    pub value_tau0: S,
    /// `E[f(M_N - S_N)]`.
    #[serde(rename = "value_tauN", serialize_with = "ser_scalar")]
    pub value_tau_n: S,
    pub unique: Uniqueness,
    pub tie_states: Vec<(usize, usize)>,
    #[serde(skip)]
    pub values: Vec<Vec<S>>,
    /// `G(N-k, z)` for `k <= N`.
    #[serde(skip)]
    pub stop_values: Vec<Vec<S>>,
    /// Continuation values for `k < N`.
    #[serde(skip)]
    pub continue_values: Vec<Vec<S>>,
}

impl<S: Scalar> SolveReport<S> {
    pub fn allows_stop(&self, k: usize, z: usize) -> bool {
        k == self.horizon || self.stop_values[k][z] >= self.continue_values[k][z]
    }

    pub fn allows_continue(&self, k: usize, z: usize) -> bool {
        k < self.horizon && self.continue_values[k][z] >= self.stop_values[k][z]
    }
}

fn check_domain(w: &WalkParams, f: &RewardSpec) -> Result<()> {
    match f.upper() {
        Some(upper) if (upper as usize) < w.n() => Err(Error::Config(format!(
            "reward defined on {{0..{upper}}} but horizon is {}",
            w.n()
        ))),
        _ => Ok(()),
    }
}

/// Exact solve.
pub fn solve(w: &WalkParams, f: &RewardSpec) -> Result<SolveReport<Rational>> {
    solve_in::<Rational>(w, f)
}

/// Solve in any scalar mode. Ties are only reported in exact mode; in
/// floating mode equal values resolve to `Stop`.
pub fn solve_in<S: Scalar>(w: &WalkParams, f: &RewardSpec) -> Result<SolveReport<S>> {
    check_domain(w, f)?;
    let n = w.n();
    let tables = ValueTables::<S>::new(w);
    let chain = ZChain::<S>::new(w);

    let stop_values = (0..=n)
        .map(|k| (0..=k).map(|z| tables.g(f, n - k, z as u64)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let mut values: Vec<Vec<S>> = vec![Vec::new(); n + 1];
    let mut continue_values: Vec<Vec<S>> = vec![Vec::new(); n];
    let mut rows: Vec<Vec<Decision>> = vec![Vec::new(); n + 1];
    values[n] = stop_values[n].clone();
    rows[n] = vec![Decision::Stop; n + 1];
    for k in (0..n).rev() {
        for z in 0..=k {
            let cont = chain
                .transitions(z)
                .into_iter()
                .fold(S::zero(), |acc, (to, pr)| acc + pr * values[k + 1][to].clone());
            let stop = stop_values[k][z].clone();
            let (decision, best) = if stop > cont {
                (Decision::Stop, stop)
            } else if cont > stop {
                (Decision::Continue, cont.clone())
            } else if S::EXACT {
                (Decision::Tie, stop)
            } else {
                (Decision::Stop, stop)
            };
            rows[k].push(decision);
            values[k].push(best);
            continue_values[k].push(cont);
        }
    }

    let law = tables.law(n);
    let value_tau_n = law.expect(|m, l| f.value::<S>((m as i64 - l) as u64))?;
    let mut report = SolveReport {
        horizon: n,
        p: w.p().clone(),
        optimal_value: values[0][0].clone(),
        policy: PolicyTable { horizon: n, rows },
        value_tau0: stop_values[0][0].clone(),
        value_tau_n,
        unique: Uniqueness::Unknown,
        tie_states: Vec::new(),
        values,
        stop_values,
        continue_values,
    };
    let (unique, ties) = classify_uniqueness(&report);
    report.unique = unique;
    report.tie_states = ties;
    Ok(report)
}

fn classify_uniqueness<S: Scalar>(r: &SolveReport<S>) -> (Uniqueness, Vec<(usize, usize)>) {
    if !S::EXACT {
        return (Uniqueness::Unknown, Vec::new());
    }
    let n = r.horizon;
    let ties: Vec<(usize, usize)> = (0..n)
        .flat_map(|k| (0..=k).map(move |z| (k, z)))
        .filter(|&(k, z)| r.policy.decision(k, z) == Decision::Tie)
        .collect();
    let strictly_continue =
        |k: usize, z: usize| r.policy.decision(k, z) == Decision::Continue;

    if n == 0 || r.policy.decision(0, 0) == Decision::Stop {
        return (Uniqueness::UniqueTau0, ties);
    }
    let states = || (0..n).flat_map(|k| (0..=k).map(move |z| (k, z)));
    if states().all(|(k, z)| strictly_continue(k, z)) {
        return (Uniqueness::UniqueTauN, ties);
    }
    if states().all(|(k, z)| {
        if z == 0 {
            r.policy.decision(k, z) == Decision::Tie
        } else {
            strictly_continue(k, z)
        }
    }) {
        return (Uniqueness::TieClass, ties);
    }
    // States reachable while following some optimal rule.
    let mut seen: Vec<Vec<bool>> = (0..=n).map(|k| vec![false; k + 1]).collect();
    let mut queue = VecDeque::from([(0usize, 0usize)]);
    seen[0][0] = true;
    let mut reachable_tie = false;
    while let Some((k, z)) = queue.pop_front() {
        if k == n {
            continue;
        }
        let d = r.policy.decision(k, z);
        reachable_tie |= d == Decision::Tie;
        if d != Decision::Stop {
            for next in [z.saturating_sub(1), z + 1] {
                if !seen[k + 1][next] {
                    seen[k + 1][next] = true;
                    queue.push_back((k + 1, next));
                }
            }
        }
    }
    if reachable_tie {
        (Uniqueness::NotUnique, ties)
    } else {
        (Uniqueness::Unknown, ties)
    }
}

/// Uniqueness class and exact tie states. Floating mode yields `Unknown`.
pub fn uniqueness_report<S: Scalar>(
    w: &WalkParams,
    f: &RewardSpec,
) -> Result<(Uniqueness, Vec<(usize, usize)>)> {
    let r = solve_in::<S>(w, f)?;
    Ok((r.unique, r.tie_states))
}

/// Exact value of a Markov rule: forward law of `Z`, absorbed on stop,
/// collecting `G(N-k, z)`.
pub fn evaluate_policy(w: &WalkParams, f: &RewardSpec, pol: &PolicyTable) -> Result<Rational> {
    evaluate_policy_in::<Rational>(w, f, pol)
}

pub fn evaluate_policy_in<S: Scalar>(
    w: &WalkParams,
    f: &RewardSpec,
    pol: &PolicyTable,
) -> Result<S> {
    if pol.horizon() != w.n() {
        return Err(Error::Policy(format!(
            "policy horizon {} does not match walk horizon {}",
            pol.horizon(),
            w.n()
        )));
    }
    check_domain(w, f)?;
    let n = w.n();
    let tables = ValueTables::<S>::new(w);
    let chain = ZChain::<S>::new(w);
    let mut dist = vec![S::one()];
    let mut value = S::zero();
    for k in 0..=n {
        for z in 0..dist.len() {
            if !dist[z].is_zero() && pol.stops_at(k, z) {
                value = value + dist[z].clone() * tables.g(f, n - k, z as u64)?;
                dist[z] = S::zero();
            }
        }
        if k < n {
            dist = chain.push_forward(&dist);
        }
    }
    Ok(value)
}

/// Values of every Markov rule in the tie class: at `(k, 0)`, `k < N`, stop
/// iff bit `k` of the index is set; continue at `z > 0`; stop at `N`.
/// Entry `mask` of the result is that rule's exact value.
pub fn tie_class_values<S: Scalar>(w: &WalkParams, f: &RewardSpec) -> Result<Vec<S>> {
    check_domain(w, f)?;
    let n = w.n();
    if n > 24 {
        return Err(Error::Config(format!("2^{n} tie-class rules is too many")));
    }
    let tables = ValueTables::<S>::new(w);
    let chain = ZChain::<S>::new(w);
    let at_max: Vec<S> = (0..=n)
        .map(|k| tables.g(f, n - k, 0))
        .collect::<Result<_>>()?;
    let terminal: Vec<S> = (0..=n).map(|z| f.value::<S>(z as u64)).collect::<Result<_, _>>()?;
    let mut out = vec![S::zero(); 1 << n];

    struct Ctx<'a, S> {
        n: usize,
        chain: &'a ZChain<S>,
        at_max: &'a [S],
        terminal: &'a [S],
    }

    fn walk<S: Scalar>(ctx: &Ctx<S>, k: usize, dist: Vec<S>, acc: S, mask: usize, out: &mut [S]) {
        if k == ctx.n {
            let tail = dist
                .iter()
                .zip(ctx.terminal)
                .fold(S::zero(), |a, (m, v)| a + m.clone() * v.clone());
            out[mask] = acc + tail;
            return;
        }
        let cont = ctx.chain.push_forward(&dist);
        walk(ctx, k + 1, cont, acc.clone(), mask, out);
        let mut stopped = dist;
        let acc = acc + stopped[0].clone() * ctx.at_max[k].clone();
        stopped[0] = S::zero();
        let after = ctx.chain.push_forward(&stopped);
        walk(ctx, k + 1, after, acc, mask | (1 << k), out);
    }

    let ctx = Ctx {
        n,
        chain: &chain,
        at_max: &at_max,
        terminal: &terminal,
    };
    walk(&ctx, 0, vec![S::one()], S::zero(), 0, &mut out);
    Ok(out)
}

/// The Markov rule indexed by `mask` in [`tie_class_values`].
pub fn tie_class_policy(horizon: usize, mask: usize) -> PolicyTable {
    PolicyTable::from_fn(horizon, |k, z| {
        if z == 0 && mask >> k & 1 == 1 {
            Decision::Stop
        } else {
            Decision::Continue
        }
    })
}

/// `inf_tau E[penalty(M_N - S_tau)]`, solved as the maximization of
/// `-penalty`.
pub fn minimal_penalty(w: &WalkParams, penalty: &RewardSpec) -> Result<Rational> {
    Ok(-solve(w, &penalty.negate())?.optimal_value)
}

/// `true` iff `p <= 1/2`; used to pick the predicted bang-bang rule.
pub fn predicts_tau0(w: &WalkParams) -> bool {
    w.p() * Rational::from_integer(2.into()) <= Rational::one()
}
