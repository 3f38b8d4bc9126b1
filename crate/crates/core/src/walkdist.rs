//! Exact finite-horizon laws of the Bernoulli(p) walk.
//!
//! The joint law of `(M_n, S_n)` is built by forward dynamic programming over
//! `(max, endpoint)` states; everything else (the value functions `G`, `D`,
//! `D~`, the reflection and time-reversal identities, and the key
//! inequalities) is read off it.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::Write;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::report::Expectation;
use crate::rewards::{RewardFlags, RewardSpec};
use crate::scalar::{format_rational, is_probability, ratio, Rational, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WalkParams {
    p: Rational,
    n: usize,
}

impl WalkParams {
    pub fn new(p: Rational, n: usize) -> Result<Self> {
        if !is_probability(&p) {
            return Err(Error::Config(format!(
                "p must lie in (0,1), got {}",
                format_rational(&p)
            )));
        }
        Ok(Self { p, n })
    }

    pub fn p(&self) -> &Rational {
        &self.p
    }

    pub fn q(&self) -> Rational {
        Rational::one() - &self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn with_horizon(&self, n: usize) -> Self {
        Self { p: self.p.clone(), n }
    }

    /// The walk with `p` and `q` exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            p: self.q(),
            n: self.n,
        }
    }

    /// `p` compared with 1/2.
    pub fn drift(&self) -> Ordering {
        (&self.p * Rational::from_integer(2.into())).cmp(&Rational::one())
    }
}

/// `P(M_n = k, S_n = l)` on `0 <= k <= n`, `-n <= l <= k`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointLaw<S> {
    n: usize,
    p: Rational,
    probs: Vec<S>,
}

impl<S: Scalar> JointLaw<S> {
    fn origin(p: &Rational) -> Self {
        Self {
            n: 0,
            p: p.clone(),
            probs: vec![S::one()],
        }
    }

    fn width(&self) -> usize {
        2 * self.n + 1
    }

    fn index(&self, k: usize, l: i64) -> Option<usize> {
        let n = self.n as i64;
        if k > self.n || l < -n || l > n || l > k as i64 {
            return None;
        }
        Some(k * self.width() + (l + n) as usize)
    }

    /// One more step of the walk.
    fn step(&self, up: &S, down: &S) -> Self {
        let n = self.n + 1;
        let mut next = Self {
            n,
            p: self.p.clone(),
            probs: vec![S::zero(); (n + 1) * (2 * n + 1)],
        };
        for (k, l, mass) in self.entries() {
            let l_up = l + 1;
            let k_up = k.max(l_up.max(0) as usize);
            let i = next.index(k_up, l_up).expect("in range");
            next.probs[i] = next.probs[i].clone() + mass.clone() * up.clone();
            let i = next.index(k, l - 1).expect("in range");
            next.probs[i] = next.probs[i].clone() + mass.clone() * down.clone();
        }
        next
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> &Rational {
        &self.p
    }

    pub fn prob(&self, k: usize, l: i64) -> S {
        self.index(k, l)
            .map(|i| self.probs[i].clone())
            .unwrap_or_else(S::zero)
    }

    /// Nonzero entries `(k, l, probability)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, i64, &S)> + '_ {
        let width = self.width();
        let n = self.n as i64;
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_zero())
            .map(move |(i, p)| (i / width, (i % width) as i64 - n, p))
    }

    pub fn total_mass(&self) -> S {
        self.entries()
            .fold(S::zero(), |acc, (_, _, p)| acc + p.clone())
    }

    /// Law of `M_n`, indexed by value.
    pub fn max_marginal(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.n + 1];
        for (k, _, p) in self.entries() {
            out[k] = out[k].clone() + p.clone();
        }
        out
    }

    /// Law of `Z_n = M_n - S_n`, indexed by value.
    pub fn drawdown_marginal(&self) -> Vec<S> {
        let mut out = vec![S::zero(); self.n + 1];
        for (k, l, p) in self.entries() {
            let z = (k as i64 - l) as usize;
            out[z] = out[z].clone() + p.clone();
        }
        out
    }

    /// `E[g(M_n, S_n)]`, evaluating `g` only where the mass is positive.
    pub fn expect<E>(&self, mut g: impl FnMut(usize, i64) -> std::result::Result<S, E>) -> std::result::Result<S, E> {
        let mut acc = S::zero();
        for (k, l, p) in self.entries() {
            acc = acc + p.clone() * g(k, l)?;
        }
        Ok(acc)
    }
}

impl JointLaw<Rational> {
    /// CSV rows `n,k,l,prob_numerator,prob_denominator`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["n", "k", "l", "prob_numerator", "prob_denominator"])?;
        for (k, l, p) in self.entries() {
            w.write_record([
                self.n.to_string(),
                k.to_string(),
                l.to_string(),
                p.numer().to_string(),
                p.denom().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Entry {
            k: usize,
            l: i64,
            prob: String,
        }
        let entries: Vec<Entry> = self
            .entries()
            .map(|(k, l, p)| Entry {
                k,
                l,
                prob: format_rational(p),
            })
            .collect();
        serde_json::json!({
            "n": self.n,
            "p": format_rational(&self.p),
            "entries": entries,
        })
    }
}

/// Exact joint law of `(M_n, S_n)`.
pub fn joint_pmf(w: &WalkParams) -> JointLaw<Rational> {
    joint_pmf_in::<Rational>(w)
}

/// Joint law in an arbitrary scalar mode (`f64` for profiling).
pub fn joint_pmf_in<S: Scalar>(w: &WalkParams) -> JointLaw<S> {
    joint_laws::<S>(w).pop().expect("at least the origin")
}

/// Laws after `0, 1, ..., n` steps.
pub fn joint_laws<S: Scalar>(w: &WalkParams) -> Vec<JointLaw<S>> {
    let up = S::from_rational(w.p());
    let down = S::from_rational(&w.q());
    let mut laws = Vec::with_capacity(w.n + 1);
    laws.push(JointLaw::origin(w.p()));
    for _ in 0..w.n {
        let next = laws.last().expect("nonempty").step(&up, &down);
        laws.push(next);
    }
    laws
}

fn pushforward(
    law: &JointLaw<Rational>,
    map: impl Fn(i64, i64) -> (i64, i64),
) -> BTreeMap<(i64, i64), Rational> {
    let mut out: BTreeMap<(i64, i64), Rational> = BTreeMap::new();
    for (k, l, p) in law.entries() {
        *out.entry(map(k as i64, l)).or_insert_with(Rational::zero) += p;
    }
    out
}

/// `(M_n - S_n, S_n)` under `p` against `(M_n, -S_n)` under `q`, exactly.
pub fn reflection_check(w: &WalkParams) -> bool {
    let lhs = pushforward(&joint_pmf(w), |k, l| (k - l, l));
    let rhs = pushforward(&joint_pmf(&w.swapped()), |k, l| (k, -l));
    lhs == rhs
}

/// Law of `M_n` under `p` against law of `Z_n` under `q`, exactly.
pub fn time_reversal_check(w: &WalkParams) -> bool {
    joint_pmf(w).max_marginal() == joint_pmf(&w.swapped()).drawdown_marginal()
}

fn arg(x: i64) -> u64 {
    debug_assert!(x >= 0);
    x as u64
}

/// Value functions `G`, `D~` of one walk parameter, from cached laws for
/// every horizon up to `max_steps`.
#[derive(Debug, Clone)]
pub struct ValueTables<S> {
    laws: Vec<JointLaw<S>>,
    max_marginals: Vec<Vec<S>>,
}

impl<S: Scalar> ValueTables<S> {
    pub fn new(w: &WalkParams) -> Self {
        let laws = joint_laws::<S>(w);
        let max_marginals = laws.iter().map(JointLaw::max_marginal).collect();
        Self {
            laws,
            max_marginals,
        }
    }

    pub fn max_steps(&self) -> usize {
        self.laws.len() - 1
    }

    pub fn law(&self, k: usize) -> &JointLaw<S> {
        &self.laws[k]
    }

    fn check(&self, k: usize) -> Result<()> {
        if k > self.max_steps() {
            return Err(Error::Config(format!(
                "{k} steps exceeds the configured horizon {}",
                self.max_steps()
            )));
        }
        Ok(())
    }

    /// `G(k, i) = E[f(i v M_k)]`.
    pub fn g(&self, f: &RewardSpec, k: usize, i: u64) -> Result<S> {
        self.check(k)?;
        let mut acc = S::zero();
        for (m, p) in self.max_marginals[k].iter().enumerate() {
            if !p.is_zero() {
                acc = acc + p.clone() * f.value::<S>(i.max(m as u64))?;
            }
        }
        Ok(acc)
    }

    /// `E[f(i v M_k - S_k)]`.
    pub fn drawdown_from(&self, f: &RewardSpec, k: usize, i: u64) -> Result<S> {
        self.check(k)?;
        Ok(self.laws[k].expect(|m, l| f.value::<S>(arg((i as i64).max(m as i64) - l)))?)
    }

    /// `E[f(i v (M_k - S_k))]`.
    pub fn clipped_drawdown(&self, f: &RewardSpec, k: usize, i: u64) -> Result<S> {
        self.check(k)?;
        Ok(self.laws[k].expect(|m, l| f.value::<S>(arg((i as i64).max(m as i64 - l))))?)
    }
}

/// `G(k, i) = E[f(i v M_k^p)]`.
pub fn g_value(w: &WalkParams, f: &RewardSpec, k: usize, i: u64) -> Result<Rational> {
    ValueTables::<Rational>::new(&w.with_horizon(k)).g(f, k, i)
}

/// `D(k, i) = E[f(i v M_k^q - S_k^q)]`, the reflected-parameter walk.
pub fn d_value(w: &WalkParams, f: &RewardSpec, k: usize, i: u64) -> Result<Rational> {
    ValueTables::<Rational>::new(&w.swapped().with_horizon(k)).drawdown_from(f, k, i)
}

/// `D~(k, i) = E[f(i v M_k^p - S_k^p)]`.
pub fn dtilde_value(w: &WalkParams, f: &RewardSpec, k: usize, i: u64) -> Result<Rational> {
    ValueTables::<Rational>::new(&w.with_horizon(k)).drawdown_from(f, k, i)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub k: i64,
    pub l: i64,
    #[serde(serialize_with = "crate::report::ser_rational")]
    pub psi: Rational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    #[serde(serialize_with = "crate::report::ser_rational")]
    pub lhs: Rational,
    #[serde(serialize_with = "crate::report::ser_rational")]
    pub rhs: Rational,
    /// `lhs > rhs`.
    pub strict: bool,
    /// `lhs >= rhs`.
    pub holds: bool,
    pub witness: Option<Witness>,
}

impl InequalityReport {
    fn new(lhs: Rational, rhs: Rational, witness: Option<Witness>) -> Self {
        let ord = lhs.cmp(&rhs);
        Self {
            strict: ord == Ordering::Greater,
            holds: ord != Ordering::Less,
            lhs,
            rhs,
            witness,
        }
    }

    pub fn equal(&self) -> bool {
        self.lhs == self.rhs
    }
}

/// `psi(i,k,l) = [f(i v k - l) - f(i v (k-l))] + [f(i v (k-l) + l) - f(i v k)]`,
/// the integrand gap whose nonnegativity follows from convexity.
pub fn psi(f: &RewardSpec, i: u64, k: i64, l: i64) -> Result<Rational> {
    let i = i as i64;
    let v = |x: i64| f.exact(arg(x));
    Ok(v(i.max(k) - l)? - v(i.max(k - l))? + v(i.max(k - l) + l)? - v(i.max(k))?)
}

fn witness(f: &RewardSpec, n: usize, i: u64) -> Result<Option<Witness>> {
    if n == 0 || i == 0 {
        return Ok(None);
    }
    let k = n as i64;
    let gap = psi(f, i, k, k)?;
    Ok(gap.is_positive().then_some(Witness { k, l: k, psi: gap }))
}

/// `E[f(i v M_n - S_n)]` against `E[f(i v (M_n - S_n))]` at `n = w.n()`.
pub fn check_key_inequality(w: &WalkParams, f: &RewardSpec, i: u64) -> Result<InequalityReport> {
    let t = ValueTables::<Rational>::new(w);
    let n = w.n();
    Ok(InequalityReport::new(
        t.drawdown_from(f, n, i)?,
        t.clipped_drawdown(f, n, i)?,
        witness(f, n, i)?,
    ))
}

/// `E[f(i v M_n - S_n)]` against `G(n, i) = E[f(i v M_n)]`.
pub fn check_corollary(w: &WalkParams, f: &RewardSpec, i: u64) -> Result<InequalityReport> {
    let t = ValueTables::<Rational>::new(w);
    let n = w.n();
    Ok(InequalityReport::new(
        t.drawdown_from(f, n, i)?,
        t.g(f, n, i)?,
        witness(f, n, i)?,
    ))
}

impl InequalityReport {
    pub fn meets(&self, e: Expectation) -> bool {
        match e {
            Expectation::Strict => self.strict,
            Expectation::Equal => self.equal(),
            Expectation::AtLeast => self.holds,
            Expectation::None => true,
        }
    }
}

/// Pattern asserted for the key inequality at `(p, n, i)`, for `p >= 1/2`
/// and convex nonincreasing `f`.
pub fn expected_key(p: &Rational, n: usize, i: u64, flags: &RewardFlags) -> Expectation {
    let half = ratio(1, 2);
    if *p < half || !flags.convex_nonincreasing() {
        Expectation::None
    } else if n == 0 || i == 0 {
        Expectation::Equal
    } else if (*p > half && flags.strictly_decreasing) || flags.strictly_convex {
        Expectation::Strict
    } else if *p == half && flags.linear {
        // psi vanishes and the two walks coincide.
        Expectation::Equal
    } else {
        Expectation::AtLeast
    }
}

/// Pattern asserted for `E[f(i v M_n - S_n)] >= G(n, i)`.
pub fn expected_corollary(p: &Rational, n: usize, i: u64, flags: &RewardFlags) -> Expectation {
    let half = ratio(1, 2);
    if *p < half || !flags.convex_nonincreasing() {
        return Expectation::None;
    }
    if n == 0 {
        return Expectation::Equal;
    }
    if *p == half {
        // `M^q` and `M^p` agree in law, so this is the key inequality.
        return expected_key(p, n, i, flags);
    }
    if flags.strictly_decreasing || expected_key(p, n, i, flags) == Expectation::Strict {
        Expectation::Strict
    } else {
        Expectation::AtLeast
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, ratio};

    fn walk(p: Rational, n: usize) -> WalkParams {
        WalkParams::new(p, n).unwrap()
    }

    /// Independent oracle: all 2^n paths, aggregated by (max, endpoint).
    fn enumerate(p: &Rational, n: usize) -> BTreeMap<(usize, i64), Rational> {
        let q = Rational::one() - p;
        let mut out = BTreeMap::new();
        for bits in 0u32..(1 << n) {
            let (mut s, mut m, mut pr) = (0i64, 0i64, Rational::one());
            for j in 0..n {
                if bits >> j & 1 == 1 {
                    s += 1;
                    pr *= p;
                } else {
                    s -= 1;
                    pr *= &q;
                }
                m = m.max(s);
            }
            *out.entry((m as usize, s)).or_insert_with(Rational::zero) += pr;
        }
        out
    }

    fn as_map(law: &JointLaw<Rational>) -> BTreeMap<(usize, i64), Rational> {
        law.entries().map(|(k, l, p)| ((k, l), p.clone())).collect()
    }

    #[test]
    fn rejects_degenerate_p() {
        assert!(WalkParams::new(int(0), 3).is_err());
        assert!(WalkParams::new(int(1), 3).is_err());
    }

    #[test]
    fn small_laws() {
        let law = joint_pmf(&walk(ratio(1, 3), 0));
        assert_eq!(as_map(&law), BTreeMap::from([((0, 0), int(1))]));
        let law = joint_pmf(&walk(ratio(1, 3), 1));
        assert_eq!(
            as_map(&law),
            BTreeMap::from([((1, 1), ratio(1, 3)), ((0, -1), ratio(2, 3))])
        );
        let law = joint_pmf(&walk(ratio(1, 2), 3));
        assert_eq!(law.prob(3, 3), ratio(1, 8));
    }

    #[test]
    fn matches_path_enumeration() {
        for p in [ratio(1, 2), ratio(2, 3), ratio(1, 10)] {
            for n in 0..=8 {
                assert_eq!(as_map(&joint_pmf(&walk(p.clone(), n))), enumerate(&p, n));
            }
        }
    }

    #[test]
    fn float_mode_tracks_exact() {
        let w = walk(ratio(3, 7), 10);
        let exact = joint_pmf(&w);
        let float = joint_pmf_in::<f64>(&w);
        for (k, l, p) in exact.entries() {
            assert!((Scalar::to_f64(p) - float.prob(k, l)).abs() < 1e-14);
        }
    }

    #[test]
    fn reflection_examples() {
        assert!(reflection_check(&walk(ratio(1, 7), 0)));
        assert!(reflection_check(&walk(ratio(2, 3), 5)));
        let w = walk(ratio(1, 2), 4);
        assert!(reflection_check(&w));
        assert_eq!(joint_pmf(&w), joint_pmf(&w.swapped()));
    }

    #[test]
    fn mass_is_exactly_one() {
        for n in 0..=12 {
            assert_eq!(joint_pmf(&walk(ratio(3, 10), n)).total_mass(), int(1));
        }
    }

    #[test]
    fn g_examples() {
        let geo = RewardSpec::geometric(ratio(1, 2)).unwrap();
        let w = walk(ratio(1, 2), 4);
        for i in 0..5 {
            assert_eq!(g_value(&w, &geo, 0, i).unwrap(), geo.exact(i).unwrap());
            assert_eq!(d_value(&w, &geo, 0, i).unwrap(), geo.exact(i).unwrap());
        }
        assert_eq!(g_value(&w, &geo, 1, 0).unwrap(), ratio(3, 4));

        let ex = RewardSpec::table_i64(&[1, 1, 0]);
        for p in [ratio(1, 4), ratio(1, 2), ratio(3, 4)] {
            let w = walk(p.clone(), 2);
            assert_eq!(g_value(&w, &ex, 2, 0).unwrap(), int(1) - &p * &p);
        }
    }

    #[test]
    fn d_equals_g_at_zero_for_fair_walk() {
        let geo = RewardSpec::geometric(ratio(1, 3)).unwrap();
        let w = walk(ratio(1, 2), 8);
        for k in 0..=8 {
            assert_eq!(d_value(&w, &geo, k, 0).unwrap(), g_value(&w, &geo, k, 0).unwrap());
        }
    }

    #[test]
    fn dtilde_matches_four_path_enumeration() {
        // p = 2/3, two steps, i = 1, f(k) = 2^-k.
        // UU: M=2,S=2 -> 1v2-2 = 0 ; UD: M=1,S=0 -> 1 ; DU: M=0,S=0 -> 1 ; DD: M=0,S=-2 -> 3
        let (p, q) = (ratio(2, 3), ratio(1, 3));
        let f = |k: i32| ratio(1, 1 << k);
        let expected = &p * &p * f(0) + &p * &q * f(1) + &q * &p * f(1) + &q * &q * f(3);
        let geo = RewardSpec::geometric(ratio(1, 2)).unwrap();
        assert_eq!(dtilde_value(&walk(p, 2), &geo, 2, 1).unwrap(), expected);
    }

    #[test]
    fn key_inequality_examples() {
        let geo = RewardSpec::geometric(ratio(1, 2)).unwrap();
        let r = check_key_inequality(&walk(ratio(1, 3), 4), &geo, 0).unwrap();
        assert!(r.equal());

        let r = check_key_inequality(&walk(ratio(3, 5), 2), &geo, 1).unwrap();
        // enumeration: UU -> (0 | 1), UD -> (1 | 1), DU -> (1 | 1), DD -> (3 | 2)
        let (p, q) = (ratio(3, 5), ratio(2, 5));
        let lhs = &p * &p * int(1) + &p * &q * ratio(1, 2) * int(2) + &q * &q * ratio(1, 8);
        let rhs = &p * &p * ratio(1, 2) + &p * &q * ratio(1, 2) * int(2) + &q * &q * ratio(1, 4);
        assert_eq!((r.lhs.clone(), r.rhs.clone()), (lhs, rhs));
        assert!(r.strict);
        assert_eq!(r.witness.as_ref().map(|w| (w.k, w.l)), Some((2, 2)));

        let lin = RewardSpec::table_i64(&[3, 2, 1, 0, -1, -2, -3]);
        let r = check_key_inequality(&walk(ratio(1, 2), 3), &lin, 2).unwrap();
        assert!(r.equal() && r.witness.is_none());
    }

    #[test]
    fn predicted_patterns_hold_on_small_grid() {
        use crate::rewards::{classify, Probe};
        let fams = [
            RewardSpec::geometric(ratio(1, 2)).unwrap(),
            RewardSpec::indicator_top(),
            RewardSpec::table_i64(&(0..=16).map(|k| 16 - k).collect::<Vec<_>>()),
            RewardSpec::table_i64(&[9, 5, 2, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1]),
        ];
        for f in &fams {
            let flags = classify(f, &Probe::Discrete(16));
            for p in [ratio(1, 2), ratio(3, 5), ratio(3, 4)] {
                for n in 0..=6 {
                    let w = walk(p.clone(), n);
                    for i in 0..=6 {
                        let key = check_key_inequality(&w, f, i).unwrap();
                        let cor = check_corollary(&w, f, i).unwrap();
                        assert!(key.meets(expected_key(&p, n, i, &flags)), "{f} p={p} n={n} i={i} {key:?}");
                        assert!(cor.meets(expected_corollary(&p, n, i, &flags)), "{f} p={p} n={n} i={i} {cor:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn corollary_examples() {
        let geo = RewardSpec::geometric(ratio(1, 3)).unwrap();
        let r = check_corollary(&walk(ratio(3, 4), 0), &geo, 2).unwrap();
        assert!(r.equal());
        let r = check_corollary(&walk(ratio(3, 4), 3), &geo, 0).unwrap();
        assert!(r.strict);
        let top = RewardSpec::indicator_top();
        let r = check_corollary(&walk(ratio(1, 2), 2), &top, 1).unwrap();
        assert!(r.holds);
    }

    #[test]
    fn domain_errors_surface() {
        let short = RewardSpec::table_i64(&[1, 0]);
        assert!(check_key_inequality(&walk(ratio(1, 2), 3), &short, 0).is_err());
    }

    #[test]
    fn csv_and_json_forms() {
        let law = joint_pmf(&walk(ratio(1, 2), 1));
        let mut buf = Vec::new();
        law.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "n,k,l,prob_numerator,prob_denominator\n1,0,-1,1,2\n1,1,1,1,2\n"
        );
        let json = law.to_json();
        assert_eq!(json["entries"][1]["prob"], "1/2");
    }
}
