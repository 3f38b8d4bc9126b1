//! Walks for many `p` driven by one sequence of uniforms:
//! `X_k^p = +1` if `U_k <= p`, else `-1`. For `p >= p'` this gives
//! `X_k^p >= X_k^p'` and hence `Z_k^p <= Z_k^p'` on every path.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::dpsolver::PolicyTable;
use crate::error::{Error, Result};
use crate::par::{map_indexed, replicate, Execution, BLOCK};
use crate::rewards::RewardSpec;
use crate::rng::{purpose, stream};
use crate::scalar::{format_rational, Rational, Scalar};
use crate::walkdist::{joint_pmf_in, WalkParams};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkPath {
    pub s: Vec<i64>,
    pub m: Vec<i64>,
    pub z: Vec<i64>,
}

impl WalkPath {
    fn from_uniforms(us: &[f64], p: f64) -> Self {
        let mut path = WalkPath {
            s: vec![0],
            m: vec![0],
            z: vec![0],
        };
        let (mut s, mut m) = (0i64, 0i64);
        for &u in us {
            s += if u <= p { 1 } else { -1 };
            m = m.max(s);
            path.s.push(s);
            path.m.push(m);
            path.z.push(m - s);
        }
        path
    }
}

/// One replication: the same uniforms pushed through every `p`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledPaths {
    pub seed: u64,
    pub replication: u64,
    pub n: usize,
    #[serde(skip)]
    pub ps: Vec<Rational>,
    pub paths: Vec<WalkPath>,
}

impl CoupledPaths {
    /// Pathwise ordering: `p >= p'` implies `X^p >= X^p'` step by step and
    /// `Z^p <= Z^p'` at every time.
    pub fn ordering_holds(&self) -> bool {
        for (a, pa) in self.ps.iter().enumerate() {
            for (b, pb) in self.ps.iter().enumerate() {
                if pa < pb {
                    continue;
                }
                let (hi, lo) = (&self.paths[a], &self.paths[b]);
                for k in 1..=self.n {
                    if hi.s[k] - hi.s[k - 1] < lo.s[k] - lo.s[k - 1] || hi.z[k] > lo.z[k] {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn uniforms(seed: u64, replication: u64, n: usize) -> Vec<f64> {
    let mut rng = stream(seed, purpose::COUPLED_WALK, replication);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

fn to_f64s(ps: &[Rational]) -> Vec<f64> {
    ps.iter().map(Scalar::to_f64).collect()
}

pub fn coupled_replication(seed: u64, n: usize, ps: &[Rational], replication: u64) -> CoupledPaths {
    let us = uniforms(seed, replication, n);
    CoupledPaths {
        seed,
        replication,
        n,
        ps: ps.to_vec(),
        paths: to_f64s(ps).into_iter().map(|p| WalkPath::from_uniforms(&us, p)).collect(),
    }
}

/// All replications in memory; see [`ordering_violations`] for the
/// streaming check.
pub fn simulate(
    seed: u64,
    n: usize,
    ps: &[Rational],
    replications: usize,
    exec: Execution,
) -> Result<Vec<CoupledPaths>> {
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    Ok(map_indexed(exec, replications, |r| {
        coupled_replication(seed, n, ps, r as u64)
    }))
}

/// Number of replications on which the pathwise ordering fails.
pub fn ordering_violations(
    seed: u64,
    n: usize,
    ps: &[Rational],
    replications: usize,
    exec: Execution,
) -> u64 {
    let blocks = replications.div_ceil(BLOCK);
    map_indexed(exec, blocks, |b| {
        (b * BLOCK..((b + 1) * BLOCK).min(replications))
            .filter(|&r| !coupled_replication(seed, n, ps, r as u64).ordering_holds())
            .count() as u64
    })
    .into_iter()
    .sum()
}

/// CSV rows `replication,k,p,S,M,Z`.
pub fn write_paths_csv<W: Write>(sims: &[CoupledPaths], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replication", "k", "p", "S", "M", "Z"])?;
    for sim in sims {
        for (p, path) in sim.ps.iter().zip(&sim.paths) {
            let p = format_rational(p);
            for k in 0..=sim.n {
                w.write_record([
                    sim.replication.to_string(),
                    k.to_string(),
                    p.clone(),
                    path.s[k].to_string(),
                    path.m[k].to_string(),
                    path.z[k].to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename = "mc")]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub replications: usize,
}

/// Monte Carlo value of a Markov rule on simulated `p`-walks.
pub fn mc_rule_value(
    seed: u64,
    w: &WalkParams,
    f: &RewardSpec,
    pol: &PolicyTable,
    replications: usize,
    exec: Execution,
) -> Result<McEstimate> {
    if pol.horizon() != w.n() {
        return Err(Error::Policy(format!(
            "policy horizon {} does not match walk horizon {}",
            pol.horizon(),
            w.n()
        )));
    }
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let n = w.n();
    let rewards: Vec<f64> = (0..=2 * n as u64)
        .map(|k| f.value::<f64>(k).unwrap_or(f64::NAN))
        .collect();
    for k in 0..=n as u64 {
        f.value::<f64>(k)?;
    }
    let p = w.p().to_f64();
    let m = replicate(exec, replications, 1, |rep, out| {
        let path = WalkPath::from_uniforms(&uniforms(seed, rep, n), p);
        let tau = (0..=n)
            .find(|&k| pol.stops_at(k, path.z[k] as usize))
            .unwrap_or(n);
        out[0] = rewards[(path.m[n] - path.s[tau]) as usize];
    });
    Ok(McEstimate {
        estimate: m[0].mean,
        stderr: m[0].stderr(),
        replications,
    })
}

/// Monte Carlo value of a rule that sees the uniforms themselves, not just
/// the walk: `stop(k, &u[..k], &path)` is asked at `k = 0, 1, ...` until it
/// says yes (or `k = N`). Such a rule knows everything the coupled walks for
/// every other `p` know up to time `k`.
pub fn mc_uniform_rule_value(
    seed: u64,
    w: &WalkParams,
    f: &RewardSpec,
    stop: impl Fn(usize, &[f64], &WalkPath) -> bool + Sync + Send,
    replications: usize,
    exec: Execution,
) -> Result<McEstimate> {
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let n = w.n();
    let rewards: Vec<f64> = (0..=n as u64).map(|k| f.value::<f64>(k)).collect::<std::result::Result<_, _>>()?;
    let p = w.p().to_f64();
    let m = replicate(exec, replications, 1, |rep, out| {
        let us = uniforms(seed, rep, n);
        let path = WalkPath::from_uniforms(&us, p);
        let tau = (0..n).find(|&k| stop(k, &us[..k], &path)).unwrap_or(n);
        out[0] = rewards[(path.m[n] - path.s[tau]) as usize];
    });
    Ok(McEstimate {
        estimate: m[0].mean,
        stderr: m[0].stderr(),
        replications,
    })
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "mode", rename = "mc")]
pub struct TimeReversalReport {
    pub n: usize,
    pub replications: usize,
    /// Exact law of `M_n` under `p` equals exact law of `Z_n` under `q`.
    pub exact_identity: bool,
    pub exact_law: Vec<f64>,
    pub empirical_max_p: Vec<f64>,
    pub empirical_drawdown_q: Vec<f64>,
    pub tv_max_p: f64,
    pub tv_drawdown_q: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn empirical_law(
    seed: u64,
    stream_purpose: u64,
    n: usize,
    p: f64,
    replications: usize,
    exec: Execution,
    stat: impl Fn(&WalkPath) -> i64 + Sync + Send,
) -> Vec<f64> {
    let blocks = replications.div_ceil(BLOCK);
    let counts = map_indexed(exec, blocks, |b| {
        let mut c = vec![0u64; n + 1];
        for r in b * BLOCK..((b + 1) * BLOCK).min(replications) {
            let mut rng = stream(seed, stream_purpose, r as u64);
            let us: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            c[stat(&WalkPath::from_uniforms(&us, p)) as usize] += 1;
        }
        c
    })
    .into_iter()
    .fold(vec![0u64; n + 1], |acc, c| acc.iter().zip(&c).map(|(a, b)| a + b).collect());
    counts
        .iter()
        .map(|&c| c as f64 / replications as f64)
        .collect()
}

/// Chance that [`tv_noise_bound`] is exceeded by sampling noise alone.
pub const TV_FALSE_ALARM: f64 = 1e-6;

/// Level the total-variation distance between `law` and an `R`-sample
/// empirical law exceeds with probability at most `delta`:
/// `sum_j sqrt(p_j (1 - p_j) / R) / 2` bounds its mean, and one sample moves
/// it by at most `1/R`, so McDiarmid adds `sqrt(ln(1/delta) / 2R)`.
pub fn tv_noise_bound(law: &[f64], replications: usize, delta: f64) -> f64 {
    let r = replications as f64;
    let mean = 0.5 * law.iter().map(|p| (p * (1.0 - p) / r).sqrt()).sum::<f64>();
    mean + ((1.0 / delta).ln() / (2.0 * r)).sqrt()
}

/// Empirical law of `M_n` under `p` and of `Z_n` under `q` (independent
/// streams), each compared in total variation with the exact law. Without
/// an explicit `tolerance`, [`tv_noise_bound`] at [`TV_FALSE_ALARM`] is used.
pub fn time_reversal_check(
    seed: u64,
    w: &WalkParams,
    replications: usize,
    tolerance: Option<f64>,
    exec: Execution,
) -> Result<TimeReversalReport> {
    if replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()));
    }
    let n = w.n();
    let exact_max = joint_pmf_in::<Rational>(w).max_marginal();
    let exact_dd = joint_pmf_in::<Rational>(&w.swapped()).drawdown_marginal();
    let exact_law: Vec<f64> = exact_max.iter().map(Scalar::to_f64).collect();
    let p = w.p().to_f64();
    let q = w.q().to_f64();
    let emp_m = empirical_law(seed, purpose::WALK_MAX, n, p, replications, exec, |path| path.m[n]);
    let emp_z = empirical_law(seed, purpose::WALK_DRAWDOWN, n, q, replications, exec, |path| path.z[n]);
    let tolerance = tolerance.unwrap_or_else(|| tv_noise_bound(&exact_law, replications, TV_FALSE_ALARM));
    let tv_m = tv(&emp_m, &exact_law);
    let tv_z = tv(&emp_z, &exact_law);
    Ok(TimeReversalReport {
        n,
        replications,
        exact_identity: exact_max == exact_dd,
        exact_law,
        empirical_max_p: emp_m,
        empirical_drawdown_q: emp_z,
        tv_max_p: tv_m,
        tv_drawdown_q: tv_z,
        tolerance,
        pass: exact_max == exact_dd && tv_m < tolerance && tv_z < tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpsolver::evaluate_policy;
    use crate::par::Moments;
    use crate::scalar::ratio;

    #[test]
    fn zero_steps() {
        let sims = simulate(1, 0, &[ratio(1, 3)], 1, Execution::default()).unwrap();
        assert_eq!(sims[0].paths[0], WalkPath { s: vec![0], m: vec![0], z: vec![0] });
        assert!(simulate(1, 0, &[ratio(1, 3)], 0, Execution::default()).is_err());
    }

    #[test]
    fn ordering_on_every_path() {
        let ps = [ratio(1, 4), ratio(3, 4)];
        let sims = simulate(99, 50, &ps, 500, Execution::default()).unwrap();
        assert!(sims.iter().all(CoupledPaths::ordering_holds));
        for s in &sims {
            for k in 0..=50 {
                assert!(s.paths[1].z[k] <= s.paths[0].z[k]);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let ps = [ratio(1, 3), ratio(1, 2)];
        let a = simulate(5, 20, &ps, 100, Execution::Parallel).unwrap();
        let b = simulate(5, 20, &ps, 100, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        let c = simulate(6, 20, &ps, 100, Execution::Sequential).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn endpoint_mean_matches_drift() {
        let n = 20;
        let p = ratio(7, 10);
        let mut m = Moments::default();
        for r in 0..100_000 {
            let c = coupled_replication(3, n, std::slice::from_ref(&p), r);
            m.push(c.paths[0].s[n] as f64 / n as f64);
        }
        assert!((m.mean - 0.4).abs() < 4.0 * m.stderr(), "{} +- {}", m.mean, m.stderr());
    }

    #[test]
    fn constant_reward_is_exact() {
        let w = WalkParams::new(ratio(2, 5), 6).unwrap();
        let f = RewardSpec::table_i64(&[3; 7]);
        let est = mc_rule_value(1, &w, &f, &PolicyTable::never_stop(6), 1000, Execution::default()).unwrap();
        assert_eq!(est.estimate, 3.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn mc_matches_exact_counterexample() {
        let w = WalkParams::new(ratio(1, 2), 2).unwrap();
        let f = RewardSpec::table_i64(&[1, 1, 0]);
        let est = mc_rule_value(11, &w, &f, &PolicyTable::stop_immediately(2), 100_000, Execution::default()).unwrap();
        assert!((est.estimate - 0.75).abs() < 4.0 * est.stderr);
    }

    #[test]
    fn mc_matches_exact_policy_value() {
        let w = WalkParams::new(ratio(2, 5), 10).unwrap();
        let f = RewardSpec::geometric(ratio(1, 2)).unwrap();
        for pol in [PolicyTable::stop_immediately(10), PolicyTable::stop_at_max_after(10, 3)] {
            let exact = evaluate_policy(&w, &f, &pol).unwrap().to_f64();
            let est = mc_rule_value(12, &w, &f, &pol, 100_000, Execution::default()).unwrap();
            assert!((est.estimate - exact).abs() < 4.0 * est.stderr, "{est:?} vs {exact}");
        }
    }

    #[test]
    fn knowing_the_uniforms_does_not_help() {
        let f = RewardSpec::geometric(ratio(1, 2)).unwrap();
        for p in [ratio(1, 3), ratio(1, 2), ratio(2, 3)] {
            let w = WalkParams::new(p.clone(), 8).unwrap();
            let best = crate::dpsolver::solve(&w, &f).unwrap().optimal_value.to_f64();
            let pf = p.to_f64();
            // Extra information: where U fell inside its step's interval, and
            // the path of the coupled fair walk.
            let peeks: [&(dyn Fn(usize, &[f64], &WalkPath) -> bool + Sync); 3] = [
                &|k, u, path| k > 0 && path.z[k] == 0 && u[k - 1] < pf / 2.0,
                &|k, u, _| k > 0 && u.iter().all(|&x| x > pf),
                &|k, u, _| {
                    let fair = WalkPath::from_uniforms(u, 0.5);
                    k > 1 && fair.z[k] == 0
                },
            ];
            for (i, rule) in peeks.into_iter().enumerate() {
                let est = mc_uniform_rule_value(4, &w, &f, rule, 40_000, Execution::default()).unwrap();
                assert!(est.estimate <= best + 4.0 * est.stderr, "p={p} rule {i}: {est:?} vs {best}");
            }
        }
    }

    #[test]
    fn time_reversal_examples() {
        let w = WalkParams::new(ratio(2, 3), 0).unwrap();
        let r = time_reversal_check(1, &w, 10, Some(0.02), Execution::default()).unwrap();
        assert_eq!((r.tv_max_p, r.tv_drawdown_q), (0.0, 0.0));

        let w = WalkParams::new(ratio(2, 3), 6).unwrap();
        let r = time_reversal_check(1, &w, 100_000, Some(0.02), Execution::default()).unwrap();
        assert!(r.exact_identity && r.pass, "{r:?}");
        let auto = time_reversal_check(1, &w, 100_000, None, Execution::default()).unwrap();
        assert!(auto.pass && auto.tolerance < 0.02, "{auto:?}");
    }
}
