//! Brownian motion with drift `B_t = W_t + lambda t` and its running
//! maximum `M_t`: the joint density of `(M_t, B_t)`, quadrature of
//! functionals against it, exact sampling, and Monte Carlo values of
//! stopping rules for the prediction problem `sup_tau E f(M_T - B_tau)`.

pub mod quad;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{map_slice, replicate, Execution};
use crate::rewards::{classify, Probe, RealReward, RewardFlags, RewardSpec};
use crate::report::Expectation;
use crate::rng::{purpose, stream};

pub use quad::{integrate, Estimate, QuadConfig};

/// Fewest grid steps accepted for path-dependent rules.
pub const MIN_STEPS: usize = 1000;

/// "At the running maximum" on a grid means `Z <= DRAWDOWN_EPS_FACTOR * sqrt(dt)`.
/// A grid point with `Z` this small is within a fraction of one step's
/// standard deviation of the maximum; the value lost relative to stopping
/// exactly at `Z = 0` is of order `eps^2`.
pub const DRAWDOWN_EPS_FACTOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub steps: usize,
    pub replications: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            steps: MIN_STEPS,
            replications: 100_000,
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BmModel {
    pub lambda: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub quad: QuadConfig,
    pub mc: McConfig,
}

impl BmModel {
    pub fn new(lambda: f64, horizon: f64) -> Result<Self> {
        let m = Self {
            lambda,
            horizon,
            quad: QuadConfig::default(),
            mc: McConfig::default(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon T must be positive, got {}", self.horizon)));
        }
        if !self.lambda.is_finite() {
            return Err(Error::Config("drift must be finite".into()));
        }
        if self.mc.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        self.quad.validate()
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.mc.steps as f64
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("time must be positive and finite, got {t}")))
    }
}

fn check_level(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("level x must be >= 0, got {x}")))
    }
}

// ---------------------------------------------------------------------------
// Density

/// Density of `(M_t, B_t)` at `(s, b)`: zero off the support
/// `{s >= 0, b <= s}`.
pub fn joint_density(s: f64, b: f64, t: f64, lambda: f64) -> Result<f64> {
    check_time(t)?;
    Ok(density(s, b, t, lambda))
}

fn density(s: f64, b: f64, t: f64, lambda: f64) -> f64 {
    if s < 0.0 || b > s {
        return 0.0;
    }
    let u = 2.0 * s - b;
    (2.0 / PI).sqrt() * u / t.powf(1.5) * (-u * u / (2.0 * t)).exp() * (lambda * (b - lambda * t / 2.0)).exp()
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative discrepancy of `h(s,b;lambda) = h(s-b,-b;-lambda)` over
/// `points`.
pub fn density_reflection_check(t: f64, lambda: f64, points: &[(f64, f64)]) -> Result<f64> {
    check_time(t)?;
    Ok(points
        .iter()
        .map(|&(s, b)| rel_gap(density(s, b, t, lambda), density(s - b, -b, t, -lambda)))
        .fold(0.0, f64::max))
}

/// Points with `b > 0`, `s >= b` where `h(s,b;lambda) < h(s,b;-lambda)`.
pub fn density_ordering_violations(t: f64, lambda: f64, points: &[(f64, f64)]) -> Result<usize> {
    check_time(t)?;
    Ok(points
        .iter()
        .filter(|&&(s, b)| b > 0.0 && s >= b && density(s, b, t, lambda) < density(s, b, t, -lambda))
        .count())
}

// ---------------------------------------------------------------------------
// Quadrature

/// `E[phi(M_t, B_t)]` by nested adaptive quadrature.
///
/// Coordinates are `(u, b)` with `u = 2s - b >= |b|`, on which the kernel is
/// `u exp(-u^2/2t)`; `b` runs over `lambda t +- w sqrt(t)` and `u` over
/// `|b| + [0, w sqrt(t)]`. `levels` are the points `c` where `phi` may kink
/// in `s` or `s - b` (inner breakpoints `2c -+ b`); `outer_breaks` are kinks
/// in `b`. The error combines the outer estimate, the worst inner estimate
/// times the outer length, and the truncated Gaussian tails.
pub fn joint_expectation(
    t: f64,
    lambda: f64,
    cfg: &QuadConfig,
    phi: impl Fn(f64, f64) -> f64,
    levels: &[f64],
    outer_breaks: &[f64],
) -> Result<Estimate> {
    check_time(t)?;
    cfg.validate()?;
    let w = cfg.width_sd * t.sqrt();
    let (b_lo, b_hi) = (lambda * t - w, lambda * t + w);
    let outer_len = b_hi - b_lo;
    let inner_tol = 0.1 * cfg.abs_tol / outer_len;
    let norm = (2.0 / PI).sqrt() / (2.0 * t.powf(1.5));

    let mut worst_inner = 0.0f64;
    let mut phi_max = 0.0f64;
    let mut failure = None;
    let mut breaks = Vec::with_capacity(2 * levels.len());
    let outer = |b: f64| {
        if failure.is_some() {
            return 0.0;
        }
        let weight = norm * (lambda * (b - lambda * t / 2.0)).exp();
        if weight == 0.0 {
            return 0.0;
        }
        breaks.clear();
        breaks.extend(levels.iter().flat_map(|&c| [2.0 * c - b, 2.0 * c + b]));
        let lo = b.abs();
        let inner = integrate(
            |u| {
                let v = phi(0.5 * (u + b), b);
                phi_max = phi_max.max(v.abs());
                v * u * (-u * u / (2.0 * t)).exp()
            },
            lo,
            lo + w,
            &breaks,
            inner_tol / weight,
            0.0,
            cfg.max_segments,
        );
        match inner {
            Ok(e) => {
                worst_inner = worst_inner.max(weight * e.error);
                weight * e.value
            }
            Err(e) => {
                failure = Some(e);
                0.0
            }
        }
    };
    let mut ob: Vec<f64> = vec![0.0];
    ob.extend_from_slice(outer_breaks);
    ob.extend(levels.iter().flat_map(|&c| [c, -c]));
    let est = integrate(outer, b_lo, b_hi, &ob, 0.5 * cfg.abs_tol, cfg.rel_tol, cfg.max_segments)?;
    if let Some(e) = failure {
        return Err(e);
    }
    // Both truncated tails carry mass at most exp(-w^2/2).
    let tail = 2.0 * phi_max * (-cfg.width_sd * cfg.width_sd / 2.0).exp();
    Ok(Estimate {
        value: est.value,
        error: est.error + outer_len * worst_inner + tail,
    })
}

struct Functional<'a> {
    f: RealReward,
    spec: &'a RewardSpec,
    x: f64,
}

impl<'a> Functional<'a> {
    fn new(f: &'a RewardSpec, t: f64, x: f64) -> Result<Self> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Config(format!("time must be >= 0, got {t}")));
        }
        check_level(x)?;
        Ok(Self { f: f.real()?, spec: f, x })
    }

    fn levels(&self) -> Vec<f64> {
        let mut v = vec![self.x];
        v.extend(self.spec.kinks());
        v
    }

    fn outer_breaks(&self) -> Vec<f64> {
        self.spec.kinks().iter().map(|k| self.x - k).collect()
    }

    fn at_zero(&self) -> Estimate {
        Estimate {
            value: self.f.eval(self.x),
            error: 0.0,
        }
    }

    fn run(&self, t: f64, lambda: f64, cfg: &QuadConfig, phi: impl Fn(f64, f64) -> f64) -> Result<Estimate> {
        if t == 0.0 {
            return Ok(self.at_zero());
        }
        joint_expectation(t, lambda, cfg, phi, &self.levels(), &self.outer_breaks())
    }
}

/// `G(t,x) = E[f(x v M_t)]` under drift `lambda`.
pub fn g_bm(t: f64, x: f64, lambda: f64, f: &RewardSpec, cfg: &QuadConfig) -> Result<Estimate> {
    let fx = Functional::new(f, t, x)?;
    fx.run(t, lambda, cfg, |s, _| fx.f.eval(x.max(s)))
}

/// `D(t,x) = E[f(x v M_t - B_t)]` under drift `-lambda`.
pub fn d_bm(t: f64, x: f64, lambda: f64, f: &RewardSpec, cfg: &QuadConfig) -> Result<Estimate> {
    dtilde_bm(t, x, -lambda, f, cfg)
}

/// `D~(t,x) = E[f(x v M_t - B_t)]` under drift `lambda`.
pub fn dtilde_bm(t: f64, x: f64, lambda: f64, f: &RewardSpec, cfg: &QuadConfig) -> Result<Estimate> {
    let fx = Functional::new(f, t, x)?;
    fx.run(t, lambda, cfg, |s, b| fx.f.eval((x.max(s) - b).max(0.0)))
}

/// `E[f(x v (M_t - B_t))]` under drift `lambda`.
pub fn clipped_drawdown_bm(t: f64, x: f64, lambda: f64, f: &RewardSpec, cfg: &QuadConfig) -> Result<Estimate> {
    let fx = Functional::new(f, t, x)?;
    fx.run(t, lambda, cfg, |s, b| fx.f.eval(x.max(s - b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `lhs - rhs > quad_error_bound`.
    Strict,
    /// `|lhs - rhs| <= quad_error_bound`: equal as far as quadrature can tell.
    WithinTolerance,
    /// `lhs - rhs < -quad_error_bound`.
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename = "quadrature")]
pub struct BmInequalityReport {
    pub t: f64,
    pub x: f64,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub quad_error_bound: f64,
    pub strict_margin: f64,
    pub verdict: Verdict,
}

impl BmInequalityReport {
    fn new(t: f64, x: f64, lambda: f64, lhs: Estimate, rhs: Estimate) -> Self {
        let bound = lhs.error + rhs.error;
        let margin = lhs.value - rhs.value;
        let verdict = if margin > bound {
            Verdict::Strict
        } else if margin < -bound {
            Verdict::Violated
        } else {
            Verdict::WithinTolerance
        };
        Self {
            t,
            x,
            lambda,
            lhs: lhs.value,
            rhs: rhs.value,
            quad_error_bound: bound,
            strict_margin: margin,
            verdict,
        }
    }

    /// `lhs >= rhs - quad_error_bound`.
    pub fn holds(&self) -> bool {
        self.verdict != Verdict::Violated
    }
}

/// `E[f(x v M_t - B_t)]` against `E[f(x v (M_t - B_t))]`.
pub fn check_bm_key_inequality(
    t: f64,
    x: f64,
    lambda: f64,
    f: &RewardSpec,
    cfg: &QuadConfig,
) -> Result<BmInequalityReport> {
    let lhs = dtilde_bm(t, x, lambda, f, cfg)?;
    let rhs = clipped_drawdown_bm(t, x, lambda, f, cfg)?;
    Ok(BmInequalityReport::new(t, x, lambda, lhs, rhs))
}

/// `D~(t,x)` against `G(t,x)`.
pub fn check_bm_corollary(
    t: f64,
    x: f64,
    lambda: f64,
    f: &RewardSpec,
    cfg: &QuadConfig,
) -> Result<BmInequalityReport> {
    let lhs = dtilde_bm(t, x, lambda, f, cfg)?;
    let rhs = g_bm(t, x, lambda, f, cfg)?;
    Ok(BmInequalityReport::new(t, x, lambda, lhs, rhs))
}

impl Verdict {
    pub fn meets(self, e: Expectation) -> bool {
        match e {
            Expectation::Strict => self == Verdict::Strict,
            Expectation::Equal => self == Verdict::WithinTolerance,
            Expectation::AtLeast => self != Verdict::Violated,
            Expectation::None => true,
        }
    }
}

/// Flags of a continuous reward, probed on `[0, 20]` plus its kinks.
pub fn reward_flags(f: &RewardSpec) -> RewardFlags {
    let mut grid: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
    grid.extend(f.kinks());
    classify(f, &Probe::Grid(grid))
}

pub fn expected_key(t: f64, x: f64, lambda: f64, flags: &RewardFlags) -> Expectation {
    if lambda < 0.0 || !flags.convex_nonincreasing() {
        Expectation::None
    } else if t == 0.0 || x == 0.0 || flags.constant || (lambda == 0.0 && flags.linear) {
        Expectation::Equal
    } else {
        Expectation::Strict
    }
}

pub fn expected_corollary(t: f64, x: f64, lambda: f64, flags: &RewardFlags) -> Expectation {
    if lambda < 0.0 || !flags.convex_nonincreasing() {
        Expectation::None
    } else if lambda == 0.0 {
        // With no drift both sides coincide with the key inequality.
        expected_key(t, x, lambda, flags)
    } else if t == 0.0 || flags.constant {
        Expectation::Equal
    } else {
        Expectation::Strict
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BmGridRow {
    pub key: BmInequalityReport,
    pub key_expected: Expectation,
    pub corollary: BmInequalityReport,
    pub corollary_expected: Expectation,
    pub pass: bool,
}

/// Both inequalities on every `(t, x, lambda)` of the grid, in grid order.
pub fn verify_grid(
    f: &RewardSpec,
    ts: &[f64],
    xs: &[f64],
    lambdas: &[f64],
    cfg: &QuadConfig,
    exec: Execution,
) -> Result<Vec<BmGridRow>> {
    let flags = reward_flags(f);
    let mut cells = Vec::new();
    for &t in ts {
        for &x in xs {
            for &l in lambdas {
                cells.push((t, x, l));
            }
        }
    }
    map_slice(exec, &cells, |&(t, x, l)| {
        let key = check_bm_key_inequality(t, x, l, f, cfg)?;
        let corollary = check_bm_corollary(t, x, l, f, cfg)?;
        let key_expected = expected_key(t, x, l, &flags);
        let corollary_expected = expected_corollary(t, x, l, &flags);
        let pass = key.verdict.meets(key_expected) && corollary.verdict.meets(corollary_expected);
        Ok(BmGridRow {
            key,
            key_expected,
            corollary,
            corollary_expected,
            pass,
        })
    })
    .into_iter()
    .collect()
}

// ---------------------------------------------------------------------------
// Sampling

/// One exact draw of `(M_t, B_t)`: `B ~ N(lambda t, t)`, then
/// `P(M >= s | B = b) = exp(-2 s (s - b) / t)` inverted in closed form.
pub fn draw_max_endpoint(rng: &mut ChaCha8Rng, t: f64, lambda: f64) -> (f64, f64) {
    let z: f64 = rng.sample(StandardNormal);
    let b = lambda * t + t.sqrt() * z;
    let u = 1.0 - rng.random::<f64>();
    ((b + (b * b - 2.0 * t * u.ln()).sqrt()) / 2.0, b)
}

/// `replications` exact samples of `(M_t, B_t)`; sample `r` depends only on
/// `(seed, r)`.
pub fn sample_max_endpoint(seed: u64, t: f64, lambda: f64, replications: usize) -> Result<Vec<(f64, f64)>> {
    check_time(t)?;
    Ok((0..replications as u64)
        .map(|r| draw_max_endpoint(&mut stream(seed, purpose::BM_SAMPLE, r), t, lambda))
        .collect())
}

// ---------------------------------------------------------------------------
// Stopping rules

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BmRule {
    /// Stop at time 0.
    Tau0,
    /// Stop at the horizon.
    #[serde(rename = "tauT")]
    TauT,
    /// Once the drawdown has reached `a`, stop at the next grid time with
    /// `Z_t <= eps` (a return to the running maximum). `a = 0` stops at the
    /// first such time after 0.
    DrawdownThreshold { a: f64 },
    /// Stop at the first grid time `t >= t0`.
    TimeThreshold { t0: f64 },
    /// Stop at the first grid time with `Z_t >= a`.
    StopLoss { a: f64 },
}

impl BmRule {
    /// `tau0` and `tauT` are valued from exact `(M_T, B_T)` samples.
    pub fn is_exact(&self) -> bool {
        matches!(self, BmRule::Tau0 | BmRule::TauT)
    }

    fn validate(&self, horizon: f64) -> Result<()> {
        let ok = match *self {
            BmRule::Tau0 | BmRule::TauT => true,
            BmRule::DrawdownThreshold { a } | BmRule::StopLoss { a } => a >= 0.0 && a.is_finite(),
            BmRule::TimeThreshold { t0 } => (0.0..=horizon).contains(&t0),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("rule {self} has parameters outside [0, T]")))
        }
    }
}

impl fmt::Display for BmRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BmRule::Tau0 => write!(f, "tau0"),
            BmRule::TauT => write!(f, "tauT"),
            BmRule::DrawdownThreshold { a } => write!(f, "drawdown_threshold:{a}"),
            BmRule::TimeThreshold { t0 } => write!(f, "time_threshold:{t0}"),
            BmRule::StopLoss { a } => write!(f, "stop_loss:{a}"),
        }
    }
}

impl FromStr for BmRule {
    type Err = Error;

    /// `tau0`, `tauT`, `drawdown_threshold:A`, `time_threshold:T0`,
    /// `stop_loss:A`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let num = || -> Result<f64> {
            arg.ok_or_else(|| Error::Config(format!("rule {name} needs a parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("rule {s}: {e}")))
        };
        match name {
            "tau0" if arg.is_none() => Ok(BmRule::Tau0),
            "tauT" if arg.is_none() => Ok(BmRule::TauT),
            "drawdown_threshold" => Ok(BmRule::DrawdownThreshold { a: num()? }),
            "time_threshold" => Ok(BmRule::TimeThreshold { t0: num()? }),
            "stop_loss" => Ok(BmRule::StopLoss { a: num()? }),
            _ => Err(Error::Config(format!("unknown rule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename = "mc")]
pub struct BmRuleEstimate {
    pub rule: BmRule,
    pub estimate: f64,
    pub stderr: f64,
    pub replications: usize,
    /// Grid steps per path; `None` for exact sampling.
    pub steps: Option<usize>,
}

impl BmRuleEstimate {
    /// `self >= other - k * sqrt(se^2 + se'^2)`.
    pub fn dominates(&self, other: &BmRuleEstimate, k: f64) -> bool {
        self.estimate >= other.estimate - k * self.combined_stderr(other)
    }

    pub fn agrees(&self, other: &BmRuleEstimate, k: f64) -> bool {
        (self.estimate - other.estimate).abs() <= k * self.combined_stderr(other)
    }

    pub fn combined_stderr(&self, other: &BmRuleEstimate) -> f64 {
        self.stderr.hypot(other.stderr)
    }
}

/// Where a path rule currently stands.
struct Tracker {
    rule: BmRule,
    stop_step: usize,
    eps: f64,
    armed: bool,
    stopped_at: Option<f64>,
}

impl Tracker {
    fn new(rule: BmRule, dt: f64) -> Self {
        let stop_step = match rule {
            // Nearest grid step at or after t0, tolerant of rounding in t0/dt.
            BmRule::TimeThreshold { t0 } => (t0 / dt - 1e-9).ceil().max(0.0) as usize,
            _ => usize::MAX,
        };
        Self {
            rule,
            stop_step,
            eps: DRAWDOWN_EPS_FACTOR * dt.sqrt(),
            armed: false,
            stopped_at: None,
        }
    }

    fn observe(&mut self, k: usize, b: f64, z: f64) {
        if self.stopped_at.is_some() {
            return;
        }
        let stop = match self.rule {
            BmRule::Tau0 => true,
            BmRule::TauT => false,
            BmRule::DrawdownThreshold { a } => {
                // Arms once the drawdown reaches `a`, then waits for the next
                // return to the running maximum.
                let hit = k > 0 && z <= self.eps && (self.armed || a <= self.eps);
                self.armed |= k > 0 && z >= a;
                hit
            }
            BmRule::TimeThreshold { .. } => k >= self.stop_step,
            BmRule::StopLoss { a } => z >= a,
        };
        if stop {
            self.stopped_at = Some(b);
        }
    }
}

/// Values of `rules` for `E f(M_T - B_tau)`.
///
/// `tau0` and `tauT` use exact `(M_T, B_T)` samples on their own streams.
/// The remaining rules share one set of simulated paths: Gaussian increments
/// on `model.mc.steps` grid steps, with each step's maximum drawn from the
/// Brownian-bridge law given its endpoints, so `M` carries no discretization
/// bias. A rule's estimate depends only on the seed, not on which other
/// rules are evaluated alongside it.
pub fn mc_bm_rule_values(
    model: &BmModel,
    f: &RewardSpec,
    rules: &[BmRule],
    exec: Execution,
) -> Result<Vec<BmRuleEstimate>> {
    model.validate()?;
    let real = f.real()?;
    for r in rules {
        r.validate(model.horizon)?;
    }
    let path_rules: Vec<BmRule> = rules.iter().copied().filter(|r| !r.is_exact()).collect();
    if !path_rules.is_empty() && model.mc.steps < MIN_STEPS {
        return Err(Error::Config(format!(
            "path rules need at least {MIN_STEPS} steps, got {}",
            model.mc.steps
        )));
    }
    let (t, lambda, seed, reps) = (model.horizon, model.lambda, model.mc.seed, model.mc.replications);
    let exact = |tag: u64, g: fn(&RealReward, f64, f64) -> f64| {
        replicate(exec, reps, 1, |r, out| {
            let (m, b) = draw_max_endpoint(&mut stream(seed, tag, r), t, lambda);
            out[0] = g(&real, m, b);
        })[0]
    };
    let mut path_moments = Vec::new();
    if !path_rules.is_empty() {
        path_moments = simulate_path_rules(model, &real, &path_rules, exec);
    }
    let mut next_path = path_moments.into_iter();
    rules
        .iter()
        .map(|&rule| {
            let (m, steps) = match rule {
                BmRule::Tau0 => (exact(purpose::BM_TAU0, |f, m, _| f.eval(m)), None),
                BmRule::TauT => (exact(purpose::BM_TAUT, |f, m, b| f.eval(m - b)), None),
                _ => (next_path.next().expect("one moment per path rule"), Some(model.mc.steps)),
            };
            Ok(BmRuleEstimate {
                rule,
                estimate: m.mean,
                stderr: m.stderr(),
                replications: reps,
                steps,
            })
        })
        .collect()
}

pub fn mc_bm_rule_value(model: &BmModel, f: &RewardSpec, rule: BmRule, exec: Execution) -> Result<BmRuleEstimate> {
    Ok(mc_bm_rule_values(model, f, &[rule], exec)?.remove(0))
}

fn simulate_path_rules(
    model: &BmModel,
    f: &RealReward,
    rules: &[BmRule],
    exec: Execution,
) -> Vec<crate::par::Moments> {
    let n = model.mc.steps;
    let dt = model.dt();
    let sd = dt.sqrt();
    let drift = model.lambda * dt;
    replicate(exec, model.mc.replications, rules.len(), |r, out| {
        let mut rng = stream(model.mc.seed, purpose::BM_PATHS, r);
        let mut tracks: Vec<Tracker> = rules.iter().map(|&rule| Tracker::new(rule, dt)).collect();
        let (mut b, mut m) = (0.0f64, 0.0f64);
        for tr in tracks.iter_mut() {
            tr.observe(0, 0.0, 0.0);
        }
        for k in 1..=n {
            let z: f64 = rng.sample(StandardNormal);
            let delta = drift + sd * z;
            let u = 1.0 - rng.random::<f64>();
            let step_max = b + (delta + (delta * delta - 2.0 * dt * u.ln()).sqrt()) / 2.0;
            m = m.max(step_max);
            b += delta;
            if k < n {
                for tr in tracks.iter_mut() {
                    tr.observe(k, b, m - b);
                }
            }
        }
        for (o, tr) in out.iter_mut().zip(&tracks) {
            *o = f.eval(m - tr.stopped_at.unwrap_or(b));
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::int;

    fn exp1() -> RewardSpec {
        RewardSpec::exp_decay(int(1)).unwrap()
    }

    #[test]
    fn density_support_and_errors() {
        assert_eq!(joint_density(0.0, 0.0, 1.3, 0.4).unwrap(), 0.0);
        assert_eq!(joint_density(1.0, 1.5, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(joint_density(-0.1, -1.0, 1.0, 0.0).unwrap(), 0.0);
        assert!(joint_density(1.0, 0.5, 1.0, 0.0).unwrap() > 0.0);
        assert!(joint_density(1.0, 0.5, 0.0, 0.0).is_err());
        assert!(joint_density(1.0, 0.5, -1.0, 0.0).is_err());
    }

    #[test]
    fn density_reflection_examples() {
        let d = density_reflection_check(1.0, 0.7, &[(1.0, 0.5)]).unwrap();
        assert!(d < 1e-12, "{d}");
        let pts: Vec<(f64, f64)> = (0..50).flat_map(|i| (0..50).map(move |j| (i as f64 * 0.1, 5.0 - j as f64 * 0.2))).collect();
        assert!(density_reflection_check(2.0, 0.0, &pts).unwrap() < 1e-12);
    }

    #[test]
    fn density_normalizes() {
        let cfg = QuadConfig::default();
        for t in [1.0, 2.0] {
            for l in [-1.0, 0.0, 1.0] {
                let e = joint_expectation(t, l, &cfg, |_, _| 1.0, &[], &[]).unwrap();
                assert!((e.value - 1.0).abs() < 1e-9, "t={t} l={l}: {e:?}");
                assert!(e.error < 1e-9);
            }
        }
    }

    #[test]
    fn endpoint_moments_from_quadrature() {
        let cfg = QuadConfig::default();
        let e = joint_expectation(2.0, 0.5, &cfg, |_, b| b, &[], &[]).unwrap();
        assert!((e.value - 1.0).abs() < 1e-9);
        // E[M_1] = sqrt(2/pi) without drift.
        let e = joint_expectation(1.0, 0.0, &cfg, |s, _| s, &[], &[]).unwrap();
        assert!((e.value - (2.0 / PI).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn zero_time_gives_f_of_x() {
        let f = exp1();
        let cfg = QuadConfig::default();
        for g in [g_bm, d_bm, dtilde_bm, clipped_drawdown_bm] {
            let e = g(0.0, 0.7, 0.3, &f, &cfg).unwrap();
            assert_eq!(e.value, (-0.7f64).exp());
            assert_eq!(e.error, 0.0);
        }
        assert!(g_bm(-1.0, 0.0, 0.0, &f, &cfg).is_err());
        assert!(g_bm(1.0, -0.5, 0.0, &f, &cfg).is_err());
        assert!(g_bm(1.0, 0.5, 0.0, &RewardSpec::table_i64(&[1, 0]), &cfg).is_err());
    }

    #[test]
    fn reflection_at_zero_drift() {
        let f = exp1();
        let cfg = QuadConfig::default();
        let g = g_bm(1.0, 0.0, 0.0, &f, &cfg).unwrap();
        let d = d_bm(1.0, 0.0, 0.0, &f, &cfg).unwrap();
        assert!((g.value - d.value).abs() <= g.error + d.error, "{g:?} {d:?}");
    }

    #[test]
    fn corollary_example() {
        let r = check_bm_corollary(1.0, 0.5, 1.0, &exp1(), &QuadConfig::default()).unwrap();
        assert_eq!(r.verdict, Verdict::Strict, "{r:?}");
    }

    #[test]
    fn key_inequality_examples() {
        let cfg = QuadConfig::default();
        let r = check_bm_key_inequality(1.0, 0.0, 0.8, &exp1(), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::WithinTolerance);
        let f = RewardSpec::exp_decay(int(2)).unwrap();
        let r = check_bm_key_inequality(1.0, 0.6, 0.8, &f, &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::Strict, "{r:?}");
        assert!(r.strict_margin > r.quad_error_bound);
        let r = check_bm_key_inequality(1.0, 0.6, 0.0, &RewardSpec::linear(int(1)), &cfg).unwrap();
        assert_eq!(r.verdict, Verdict::WithinTolerance, "{r:?}");
    }

    #[test]
    fn expectations() {
        let flags = reward_flags(&exp1());
        assert_eq!(expected_key(1.0, 0.5, 0.0, &flags), Expectation::Strict);
        assert_eq!(expected_key(1.0, 0.0, 0.5, &flags), Expectation::Equal);
        assert_eq!(expected_key(1.0, 0.5, -0.5, &flags), Expectation::None);
        assert_eq!(expected_corollary(1.0, 0.0, 0.5, &flags), Expectation::Strict);
        let lin = reward_flags(&RewardSpec::linear(int(1)));
        assert_eq!(expected_key(1.0, 0.5, 0.0, &lin), Expectation::Equal);
        assert_eq!(expected_corollary(1.0, 0.5, 0.2, &lin), Expectation::Strict);
    }

    #[test]
    fn sampler_support_and_moments() {
        let xs = sample_max_endpoint(3, 1.0, 1.0, 100_000).unwrap();
        assert!(xs.iter().all(|&(m, b)| m >= b.max(0.0)));
        let n = xs.len() as f64;
        let mean = xs.iter().map(|p| p.1).sum::<f64>() / n;
        let var = xs.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() < 4.0 * (var / n).sqrt(), "{mean}");

        let xs = sample_max_endpoint(4, 1.0, 0.0, 100_000).unwrap();
        let p = xs.iter().filter(|p| p.0 <= 1.0).count() as f64 / n;
        let target = 0.682_689_492_137_085_9;
        assert!((p - target).abs() < 4.0 * (target * (1.0 - target) / n).sqrt(), "{p}");
        assert_eq!(xs, sample_max_endpoint(4, 1.0, 0.0, 100_000).unwrap());
    }

    fn small_model(lambda: f64, reps: usize) -> BmModel {
        let mut m = BmModel::new(lambda, 1.0).unwrap();
        m.mc.replications = reps;
        m.mc.seed = 17;
        m
    }

    #[test]
    fn drawdown_threshold_waits_for_the_drawdown() {
        let dt = 1e-4; // eps = 0.005
        let mut tr = Tracker::new(BmRule::DrawdownThreshold { a: 0.5 }, dt);
        for (k, b, z) in [(0, 0.0, 0.0), (1, 0.01, 0.0), (2, -0.3, 0.31), (3, 0.0, 0.001)] {
            tr.observe(k, b, z);
        }
        assert_eq!(tr.stopped_at, None);
        tr.observe(4, -0.5, 0.51);
        tr.observe(5, -0.2, 0.21);
        tr.observe(6, 0.012, 0.002);
        assert_eq!(tr.stopped_at, Some(0.012));

        let mut at_max = Tracker::new(BmRule::DrawdownThreshold { a: 0.0 }, dt);
        at_max.observe(0, 0.0, 0.0);
        assert_eq!(at_max.stopped_at, None);
        at_max.observe(1, -0.1, 0.1);
        at_max.observe(2, 0.05, 0.0);
        assert_eq!(at_max.stopped_at, Some(0.05));
    }

    #[test]
    fn constant_reward_is_exact() {
        let f = RewardSpec::custom_table(vec![(0.0, 0.7), (1.0, 0.7)]).unwrap();
        let rules = [
            BmRule::Tau0,
            BmRule::TauT,
            BmRule::DrawdownThreshold { a: 0.5 },
            BmRule::TimeThreshold { t0: 0.5 },
            BmRule::StopLoss { a: 0.3 },
        ];
        for e in mc_bm_rule_values(&small_model(0.3, 500), &f, &rules, Execution::default()).unwrap() {
            assert_eq!((e.estimate, e.stderr), (0.7, 0.0), "{}", e.rule);
        }
    }

    #[test]
    fn estimates_do_not_depend_on_batching_or_threads() {
        let f = exp1();
        let model = small_model(-0.5, 3000);
        let rules = [BmRule::TimeThreshold { t0: 0.25 }, BmRule::StopLoss { a: 0.2 }, BmRule::Tau0];
        let all = mc_bm_rule_values(&model, &f, &rules, Execution::Parallel).unwrap();
        let seq = mc_bm_rule_values(&model, &f, &rules, Execution::Sequential).unwrap();
        assert_eq!(all, seq);
        let one = mc_bm_rule_value(&model, &f, rules[1], Execution::default()).unwrap();
        assert_eq!(one, all[1]);
    }

    #[test]
    fn path_and_exact_rules_agree_on_endpoints() {
        // time_threshold(T) and stop_loss(inf-like) both stop at T.
        let f = exp1();
        let model = small_model(0.5, 20_000);
        let v = mc_bm_rule_values(
            &model,
            &f,
            &[BmRule::TauT, BmRule::TimeThreshold { t0: 1.0 }, BmRule::TimeThreshold { t0: 0.0 }, BmRule::Tau0],
            Execution::default(),
        )
        .unwrap();
        assert!(v[0].agrees(&v[1], 4.0), "{:?} {:?}", v[0], v[1]);
        assert!(v[3].agrees(&v[2], 4.0), "{:?} {:?}", v[3], v[2]);
    }

    #[test]
    fn rule_validation_and_parsing() {
        let f = exp1();
        let model = small_model(0.0, 10);
        assert!(mc_bm_rule_value(&model, &f, BmRule::TimeThreshold { t0: 2.0 }, Execution::default()).is_err());
        let mut few = model;
        few.mc.steps = 10;
        assert!(mc_bm_rule_value(&few, &f, BmRule::StopLoss { a: 0.1 }, Execution::default()).is_err());
        assert!(mc_bm_rule_value(&few, &f, BmRule::Tau0, Execution::default()).is_ok());
        for r in [BmRule::Tau0, BmRule::TauT, BmRule::DrawdownThreshold { a: 0.25 }, BmRule::TimeThreshold { t0: 0.5 }, BmRule::StopLoss { a: 1.0 }] {
            assert_eq!(r.to_string().parse::<BmRule>().unwrap(), r);
        }
        assert!("tau0:1".parse::<BmRule>().is_err());
        assert!("drawdown_threshold".parse::<BmRule>().is_err());
    }
}
