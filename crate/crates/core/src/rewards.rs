//! Reward functions `f` of the distance `M_T - B_tau` and the structural
//! checks (monotone, convex and their strict variants) that gate each
//! optimality result.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{ParseError, RewardError};
use crate::scalar::{format_rational, int, parse_rational_or_decimal, Rational, Scalar};

/// Relative tolerance used only when certifying sampled (grid) functions.
const GRID_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum RewardKind {
    /// Values `f(0), ..., f(N)`.
    Table(Vec<Rational>),
    /// `f(x) = exp(-sigma x)`.
    ExpDecay { sigma: Rational },
    /// `f(x) = d^x`.
    Geometric { d: Rational },
    /// `f(0) = 1`, `f(x) = 0` otherwise.
    IndicatorTop,
    /// `f(x) = -x^alpha`, the negated concave penalty `x^alpha`.
    PowerPenaltyNegated { alpha: Rational },
    /// `f(x) = c - x`.
    Linear { c: Rational },
    /// Piecewise-linear interpolation through `(x, y)` knots starting at
    /// `x = 0`, extended past the last knot with the last slope.
    CustomTable(Vec<(f64, f64)>),
    Negated(Box<RewardKind>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// `{0, 1, ..., upper}`.
    Discrete { upper: u64 },
    /// `[0, inf)`.
    Continuous,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Discrete { upper } => write!(f, "{{0..{upper}}}"),
            Domain::Continuous => write!(f, "[0,inf)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    kind: RewardKind,
    domain: Domain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Certification {
    /// Checked exactly on every point of a discrete domain.
    Exact,
    /// Known in closed form for the family.
    Analytic,
    /// Sampled on a probe grid only; not a proof.
    GridCertifiedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardFlags {
    pub nonincreasing: bool,
    pub convex: bool,
    pub strictly_convex: bool,
    pub strictly_decreasing: bool,
    pub constant: bool,
    pub linear: bool,
    pub certification: Certification,
}

impl RewardFlags {
    /// Hypothesis of the bang-bang results: nonincreasing and convex.
    pub fn convex_nonincreasing(&self) -> bool {
        self.nonincreasing && self.convex
    }
}

/// Where [`classify`] looks at the function.
#[derive(Debug, Clone, PartialEq)]
pub enum Probe {
    Discrete(u64),
    Grid(Vec<f64>),
}

impl RewardSpec {
    pub fn new(kind: RewardKind, domain: Domain) -> Result<Self, RewardError> {
        validate_kind(&kind)?;
        match (&kind, domain) {
            (RewardKind::Table(values), Domain::Discrete { upper }) => {
                if values.len() as u64 != upper + 1 {
                    return Err(RewardError::Parameter(format!(
                        "table has {} values, domain needs {}",
                        values.len(),
                        upper + 1
                    )));
                }
            }
            (RewardKind::Table(_), Domain::Continuous) => {
                return Err(RewardError::Parameter(
                    "table rewards live on a discrete domain".into(),
                ))
            }
            _ => {}
        }
        Ok(Self { kind, domain })
    }

    pub fn table(values: Vec<Rational>) -> Result<Self, RewardError> {
        if values.is_empty() {
            return Err(RewardError::Parameter("empty table".into()));
        }
        let upper = values.len() as u64 - 1;
        Self::new(RewardKind::Table(values), Domain::Discrete { upper })
    }

    pub fn table_i64(values: &[i64]) -> Self {
        Self::table(values.iter().map(|&v| int(v)).collect()).expect("nonempty table")
    }

    pub fn exp_decay(sigma: Rational) -> Result<Self, RewardError> {
        Self::new(RewardKind::ExpDecay { sigma }, Domain::Continuous)
    }

    pub fn geometric(d: Rational) -> Result<Self, RewardError> {
        Self::new(RewardKind::Geometric { d }, Domain::Continuous)
    }

    pub fn indicator_top() -> Self {
        Self {
            kind: RewardKind::IndicatorTop,
            domain: Domain::Continuous,
        }
    }

    pub fn power_penalty_negated(alpha: Rational) -> Result<Self, RewardError> {
        Self::new(RewardKind::PowerPenaltyNegated { alpha }, Domain::Continuous)
    }

    pub fn linear(c: Rational) -> Self {
        Self {
            kind: RewardKind::Linear { c },
            domain: Domain::Continuous,
        }
    }

    pub fn custom_table(knots: Vec<(f64, f64)>) -> Result<Self, RewardError> {
        Self::new(RewardKind::CustomTable(knots), Domain::Continuous)
    }

    pub fn kind(&self) -> &RewardKind {
        &self.kind
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Restricts the function to `{0..upper}`.
    pub fn on_discrete(&self, upper: u64) -> Result<Self, RewardError> {
        match &self.kind {
            RewardKind::Table(v) => {
                if (v.len() as u64) < upper + 1 {
                    return Err(RewardError::Domain {
                        arg: upper.to_string(),
                        domain: self.domain.to_string(),
                    });
                }
                Self::table(v[..=upper as usize].to_vec())
            }
            _ => Self::new(self.kind.clone(), Domain::Discrete { upper }),
        }
    }

    /// Largest integer argument accepted, if bounded.
    pub fn upper(&self) -> Option<u64> {
        match self.domain {
            Domain::Discrete { upper } => Some(upper),
            Domain::Continuous => None,
        }
    }

    /// Exact (or floating) value at the integer point `k`.
    ///
    /// Families with irrational values (`exp_decay`, `power_penalty_negated`,
    /// `custom_table`) are rationalized from the correctly rounded `f64`.
    pub fn value<S: Scalar>(&self, k: u64) -> Result<S, RewardError> {
        if let Domain::Discrete { upper } = self.domain {
            if k > upper {
                return Err(self.domain_error(k));
            }
        }
        Ok(kind_value(&self.kind, k))
    }

    /// `f(x)` at a real point. Discrete domains accept integral `x` only.
    pub fn eval(&self, x: f64) -> Result<f64, RewardError> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(self.domain_error(x));
        }
        match self.domain {
            Domain::Discrete { .. } => {
                if x.fract() != 0.0 {
                    return Err(self.domain_error(x));
                }
                self.value::<f64>(x as u64)
            }
            Domain::Continuous => Ok(kind_eval(&self.kind, x)),
        }
    }

    /// Exact rational value at an integer point.
    pub fn exact(&self, k: u64) -> Result<Rational, RewardError> {
        self.value::<Rational>(k)
    }

    /// Tabulates `f(0..=upper)` exactly into a `table` reward.
    pub fn to_table(&self, upper: u64) -> Result<Self, RewardError> {
        let values = (0..=upper)
            .map(|k| self.exact(k))
            .collect::<Result<Vec<_>, _>>()?;
        Self::table(values)
    }

    /// `-f`: turns a reward into the penalty of the equivalent minimization.
    pub fn negate(&self) -> Self {
        let kind = match &self.kind {
            RewardKind::Table(v) => RewardKind::Table(v.iter().map(|x| -x.clone()).collect()),
            RewardKind::Negated(inner) => (**inner).clone(),
            other => RewardKind::Negated(Box::new(other.clone())),
        };
        Self {
            kind,
            domain: self.domain,
        }
    }

    /// Points where `f` is not differentiable on `(0, inf)`.
    pub fn kinks(&self) -> Vec<f64> {
        kind_kinks(&self.kind)
    }

    /// Short name such as `geometric(1/2)`.
    pub fn label(&self) -> String {
        kind_label(&self.kind)
    }

    fn domain_error(&self, arg: impl fmt::Display) -> RewardError {
        RewardError::Domain {
            arg: arg.to_string(),
            domain: self.domain.to_string(),
        }
    }
}

fn validate_kind(kind: &RewardKind) -> Result<(), RewardError> {
    let bad = |m: &str| Err(RewardError::Parameter(m.to_string()));
    match kind {
        RewardKind::Table(v) if v.is_empty() => bad("empty table"),
        RewardKind::ExpDecay { sigma } if !sigma.is_positive() => bad("exp_decay needs sigma > 0"),
        RewardKind::Geometric { d } if !(d.is_positive() && *d < Rational::one()) => {
            bad("geometric needs 0 < d < 1")
        }
        RewardKind::PowerPenaltyNegated { alpha }
            if !(alpha.is_positive() && *alpha < Rational::one()) =>
        {
            bad("power_penalty_negated needs 0 < alpha < 1")
        }
        RewardKind::CustomTable(knots) => {
            if knots.is_empty() {
                return bad("custom_table needs at least one knot");
            }
            if knots[0].0 != 0.0 {
                return bad("custom_table must start at x = 0");
            }
            if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                return bad("custom_table knots must be finite");
            }
            if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                return bad("custom_table knots must be strictly increasing in x");
            }
            Ok(())
        }
        RewardKind::Negated(inner) => validate_kind(inner),
        _ => Ok(()),
    }
}

fn to_f64(r: &Rational) -> f64 {
    ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
}

fn kind_value<S: Scalar>(kind: &RewardKind, k: u64) -> S {
    match kind {
        RewardKind::Table(v) => S::from_rational(&v[k as usize]),
        RewardKind::Geometric { d } => {
            if S::EXACT {
                S::from_rational(&num_traits::pow(d.clone(), k as usize))
            } else {
                S::from_f64(to_f64(d).powi(k as i32))
            }
        }
        RewardKind::IndicatorTop => {
            if k == 0 {
                S::one()
            } else {
                S::zero()
            }
        }
        RewardKind::Linear { c } => S::from_rational(&(c - int(k as i64))),
        RewardKind::Negated(inner) => -kind_value::<S>(inner, k),
        RewardKind::ExpDecay { .. }
        | RewardKind::PowerPenaltyNegated { .. }
        | RewardKind::CustomTable(_) => S::from_f64(kind_eval(kind, k as f64)),
    }
}

fn kind_eval(kind: &RewardKind, x: f64) -> f64 {
    match kind {
        RewardKind::Table(v) => to_f64(&v[x as usize]),
        RewardKind::ExpDecay { sigma } => (-to_f64(sigma) * x).exp(),
        RewardKind::Geometric { d } => to_f64(d).powf(x),
        RewardKind::IndicatorTop => {
            if x == 0.0 {
                1.0
            } else {
                0.0
            }
        }
        RewardKind::PowerPenaltyNegated { alpha } => -x.powf(to_f64(alpha)),
        RewardKind::Linear { c } => to_f64(c) - x,
        RewardKind::CustomTable(knots) => interpolate(knots, x),
        RewardKind::Negated(inner) => -kind_eval(inner, x),
    }
}

fn interpolate(knots: &[(f64, f64)], x: f64) -> f64 {
    if knots.len() == 1 {
        return knots[0].1;
    }
    let seg = match knots.iter().position(|&(kx, _)| kx > x) {
        Some(0) => 0,
        Some(i) => i - 1,
        None => knots.len() - 2,
    };
    let (x0, y0) = knots[seg];
    let (x1, y1) = knots[seg + 1];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn kind_kinks(kind: &RewardKind) -> Vec<f64> {
    match kind {
        RewardKind::CustomTable(knots) => knots.iter().skip(1).map(|k| k.0).collect(),
        RewardKind::Negated(inner) => kind_kinks(inner),
        _ => Vec::new(),
    }
}

/// `f` on `[0, inf)` with its parameters converted to `f64` once, for hot
/// loops (quadrature, simulation).
#[derive(Debug, Clone)]
pub struct RealReward {
    kind: RealKind,
    sign: f64,
}

#[derive(Debug, Clone)]
enum RealKind {
    Exp(f64),
    Power(f64),
    Indicator,
    NegPower(f64),
    Linear(f64),
    Custom(Vec<(f64, f64)>),
}

impl RealReward {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let v = match &self.kind {
            RealKind::Exp(sigma) => (-sigma * x).exp(),
            RealKind::Power(d) => d.powf(x),
            RealKind::Indicator => f64::from(x == 0.0),
            RealKind::NegPower(alpha) => -x.powf(*alpha),
            RealKind::Linear(c) => c - x,
            RealKind::Custom(knots) => interpolate(knots, x),
        };
        self.sign * v
    }
}

fn real_kind(kind: &RewardKind, sign: f64) -> Option<RealReward> {
    let kind = match kind {
        RewardKind::Table(_) => return None,
        RewardKind::ExpDecay { sigma } => RealKind::Exp(to_f64(sigma)),
        RewardKind::Geometric { d } => RealKind::Power(to_f64(d)),
        RewardKind::IndicatorTop => RealKind::Indicator,
        RewardKind::PowerPenaltyNegated { alpha } => RealKind::NegPower(to_f64(alpha)),
        RewardKind::Linear { c } => RealKind::Linear(to_f64(c)),
        RewardKind::CustomTable(knots) => RealKind::Custom(knots.clone()),
        RewardKind::Negated(inner) => return real_kind(inner, -sign),
    };
    Some(RealReward { kind, sign })
}

impl RewardSpec {
    /// The continuous-domain evaluator; discrete rewards are rejected.
    pub fn real(&self) -> Result<RealReward, RewardError> {
        match self.domain {
            Domain::Continuous => real_kind(&self.kind, 1.0),
            Domain::Discrete { .. } => None,
        }
        .ok_or_else(|| {
            RewardError::Parameter(format!(
                "{} is defined on {}; a reward on [0,inf) is required",
                self.label(),
                self.domain
            ))
        })
    }
}

fn kind_label(kind: &RewardKind) -> String {
    match kind {
        RewardKind::Table(v) => format!(
            "table[{}]",
            v.iter().map(format_rational).collect::<Vec<_>>().join(",")
        ),
        RewardKind::ExpDecay { sigma } => format!("exp_decay({})", format_rational(sigma)),
        RewardKind::Geometric { d } => format!("geometric({})", format_rational(d)),
        RewardKind::IndicatorTop => "indicator_top".into(),
        RewardKind::PowerPenaltyNegated { alpha } => {
            format!("power_penalty_negated({})", format_rational(alpha))
        }
        RewardKind::Linear { c } => format!("linear({})", format_rational(c)),
        RewardKind::CustomTable(k) => format!(
            "custom_table[{}]",
            k.iter()
                .map(|(x, y)| format!("{x}:{y}"))
                .collect::<Vec<_>>()
                .join(";")
        ),
        RewardKind::Negated(inner) => format!("-{}", kind_label(inner)),
    }
}

/// Structural flags of `f` as seen through `probe`.
pub fn classify(f: &RewardSpec, probe: &Probe) -> RewardFlags {
    match (probe, &f.kind) {
        (Probe::Discrete(n), _) => classify_discrete(f, *n),
        (Probe::Grid(_), RewardKind::Table(v)) => classify_discrete(f, v.len() as u64 - 1),
        (Probe::Grid(grid), kind) => analytic_flags(kind).unwrap_or_else(|| classify_grid(f, grid)),
    }
}

fn classify_discrete(f: &RewardSpec, n: u64) -> RewardFlags {
    let n = match f.upper() {
        Some(upper) => n.min(upper),
        None => n,
    };
    let values: Vec<Rational> = (0..=n)
        .map(|k| f.exact(k).expect("k within domain"))
        .collect();
    let first: Vec<Rational> = values.windows(2).map(|w| &w[1] - &w[0]).collect();
    let second: Vec<Rational> = values
        .windows(3)
        .map(|w| &w[0] - &w[1] * int(2) + &w[2])
        .collect();
    let constant = first.iter().all(Zero::is_zero);
    RewardFlags {
        nonincreasing: first.iter().all(|d| !d.is_positive()),
        strictly_decreasing: !constant && first.iter().all(Signed::is_negative),
        convex: second.iter().all(|s| !s.is_negative()),
        strictly_convex: second.iter().all(Signed::is_positive),
        linear: second.iter().all(Zero::is_zero),
        constant,
        certification: Certification::Exact,
    }
}

fn analytic_flags(kind: &RewardKind) -> Option<RewardFlags> {
    let (nonincreasing, convex, strictly_convex, strictly_decreasing, constant, linear) = match kind
    {
        RewardKind::ExpDecay { .. }
        | RewardKind::Geometric { .. }
        | RewardKind::PowerPenaltyNegated { .. } => (true, true, true, true, false, false),
        RewardKind::IndicatorTop => (true, true, false, false, false, false),
        RewardKind::Linear { .. } => (true, true, false, true, false, true),
        _ => return None,
    };
    Some(RewardFlags {
        nonincreasing,
        convex,
        strictly_convex,
        strictly_decreasing,
        constant,
        linear,
        certification: Certification::Analytic,
    })
}

fn classify_grid(f: &RewardSpec, grid: &[f64]) -> RewardFlags {
    let mut xs: Vec<f64> = grid.iter().copied().filter(|x| *x >= 0.0).collect();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    let ys: Vec<f64> = xs.iter().map(|&x| f.eval(x).unwrap_or(f64::NAN)).collect();
    let scale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1.0);
    let tol = GRID_REL_TOL * scale;
    let diffs: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    let slopes: Vec<f64> = xs
        .windows(2)
        .zip(&diffs)
        .map(|(x, d)| d / (x[1] - x[0]))
        .collect();
    let slope_steps: Vec<f64> = slopes.windows(2).map(|w| w[1] - w[0]).collect();
    let slope_tol = tol / xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let constant = diffs.iter().all(|d| d.abs() <= tol);
    RewardFlags {
        nonincreasing: diffs.iter().all(|d| *d <= tol),
        strictly_decreasing: !constant && diffs.iter().all(|d| *d < -tol),
        convex: slope_steps.iter().all(|s| *s >= -slope_tol),
        strictly_convex: slope_steps.iter().all(|s| *s > slope_tol),
        linear: slope_steps.iter().all(|s| s.abs() <= slope_tol),
        constant,
        certification: Certification::GridCertifiedOnly,
    }
}

// ---------------------------------------------------------------------------
// JSON and shorthand forms

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RewardJson {
    pub kind: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<serde_json::Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<RewardJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
}

fn json_rational(v: &serde_json::Value) -> Result<Rational, ParseError> {
    let text = match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(ParseError::Reward(format!("expected a number, got {other}"))),
    };
    parse_rational_or_decimal(&text)
}

fn json_f64(v: &serde_json::Value) -> Result<f64, ParseError> {
    match v {
        serde_json::Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| ParseError::Reward(format!("bad number {n}"))),
        serde_json::Value::String(s) => json_rational(v)
            .map(|r| to_f64(&r))
            .or_else(|_| s.parse().map_err(|_| ParseError::Reward(s.clone()))),
        other => Err(ParseError::Reward(format!("expected a number, got {other}"))),
    }
}

fn rational_json(r: &Rational) -> serde_json::Value {
    serde_json::Value::String(format_rational(r))
}

impl RewardJson {
    fn param(&self, name: &str) -> Result<Rational, ParseError> {
        let v = self
            .params
            .get(name)
            .ok_or_else(|| ParseError::Reward(format!("{} needs param {name:?}", self.kind)))?;
        json_rational(v)
    }

    fn to_kind(&self) -> Result<RewardKind, ParseError> {
        Ok(match self.kind.as_str() {
            "table" => {
                let table = self
                    .table
                    .as_ref()
                    .ok_or_else(|| ParseError::Reward("table needs \"table\"".into()))?;
                RewardKind::Table(table.iter().map(json_rational).collect::<Result<_, _>>()?)
            }
            "exp_decay" => RewardKind::ExpDecay {
                sigma: self.param("sigma")?,
            },
            "geometric" => RewardKind::Geometric { d: self.param("d")? },
            "indicator_top" => RewardKind::IndicatorTop,
            "power_penalty_negated" => RewardKind::PowerPenaltyNegated {
                alpha: self.param("alpha")?,
            },
            "linear" => RewardKind::Linear { c: self.param("c")? },
            "custom_table" => {
                let table = self
                    .table
                    .as_ref()
                    .ok_or_else(|| ParseError::Reward("custom_table needs \"table\"".into()))?;
                let knots = table
                    .iter()
                    .map(|pt| match pt.as_array().map(Vec::as_slice) {
                        Some([x, y]) => Ok((json_f64(x)?, json_f64(y)?)),
                        _ => Err(ParseError::Reward("custom_table knots are [x, y]".into())),
                    })
                    .collect::<Result<_, _>>()?;
                RewardKind::CustomTable(knots)
            }
            "negated" => {
                let inner = self
                    .inner
                    .as_ref()
                    .ok_or_else(|| ParseError::Reward("negated needs \"inner\"".into()))?;
                RewardKind::Negated(Box::new(inner.to_kind()?))
            }
            other => return Err(ParseError::Reward(format!("unknown kind {other:?}"))),
        })
    }

    fn from_kind(kind: &RewardKind) -> Self {
        let mut json = RewardJson {
            kind: String::new(),
            params: BTreeMap::new(),
            table: None,
            inner: None,
            domain: None,
        };
        let mut param = |name: &str, r: &Rational| {
            json.params.insert(name.into(), rational_json(r));
        };
        let kind_name = match kind {
            RewardKind::Table(v) => {
                json.table = Some(v.iter().map(rational_json).collect());
                "table"
            }
            RewardKind::ExpDecay { sigma } => {
                param("sigma", sigma);
                "exp_decay"
            }
            RewardKind::Geometric { d } => {
                param("d", d);
                "geometric"
            }
            RewardKind::IndicatorTop => "indicator_top",
            RewardKind::PowerPenaltyNegated { alpha } => {
                param("alpha", alpha);
                "power_penalty_negated"
            }
            RewardKind::Linear { c } => {
                param("c", c);
                "linear"
            }
            RewardKind::CustomTable(knots) => {
                json.table = Some(
                    knots
                        .iter()
                        .map(|(x, y)| serde_json::json!([x, y]))
                        .collect(),
                );
                "custom_table"
            }
            RewardKind::Negated(inner) => {
                json.inner = Some(Box::new(Self::from_kind(inner)));
                "negated"
            }
        };
        json.kind = kind_name.into();
        json
    }
}

impl TryFrom<RewardJson> for RewardSpec {
    type Error = ParseError;

    fn try_from(json: RewardJson) -> Result<Self, ParseError> {
        let kind = json.to_kind()?;
        let domain = match (&kind, json.domain) {
            (_, Some(d)) => d,
            (RewardKind::Table(v), None) => Domain::Discrete {
                upper: v.len().saturating_sub(1) as u64,
            },
            (_, None) => Domain::Continuous,
        };
        RewardSpec::new(kind, domain).map_err(|e| ParseError::Reward(e.to_string()))
    }
}

impl From<&RewardSpec> for RewardJson {
    fn from(spec: &RewardSpec) -> Self {
        let mut json = RewardJson::from_kind(&spec.kind);
        let default_domain = matches!(spec.kind, RewardKind::Table(_))
            || spec.domain == Domain::Continuous;
        if !default_domain {
            json.domain = Some(spec.domain);
        }
        json
    }
}

impl Serialize for RewardSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        RewardJson::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for RewardSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let json = RewardJson::deserialize(d)?;
        RewardSpec::try_from(json).map_err(serde::de::Error::custom)
    }
}

impl RewardSpec {
    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        let json: RewardJson =
            serde_json::from_str(text).map_err(|e| ParseError::Reward(e.to_string()))?;
        Self::try_from(json)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("reward json")
    }
}

/// Shorthand `kind[:args]`, e.g. `geometric:1/2`, `table:1,1,0`,
/// `exp_decay:1/2`, `linear:3`, `power_penalty_negated:1/2`,
/// `custom_table:0:1;2:0`, `indicator_top`. A leading `{` parses JSON.
impl FromStr for RewardSpec {
    type Err = ParseError;

    fn from_str(text: &str) -> Result<Self, ParseError> {
        let text = text.trim();
        if text.starts_with('{') {
            return Self::from_json(text);
        }
        let (name, args) = text.split_once(':').unwrap_or((text, ""));
        let arg = || parse_rational_or_decimal(args);
        let wrap = |r: Result<RewardSpec, RewardError>| r.map_err(|e| ParseError::Reward(e.to_string()));
        match name {
            "indicator_top" | "indicator" => Ok(Self::indicator_top()),
            "geometric" => wrap(Self::geometric(arg()?)),
            "exp_decay" | "exp" => wrap(Self::exp_decay(arg()?)),
            "linear" => Ok(Self::linear(arg()?)),
            "power_penalty_negated" | "power_neg" => wrap(Self::power_penalty_negated(arg()?)),
            "table" => {
                let values = args
                    .split(',')
                    .map(parse_rational_or_decimal)
                    .collect::<Result<Vec<_>, _>>()?;
                wrap(Self::table(values))
            }
            "custom_table" => {
                let knots = args
                    .split(';')
                    .map(|pt| {
                        let (x, y) = pt
                            .split_once(':')
                            .ok_or_else(|| ParseError::Reward(format!("bad knot {pt:?}")))?;
                        let num = |s: &str| {
                            s.trim()
                                .parse::<f64>()
                                .map_err(|_| ParseError::Reward(format!("bad number {s:?}")))
                        };
                        Ok((num(x)?, num(y)?))
                    })
                    .collect::<Result<Vec<_>, ParseError>>()?;
                wrap(Self::custom_table(knots))
            }
            other => Err(ParseError::Reward(format!("unknown reward {other:?}"))),
        }
    }
}

impl fmt::Display for RewardSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use proptest::prelude::*;

    fn flags(f: &RewardSpec, n: u64) -> RewardFlags {
        classify(f, &Probe::Discrete(n))
    }

    #[test]
    fn eval_examples() {
        let top = RewardSpec::indicator_top();
        assert_eq!(top.eval(0.0).unwrap(), 1.0);
        assert_eq!(top.eval(3.0).unwrap(), 0.0);
        let t = RewardSpec::table_i64(&[1, 1, 0]);
        assert_eq!(t.exact(1).unwrap(), int(1));
        let g = RewardSpec::geometric(ratio(1, 2)).unwrap();
        assert_eq!(g.exact(0).unwrap(), int(1));
        assert_eq!(g.exact(3).unwrap(), ratio(1, 8));
    }

    #[test]
    fn real_evaluator_agrees_with_eval() {
        let specs = [
            RewardSpec::exp_decay(ratio(1, 2)).unwrap(),
            RewardSpec::geometric(ratio(3, 4)).unwrap(),
            RewardSpec::power_penalty_negated(ratio(1, 2)).unwrap(),
            RewardSpec::linear(int(1)),
            RewardSpec::custom_table(vec![(0.0, 1.0), (2.0, 0.0), (3.0, 0.0)]).unwrap(),
            RewardSpec::exp_decay(int(2)).unwrap().negate(),
        ];
        for f in &specs {
            let r = f.real().unwrap();
            for x in [0.0, 0.3, 1.0, 2.5, 7.0] {
                assert_eq!(r.eval(x), f.eval(x).unwrap(), "{} at {x}", f.label());
            }
        }
        assert!(RewardSpec::table_i64(&[1, 0]).real().is_err());
    }

    #[test]
    fn out_of_domain_is_an_error() {
        let t = RewardSpec::table_i64(&[1, 1, 0]);
        assert!(matches!(t.exact(3), Err(RewardError::Domain { .. })));
        assert!(t.eval(0.5).is_err());
        assert!(RewardSpec::indicator_top().eval(-1.0).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(RewardSpec::exp_decay(int(0)).is_err());
        assert!(RewardSpec::geometric(int(1)).is_err());
        assert!(RewardSpec::power_penalty_negated(ratio(3, 2)).is_err());
        assert!(RewardSpec::custom_table(vec![(1.0, 0.0)]).is_err());
        assert!(RewardSpec::table(vec![]).is_err());
    }

    #[test]
    fn classify_examples() {
        // 1 - 2*1 + 0 = -1 < 0
        let ex = flags(&RewardSpec::table_i64(&[1, 1, 0]), 2);
        assert!(!ex.convex);
        assert!(ex.nonincreasing);

        let g = flags(&RewardSpec::geometric(ratio(1, 2)).unwrap(), 5);
        assert!(g.nonincreasing && g.convex && g.strictly_convex && g.strictly_decreasing);
        assert!(!g.constant && !g.linear);

        let c = flags(&RewardSpec::table_i64(&[4, 4, 4]), 2);
        assert!(c.constant && c.linear && c.convex);
        assert!(!c.strictly_decreasing);
    }

    #[test]
    fn short_domains_are_vacuously_convex() {
        let f = flags(&RewardSpec::table_i64(&[2, 0]), 1);
        assert!(f.convex && f.strictly_convex && f.strictly_decreasing);
        let f = flags(&RewardSpec::table_i64(&[2]), 0);
        assert!(f.constant && !f.strictly_decreasing);
    }

    #[test]
    fn linear_table_flags() {
        let f = flags(&RewardSpec::table_i64(&[3, 2, 1, 0]), 3);
        assert!(f.linear && f.convex && !f.strictly_convex && f.strictly_decreasing);
    }

    #[test]
    fn analytic_flags_match_exact_discrete_check() {
        let fams = [
            RewardSpec::exp_decay(ratio(1, 2)).unwrap(),
            RewardSpec::exp_decay(int(1)).unwrap(),
            RewardSpec::geometric(ratio(1, 4)).unwrap(),
            RewardSpec::geometric(ratio(3, 4)).unwrap(),
            RewardSpec::power_penalty_negated(ratio(1, 2)).unwrap(),
            RewardSpec::linear(int(5)),
        ];
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        for f in fams {
            let mut a = classify(&f, &Probe::Grid(grid.clone()));
            let d = flags(&f, 20);
            a.certification = d.certification;
            assert_eq!(a, d, "{f}");
        }
    }

    #[test]
    fn custom_tables_are_grid_certified() {
        let f = RewardSpec::custom_table(vec![(0.0, 1.0), (2.0, 0.0), (3.0, 0.0)]).unwrap();
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let fl = classify(&f, &Probe::Grid(grid));
        assert_eq!(fl.certification, Certification::GridCertifiedOnly);
        assert!(fl.nonincreasing && fl.convex && !fl.strictly_convex && !fl.linear);
        assert_eq!(f.eval(1.0).unwrap(), 0.5);
        assert_eq!(f.eval(10.0).unwrap(), 0.0);
        assert_eq!(f.kinks(), vec![2.0, 3.0]);
    }

    #[test]
    fn json_schema_round_trip() {
        let text = r#"{"kind":"geometric","params":{"d":"1/2"}}"#;
        let f = RewardSpec::from_json(text).unwrap();
        assert_eq!(f, RewardSpec::geometric(ratio(1, 2)).unwrap());
        assert_eq!(f.to_json(), text);
        let t = RewardSpec::from_json(r#"{"kind":"table","table":[1,"1",0.5]}"#).unwrap();
        assert_eq!(t.exact(2).unwrap(), ratio(1, 2));
        let n = RewardSpec::from_json(r#"{"kind":"exp_decay","params":{"sigma":0.5}}"#).unwrap();
        assert_eq!(n, RewardSpec::exp_decay(ratio(1, 2)).unwrap());
        assert!(RewardSpec::from_json(r#"{"kind":"bogus"}"#).is_err());
    }

    #[test]
    fn shorthand_parsing() {
        let t: RewardSpec = "table:1,1,0".parse().unwrap();
        assert_eq!(t, RewardSpec::table_i64(&[1, 1, 0]));
        let g: RewardSpec = "geometric:1/2".parse().unwrap();
        assert_eq!(g.label(), "geometric(1/2)");
        let c: RewardSpec = "custom_table:0:1;2:0".parse().unwrap();
        assert_eq!(c.eval(1.0).unwrap(), 0.5);
        assert!("geometric:2".parse::<RewardSpec>().is_err());
    }

    #[test]
    fn negation_is_an_involution() {
        let g = RewardSpec::geometric(ratio(1, 3)).unwrap();
        assert_eq!(g.negate().negate(), g);
        assert_eq!(g.negate().exact(2).unwrap(), ratio(-1, 9));
        let t = RewardSpec::table_i64(&[3, 1, 0]);
        assert_eq!(t.negate(), RewardSpec::table_i64(&[-3, -1, 0]));
    }

    /// Flags of the penalty `-f`: nondecreasing and concave. Test-only.
    fn dual_flags(f: &RewardSpec, n: u64) -> (bool, bool) {
        let v: Vec<Rational> = (0..=n).map(|k| f.exact(k).unwrap()).collect();
        let nondecreasing = v.windows(2).all(|w| w[1] >= w[0]);
        let concave = v
            .windows(3)
            .all(|w| &w[0] - &w[1] * int(2) + &w[2] <= Rational::zero());
        (nondecreasing, concave)
    }

    proptest! {
        #[test]
        fn negation_flips_monotonicity_and_curvature(vals in prop::collection::vec(-20i64..20, 1..10)) {
            let f = RewardSpec::table_i64(&vals);
            let n = vals.len() as u64 - 1;
            let fl = flags(&f, n);
            let (nondec, concave) = dual_flags(&f.negate(), n);
            prop_assert_eq!(fl.nonincreasing, nondec);
            prop_assert_eq!(fl.convex, concave);
        }

        #[test]
        fn flag_implications_hold(vals in prop::collection::vec(-5i64..5, 1..8)) {
            let fl = flags(&RewardSpec::table_i64(&vals), vals.len() as u64 - 1);
            prop_assert!(!fl.strictly_convex || fl.convex);
            prop_assert!(!fl.strictly_decreasing || (fl.nonincreasing && !fl.constant));
            prop_assert!(!fl.constant || fl.linear);
        }
    }
}
