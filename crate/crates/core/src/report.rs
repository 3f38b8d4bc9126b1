//! Machine-readable report pieces. Every number carries how it was obtained.

use serde::{Deserialize, Serialize, Serializer};

use crate::scalar::{format_rational, Rational, Scalar};

pub const TOOL: &str = "ultmax";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Num {
    Exact { value: String, approx: f64 },
    Float { value: f64 },
    Quadrature { value: f64, err: f64 },
    Mc { value: f64, stderr: f64 },
}

impl Num {
    pub fn exact(r: &Rational) -> Self {
        Num::Exact {
            value: format_rational(r),
            approx: Scalar::to_f64(r),
        }
    }

    pub fn of<S: Scalar>(x: &S) -> Self {
        match x.as_rational() {
            Some(r) => Self::exact(r),
            None => Num::Float { value: x.to_f64() },
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Num::Exact { approx, .. } => *approx,
            Num::Float { value } | Num::Quadrature { value, .. } | Num::Mc { value, .. } => *value,
        }
    }
}

pub fn ser_rational<Z: Serializer>(r: &Rational, s: Z) -> Result<Z::Ok, Z::Error> {
    Num::exact(r).serialize(s)
}

pub fn ser_scalar<S: Scalar, Z: Serializer>(x: &S, s: Z) -> Result<Z::Ok, Z::Error> {
    Num::of(x).serialize(s)
}

pub fn ser_scalars<S: Scalar, Z: Serializer>(xs: &[S], s: Z) -> Result<Z::Ok, Z::Error> {
    s.collect_seq(xs.iter().map(Num::of))
}

/// What the theory asserts for one inequality instance `lhs >= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Strict,
    Equal,
    AtLeast,
    /// Outside the hypotheses; nothing is asserted.
    None,
}

/// Envelope written by every CLI command: tool, version, resolved config
/// and result.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<C: Serialize, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: C,
    pub result: R,
}

impl<C: Serialize, R: Serialize> Envelope<C, R> {
    pub fn new(command: &str, config: C, result: R) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            config,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;

    #[test]
    fn numbers_carry_their_mode() {
        let j = serde_json::to_value(Num::exact(&ratio(3, 4))).unwrap();
        assert_eq!(j, serde_json::json!({"mode": "exact", "value": "3/4", "approx": 0.75}));
        let j = serde_json::to_value(Num::of(&0.5f64)).unwrap();
        assert_eq!(j["mode"], "float");
        let j = serde_json::to_value(Num::Mc { value: 1.0, stderr: 0.1 }).unwrap();
        assert_eq!(j["stderr"], 0.1);
    }
}
