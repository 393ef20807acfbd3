use serde::{Deserialize, Serialize};

use super::FuzzyError;

/// Piecewise-linear membership function over a real universe.
///
/// A triangle `(a, b, c)` is treated as the degenerate trapezoid
/// `(a, b, b, c)`. Equal neighbouring knots give a vertical edge, which is
/// how the "shoulder" terms at each end of a universe are written.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MembershipSpec", into = "MembershipSpec")]
pub enum MembershipFunction {
    Triangular { a: f64, b: f64, c: f64 },
    Trapezoidal { a: f64, b: f64, c: f64, d: f64 },
}

/// Declarative form used by config files: `triangular = [a, b, c]` or
/// `trapezoidal = [a, b, c, d]`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MembershipSpec {
    Triangular([f64; 3]),
    Trapezoidal([f64; 4]),
}

impl MembershipFunction {
    pub fn triangular(a: f64, b: f64, c: f64) -> Result<Self, FuzzyError> {
        check_knots(&[a, b, c])?;
        Ok(Self::Triangular { a, b, c })
    }

    pub fn trapezoidal(a: f64, b: f64, c: f64, d: f64) -> Result<Self, FuzzyError> {
        check_knots(&[a, b, c, d])?;
        Ok(Self::Trapezoidal { a, b, c, d })
    }

    /// The four trapezoid knots `(a, b, c, d)`.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        match *self {
            Self::Triangular { a, b, c } => (a, b, b, c),
            Self::Trapezoidal { a, b, c, d } => (a, b, c, d),
        }
    }

    /// Knots in ascending order, duplicates included.
    pub fn knots(&self) -> Vec<f64> {
        match *self {
            Self::Triangular { a, b, c } => vec![a, b, c],
            Self::Trapezoidal { a, b, c, d } => vec![a, b, c, d],
        }
    }

    /// Membership degree at `x`, always in `[0, 1]`.
    pub fn degree(&self, x: f64) -> f64 {
        let (a, b, c, d) = self.corners();
        if x < a || x > d {
            0.0
        } else if x >= b && x <= c {
            1.0
        } else if x < b {
            (x - a) / (b - a)
        } else {
            (d - x) / (d - c)
        }
    }
}

fn check_knots(knots: &[f64]) -> Result<(), FuzzyError> {
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(FuzzyError::InvalidMembership(format!(
            "non-finite knot in {knots:?}"
        )));
    }
    if knots.windows(2).any(|w| w[0] > w[1]) {
        return Err(FuzzyError::InvalidMembership(format!(
            "knots must be non-decreasing, got {knots:?}"
        )));
    }
    if knots.first() == knots.last() {
        return Err(FuzzyError::InvalidMembership(format!(
            "membership function has zero width: {knots:?}"
        )));
    }
    Ok(())
}

impl TryFrom<MembershipSpec> for MembershipFunction {
    type Error = FuzzyError;

    fn try_from(spec: MembershipSpec) -> Result<Self, Self::Error> {
        match spec {
            MembershipSpec::Triangular([a, b, c]) => Self::triangular(a, b, c),
            MembershipSpec::Trapezoidal([a, b, c, d]) => Self::trapezoidal(a, b, c, d),
        }
    }
}

impl From<MembershipFunction> for MembershipSpec {
    fn from(mf: MembershipFunction) -> Self {
        match mf {
            MembershipFunction::Triangular { a, b, c } => MembershipSpec::Triangular([a, b, c]),
            MembershipFunction::Trapezoidal { a, b, c, d } => {
                MembershipSpec::Trapezoidal([a, b, c, d])
            }
        }
    }
}
