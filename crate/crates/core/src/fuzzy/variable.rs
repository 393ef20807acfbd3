use serde::{Deserialize, Serialize};

use super::{FuzzyError, MembershipFunction};

/// Closed interval a linguistic variable is defined on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Universe {
    lo: f64,
    hi: f64,
}

impl Universe {
    pub fn new(lo: f64, hi: f64) -> Result<Self, FuzzyError> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(FuzzyError::InvalidSystem(format!(
                "universe [{lo}, {hi}] is empty or non-finite"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Clamp `x` into the universe. NaN maps to the lower bound.
    pub fn clamp(&self, x: f64) -> f64 {
        if x.is_nan() {
            self.lo
        } else {
            x.clamp(self.lo, self.hi)
        }
    }

    /// `n` evenly spaced points from `lo` to `hi` inclusive (`n >= 2`).
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        assert!(n >= 2, "linspace needs at least two points");
        let step = (self.hi - self.lo) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    self.hi
                } else {
                    self.lo + step * i as f64
                }
            })
            .collect()
    }
}

impl TryFrom<[f64; 2]> for Universe {
    type Error = FuzzyError;

    fn try_from([lo, hi]: [f64; 2]) -> Result<Self, Self::Error> {
        Self::new(lo, hi)
    }
}

impl From<Universe> for [f64; 2] {
    fn from(u: Universe) -> Self {
        [u.lo, u.hi]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub label: String,
    #[serde(flatten)]
    pub mf: MembershipFunction,
}

impl Term {
    pub fn new(label: impl Into<String>, mf: MembershipFunction) -> Self {
        Self {
            label: label.into(),
            mf,
        }
    }
}

/// A named variable with an ordered list of linguistic terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinguisticVariable {
    pub name: String,
    pub universe: Universe,
    pub terms: Vec<Term>,
}

impl LinguisticVariable {
    pub fn new(
        name: impl Into<String>,
        universe: Universe,
        terms: Vec<Term>,
    ) -> Result<Self, FuzzyError> {
        let var = Self {
            name: name.into(),
            universe,
            terms,
        };
        var.validate()?;
        Ok(var)
    }

    pub(crate) fn validate(&self) -> Result<(), FuzzyError> {
        if self.terms.is_empty() {
            return Err(FuzzyError::InvalidSystem(format!(
                "variable `{}` has no terms",
                self.name
            )));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].iter().any(|o| o.label == t.label) {
                return Err(FuzzyError::InvalidSystem(format!(
                    "variable `{}` repeats term `{}`",
                    self.name, t.label
                )));
            }
        }
        if let Some(x) = self.coverage_gap() {
            return Err(FuzzyError::InvalidSystem(format!(
                "variable `{}` has no active term at {x}",
                self.name
            )));
        }
        Ok(())
    }

    /// A point of the universe where every term is zero, if one exists.
    ///
    /// Each term is linear between consecutive knots, so checking every knot
    /// and every midpoint between neighbouring knots is exhaustive.
    pub fn coverage_gap(&self) -> Option<f64> {
        let mut pts = vec![self.universe.lo(), self.universe.hi()];
        for t in &self.terms {
            pts.extend(
                t.mf.knots()
                    .into_iter()
                    .filter(|k| *k > self.universe.lo() && *k < self.universe.hi()),
            );
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let mids: Vec<f64> = pts.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        pts.into_iter()
            .chain(mids)
            .find(|&x| self.terms.iter().all(|t| t.mf.degree(x) == 0.0))
    }

    pub fn term_index(&self, label: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.label == label)
    }

    /// Membership degree of each term at `x`, after clamping `x` into the
    /// universe.
    pub fn fuzzify(&self, x: f64) -> Vec<f64> {
        let x = self.universe.clamp(x);
        self.terms.iter().map(|t| t.mf.degree(x)).collect()
    }
}
