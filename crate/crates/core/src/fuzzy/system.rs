use std::fmt;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::output::{defuzzify_centroid, AggregatedOutput};
use super::{FuzzyError, LinguisticVariable, MembershipFunction, Term, Universe};

/// Number of difficulty levels the controller can output.
pub const LEVEL_COUNT: usize = 6;

/// Normative controller definition, in the same format [`FuzzySystem::from_toml_str`] reads.
pub const DEFAULT_CONFIG: &str = include_str!("../../config/default_fuzzy.toml");

/// One of the three controller inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InputVar {
    Education,
    Age,
    Standing,
}

impl InputVar {
    pub const ALL: [InputVar; 3] = [InputVar::Education, InputVar::Age, InputVar::Standing];

    pub fn index(self) -> usize {
        match self {
            InputVar::Education => 0,
            InputVar::Age => 1,
            InputVar::Standing => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InputVar::Education => "education_years",
            InputVar::Age => "age_years",
            InputVar::Standing => "standing_pct",
        }
    }
}

impl fmt::Display for InputVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputVar {
    type Err = FuzzyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "education_years" | "education" | "edu" => Ok(InputVar::Education),
            "age_years" | "age" => Ok(InputVar::Age),
            "standing_pct" | "standing" => Ok(InputVar::Standing),
            other => Err(FuzzyError::InvalidSystem(format!(
                "unknown input `{other}`"
            ))),
        }
    }
}

/// Crisp controller inputs in their natural units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrispInput {
    /// Completed years of schooling, universe `[0, 16]`.
    pub education_years: f64,
    /// Age in years, universe `[10, 30]`.
    pub age_years: f64,
    /// Percent of questions answered correctly, universe `[0, 100]`.
    pub standing_pct: f64,
}

impl CrispInput {
    pub fn new(education_years: f64, age_years: f64, standing_pct: f64) -> Self {
        Self {
            education_years,
            age_years,
            standing_pct,
        }
    }

    pub fn get(&self, var: InputVar) -> f64 {
        match var {
            InputVar::Education => self.education_years,
            InputVar::Age => self.age_years,
            InputVar::Standing => self.standing_pct,
        }
    }

    pub fn set(&mut self, var: InputVar, value: f64) {
        match var {
            InputVar::Education => self.education_years = value,
            InputVar::Age => self.age_years = value,
            InputVar::Standing => self.standing_pct = value,
        }
    }
}

/// AND-combined antecedent (one term per input) and a single consequent term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rule {
    pub antecedent: [usize; 3],
    pub consequent: usize,
}

/// Result of one inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inference {
    /// Centroid of the aggregated output, in `[0, 5]`.
    pub crisp: f64,
    /// `crisp` rounded half-up and clamped to `0..=5`.
    pub level: u8,
}

/// One point of a control surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub x1: f64,
    pub x2: f64,
    pub crisp: f64,
}

/// Mamdani controller: three inputs, six-term difficulty output, full
/// 3×3×3 rule grid. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzySystem {
    inputs: [LinguisticVariable; 3],
    output: LinguisticVariable,
    rules: Vec<Rule>,
}

impl FuzzySystem {
    pub fn new(
        inputs: [LinguisticVariable; 3],
        output: LinguisticVariable,
        rules: Vec<Rule>,
    ) -> Result<Self, FuzzyError> {
        for var in inputs.iter().chain(std::iter::once(&output)) {
            var.validate()?;
        }
        for var in &inputs {
            if var.terms.len() != 3 {
                return Err(FuzzyError::InvalidSystem(format!(
                    "input `{}` must have exactly 3 terms, has {}",
                    var.name,
                    var.terms.len()
                )));
            }
        }
        if output.terms.len() != LEVEL_COUNT {
            return Err(FuzzyError::InvalidSystem(format!(
                "output `{}` must have exactly {LEVEL_COUNT} terms, has {}",
                output.name,
                output.terms.len()
            )));
        }
        if rules.len() != 27 {
            return Err(FuzzyError::InvalidSystem(format!(
                "rule base must have 27 rules, has {}",
                rules.len()
            )));
        }
        let mut seen = [false; 27];
        for r in &rules {
            if r.antecedent.iter().any(|&t| t >= 3) || r.consequent >= LEVEL_COUNT {
                return Err(FuzzyError::InvalidSystem(format!(
                    "rule {r:?} references a term that does not exist"
                )));
            }
            let slot = r.antecedent[0] * 9 + r.antecedent[1] * 3 + r.antecedent[2];
            if std::mem::replace(&mut seen[slot], true) {
                return Err(FuzzyError::InvalidSystem(format!(
                    "antecedent {:?} appears more than once",
                    r.antecedent
                )));
            }
        }
        Ok(Self {
            inputs,
            output,
            rules,
        })
    }

    /// The default controller, built in code.
    ///
    /// Consequent level = education rank + age rank + standing rank, plus one
    /// when standing is Good, capped at 5.
    pub fn normative() -> Self {
        let tri = |a, b, c| MembershipFunction::triangular(a, b, c).expect("valid triangle");
        let trap =
            |a, b, c, d| MembershipFunction::trapezoidal(a, b, c, d).expect("valid trapezoid");
        let var = |name: &str, lo, hi, terms: Vec<Term>| {
            LinguisticVariable::new(name, Universe::new(lo, hi).expect("universe"), terms)
                .expect("valid variable")
        };

        let education = var(
            "education_years",
            0.0,
            16.0,
            vec![
                Term::new("School", trap(0.0, 0.0, 6.0, 9.0)),
                Term::new("HighSchool", tri(6.0, 10.0, 13.0)),
                Term::new("University", trap(10.0, 14.0, 16.0, 16.0)),
            ],
        );
        let age = var(
            "age_years",
            10.0,
            30.0,
            vec![
                Term::new("Child", trap(10.0, 10.0, 12.0, 15.0)),
                Term::new("Teen", tri(13.0, 17.0, 21.0)),
                Term::new("MidAge", trap(19.0, 24.0, 30.0, 30.0)),
            ],
        );
        let standing = var(
            "standing_pct",
            0.0,
            100.0,
            vec![
                Term::new("Poor", trap(0.0, 0.0, 30.0, 50.0)),
                Term::new("Average", tri(35.0, 55.0, 75.0)),
                Term::new("Good", trap(60.0, 80.0, 100.0, 100.0)),
            ],
        );
        let difficulty = var(
            "difficulty",
            0.0,
            5.0,
            (0..LEVEL_COUNT)
                .map(|k| {
                    let k = k as f64;
                    Term::new(format!("Level{k}"), tri(k - 1.0, k, k + 1.0))
                })
                .collect(),
        );

        let mut rules = Vec::with_capacity(27);
        for e in 0..3 {
            for a in 0..3 {
                for s in 0..3 {
                    let bonus = usize::from(s == 2);
                    rules.push(Rule {
                        antecedent: [e, a, s],
                        consequent: (e + a + s + bonus).min(LEVEL_COUNT - 1),
                    });
                }
            }
        }
        Self::new([education, age, standing], difficulty, rules).expect("normative system is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, FuzzyError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| FuzzyError::Config(e.to_string()))?;
        file.into_system()
    }

    pub fn from_file(path: &Path) -> Result<Self, FuzzyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FuzzyError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let label = |v: &LinguisticVariable, i: usize| v.terms[i].label.clone();
        let file = ConfigFile {
            rules: self
                .rules
                .iter()
                .map(|r| {
                    [
                        label(&self.inputs[0], r.antecedent[0]),
                        label(&self.inputs[1], r.antecedent[1]),
                        label(&self.inputs[2], r.antecedent[2]),
                        label(&self.output, r.consequent),
                    ]
                })
                .collect(),
            input: self.inputs.to_vec(),
            output: self.output.clone(),
        };
        toml::to_string(&file).expect("config serializes")
    }

    pub fn input(&self, var: InputVar) -> &LinguisticVariable {
        &self.inputs[var.index()]
    }

    pub fn output(&self) -> &LinguisticVariable {
        &self.output
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Clamp every component of `input` into its universe.
    pub fn clamp(&self, input: CrispInput) -> CrispInput {
        let mut out = input;
        for var in InputVar::ALL {
            out.set(var, self.input(var).universe.clamp(input.get(var)));
        }
        out
    }

    /// Firing strength of every rule (min of its three antecedent degrees),
    /// in rule order.
    pub fn rule_strengths(&self, input: CrispInput) -> Vec<f64> {
        let degrees: Vec<Vec<f64>> = InputVar::ALL
            .iter()
            .map(|&v| self.input(v).fuzzify(input.get(v)))
            .collect();
        self.rules
            .iter()
            .map(|r| {
                (0..3)
                    .map(|i| degrees[i][r.antecedent[i]])
                    .fold(1.0, f64::min)
            })
            .collect()
    }

    /// Min-implication, max-aggregation over the output terms.
    pub fn aggregate(&self, strengths: &[f64]) -> AggregatedOutput {
        let mut heights = vec![0.0f64; self.output.terms.len()];
        for (r, &s) in self.rules.iter().zip(strengths) {
            heights[r.consequent] = heights[r.consequent].max(s);
        }
        AggregatedOutput::new(
            self.output.universe,
            self.output
                .terms
                .iter()
                .zip(heights)
                .map(|(t, h)| (t.mf, h))
                .collect(),
        )
    }

    pub fn infer(&self, input: CrispInput) -> Result<Inference, FuzzyError> {
        let strengths = self.rule_strengths(input);
        let crisp = defuzzify_centroid(&self.aggregate(&strengths))?;
        Ok(Inference {
            crisp,
            level: round_level(crisp),
        })
    }

    /// Crisp output over the two free inputs, with `fixed` held at `value`.
    /// Rows are ordered with the first free input outermost.
    pub fn surface_grid(
        &self,
        fixed: InputVar,
        value: f64,
        resolution: usize,
    ) -> Result<Vec<SurfacePoint>, FuzzyError> {
        if resolution < 2 {
            return Err(FuzzyError::InvalidSystem(
                "surface resolution must be at least 2".into(),
            ));
        }
        let [v1, v2] = free_inputs(fixed);
        let xs1 = self.input(v1).universe.linspace(resolution);
        let xs2 = self.input(v2).universe.linspace(resolution);
        let mut grid = Vec::with_capacity(resolution * resolution);
        let mut input = CrispInput::new(0.0, 0.0, 0.0);
        input.set(fixed, value);
        for &x1 in &xs1 {
            for &x2 in &xs2 {
                input.set(v1, x1);
                input.set(v2, x2);
                grid.push(SurfacePoint {
                    x1,
                    x2,
                    crisp: self.infer(input)?.crisp,
                });
            }
        }
        Ok(grid)
    }
}

impl Default for FuzzySystem {
    fn default() -> Self {
        Self::normative()
    }
}

/// The two inputs left free when `fixed` is held constant, in input order.
pub fn free_inputs(fixed: InputVar) -> [InputVar; 2] {
    match fixed {
        InputVar::Education => [InputVar::Age, InputVar::Standing],
        InputVar::Age => [InputVar::Education, InputVar::Standing],
        InputVar::Standing => [InputVar::Education, InputVar::Age],
    }
}

/// Round half-up, clamped to the level range.
pub fn round_level(crisp: f64) -> u8 {
    (crisp + 0.5).floor().clamp(0.0, (LEVEL_COUNT - 1) as f64) as u8
}

/// Write a surface as CSV with header `x1,x2,crisp`.
pub fn write_surface_csv<W: Write>(mut w: W, grid: &[SurfacePoint]) -> io::Result<()> {
    writeln!(w, "x1,x2,crisp")?;
    for p in grid {
        writeln!(w, "{},{},{}", p.x1, p.x2, p.crisp)?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ConfigFile {
    /// `[input1 term, input2 term, input3 term, output term]`
    rules: Vec<[String; 4]>,
    input: Vec<LinguisticVariable>,
    output: LinguisticVariable,
}

impl ConfigFile {
    fn into_system(self) -> Result<FuzzySystem, FuzzyError> {
        let inputs: [LinguisticVariable; 3] = self.input.try_into().map_err(|v: Vec<_>| {
            FuzzyError::InvalidSystem(format!("expected 3 inputs, found {}", v.len()))
        })?;
        let lookup = |var: &LinguisticVariable, label: &str| {
            var.term_index(label).ok_or_else(|| {
                FuzzyError::InvalidSystem(format!(
                    "rule uses unknown term `{label}` of `{}`",
                    var.name
                ))
            })
        };
        let rules = self
            .rules
            .iter()
            .map(|r| {
                Ok(Rule {
                    antecedent: [
                        lookup(&inputs[0], &r[0])?,
                        lookup(&inputs[1], &r[1])?,
                        lookup(&inputs[2], &r[2])?,
                    ],
                    consequent: lookup(&self.output, &r[3])?,
                })
            })
            .collect::<Result<Vec<_>, FuzzyError>>()?;
        FuzzySystem::new(inputs, self.output, rules)
    }
}
