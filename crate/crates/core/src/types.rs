//! Shared domain types: difficulty vectors, problem and evaluation records,
//! accuracy categories, combination laws, and boundary estimates.
//!
//! Everything here is immutable after construction and safe to share across
//! threads. Serialization conventions are chosen for exactness:
//!
//! - difficulty values are stored as decimal strings (shortest form that
//!   round-trips the underlying f64 bit-exactly);
//! - gold answers are arbitrary-precision rationals serialized `"num/den"`,
//!   always with an explicit denominator, so division tasks and 1e20-scale
//!   products survive round trips without floating-point corruption.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::grade::Trace;

/// Errors for validation and category classification.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid difficulty: {0}")]
    InvalidDifficulty(String),
    #[error("non-exact answer: {0}")]
    NonExactAnswer(String),
    #[error("duplicate problem id: {0}")]
    DuplicateId(String),
    #[error("accuracy {0} outside [0, 1]")]
    OutOfRange(f64),
}

// ---------------------------------------------------------------------------
// Difficulty dimensions
// ---------------------------------------------------------------------------

/// A named difficulty dimension. The declaration order is the canonical
/// ordering used everywhere (serialization, axis defaults).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dim {
    /// Number of reasoning steps required by the intended plan.
    PlanSteps,
    /// Magnitude of the largest multiplication required.
    MaxCalc,
    /// Hop count of a multi-hop question.
    Hops,
    /// Knowledge entities per hop of a multi-hop question.
    Entities,
    /// Language-ease score of a multilingual item (higher = easier).
    LangEase,
}

impl Dim {
    pub const ALL: [Dim; 5] = [
        Dim::PlanSteps,
        Dim::MaxCalc,
        Dim::Hops,
        Dim::Entities,
        Dim::LangEase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Dim::PlanSteps => "plan_steps",
            Dim::MaxCalc => "max_calc",
            Dim::Hops => "hops",
            Dim::Entities => "entities",
            Dim::LangEase => "lang_ease",
        }
    }

    pub fn parse(s: &str) -> Option<Dim> {
        Dim::ALL.iter().copied().find(|d| d.name() == s)
    }

    /// Dimensions whose values are integral counts.
    pub fn integral(self) -> bool {
        matches!(self, Dim::PlanSteps | Dim::Hops)
    }
}

impl fmt::Display for Dim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

// ---------------------------------------------------------------------------
// DifficultyVector
// ---------------------------------------------------------------------------

/// Named difficulty coordinates of a problem.
///
/// Invariants (checked by [`DifficultyVector::validate`], enforced on every
/// record by [`validate_problem`]): every value finite and >= 0; `max_calc`
/// >= 1 when present; at least one dimension present.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DifficultyVector {
    dims: BTreeMap<Dim, f64>,
}

impl DifficultyVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builder-style insertion.
    pub fn with(mut self, dim: Dim, value: f64) -> Self {
        self.dims.insert(dim, value);
        self
    }

    pub fn set(&mut self, dim: Dim, value: f64) {
        self.dims.insert(dim, value);
    }

    pub fn get(&self, dim: Dim) -> Option<f64> {
        self.dims.get(&dim).copied()
    }

    pub fn contains(&self, dim: Dim) -> bool {
        self.dims.contains_key(&dim)
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Iterate in canonical dimension order.
    pub fn iter(&self) -> impl Iterator<Item = (Dim, f64)> + '_ {
        self.dims.iter().map(|(d, v)| (*d, *v))
    }

    /// The coordinates keyed by dimension name, for law evaluation.
    pub fn to_named(&self) -> BTreeMap<String, f64> {
        self.dims
            .iter()
            .map(|(d, v)| (d.name().to_string(), *v))
            .collect()
    }

    /// Check the type invariants (finite, nonnegative, `max_calc >= 1`,
    /// nonempty, integral dims integral).
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.dims.is_empty() {
            return Err(CoreError::InvalidDifficulty(
                "no difficulty dimensions present".into(),
            ));
        }
        for (dim, v) in &self.dims {
            if !v.is_finite() || *v < 0.0 {
                return Err(CoreError::InvalidDifficulty(format!(
                    "{dim} = {v} (must be finite and >= 0)"
                )));
            }
            if *dim == Dim::MaxCalc && *v < 1.0 {
                return Err(CoreError::InvalidDifficulty(format!(
                    "max_calc = {v} (must be >= 1)"
                )));
            }
            if dim.integral() && v.fract() != 0.0 {
                return Err(CoreError::InvalidDifficulty(format!(
                    "{dim} = {v} (must be integral)"
                )));
            }
        }
        Ok(())
    }
}

impl FromIterator<(Dim, f64)> for DifficultyVector {
    fn from_iter<T: IntoIterator<Item = (Dim, f64)>>(iter: T) -> Self {
        DifficultyVector {
            dims: iter.into_iter().collect(),
        }
    }
}

// Serialized as a map of dimension name -> decimal string. The string is the
// shortest decimal that round-trips the f64 exactly (Rust's `Display`), so a
// write/read cycle is bit-exact. Plain JSON numbers are accepted on input for
// hand-written files.
impl Serialize for DifficultyVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.dims.len()))?;
        for (dim, v) in &self.dims {
            map.serialize_entry(dim.name(), &format!("{v}"))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for DifficultyVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct DvVisitor;

        impl<'de> Visitor<'de> for DvVisitor {
            type Value = DifficultyVector;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of dimension name to decimal-string value")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                #[derive(Deserialize)]
                #[serde(untagged)]
                enum NumOrStr {
                    Num(f64),
                    Str(String),
                }

                let mut dims = BTreeMap::new();
                while let Some((key, value)) = access.next_entry::<String, NumOrStr>()? {
                    let dim = Dim::parse(&key)
                        .ok_or_else(|| de::Error::custom(format!("unknown dimension `{key}`")))?;
                    let v = match value {
                        NumOrStr::Num(v) => v,
                        NumOrStr::Str(s) => s
                            .parse::<f64>()
                            .map_err(|e| de::Error::custom(format!("bad value for {key}: {e}")))?,
                    };
                    dims.insert(dim, v);
                }
                Ok(DifficultyVector { dims })
            }
        }

        deserializer.deserialize_map(DvVisitor)
    }
}

// ---------------------------------------------------------------------------
// Exact rationals on the wire
// ---------------------------------------------------------------------------

/// Parse a `"num/den"` string into an exact rational. A bare integer string
/// is accepted and treated as denominator 1.
pub fn rational_from_wire(s: &str) -> Result<BigRational, CoreError> {
    let (num_s, den_s) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let num = BigInt::from_str(num_s.trim())
        .map_err(|_| CoreError::NonExactAnswer(format!("bad numerator in `{s}`")))?;
    let den = BigInt::from_str(den_s.trim())
        .map_err(|_| CoreError::NonExactAnswer(format!("bad denominator in `{s}`")))?;
    if den.is_zero() {
        return Err(CoreError::NonExactAnswer(format!(
            "zero denominator in `{s}`"
        )));
    }
    Ok(BigRational::new(num, den))
}

/// Format a rational as `"num/den"` (always with the denominator, reduced).
pub fn rational_to_wire(r: &BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Serde adapter for `BigRational` fields using the `"num/den"` convention.
pub mod rational_wire {
    use super::*;

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&rational_to_wire(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        rational_from_wire(&s).map_err(de::Error::custom)
    }
}

/// Serde adapter for `BigUint` fields serialized as decimal strings.
pub mod biguint_wire {
    use super::*;

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::from_str(&s).map_err(de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// ProblemRecord
// ---------------------------------------------------------------------------

/// The kinds of benchmark items the toolkit generates or ingests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Mult,
    Add,
    Sub,
    Div,
    CompoundExpr,
    WordProblem,
    Multihop,
    Multilingual,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Mult => "mult",
            TaskKind::Add => "add",
            TaskKind::Sub => "sub",
            TaskKind::Div => "div",
            TaskKind::CompoundExpr => "compound_expr",
            TaskKind::WordProblem => "word_problem",
            TaskKind::Multihop => "multihop",
            TaskKind::Multilingual => "multilingual",
        }
    }
}

fn default_language() -> String {
    "en".to_string()
}

/// One benchmark item with exact ground truth and difficulty labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRecord {
    pub id: String,
    pub task_kind: TaskKind,
    pub prompt: String,
    #[serde(with = "rational_wire")]
    pub gold_answer: BigRational,
    pub difficulty: DifficultyVector,
    pub template_id: Option<String>,
    pub seed: u64,
    #[serde(default = "default_language")]
    pub language: String,
}

/// Validate a single record's invariants (difficulty well-formed and
/// consistent with the task kind). Id uniqueness is a dataset-level check,
/// see [`validate_dataset`].
pub fn validate_problem(p: &ProblemRecord) -> Result<(), CoreError> {
    p.difficulty.validate()?;
    let need: &[Dim] = match p.task_kind {
        TaskKind::WordProblem => &[Dim::PlanSteps, Dim::MaxCalc],
        TaskKind::Mult | TaskKind::Add | TaskKind::Sub | TaskKind::Div => &[Dim::MaxCalc],
        TaskKind::CompoundExpr => &[Dim::PlanSteps],
        TaskKind::Multihop => &[Dim::Hops, Dim::Entities],
        TaskKind::Multilingual => &[Dim::LangEase],
    };
    for dim in need {
        if !p.difficulty.contains(*dim) {
            return Err(CoreError::InvalidDifficulty(format!(
                "{} problem `{}` is missing required dimension {}",
                p.task_kind.name(),
                p.id,
                dim
            )));
        }
    }
    Ok(())
}

/// Validate every record plus dataset-level id uniqueness.
pub fn validate_dataset(ds: &[ProblemRecord]) -> Result<(), CoreError> {
    let mut seen = std::collections::BTreeSet::new();
    for p in ds {
        validate_problem(p)?;
        if !seen.insert(p.id.as_str()) {
            return Err(CoreError::DuplicateId(p.id.clone()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Strategies and evaluation records
// ---------------------------------------------------------------------------

/// Prompting strategy tags. Wire names are the snake_case forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyTag {
    Direct,
    ZeroShotCot,
    Cot3,
    Pot,
    Tool,
    Ltm,
    ComplexCot,
    MarpCot,
    MarpPot,
    CotSc,
}

impl StrategyTag {
    pub const ALL: [StrategyTag; 10] = [
        StrategyTag::Direct,
        StrategyTag::ZeroShotCot,
        StrategyTag::Cot3,
        StrategyTag::Pot,
        StrategyTag::Tool,
        StrategyTag::Ltm,
        StrategyTag::ComplexCot,
        StrategyTag::MarpCot,
        StrategyTag::MarpPot,
        StrategyTag::CotSc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyTag::Direct => "direct",
            StrategyTag::ZeroShotCot => "zero_shot_cot",
            StrategyTag::Cot3 => "cot3",
            StrategyTag::Pot => "pot",
            StrategyTag::Tool => "tool",
            StrategyTag::Ltm => "ltm",
            StrategyTag::ComplexCot => "complex_cot",
            StrategyTag::MarpCot => "marp_cot",
            StrategyTag::MarpPot => "marp_pot",
            StrategyTag::CotSc => "cot_sc",
        }
    }

    /// Accepts both snake_case wire names and kebab-case CLI spellings.
    pub fn parse(s: &str) -> Option<StrategyTag> {
        let snake = s.replace('-', "_");
        StrategyTag::ALL.iter().copied().find(|t| t.name() == snake)
    }

    /// Program-of-thought strategies emit code-style transcripts.
    pub fn is_pot(self) -> bool {
        matches!(self, StrategyTag::Pot | StrategyTag::MarpPot)
    }
}

impl fmt::Display for StrategyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome of grading one trace against the gold answer.
///
/// `max_calc` is the exact magnitude of the largest multiplication claimed in
/// the trace (serialized as a decimal string; products can exceed u64).
/// `plan_correct` is reserved for an externally supplied human judgment of
/// plan quality and is absent in automated grading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradeResult {
    pub answer_correct: bool,
    pub plan_steps: usize,
    #[serde(with = "biguint_wire")]
    pub max_calc: BigUint,
    pub calc_all_correct: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plan_correct: Option<bool>,
}

/// One model run on one problem.
///
/// The wire schema is `{"problem_id","strategy","model_id","samples","grade",
/// "input_tokens","output_tokens","latency_ms"}`; parsed traces are an
/// in-memory convenience and are not serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub problem_id: String,
    pub strategy: StrategyTag,
    pub model_id: String,
    pub samples: Vec<String>,
    #[serde(skip)]
    pub traces: Vec<Option<Trace>>,
    pub grade: Option<GradeResult>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
}

// ---------------------------------------------------------------------------
// Accuracy categories
// ---------------------------------------------------------------------------

/// The three accuracy regimes of a difficulty point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RBCategory {
    /// Completely feasible: accuracy >= 0.9.
    CFRB,
    /// Partially feasible: accuracy strictly between 0.1 and 0.9.
    PFRB,
    /// Completely infeasible: accuracy <= 0.1.
    CIRB,
}

impl fmt::Display for RBCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RBCategory::CFRB => "CFRB",
            RBCategory::PFRB => "PFRB",
            RBCategory::CIRB => "CIRB",
        })
    }
}

/// Total classification of an accuracy value into the three categories.
///
/// The boundary values belong to the outer categories: exactly 0.9 is CFRB
/// and exactly 0.1 is CIRB (the category definitions use `Acc >= 90%` and
/// `Acc <= 10%`), so plotted regions are closed on the feasible/infeasible
/// sides.
pub fn categorize_accuracy(acc: f64) -> Result<RBCategory, CoreError> {
    if !(0.0..=1.0).contains(&acc) || acc.is_nan() {
        return Err(CoreError::OutOfRange(acc));
    }
    Ok(if acc >= 0.9 {
        RBCategory::CFRB
    } else if acc <= 0.1 {
        RBCategory::CIRB
    } else {
        RBCategory::PFRB
    })
}

// ---------------------------------------------------------------------------
// Combination law
// ---------------------------------------------------------------------------

/// One term of a combination law: scale `N` and offset `b` for the named
/// capability dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawTerm {
    pub name: String,
    #[serde(rename = "N")]
    pub n: f64,
    pub b: f64,
}

/// The fitted combination law: a boundary for n capabilities combines as the
/// weighted harmonic form
///
/// ```text
/// B(t1..tn) = 1 / ((n-1) * sum_i N_i / (B_i - b_i) + k)      n >= 2
/// B(t1)     = 1 / (N_1 / (B_1 - b_1) + k)                    n == 1
/// ```
///
/// `k` is the boundary-independence constant (0 when the capability split is
/// clean). Term count `n` is implicit in `terms.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationLaw {
    pub terms: Vec<LawTerm>,
    pub k: f64,
}

impl CombinationLaw {
    pub fn new(terms: Vec<LawTerm>, k: f64) -> Self {
        CombinationLaw { terms, k }
    }

    /// Term count.
    pub fn n(&self) -> usize {
        self.terms.len()
    }

    pub fn term(&self, name: &str) -> Option<&LawTerm> {
        self.terms.iter().find(|t| t.name == name)
    }

    /// Check structural invariants: at least one term, positive scales,
    /// nonnegative k.
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.terms.is_empty() {
            return Err(CoreError::InvalidDifficulty("law has no terms".into()));
        }
        for t in &self.terms {
            if t.n <= 0.0 || !t.n.is_finite() {
                return Err(CoreError::InvalidDifficulty(format!(
                    "term {}: N = {} (must be positive and finite)",
                    t.name, t.n
                )));
            }
            if !t.b.is_finite() {
                return Err(CoreError::InvalidDifficulty(format!(
                    "term {}: b = {} (must be finite)",
                    t.name, t.b
                )));
            }
        }
        if self.k < 0.0 || self.k.is_nan() {
            return Err(CoreError::InvalidDifficulty(format!(
                "k = {} (must be >= 0)",
                self.k
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Boundary estimates
// ---------------------------------------------------------------------------

/// A located accuracy boundary: the largest value along `axis` (other
/// coordinates pinned to `fixed`) at which accuracy still reaches `level_K`,
/// found by bisection to within `tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryEstimate {
    #[serde(rename = "level_K")]
    pub level_k: f64,
    /// A dimension name, or `"combined"` for the combined-difficulty axis.
    pub axis: String,
    pub fixed: DifficultyVector,
    pub value: f64,
    pub tol: f64,
}

// ---------------------------------------------------------------------------
// Misc shared helpers
// ---------------------------------------------------------------------------

/// Exact integer-valued rational from an i64 (test and generator helper).
pub fn rational_int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// True when the rational is an integer.
pub fn rational_is_integer(r: &BigRational) -> bool {
    r.denom().is_one()
}

/// Magnitude of a rational rounded half-up to the nearest nonnegative integer.
pub fn rational_abs_rounded(r: &BigRational) -> BigUint {
    let abs = r.abs();
    let two = BigInt::from(2);
    let rounded = (abs.numer() * &two + abs.denom()) / (abs.denom() * &two);
    rounded.to_biguint().unwrap_or_default()
}
