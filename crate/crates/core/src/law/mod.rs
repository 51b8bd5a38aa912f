//! Combination-law algebra: evaluating the harmonic boundary law, strategy
//! transforms (tool use, complex plans, decomposition, nesting), iso-accuracy
//! curves, and feasibility classification.
//!
//! The central quantity is the combined boundary of `n` capability terms,
//!
//! ```text
//! B(t1..tn) = 1 / ((n-1) * sum_i N_i/(B_i - b_i) + k)     n >= 2
//! B(t1)     = 1 / (N_1/(B_1 - b_1) + k)                   n == 1
//! ```
//!
//! evaluated either on per-capability boundaries (to combine them) or on a
//! point's difficulty coordinates (giving the combined difficulty functional
//! `e(d)`, which grows with every coordinate). Accuracy is linked to `e(d)`
//! by a log-logistic curve that *decreases* with difficulty,
//! `Acc = 1/(1 + (e/mu)^gamma)`, so its level sets are exactly the harmonic
//! curves and the 90% iso-accuracy line sits below-left of the 10% line.
//!
//! Submodules: [`fit`] estimates law and link parameters from a binned
//! accuracy surface; [`search`] locates boundaries by bisection and provides
//! isotonic smoothing for noisy empirical accuracy.

pub mod fit;
pub mod search;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{BoundaryEstimate, CombinationLaw, DifficultyVector, LawTerm, RBCategory};

/// Errors across law evaluation, transforms, fitting, and searching.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LawError {
    #[error("basics are missing law term `{0}`")]
    MissingTerm(String),
    #[error("difficulty point is missing dimension `{0}`")]
    MissingDim(String),
    #[error("law has no term named `{0}`")]
    UnknownTerm(String),
    #[error("term `{name}`: value {value} does not exceed offset {offset}")]
    TermBelowOffset {
        name: String,
        value: f64,
        offset: f64,
    },
    #[error("law has {got} terms, expected {expected}")]
    WrongArity { expected: usize, got: usize },
    #[error("law needs a calculation term to transform")]
    MissingCalcTerm,
    #[error("target combined boundary is unattainable under the given constraint")]
    Unattainable,
    #[error("accuracy {0} is degenerate (must lie strictly inside (0, 1))")]
    DegenerateAccuracy(f64),
    #[error("outer law term `{0}` must be a unit term (N = 1, b = 0) to substitute into")]
    NonUnitOuterTerm(String),
    #[error("term name `{0}` appears in both laws being combined")]
    DuplicateTermName(String),
    #[error("cannot drop the last remaining term")]
    CannotDropLastTerm,
    #[error("not enough bins to fit: {bins} bins for {free} free parameters (need >= {needed})")]
    InsufficientData {
        bins: usize,
        free: usize,
        needed: usize,
    },
    #[error("no optimizer restart converged")]
    NonConvergence,
    #[error("accuracy is not monotone non-increasing along `{axis}` near {at}")]
    NonMonotone { axis: String, at: f64 },
    #[error("level {level} is not bracketed: acc({lo}) = {acc_lo}, acc({hi}) = {acc_hi}")]
    BracketMiss {
        level: f64,
        lo: f64,
        hi: f64,
        acc_lo: f64,
        acc_hi: f64,
    },
    #[error("no records to bin")]
    EmptyInput,
    #[error("degenerate binning: {0}")]
    DegenerateBinning(String),
    #[error("no curve points are defined on the requested sample grid")]
    EmptyCurve,
}

// ---------------------------------------------------------------------------
// Accuracy link
// ---------------------------------------------------------------------------

/// Log-logistic accuracy link: `Acc(e) = 1 / (1 + (e/mu)^gamma)`, decreasing
/// in the combined difficulty functional `e`. `mu` is the 50%-accuracy
/// difficulty; `gamma` controls how sharply accuracy falls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub gamma: f64,
    pub mu: f64,
}

impl Link {
    pub fn new(gamma: f64, mu: f64) -> Self {
        Link { gamma, mu }
    }

    /// Accuracy at combined difficulty `e` (for `e > 0`).
    pub fn acc(&self, e: f64) -> f64 {
        1.0 / (1.0 + (e / self.mu).powf(self.gamma))
    }

    /// The combined-difficulty value where accuracy equals `k`: the inverse
    /// of [`Link::acc`], `mu * ((1-k)/k)^(1/gamma)`.
    pub fn boundary_for(&self, k: f64) -> Result<f64, LawError> {
        if !(k > 0.0 && k < 1.0) {
            return Err(LawError::DegenerateAccuracy(k));
        }
        Ok(self.mu * ((1.0 - k) / k).powf(1.0 / self.gamma))
    }
}

// ---------------------------------------------------------------------------
// Law evaluation
// ---------------------------------------------------------------------------

/// The shared reciprocal: `(n-1) * sum_i N_i/(B_i - b_i) + k` with the factor
/// replaced by 1 when `n == 1`.
fn law_reciprocal(law: &CombinationLaw, basics: &BTreeMap<String, f64>) -> Result<f64, LawError> {
    let n = law.n();
    let factor = if n <= 1 { 1.0 } else { (n - 1) as f64 };
    let mut sum = 0.0;
    for t in &law.terms {
        let value = *basics
            .get(&t.name)
            .ok_or_else(|| LawError::MissingTerm(t.name.clone()))?;
        if value <= t.b {
            return Err(LawError::TermBelowOffset {
                name: t.name.clone(),
                value,
                offset: t.b,
            });
        }
        sum += t.n / (value - t.b);
    }
    Ok(factor * sum + law.k)
}

/// Evaluate the combination law on per-term values (individual boundaries, or
/// a point's difficulty coordinates).
pub fn combined_boundary(
    law: &CombinationLaw,
    basics: &BTreeMap<String, f64>,
) -> Result<f64, LawError> {
    let recip = law_reciprocal(law, basics)?;
    if recip <= 0.0 {
        return Err(LawError::Unattainable);
    }
    Ok(1.0 / recip)
}

/// Remove one term as if its capability were unbounded, rescaling the
/// remaining terms so the smaller law evaluates to the same limit:
/// the term-count factor shrinks from `n-1` to `n-2`, so each surviving
/// `N_i` picks up the ratio `(n-1)/(n-2)` (no change when `n == 2`).
pub fn drop_term(law: &CombinationLaw, name: &str) -> Result<CombinationLaw, LawError> {
    let n = law.n();
    if !law.terms.iter().any(|t| t.name == name) {
        return Err(LawError::UnknownTerm(name.to_string()));
    }
    if n == 1 {
        return Err(LawError::CannotDropLastTerm);
    }
    let rescale = if n >= 3 {
        (n - 1) as f64 / (n - 2) as f64
    } else {
        1.0
    };
    let terms = law
        .terms
        .iter()
        .filter(|t| t.name != name)
        .map(|t| LawTerm {
            name: t.name.clone(),
            n: t.n * rescale,
            b: t.b,
        })
        .collect();
    Ok(CombinationLaw::new(terms, law.k))
}

// ---------------------------------------------------------------------------
// Strategy transforms
// ---------------------------------------------------------------------------

/// Offload calculation to a perfect tool: the calculation term's boundary
/// goes to infinity and drops out, leaving `B = (B(p) - b_p)/N_p` (plus `k`
/// in the general form).
pub fn transform_tool(law: &CombinationLaw, calc_name: &str) -> Result<CombinationLaw, LawError> {
    if !law.terms.iter().any(|t| t.name == calc_name) {
        return Err(LawError::MissingCalcTerm);
    }
    drop_term(law, calc_name)
}

/// Granularity trade for a two-term law: if each step is kept simple enough
/// that the calculation boundary is pinned at `b_c_target`, how far must the
/// plan boundary stretch to hold the combined boundary at `combined_target`?
/// Solves `1/combined = N_c/(b_c_target - b_c) + N_p/(B'_p - b_p) + k` for
/// `B'_p`.
pub fn solve_complex_cot_plan(
    law: &CombinationLaw,
    calc_name: &str,
    b_c_target: f64,
    combined_target: f64,
) -> Result<f64, LawError> {
    if law.n() != 2 {
        return Err(LawError::WrongArity {
            expected: 2,
            got: law.n(),
        });
    }
    let calc = law
        .term(calc_name)
        .ok_or(LawError::MissingCalcTerm)?
        .clone();
    let plan = law
        .terms
        .iter()
        .find(|t| t.name != calc_name)
        .expect("two-term law has a non-calc term")
        .clone();
    if b_c_target <= calc.b {
        return Err(LawError::TermBelowOffset {
            name: calc.name,
            value: b_c_target,
            offset: calc.b,
        });
    }
    if combined_target <= 0.0 || combined_target.is_nan() {
        return Err(LawError::Unattainable);
    }
    let residual = 1.0 / combined_target - law.k - calc.n / (b_c_target - calc.b);
    if residual <= 0.0 {
        return Err(LawError::Unattainable);
    }
    Ok(plan.b + plan.n / residual)
}

/// The closed form printed for ideal decomposition,
/// `B(x) = (x - b2) / (n1*(x - b2) - n2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LtmLiteralForm {
    pub n1: f64,
    pub n2: f64,
    pub b2: f64,
}

impl LtmLiteralForm {
    pub fn eval(&self, x: f64) -> f64 {
        (x - self.b2) / (self.n1 * (x - self.b2) - self.n2)
    }
}

/// Result of the ideal-decomposition transform: the symbolic limit law, the
/// literal printed closed form, and whether the two actually agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtmIdeal {
    /// Symbolic limit of the three-term law: decomposition boundary
    /// to infinity (term vanishes), calculation boundary pinned at 1 (term
    /// becomes the constant `2*N_c/(1 - b_c)`, folded into `k`). One plan
    /// term remains.
    pub ideal: CombinationLaw,
    /// The closed form as printed in the source derivation. It is *not* the
    /// limit of the three-term law (the subtraction of `n2` cannot arise
    /// from a sum of positive terms); reported verbatim for comparison.
    pub literal: LtmLiteralForm,
    /// True only if ideal and literal forms agree within 1e-6 relative on a
    /// shared probe grid. Expected false: the printed form is inconsistent
    /// with the declared limits.
    pub forms_agree: bool,
}

/// Ideal decomposition for a three-term law `{calc, plan, decomp}`: apply
/// `B(decomp) -> inf` and `B(calc) -> 1`, leaving a one-term law over the
/// plan dimension. Errors if the calculation offset is >= 1 (pinning the
/// boundary at 1 would land at or below the offset).
pub fn transform_ltm_ideal(
    law: &CombinationLaw,
    calc_name: &str,
    plan_name: &str,
    decomp_name: &str,
) -> Result<LtmIdeal, LawError> {
    if law.n() != 3 {
        return Err(LawError::WrongArity {
            expected: 3,
            got: law.n(),
        });
    }
    let calc = law
        .term(calc_name)
        .ok_or_else(|| LawError::UnknownTerm(calc_name.to_string()))?;
    let plan = law
        .term(plan_name)
        .ok_or_else(|| LawError::UnknownTerm(plan_name.to_string()))?;
    let _decomp = law
        .term(decomp_name)
        .ok_or_else(|| LawError::UnknownTerm(decomp_name.to_string()))?;
    if calc.b >= 1.0 {
        return Err(LawError::TermBelowOffset {
            name: calc.name.clone(),
            value: 1.0,
            offset: calc.b,
        });
    }

    // Three terms evaluate with factor (n-1) = 2, so every surviving piece
    // keeps its factor of two: the plan term becomes 2*N_p and the pinned
    // calc term contributes the constant 2*N_c/(1 - b_c).
    let ideal = CombinationLaw::new(
        vec![LawTerm {
            name: plan.name.clone(),
            n: 2.0 * plan.n,
            b: plan.b,
        }],
        law.k + 2.0 * calc.n / (1.0 - calc.b),
    );
    let literal = LtmLiteralForm {
        n1: calc.n,
        n2: plan.n,
        b2: plan.b,
    };

    // Probe both forms over a shared grid above the plan offset; they agree
    // only if every mutually defined point matches to 1e-6 relative.
    let mut compared = 0usize;
    let mut agree = true;
    for j in 0..20 {
        let x = plan.b + 0.5 + 0.5 * j as f64;
        let lit = literal.eval(x);
        let ideal_val = combined_boundary(&ideal, &BTreeMap::from([(plan.name.clone(), x)]));
        let Ok(ideal_val) = ideal_val else { continue };
        if !lit.is_finite() || lit <= 0.0 {
            continue;
        }
        compared += 1;
        if (lit - ideal_val).abs() > 1e-6 * ideal_val.abs().max(1e-12) {
            agree = false;
        }
    }
    let forms_agree = agree && compared > 0;

    Ok(LtmIdeal {
        ideal,
        literal,
        forms_agree,
    })
}

/// Substitute an inner combination for one unit term of an outer law,
/// producing a flat law with the same value: with a two-term outer over
/// `{p, v}` (v a unit term) and a two-term inner `{v1, v2}`, the flat
/// reciprocal is `N_p/(B_p-b_p) + sum_j M_j/(C_j-c_j) + k1 + k2`, expressed
/// in standard `(n-1)`-factor form by rescaling every `N`.
pub fn nested_combine(
    outer: &CombinationLaw,
    v_name: &str,
    inner: &CombinationLaw,
) -> Result<CombinationLaw, LawError> {
    let n = outer.n();
    let m = inner.n();
    if n < 2 {
        return Err(LawError::WrongArity {
            expected: 2,
            got: n,
        });
    }
    let v = outer
        .term(v_name)
        .ok_or_else(|| LawError::UnknownTerm(v_name.to_string()))?;
    if (v.n - 1.0).abs() > 1e-9 || v.b.abs() > 1e-9 {
        return Err(LawError::NonUnitOuterTerm(v.name.clone()));
    }
    for t in &inner.terms {
        if t.name == v_name || outer.terms.iter().any(|o| o.name == t.name) {
            return Err(LawError::DuplicateTermName(t.name.clone()));
        }
    }

    // Outer reciprocal: (n-1)[sum_{i != v} N_i/(B_i-b_i) + 1/B_v] + k1, and
    // 1/B_v is the inner reciprocal. The flat law has n-1+m terms and factor
    // n+m-2, so each contribution is rescaled to preserve the product.
    let outer_factor = (n - 1) as f64;
    let inner_factor = if m <= 1 { 1.0 } else { (m - 1) as f64 };
    let flat_factor = (n + m - 2) as f64; // >= 1 since n >= 2, m >= 1
    let mut terms: Vec<LawTerm> = outer
        .terms
        .iter()
        .filter(|t| t.name != v_name)
        .map(|t| LawTerm {
            name: t.name.clone(),
            n: t.n * outer_factor / flat_factor,
            b: t.b,
        })
        .collect();
    terms.extend(inner.terms.iter().map(|t| LawTerm {
        name: t.name.clone(),
        n: t.n * outer_factor * inner_factor / flat_factor,
        b: t.b,
    }));
    Ok(CombinationLaw::new(terms, outer.k + outer_factor * inner.k))
}

/// Boundary implied by direct (no chain-of-thought) accuracy: invert the
/// link to a single-capability estimate `B_1`, then apply the one-term form
/// `B = 1/(1/B_1 + k1)`.
pub fn direct_boundary(acc_direct: f64, link: &Link, k1: f64) -> Result<f64, LawError> {
    let b1 = link.boundary_for(acc_direct)?;
    let recip = 1.0 / b1 + k1;
    if recip <= 0.0 {
        return Err(LawError::Unattainable);
    }
    Ok(1.0 / recip)
}

// ---------------------------------------------------------------------------
// Fitted law: curves and classification
// ---------------------------------------------------------------------------

/// A fully fitted model: law parameters, accuracy link, located 90%/10%
/// boundaries (keyed `"0.90"`/`"0.10"` on the combined axis), train/dev
/// losses, and the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLaw {
    pub law: CombinationLaw,
    pub link: Link,
    pub boundaries: BTreeMap<String, BoundaryEstimate>,
    pub fit_loss: f64,
    pub dev_loss: f64,
    pub seed: u64,
}

impl FittedLaw {
    /// Combined-difficulty value at which accuracy equals `k`.
    pub fn level_value(&self, k: f64) -> Result<f64, LawError> {
        self.link.boundary_for(k)
    }
}

/// Points of the iso-accuracy curve at level `k_level` in the plane of two
/// named law terms: for each `x`, solve
/// `N_x/(x-b_x) + N_y/(y-b_y) + k = 1/e_K` for `y`. Samples where the
/// residual is non-positive (no `y` reaches the level) are omitted.
pub fn boundary_curve(
    fitted: &FittedLaw,
    k_level: f64,
    axes: (&str, &str),
    x_samples: &[f64],
) -> Result<Vec<(f64, f64)>, LawError> {
    let law = &fitted.law;
    if law.n() != 2 {
        return Err(LawError::WrongArity {
            expected: 2,
            got: law.n(),
        });
    }
    let x_term = law
        .term(axes.0)
        .ok_or_else(|| LawError::UnknownTerm(axes.0.to_string()))?;
    let y_term = law
        .term(axes.1)
        .ok_or_else(|| LawError::UnknownTerm(axes.1.to_string()))?;
    let e_k = fitted.link.boundary_for(k_level)?;

    let mut pts = Vec::new();
    for &x in x_samples {
        if x <= x_term.b {
            continue;
        }
        let residual = 1.0 / e_k - law.k - x_term.n / (x - x_term.b);
        if residual <= 0.0 {
            continue;
        }
        pts.push((x, y_term.b + y_term.n / residual));
    }
    if pts.is_empty() {
        return Err(LawError::EmptyCurve);
    }
    Ok(pts)
}

/// Classify a difficulty point against the fitted 90%/10% level sets.
///
/// A coordinate at or below its term offset means the term contributes no
/// difficulty at all (the harmonic form is past its easy asymptote), so such
/// points are completely feasible by convention. Otherwise the combined
/// functional `e(d)` is compared against the level values: the thresholds
/// themselves are closed on the outer categories, matching
/// `categorize_accuracy`.
pub fn classify_point(d: &DifficultyVector, fitted: &FittedLaw) -> Result<RBCategory, LawError> {
    let coords = d.to_named();
    for t in &fitted.law.terms {
        let value = *coords
            .get(&t.name)
            .ok_or_else(|| LawError::MissingDim(t.name.clone()))?;
        if value <= t.b {
            return Ok(RBCategory::CFRB);
        }
    }
    let e = combined_boundary(&fitted.law, &coords)?;
    let e_90 = fitted.link.boundary_for(0.90)?;
    let e_10 = fitted.link.boundary_for(0.10)?;
    Ok(if e <= e_90 {
        RBCategory::CFRB
    } else if e >= e_10 {
        RBCategory::CIRB
    } else {
        RBCategory::PFRB
    })
}
