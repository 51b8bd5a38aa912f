//! Trace parsing and grading.
//!
//! A completion is parsed into a [`Trace`]: the reasoning steps, every
//! arithmetic claim (`expression = value`) that can be recovered, and the
//! final answer. Two transcript shapes are understood:
//!
//! - **step lines** — prose/step traces where claims look like
//!   `Step 2: 48 + 5 = 53` and the final answer sits on a trailing
//!   `#### 53` line (falling back to the last number in the text);
//! - **pot code** — program-of-thought traces made of assignment lines
//!   (`t1 = 4 * 12`, `answer = t1 + 5`), executed over exact rationals with
//!   the answer taken from an explicit `print(v)`/`return v`, else a
//!   conventional variable name, else the last assignment.
//!
//! Grading compares final answers by exact rational equality; a small
//! absolute tolerance (1e-6) applies only when the model wrote a decimal
//! point, since a decimal rendering of a non-terminating fraction can never
//! be exactly equal.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use once_cell::sync::Lazy;
use regex::Regex;

use crate::expr::{decimal_to_rational, eval_exact, max_mul_magnitude, parse_expression, Expr};
use crate::types::GradeResult;

/// Which transcript shape to parse. Program-of-thought strategies produce
/// `PotCode`; everything else produces `StepLines`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceFormat {
    StepLines,
    PotCode,
}

/// One recovered arithmetic claim: the expression the trace computed and the
/// value it claimed for it. For pot traces the claim is the executed value
/// itself (code cannot "claim" wrongly; it can only compute).
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub expr: Expr,
    pub claimed: BigRational,
    /// 0-based line index in the original text, for diagnostics.
    pub line: usize,
}

/// A parsed completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub format: TraceFormat,
    /// Reasoning steps: non-empty non-final lines (step format) or
    /// assignment lines (pot format).
    pub steps: Vec<String>,
    pub equations: Vec<Equation>,
    pub final_answer: Option<BigRational>,
    /// The raw token the final answer was read from, when it came from text.
    /// A decimal point here switches grading to tolerance mode.
    pub final_raw: Option<String>,
}

/// Aggregate costs exhibited by a trace: how many steps it took and how large
/// its largest claimed multiplication was.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceCosts {
    pub plan_steps: usize,
    pub max_calc: BigUint,
    pub calc_all_correct: bool,
}

static NUM_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"[+-]?\d[\d,]*(?:\.\d+)?").unwrap());
static ASSIGN_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.+?)\s*$").unwrap());
static FINAL_VAR_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^\s*(?:print\s*\(\s*([A-Za-z_][A-Za-z0-9_]*)\s*\)|return\s+([A-Za-z_][A-Za-z0-9_]*))\s*;?\s*$")
        .unwrap()
});
static IDENT_RE: Lazy<Regex> = Lazy::new(|| Regex::new(r"[A-Za-z_][A-Za-z0-9_]*").unwrap());

/// Parse a completion into a trace. Never fails: unusable lines are skipped
/// and reported as warnings.
pub fn parse_trace(text: &str, format: TraceFormat) -> (Trace, Vec<String>) {
    match format {
        TraceFormat::StepLines => parse_step_lines(text),
        TraceFormat::PotCode => parse_pot_code(text),
    }
}

// ---------------------------------------------------------------------------
// Step-line traces
// ---------------------------------------------------------------------------

fn is_expr_char(c: char) -> bool {
    c.is_ascii_digit()
        || matches!(
            c,
            ' ' | '\t' | '(' | ')' | '+' | '-' | '*' | '/' | '×' | '÷' | '−' | ',' | '.'
        )
}

/// First decimal numeral after byte offset `from` (exclusive) — the claimed
/// value on the right of an `=`.
fn claimed_after(line: &str, eq_byte: usize) -> Option<BigRational> {
    let rest = line[eq_byte + 1..].trim_start();
    let m = NUM_RE.find(rest)?;
    if m.start() != 0 {
        return None;
    }
    decimal_to_rational(m.as_str())
}

/// Pull `expression = value` claims out of one line. For each `=`, the
/// longest parseable expression ending just left of it (starting at a token
/// boundary, containing at least one operator) is paired with the first
/// numeral to the right.
fn scan_line_equations(line: &str, line_idx: usize, out: &mut Vec<Equation>) {
    let chars: Vec<(usize, char)> = line.char_indices().collect();
    for (ci, &(bi, c)) in chars.iter().enumerate() {
        if c != '=' {
            continue;
        }
        // `==` is a comparison, not a claim.
        if ci > 0 && chars[ci - 1].1 == '=' {
            continue;
        }
        if chars.get(ci + 1).is_some_and(|&(_, n)| n == '=') {
            continue;
        }
        let mut start_ci = ci;
        while start_ci > 0 && is_expr_char(chars[start_ci - 1].1) {
            start_ci -= 1;
        }
        for p in start_ci..ci {
            let (pb, pc) = chars[p];
            if !(pc.is_ascii_digit() || pc == '(' || pc == '-' || pc == '−') {
                continue;
            }
            // Never start inside a numeral ("0.5 * 4" must not yield "5 * 4").
            if p > 0 {
                let prev = chars[p - 1].1;
                if prev.is_ascii_digit() || prev == '.' || prev == ',' {
                    continue;
                }
            }
            let candidate = line[pb..bi].trim();
            if let Ok(expr) = parse_expression(candidate) {
                if expr.is_compound() {
                    if let Some(claimed) = claimed_after(line, bi) {
                        out.push(Equation {
                            expr,
                            claimed,
                            line: line_idx,
                        });
                    }
                    break;
                }
            }
        }
    }
}

fn parse_step_lines(text: &str) -> (Trace, Vec<String>) {
    let mut warnings = Vec::new();
    let mut steps = Vec::new();
    let mut equations = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with("####") {
            continue;
        }
        steps.push(trimmed.to_string());
        scan_line_equations(line, idx, &mut equations);
    }

    // Final answer: the last `####` line's numeral, else the last numeral in
    // the whole text.
    let mut final_answer = None;
    let mut final_raw = None;
    for line in text.lines().rev() {
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("####") {
            match NUM_RE.find(rest) {
                Some(m) => {
                    final_raw = Some(m.as_str().to_string());
                    final_answer = decimal_to_rational(m.as_str());
                }
                None => warnings.push("final-answer line carries no number".to_string()),
            }
            break;
        }
    }
    if final_answer.is_none() {
        if let Some(m) = NUM_RE.find_iter(text).last() {
            final_raw = Some(m.as_str().to_string());
            final_answer = decimal_to_rational(m.as_str());
        }
    }
    if final_answer.is_none() {
        warnings.push("no final answer found".to_string());
    }

    (
        Trace {
            format: TraceFormat::StepLines,
            steps,
            equations,
            final_answer,
            final_raw,
        },
        warnings,
    )
}

// ---------------------------------------------------------------------------
// Pot-code traces
// ---------------------------------------------------------------------------

/// Replace every identifier in an assignment's right-hand side with its
/// current exact value, parenthesized as `(num/den)` so the expression
/// grammar evaluates it back verbatim.
fn substitute_vars(rhs: &str, env: &BTreeMap<String, BigRational>) -> Result<String, String> {
    let mut out = String::new();
    let mut last = 0;
    for m in IDENT_RE.find_iter(rhs) {
        out.push_str(&rhs[last..m.start()]);
        match env.get(m.as_str()) {
            Some(v) => out.push_str(&format!("({}/{})", v.numer(), v.denom())),
            None => return Err(m.as_str().to_string()),
        }
        last = m.end();
    }
    out.push_str(&rhs[last..]);
    Ok(out)
}

fn parse_pot_code(text: &str) -> (Trace, Vec<String>) {
    let mut warnings = Vec::new();
    let mut steps = Vec::new();
    let mut equations = Vec::new();
    let mut env: BTreeMap<String, BigRational> = BTreeMap::new();
    let mut last_assigned: Option<String> = None;
    let mut explicit_final: Option<String> = None;

    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(caps) = FINAL_VAR_RE.captures(trimmed) {
            let var = caps.get(1).or_else(|| caps.get(2)).unwrap().as_str();
            explicit_final = Some(var.to_string());
            continue;
        }
        let Some(caps) = ASSIGN_RE.captures(trimmed) else {
            continue;
        };
        let (lhs, rhs) = (caps.get(1).unwrap().as_str(), caps.get(2).unwrap().as_str());
        if rhs.starts_with('=') {
            continue; // `a == b` comparison
        }
        let substituted = match substitute_vars(rhs, &env) {
            Ok(s) => s,
            Err(unknown) => {
                warnings.push(format!("line {}: unknown variable `{unknown}`", idx + 1));
                continue;
            }
        };
        let expr = match parse_expression(&substituted) {
            Ok(e) => e,
            Err(e) => {
                warnings.push(format!("line {}: {e}", idx + 1));
                continue;
            }
        };
        let value = match eval_exact(&expr) {
            Ok(v) => v,
            Err(e) => {
                warnings.push(format!("line {}: {e}", idx + 1));
                continue;
            }
        };
        steps.push(trimmed.to_string());
        equations.push(Equation {
            expr,
            claimed: value.clone(),
            line: idx,
        });
        env.insert(lhs.to_string(), value);
        last_assigned = Some(lhs.to_string());
    }

    let chosen = explicit_final
        .filter(|v| env.contains_key(v))
        .or_else(|| {
            ["answer", "ans", "result"]
                .iter()
                .find(|n| env.contains_key(**n))
                .map(|s| s.to_string())
        })
        .or(last_assigned);
    let final_answer = chosen.and_then(|v| env.get(&v).cloned());
    if final_answer.is_none() {
        warnings.push("no final answer found".to_string());
    }

    (
        Trace {
            format: TraceFormat::PotCode,
            steps,
            equations,
            final_answer,
            final_raw: None,
        },
        warnings,
    )
}

// ---------------------------------------------------------------------------
// Costs and grading
// ---------------------------------------------------------------------------

/// Measure a trace: step count, the magnitude of the largest multiplication
/// across all recovered claims, and whether every claim checks out exactly.
/// A claim whose expression cannot be evaluated (division by zero) counts as
/// incorrect.
pub fn trace_costs(trace: &Trace) -> TraceCosts {
    let mut max_calc = BigUint::zero();
    let mut calc_all_correct = true;
    for eq in &trace.equations {
        match eval_exact(&eq.expr) {
            Ok(v) => {
                if v != eq.claimed {
                    calc_all_correct = false;
                }
            }
            Err(_) => {
                calc_all_correct = false;
                continue;
            }
        }
        if let Ok(Some(mag)) = max_mul_magnitude(&eq.expr) {
            if mag > max_calc {
                max_calc = mag;
            }
        }
    }
    TraceCosts {
        plan_steps: trace.steps.len(),
        max_calc,
        calc_all_correct,
    }
}

pub(crate) fn answers_match(got: &BigRational, raw: Option<&str>, gold: &BigRational) -> bool {
    if got == gold {
        return true;
    }
    // A decimal rendering can only approximate non-terminating fractions;
    // allow |got - gold| <= 1e-6 (exact arithmetic, no floats involved).
    if raw.is_some_and(|r| r.contains('.')) {
        let tol = BigRational::new(1.into(), 1_000_000.into());
        return (got - gold).abs() <= tol;
    }
    false
}

/// Grade a parsed trace against the gold answer. `plan_correct` is left
/// unset: plan quality is an external judgment, not something automated
/// grading can decide.
pub fn grade(trace: &Trace, gold: &BigRational) -> GradeResult {
    let costs = trace_costs(trace);
    let answer_correct = trace
        .final_answer
        .as_ref()
        .is_some_and(|got| answers_match(got, trace.final_raw.as_deref(), gold));
    GradeResult {
        answer_correct,
        plan_steps: costs.plan_steps,
        max_calc: costs.max_calc,
        calc_all_correct: costs.calc_all_correct,
        plan_correct: None,
    }
}
