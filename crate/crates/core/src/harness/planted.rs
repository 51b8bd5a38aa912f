//! A synthetic backend with a planted boundary, for closed-loop testing.
//!
//! The backend answers each problem correctly with the probability the
//! planted law-and-link assigns to the problem's difficulty, and emits a
//! transcript whose measurable costs equal that difficulty: `plan_steps`
//! numbered lines, one of which multiplies up to `max_calc`. Fitting the
//! law back from such a run closes the loop — the recovered boundaries can
//! be checked against the planted ones exactly.
//!
//! Wrong answers land on a per-problem attractor offset, so repeated samples
//! of an infeasible problem agree on the same wrong value (majority voting
//! gains nothing). In the partially feasible band, `pfrb_sc_gain` of wrong
//! samples draw a fresh offset instead, scattering the errors — there, and
//! only there, self-consistency recovers extra accuracy.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed};

use crate::harness::{Backend, BackendError, Completion, CompletionRequest};
use crate::law::Link;
use crate::rng::{hash_str, SplitMix64};
use crate::types::{CombinationLaw, Dim, LawTerm, ProblemRecord};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// The planted ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub law: CombinationLaw,
    pub link: Link,
    /// Fraction of wrong samples in the partially feasible band that draw a
    /// fresh error offset instead of the problem's sticky attractor.
    pub pfrb_sc_gain: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedSettings::default().to_config()
    }
}

/// Flat, file-configurable form of [`PlantedConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSettings {
    pub gamma: f64,
    pub mu: f64,
    pub k: f64,
    pub pfrb_sc_gain: f64,
    /// `(dimension, N, b)` triples.
    pub terms: Vec<(String, f64, f64)>,
}

impl Default for PlantedSettings {
    fn default() -> Self {
        PlantedSettings {
            gamma: 3.0,
            mu: 0.55,
            k: 0.0,
            pfrb_sc_gain: 0.3,
            terms: vec![
                ("plan_steps".to_string(), 1.0, 0.0),
                ("max_calc".to_string(), 300.0, 0.0),
            ],
        }
    }
}

impl PlantedSettings {
    pub fn to_config(&self) -> PlantedConfig {
        PlantedConfig {
            law: CombinationLaw::new(
                self.terms
                    .iter()
                    .map(|(name, n, b)| LawTerm {
                        name: name.clone(),
                        n: *n,
                        b: *b,
                    })
                    .collect(),
                self.k,
            ),
            link: Link::new(self.gamma, self.mu),
            pfrb_sc_gain: self.pfrb_sc_gain,
        }
    }
}

// ---------------------------------------------------------------------------
// The backend
// ---------------------------------------------------------------------------

/// Deterministic synthetic backend; see the module docs.
#[derive(Debug, Clone)]
pub struct Planted {
    pub cfg: PlantedConfig,
}

impl Planted {
    pub fn new(cfg: PlantedConfig) -> Self {
        Planted { cfg }
    }
}

impl Backend for Planted {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError> {
        // Program-style output when the prompt demonstrates assignments.
        let pot = req.prompt.contains("answer =");
        let text = planted_transcript(&self.cfg, req.problem, req.seed, req.sample_idx, pot)?;
        Ok(Completion {
            input_tokens: (req.prompt.len() / 4) as u64,
            output_tokens: (text.len() / 4) as u64,
            text,
        })
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn model_id(&self) -> &str {
        "planted"
    }
}

/// The accuracy the planted ground truth assigns to a problem.
pub fn planted_accuracy(cfg: &PlantedConfig, p: &ProblemRecord) -> Result<f64, BackendError> {
    let e = crate::law::combined_boundary(&cfg.law, &p.difficulty.to_named())
        .map_err(|e| BackendError::Fatal(format!("planted law cannot score `{}`: {e}", p.id)))?;
    Ok(cfg.link.acc(e))
}

/// Produce the planted completion for one sample, in step-line format.
pub fn planted_complete(
    cfg: &PlantedConfig,
    p: &ProblemRecord,
    seed: u64,
    sample_idx: u32,
) -> Result<String, BackendError> {
    planted_transcript(cfg, p, seed, sample_idx, false)
}

fn stream(p: &ProblemRecord, seed: u64, sample_idx: u32, purpose: &str) -> SplitMix64 {
    SplitMix64::keyed(&[
        seed,
        hash_str(&p.id),
        u64::from(sample_idx),
        hash_str(purpose),
    ])
}

fn planted_transcript(
    cfg: &PlantedConfig,
    p: &ProblemRecord,
    seed: u64,
    sample_idx: u32,
    pot: bool,
) -> Result<String, BackendError> {
    let acc = planted_accuracy(cfg, p)?;
    let correct = stream(p, seed, sample_idx, "correct").next_f64() < acc;

    let answer = if correct {
        p.gold_answer.clone()
    } else {
        let in_pfrb = acc > 0.1 && acc < 0.9;
        let mut fresh = stream(p, seed, sample_idx, "fresh");
        let delta = if in_pfrb && fresh.next_f64() < cfg.pfrb_sc_gain {
            // Scattered error: every sample misses differently.
            fresh.range_u64(1, 999)
        } else {
            // Sticky error: every sample of this problem misses the same way.
            let mut attractor = SplitMix64::keyed(&[seed, hash_str(&p.id), hash_str("attractor")]);
            attractor.range_u64(1, 9)
        };
        &p.gold_answer + BigRational::from_integer(delta.into())
    };

    let steps = p
        .difficulty
        .get(Dim::PlanSteps)
        .map(|v| v as usize)
        .unwrap_or(1)
        .max(1);
    let max_calc = p
        .difficulty
        .get(Dim::MaxCalc)
        .filter(|v| *v >= 1.0)
        .and_then(|v| BigInt::from_f64(v.round()));

    let mut rng = stream(p, seed, sample_idx, "steps");
    Ok(if pot {
        pot_lines(steps, max_calc.as_ref(), &answer, &mut rng)
    } else {
        step_lines(steps, max_calc.as_ref(), &answer, &mut rng)
    })
}

/// `plan_steps` numbered lines — filler additions plus one multiplication
/// that lands exactly on `max_calc` — then a `#### answer` line.
fn step_lines(
    steps: usize,
    max_calc: Option<&BigInt>,
    answer: &BigRational,
    rng: &mut SplitMix64,
) -> String {
    let mul_at = max_calc.map(|_| rng.range_usize(0, steps - 1));
    let mut lines = Vec::with_capacity(steps + 1);
    for i in 0..steps {
        if Some(i) == mul_at {
            let m = max_calc.unwrap();
            lines.push(format!("Step {}: 1 * {m} = {m}", i + 1));
        } else {
            let a = rng.range_u64(2, 49);
            let b = rng.range_u64(2, 49);
            lines.push(format!("Step {}: {a} + {b} = {}", i + 1, a + b));
        }
    }
    lines.push(format!("#### {}", format_final(answer)));
    lines.join("\n")
}

/// `plan_steps` assignment lines carrying the same costs, closing exactly on
/// the chosen answer; the first assignment holds the `max_calc`
/// multiplication.
fn pot_lines(
    steps: usize,
    max_calc: Option<&BigInt>,
    answer: &BigRational,
    rng: &mut SplitMix64,
) -> String {
    // `answer` printed as a rational is always re-parseable exactly.
    let base = |target: &BigRational| -> (String, BigRational) {
        match max_calc {
            Some(m) => (
                "1 * ".to_string() + &m.to_string(),
                BigRational::from_integer(m.clone()),
            ),
            None => (target.to_string(), target.clone()),
        }
    };
    if steps == 1 {
        let (expr, value) = base(answer);
        return format!("answer = {}", close_expr(&expr, &value, answer));
    }
    let mut lines = Vec::with_capacity(steps);
    let (expr, mut value) = base(answer);
    lines.push(format!("t1 = {expr}"));
    for i in 1..steps - 1 {
        let c = rng.range_u64(1, 9);
        value += BigRational::from_integer(c.into());
        lines.push(format!("t{} = t{} + {c}", i + 1, i));
    }
    lines.push(format!(
        "answer = {}",
        close_expr(&format!("t{}", steps - 1), &value, answer)
    ));
    lines.join("\n")
}

/// Append `+ c` (or `- c`) to `expr` so it evaluates from `value` to
/// `target`; no suffix if they already agree.
fn close_expr(expr: &str, value: &BigRational, target: &BigRational) -> String {
    let c = target - value;
    if c.is_positive() {
        format!("{expr} + {c}")
    } else if c.is_negative() {
        format!("{expr} - {}", -c)
    } else {
        expr.to_string()
    }
}

/// Integers print exactly at any size; non-integers fall back to a decimal
/// close enough for tolerance-mode grading.
fn format_final(r: &BigRational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        use num_traits::ToPrimitive;
        format!("{:.9}", r.to_f64().unwrap_or(0.0))
    }
}
