//! Templated multi-step word problems.
//!
//! A template is a base narrative containing exactly one multiplication (its
//! two operands are the template's numeric slots), a loopable segment whose
//! every repetition appends exactly one add/subtract step, and a closing
//! question. Gold answers come from running the template's postfix program
//! with exact integers, so `plan_steps` equals the requested step count and
//! `max_calc` equals the one multiplication's product.
//!
//! The stratified builder [`gen_biggsm`] lays 610 problems on a 16x10 grid
//! (step count x geometric product bins over [6, 3e5]), pinning the extreme
//! corners to the exact products 6 and 300000.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use regex::Regex;

use crate::expr::BinOp;
use crate::gen::GenError;
use crate::rng::{hash_str, SplitMix64};
use crate::types::{DifficultyVector, Dim, ProblemRecord, TaskKind};

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

/// One token of a postfix answer program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PostfixTok {
    Slot(String),
    Op(BinOp),
}

/// A hand-authored word-problem scenario. See `data/templates.txt` for the
/// on-disk format.
#[derive(Debug, Clone, PartialEq)]
pub struct WordTemplate {
    pub template_id: String,
    pub base_text: String,
    pub loop_text: String,
    pub question: String,
    pub program: Vec<PostfixTok>,
    pub loop_program: Vec<PostfixTok>,
}

fn slot_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([A-Z][A-Z0-9]*)\]").expect("static regex"))
}

/// Numeric slots in a narrative ( `[NAME]` and `[I]` are narrative-only).
fn numeric_slots(text: &str) -> BTreeSet<String> {
    slot_re()
        .captures_iter(text)
        .map(|c| c[1].to_string())
        .filter(|s| s != "NAME" && s != "I")
        .collect()
}

fn parse_program(text: &str) -> Result<Vec<PostfixTok>, String> {
    let mut toks = Vec::new();
    for t in text.split_whitespace() {
        let tok = match t {
            "+" => PostfixTok::Op(BinOp::Add),
            "-" => PostfixTok::Op(BinOp::Sub),
            "*" => PostfixTok::Op(BinOp::Mul),
            "/" => PostfixTok::Op(BinOp::Div),
            slot => {
                if !slot
                    .chars()
                    .enumerate()
                    .all(|(i, c)| c.is_ascii_uppercase() || (i > 0 && c.is_ascii_digit()))
                    || slot.is_empty()
                {
                    return Err(format!("bad program token `{slot}`"));
                }
                PostfixTok::Slot(slot.to_string())
            }
        };
        toks.push(tok);
    }
    Ok(toks)
}

impl WordTemplate {
    fn validate(&self) -> Result<(), GenError> {
        let bad = |message: String| GenError::BadTemplate {
            id: self.template_id.clone(),
            message,
        };
        // Base program must be exactly `A B *`: one multiplication carrying
        // the whole max_calc budget, giving the base narrative one step.
        match self.program.as_slice() {
            [PostfixTok::Slot(a), PostfixTok::Slot(b), PostfixTok::Op(BinOp::Mul)] => {
                if a == b {
                    return Err(bad("base program operands must be distinct slots".into()));
                }
                let base_slots = numeric_slots(&self.base_text);
                let program_slots: BTreeSet<String> = [a.clone(), b.clone()].into();
                if base_slots != program_slots {
                    return Err(bad(format!(
                        "base text slots {base_slots:?} do not match program operands {program_slots:?}"
                    )));
                }
            }
            _ => {
                return Err(bad(
                    "base program must be `<slot> <slot> *` (exactly one multiplication)".into(),
                ))
            }
        }
        // Loop program must be one slot and one additive op.
        match self.loop_program.as_slice() {
            [PostfixTok::Slot(x), PostfixTok::Op(BinOp::Add | BinOp::Sub)] => {
                let loop_slots = numeric_slots(&self.loop_text);
                if loop_slots != BTreeSet::from([x.clone()]) {
                    return Err(bad(format!(
                        "loop text slots {loop_slots:?} do not match loop operand [{x}]"
                    )));
                }
            }
            _ => {
                return Err(bad(
                    "loop program must be `<slot> +` or `<slot> -` (one step per repetition)"
                        .into(),
                ))
            }
        }
        if self.question.trim().is_empty() {
            return Err(bad("question is empty".into()));
        }
        Ok(())
    }

    fn loop_is_subtraction(&self) -> bool {
        matches!(self.loop_program.last(), Some(PostfixTok::Op(BinOp::Sub)))
    }
}

/// Parse the plain-text template library format: blank-line-separated blocks
/// of `field: value` lines, `#` comment lines ignored.
pub fn parse_templates(text: &str) -> Result<Vec<WordTemplate>, GenError> {
    let mut templates = Vec::new();
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    let mut block_line = 0usize;

    let flush = |fields: &mut BTreeMap<String, String>,
                 line: usize|
     -> Result<Option<WordTemplate>, GenError> {
        if fields.is_empty() {
            return Ok(None);
        }
        let take = |fields: &mut BTreeMap<String, String>, key: &str| {
            fields.remove(key).ok_or(GenError::Parse {
                line,
                message: format!("template block is missing field `{key}`"),
            })
        };
        let template_id = take(fields, "id")?;
        let t = WordTemplate {
            base_text: take(fields, "base")?,
            loop_text: take(fields, "loop")?,
            question: take(fields, "question")?,
            program: parse_program(&take(fields, "program")?).map_err(|message| {
                GenError::BadTemplate {
                    id: template_id.clone(),
                    message,
                }
            })?,
            loop_program: parse_program(&take(fields, "loop_program")?).map_err(|message| {
                GenError::BadTemplate {
                    id: template_id.clone(),
                    message,
                }
            })?,
            template_id,
        };
        if let Some((key, _)) = fields.pop_first() {
            return Err(GenError::BadTemplate {
                id: t.template_id,
                message: format!("unknown field `{key}`"),
            });
        }
        t.validate()?;
        Ok(Some(t))
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if let Some(t) = flush(&mut fields, block_line)? {
                templates.push(t);
            }
            continue;
        }
        let (key, value) = line.split_once(':').ok_or(GenError::Parse {
            line: idx + 1,
            message: "expected `field: value`".to_string(),
        })?;
        if fields.is_empty() {
            block_line = idx + 1;
        }
        fields.insert(key.trim().to_string(), value.trim().to_string());
    }
    if let Some(t) = flush(&mut fields, block_line)? {
        templates.push(t);
    }

    let mut seen = BTreeSet::new();
    for t in &templates {
        if !seen.insert(t.template_id.clone()) {
            return Err(GenError::BadTemplate {
                id: t.template_id.clone(),
                message: "duplicate template id".to_string(),
            });
        }
    }
    Ok(templates)
}

/// The built-in 13-scenario library.
pub fn builtin_templates() -> &'static [WordTemplate] {
    static TEMPLATES: OnceLock<Vec<WordTemplate>> = OnceLock::new();
    TEMPLATES.get_or_init(|| {
        parse_templates(include_str!("../../data/templates.txt"))
            .expect("built-in template library is valid")
    })
}

const NAMES: [&str; 16] = [
    "Avery", "Jordan", "Riley", "Morgan", "Casey", "Quinn", "Skyler", "Rowan", "Emerson", "Hayden",
    "Parker", "Reese", "Sage", "Tatum", "Blake", "Drew",
];

const MAX_OPERAND: u128 = 100_000;
const MAX_LOOP_VALUE: u128 = 999;

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

fn run_postfix(prog: &[PostfixTok], slots: &BTreeMap<String, BigInt>) -> BigInt {
    let mut stack: Vec<BigInt> = Vec::new();
    for tok in prog {
        match tok {
            PostfixTok::Slot(s) => stack.push(slots[s].clone()),
            PostfixTok::Op(op) => {
                let b = stack.pop().expect("validated program arity");
                let a = stack.pop().expect("validated program arity");
                stack.push(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                });
            }
        }
    }
    assert_eq!(stack.len(), 1, "validated program leaves one value");
    stack.pop().unwrap()
}

/// Sample factors with product in `[target/2, target]`, both within the
/// operand cap.
fn sample_product_band(rng: &mut SplitMix64, target: u64) -> Option<(u128, u128)> {
    let t = target as u128;
    let half = t.div_ceil(2);
    for _ in 0..64 {
        let a = rng.range_u128(1, MAX_OPERAND.min(t));
        let b_lo = half.div_ceil(a).max(1);
        let b_hi = (t / a).min(MAX_OPERAND);
        if b_lo > b_hi {
            continue;
        }
        let b = rng.range_u128(b_lo, b_hi);
        return Some((a, b));
    }
    None
}

/// Sample factors with product exactly `target` (used to pin grid corners).
fn sample_product_exact(rng: &mut SplitMix64, target: u64) -> Option<(u128, u128)> {
    let t = target as u128;
    let mut pairs = Vec::new();
    let mut d = 1u128;
    while d * d <= t {
        if t.is_multiple_of(d) {
            let q = t / d;
            if d <= MAX_OPERAND && q <= MAX_OPERAND {
                pairs.push((d, q));
                if d != q {
                    pairs.push((q, d));
                }
            }
        }
        d += 1;
    }
    if pairs.is_empty() {
        return None;
    }
    pairs.sort_unstable();
    Some(*rng.pick(&pairs))
}

struct WordDraw {
    record: ProblemRecord,
    // Raw draws, exposed for test oracles that recompute golds externally.
    #[cfg_attr(not(test), allow(dead_code))]
    a: u128,
    #[cfg_attr(not(test), allow(dead_code))]
    b: u128,
    #[cfg_attr(not(test), allow(dead_code))]
    loop_values: Vec<u128>,
}

fn fill(text: &str, substitutions: &[(&str, String)]) -> String {
    let mut s = text.to_string();
    for (slot, value) in substitutions {
        s = s.replace(&format!("[{slot}]"), value);
    }
    s
}

fn draw_word_problem(
    template: &WordTemplate,
    steps: u32,
    max_calc_target: u64,
    seed: u64,
    exact_product: bool,
) -> Result<WordDraw, GenError> {
    assert!(steps >= 1, "word problems need at least one step");
    assert!(max_calc_target >= 1, "max_calc target must be positive");
    let unsat = || GenError::UnsatisfiableTarget {
        template: template.template_id.clone(),
        steps,
        target: max_calc_target,
    };

    let mut rng = SplitMix64::keyed(&[seed, hash_str("word"), hash_str(&template.template_id)]);
    let name = *rng.pick(&NAMES);

    let (a, b) = if exact_product {
        sample_product_exact(&mut rng, max_calc_target).ok_or_else(unsat)?
    } else {
        sample_product_band(&mut rng, max_calc_target).ok_or_else(unsat)?
    };
    let product = a * b;

    // Loop values: one per repetition. Subtractive templates must keep the
    // running total non-negative with room for every later repetition.
    let reps = (steps - 1) as usize;
    let subtractive = template.loop_is_subtraction();
    if subtractive && product < steps as u128 {
        return Err(unsat());
    }
    let mut loop_values = Vec::with_capacity(reps);
    let mut running = product;
    for j in 0..reps {
        let x = if subtractive {
            let remaining_after = (reps - 1 - j) as u128;
            let hi = (running - remaining_after).clamp(1, MAX_LOOP_VALUE);
            rng.range_u128(1, hi)
        } else {
            rng.range_u128(1, MAX_LOOP_VALUE)
        };
        running = if subtractive {
            running - x
        } else {
            running + x
        };
        loop_values.push(x);
    }

    // Gold via the postfix machine plus the loop folds.
    let (sa, sb) = match template.program.as_slice() {
        [PostfixTok::Slot(sa), PostfixTok::Slot(sb), _] => (sa.clone(), sb.clone()),
        _ => unreachable!("validated base program"),
    };
    let slots = BTreeMap::from([(sa.clone(), BigInt::from(a)), (sb.clone(), BigInt::from(b))]);
    let mut gold = run_postfix(&template.program, &slots);
    for &x in &loop_values {
        let mut loop_slots = BTreeMap::new();
        if let PostfixTok::Slot(sx) = &template.loop_program[0] {
            loop_slots.insert(sx.clone(), BigInt::from(x));
        }
        // acc op X: run the loop program with the accumulator pre-pushed.
        let mut prog = vec![PostfixTok::Slot("ACC".to_string())];
        prog.extend(template.loop_program.iter().cloned());
        loop_slots.insert("ACC".to_string(), gold);
        gold = run_postfix(&prog, &loop_slots);
    }

    let mut parts = vec![fill(
        &template.base_text,
        &[
            ("NAME", name.to_string()),
            (sa.as_str(), a.to_string()),
            (sb.as_str(), b.to_string()),
        ],
    )];
    let sx = match &template.loop_program[0] {
        PostfixTok::Slot(sx) => sx.clone(),
        _ => unreachable!("validated loop program"),
    };
    for (j, &x) in loop_values.iter().enumerate() {
        parts.push(fill(
            &template.loop_text,
            &[
                ("NAME", name.to_string()),
                ("I", (j + 1).to_string()),
                (sx.as_str(), x.to_string()),
            ],
        ));
    }
    parts.push(template.question.clone());

    let record = ProblemRecord {
        id: format!("word-{}-s{seed}", template.template_id),
        task_kind: TaskKind::WordProblem,
        prompt: parts.join(" "),
        gold_answer: BigRational::from_integer(gold),
        difficulty: DifficultyVector::new()
            .with(Dim::PlanSteps, steps as f64)
            .with(Dim::MaxCalc, product as f64),
        template_id: Some(template.template_id.clone()),
        seed,
        language: "en".to_string(),
    };
    Ok(WordDraw {
        record,
        a,
        b,
        loop_values,
    })
}

/// Generate one word problem: the loop segment repeats `steps - 1` times so
/// `plan_steps = steps`, and the base multiplication's product lands in
/// `[max_calc_target/2, max_calc_target]`.
pub fn gen_word_problem(
    template: &WordTemplate,
    steps: u32,
    max_calc_target: u64,
    seed: u64,
) -> Result<ProblemRecord, GenError> {
    draw_word_problem(template, steps, max_calc_target, seed, false).map(|d| d.record)
}

// ---------------------------------------------------------------------------
// Stratified multi-step dataset
// ---------------------------------------------------------------------------

/// Number of records [`gen_biggsm`] produces.
pub const BIGGSM_COUNT: usize = 610;
const STEP_ROWS: usize = 16;
const CALC_COLS: usize = 10;
const CALC_MIN: f64 = 6.0;
const CALC_MAX: f64 = 300_000.0;

fn calc_edges() -> [f64; CALC_COLS + 1] {
    let mut edges = [0.0; CALC_COLS + 1];
    for (c, e) in edges.iter_mut().enumerate() {
        *e = CALC_MIN * (CALC_MAX / CALC_MIN).powf(c as f64 / CALC_COLS as f64);
    }
    edges
}

/// Build the 610-problem stratified multi-step dataset: a 16x10 grid of
/// (steps x geometric product bin) with 3 problems per cell plus 130 extras
/// cycled across the grid, so every product column holds exactly 61 problems
/// and every step row 38 or 39. The grid corners are pinned to the exact
/// extremes: (1 step, product 6) and (16 steps, product 300000).
pub fn gen_biggsm(
    master_seed: u64,
    templates: &[WordTemplate],
) -> Result<Vec<ProblemRecord>, GenError> {
    assert!(!templates.is_empty(), "need at least one template");
    let edges = calc_edges();
    // Targets sit just under each bin's upper edge so the whole sampling
    // band [target/2, target] stays inside the bin (adjacent edges differ
    // by a factor ~2.95 > 2).
    let targets: Vec<u64> = (0..CALC_COLS)
        .map(|c| (0.98 * edges[c + 1]).floor() as u64)
        .collect();

    let mut cell_count = [[3usize; CALC_COLS]; STEP_ROWS];
    for c in 0..CALC_COLS {
        for j in 0..13 {
            cell_count[(c * 13 + j) % STEP_ROWS][c] += 1;
        }
    }

    // (steps, target, exact) in column-major order.
    let mut items: Vec<(u32, u64, bool)> = Vec::with_capacity(BIGGSM_COUNT);
    for (c, &target) in targets.iter().enumerate() {
        for (r, row) in cell_count.iter().enumerate() {
            for _ in 0..row[c] {
                items.push((r as u32 + 1, target, false));
            }
        }
    }
    debug_assert_eq!(items.len(), BIGGSM_COUNT);
    items[0] = (1, CALC_MIN as u64, true);
    let last = items.len() - 1;
    items[last] = (STEP_ROWS as u32, CALC_MAX as u64, true);

    let mut out = Vec::with_capacity(items.len());
    for (i, &(steps, target, exact)) in items.iter().enumerate() {
        let item_seed = SplitMix64::keyed(&[master_seed, hash_str("biggsm"), i as u64]).next_u64();
        let mut made = None;
        let mut last_err = None;
        for t in 0..templates.len() {
            let template = &templates[(i + t) % templates.len()];
            match draw_word_problem(template, steps, target, item_seed, exact) {
                Ok(d) => {
                    made = Some(d.record);
                    break;
                }
                Err(e) => last_err = Some(e),
            }
        }
        let mut rec = match made {
            Some(r) => r,
            None => return Err(last_err.expect("at least one template was tried")),
        };
        rec.id = format!("biggsm-s{master_seed}-{i:06}");
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::dataset_stats;
    use crate::types::{validate_dataset, validate_problem};
    use num_traits::ToPrimitive;

    fn template(id: &str) -> &'static WordTemplate {
        builtin_templates()
            .iter()
            .find(|t| t.template_id == id)
            .expect("template exists")
    }

    #[test]
    fn builtin_library_loads_and_validates() {
        let ts = builtin_templates();
        assert_eq!(ts.len(), 13);
        let ids: BTreeSet<_> = ts.iter().map(|t| t.template_id.clone()).collect();
        assert_eq!(ids.len(), 13);
        assert!(template("bakery").loop_is_subtraction());
        assert_eq!(
            ts.iter().filter(|t| t.loop_is_subtraction()).count(),
            1,
            "exactly one subtractive scenario"
        );
    }

    #[test]
    fn malformed_templates_are_rejected() {
        // Two multiplications in the base program.
        let bad = "id: t1\nbase: [A] and [B] and [C].\nloop: add [X].\nquestion: total?\nprogram: A B * C *\nloop_program: X +\n";
        assert!(matches!(
            parse_templates(bad),
            Err(GenError::BadTemplate { .. })
        ));
        // Slot mentioned in text but not in program.
        let bad = "id: t2\nbase: [A] rows of [B] with [C] spare.\nloop: add [X].\nquestion: total?\nprogram: A B *\nloop_program: X +\n";
        assert!(matches!(
            parse_templates(bad),
            Err(GenError::BadTemplate { .. })
        ));
        // Missing field.
        let bad =
            "id: t3\nbase: [A] rows of [B].\nquestion: total?\nprogram: A B *\nloop_program: X +\n";
        assert!(matches!(parse_templates(bad), Err(GenError::Parse { .. })));
        // Not field: value shaped.
        assert!(matches!(
            parse_templates("id t4\n"),
            Err(GenError::Parse { line: 1, .. })
        ));
    }

    /// Independent gold path: plain u128/i128 arithmetic on the drawn values,
    /// no postfix machine involved.
    fn independent_gold(d: &WordDraw, subtractive: bool) -> BigInt {
        let base = (d.a * d.b) as i128;
        let folded = d.loop_values.iter().fold(base, |acc, &x| {
            if subtractive {
                acc - x as i128
            } else {
                acc + x as i128
            }
        });
        BigInt::from(folded)
    }

    #[test]
    fn word_problem_structure_and_gold() {
        let t = template("orchard");
        let d = draw_word_problem(t, 4, 100, 5, false).unwrap();
        let rec = &d.record;
        assert_eq!(rec.difficulty.get(Dim::PlanSteps), Some(4.0));
        let mc = rec.difficulty.get(Dim::MaxCalc).unwrap();
        assert!((50.0..=100.0).contains(&mc), "product {mc} outside band");
        assert!((mc - (d.a * d.b) as f64).abs() < 1e-9);
        assert!(rec.prompt.contains("In week 1,"));
        assert!(rec.prompt.contains("In week 3,"));
        assert!(!rec.prompt.contains("In week 4,"));
        assert!(rec
            .prompt
            .ends_with("How many apple trees are in the orchard now?"));
        assert!(
            !rec.prompt.contains('['),
            "unfilled slot in: {}",
            rec.prompt
        );
        assert_eq!(
            rec.gold_answer,
            BigRational::from_integer(independent_gold(&d, false))
        );
        validate_problem(rec).unwrap();
    }

    #[test]
    fn single_step_problem_has_no_loop_segment() {
        let t = template("library");
        let d = draw_word_problem(t, 1, 6, 9, true).unwrap();
        assert_eq!(d.record.difficulty.get(Dim::PlanSteps), Some(1.0));
        assert_eq!(d.record.difficulty.get(Dim::MaxCalc), Some(6.0));
        assert!(d.loop_values.is_empty());
        assert!(!d.record.prompt.contains("month"));
        assert_eq!(
            d.record.gold_answer,
            BigRational::from_integer(BigInt::from(6))
        );
    }

    #[test]
    fn subtractive_template_stays_nonnegative_or_fails_cleanly() {
        let t = template("bakery");
        // Impossible: 16 steps need product >= 16, but the band tops out at 12.
        assert!(matches!(
            draw_word_problem(t, 16, 12, 0, false),
            Err(GenError::UnsatisfiableTarget { .. })
        ));
        // Feasible case: gold stays within [0, product].
        for seed in 0..20 {
            let d = draw_word_problem(t, 10, 5000, seed, false).unwrap();
            let gold = d.record.gold_answer.to_integer();
            assert!(gold >= BigInt::from(0));
            assert!(gold < BigInt::from(d.a * d.b));
            assert_eq!(
                d.record.gold_answer,
                BigRational::from_integer(independent_gold(&d, true))
            );
        }
    }

    #[test]
    fn band_tightness_across_random_requests() {
        let ts = builtin_templates();
        let mut rng = SplitMix64::keyed(&[77, hash_str("band-test")]);
        for i in 0..100 {
            let t = &ts[rng.range_usize(0, ts.len() - 1)];
            let steps = rng.range_u64(1, 16) as u32;
            let target = rng.range_u64(6, 300_000);
            match draw_word_problem(t, steps, target, i, false) {
                Ok(d) => {
                    let mc = d.record.difficulty.get(Dim::MaxCalc).unwrap();
                    assert!(mc <= target as f64);
                    assert!(mc >= (target as f64 / 2.0).floor());
                    assert_eq!(d.record.difficulty.get(Dim::PlanSteps), Some(steps as f64));
                    assert_eq!(d.record.gold_answer, {
                        let sub = t.loop_is_subtraction();
                        BigRational::from_integer(independent_gold(&d, sub))
                    });
                }
                Err(GenError::UnsatisfiableTarget { .. }) => {
                    assert!(
                        t.loop_is_subtraction(),
                        "only the subtractive scenario may be unsatisfiable"
                    );
                }
                Err(e) => panic!("unexpected error {e:?}"),
            }
        }
    }

    #[test]
    fn stratified_dataset_shape() {
        let ds = gen_biggsm(33, builtin_templates()).unwrap();
        assert_eq!(ds.len(), BIGGSM_COUNT);
        validate_dataset(&ds).unwrap();
        for rec in &ds {
            validate_problem(rec).unwrap();
        }

        let st = dataset_stats(&ds).unwrap();
        let steps = &st.dims["plan_steps"];
        assert_eq!((steps.min, steps.max), (1.0, 16.0));
        assert_eq!(steps.histogram.len(), 16);
        for bin in &steps.histogram {
            assert!(
                bin.count == 38 || bin.count == 39,
                "steps row has {} problems",
                bin.count
            );
        }

        let calc = &st.dims["max_calc"];
        assert_eq!((calc.min, calc.max), (6.0, 300_000.0));
        assert_eq!(calc.histogram.len(), 10);
        for bin in &calc.histogram {
            assert_eq!(bin.count, 61, "product column must hold exactly 61");
        }

        // Every template participates.
        let used: BTreeSet<_> = ds.iter().filter_map(|r| r.template_id.clone()).collect();
        assert_eq!(used.len(), 13);

        // Pinned extremes.
        assert_eq!(ds[0].difficulty.get(Dim::PlanSteps), Some(1.0));
        assert_eq!(ds[0].difficulty.get(Dim::MaxCalc), Some(6.0));
        let last = &ds[BIGGSM_COUNT - 1];
        assert_eq!(last.difficulty.get(Dim::PlanSteps), Some(16.0));
        assert_eq!(last.difficulty.get(Dim::MaxCalc), Some(300_000.0));
    }

    #[test]
    fn stratified_dataset_is_deterministic() {
        let a = gen_biggsm(5, builtin_templates()).unwrap();
        let b = gen_biggsm(5, builtin_templates()).unwrap();
        assert_eq!(a, b);
        let c = gen_biggsm(6, builtin_templates()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn biggsm_products_fill_their_bins() {
        let ds = gen_biggsm(1, builtin_templates()).unwrap();
        let edges = calc_edges();
        // Column-major layout: items 0..61 belong to product bin 0, etc.
        for (i, rec) in ds.iter().enumerate() {
            let col = i / 61;
            let mc = rec.difficulty.get(Dim::MaxCalc).unwrap();
            assert!(
                mc >= edges[col] - 1e-9 && mc <= edges[col + 1] + 1e-9,
                "item {i} product {mc} outside bin {col} [{}, {}]",
                edges[col],
                edges[col + 1]
            );
        }
        // Gold answers are integers; exact evaluation end to end.
        for rec in &ds {
            assert!(rec.gold_answer.denom().to_f64().unwrap() == 1.0);
        }
    }
}
