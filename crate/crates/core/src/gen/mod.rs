//! Deterministic benchmark generation.
//!
//! Three task families, all with exact big-integer ground truth and known
//! difficulty coordinates:
//!
//! - single-operation arithmetic (`x op y=`), division pairs constructed
//!   multiplicatively so every quotient is an integer;
//! - compound infix expressions over `{+, -, *}` with a known operator count;
//! - templated multi-step word problems ([`word`]), where a loopable
//!   narrative segment adds exactly one arithmetic step per repetition.
//!
//! Generation is a pure function of the spec (seed included): the same spec
//! yields byte-identical datasets, and each record draws from its own keyed
//! stream so earlier records do not change when `count` grows.

pub mod word;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{eval_exact, max_mul_magnitude, BinOp, Expr};
use crate::rng::{hash_str, SplitMix64};
use crate::types::{DifficultyVector, Dim, ProblemRecord, TaskKind};

// ---------------------------------------------------------------------------
// Errors and spec
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("operand range [{lo}, {hi}] is empty (need 1 <= lo <= hi)")]
    EmptyRange { lo: u128, hi: u128 },
    #[error("could not hit max_calc target {target} with template `{template}` at {steps} steps")]
    UnsatisfiableTarget {
        template: String,
        steps: u32,
        target: u64,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("template `{id}`: {message}")]
    BadTemplate { id: String, message: String },
}

/// What to generate. `operand_range` bounds single-op and compound operands;
/// `steps_range` and `max_calc_cap` bound word problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub task_kind: TaskKind,
    pub count: usize,
    pub operand_range: (u128, u128),
    pub steps_range: (u32, u32),
    pub max_calc_cap: u64,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(task_kind: TaskKind, count: usize, seed: u64) -> Self {
        GenSpec {
            task_kind,
            count,
            operand_range: (1, 10_000_000_000),
            steps_range: (1, 16),
            max_calc_cap: 300_000,
            seed,
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        let (lo, hi) = self.operand_range;
        if lo < 1 || hi < lo {
            return Err(GenError::EmptyRange { lo, hi });
        }
        assert!(
            self.steps_range.0 >= 1 && self.steps_range.0 <= self.steps_range.1,
            "steps_range must be an ordered range starting at 1 or above"
        );
        Ok(())
    }
}

/// The fixed instruction wrapping every formula-calculation prompt.
pub const CALC_PROMPT_PREFIX: &str = "Please calculate the formula given below:";

fn calc_prompt(formula: &str) -> String {
    format!("{CALC_PROMPT_PREFIX}\n\n{formula}=")
}

// ---------------------------------------------------------------------------
// Single operations
// ---------------------------------------------------------------------------

fn kind_tag(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Mult => "mult",
        TaskKind::Add => "add",
        TaskKind::Sub => "sub",
        TaskKind::Div => "div",
        TaskKind::CompoundExpr => "compound",
        TaskKind::WordProblem => "word",
        TaskKind::Multihop => "multihop",
        TaskKind::Multilingual => "multilingual",
    }
}

/// Generate `count` single-operation problems. Operands are uniform in the
/// range; division problems are built as `(q*d) / d` so the quotient is the
/// uniformly drawn integer `q`. The difficulty's `max_calc` is the absolute
/// product for multiplication and the largest operand otherwise.
pub fn gen_single_op(spec: &GenSpec) -> Result<Vec<ProblemRecord>, GenError> {
    spec.validate()?;
    let (op, kind) = match spec.task_kind {
        TaskKind::Mult => ("*", TaskKind::Mult),
        TaskKind::Add => ("+", TaskKind::Add),
        TaskKind::Sub => ("-", TaskKind::Sub),
        TaskKind::Div => ("/", TaskKind::Div),
        other => panic!("gen_single_op does not handle {other:?}"),
    };
    let tag = kind_tag(kind);
    let (lo, hi) = spec.operand_range;

    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut rng = SplitMix64::keyed(&[spec.seed, hash_str(tag), i as u64]);
        let x = rng.range_u128(lo, hi);
        let y = rng.range_u128(lo, hi);
        let (lhs, rhs, gold, max_calc): (BigInt, BigInt, BigInt, f64) = match kind {
            TaskKind::Add => (
                x.into(),
                y.into(),
                BigInt::from(x) + BigInt::from(y),
                x.max(y) as f64,
            ),
            TaskKind::Sub => (
                x.into(),
                y.into(),
                BigInt::from(x) - BigInt::from(y),
                x.max(y) as f64,
            ),
            TaskKind::Mult => {
                let p = BigInt::from(x) * BigInt::from(y);
                let mc = p.to_f64().expect("product magnitude fits f64 range");
                (x.into(), y.into(), p, mc)
            }
            TaskKind::Div => {
                // x is the quotient, y the divisor; the dividend is exact.
                let dividend = BigInt::from(x) * BigInt::from(y);
                let mc = dividend
                    .to_f64()
                    .expect("dividend magnitude fits f64 range");
                (dividend, y.into(), x.into(), mc)
            }
            _ => unreachable!(),
        };
        out.push(ProblemRecord {
            id: format!("{tag}-s{}-{i:06}", spec.seed),
            task_kind: kind,
            prompt: calc_prompt(&format!("{lhs} {op} {rhs}")),
            gold_answer: BigRational::from_integer(gold),
            difficulty: DifficultyVector::new().with(Dim::MaxCalc, max_calc),
            template_id: None,
            seed: spec.seed,
            language: "en".to_string(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Compound expressions
// ---------------------------------------------------------------------------

fn build_expr(rng: &mut SplitMix64, ops: usize, range: (u128, u128)) -> Expr {
    if ops == 0 {
        return Expr::int(BigInt::from(rng.range_u128(range.0, range.1)));
    }
    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul][rng.range_usize(0, 2)];
    let left_ops = rng.range_usize(0, ops - 1);
    Expr::bin(
        op,
        build_expr(rng, left_ops, range),
        build_expr(rng, ops - 1 - left_ops, range),
    )
}

/// Generate `count` compound expressions with exactly `num_ops` operators
/// drawn from `{+, -, *}`. `plan_steps` is the operator count; `max_calc` is
/// the largest absolute multiplication value under exact evaluation (omitted
/// when the expression multiplies nothing, or nothing of magnitude >= 1).
pub fn gen_compound_expr(spec: &GenSpec, num_ops: usize) -> Result<Vec<ProblemRecord>, GenError> {
    spec.validate()?;
    assert!(
        num_ops >= 1,
        "compound expressions need at least one operator"
    );

    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut rng = SplitMix64::keyed(&[spec.seed, hash_str("compound"), i as u64]);
        let expr = build_expr(&mut rng, num_ops, spec.operand_range);
        let gold = eval_exact(&expr).expect("no division in generated trees");
        let mut difficulty = DifficultyVector::new().with(Dim::PlanSteps, num_ops as f64);
        if let Some(mag) = max_mul_magnitude(&expr).expect("no division in generated trees") {
            let mc = mag.to_f64().expect("magnitude fits f64 range");
            if mc >= 1.0 {
                difficulty = difficulty.with(Dim::MaxCalc, mc);
            }
        }
        out.push(ProblemRecord {
            id: format!("compound-s{}-{i:06}", spec.seed),
            task_kind: TaskKind::CompoundExpr,
            prompt: calc_prompt(&expr.to_string()),
            gold_answer: gold,
            difficulty,
            template_id: None,
            seed: spec.seed,
            language: "en".to_string(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dataset statistics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub values: usize,
    pub min: f64,
    pub max: f64,
    pub histogram: Vec<HistBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: usize,
    pub dims: BTreeMap<String, DimStats>,
}

/// Per-dimension coverage summary. Integer-valued dimensions get one bin per
/// integer (up to 64 of them); continuous ones get 10 bins, geometric when
/// the values are all positive, linear otherwise.
pub fn dataset_stats(ds: &[ProblemRecord]) -> Result<DatasetStats, GenError> {
    if ds.is_empty() {
        return Err(GenError::EmptyDataset);
    }
    let mut per_dim: BTreeMap<Dim, Vec<f64>> = BTreeMap::new();
    for rec in ds {
        for (dim, v) in rec.difficulty.iter() {
            per_dim.entry(dim).or_default().push(v);
        }
    }
    let mut dims = BTreeMap::new();
    for (dim, vals) in per_dim {
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let edges: Vec<f64> = if min == max {
            vec![min, max]
        } else if dim.integral() && (max - min) <= 64.0 {
            let (lo, hi) = (min.floor() as i64, max.floor() as i64);
            (lo..=hi + 1).map(|v| v as f64 - 0.5).collect()
        } else if min > 0.0 {
            let (l, h) = (min.ln(), max.ln());
            (0..=10)
                .map(|i| (l + (h - l) * i as f64 / 10.0).exp())
                .collect()
        } else {
            (0..=10)
                .map(|i| min + (max - min) * i as f64 / 10.0)
                .collect()
        };
        let nbins = edges.len() - 1;
        let mut counts = vec![0usize; nbins];
        for &v in &vals {
            let mut j = edges.partition_point(|&e| e <= v);
            // Left-closed bins, the last one right-closed.
            j = j.saturating_sub(1).min(nbins - 1);
            counts[j] += 1;
        }
        dims.insert(
            dim.name().to_string(),
            DimStats {
                values: vals.len(),
                min,
                max,
                histogram: (0..nbins)
                    .map(|j| HistBin {
                        lo: edges[j],
                        hi: edges[j + 1],
                        count: counts[j],
                    })
                    .collect(),
            },
        );
    }
    Ok(DatasetStats {
        count: ds.len(),
        dims,
    })
}

// ---------------------------------------------------------------------------
// JSONL IO
// ---------------------------------------------------------------------------

fn io_err(path: &Path, e: std::io::Error) -> GenError {
    GenError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Write records as JSON Lines. Gold answers serialize as exact `num/den`
/// strings, so the round trip is bit-exact.
pub fn write_dataset(ds: &[ProblemRecord], path: &Path) -> Result<(), GenError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in ds {
        let line = serde_json::to_string(rec).expect("records always serialize");
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read a JSON Lines dataset; blank lines are ignored. A malformed line
/// reports its 1-based line number.
pub fn read_dataset(path: &Path) -> Result<Vec<ProblemRecord>, GenError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProblemRecord = serde_json::from_str(&line).map_err(|e| GenError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
