//! Evaluation harness: backends, the run loop, and checkpointing.
//!
//! [`run_eval`] drives a [`Backend`] over a dataset with bounded concurrency,
//! per-sample retries with exponential backoff, and a JSONL checkpoint that
//! makes runs resumable: every finished record is appended as one line, a
//! torn final line from an interrupted write is dropped on resume, and
//! already-checkpointed problems are never re-queried. The final checkpoint
//! is normalized to problem-id order, so an interrupted-and-resumed run
//! produces a byte-identical file to an uninterrupted one.
//!
//! Multi-sample strategies are graded by self-consistency: exact-match
//! majority vote over the per-sample final answers, ties broken toward the
//! earliest sample.

pub mod http;
pub mod planted;
pub mod prompts;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::{Duration, Instant};

use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grade::{answers_match, grade, parse_trace, trace_costs, Trace, TraceFormat};
use crate::harness::planted::PlantedSettings;
use crate::harness::prompts::{build_prompt, Strategy};
use crate::types::{validate_dataset, Dim, EvalRecord, GradeResult, ProblemRecord};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("strategy `{strategy}` requires {expected} demos, got {got}")]
    DemoCountMismatch {
        strategy: String,
        expected: usize,
        got: usize,
    },
    #[error("backend gave up after {attempts} attempt(s): {last}")]
    BackendExhausted { attempts: u32, last: String },
    #[error("run cancelled before completion")]
    AbortedByUser,
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
}

// ---------------------------------------------------------------------------
// Backend abstraction
// ---------------------------------------------------------------------------

/// Decoding parameters forwarded to the backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            temperature: 0.0,
            top_p: 1.0,
        }
    }
}

/// One completion request: the assembled prompt plus enough context
/// (problem, run seed, sample index) for deterministic backends to derive
/// their behavior reproducibly.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt: &'a str,
    pub sampling: Sampling,
    /// Run-level seed; combined with `sample_idx` for per-sample streams.
    pub seed: u64,
    /// 0-based index when a strategy draws several samples per problem.
    pub sample_idx: u32,
    pub problem: &'a ProblemRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Backend failures, split by whether retrying can help.
#[derive(Debug, Error)]
pub enum BackendError {
    /// Worth retrying: rate limit, timeout, transport hiccup.
    #[error("transient backend error: {0}")]
    Transient(String),
    /// Retrying cannot help: bad request, authentication, protocol mismatch.
    #[error("fatal backend error: {0}")]
    Fatal(String),
}

/// A completion provider. Implementations must be shareable across worker
/// threads.
pub trait Backend: Send + Sync {
    fn complete(&self, req: &CompletionRequest<'_>) -> Result<Completion, BackendError>;

    /// Deterministic backends reproduce the same completion for the same
    /// request; the harness records zero latency for them so run artifacts
    /// are byte-stable.
    fn deterministic(&self) -> bool {
        false
    }

    fn model_id(&self) -> &str;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Knobs for the run loop itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    /// Maximum concurrently evaluated problems.
    pub max_in_flight: usize,
    /// Retries per sample after the first attempt (transient errors only).
    pub max_retries: u32,
    /// Per-request timeout handed to HTTP backends.
    pub timeout_ms: u64,
    /// Run-level seed forwarded to backends.
    pub seed: u64,
    /// Base backoff; attempt `i` sleeps `backoff_ms * 2^i`.
    pub backoff_ms: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_in_flight: 4,
            max_retries: 5,
            timeout_ms: 60_000,
            seed: 0,
            backoff_ms: 250,
        }
    }
}

/// Full evaluation configuration, parsed from a `key = value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// `planted` or `http`.
    pub backend_kind: String,
    pub backend_url: String,
    pub backend_model: String,
    /// Environment variable holding the bearer token for HTTP backends.
    pub auth_env: String,
    /// When set, overrides the strategy preset's temperature.
    pub temperature: Option<f64>,
    /// When set, overrides the strategy preset's top-p.
    pub top_p: Option<f64>,
    pub run: RunConfig,
    pub planted: PlantedSettings,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            backend_kind: "planted".into(),
            backend_url: String::new(),
            backend_model: "model".into(),
            auth_env: "RB_API_KEY".into(),
            temperature: None,
            top_p: None,
            run: RunConfig::default(),
            planted: PlantedSettings::default(),
        }
    }
}

/// Parse an evaluation config. Format: one `key = value` per line, `#` lines
/// and blank lines ignored. Unknown keys are errors, so typos surface
/// instead of silently running with defaults.
///
/// Keys: `backend.kind|url|model|auth_env`, `sampling.temperature|top_p`,
/// `run.max_in_flight|max_retries|timeout_ms|seed|backoff_ms`,
/// `planted.gamma|mu|k|pfrb_sc_gain`, and `planted.term.<dim>.N|b` to replace
/// the planted law's terms.
pub fn parse_config(text: &str) -> Result<EvalConfig, HarnessError> {
    let mut cfg = EvalConfig::default();
    // dim -> (N, b) overrides; only applied if any term key appears.
    let mut terms: BTreeMap<String, (Option<f64>, Option<f64>)> = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let Some((key, value)) = line.split_once('=') else {
            return Err(HarnessError::Config(format!(
                "line {lineno}: expected `key = value`, got `{line}`"
            )));
        };
        let (key, value) = (key.trim(), value.trim());
        let num = |what: &str| -> Result<f64, HarnessError> {
            value.parse::<f64>().map_err(|_| {
                HarnessError::Config(format!(
                    "line {lineno}: `{what}` wants a number, got `{value}`"
                ))
            })
        };
        let int = |what: &str| -> Result<u64, HarnessError> {
            value.parse::<u64>().map_err(|_| {
                HarnessError::Config(format!(
                    "line {lineno}: `{what}` wants a nonnegative integer, got `{value}`"
                ))
            })
        };

        match key {
            "backend.kind" => {
                if value != "planted" && value != "http" {
                    return Err(HarnessError::Config(format!(
                        "line {lineno}: backend.kind must be `planted` or `http`, got `{value}`"
                    )));
                }
                cfg.backend_kind = value.to_string();
            }
            "backend.url" => cfg.backend_url = value.to_string(),
            "backend.model" => cfg.backend_model = value.to_string(),
            "backend.auth_env" => cfg.auth_env = value.to_string(),
            "sampling.temperature" => cfg.temperature = Some(num(key)?),
            "sampling.top_p" => cfg.top_p = Some(num(key)?),
            "run.max_in_flight" => cfg.run.max_in_flight = int(key)?.max(1) as usize,
            "run.max_retries" => cfg.run.max_retries = int(key)? as u32,
            "run.timeout_ms" => cfg.run.timeout_ms = int(key)?,
            "run.seed" => cfg.run.seed = int(key)?,
            "run.backoff_ms" => cfg.run.backoff_ms = int(key)?,
            "planted.gamma" => cfg.planted.gamma = num(key)?,
            "planted.mu" => cfg.planted.mu = num(key)?,
            "planted.k" => cfg.planted.k = num(key)?,
            "planted.pfrb_sc_gain" => cfg.planted.pfrb_sc_gain = num(key)?,
            _ => {
                if let Some(rest) = key.strip_prefix("planted.term.") {
                    let Some((dim, field)) = rest.rsplit_once('.') else {
                        return Err(HarnessError::Config(format!(
                            "line {lineno}: expected planted.term.<dim>.N or .b, got `{key}`"
                        )));
                    };
                    if Dim::parse(dim).is_none() {
                        return Err(HarnessError::Config(format!(
                            "line {lineno}: unknown difficulty dimension `{dim}`"
                        )));
                    }
                    let slot = terms.entry(dim.to_string()).or_default();
                    match field {
                        "N" | "n" => slot.0 = Some(num(key)?),
                        "b" => slot.1 = Some(num(key)?),
                        _ => {
                            return Err(HarnessError::Config(format!(
                                "line {lineno}: term field must be N or b, got `{field}`"
                            )));
                        }
                    }
                } else {
                    return Err(HarnessError::Config(format!(
                        "line {lineno}: unknown key `{key}`"
                    )));
                }
            }
        }
    }

    if !terms.is_empty() {
        cfg.planted.terms = terms
            .into_iter()
            .map(|(dim, (n, b))| (dim, n.unwrap_or(1.0), b.unwrap_or(0.0)))
            .collect();
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Self-consistency
// ---------------------------------------------------------------------------

/// Outcome of a majority vote over per-sample final answers.
#[derive(Debug, Clone, PartialEq)]
pub struct Consensus {
    /// The majority answer, if any sample produced one.
    pub majority: Option<BigRational>,
    /// Whether the majority answer matches gold.
    pub correct: bool,
    /// Index of the earliest sample that produced the majority answer.
    pub winner_idx: Option<usize>,
}

/// Majority vote over the final answers parsed from `samples`. Answers are
/// grouped by exact rational equality; the largest group wins, ties broken
/// toward the group seen first. Samples with no recoverable final answer
/// abstain. No answers at all means incorrect.
pub fn self_consistency(samples: &[String], gold: &BigRational, format: TraceFormat) -> Consensus {
    // (value, votes, first sample index, raw token of first occurrence)
    let mut groups: Vec<(BigRational, usize, usize, Option<String>)> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let (trace, _) = parse_trace(s, format);
        let Some(v) = trace.final_answer else {
            continue;
        };
        match groups.iter_mut().find(|(g, _, _, _)| *g == v) {
            Some((_, votes, _, _)) => *votes += 1,
            None => groups.push((v, 1, i, trace.final_raw)),
        }
    }
    match groups
        .iter()
        .max_by_key(|(_, votes, first, _)| (*votes, std::cmp::Reverse(*first)))
    {
        Some((v, _, first, raw)) => Consensus {
            correct: answers_match(v, raw.as_deref(), gold),
            majority: Some(v.clone()),
            winner_idx: Some(*first),
        },
        None => Consensus {
            majority: None,
            correct: false,
            winner_idx: None,
        },
    }
}

// ---------------------------------------------------------------------------
// Single-problem evaluation
// ---------------------------------------------------------------------------

pub(crate) fn complete_with_retries(
    backend: &dyn Backend,
    req: &CompletionRequest<'_>,
    cfg: &RunConfig,
) -> Result<Completion, HarnessError> {
    let mut attempts = 0u32;
    let last;
    loop {
        attempts += 1;
        match backend.complete(req) {
            Ok(c) => return Ok(c),
            Err(BackendError::Fatal(m)) => {
                last = format!("fatal: {m}");
                break;
            }
            Err(BackendError::Transient(m)) => {
                if attempts > cfg.max_retries {
                    last = m;
                    break;
                }
                let factor = 1u64 << (attempts - 1).min(10);
                std::thread::sleep(Duration::from_millis(cfg.backoff_ms.saturating_mul(factor)));
            }
        }
    }
    Err(HarnessError::BackendExhausted { attempts, last })
}

/// Evaluate one problem: draw the strategy's samples (with retries), grade
/// by direct match or majority vote, and account tokens. A sample whose
/// retries are exhausted becomes the empty string — it abstains from voting
/// and grades incorrect, but never aborts the run.
fn eval_one(
    p: &ProblemRecord,
    backend: &dyn Backend,
    strategy: &Strategy,
    cfg: &RunConfig,
) -> EvalRecord {
    let bundle = build_prompt(p, strategy).expect("strategy validated before the run started");
    let k = strategy.samples_k.max(1);
    let start = Instant::now();

    let mut samples = Vec::with_capacity(k as usize);
    let (mut input_tokens, mut output_tokens) = (0u64, 0u64);
    for sample_idx in 0..k {
        let req = CompletionRequest {
            prompt: &bundle.prompt,
            sampling: strategy.sampling,
            seed: cfg.seed,
            sample_idx,
            problem: p,
        };
        match complete_with_retries(backend, &req, cfg) {
            Ok(c) => {
                input_tokens += c.input_tokens;
                output_tokens += c.output_tokens;
                samples.push(c.text);
            }
            Err(_) => samples.push(String::new()),
        }
    }

    let traces: Vec<Trace> = samples
        .iter()
        .map(|s| parse_trace(s, bundle.format).0)
        .collect();
    let grade_result = if k > 1 {
        let consensus = self_consistency(&samples, &p.gold_answer, bundle.format);
        // Trace costs are read from the earliest majority-voting sample.
        let winner = consensus.winner_idx.unwrap_or(0);
        let costs = trace_costs(&traces[winner]);
        GradeResult {
            answer_correct: consensus.correct,
            plan_steps: costs.plan_steps,
            max_calc: costs.max_calc,
            calc_all_correct: costs.calc_all_correct,
            plan_correct: None,
        }
    } else {
        grade(&traces[0], &p.gold_answer)
    };

    let latency_ms = if backend.deterministic() {
        0
    } else {
        start.elapsed().as_millis() as u64
    };
    EvalRecord {
        problem_id: p.id.clone(),
        strategy: strategy.tag,
        model_id: backend.model_id().to_string(),
        samples,
        traces: traces.into_iter().map(Some).collect(),
        grade: Some(grade_result),
        input_tokens,
        output_tokens,
        latency_ms,
    }
}

// ---------------------------------------------------------------------------
// Run loop with checkpointing
// ---------------------------------------------------------------------------

fn io_error(path: &Path, e: &dyn std::fmt::Display) -> HarnessError {
    HarnessError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn append_record(file: &mut fs::File, path: &Path, rec: &EvalRecord) -> Result<(), HarnessError> {
    let mut line = serde_json::to_string(rec).map_err(|e| io_error(path, &e))?;
    line.push('\n');
    // One write per record: a crash leaves at most one torn final line.
    file.write_all(line.as_bytes())
        .map_err(|e| io_error(path, &e))
}

fn write_records_atomic<'a>(
    path: &Path,
    records: impl Iterator<Item = &'a EvalRecord>,
) -> Result<(), HarnessError> {
    let tmp = path.with_extension("jsonl.tmp");
    let mut file = fs::File::create(&tmp).map_err(|e| io_error(&tmp, &e))?;
    for rec in records {
        append_record(&mut file, &tmp, rec)?;
    }
    file.sync_all().map_err(|e| io_error(&tmp, &e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, &e))
}

/// Run `strategy` over `dataset` against `backend`, checkpointing each
/// finished record as one JSONL line.
///
/// Resume semantics: existing checkpoint records are trusted and their
/// problems skipped. A torn (unparseable) final line — the signature of an
/// interrupted write — is dropped; any earlier unparseable line, a record
/// for a problem not in the dataset, or a record from a different strategy
/// is a hard [`HarnessError::Checkpoint`] error. On success the checkpoint
/// holds exactly one record per problem, sorted by problem id, and the
/// returned records are in the same order.
///
/// `cancel`, when set to true by another thread, stops workers from taking
/// new problems; finished work is committed and the run returns
/// [`HarnessError::AbortedByUser`] (unless everything finished anyway).
pub fn run_eval(
    dataset: &[ProblemRecord],
    backend: &dyn Backend,
    strategy: &Strategy,
    cfg: &RunConfig,
    checkpoint: &Path,
    cancel: Option<&AtomicBool>,
) -> Result<Vec<EvalRecord>, HarnessError> {
    strategy.validate()?;
    validate_dataset(dataset).map_err(|e| HarnessError::Config(format!("invalid dataset: {e}")))?;

    // ---- load any existing checkpoint ----
    let ids: BTreeSet<&str> = dataset.iter().map(|p| p.id.as_str()).collect();
    let mut done: BTreeMap<String, EvalRecord> = BTreeMap::new();
    // Problem ids in on-disk line order, to decide the final normalization.
    let mut file_order: Vec<String> = Vec::new();
    if checkpoint.exists() {
        let content = fs::read_to_string(checkpoint).map_err(|e| io_error(checkpoint, &e))?;
        let lines: Vec<&str> = content.lines().collect();
        let n_lines = lines.len();
        let mut normalize = !content.is_empty() && !content.ends_with('\n');
        for (i, line) in lines.into_iter().enumerate() {
            if line.trim().is_empty() {
                normalize = true;
                continue;
            }
            match serde_json::from_str::<EvalRecord>(line) {
                Ok(rec) => {
                    if rec.strategy != strategy.tag {
                        return Err(HarnessError::Checkpoint {
                            line: i + 1,
                            message: format!(
                                "record ran strategy `{}`, this run is `{}`",
                                rec.strategy.name(),
                                strategy.tag.name()
                            ),
                        });
                    }
                    if !ids.contains(rec.problem_id.as_str()) {
                        return Err(HarnessError::Checkpoint {
                            line: i + 1,
                            message: format!("problem `{}` is not in this dataset", rec.problem_id),
                        });
                    }
                    let id = rec.problem_id.clone();
                    if done.insert(id.clone(), rec).is_some() {
                        normalize = true; // duplicate line: last one wins
                    } else {
                        file_order.push(id);
                    }
                }
                // A torn final line is the expected residue of a kill mid-
                // write; anything earlier means real corruption.
                Err(_) if i + 1 == n_lines => normalize = true,
                Err(e) => {
                    return Err(HarnessError::Checkpoint {
                        line: i + 1,
                        message: e.to_string(),
                    });
                }
            }
        }
        if normalize {
            write_records_atomic(checkpoint, done.values())?;
            file_order = done.keys().cloned().collect();
        }
    }

    // ---- evaluate what's missing ----
    let pending: Vec<&ProblemRecord> = dataset
        .iter()
        .filter(|p| !done.contains_key(&p.id))
        .collect();
    let mut io_failure: Option<HarnessError> = None;
    if !pending.is_empty() {
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(checkpoint)
            .map_err(|e| io_error(checkpoint, &e))?;
        let queue: Mutex<VecDeque<usize>> = Mutex::new((0..pending.len()).collect());
        let (tx, rx) = mpsc::channel::<(usize, EvalRecord)>();
        let workers = cfg.max_in_flight.max(1).min(pending.len());

        std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let queue = &queue;
                let pending = &pending;
                scope.spawn(move || loop {
                    if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) {
                        break;
                    }
                    let job = queue.lock().unwrap().pop_front();
                    let Some(j) = job else { break };
                    let rec = eval_one(pending[j], backend, strategy, cfg);
                    if tx.send((j, rec)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);

            // Committer (this thread): write results in queue order so the
            // checkpoint is always a prefix of the dataset's pending list —
            // out-of-order finishers wait in the reorder buffer.
            let mut reorder: BTreeMap<usize, EvalRecord> = BTreeMap::new();
            let mut next = 0usize;
            'commit: for (j, rec) in rx {
                reorder.insert(j, rec);
                while let Some(rec) = reorder.remove(&next) {
                    if let Err(e) = append_record(&mut file, checkpoint, &rec) {
                        io_failure = Some(e);
                        break 'commit; // drops rx; workers stop at next send
                    }
                    file_order.push(rec.problem_id.clone());
                    done.insert(rec.problem_id.clone(), rec);
                    next += 1;
                }
            }
        });
    }
    if let Some(e) = io_failure {
        return Err(e);
    }

    if cancel.is_some_and(|c| c.load(Ordering::SeqCst)) && done.len() < dataset.len() {
        return Err(HarnessError::AbortedByUser);
    }

    // ---- normalize to id order ----
    if !file_order.iter().eq(done.keys()) {
        write_records_atomic(checkpoint, done.values())?;
    }
    let format = strategy.trace_format();
    Ok(done
        .into_values()
        .map(|mut rec| {
            // Records loaded from the checkpoint carry no parsed traces
            // (they are not serialized); rebuild them.
            if rec.traces.len() != rec.samples.len() {
                rec.traces = rec
                    .samples
                    .iter()
                    .map(|s| Some(parse_trace(s, format).0))
                    .collect();
            }
            rec
        })
        .collect())
}
