//! `rb` — generate arithmetic benchmarks, evaluate prompting strategies
//! against a backend, fit the boundary combination law, classify problems by
//! feasibility, render boundary figures, and tabulate strategy comparisons.
//!
//! Conventions shared by every subcommand:
//!
//! - stderr carries logs and progress; stdout carries data and tables only;
//! - identical inputs produce byte-identical outputs;
//! - exit codes: 0 success, 2 invalid flags or usage, 3 generation IO
//!   failure, 4 backend configuration failure, 5 insufficient data for a
//!   fit, 6 empty data for classify/plot/report, 1 anything else.

mod plot;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use rb_core::rng::{hash_str, SplitMix64};
use rb_core::{
    bin_accuracy, boundary_curve, builtin_templates, classify_point, combined_boundary,
    dataset_stats, fit_law, gen_biggsm, gen_compound_expr, gen_single_op, gen_word_problem,
    parse_config, parse_templates, read_dataset, run_eval, validate_dataset, write_dataset,
    Backend, BackendError, Binning, Completion, CompletionRequest, Dim, DimBinning, EvalConfig,
    EvalRecord, FitConfig, FittedLaw, GenError, GenSpec, HttpChat, LawError, LawTemplate, LossKind,
    Planted, ProblemRecord, RBCategory, Strategy, StrategyTag, TaskKind, WordTemplate,
    BIGGSM_COUNT,
};

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Backend(String),
    #[error("{0}")]
    Insufficient(String),
    #[error("{0}")]
    Empty(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Backend(_) => 4,
            CliError::Insufficient(_) => 5,
            CliError::Empty(_) => 6,
            CliError::Other(_) => 1,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Generation-side errors: bad inputs are usage (2), file trouble is IO (3).
fn gen_err(e: GenError) -> CliError {
    match e {
        GenError::Io { path, message } => CliError::Io { path, message },
        GenError::EmptyRange { .. }
        | GenError::UnsatisfiableTarget { .. }
        | GenError::Parse { .. }
        | GenError::BadTemplate { .. } => CliError::Usage(e.to_string()),
        other => CliError::Other(other.to_string()),
    }
}

fn law_err(e: LawError) -> CliError {
    match e {
        LawError::InsufficientData { .. } => CliError::Insufficient(e.to_string()),
        other => CliError::Other(other.to_string()),
    }
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "rb",
    version,
    about = "Measure and map the reasoning boundaries of step-by-step solvers"
)]
struct Cli {
    /// Evaluation config file (`key = value` lines; see `docs/formats.md`).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed override (generation, evaluation run seed, or fit restarts).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path for the command's primary artifact.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a benchmark dataset (JSONL plus a `.stats.json` sidecar).
    Gen(GenArgs),
    /// Evaluate a dataset under a prompting strategy; writes a run JSONL.
    Eval(EvalArgs),
    /// Fit the combination law and accuracy link to a graded run.
    Fit(FitArgs),
    /// Label every problem CFRB/PFRB/CIRB under a fitted law.
    Classify(ClassifyArgs),
    /// Render an SVG scatter of a run with the fitted 90%/10% curves.
    Plot(PlotArgs),
    /// Tabulate per-strategy accuracy and token usage across runs.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GenTask {
    Add,
    Sub,
    Mult,
    Div,
    Compound,
    Word,
    Biggsm,
}

#[derive(Args)]
struct GenArgs {
    /// What to generate.
    #[arg(long, value_enum)]
    task: GenTask,
    /// Problem count (defaults: 610 for biggsm, 100 otherwise).
    #[arg(long)]
    count: Option<usize>,
    /// Smallest operand for single-op and compound tasks.
    #[arg(long, default_value_t = 1)]
    operand_min: u128,
    /// Largest operand for single-op and compound tasks.
    #[arg(long, default_value_t = 10_000_000_000)]
    operand_max: u128,
    /// Fewest reasoning steps for word problems.
    #[arg(long, default_value_t = 1)]
    steps_min: u32,
    /// Most reasoning steps for word problems.
    #[arg(long, default_value_t = 16)]
    steps_max: u32,
    /// Largest multiplication a word problem may require.
    #[arg(long, default_value_t = 300_000)]
    calc_cap: u64,
    /// Operator count per compound expression.
    #[arg(long, default_value_t = 3)]
    ops: usize,
    /// Word-problem template file (defaults to the built-in scenarios).
    #[arg(long, value_name = "PATH")]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Problem dataset (JSONL) to evaluate.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    /// Prompting strategy: direct, zero-shot-cot, cot3, pot, tool, ltm,
    /// complex-cot, marp-cot, marp-pot, or cot-sc.
    #[arg(long, value_parser = parse_strategy)]
    strategy: StrategyTag,
    /// Backend override (otherwise the config file's `backend.kind`).
    #[arg(long, value_parser = ["planted", "http"])]
    backend: Option<String>,
    /// Samples per problem (overrides the strategy preset).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    k: Option<u32>,
    /// Continue an interrupted run instead of refusing to touch its file.
    #[arg(long)]
    resume: bool,
    /// Concurrent request cap (overrides the config's `run.max_in_flight`).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_in_flight: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LawChoice {
    Cot2,
    Multihop2,
    Mgsm3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossChoice {
    BernoulliNll,
    RmseOnLevelSets,
}

#[derive(Args)]
struct FitArgs {
    /// Graded run file (JSONL of evaluation records).
    #[arg(long, value_name = "PATH")]
    run: PathBuf,
    /// Dataset the run was produced from.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    /// Law shape to fit.
    #[arg(long, value_enum, default_value_t = LawChoice::Cot2)]
    law: LawChoice,
    /// Cells per binned dimension (log-spaced for positive `max_calc`).
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    bins: u64,
    /// Minimum trials a cell needs to be kept.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    min_trials: u64,
    /// Fraction of cells held out for the dev loss.
    #[arg(long, default_value_t = 0.2)]
    dev_frac: f64,
    /// Optimizer restarts.
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    restarts: u32,
    /// Fitting loss.
    #[arg(long, value_enum, default_value_t = LossChoice::BernoulliNll)]
    loss: LossChoice,
    /// Per-restart iteration cap (0 scales with the parameter count).
    #[arg(long, default_value_t = 0)]
    max_iters: u32,
    /// Free the link scale mu instead of pinning it to 1.
    #[arg(long)]
    fit_mu: bool,
    /// Free the independence constant k instead of pinning it to 0.
    #[arg(long)]
    fit_k: bool,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Fitted-law JSON.
    #[arg(long, value_name = "PATH")]
    fit: PathBuf,
    /// Dataset whose problems get classified.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScaleChoice {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ColorChoice {
    /// Color points by grading outcome.
    Correctness,
    /// Color points by feasibility category under the fitted law.
    Category,
}

#[derive(Args)]
struct PlotArgs {
    /// Graded run file (JSONL of evaluation records).
    #[arg(long, value_name = "PATH")]
    run: PathBuf,
    /// Dataset the run was produced from.
    #[arg(long, value_name = "PATH")]
    dataset: PathBuf,
    /// Fitted-law JSON supplying the boundary curves.
    #[arg(long, value_name = "PATH")]
    fit: PathBuf,
    /// Difficulty dimension on the x axis.
    #[arg(long, default_value = "plan_steps")]
    x_dim: String,
    /// Difficulty dimension on the y axis.
    #[arg(long, default_value = "max_calc")]
    y_dim: String,
    #[arg(long, value_enum, default_value_t = ScaleChoice::Linear)]
    x_scale: ScaleChoice,
    #[arg(long, value_enum, default_value_t = ScaleChoice::Log)]
    y_scale: ScaleChoice,
    /// Axis bounds (default: the plotted data's min/max).
    #[arg(long)]
    x_min: Option<f64>,
    #[arg(long)]
    x_max: Option<f64>,
    #[arg(long)]
    y_min: Option<f64>,
    #[arg(long)]
    y_max: Option<f64>,
    #[arg(long, value_enum, default_value_t = ColorChoice::Category)]
    color: ColorChoice,
    #[arg(long, default_value_t = 800)]
    width: u32,
    #[arg(long, default_value_t = 600)]
    height: u32,
}

#[derive(Args)]
struct ReportArgs {
    /// Run file (repeat the flag to compare several strategies).
    #[arg(long, required = true, value_name = "PATH")]
    run: Vec<PathBuf>,
    /// Dataset for per-category columns (requires --fit).
    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,
    /// Fitted-law JSON for per-category columns (requires --dataset).
    #[arg(long, value_name = "PATH")]
    fit: Option<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Also write full-precision rows as JSON.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<StrategyTag, String> {
    StrategyTag::parse(s).ok_or_else(|| {
        format!(
            "unknown strategy `{s}` (expected direct, zero-shot-cot, cot3, pot, tool, \
             ltm, complex-cot, marp-cot, marp-pot, or cot-sc)"
        )
    })
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(&cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Gen(a) => cmd_gen(cli, a),
        Cmd::Eval(a) => cmd_eval(cli, a),
        Cmd::Fit(a) => cmd_fit(cli, a),
        Cmd::Classify(a) => cmd_classify(cli, a),
        Cmd::Plot(a) => cmd_plot(cli, a),
        Cmd::Report(a) => cmd_report(cli, a),
    }
}

// ---------------------------------------------------------------------------
// Shared file helpers
// ---------------------------------------------------------------------------

fn require_out(cli: &Cli) -> Result<&Path, CliError> {
    cli.out
        .as_deref()
        .ok_or_else(|| usage("--out is required for this command"))
}

/// `<out>.stats.json` next to the dataset.
fn stats_path(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_os_string();
    os.push(".stats.json");
    PathBuf::from(os)
}

fn read_dataset_cli(path: &Path) -> Result<Vec<ProblemRecord>, CliError> {
    let ds = read_dataset(path).map_err(|e| match e {
        GenError::EmptyDataset => CliError::Empty(format!("{}: dataset is empty", path.display())),
        other => CliError::Other(format!("{}: {other}", path.display())),
    })?;
    if ds.is_empty() {
        return Err(CliError::Empty(format!(
            "{}: dataset is empty",
            path.display()
        )));
    }
    Ok(ds)
}

fn read_run(path: &Path) -> Result<Vec<EvalRecord>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: EvalRecord = serde_json::from_str(line)
            .map_err(|e| CliError::Other(format!("{}:{}: {e}", path.display(), idx + 1)))?;
        records.push(rec);
    }
    Ok(records)
}

fn read_fit(path: &Path) -> Result<FittedLaw, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

fn cmd_gen(cli: &Cli, a: &GenArgs) -> Result<(), CliError> {
    let out = require_out(cli)?;
    let seed = cli.seed.unwrap_or(0);
    let count = a.count.unwrap_or(match a.task {
        GenTask::Biggsm => BIGGSM_COUNT,
        _ => 100,
    });
    if count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    if a.operand_min < 1 || a.operand_min > a.operand_max {
        return Err(usage(format!(
            "operand range [{}, {}] is invalid (need 1 <= min <= max)",
            a.operand_min, a.operand_max
        )));
    }
    if a.steps_min < 1 || a.steps_min > a.steps_max {
        return Err(usage(format!(
            "steps range [{}, {}] is invalid (need 1 <= min <= max)",
            a.steps_min, a.steps_max
        )));
    }
    if a.templates.is_some() && !matches!(a.task, GenTask::Word | GenTask::Biggsm) {
        return Err(usage("--templates only applies to --task word or biggsm"));
    }

    let loaded;
    let templates: &[WordTemplate] = match &a.templates {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Io {
                path: p.display().to_string(),
                message: e.to_string(),
            })?;
            loaded = parse_templates(&text).map_err(gen_err)?;
            &loaded
        }
        None => builtin_templates(),
    };

    let kind = match a.task {
        GenTask::Add => TaskKind::Add,
        GenTask::Sub => TaskKind::Sub,
        GenTask::Mult => TaskKind::Mult,
        GenTask::Div => TaskKind::Div,
        GenTask::Compound => TaskKind::CompoundExpr,
        GenTask::Word | GenTask::Biggsm => TaskKind::WordProblem,
    };
    let mut spec = GenSpec::new(kind, count, seed);
    spec.operand_range = (a.operand_min, a.operand_max);
    spec.steps_range = (a.steps_min, a.steps_max);
    spec.max_calc_cap = a.calc_cap;

    let problems = match a.task {
        GenTask::Add | GenTask::Sub | GenTask::Mult | GenTask::Div => {
            gen_single_op(&spec).map_err(gen_err)?
        }
        GenTask::Compound => {
            if a.ops == 0 {
                return Err(usage("--ops must be at least 1"));
            }
            gen_compound_expr(&spec, a.ops).map_err(gen_err)?
        }
        GenTask::Word => gen_word(&spec, templates)?,
        GenTask::Biggsm => {
            if count != BIGGSM_COUNT {
                return Err(usage(format!(
                    "--task biggsm is a fixed stratified set; --count must be {BIGGSM_COUNT}"
                )));
            }
            gen_biggsm(seed, templates).map_err(gen_err)?
        }
    };

    validate_dataset(&problems)
        .map_err(|e| CliError::Other(format!("generated dataset failed validation: {e}")))?;
    write_dataset(&problems, out).map_err(gen_err)?;
    let stats = dataset_stats(&problems).map_err(gen_err)?;
    let sidecar = stats_path(out);
    let body = serde_json::to_string_pretty(&stats).expect("stats serialize") + "\n";
    fs::write(&sidecar, body).map_err(|e| CliError::Io {
        path: sidecar.display().to_string(),
        message: e.to_string(),
    })?;
    eprintln!(
        "[gen] wrote {} problems -> {}",
        problems.len(),
        out.display()
    );
    eprintln!("[gen] stats -> {}", sidecar.display());
    Ok(())
}

/// Word problems at arbitrary count: templates cycle round-robin, steps are
/// drawn uniformly from the steps range, and the peak-multiplication target
/// is drawn log-uniformly from `[8, calc_cap]` (retrying draws a template
/// cannot satisfy).
fn gen_word(spec: &GenSpec, templates: &[WordTemplate]) -> Result<Vec<ProblemRecord>, CliError> {
    if spec.max_calc_cap < 8 {
        return Err(usage("--calc-cap must be at least 8 for word problems"));
    }
    let (lo_ln, hi_ln) = (8f64.ln(), (spec.max_calc_cap as f64).ln());
    let mut rng = SplitMix64::keyed(&[spec.seed, hash_str("word-dataset")]);
    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let template = &templates[i % templates.len()];
        let steps = rng.range_u64(u64::from(spec.steps_range.0), u64::from(spec.steps_range.1));
        let mut last_err = None;
        for _ in 0..32 {
            let target =
                (rng.range_f64(lo_ln, hi_ln).exp().round() as u64).clamp(8, spec.max_calc_cap);
            let item_seed = rng.next_u64();
            match gen_word_problem(template, steps as u32, target, item_seed) {
                Ok(p) => {
                    out.push(p);
                    last_err = None;
                    break;
                }
                Err(e @ GenError::UnsatisfiableTarget { .. }) => last_err = Some(e),
                Err(e) => return Err(gen_err(e)),
            }
        }
        if let Some(e) = last_err {
            return Err(gen_err(e));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Wraps a backend to report completion progress on stderr.
struct Progress<'a> {
    inner: &'a dyn Backend,
    done: AtomicUsize,
    total: usize,
    every: usize,
}

impl Backend for Progress<'_> {
    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        let res = self.inner.complete(req);
        let done = self.done.fetch_add(1, Ordering::Relaxed) + 1;
        if done.is_multiple_of(self.every) || done == self.total {
            eprintln!("[eval] {done}/{} calls", self.total);
        }
        res
    }

    fn deterministic(&self) -> bool {
        self.inner.deterministic()
    }

    fn model_id(&self) -> &str {
        self.inner.model_id()
    }
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> Result<(), CliError> {
    let out = require_out(cli)?;
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Backend(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| CliError::Backend(e.to_string()))?
        }
        None => EvalConfig::default(),
    };
    if let Some(kind) = &a.backend {
        cfg.backend_kind = kind.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    if let Some(m) = a.max_in_flight {
        cfg.run.max_in_flight = m as usize;
    }

    let dataset = read_dataset_cli(&a.dataset)?;

    let mut strategy = Strategy::preset(a.strategy);
    if let Some(k) = a.k {
        strategy.samples_k = k;
    }
    if let Some(t) = cfg.temperature {
        strategy.sampling.temperature = t;
    }
    if let Some(p) = cfg.top_p {
        strategy.sampling.top_p = p;
    }

    if !a.resume {
        if let Ok(meta) = fs::metadata(out) {
            if meta.len() > 0 {
                return Err(usage(format!(
                    "{} already exists and is non-empty; pass --resume to continue it",
                    out.display()
                )));
            }
        }
    }

    let backend: Box<dyn Backend> = match cfg.backend_kind.as_str() {
        "planted" => Box::new(Planted::new(cfg.planted.to_config())),
        "http" => {
            if cfg.backend_url.is_empty() {
                return Err(CliError::Backend(
                    "backend.url is required for the http backend".into(),
                ));
            }
            Box::new(
                HttpChat::new(
                    &cfg.backend_url,
                    &cfg.backend_model,
                    &cfg.auth_env,
                    cfg.run.timeout_ms,
                )
                .map_err(|e| CliError::Backend(e.to_string()))?,
            )
        }
        other => return Err(CliError::Backend(format!("unknown backend kind `{other}`"))),
    };

    let total = dataset.len() * strategy.samples_k.max(1) as usize;
    let progress = Progress {
        inner: backend.as_ref(),
        done: AtomicUsize::new(0),
        total,
        every: (total / 10).max(1),
    };
    eprintln!(
        "[eval] {} problems, strategy {}, backend {} -> {}",
        dataset.len(),
        strategy.tag.name(),
        backend.model_id(),
        out.display()
    );
    let records = run_eval(&dataset, &progress, &strategy, &cfg.run, out, None)
        .map_err(|e| CliError::Other(e.to_string()))?;
    let correct = records
        .iter()
        .filter(|r| r.grade.as_ref().is_some_and(|g| g.answer_correct))
        .count();
    eprintln!(
        "[eval] wrote {} records ({correct} correct) -> {}",
        records.len(),
        out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

fn cmd_fit(cli: &Cli, a: &FitArgs) -> Result<(), CliError> {
    let out = require_out(cli)?;
    if !(a.dev_frac > 0.0 && a.dev_frac < 1.0) {
        return Err(usage("--dev-frac must lie strictly between 0 and 1"));
    }

    let dataset = read_dataset_cli(&a.dataset)?;
    let by_id: BTreeMap<&str, &ProblemRecord> =
        dataset.iter().map(|p| (p.id.as_str(), p)).collect();
    let runs = read_run(&a.run)?;

    let mut joined = Vec::with_capacity(runs.len());
    let mut ungraded = 0usize;
    for r in &runs {
        let p = by_id.get(r.problem_id.as_str()).ok_or_else(|| {
            CliError::Other(format!("run references unknown problem `{}`", r.problem_id))
        })?;
        match &r.grade {
            Some(g) => joined.push((p.difficulty.clone(), g.answer_correct)),
            None => ungraded += 1,
        }
    }
    if ungraded > 0 {
        eprintln!("[fit] skipping {ungraded} ungraded records");
    }
    if joined.is_empty() {
        return Err(CliError::Other("no graded records to fit".into()));
    }

    let (law_name, base) = match a.law {
        LawChoice::Cot2 => ("cot2", LawTemplate::cot2()),
        LawChoice::Multihop2 => ("multihop2", LawTemplate::multihop2()),
        LawChoice::Mgsm3 => ("mgsm3", LawTemplate::mgsm3()),
    };
    let template = LawTemplate {
        fit_mu: a.fit_mu,
        fit_k: a.fit_k,
        ..base
    };

    let mut dims = Vec::with_capacity(template.terms.len());
    for term in &template.terms {
        let dim = Dim::parse(term).expect("law templates name known dimensions");
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (dv, _) in &joined {
            if let Some(v) = dv.get(dim) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            return Err(CliError::Other(
                LawError::MissingDim(term.clone()).to_string(),
            ));
        }
        if lo >= hi {
            return Err(CliError::Other(format!(
                "dimension `{term}` has no spread (every value is {lo}); cannot bin it"
            )));
        }
        // Wide positive computation scales bin geometrically; counts linearly.
        dims.push(if term == "max_calc" && lo > 0.0 {
            DimBinning::log(term, lo, hi, a.bins as usize)
        } else {
            DimBinning::linear(term, lo, hi, a.bins as usize)
        });
    }
    let mut binning = Binning::new(dims);
    binning.min_trials = a.min_trials;

    let surface = bin_accuracy(&joined, &binning).map_err(law_err)?;
    eprintln!(
        "[fit] {} graded records -> {} cells",
        joined.len(),
        surface.bins.len()
    );

    let cfg = FitConfig {
        dev_fraction: a.dev_frac,
        restarts: a.restarts,
        loss: match a.loss {
            LossChoice::BernoulliNll => LossKind::BernoulliNll,
            LossChoice::RmseOnLevelSets => LossKind::RmseOnLevelSets,
        },
        seed: cli.seed.unwrap_or(0),
        max_iters: a.max_iters,
    };
    let fitted = fit_law(&surface, &template, &cfg).map_err(law_err)?;

    let body = serde_json::to_string_pretty(&fitted).expect("fit serialize") + "\n";
    write_file(out, &body)?;

    println!("law: {law_name}");
    for t in &fitted.law.terms {
        println!("term {}: N={:.6} b={:.6}", t.name, t.n, t.b);
    }
    println!("k: {:.6}", fitted.law.k);
    println!(
        "link: gamma={:.6} mu={:.6}",
        fitted.link.gamma, fitted.link.mu
    );
    println!("train_loss: {:.6}", fitted.fit_loss);
    println!("dev_loss: {:.6}", fitted.dev_loss);
    for (level, est) in &fitted.boundaries {
        println!("boundary[{level}]: {:.6}", est.value);
    }
    eprintln!("[fit] wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ClassifyRow<'a> {
    problem_id: &'a str,
    category: RBCategory,
    /// Combined difficulty, absent when a coordinate sits at or below its
    /// term offset (the point is CFRB by definition there).
    combined: Option<f64>,
}

fn cmd_classify(cli: &Cli, a: &ClassifyArgs) -> Result<(), CliError> {
    let out = require_out(cli)?;
    let fitted = read_fit(&a.fit)?;
    let dataset = read_dataset_cli(&a.dataset)?;

    let mut lines = String::new();
    let mut counts: BTreeMap<RBCategory, usize> = BTreeMap::new();
    for p in &dataset {
        let category = classify_point(&p.difficulty, &fitted)
            .map_err(|e| CliError::Other(format!("problem `{}`: {e}", p.id)))?;
        let combined = combined_boundary(&fitted.law, &p.difficulty.to_named()).ok();
        let row = ClassifyRow {
            problem_id: &p.id,
            category,
            combined,
        };
        lines.push_str(&serde_json::to_string(&row).expect("row serialize"));
        lines.push('\n');
        *counts.entry(category).or_insert(0) += 1;
    }
    write_file(out, &lines)?;

    for cat in [RBCategory::CFRB, RBCategory::PFRB, RBCategory::CIRB] {
        println!("{cat} {}", counts.get(&cat).copied().unwrap_or(0));
    }
    println!("total {}", dataset.len());
    eprintln!("[classify] wrote {}", out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// plot
// ---------------------------------------------------------------------------

fn cmd_plot(cli: &Cli, a: &PlotArgs) -> Result<(), CliError> {
    let out = require_out(cli)?;
    let x_dim = Dim::parse(&a.x_dim)
        .ok_or_else(|| usage(format!("unknown dimension `{}` for --x-dim", a.x_dim)))?;
    let y_dim = Dim::parse(&a.y_dim)
        .ok_or_else(|| usage(format!("unknown dimension `{}` for --y-dim", a.y_dim)))?;
    if x_dim == y_dim {
        return Err(usage("--x-dim and --y-dim must differ"));
    }

    let fitted = read_fit(&a.fit)?;
    let dataset = read_dataset_cli(&a.dataset)?;
    let runs = read_run(&a.run)?;
    let by_id: BTreeMap<&str, &ProblemRecord> =
        dataset.iter().map(|p| (p.id.as_str(), p)).collect();

    let mut raw = Vec::with_capacity(runs.len());
    for r in &runs {
        let p = by_id.get(r.problem_id.as_str()).ok_or_else(|| {
            CliError::Other(format!("run references unknown problem `{}`", r.problem_id))
        })?;
        let coord = |dim: Dim, name: &str| {
            p.difficulty.get(dim).ok_or_else(|| {
                CliError::Other(format!("problem `{}` lacks dimension `{name}`", p.id))
            })
        };
        let x = coord(x_dim, &a.x_dim)?;
        let y = coord(y_dim, &a.y_dim)?;
        let class = match a.color {
            ColorChoice::Correctness => {
                if r.grade.as_ref().is_some_and(|g| g.answer_correct) {
                    plot::PointClass::Correct
                } else {
                    plot::PointClass::Wrong
                }
            }
            ColorChoice::Category => {
                match classify_point(&p.difficulty, &fitted)
                    .map_err(|e| CliError::Other(format!("problem `{}`: {e}", p.id)))?
                {
                    RBCategory::CFRB => plot::PointClass::Cfrb,
                    RBCategory::PFRB => plot::PointClass::Pfrb,
                    RBCategory::CIRB => plot::PointClass::Cirb,
                }
            }
        };
        raw.push((x, y, class));
    }
    if raw.is_empty() {
        return Err(CliError::Empty(format!(
            "{}: no records to plot",
            a.run.display()
        )));
    }

    let x_axis = axis_from(
        &a.x_dim,
        "--x",
        a.x_scale,
        a.x_min,
        a.x_max,
        raw.iter().map(|&(x, _, _)| x),
    )?;
    let y_axis = axis_from(
        &a.y_dim,
        "--y",
        a.y_scale,
        a.y_min,
        a.y_max,
        raw.iter().map(|&(_, y, _)| y),
    )?;

    let total = raw.len();
    let points: Vec<(f64, f64, plot::PointClass)> = raw
        .into_iter()
        .filter(|&(x, y, _)| x_axis.contains(x) && y_axis.contains(y))
        .collect();
    if points.len() < total {
        eprintln!(
            "[plot] clipped {} points outside the axes",
            total - points.len()
        );
    }
    if points.is_empty() {
        return Err(CliError::Empty("every point fell outside the axes".into()));
    }

    let n_samples = 240usize;
    let xs: Vec<f64> = (0..=n_samples)
        .map(|i| {
            let t = i as f64 / n_samples as f64;
            if x_axis.log {
                (x_axis.lo.ln() + t * (x_axis.hi.ln() - x_axis.lo.ln())).exp()
            } else {
                x_axis.lo + t * (x_axis.hi - x_axis.lo)
            }
        })
        .collect();
    let mut curves = Vec::new();
    for (level, color, dash, label) in [
        (0.90, "#1f6f43", None, "K=0.90"),
        (0.10, "#7a1fa2", Some("6 4"), "K=0.10"),
    ] {
        let pts = boundary_curve(&fitted, level, (&a.x_dim, &a.y_dim), &xs).map_err(|e| {
            let terms: Vec<&str> = fitted.law.terms.iter().map(|t| t.name.as_str()).collect();
            CliError::Other(format!(
                "boundary curve at K={level}: {e} (the fitted law's terms are [{}]; \
                 --x-dim/--y-dim must name them)",
                terms.join(", ")
            ))
        })?;
        curves.push(plot::Curve {
            label,
            color,
            dash,
            pts,
        });
    }

    let strategy = runs[0].strategy.name();
    let model = runs[0].model_id.clone();
    let spec = plot::PlotSpec {
        width: a.width,
        height: a.height,
        title: format!("{strategy} on {model}"),
        footer: format!("seed {} | boundaries at K=0.90, K=0.10", fitted.seed),
        x: x_axis,
        y: y_axis,
        points,
        curves,
    };
    write_file(out, &plot::render_svg(&spec))?;
    eprintln!("[plot] wrote {}", out.display());
    Ok(())
}

fn axis_from(
    dim: &str,
    flag: &str,
    scale: ScaleChoice,
    min: Option<f64>,
    max: Option<f64>,
    values: impl Iterator<Item = f64>,
) -> Result<plot::Axis, CliError> {
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if let Some(m) = min {
        lo = m;
    }
    if let Some(m) = max {
        hi = m;
    }
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(usage(format!(
            "{flag}-min/{flag}-max produce an empty range [{lo}, {hi}]"
        )));
    }
    let log = scale == ScaleChoice::Log;
    if lo == hi {
        if log {
            lo /= 2.0;
            hi *= 2.0;
        } else {
            lo -= 0.5;
            hi += 0.5;
        }
    }
    if log && lo <= 0.0 {
        return Err(usage(format!(
            "log scale needs positive values on `{dim}`; pass {flag}-min or {flag}-scale linear"
        )));
    }
    Ok(plot::Axis {
        label: dim.to_string(),
        lo,
        hi,
        log,
    })
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

fn cmd_report(_cli: &Cli, a: &ReportArgs) -> Result<(), CliError> {
    let categories: Option<BTreeMap<String, RBCategory>> = match (&a.dataset, &a.fit) {
        (Some(d), Some(f)) => {
            let fitted = read_fit(f)?;
            let dataset = read_dataset_cli(d)?;
            let mut map = BTreeMap::new();
            for p in &dataset {
                let cat = classify_point(&p.difficulty, &fitted)
                    .map_err(|e| CliError::Other(format!("problem `{}`: {e}", p.id)))?;
                map.insert(p.id.clone(), cat);
            }
            Some(map)
        }
        (None, None) => None,
        _ => return Err(usage("per-category columns need both --dataset and --fit")),
    };

    let mut rows = report::Rows::new(categories);
    for path in &a.run {
        let records = read_run(path)?;
        rows.add(&records)
            .map_err(|e| CliError::Other(format!("{}: {e}", path.display())))?;
    }
    if rows.is_empty() {
        return Err(CliError::Empty(
            "no evaluation records in the given runs".into(),
        ));
    }

    print!("{}", rows.render_text());
    if let Some(path) = &a.csv {
        write_file(path, &rows.render_csv())?;
        eprintln!("[report] csv -> {}", path.display());
    }
    if let Some(path) = &a.json {
        write_file(path, &rows.render_json())?;
        eprintln!("[report] json -> {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
