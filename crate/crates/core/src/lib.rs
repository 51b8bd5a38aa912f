//! Core library for mapping reasoning boundaries of step-by-step solvers.
//!
//! The crate covers the full measurement loop:
//!
//! 1. [`gen`] — synthesize arithmetic benchmarks (single operations, compound
//!    expressions, templated word problems) with exact gold answers and known
//!    difficulty coordinates;
//! 2. [`harness`] — prompt a model (an HTTP endpoint or the built-in planted
//!    simulator) under a prompting strategy, with checkpointed, resumable,
//!    concurrent execution;
//! 3. [`expr`] / [`grade`] — parse completions, check every intermediate
//!    claim exactly, and grade final answers;
//! 4. [`law`] — bin graded results, fit the boundary combination law and the
//!    accuracy link, locate iso-accuracy boundaries, and classify difficulty
//!    points into feasibility categories.
//!
//! Shared domain types live in [`types`] and are re-exported at the root.

pub mod expr;
pub mod gen;
pub mod grade;
pub mod harness;
pub mod law;
pub mod rng;
pub mod types;

pub use expr::{eval_exact, parse_expression, BinOp, Expr, ExprError};
pub use gen::word::{
    builtin_templates, gen_biggsm, gen_word_problem, parse_templates, WordTemplate, BIGGSM_COUNT,
};
pub use gen::{
    dataset_stats, gen_compound_expr, gen_single_op, read_dataset, write_dataset, DatasetStats,
    GenError, GenSpec,
};
pub use grade::{grade, parse_trace, trace_costs, Equation, Trace, TraceCosts, TraceFormat};
pub use harness::http::HttpChat;
pub use harness::planted::{
    planted_accuracy, planted_complete, Planted, PlantedConfig, PlantedSettings,
};
pub use harness::prompts::{build_prompt, Demo, PromptBundle, Strategy};
pub use harness::{
    parse_config, run_eval, self_consistency, Backend, BackendError, Completion, CompletionRequest,
    Consensus, EvalConfig, HarnessError, RunConfig, Sampling,
};
pub use law::fit::{
    bin_accuracy, fit_law, AccuracySurface, Binning, DimBinning, FitConfig, LawTemplate, LossKind,
    Scale, SurfaceBin,
};
pub use law::search::{isotonic_decreasing, search_boundary, smoothed_axis_fn};
pub use law::{
    boundary_curve, classify_point, combined_boundary, direct_boundary, drop_term, nested_combine,
    solve_complex_cot_plan, transform_ltm_ideal, transform_tool, FittedLaw, LawError, Link,
    LtmIdeal, LtmLiteralForm,
};
pub use types::{
    categorize_accuracy, rational_from_wire, rational_to_wire, validate_dataset, validate_problem,
    BoundaryEstimate, CombinationLaw, CoreError, DifficultyVector, Dim, EvalRecord, GradeResult,
    LawTerm, ProblemRecord, RBCategory, StrategyTag, TaskKind,
};
