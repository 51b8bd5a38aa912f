//! Prompt strategies: instructions, few-shot demonstrations, and prompt
//! assembly.
//!
//! Few-shot strategies carry exactly three hand-written demonstrations over
//! shared scenarios, each worked in the strategy's own format (numbered
//! steps, program-of-thought assignments, tool calls, sub-question
//! decomposition, fine-grained steps, or operation-packed steps). The two
//! operation-packing instruction texts are embedded verbatim.

use serde::{Deserialize, Serialize};

use crate::grade::TraceFormat;
use crate::harness::{HarnessError, Sampling};
use crate::types::{ProblemRecord, StrategyTag};

/// One worked example: a question and its solution in the target format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demo {
    pub question: String,
    pub answer: String,
}

/// A fully specified prompting strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub tag: StrategyTag,
    pub instruction_prefix: String,
    pub demos: Vec<Demo>,
    /// Samples per problem; > 1 only for the consensus strategy.
    pub samples_k: u32,
    pub sampling: Sampling,
}

/// Assembled prompt plus the transcript format it elicits.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub prompt: String,
    pub format: TraceFormat,
}

// ---------------------------------------------------------------------------
// Instruction texts
// ---------------------------------------------------------------------------

const STEP_INSTRUCTION: &str = "Solve the problem step by step. Write each step on its own \
line as an equation, and end with \"#### <answer>\" on the final line.";

const POT_INSTRUCTION: &str = "Solve the problem by writing a short program: one assignment \
per line, ending with a line that sets `answer =` to the result.";

const TOOL_INSTRUCTION: &str = "Solve the problem step by step. You may evaluate any \
arithmetic by writing calc(expression) = result. End with \"#### <answer>\" on the final line.";

const LTM_INSTRUCTION: &str = "Break the problem into simpler sub-questions and answer them \
in order. End with \"#### <answer>\" on the final line.";

const COMPLEX_INSTRUCTION: &str = "Solve the problem step by step, keeping every step as \
small as possible: one basic operation per step. End with \"#### <answer>\" on the final line.";

/// Operation-packing request (verbatim).
pub const MARP_PACK: &str = "You need to perform multi-step reasoning, with each step \
carrying out as many basic operations as possible.";

/// Per-step operation cap (verbatim).
pub const MARP_CAP: &str = "Remember, you can only complete tasks that contain up to 5 basic \
operations per step, and multiplication operations must be less than 1.5e5. The upper limit \
of the multiplication operations decreases as the number of operations per step increases.";

const ZERO_SHOT_SUFFIX: &str = "Let's think step by step.";

// ---------------------------------------------------------------------------
// Demonstrations
// ---------------------------------------------------------------------------

const DEMO_QUESTIONS: [&str; 3] = [
    "A grocer stacks 4 crates with 12 apples in each crate and has 5 loose apples. \
How many apples are there in total?",
    "A library shelves 7 boxes of 30 books each, then lends out 12 books. \
How many books are left?",
    "A tour company fills 6 vans with 15 passengers each, and 9 more people join on foot. \
How many people take the tour?",
];

fn demos_for(tag: StrategyTag) -> Vec<Demo> {
    let answers: [String; 3] = match tag {
        StrategyTag::Cot3 | StrategyTag::CotSc => [
            "Step 1: 4 * 12 = 48\nStep 2: 48 + 5 = 53\n#### 53".into(),
            "Step 1: 7 * 30 = 210\nStep 2: 210 - 12 = 198\n#### 198".into(),
            "Step 1: 6 * 15 = 90\nStep 2: 90 + 9 = 99\n#### 99".into(),
        ],
        StrategyTag::Pot => [
            "crates = 4\nper_crate = 12\nloose = 5\nanswer = crates * per_crate + loose".into(),
            "boxes = 7\nper_box = 30\nlent = 12\nanswer = boxes * per_box - lent".into(),
            "vans = 6\nper_van = 15\nwalk_ins = 9\nanswer = vans * per_van + walk_ins".into(),
        ],
        StrategyTag::Tool => [
            "Step 1: calc(4 * 12) = 48\nStep 2: calc(48 + 5) = 53\n#### 53".into(),
            "Step 1: calc(7 * 30) = 210\nStep 2: calc(210 - 12) = 198\n#### 198".into(),
            "Step 1: calc(6 * 15) = 90\nStep 2: calc(90 + 9) = 99\n#### 99".into(),
        ],
        StrategyTag::Ltm => [
            "Sub-question 1: How many apples are in the crates? Answer: 4 * 12 = 48\n\
Sub-question 2: How many apples are there in total? Answer: 48 + 5 = 53\n#### 53"
                .into(),
            "Sub-question 1: How many books arrive in boxes? Answer: 7 * 30 = 210\n\
Sub-question 2: How many books are left after lending? Answer: 210 - 12 = 198\n#### 198"
                .into(),
            "Sub-question 1: How many passengers ride the vans? Answer: 6 * 15 = 90\n\
Sub-question 2: How many people take the tour in total? Answer: 90 + 9 = 99\n#### 99"
                .into(),
        ],
        StrategyTag::ComplexCot => [
            "Step 1: 12 + 12 = 24\nStep 2: 24 + 12 = 36\nStep 3: 36 + 12 = 48\n\
Step 4: 48 + 5 = 53\n#### 53"
                .into(),
            "Step 1: 30 + 30 = 60\nStep 2: 60 + 30 = 90\nStep 3: 90 + 30 = 120\n\
Step 4: 120 + 30 = 150\nStep 5: 150 + 30 = 180\nStep 6: 180 + 30 = 210\n\
Step 7: 210 - 12 = 198\n#### 198"
                .into(),
            "Step 1: 15 + 15 = 30\nStep 2: 30 + 15 = 45\nStep 3: 45 + 15 = 60\n\
Step 4: 60 + 15 = 75\nStep 5: 75 + 15 = 90\nStep 6: 90 + 9 = 99\n#### 99"
                .into(),
        ],
        StrategyTag::MarpCot => [
            "Step 1: 4 * 12 + 5 = 53\n#### 53".into(),
            "Step 1: 7 * 30 - 12 = 198\n#### 198".into(),
            "Step 1: 6 * 15 + 9 = 99\n#### 99".into(),
        ],
        StrategyTag::MarpPot => [
            "answer = 4 * 12 + 5".into(),
            "answer = 7 * 30 - 12".into(),
            "answer = 6 * 15 + 9".into(),
        ],
        StrategyTag::Direct | StrategyTag::ZeroShotCot => return Vec::new(),
    };
    DEMO_QUESTIONS
        .iter()
        .zip(answers)
        .map(|(q, answer)| Demo {
            question: q.to_string(),
            answer,
        })
        .collect()
}

fn instruction_for(tag: StrategyTag) -> String {
    match tag {
        StrategyTag::Direct | StrategyTag::ZeroShotCot => String::new(),
        StrategyTag::Cot3 | StrategyTag::CotSc => STEP_INSTRUCTION.to_string(),
        StrategyTag::Pot => POT_INSTRUCTION.to_string(),
        StrategyTag::Tool => TOOL_INSTRUCTION.to_string(),
        StrategyTag::Ltm => LTM_INSTRUCTION.to_string(),
        StrategyTag::ComplexCot => COMPLEX_INSTRUCTION.to_string(),
        StrategyTag::MarpCot => format!("{MARP_PACK}\n\n{MARP_CAP}\n\n{STEP_INSTRUCTION}"),
        StrategyTag::MarpPot => format!("{MARP_PACK}\n\n{MARP_CAP}\n\n{POT_INSTRUCTION}"),
    }
}

impl Strategy {
    /// The canonical configuration for a tag: its instruction text, its three
    /// demonstrations (none for the zero-shot strategies), greedy sampling
    /// for single-sample runs, and 10 samples at temperature 0.7 for the
    /// consensus strategy.
    pub fn preset(tag: StrategyTag) -> Strategy {
        let consensus = tag == StrategyTag::CotSc;
        Strategy {
            tag,
            instruction_prefix: instruction_for(tag),
            demos: demos_for(tag),
            samples_k: if consensus { 10 } else { 1 },
            sampling: Sampling {
                temperature: if consensus { 0.7 } else { 0.0 },
                top_p: 1.0,
            },
        }
    }

    pub fn expected_demos(tag: StrategyTag) -> usize {
        match tag {
            StrategyTag::Direct | StrategyTag::ZeroShotCot => 0,
            _ => 3,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let expected = Self::expected_demos(self.tag);
        if self.demos.len() != expected {
            return Err(HarnessError::DemoCountMismatch {
                strategy: format!("{:?}", self.tag),
                expected,
                got: self.demos.len(),
            });
        }
        Ok(())
    }

    /// The transcript format this strategy's completions are parsed with.
    pub fn trace_format(&self) -> TraceFormat {
        if self.tag.is_pot() {
            TraceFormat::PotCode
        } else {
            TraceFormat::StepLines
        }
    }
}

/// Assemble the prompt for one problem. Deterministic: identical inputs give
/// identical bytes.
pub fn build_prompt(p: &ProblemRecord, s: &Strategy) -> Result<PromptBundle, HarnessError> {
    s.validate()?;
    let prompt = match s.tag {
        StrategyTag::Direct => p.prompt.clone(),
        StrategyTag::ZeroShotCot => format!("{}\n\n{ZERO_SHOT_SUFFIX}", p.prompt),
        _ => {
            let mut out = String::new();
            out.push_str(&s.instruction_prefix);
            out.push_str("\n\n");
            for demo in &s.demos {
                out.push_str(&format!(
                    "Question: {}\nAnswer: {}\n\n",
                    demo.question, demo.answer
                ));
            }
            out.push_str(&format!("Question: {}\nAnswer:", p.prompt));
            out
        }
    };
    Ok(PromptBundle {
        prompt,
        format: s.trace_format(),
    })
}
