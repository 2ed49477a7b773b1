//! The agentic variation operator: an autonomous tool loop over the
//! lineage, the knowledge base, and the scoring function.
//!
//! One variation step maintains a single working draft. The policy decides
//! which tool to call next; every call yields exactly one observation and
//! consumes tool-call budget. `run_eval` scores the draft (bounded by the
//! evaluation budget) and `commit` runs the acceptance rule on the most
//! recent evaluation — committing an unevaluated draft is refused. The loop
//! ends on an accepted commit, policy halt, policy transport failure, or
//! budget exhaustion. Only an accepted commit touches the lineage; the full
//! attempt log is returned in every case.

use serde::{Deserialize, Serialize};

use crate::knowledge::{Document, KnowledgeBase};
use crate::lineage::{
    accept_candidate, geomean, Aggregation, Candidate, Decision, Lineage, RejectReason,
    ScoreVector, VersionId,
};
use crate::scoring::{EvaluationResult, Scorer};
use crate::supervisor::{FailureKind, FailureSignature, SupervisorEvent};

use super::VariationOutcome;

/// The closed tool registry available to policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool", content = "args", rename_all = "snake_case")]
pub enum ToolCall {
    /// Version/score table of the lineage.
    ListVersions,
    /// Source text of one committed version.
    ReadSolution { version: VersionId },
    /// Score vector of one committed version.
    ReadScores { version: VersionId },
    /// Ranked document ids from the knowledge base.
    SearchKnowledge { query: String },
    /// Body of one knowledge document.
    ReadDoc { id: String },
    /// Replace the working draft wholesale.
    ProposeEdit { source: String },
    /// Evaluate the current draft (consumes evaluation budget).
    RunEval,
    /// Run the acceptance rule on the last evaluation of the draft.
    Commit {
        #[serde(default)]
        note: String,
    },
}

impl ToolCall {
    pub fn name(&self) -> &'static str {
        match self {
            ToolCall::ListVersions => "list_versions",
            ToolCall::ReadSolution { .. } => "read_solution",
            ToolCall::ReadScores { .. } => "read_scores",
            ToolCall::SearchKnowledge { .. } => "search_knowledge",
            ToolCall::ReadDoc { .. } => "read_doc",
            ToolCall::ProposeEdit { .. } => "propose_edit",
            ToolCall::RunEval => "run_eval",
            ToolCall::Commit { .. } => "commit",
        }
    }
}

/// One row of the `list_versions` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionRow {
    pub version: VersionId,
    pub parent: Option<VersionId>,
    pub geomean: f64,
    pub note: String,
}

/// Structured result of a tool call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ToolPayload {
    Versions {
        rows: Vec<VersionRow>,
        /// Attempts made by earlier variation steps of this run; exposed so
        /// later steps can see the search history's scale.
        attempts_before: u32,
    },
    Source {
        version: VersionId,
        source: String,
    },
    Scores {
        version: VersionId,
        scores: ScoreVector,
    },
    KnowledgeHits {
        ids: Vec<String>,
    },
    Doc {
        doc: Document,
    },
    DraftReplaced {
        lines: usize,
    },
    Eval {
        result: EvaluationResult,
    },
    Committed {
        version: VersionId,
    },
    CommitRejected {
        reason: RejectReason,
    },
    BudgetExhausted {
        what: String,
    },
    Error {
        message: String,
    },
}

/// Every tool call yields exactly one observation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Observation {
    pub tool: String,
    pub payload: ToolPayload,
    pub is_error: bool,
    /// Remaining `(tool_calls, evaluations)` after this call.
    pub budget_remaining: (u32, u32),
}

/// Per-step budgets; both are enforced by the loop, never exceeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBudget {
    pub max_tool_calls: u32,
    pub max_evals: u32,
}

impl Default for StepBudget {
    fn default() -> Self {
        StepBudget {
            max_tool_calls: 64,
            max_evals: 16,
        }
    }
}

/// One (call, observation) pair of the attempt log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub call: ToolCall,
    pub observation: Observation,
}

/// The internal search record of one variation step, distinct from the
/// committed lineage.
#[derive(Debug, Clone, Default, Serialize)]
pub struct AttemptLog {
    pub entries: Vec<LogEntry>,
    pub evaluations_used: u32,
    pub edits_proposed: u32,
    /// Failure signatures observed during the step, with counts.
    pub failures: Vec<(FailureSignature, u32)>,
    /// The most recent failure, used as the step's signature when nothing
    /// was committed.
    pub last_failure: Option<FailureSignature>,
    /// Transport failure that aborted the step, if any.
    pub error: Option<String>,
}

impl AttemptLog {
    pub fn tool_calls(&self) -> u32 {
        self.entries.len() as u32
    }

    fn record_failure(&mut self, signature: FailureSignature) {
        match self.failures.iter_mut().find(|(s, _)| *s == signature) {
            Some((_, count)) => *count += 1,
            None => self.failures.push((signature.clone(), 1)),
        }
        self.last_failure = Some(signature);
    }
}

/// What the policy sees before choosing its next action.
pub struct PolicyView<'a> {
    pub draft: &'a str,
    pub last: Option<&'a LogEntry>,
    pub supervisor_events: &'a [SupervisorEvent],
    pub calls_made: u32,
    pub evals_used: u32,
    pub budget: &'a StepBudget,
}

/// Next move of a policy.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyAction {
    Call(ToolCall),
    Halt,
}

/// Raised only by model-backed policies when the transport fails; the step
/// ends as exhausted with the error recorded.
#[derive(Debug, thiserror::Error)]
#[error("policy transport failure: {0}")]
pub struct PolicyError(pub String);

/// The behavioral contract of a variation-step agent: a step function from
/// the visible state to the next tool call (or halt). Scripted policies
/// are deterministic; model-backed policies delegate to the external
/// service.
pub trait AgentPolicy {
    fn next_action(&mut self, view: &PolicyView<'_>) -> Result<PolicyAction, PolicyError>;
}

/// Context injected into a variation step by the driver.
#[derive(Debug, Clone, Default)]
pub struct StepInputs {
    pub supervisor_events: Vec<SupervisorEvent>,
    pub attempts_before: u32,
}

/// Executes tool calls against the lineage, knowledge base, and scorer,
/// maintaining the working draft and the attempt log.
pub struct ToolExecutor<'a> {
    lineage: &'a mut Lineage,
    kb: &'a KnowledgeBase,
    scorer: &'a Scorer,
    aggregation: Aggregation,
    budget: StepBudget,
    attempts_before: u32,
    pub draft: String,
    draft_eval: Option<EvaluationResult>,
    base_version: VersionId,
    committed: Option<VersionId>,
    pub log: AttemptLog,
}

impl<'a> ToolExecutor<'a> {
    pub fn new(
        lineage: &'a mut Lineage,
        kb: &'a KnowledgeBase,
        scorer: &'a Scorer,
        aggregation: Aggregation,
        budget: StepBudget,
        attempts_before: u32,
    ) -> ToolExecutor<'a> {
        let base = lineage.best_entry();
        let base_version = base.solution.version;
        let draft = base.solution.source.clone();
        ToolExecutor {
            lineage,
            kb,
            scorer,
            aggregation,
            budget,
            attempts_before,
            draft,
            draft_eval: None,
            base_version,
            committed: None,
            log: AttemptLog::default(),
        }
    }

    pub fn calls_used(&self) -> u32 {
        self.log.tool_calls()
    }

    pub fn evals_used(&self) -> u32 {
        self.log.evaluations_used
    }

    pub fn committed(&self) -> Option<VersionId> {
        self.committed
    }

    /// The version the draft was seeded from; recorded as the commit's
    /// parent.
    pub fn base_version(&self) -> VersionId {
        self.base_version
    }

    /// Execute one call, record it, and return the observation. Errors are
    /// observations with `is_error` set — the loop continues.
    pub fn execute(&mut self, call: ToolCall) -> Observation {
        let payload = self.dispatch(&call);
        let is_error = matches!(
            payload,
            ToolPayload::Error { .. } | ToolPayload::BudgetExhausted { .. }
        );
        let observation = Observation {
            tool: call.name().to_string(),
            payload,
            is_error,
            budget_remaining: (
                self.budget
                    .max_tool_calls
                    .saturating_sub(self.log.tool_calls() + 1),
                self.budget.max_evals.saturating_sub(self.log.evaluations_used),
            ),
        };
        self.log.entries.push(LogEntry {
            call,
            observation: observation.clone(),
        });
        observation
    }

    fn dispatch(&mut self, call: &ToolCall) -> ToolPayload {
        match call {
            ToolCall::ListVersions => ToolPayload::Versions {
                rows: self
                    .lineage
                    .entries()
                    .iter()
                    .map(|e| VersionRow {
                        version: e.solution.version,
                        parent: e.solution.parent,
                        geomean: geomean(&e.scores).unwrap_or(0.0),
                        note: e.solution.note.clone(),
                    })
                    .collect(),
                attempts_before: self.attempts_before,
            },
            ToolCall::ReadSolution { version } => match self.lineage.get(*version) {
                Some(entry) => ToolPayload::Source {
                    version: *version,
                    source: entry.solution.source.clone(),
                },
                None => ToolPayload::Error {
                    message: format!("unknown version {version}"),
                },
            },
            ToolCall::ReadScores { version } => match self.lineage.get(*version) {
                Some(entry) => ToolPayload::Scores {
                    version: *version,
                    scores: entry.scores.clone(),
                },
                None => ToolPayload::Error {
                    message: format!("unknown version {version}"),
                },
            },
            ToolCall::SearchKnowledge { query } => ToolPayload::KnowledgeHits {
                ids: self.kb.search(query),
            },
            ToolCall::ReadDoc { id } => match self.kb.get(id) {
                Ok(doc) => ToolPayload::Doc { doc: doc.clone() },
                Err(e) => ToolPayload::Error {
                    message: e.to_string(),
                },
            },
            ToolCall::ProposeEdit { source } => {
                self.draft = source.clone();
                self.draft_eval = None;
                self.log.edits_proposed += 1;
                ToolPayload::DraftReplaced {
                    lines: source.lines().count(),
                }
            }
            ToolCall::RunEval => {
                if self.log.evaluations_used >= self.budget.max_evals {
                    self.log.record_failure(FailureSignature::simple(
                        FailureKind::BudgetExhausted,
                        "evaluations",
                    ));
                    return ToolPayload::BudgetExhausted {
                        what: "evaluations".to_string(),
                    };
                }
                self.log.evaluations_used += 1;
                let result = self.scorer.evaluate(&self.draft);
                if !result.correct {
                    self.log.record_failure(FailureSignature::from_eval(&result));
                }
                self.draft_eval = Some(result.clone());
                ToolPayload::Eval { result }
            }
            ToolCall::Commit { note } => {
                let Some(eval) = self.draft_eval.clone() else {
                    return ToolPayload::Error {
                        message: "draft has not been evaluated; call run_eval before commit"
                            .to_string(),
                    };
                };
                let candidate = Candidate {
                    source: self.draft.clone(),
                    parent: Some(self.base_version),
                    note: note.clone(),
                };
                match accept_candidate(self.lineage, candidate, &eval, self.aggregation) {
                    Decision::Accepted(version) => {
                        self.committed = Some(version);
                        ToolPayload::Committed { version }
                    }
                    Decision::Rejected(reason) => {
                        self.log
                            .record_failure(FailureSignature::from_rejection(reason, &eval));
                        ToolPayload::CommitRejected { reason }
                    }
                }
            }
        }
    }
}

impl FailureSignature {
    /// Signature of a correctness-failing evaluation.
    pub fn from_eval(eval: &EvaluationResult) -> FailureSignature {
        let failing = eval
            .per_config
            .iter()
            .filter(|c| !c.correct)
            .map(|c| c.config_id.clone())
            .collect();
        let detail = if eval.compile_error.is_some() {
            "parse-error"
        } else if eval.timed_out {
            "timeout"
        } else {
            "mismatch"
        };
        FailureSignature::new(FailureKind::Correctness, failing, detail)
    }

    /// Signature of a rejected commit.
    pub fn from_rejection(reason: RejectReason, eval: &EvaluationResult) -> FailureSignature {
        match reason {
            RejectReason::CorrectnessFailure => FailureSignature::from_eval(eval),
            RejectReason::NoImprovement => {
                FailureSignature::simple(FailureKind::NoImprovement, "no-improvement")
            }
        }
    }
}

/// Run one agentic variation step: loop the policy against the tools until
/// it commits an accepted candidate, halts, fails, or exhausts the budget.
pub fn vary_agentic(
    lineage: &mut Lineage,
    kb: &KnowledgeBase,
    scorer: &Scorer,
    policy: &mut dyn AgentPolicy,
    budget: StepBudget,
    aggregation: Aggregation,
    inputs: &StepInputs,
) -> VariationOutcome {
    let mut executor = ToolExecutor::new(
        lineage,
        kb,
        scorer,
        aggregation,
        budget,
        inputs.attempts_before,
    );

    while executor.calls_used() < budget.max_tool_calls {
        let view = PolicyView {
            draft: &executor.draft,
            last: executor.log.entries.last(),
            supervisor_events: &inputs.supervisor_events,
            calls_made: executor.calls_used(),
            evals_used: executor.evals_used(),
            budget: &budget,
        };
        let action = match policy.next_action(&view) {
            Ok(action) => action,
            Err(e) => {
                executor
                    .log
                    .record_failure(FailureSignature::simple(FailureKind::Transport, "transport"));
                executor.log.error = Some(e.to_string());
                break;
            }
        };
        let call = match action {
            PolicyAction::Call(call) => call,
            PolicyAction::Halt => break,
        };
        executor.execute(call);
        if executor.committed().is_some() {
            break;
        }
    }

    let committed = executor.committed();
    let log = std::mem::take(&mut executor.log);
    drop(executor);
    match committed {
        Some(version) => {
            let entry = lineage.get(version).expect("just committed");
            VariationOutcome::Committed {
                version,
                solution: entry.solution.clone(),
                scores: entry.scores.clone(),
                log,
            }
        }
        None => VariationOutcome::Exhausted { log },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineage::{ScoreEntry, Solution};
    use crate::minivm::task::fixtures;

    fn setup(task: crate::minivm::TaskSpec) -> (Lineage, KnowledgeBase, Scorer) {
        let scorer = Scorer::with_defaults(task.clone()).unwrap();
        let seed_eval = scorer.evaluate(&task.reference.to_string());
        let lineage = Lineage::new(
            Solution {
                version: 0,
                parent: None,
                source: task.reference.to_string(),
                created_at: 0,
                note: "seed".into(),
            },
            seed_eval.scores,
        )
        .unwrap();
        (lineage, KnowledgeBase::builtin(), scorer)
    }

    #[test]
    fn read_scores_returns_stored_vector() {
        let (mut lineage, kb, scorer) = setup(fixtures::times3());
        let expected = lineage.seed().scores.clone();
        let mut exec = ToolExecutor::new(
            &mut lineage,
            &kb,
            &scorer,
            Aggregation::Geomean,
            StepBudget::default(),
            0,
        );
        let obs = exec.execute(ToolCall::ReadScores { version: 0 });
        assert!(!obs.is_error);
        assert_eq!(obs.payload, ToolPayload::Scores { version: 0, scores: expected });
    }

    #[test]
    fn unknown_version_is_error_observation_not_abort() {
        let (mut lineage, kb, scorer) = setup(fixtures::times3());
        let mut exec = ToolExecutor::new(
            &mut lineage,
            &kb,
            &scorer,
            Aggregation::Geomean,
            StepBudget::default(),
            0,
        );
        let obs = exec.execute(ToolCall::ReadSolution { version: 99 });
        assert!(obs.is_error);
        // The executor keeps serving calls afterwards.
        let obs = exec.execute(ToolCall::ListVersions);
        assert!(!obs.is_error);
    }

    #[test]
    fn run_eval_respects_budget() {
        let (mut lineage, kb, scorer) = setup(fixtures::times3());
        let budget = StepBudget {
            max_tool_calls: 10,
            max_evals: 1,
        };
        let mut exec =
            ToolExecutor::new(&mut lineage, &kb, &scorer, Aggregation::Geomean, budget, 0);
        let first = exec.execute(ToolCall::RunEval);
        assert!(!first.is_error);
        let second = exec.execute(ToolCall::RunEval);
        assert!(second.is_error);
        assert!(matches!(second.payload, ToolPayload::BudgetExhausted { .. }));
        assert_eq!(exec.evals_used(), 1);
    }

    #[test]
    fn commit_without_eval_is_refused() {
        let (mut lineage, kb, scorer) = setup(fixtures::times3());
        let mut exec = ToolExecutor::new(
            &mut lineage,
            &kb,
            &scorer,
            Aggregation::Geomean,
            StepBudget::default(),
            0,
        );
        let obs = exec.execute(ToolCall::Commit { note: String::new() });
        assert!(obs.is_error);
        assert_eq!(exec.committed(), None);
        // And after an edit the previous evaluation no longer counts.
        exec.execute(ToolCall::RunEval);
        exec.execute(ToolCall::ProposeEdit {
            source: "nop\n".into(),
        });
        let obs = exec.execute(ToolCall::Commit { note: String::new() });
        assert!(obs.is_error);
    }

    #[test]
    fn commit_of_improving_draft_is_accepted_and_appended() {
        let (mut lineage, kb, scorer) = setup(fixtures::times3());
        let mut exec = ToolExecutor::new(
            &mut lineage,
            &kb,
            &scorer,
            Aggregation::Geomean,
            StepBudget::default(),
            0,
        );
        exec.execute(ToolCall::ProposeEdit {
            source: "shl r1, r0, 1\nadd r0, r1, r0\n".into(),
        });
        exec.execute(ToolCall::RunEval);
        let obs = exec.execute(ToolCall::Commit {
            note: "strength-reduce".into(),
        });
        assert_eq!(obs.payload, ToolPayload::Committed { version: 1 });
        assert_eq!(exec.committed(), Some(1));
        drop(exec);
        assert_eq!(lineage.len(), 2);
        assert_eq!(lineage.get(1).unwrap().scores.get("A"), Some(500.0));
        assert_eq!(lineage.get(1).unwrap().solution.parent, Some(0));
    }

    #[test]
    fn rejected_commit_leaves_lineage_unchanged() {
        let (mut lineage, kb, scorer) = setup(fixtures::times3());
        let before = lineage.clone();
        let mut exec = ToolExecutor::new(
            &mut lineage,
            &kb,
            &scorer,
            Aggregation::Geomean,
            StepBudget::default(),
            0,
        );
        exec.execute(ToolCall::ProposeEdit {
            source: "shl r0, r0, 1\n".into(), // computes 2x, fails correctness
        });
        exec.execute(ToolCall::RunEval);
        let obs = exec.execute(ToolCall::Commit { note: String::new() });
        assert_eq!(
            obs.payload,
            ToolPayload::CommitRejected {
                reason: RejectReason::CorrectnessFailure
            }
        );
        drop(exec);
        assert_eq!(lineage, before);
    }

    #[test]
    fn eval_failures_carry_full_mismatch_detail() {
        let (mut lineage, kb, scorer) = setup(fixtures::times3());
        let mut exec = ToolExecutor::new(
            &mut lineage,
            &kb,
            &scorer,
            Aggregation::Geomean,
            StepBudget::default(),
            0,
        );
        exec.execute(ToolCall::ProposeEdit {
            source: "shl r0, r0, 1\n".into(),
        });
        let obs = exec.execute(ToolCall::RunEval);
        let ToolPayload::Eval { result } = obs.payload else {
            panic!("expected eval payload")
        };
        let mismatch = result.mismatch.unwrap();
        assert_eq!(mismatch.config_id, "A");
        assert_eq!(mismatch.got, 2);
        assert_eq!(mismatch.expected, 3);
        assert!(!mismatch.inputs.is_empty());
    }

    #[test]
    fn tool_call_json_round_trip() {
        let calls = vec![
            ToolCall::ListVersions,
            ToolCall::ReadSolution { version: 3 },
            ToolCall::SearchKnowledge {
                query: "strength".into(),
            },
            ToolCall::ProposeEdit {
                source: "nop\n".into(),
            },
            ToolCall::RunEval,
            ToolCall::Commit { note: "n".into() },
        ];
        for call in calls {
            let json = serde_json::to_string(&call).unwrap();
            let back: ToolCall = serde_json::from_str(&json).unwrap();
            assert_eq!(call, back);
        }
        // Commit note defaults when args are empty.
        let back: ToolCall = serde_json::from_str(r#"{"tool":"commit","args":{}}"#).unwrap();
        assert_eq!(back, ToolCall::Commit { note: String::new() });
    }
}
