//! Deterministic policies for the agentic operator.
//!
//! [`ScriptedAgentPolicy`] is the production policy for the rewrite domain:
//! it reads the best version, walks the rewrite registry in priority order
//! with an evaluate-after-every-edit discipline, keeps edits that hold or
//! improve the geomean, reverts edits that fail correctness or regress, and
//! commits at the rewrite fixed point. Two runs on identical state issue
//! identical tool-call sequences.
//!
//! The other policies exist to exercise the harness: [`BadRuleProbePolicy`]
//! drives the unsound rewrite through the diagnose-and-revert path,
//! [`AlwaysFailPolicy`] fails every attempt with an identical signature to
//! trigger the supervisor, and [`ReplayPolicy`] replays an arbitrary call
//! sequence (used by the budget-safety property tests).

use std::collections::VecDeque;

use crate::lineage::geomean;
use crate::minivm::rewrite::{apply_rewrite, RewriteRule};
use crate::minivm::Program;

use super::agentic::{
    AgentPolicy, PolicyAction, PolicyError, PolicyView, ToolCall, ToolPayload, VersionRow,
};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Start,
    AwaitVersions,
    AwaitSource,
    AwaitProposeAck,
    AwaitEval,
    AwaitRevertAck,
    AwaitFinalEval,
    AwaitCommit,
    Done,
}

/// Deterministic rewrite-walking policy.
pub struct ScriptedAgentPolicy {
    phase: Phase,
    rule_order: Vec<RewriteRule>,
    current_source: String,
    current_geomean: f64,
    evaluated_current: bool,
    failed_on_current: Vec<RewriteRule>,
    pending: Option<(RewriteRule, String)>,
    applied: Vec<&'static str>,
}

impl Default for ScriptedAgentPolicy {
    fn default() -> Self {
        ScriptedAgentPolicy::new()
    }
}

impl ScriptedAgentPolicy {
    pub fn new() -> ScriptedAgentPolicy {
        ScriptedAgentPolicy {
            phase: Phase::Start,
            rule_order: RewriteRule::PRIORITY.to_vec(),
            current_source: String::new(),
            current_geomean: 0.0,
            evaluated_current: false,
            failed_on_current: Vec::new(),
            pending: None,
            applied: Vec::new(),
        }
    }

    /// Supervisor directions whose ids name sound rewrite rules are tried
    /// first; everything else keeps the registry priority order.
    fn apply_hints(&mut self, view: &PolicyView<'_>) {
        let mut order: Vec<RewriteRule> = Vec::new();
        for event in view.supervisor_events {
            for id in &event.directions {
                if let Ok(rule) = id.parse::<RewriteRule>() {
                    if rule != RewriteRule::BadStrengthReduce && !order.contains(&rule) {
                        order.push(rule);
                    }
                }
            }
        }
        for rule in RewriteRule::PRIORITY {
            if !order.contains(&rule) {
                order.push(rule);
            }
        }
        self.rule_order = order;
    }

    fn commit_note(&self) -> String {
        if self.applied.is_empty() {
            "no change: rewrite fixed point".to_string()
        } else {
            self.applied.join(", ")
        }
    }

    /// Propose the next applicable rewrite, or head for commit when the
    /// draft is a fixed point.
    fn editing_action(&mut self) -> PolicyAction {
        let program: Program = self
            .current_source
            .parse()
            .expect("kept drafts always parse");
        for rule in self.rule_order.clone() {
            if self.failed_on_current.contains(&rule) {
                continue;
            }
            if let Some(rewritten) = apply_rewrite(&program, rule) {
                let source = rewritten.to_string();
                self.pending = Some((rule, source.clone()));
                self.phase = Phase::AwaitProposeAck;
                return PolicyAction::Call(ToolCall::ProposeEdit { source });
            }
        }
        if self.evaluated_current {
            self.phase = Phase::AwaitCommit;
            PolicyAction::Call(ToolCall::Commit {
                note: self.commit_note(),
            })
        } else {
            self.phase = Phase::AwaitFinalEval;
            PolicyAction::Call(ToolCall::RunEval)
        }
    }
}

fn best_row(rows: &[VersionRow]) -> &VersionRow {
    rows.iter()
        .fold(None::<&VersionRow>, |best, row| match best {
            Some(b) if row.geomean < b.geomean => Some(b),
            _ => Some(row),
        })
        .expect("lineage is never empty")
}

impl AgentPolicy for ScriptedAgentPolicy {
    fn next_action(&mut self, view: &PolicyView<'_>) -> Result<PolicyAction, PolicyError> {
        let payload = view.last.map(|entry| &entry.observation.payload);
        let action = match self.phase {
            Phase::Start => {
                self.apply_hints(view);
                self.phase = Phase::AwaitVersions;
                PolicyAction::Call(ToolCall::ListVersions)
            }
            Phase::AwaitVersions => match payload {
                Some(ToolPayload::Versions { rows, .. }) => {
                    let best = best_row(rows);
                    self.current_geomean = best.geomean;
                    self.phase = Phase::AwaitSource;
                    PolicyAction::Call(ToolCall::ReadSolution {
                        version: best.version,
                    })
                }
                _ => PolicyAction::Halt,
            },
            Phase::AwaitSource => match payload {
                Some(ToolPayload::Source { source, .. }) => {
                    self.current_source = source.clone();
                    self.editing_action()
                }
                _ => PolicyAction::Halt,
            },
            Phase::AwaitProposeAck => match payload {
                Some(ToolPayload::DraftReplaced { .. }) => {
                    self.phase = Phase::AwaitEval;
                    PolicyAction::Call(ToolCall::RunEval)
                }
                _ => PolicyAction::Halt,
            },
            Phase::AwaitEval => match payload {
                Some(ToolPayload::Eval { result }) => {
                    let (rule, source) = self.pending.take().expect("eval follows a proposal");
                    let score = geomean(&result.scores).unwrap_or(0.0);
                    if result.correct && score >= self.current_geomean {
                        self.current_source = source;
                        self.current_geomean = score;
                        self.evaluated_current = true;
                        self.failed_on_current.clear();
                        self.applied.push(rule.id());
                        self.editing_action()
                    } else {
                        self.failed_on_current.push(rule);
                        self.phase = Phase::AwaitRevertAck;
                        PolicyAction::Call(ToolCall::ProposeEdit {
                            source: self.current_source.clone(),
                        })
                    }
                }
                _ => PolicyAction::Halt, // includes budget exhaustion
            },
            Phase::AwaitRevertAck => match payload {
                Some(ToolPayload::DraftReplaced { .. }) => {
                    self.evaluated_current = false;
                    self.editing_action()
                }
                _ => PolicyAction::Halt,
            },
            Phase::AwaitFinalEval => match payload {
                Some(ToolPayload::Eval { result }) if result.correct => {
                    self.current_geomean = geomean(&result.scores).unwrap_or(0.0);
                    self.evaluated_current = true;
                    self.phase = Phase::AwaitCommit;
                    PolicyAction::Call(ToolCall::Commit {
                        note: self.commit_note(),
                    })
                }
                _ => PolicyAction::Halt,
            },
            Phase::AwaitCommit => {
                self.phase = Phase::Done;
                PolicyAction::Halt
            }
            Phase::Done => PolicyAction::Halt,
        };
        Ok(action)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ProbePhase {
    Start,
    AwaitVersions,
    AwaitSource,
    AwaitBadAck,
    AwaitBadEval,
    AwaitRevertAck,
    AwaitGoodAck,
    AwaitGoodEval,
    AwaitCommit,
    Done,
}

/// Applies the unsound rewrite first, observes the mismatch, reverts, then
/// retries with the sound rule and commits.
pub struct BadRuleProbePolicy {
    phase: ProbePhase,
    original: String,
}

impl Default for BadRuleProbePolicy {
    fn default() -> Self {
        BadRuleProbePolicy::new()
    }
}

impl BadRuleProbePolicy {
    pub fn new() -> BadRuleProbePolicy {
        BadRuleProbePolicy {
            phase: ProbePhase::Start,
            original: String::new(),
        }
    }

    fn rewrite(&self, rule: RewriteRule) -> Option<String> {
        let program: Program = self.original.parse().ok()?;
        apply_rewrite(&program, rule).map(|p| p.to_string())
    }
}

impl AgentPolicy for BadRuleProbePolicy {
    fn next_action(&mut self, view: &PolicyView<'_>) -> Result<PolicyAction, PolicyError> {
        let payload = view.last.map(|entry| &entry.observation.payload);
        let action = match self.phase {
            ProbePhase::Start => {
                self.phase = ProbePhase::AwaitVersions;
                PolicyAction::Call(ToolCall::ListVersions)
            }
            ProbePhase::AwaitVersions => match payload {
                Some(ToolPayload::Versions { rows, .. }) => {
                    let best = best_row(rows);
                    self.phase = ProbePhase::AwaitSource;
                    PolicyAction::Call(ToolCall::ReadSolution {
                        version: best.version,
                    })
                }
                _ => PolicyAction::Halt,
            },
            ProbePhase::AwaitSource => match payload {
                Some(ToolPayload::Source { source, .. }) => {
                    self.original = source.clone();
                    match self.rewrite(RewriteRule::BadStrengthReduce) {
                        Some(source) => {
                            self.phase = ProbePhase::AwaitBadAck;
                            PolicyAction::Call(ToolCall::ProposeEdit { source })
                        }
                        None => PolicyAction::Halt,
                    }
                }
                _ => PolicyAction::Halt,
            },
            ProbePhase::AwaitBadAck => {
                self.phase = ProbePhase::AwaitBadEval;
                PolicyAction::Call(ToolCall::RunEval)
            }
            ProbePhase::AwaitBadEval => match payload {
                // The unsound rewrite must be caught by the correctness
                // oracle; revert to the original draft.
                Some(ToolPayload::Eval { result }) if !result.correct => {
                    self.phase = ProbePhase::AwaitRevertAck;
                    PolicyAction::Call(ToolCall::ProposeEdit {
                        source: self.original.clone(),
                    })
                }
                _ => PolicyAction::Halt,
            },
            ProbePhase::AwaitRevertAck => match self.rewrite(RewriteRule::StrengthReduce) {
                Some(source) => {
                    self.phase = ProbePhase::AwaitGoodAck;
                    PolicyAction::Call(ToolCall::ProposeEdit { source })
                }
                None => PolicyAction::Halt,
            },
            ProbePhase::AwaitGoodAck => {
                self.phase = ProbePhase::AwaitGoodEval;
                PolicyAction::Call(ToolCall::RunEval)
            }
            ProbePhase::AwaitGoodEval => match payload {
                Some(ToolPayload::Eval { result }) if result.correct => {
                    self.phase = ProbePhase::AwaitCommit;
                    PolicyAction::Call(ToolCall::Commit {
                        note: "strength-reduce after reverting unsound variant".to_string(),
                    })
                }
                _ => PolicyAction::Halt,
            },
            ProbePhase::AwaitCommit | ProbePhase::Done => {
                self.phase = ProbePhase::Done;
                PolicyAction::Halt
            }
        };
        Ok(action)
    }
}

/// Proposes the same broken candidate every step, evaluates it, and gives
/// up, so every attempt fails with an identical correctness signature.
#[derive(Debug, Default)]
pub struct AlwaysFailPolicy {
    step: u32,
}

impl AlwaysFailPolicy {
    pub fn new() -> AlwaysFailPolicy {
        AlwaysFailPolicy::default()
    }
}

impl AgentPolicy for AlwaysFailPolicy {
    fn next_action(&mut self, _view: &PolicyView<'_>) -> Result<PolicyAction, PolicyError> {
        self.step += 1;
        Ok(match self.step {
            1 => PolicyAction::Call(ToolCall::ProposeEdit {
                source: "const r0, 424242\n".to_string(),
            }),
            2 => PolicyAction::Call(ToolCall::RunEval),
            _ => PolicyAction::Halt,
        })
    }
}

/// Replays a fixed call sequence, halting when it runs out.
#[derive(Debug, Default)]
pub struct ReplayPolicy {
    calls: VecDeque<ToolCall>,
}

impl ReplayPolicy {
    pub fn new(calls: impl IntoIterator<Item = ToolCall>) -> ReplayPolicy {
        ReplayPolicy {
            calls: calls.into_iter().collect(),
        }
    }
}

impl AgentPolicy for ReplayPolicy {
    fn next_action(&mut self, _view: &PolicyView<'_>) -> Result<PolicyAction, PolicyError> {
        Ok(match self.calls.pop_front() {
            Some(call) => PolicyAction::Call(call),
            None => PolicyAction::Halt,
        })
    }
}
