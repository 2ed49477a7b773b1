//! Variation operators: mechanisms that produce a new candidate from the
//! current lineage.
//!
//! Two operators are provided. [`classical`] is the two-stage
//! decomposition: Boltzmann parent sampling over the lineage followed by
//! one-shot generation, with no evaluations performed inside the operator.
//! [`agentic`] replaces the whole pipeline with an autonomous tool loop
//! that decides for itself what to read, edit, and evaluate, and commits
//! through the acceptance rule when it is satisfied.

pub mod agentic;
pub mod classical;
pub mod model;
pub mod scripted;

use crate::lineage::{ScoreVector, Solution, VersionId};

use agentic::AttemptLog;

/// Result of one agentic variation step: either a committed (accepted)
/// solution or budget exhaustion. The full attempt log is returned either
/// way; unsuccessful attempts never touch the lineage.
#[derive(Debug, Clone)]
pub enum VariationOutcome {
    Committed {
        version: VersionId,
        solution: Solution,
        scores: ScoreVector,
        log: AttemptLog,
    },
    Exhausted {
        log: AttemptLog,
    },
}

impl VariationOutcome {
    pub fn log(&self) -> &AttemptLog {
        match self {
            VariationOutcome::Committed { log, .. } | VariationOutcome::Exhausted { log } => log,
        }
    }

    pub fn committed_version(&self) -> Option<VersionId> {
        match self {
            VariationOutcome::Committed { version, .. } => Some(*version),
            VariationOutcome::Exhausted { .. } => None,
        }
    }
}
