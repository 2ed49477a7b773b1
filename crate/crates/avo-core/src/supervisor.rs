//! Self-supervision for long runs: stall and cycle detection over the
//! attempt history, and rule-based intervention that steers the search
//! toward untried directions from a registry.
//!
//! Detectors are pure functions of the history slice they are given; the
//! driver controls debouncing by slicing the history at the previous
//! intervention. Interventions are only ever requested after a detector
//! fired.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::lineage::{geomean, Lineage, VersionId};

/// Why an attempt failed, normalized for cycle detection. Equality is
/// structural so identical failure modes hash and compare identically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FailureSignature {
    pub kind: FailureKind,
    pub failing_configs: BTreeSet<String>,
    /// Normalized category of the failure detail (e.g. `mismatch`,
    /// `parse-error`, `timeout`).
    pub detail_class: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    Correctness,
    NoImprovement,
    BudgetExhausted,
    Transport,
}

impl FailureSignature {
    pub fn new(kind: FailureKind, failing_configs: BTreeSet<String>, detail_class: &str) -> Self {
        FailureSignature {
            kind,
            failing_configs,
            detail_class: detail_class.to_string(),
        }
    }

    pub fn simple(kind: FailureKind, detail_class: &str) -> Self {
        FailureSignature::new(kind, BTreeSet::new(), detail_class)
    }
}

/// Driver-level outcome of one variation attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttemptOutcome {
    Accepted { version: VersionId },
    Failed { signature: FailureSignature },
}

impl AttemptOutcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, AttemptOutcome::Accepted { .. })
    }

    pub fn signature(&self) -> Option<&FailureSignature> {
        match self {
            AttemptOutcome::Failed { signature } => Some(signature),
            AttemptOutcome::Accepted { .. } => None,
        }
    }
}

/// True iff the last `window` attempts contain no accepted commit. Shorter
/// histories never stall; an acceptance resets the streak by construction.
pub fn detect_stall(history: &[AttemptOutcome], window: u32) -> bool {
    let window = window as usize;
    assert!(window >= 1, "stall window must be at least 1");
    if history.len() < window {
        return false;
    }
    history[history.len() - window..]
        .iter()
        .all(|a| !a.is_accepted())
}

/// True iff the last `threshold` attempts all failed with the identical
/// signature.
pub fn detect_cycle(history: &[AttemptOutcome], threshold: u32) -> bool {
    let threshold = threshold as usize;
    assert!(threshold >= 2, "cycle threshold must be at least 2");
    if history.len() < threshold {
        return false;
    }
    let tail = &history[history.len() - threshold..];
    let Some(first) = tail[0].signature() else {
        return false;
    };
    tail.iter().all(|a| a.signature() == Some(first))
}

/// What fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trigger {
    Stall,
    Cycle,
}

/// An intervention: a trajectory review plus candidate directions, injected
/// into the next variation step and recorded in the run log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupervisorEvent {
    pub trigger: Trigger,
    pub at_attempt: u32,
    pub summary: String,
    pub directions: Vec<String>,
    pub warning: Option<String>,
}

/// A candidate optimization direction with bookkeeping for the fallback
/// selection order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Direction {
    pub id: String,
    pub hint: String,
    #[serde(default)]
    pub tried: bool,
    #[serde(default)]
    pub last_tried_at: Option<u32>,
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("duplicate direction id `{0}`")]
    DuplicateId(String),
    #[error("failed to read directions file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse directions file: {0}")]
    Toml(#[from] toml::de::Error),
}

/// Ordered registry of candidate directions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DirectionRegistry {
    #[serde(rename = "direction", default)]
    pub entries: Vec<Direction>,
}

impl DirectionRegistry {
    pub fn new(entries: Vec<Direction>) -> Result<DirectionRegistry, RegistryError> {
        let mut seen = BTreeSet::new();
        for entry in &entries {
            if !seen.insert(entry.id.clone()) {
                return Err(RegistryError::DuplicateId(entry.id.clone()));
            }
        }
        Ok(DirectionRegistry { entries })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<DirectionRegistry, RegistryError> {
        let text = std::fs::read_to_string(path)?;
        let registry: DirectionRegistry = toml::from_str(&text)?;
        DirectionRegistry::new(registry.entries)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// First `count` untried entries in registry order, then
    /// least-recently-tried entries to fill the remainder. Selected entries
    /// are marked tried at the given attempt.
    fn select(&mut self, count: usize, at_attempt: u32) -> Vec<String> {
        let mut picked: Vec<usize> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.tried)
            .map(|(i, _)| i)
            .take(count)
            .collect();
        if picked.len() < count {
            let mut fallback: Vec<usize> = self
                .entries
                .iter()
                .enumerate()
                .filter(|(i, d)| d.tried && !picked.contains(i))
                .map(|(i, _)| i)
                .collect();
            fallback.sort_by_key(|&i| (self.entries[i].last_tried_at.unwrap_or(0), i));
            picked.extend(fallback.into_iter().take(count - picked.len()));
        }
        picked
            .iter()
            .map(|&i| {
                let entry = &mut self.entries[i];
                entry.tried = true;
                entry.last_tried_at = Some(at_attempt);
                entry.id.clone()
            })
            .collect()
    }
}

/// Supervisor thresholds; stall and cycle windows are deliberately
/// configuration-exposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisorConfig {
    pub stall_window: u32,
    pub cycle_threshold: u32,
    /// Versions summarized in the trajectory review.
    pub summary_versions: u32,
    /// Directions proposed per intervention.
    pub directions_per_event: u32,
    /// Optional wall-clock stall trigger for long model-backed runs.
    pub stall_seconds: Option<f64>,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        SupervisorConfig {
            stall_window: 25,
            cycle_threshold: 5,
            summary_versions: 5,
            directions_per_event: 3,
            stall_seconds: None,
        }
    }
}

/// Review the trajectory and pick directions. `pre`: a detector fired.
pub fn intervene(
    lineage: &Lineage,
    history: &[AttemptOutcome],
    registry: &mut DirectionRegistry,
    config: &SupervisorConfig,
    trigger: Trigger,
    at_attempt: u32,
) -> SupervisorEvent {
    let mut summary = String::new();
    let entries = lineage.entries();
    let k = config.summary_versions as usize;
    let start = entries.len().saturating_sub(k);
    for (i, entry) in entries.iter().enumerate().skip(start) {
        let g = geomean(&entry.scores).unwrap_or(0.0);
        let delta = if i == 0 {
            String::from("seed")
        } else {
            let prev = geomean(&entries[i - 1].scores).unwrap_or(0.0);
            if prev > 0.0 {
                format!("{:+.1}%", (g / prev - 1.0) * 100.0)
            } else {
                String::from("n/a")
            }
        };
        summary.push_str(&format!("v{}: geomean {:.3} ({})\n", entry.solution.version, g, delta));
    }

    let mut failure_counts: BTreeMap<&FailureSignature, usize> = BTreeMap::new();
    for outcome in history {
        if let Some(sig) = outcome.signature() {
            *failure_counts.entry(sig).or_default() += 1;
        }
    }
    let mut recurring: Vec<(&FailureSignature, usize)> = failure_counts.into_iter().collect();
    recurring.sort_by(|a, b| b.1.cmp(&a.1));
    for (sig, count) in recurring.iter().take(3) {
        summary.push_str(&format!(
            "failure x{count}: {:?} [{}] {}\n",
            sig.kind,
            sig.failing_configs.iter().cloned().collect::<Vec<_>>().join(","),
            sig.detail_class
        ));
    }

    let directions = registry.select(config.directions_per_event as usize, at_attempt);
    let warning = registry
        .is_empty()
        .then(|| "direction registry is empty".to_string());

    SupervisorEvent {
        trigger,
        at_attempt,
        summary,
        directions,
        warning,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineage::{ScoreEntry, ScoreVector, Solution};

    fn fails(n: usize) -> Vec<AttemptOutcome> {
        (0..n)
            .map(|_| AttemptOutcome::Failed {
                signature: FailureSignature::simple(FailureKind::NoImprovement, ""),
            })
            .collect()
    }

    fn accept(version: VersionId) -> AttemptOutcome {
        AttemptOutcome::Accepted { version }
    }

    #[test]
    fn stall_boundary_is_exact() {
        assert!(!detect_stall(&fails(24), 25));
        assert!(detect_stall(&fails(25), 25));
        assert!(detect_stall(&fails(26), 25));
    }

    #[test]
    fn acceptance_resets_the_streak() {
        let mut history = fails(30);
        history.push(accept(1));
        history.extend(fails(3));
        assert!(!detect_stall(&history, 25));
    }

    #[test]
    fn cycle_boundary_is_exact() {
        let sig_a = FailureSignature::simple(FailureKind::Correctness, "mismatch");
        let same: Vec<AttemptOutcome> = (0..5)
            .map(|_| AttemptOutcome::Failed {
                signature: sig_a.clone(),
            })
            .collect();
        assert!(detect_cycle(&same, 5));
        assert!(!detect_cycle(&same[..4], 5));
    }

    #[test]
    fn differing_signatures_do_not_cycle() {
        let history: Vec<AttemptOutcome> = (0..5)
            .map(|i| AttemptOutcome::Failed {
                signature: FailureSignature::simple(FailureKind::Correctness, &format!("m{i}")),
            })
            .collect();
        assert!(!detect_cycle(&history, 5));
    }

    #[test]
    fn broken_streak_does_not_cycle() {
        let sig = FailureSignature::simple(FailureKind::Correctness, "mismatch");
        let mut history: Vec<AttemptOutcome> = (0..4)
            .map(|_| AttemptOutcome::Failed {
                signature: sig.clone(),
            })
            .collect();
        history.push(AttemptOutcome::Failed {
            signature: FailureSignature::simple(FailureKind::NoImprovement, ""),
        });
        assert!(!detect_cycle(&history, 5));
    }

    #[test]
    fn detectors_are_pure() {
        let history = fails(25);
        assert_eq!(detect_stall(&history, 25), detect_stall(&history, 25));
        assert_eq!(detect_cycle(&history, 5), detect_cycle(&history, 5));
    }

    fn registry(n: usize) -> DirectionRegistry {
        DirectionRegistry::new(
            (0..n)
                .map(|i| Direction {
                    id: format!("d{i}"),
                    hint: format!("hint {i}"),
                    tried: false,
                    last_tried_at: None,
                })
                .collect(),
        )
        .unwrap()
    }

    fn lineage_with_geomeans(values: &[f64]) -> Lineage {
        let sv = |v: f64| ScoreVector::new(vec![ScoreEntry::new("A", v)]);
        let sol = |version: VersionId| Solution {
            version,
            parent: version.checked_sub(1),
            source: String::new(),
            created_at: 0,
            note: String::new(),
        };
        let mut lineage = Lineage::new(sol(0), sv(values[0])).unwrap();
        for (i, v) in values.iter().enumerate().skip(1) {
            lineage.append_version(sol(i as VersionId), sv(*v)).unwrap();
        }
        lineage
    }

    #[test]
    fn selects_first_untried_in_registry_order() {
        let mut reg = registry(5);
        reg.entries[0].tried = true;
        reg.entries[2].tried = true;
        let event = intervene(
            &lineage_with_geomeans(&[1.0]),
            &fails(25),
            &mut reg,
            &SupervisorConfig::default(),
            Trigger::Stall,
            25,
        );
        assert_eq!(event.directions, vec!["d1", "d3", "d4"]);
        assert!(reg.entries.iter().all(|d| d.id == "d0" || d.id == "d2" || d.tried));
    }

    #[test]
    fn falls_back_to_least_recently_tried() {
        let mut reg = registry(5);
        for (i, d) in reg.entries.iter_mut().enumerate() {
            d.tried = true;
            d.last_tried_at = Some(10 + i as u32);
        }
        reg.entries[1].last_tried_at = Some(2); // oldest
        let event = intervene(
            &lineage_with_geomeans(&[1.0]),
            &fails(25),
            &mut reg,
            &SupervisorConfig::default(),
            Trigger::Cycle,
            30,
        );
        assert_eq!(event.directions, vec!["d1", "d0", "d2"]);
    }

    #[test]
    fn empty_registry_yields_warning() {
        let mut reg = DirectionRegistry::default();
        let event = intervene(
            &lineage_with_geomeans(&[1.0]),
            &fails(25),
            &mut reg,
            &SupervisorConfig::default(),
            Trigger::Stall,
            25,
        );
        assert!(event.directions.is_empty());
        assert!(event.warning.is_some());
    }

    #[test]
    fn summary_lists_versions_with_deltas() {
        let mut reg = registry(3);
        let event = intervene(
            &lineage_with_geomeans(&[100.0, 150.0, 300.0]),
            &fails(5),
            &mut reg,
            &SupervisorConfig::default(),
            Trigger::Stall,
            25,
        );
        let version_lines: Vec<&str> =
            event.summary.lines().filter(|l| l.starts_with('v')).collect();
        assert_eq!(version_lines.len(), 3);
        assert!(event.summary.contains("+50.0%"));
        assert!(event.summary.contains("+100.0%"));
    }
}
