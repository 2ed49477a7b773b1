//! The committed lineage: append-only history of accepted solutions and
//! their score vectors, plus the commit-acceptance rule.
//!
//! A lineage always contains at least the seed (version 0), which is stored
//! regardless of its score and is exempt from the acceptance rule. Every
//! later version must have passed [`accept_candidate`]: correct on all
//! configurations and matching or improving the best committed aggregate
//! score. Versions are never removed or reordered, so concurrent readers
//! holding a shared reference always observe a consistent prefix.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::scoring::EvaluationResult;

pub type VersionId = u32;

/// Unit tag carried by every score entry.
pub const SCORE_UNIT: &str = "pseudo-throughput";

/// One committed candidate program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub version: VersionId,
    /// The committed version this one was derived from; `None` for the seed.
    pub parent: Option<VersionId>,
    /// Domain program source text.
    pub source: String,
    /// Unix milliseconds.
    pub created_at: i64,
    /// Free-text commit summary supplied by the variation operator.
    pub note: String,
}

/// Per-configuration score, higher is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub config_id: String,
    pub value: f64,
    pub unit: String,
}

impl ScoreEntry {
    pub fn new(config_id: impl Into<String>, value: f64) -> ScoreEntry {
        ScoreEntry {
            config_id: config_id.into(),
            value,
            unit: SCORE_UNIT.to_string(),
        }
    }
}

/// Scores for one candidate, ordered to match the task's configuration
/// order. All values are non-negative; a correctness failure forces every
/// value to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub entries: Vec<ScoreEntry>,
}

impl ScoreVector {
    pub fn new(entries: Vec<ScoreEntry>) -> ScoreVector {
        ScoreVector { entries }
    }

    /// All-zero vector over the given configuration ids.
    pub fn zeroed<'a>(config_ids: impl IntoIterator<Item = &'a str>) -> ScoreVector {
        ScoreVector {
            entries: config_ids
                .into_iter()
                .map(|id| ScoreEntry::new(id, 0.0))
                .collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.value)
    }

    pub fn get(&self, config_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.config_id == config_id)
            .map(|e| e.value)
    }

    pub fn is_all_zero(&self) -> bool {
        self.entries.iter().all(|e| e.value == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LineageError {
    #[error("score vector is empty")]
    EmptyScoreVector,
    #[error("version {got} does not extend the lineage (expected {expected})")]
    NonConsecutiveVersion { expected: VersionId, got: VersionId },
    #[error("parent {parent} of version {version} is not an earlier version")]
    BadParent {
        version: VersionId,
        parent: VersionId,
    },
    #[error("seed solution must be version 0, got {0}")]
    SeedNotZero(VersionId),
}

/// Scalar used to compare candidates against the committed best.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Geomean,
    ArithmeticMean,
}

/// Geometric mean of the score entries: the n-th root of the product.
/// Exactly zero when any entry is zero. Entries are multiplied in sorted
/// order so the result is invariant under permutation.
pub fn geomean(scores: &ScoreVector) -> Result<f64, LineageError> {
    if scores.entries.is_empty() {
        return Err(LineageError::EmptyScoreVector);
    }
    if scores.values().any(|v| v == 0.0) {
        return Ok(0.0);
    }
    let mut values: Vec<f64> = scores.values().collect();
    values.sort_by(f64::total_cmp);
    let product: f64 = values.iter().product();
    Ok(product.powf(1.0 / values.len() as f64))
}

/// Aggregate a score vector with the configured rule.
pub fn aggregate(scores: &ScoreVector, rule: Aggregation) -> Result<f64, LineageError> {
    match rule {
        Aggregation::Geomean => geomean(scores),
        Aggregation::ArithmeticMean => {
            if scores.entries.is_empty() {
                return Err(LineageError::EmptyScoreVector);
            }
            Ok(scores.values().sum::<f64>() / scores.entries.len() as f64)
        }
    }
}

/// A committed (solution, scores) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub solution: Solution,
    pub scores: ScoreVector,
}

/// Append-only sequence of committed versions, seeded with version 0.
/// Emptiness is unrepresentable: construction requires the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    versions: Vec<LineageEntry>,
}

/// A candidate awaiting the acceptance decision. Versions and timestamps
/// are stamped on append.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub source: String,
    pub parent: Option<VersionId>,
    pub note: String,
}

/// Outcome of the commit rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accepted(VersionId),
    Rejected(RejectReason),
}

/// Rejection is a normal outcome, not an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    CorrectnessFailure,
    NoImprovement,
}

impl Lineage {
    /// Start a lineage from the evaluated seed. The seed is stored as
    /// version 0 even if its score is poor.
    pub fn new(seed: Solution, scores: ScoreVector) -> Result<Lineage, LineageError> {
        if seed.version != 0 {
            return Err(LineageError::SeedNotZero(seed.version));
        }
        Ok(Lineage {
            versions: vec![LineageEntry {
                solution: seed,
                scores,
            }],
        })
    }

    pub fn seed(&self) -> &LineageEntry {
        &self.versions[0]
    }

    pub fn len(&self) -> usize {
        self.versions.len()
    }

    /// Lineages are never empty, but the conventional pairing is expected.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn entries(&self) -> &[LineageEntry] {
        &self.versions
    }

    pub fn get(&self, version: VersionId) -> Option<&LineageEntry> {
        self.versions.get(version as usize)
    }

    pub fn latest(&self) -> &LineageEntry {
        self.versions.last().expect("lineage is never empty")
    }

    pub fn next_version(&self) -> VersionId {
        self.versions.len() as VersionId
    }

    /// The best committed aggregate so far.
    pub fn best_aggregate(&self, rule: Aggregation) -> f64 {
        self.versions
            .iter()
            .map(|e| aggregate(&e.scores, rule).unwrap_or(0.0))
            .fold(0.0, f64::max)
    }

    /// The entry with the highest geomean; ties go to the most recent
    /// version.
    pub fn best_entry(&self) -> &LineageEntry {
        let mut best = &self.versions[0];
        let mut best_g = geomean(&best.scores).unwrap_or(0.0);
        for entry in &self.versions[1..] {
            let g = geomean(&entry.scores).unwrap_or(0.0);
            if g >= best_g {
                best = entry;
                best_g = g;
            }
        }
        best
    }

    /// Running-best geomean envelope: entry `i` is the max geomean over
    /// versions `0..=i`. Nondecreasing by construction.
    pub fn running_best(&self) -> Vec<(VersionId, f64)> {
        let mut best = f64::NEG_INFINITY;
        self.versions
            .iter()
            .map(|e| {
                best = best.max(geomean(&e.scores).unwrap_or(0.0));
                (e.solution.version, best)
            })
            .collect()
    }

    /// Low-level append with consistency checks: the version must be the
    /// next id and the parent must be earlier.
    pub fn append_version(
        &mut self,
        solution: Solution,
        scores: ScoreVector,
    ) -> Result<VersionId, LineageError> {
        let expected = self.next_version();
        if solution.version != expected {
            return Err(LineageError::NonConsecutiveVersion {
                expected,
                got: solution.version,
            });
        }
        if let Some(parent) = solution.parent {
            if parent >= solution.version {
                return Err(LineageError::BadParent {
                    version: solution.version,
                    parent,
                });
            }
        }
        let version = solution.version;
        self.versions.push(LineageEntry { solution, scores });
        Ok(version)
    }
}

/// Current wall clock in unix milliseconds.
pub fn now_millis() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

/// The commit rule: accept iff the evaluation passed correctness on every
/// configuration and its aggregate matches or improves the best committed
/// aggregate. Acceptance appends the candidate with the next version id;
/// rejection leaves the lineage untouched.
pub fn accept_candidate(
    lineage: &mut Lineage,
    candidate: Candidate,
    eval: &EvaluationResult,
    rule: Aggregation,
) -> Decision {
    if !eval.correct {
        return Decision::Rejected(RejectReason::CorrectnessFailure);
    }
    let score = aggregate(&eval.scores, rule).unwrap_or(0.0);
    let best = lineage.best_aggregate(rule);
    if score < best {
        return Decision::Rejected(RejectReason::NoImprovement);
    }
    let solution = Solution {
        version: lineage.next_version(),
        parent: candidate.parent,
        source: candidate.source,
        created_at: now_millis(),
        note: candidate.note,
    };
    let id = lineage
        .append_version(solution, eval.scores.clone())
        .expect("next_version is consistent by construction");
    Decision::Accepted(id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(values: &[f64]) -> ScoreVector {
        ScoreVector::new(
            values
                .iter()
                .enumerate()
                .map(|(i, v)| ScoreEntry::new(format!("C{i}"), *v))
                .collect(),
        )
    }

    fn seed_lineage(values: &[f64]) -> Lineage {
        let seed = Solution {
            version: 0,
            parent: None,
            source: "nop\n".to_string(),
            created_at: 0,
            note: "seed".to_string(),
        };
        Lineage::new(seed, sv(values)).unwrap()
    }

    fn eval_for(correct: bool, values: &[f64]) -> EvaluationResult {
        EvaluationResult::synthetic(correct, sv(values))
    }

    #[test]
    fn geomean_perfect_square() {
        assert_eq!(geomean(&sv(&[4.0, 9.0])).unwrap(), 6.0);
    }

    #[test]
    fn geomean_zero_annihilates() {
        assert_eq!(geomean(&sv(&[250.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn geomean_product_root() {
        let g = geomean(&sv(&[250.0, 1000.0 / 6.0])).unwrap();
        let expected = (250.0f64 * (1000.0 / 6.0)).sqrt();
        assert_eq!(g, expected);
        assert!((g - 204.124).abs() < 1e-3);
    }

    #[test]
    fn geomean_empty_is_error() {
        assert_eq!(
            geomean(&ScoreVector::new(vec![])),
            Err(LineageError::EmptyScoreVector)
        );
    }

    #[test]
    fn arithmetic_mean_switch() {
        assert_eq!(
            aggregate(&sv(&[1.0, 3.0]), Aggregation::ArithmeticMean).unwrap(),
            2.0
        );
        assert_eq!(
            aggregate(&sv(&[4.0, 9.0]), Aggregation::Geomean).unwrap(),
            6.0
        );
    }

    #[test]
    fn accept_rejects_correctness_failure_even_with_high_scores() {
        let mut lineage = seed_lineage(&[100.0, 100.0]);
        let decision = accept_candidate(
            &mut lineage,
            Candidate {
                source: String::new(),
                parent: Some(0),
                note: String::new(),
            },
            &eval_for(false, &[0.0, 0.0]),
            Aggregation::Geomean,
        );
        assert_eq!(decision, Decision::Rejected(RejectReason::CorrectnessFailure));
        assert_eq!(lineage.len(), 1);
    }

    #[test]
    fn accept_allows_exact_tie() {
        let mut lineage = seed_lineage(&[100.0, 100.0]);
        let decision = accept_candidate(
            &mut lineage,
            Candidate {
                source: "nop\n".into(),
                parent: Some(0),
                note: String::new(),
            },
            &eval_for(true, &[100.0, 100.0]),
            Aggregation::Geomean,
        );
        assert_eq!(decision, Decision::Accepted(1));
        assert_eq!(lineage.len(), 2);
    }

    #[test]
    fn accept_rejects_lower_geomean() {
        let mut lineage = seed_lineage(&[250.0, 1000.0 / 6.0]);
        let decision = accept_candidate(
            &mut lineage,
            Candidate {
                source: String::new(),
                parent: Some(0),
                note: String::new(),
            },
            &eval_for(true, &[200.0, 200.0]),
            Aggregation::Geomean,
        );
        assert_eq!(decision, Decision::Rejected(RejectReason::NoImprovement));
    }

    #[test]
    fn append_assigns_strictly_increasing_versions() {
        let mut lineage = seed_lineage(&[1.0]);
        for expected in 1..=2 {
            let id = accept_candidate(
                &mut lineage,
                Candidate {
                    source: format!("# v{expected}\n"),
                    parent: Some(expected - 1),
                    note: String::new(),
                },
                &eval_for(true, &[expected as f64]),
                Aggregation::Geomean,
            );
            assert_eq!(id, Decision::Accepted(expected));
        }
        let entry = lineage.get(2).unwrap();
        assert_eq!(entry.solution.version, 2);
        assert_eq!(entry.solution.parent, Some(1));
        assert_eq!(entry.solution.source, "# v2\n");
    }

    #[test]
    fn append_rejects_inconsistent_version() {
        let mut lineage = seed_lineage(&[1.0]);
        let err = lineage
            .append_version(
                Solution {
                    version: 5,
                    parent: Some(0),
                    source: String::new(),
                    created_at: 0,
                    note: String::new(),
                },
                sv(&[1.0]),
            )
            .unwrap_err();
        assert_eq!(err, LineageError::NonConsecutiveVersion { expected: 1, got: 5 });
    }

    #[test]
    fn running_best_is_monotone_envelope() {
        let mut lineage = seed_lineage(&[204.1]);
        lineage
            .append_version(
                Solution {
                    version: 1,
                    parent: Some(0),
                    source: String::new(),
                    created_at: 0,
                    note: String::new(),
                },
                sv(&[204.1]),
            )
            .unwrap();
        lineage
            .append_version(
                Solution {
                    version: 2,
                    parent: Some(1),
                    source: String::new(),
                    created_at: 0,
                    note: String::new(),
                },
                sv(&[500.0]),
            )
            .unwrap();
        let rb: Vec<f64> = lineage.running_best().iter().map(|(_, g)| *g).collect();
        assert_eq!(rb, vec![204.1, 204.1, 500.0]);
    }

    #[test]
    fn single_seed_running_best_is_own_geomean() {
        let lineage = seed_lineage(&[4.0, 9.0]);
        assert_eq!(lineage.running_best(), vec![(0, 6.0)]);
    }

    #[test]
    fn best_entry_ties_to_most_recent() {
        let mut lineage = seed_lineage(&[7.0]);
        lineage
            .append_version(
                Solution {
                    version: 1,
                    parent: Some(0),
                    source: "tie".into(),
                    created_at: 0,
                    note: String::new(),
                },
                sv(&[7.0]),
            )
            .unwrap();
        assert_eq!(lineage.best_entry().solution.version, 1);
    }
}
