//! Git-backed version store: one commit and one `v<N>` tag per accepted
//! version.
//!
//! Every committed version writes two files at the repository root —
//! `solution.mvm` (the program text) and `score.json` (version, parent,
//! per-config scores, geomean, timestamp, note) — and records them as a
//! single commit tagged `v<N>`. Scores live in a machine-readable file
//! rather than commit messages so they stay diffable. Loading replays the
//! tags in order and reconstructs the lineage field-for-field, which is
//! what checkpoint/resume and crash recovery rest on.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::lineage::{geomean, Lineage, ScoreEntry, ScoreVector, Solution, VersionId};

pub const SOLUTION_FILE: &str = "solution.mvm";
pub const SCORE_FILE: &str = "score.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("git {args}: {stderr}")]
    Git { args: String, stderr: String },
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a version store (no .git): {0}")]
    NotAStore(PathBuf),
    #[error("store has no v0 seed tag")]
    MissingSeed,
    #[error("corrupt score record for version {version}: {detail}")]
    CorruptScore { version: VersionId, detail: String },
    #[error("store is inconsistent: {0}")]
    Inconsistent(String),
}

/// The machine-readable score record persisted next to the solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub version: VersionId,
    pub parent: Option<VersionId>,
    pub note: String,
    pub timestamp_ms: i64,
    pub geomean: f64,
    pub scores: Vec<ScoreEntry>,
}

#[derive(Debug, Clone)]
pub struct VersionStore {
    root: PathBuf,
}

impl VersionStore {
    /// Initialize (or reopen) a store at `path`. A fresh store gets a git
    /// repository with a single empty init commit, so version commits are
    /// countable beyond it.
    pub fn init(path: impl AsRef<Path>) -> Result<VersionStore, StoreError> {
        let root = path.as_ref().to_path_buf();
        std::fs::create_dir_all(&root)?;
        let store = VersionStore { root };
        if !store.root.join(".git").exists() {
            store.git(&["init", "-q"])?;
            store.git(&["commit", "-q", "--allow-empty", "-m", "initialize version store"])?;
        }
        Ok(store)
    }

    /// Open an existing store.
    pub fn open(path: impl AsRef<Path>) -> Result<VersionStore, StoreError> {
        let root = path.as_ref().to_path_buf();
        if !root.join(".git").exists() {
            return Err(StoreError::NotAStore(root));
        }
        Ok(VersionStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn git(&self, args: &[&str]) -> Result<String, StoreError> {
        Ok(self.git_raw(args)?.trim().to_string())
    }

    /// Raw stdout, no trimming — `git show` must reproduce file contents
    /// byte for byte.
    fn git_raw(&self, args: &[&str]) -> Result<String, StoreError> {
        // Identity and signing are pinned per invocation so the store works
        // in environments without global git configuration.
        let output = Command::new("git")
            .arg("-C")
            .arg(&self.root)
            .args([
                "-c",
                "user.name=avo-driver",
                "-c",
                "user.email=avo@localhost",
                "-c",
                "commit.gpgsign=false",
                "-c",
                "tag.gpgsign=false",
            ])
            .args(args)
            .output()?;
        if !output.status.success() {
            return Err(StoreError::Git {
                args: args.join(" "),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        Ok(String::from_utf8_lossy(&output.stdout).into_owned())
    }

    /// Write `solution.mvm` and `score.json`, commit, and tag `v<N>`.
    /// Returns the commit id.
    pub fn persist_version(
        &self,
        solution: &Solution,
        scores: &ScoreVector,
    ) -> Result<String, StoreError> {
        let record = ScoreRecord {
            version: solution.version,
            parent: solution.parent,
            note: solution.note.clone(),
            timestamp_ms: solution.created_at,
            geomean: geomean(scores).unwrap_or(0.0),
            scores: scores.entries.clone(),
        };
        std::fs::write(self.root.join(SOLUTION_FILE), &solution.source)?;
        std::fs::write(
            self.root.join(SCORE_FILE),
            serde_json::to_string_pretty(&record).expect("score records serialize"),
        )?;
        self.git(&["add", "-A"])?;
        let message = format!("v{}: {}", solution.version, solution.note);
        self.git(&["commit", "-q", "-m", &message])?;
        self.git(&["tag", &format!("v{}", solution.version)])?;
        self.git(&["rev-parse", "HEAD"])
    }

    /// All `v<N>` tags, ascending.
    pub fn version_tags(&self) -> Result<Vec<VersionId>, StoreError> {
        let out = self.git(&["tag", "--list", "v*"])?;
        let mut versions: Vec<VersionId> = out
            .lines()
            .filter_map(|l| l.trim().strip_prefix('v'))
            .filter_map(|n| n.parse().ok())
            .collect();
        versions.sort_unstable();
        Ok(versions)
    }

    /// Commits on HEAD beyond the init commit.
    pub fn version_commit_count(&self) -> Result<u32, StoreError> {
        let out = self.git(&["rev-list", "--count", "HEAD"])?;
        let total: u32 = out
            .parse()
            .map_err(|_| StoreError::Inconsistent(format!("bad rev-list output `{out}`")))?;
        Ok(total.saturating_sub(1))
    }

    fn show(&self, tag: &str, file: &str) -> Result<String, StoreError> {
        self.git_raw(&["show", &format!("{tag}:{file}")])
    }

    /// Reconstruct the lineage from the tagged commits. The result equals
    /// the persisted in-memory lineage field-for-field.
    pub fn load_lineage(&self) -> Result<Lineage, StoreError> {
        let versions = self.version_tags()?;
        if versions.first() != Some(&0) {
            return Err(StoreError::MissingSeed);
        }
        let mut lineage: Option<Lineage> = None;
        for version in versions {
            let tag = format!("v{version}");
            let source = self.show(&tag, SOLUTION_FILE)?;
            let score_text = self.show(&tag, SCORE_FILE)?;
            let record: ScoreRecord =
                serde_json::from_str(&score_text).map_err(|e| StoreError::CorruptScore {
                    version,
                    detail: e.to_string(),
                })?;
            if record.version != version {
                return Err(StoreError::CorruptScore {
                    version,
                    detail: format!("record claims version {}", record.version),
                });
            }
            let solution = Solution {
                version,
                parent: record.parent,
                source,
                created_at: record.timestamp_ms,
                note: record.note,
            };
            let scores = ScoreVector::new(record.scores);
            lineage = Some(match lineage {
                None => Lineage::new(solution, scores)
                    .map_err(|e| StoreError::Inconsistent(e.to_string()))?,
                Some(mut l) => {
                    l.append_version(solution, scores)
                        .map_err(|e| StoreError::Inconsistent(e.to_string()))?;
                    l
                }
            });
        }
        lineage.ok_or(StoreError::MissingSeed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineage::now_millis;

    fn solution(version: VersionId, source: &str) -> Solution {
        Solution {
            version,
            parent: version.checked_sub(1),
            source: source.to_string(),
            created_at: now_millis(),
            note: format!("note {version}"),
        }
    }

    fn scores(value: f64) -> ScoreVector {
        ScoreVector::new(vec![
            ScoreEntry::new("A", value),
            ScoreEntry::new("B", value / 2.0),
        ])
    }

    #[test]
    fn persist_creates_tag_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let store = VersionStore::init(dir.path()).unwrap();
        store
            .persist_version(&solution(0, "nop\n"), &scores(100.0))
            .unwrap();
        store
            .persist_version(&solution(1, "const r1, 3\nmul r0, r0, r1\n"), &scores(200.0))
            .unwrap();
        assert_eq!(store.version_tags().unwrap(), vec![0, 1]);
        assert!(dir.path().join(SOLUTION_FILE).exists());
        assert!(dir.path().join(SCORE_FILE).exists());
        assert_eq!(store.version_commit_count().unwrap(), 2);
    }

    #[test]
    fn load_round_trips_field_for_field() {
        let dir = tempfile::tempdir().unwrap();
        let store = VersionStore::init(dir.path()).unwrap();
        let s0 = solution(0, "const r2, 9\nconst r1, 3\nmul r0, r0, r1\n");
        let s1 = solution(1, "const r1, 3\nmul r0, r0, r1\n");
        store.persist_version(&s0, &scores(169.0)).unwrap();
        store.persist_version(&s1, &scores(204.0)).unwrap();
        let lineage = store.load_lineage().unwrap();
        assert_eq!(lineage.len(), 2);
        assert_eq!(lineage.seed().solution, s0);
        assert_eq!(lineage.get(1).unwrap().solution, s1);
        assert_eq!(lineage.get(1).unwrap().scores, scores(204.0));
    }

    #[test]
    fn empty_store_reports_missing_seed() {
        let dir = tempfile::tempdir().unwrap();
        let store = VersionStore::init(dir.path()).unwrap();
        assert!(matches!(store.load_lineage(), Err(StoreError::MissingSeed)));
    }

    #[test]
    fn corrupt_score_names_offending_version() {
        let dir = tempfile::tempdir().unwrap();
        let store = VersionStore::init(dir.path()).unwrap();
        store.persist_version(&solution(0, "nop\n"), &scores(1.0)).unwrap();
        // Corrupt the score file and commit it as v1.
        std::fs::write(dir.path().join(SOLUTION_FILE), "nop\n").unwrap();
        std::fs::write(dir.path().join(SCORE_FILE), "{not json").unwrap();
        store.git(&["add", "-A"]).unwrap();
        store.git(&["commit", "-q", "-m", "v1: corrupt"]).unwrap();
        store.git(&["tag", "v1"]).unwrap();
        match store.load_lineage() {
            Err(StoreError::CorruptScore { version: 1, .. }) => {}
            other => panic!("expected corrupt score for v1, got {other:?}"),
        }
    }

    #[test]
    fn open_rejects_non_store() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            VersionStore::open(dir.path()),
            Err(StoreError::NotAStore(_))
        ));
    }
}
