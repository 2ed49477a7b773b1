//! The scoring function: correctness gating plus per-configuration cost
//! measurement.
//!
//! A candidate is evaluated on every benchmark configuration of the task.
//! Any correctness failure (including a parse failure or a timeout) forces
//! the whole score vector to zero regardless of cost. Cost maps to a
//! higher-is-better pseudo-throughput via `scale / max(cycles, 1)`.
//!
//! Evaluation is deterministic unless noise mode is enabled, in which case
//! each configuration's cost is re-measured `repeats` times under seeded
//! multiplicative Gaussian noise and the sample mean is scored. Noise mode
//! exists to stress-test acceptance logic, not to model real hardware.
//!
//! All candidate faults are encoded in the [`EvaluationResult`] rather than
//! surfaced as errors, so a variation operator can observe and diagnose
//! them. Evaluation runs in-process (the domain is a pure interpreter), but
//! the harness contract still enforces a wall-clock timeout per evaluation
//! and treats an overrun as a correctness failure, so that future domains
//! backed by child processes fit the same contract.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lineage::{ScoreEntry, ScoreVector};
use crate::minivm::task::TaskSpec;
use crate::minivm::{exec_program, parse_program, Opcode, Program, RegAssignment};

/// Default pseudo-throughput scale: score = SCALE / cycles.
pub const DEFAULT_SCALE: f64 = 1000.0;

/// One benchmark configuration: correctness vectors plus a cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub config_id: String,
    pub test_vectors: Vec<TestVector>,
    /// Per-opcode cycle cost; every entry is at least 1.
    pub cost_table: BTreeMap<Opcode, u32>,
}

/// Inputs applied to the register file and the expected value of the output
/// register.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestVector {
    pub inputs: RegAssignment,
    pub expected: i64,
}

/// First observed correctness failure, with enough detail for a variation
/// operator to diagnose it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub config_id: String,
    pub inputs: RegAssignment,
    pub got: i64,
    pub expected: i64,
}

/// Per-configuration evaluation detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEvaluation {
    pub config_id: String,
    pub correct: bool,
    /// Pre-noise true cost in cycles.
    pub cycles: u64,
    /// `(mean, std)` over repeats when noise mode is active.
    pub mean_std: Option<(f64, f64)>,
}

/// Complete result of evaluating one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    /// Conjunction of the per-configuration flags.
    pub correct: bool,
    pub per_config: Vec<ConfigEvaluation>,
    /// All zeros unless `correct`.
    pub scores: ScoreVector,
    pub mismatch: Option<Mismatch>,
    pub compile_error: Option<String>,
    pub timed_out: bool,
}

impl EvaluationResult {
    /// Bare result for tests and synthetic acceptance checks.
    pub fn synthetic(correct: bool, scores: ScoreVector) -> EvaluationResult {
        EvaluationResult {
            correct,
            per_config: scores
                .entries
                .iter()
                .map(|e| ConfigEvaluation {
                    config_id: e.config_id.clone(),
                    correct,
                    cycles: 0,
                    mean_std: None,
                })
                .collect(),
            scores,
            mismatch: None,
            compile_error: None,
            timed_out: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error("opcode `{0}` missing from cost table")]
    MissingOpcode(Opcode),
    #[error("task invalid: {0}")]
    InvalidTask(String),
}

/// Sum of per-instruction costs from the table. Straight-line, so cost is
/// static. A missing opcode is a task misconfiguration.
pub fn measure_cost(program: &Program, cost_table: &BTreeMap<Opcode, u32>) -> Result<u64, ScoringError> {
    program
        .instructions
        .iter()
        .map(|instr| {
            cost_table
                .get(&instr.opcode())
                .map(|c| *c as u64)
                .ok_or(ScoringError::MissingOpcode(instr.opcode()))
        })
        .sum()
}

/// Repeat-based measurement: each repeat draws
/// `cycles' = true_cycles * (1 + g)` with `g ~ Normal(0, sigma)`, clamped to
/// at least one cycle. Returns the sample mean and (population) standard
/// deviation. With `sigma = 0` the draws reproduce the deterministic cost
/// exactly and the deviation is zero.
pub fn measure_with_repeats(
    program: &Program,
    cost_table: &BTreeMap<Opcode, u32>,
    repeats: u32,
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<(f64, f64), ScoringError> {
    assert!(repeats >= 1, "repeats must be positive");
    let true_cycles = measure_cost(program, cost_table)? as f64;
    if noise_sigma == 0.0 {
        return Ok((true_cycles, 0.0));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(rng_seed);
    let normal = Normal::new(0.0, noise_sigma).expect("sigma is non-negative");
    let draws: Vec<f64> = (0..repeats)
        .map(|_| (true_cycles * (1.0 + normal.sample(&mut rng))).max(1.0))
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let variance = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64;
    Ok((mean, variance.sqrt()))
}

/// Map an effective cycle count to pseudo-throughput with the default
/// scale. Cycle counts below one clamp to one (the empty program is legal).
pub fn score_config(cycles_effective: f64) -> f64 {
    score_config_scaled(DEFAULT_SCALE, cycles_effective)
}

pub fn score_config_scaled(scale: f64, cycles_effective: f64) -> f64 {
    scale / cycles_effective.max(1.0)
}

/// Run the program on every test vector of the configuration; the first
/// mismatch is reported with its inputs and both values.
pub fn check_correctness(
    program: &Program,
    task: &TaskSpec,
    config: &BenchmarkConfig,
) -> Result<(), Box<Mismatch>> {
    let out = task.output_register;
    for vector in &config.test_vectors {
        let regs = exec_program(program, &vector.inputs);
        let got = regs[out.index()];
        if got != vector.expected {
            return Err(Box::new(Mismatch {
                config_id: config.config_id.clone(),
                inputs: vector.inputs.clone(),
                got,
                expected: vector.expected,
            }));
        }
    }
    Ok(())
}

/// Harness knobs; defaults follow the deterministic protocol (no noise,
/// ten repeats when noise is enabled, five-second timeout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSettings {
    pub scale: f64,
    pub noise_sigma: f64,
    pub repeats: u32,
    pub noise_seed: u64,
    pub timeout: Duration,
    /// Reserved: warm-up rounds have no observable effect in a
    /// deterministic domain, but the key exists so non-toy domains can use
    /// the same configuration surface.
    pub warmup_rounds: u32,
}

impl Default for ScorerSettings {
    fn default() -> Self {
        ScorerSettings {
            scale: DEFAULT_SCALE,
            noise_sigma: 0.0,
            repeats: 10,
            noise_seed: 0,
            timeout: Duration::from_secs(5),
            warmup_rounds: 0,
        }
    }
}

/// The scoring harness for one task. `evaluate` is a pure function of the
/// candidate source (noise draws derive from the configured seed and the
/// candidate content), so a single scorer is safe to share across workers.
/// The evaluation counter only observes how often it was called.
#[derive(Debug)]
pub struct Scorer {
    task: TaskSpec,
    settings: ScorerSettings,
    evaluations: AtomicU64,
}

impl Scorer {
    pub fn new(task: TaskSpec, settings: ScorerSettings) -> Result<Scorer, ScoringError> {
        task.validate()
            .map_err(|e| ScoringError::InvalidTask(e.to_string()))?;
        Ok(Scorer {
            task,
            settings,
            evaluations: AtomicU64::new(0),
        })
    }

    pub fn with_defaults(task: TaskSpec) -> Result<Scorer, ScoringError> {
        Scorer::new(task, ScorerSettings::default())
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn settings(&self) -> &ScorerSettings {
        &self.settings
    }

    /// How many times `evaluate` has run; used to assert that variation
    /// operators respect their evaluation contracts.
    pub fn evaluations_performed(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    fn zero_scores(&self) -> ScoreVector {
        ScoreVector::zeroed(self.task.configs.iter().map(|c| c.config_id.as_str()))
    }

    /// Evaluate a candidate: parse, gate on correctness per configuration,
    /// then measure cost. Candidate faults (parse errors, mismatches,
    /// timeouts) are encoded in the result, never raised.
    pub fn evaluate(&self, candidate_source: &str) -> EvaluationResult {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        let start = Instant::now();

        let program = match parse_program(candidate_source) {
            Ok(p) => p,
            Err(e) => {
                return EvaluationResult {
                    correct: false,
                    per_config: self
                        .task
                        .configs
                        .iter()
                        .map(|c| ConfigEvaluation {
                            config_id: c.config_id.clone(),
                            correct: false,
                            cycles: 0,
                            mean_std: None,
                        })
                        .collect(),
                    scores: self.zero_scores(),
                    mismatch: None,
                    compile_error: Some(e.to_string()),
                    timed_out: false,
                };
            }
        };

        let mut per_config = Vec::with_capacity(self.task.configs.len());
        let mut entries = Vec::with_capacity(self.task.configs.len());
        let mut first_mismatch: Option<Mismatch> = None;
        let mut all_correct = true;

        for config in &self.task.configs {
            let correct = match check_correctness(&program, &self.task, config) {
                Ok(()) => true,
                Err(mismatch) => {
                    if first_mismatch.is_none() {
                        first_mismatch = Some(*mismatch);
                    }
                    all_correct = false;
                    false
                }
            };
            let cycles = measure_cost(&program, &config.cost_table)
                .expect("cost tables are validated complete at scorer construction");
            let (effective, mean_std) = if self.settings.noise_sigma > 0.0 {
                let seed = self.noise_seed_for(&config.config_id, candidate_source);
                let (mean, std) = measure_with_repeats(
                    &program,
                    &config.cost_table,
                    self.settings.repeats,
                    self.settings.noise_sigma,
                    seed,
                )
                .expect("cost table validated");
                (mean, Some((mean, std)))
            } else {
                (cycles as f64, None)
            };
            per_config.push(ConfigEvaluation {
                config_id: config.config_id.clone(),
                correct,
                cycles,
                mean_std,
            });
            entries.push(ScoreEntry::new(
                config.config_id.clone(),
                score_config_scaled(self.settings.scale, effective),
            ));
        }

        if start.elapsed() > self.settings.timeout {
            return EvaluationResult {
                correct: false,
                per_config,
                scores: self.zero_scores(),
                mismatch: first_mismatch,
                compile_error: None,
                timed_out: true,
            };
        }

        let scores = if all_correct {
            ScoreVector::new(entries)
        } else {
            self.zero_scores()
        };
        EvaluationResult {
            correct: all_correct,
            per_config,
            scores,
            mismatch: first_mismatch,
            compile_error: None,
            timed_out: false,
        }
    }

    /// Derive a stable per-(configuration, candidate) noise seed so that
    /// evaluation stays a pure function even in noise mode.
    fn noise_seed_for(&self, config_id: &str, source: &str) -> u64 {
        let mut hasher = Sha256::new();
        hasher.update(self.settings.noise_seed.to_le_bytes());
        hasher.update(config_id.as_bytes());
        hasher.update(source.as_bytes());
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineage::geomean;
    use crate::minivm::task::fixtures;

    #[test]
    fn reference_times3_scores() {
        let scorer = Scorer::with_defaults(fixtures::times3()).unwrap();
        let result = scorer.evaluate("const r1, 3\nmul r0, r0, r1\n");
        assert!(result.correct);
        assert_eq!(result.scores.get("A"), Some(250.0));
        assert_eq!(result.scores.get("B"), Some(1000.0 / 6.0));
        assert_eq!(result.per_config[0].cycles, 4);
    }

    #[test]
    fn wrong_candidate_gets_zero_vector_with_mismatch_detail() {
        let scorer = Scorer::with_defaults(fixtures::times3()).unwrap();
        let result = scorer.evaluate("shl r0, r0, 1\n");
        assert!(!result.correct);
        assert!(result.scores.is_all_zero());
        let mismatch = result.mismatch.unwrap();
        assert_eq!(mismatch.got, 2);
        assert_eq!(mismatch.expected, 3);
    }

    #[test]
    fn optimized_program_scores_500_under_both_tables() {
        let scorer = Scorer::with_defaults(fixtures::times3()).unwrap();
        let result = scorer.evaluate("shl r1, r0, 1\nadd r0, r1, r0\n");
        assert!(result.correct);
        assert_eq!(result.scores.get("A"), Some(500.0));
        assert_eq!(result.scores.get("B"), Some(500.0));
        assert_eq!(geomean(&result.scores).unwrap(), 500.0);
    }

    #[test]
    fn parse_failure_is_encoded_not_raised() {
        let scorer = Scorer::with_defaults(fixtures::times3()).unwrap();
        let result = scorer.evaluate("frob r0\n");
        assert!(!result.correct);
        assert!(result.compile_error.unwrap().contains("unknown opcode"));
        assert!(result.scores.is_all_zero());
    }

    #[test]
    fn empty_program_passes_identity_and_clamps_score() {
        let scorer = Scorer::with_defaults(fixtures::identity()).unwrap();
        let result = scorer.evaluate("");
        assert!(result.correct);
        assert_eq!(result.per_config[0].cycles, 0);
        assert!(result.scores.values().all(|v| v == 1000.0));
    }

    #[test]
    fn check_correctness_program_against_itself_passes() {
        let task = fixtures::times3();
        for config in &task.configs {
            check_correctness(&task.reference, &task, config).unwrap();
        }
    }

    #[test]
    fn check_correctness_identity_program_fails_times3() {
        let task = fixtures::times3();
        let err = check_correctness(&Program::empty(), &task, &task.configs[0]).unwrap_err();
        assert_eq!(err.got, err.inputs[&crate::minivm::Reg::R0]);
    }

    #[test]
    fn measure_cost_by_table_lookup() {
        let task = fixtures::times3();
        let cost = measure_cost(&task.reference, &task.configs[0].cost_table).unwrap();
        assert_eq!(cost, 4);
        assert_eq!(measure_cost(&Program::empty(), &task.configs[0].cost_table).unwrap(), 0);
    }

    #[test]
    fn measure_cost_missing_opcode_errors() {
        let mut table = fixtures::times3().configs[0].cost_table.clone();
        table.remove(&Opcode::Mul);
        let err = measure_cost(&fixtures::times3().reference, &table).unwrap_err();
        assert_eq!(err, ScoringError::MissingOpcode(Opcode::Mul));
    }

    #[test]
    fn cost_additivity() {
        let table = fixtures::times3().configs[0].cost_table.clone();
        let p = fixtures::times3().reference;
        let q: Program = "shl r2, r1, 1\nnop".parse().unwrap();
        let mut concat = p.clone();
        concat.instructions.extend(q.instructions.iter().copied());
        assert_eq!(
            measure_cost(&concat, &table).unwrap(),
            measure_cost(&p, &table).unwrap() + measure_cost(&q, &table).unwrap()
        );
    }

    #[test]
    fn repeats_without_noise_reproduce_exact_cost() {
        let task = fixtures::times3();
        let (mean, std) =
            measure_with_repeats(&task.reference, &task.configs[0].cost_table, 10, 0.0, 7)
                .unwrap();
        assert_eq!(mean, 4.0);
        assert_eq!(std, 0.0);
    }

    #[test]
    fn repeats_are_seed_deterministic() {
        let task = fixtures::times3();
        let table = &task.configs[0].cost_table;
        let a = measure_with_repeats(&task.reference, table, 10, 0.1, 42).unwrap();
        let b = measure_with_repeats(&task.reference, table, 10, 0.1, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.1 > 0.0);
    }

    #[test]
    fn single_repeat_has_zero_std() {
        let task = fixtures::times3();
        let (_, std) =
            measure_with_repeats(&task.reference, &task.configs[0].cost_table, 1, 0.25, 9)
                .unwrap();
        assert_eq!(std, 0.0);
    }

    #[test]
    fn tiny_sigma_mean_approaches_true_cycles() {
        let task = fixtures::times3();
        let (mean, _) =
            measure_with_repeats(&task.reference, &task.configs[0].cost_table, 10, 1e-9, 3)
                .unwrap();
        assert!((mean - 4.0).abs() / 4.0 < 1e-6);
    }

    #[test]
    fn score_config_values() {
        assert_eq!(score_config(4.0), 250.0);
        assert_eq!(score_config(1000.0), 1.0);
        assert_eq!(score_config(0.0), 1000.0);
    }

    #[test]
    fn score_is_antitone_in_cycles() {
        let mut last = f64::INFINITY;
        for cycles in 1..200u32 {
            let s = score_config(cycles as f64);
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn evaluate_is_deterministic_without_noise() {
        let scorer = Scorer::with_defaults(fixtures::times3()).unwrap();
        let a = scorer.evaluate("const r1, 3\nmul r0, r0, r1\n");
        let b = scorer.evaluate("const r1, 3\nmul r0, r0, r1\n");
        assert_eq!(a, b);
        assert_eq!(scorer.evaluations_performed(), 2);
    }

    #[test]
    fn evaluate_in_noise_mode_is_still_pure() {
        let task = fixtures::times3();
        let settings = ScorerSettings {
            noise_sigma: 0.05,
            noise_seed: 11,
            ..ScorerSettings::default()
        };
        let scorer = Scorer::new(task, settings).unwrap();
        let a = scorer.evaluate("const r1, 3\nmul r0, r0, r1\n");
        let b = scorer.evaluate("const r1, 3\nmul r0, r0, r1\n");
        assert_eq!(a, b);
        assert!(a.per_config[0].mean_std.is_some());
    }

    #[test]
    fn zero_timeout_forces_correctness_failure() {
        let settings = ScorerSettings {
            timeout: Duration::ZERO,
            ..ScorerSettings::default()
        };
        let scorer = Scorer::new(fixtures::times3(), settings).unwrap();
        let result = scorer.evaluate("const r1, 3\nmul r0, r0, r1\n");
        assert!(!result.correct);
        assert!(result.timed_out);
        assert!(result.scores.is_all_zero());
    }
}
