//! Task specifications: reference program, benchmark configurations, and
//! the operand pool for the brute-force oracle.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scoring::{check_correctness, BenchmarkConfig, TestVector};

use super::{Opcode, Program, Reg, MAX_PROGRAM_LEN};

/// One optimization task. The reference program defines the semantics the
/// candidates must reproduce on the output register `r0`; the
/// configurations define correctness vectors and cost tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub reference: Program,
    pub configs: Vec<BenchmarkConfig>,
    #[serde(default = "TaskSpec::default_output_register")]
    pub output_register: Reg,
    /// Immediates the brute-force oracle may use in `const` instructions.
    pub imm_pool: Vec<i64>,
}

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("task has no benchmark configurations")]
    NoConfigs,
    #[error("duplicate config id `{0}`")]
    DuplicateConfig(String),
    #[error("config `{0}` has no test vectors")]
    NoVectors(String),
    #[error("config `{config}` cost table: opcode `{opcode}` missing or zero")]
    BadCostEntry { config: String, opcode: Opcode },
    #[error("output register must be r0, got {0}")]
    OutputNotR0(Reg),
    #[error("reference program exceeds {MAX_PROGRAM_LEN} instructions")]
    ReferenceTooLong,
    #[error("reference fails its own check on config `{config}`: inputs {inputs:?} got {got}, expected {expected}")]
    ReferenceIncorrect {
        config: String,
        inputs: Vec<(Reg, i64)>,
        got: i64,
        expected: i64,
    },
    #[error("failed to read task file: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse task file: {0}")]
    Toml(#[from] toml::de::Error),
}

impl TaskSpec {
    fn default_output_register() -> Reg {
        Reg::R0
    }

    pub fn from_toml_str(text: &str) -> Result<TaskSpec, TaskError> {
        let task: TaskSpec = toml::from_str(text)?;
        task.validate()?;
        Ok(task)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<TaskSpec, TaskError> {
        TaskSpec::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("task specs serialize cleanly")
    }

    /// Structural checks plus the self-check: the reference must pass its
    /// own correctness vectors on every configuration.
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.configs.is_empty() {
            return Err(TaskError::NoConfigs);
        }
        if self.output_register != Reg::R0 {
            return Err(TaskError::OutputNotR0(self.output_register));
        }
        if self.reference.len() > MAX_PROGRAM_LEN {
            return Err(TaskError::ReferenceTooLong);
        }
        let mut seen = std::collections::BTreeSet::new();
        for config in &self.configs {
            if !seen.insert(&config.config_id) {
                return Err(TaskError::DuplicateConfig(config.config_id.clone()));
            }
            if config.test_vectors.is_empty() {
                return Err(TaskError::NoVectors(config.config_id.clone()));
            }
            for opcode in Opcode::ALL {
                if config.cost_table.get(&opcode).copied().unwrap_or(0) == 0 {
                    return Err(TaskError::BadCostEntry {
                        config: config.config_id.clone(),
                        opcode,
                    });
                }
            }
            if let Err(mismatch) = check_correctness(&self.reference, self, config) {
                return Err(TaskError::ReferenceIncorrect {
                    config: config.config_id.clone(),
                    inputs: mismatch.inputs.iter().map(|(r, v)| (*r, *v)).collect(),
                    got: mismatch.got,
                    expected: mismatch.expected,
                });
            }
        }
        Ok(())
    }

    pub fn config_ids(&self) -> impl Iterator<Item = &str> {
        self.configs.iter().map(|c| c.config_id.as_str())
    }
}

/// The fixture task set shipped with the framework. Two cost tables (mul
/// costs 3 cycles under `A`, 5 under `B`, everything else 1) make the score
/// vector genuinely two-dimensional.
pub mod fixtures {
    use super::*;

    fn cost_table(mul: u32) -> BTreeMap<Opcode, u32> {
        Opcode::ALL
            .into_iter()
            .map(|op| (op, if op == Opcode::Mul { mul } else { 1 }))
            .collect()
    }

    fn vectors(cases: &[(i64, i64)]) -> Vec<TestVector> {
        cases
            .iter()
            .map(|(input, expected)| TestVector {
                inputs: [(Reg::R0, *input)].into_iter().collect(),
                expected: *expected,
            })
            .collect()
    }

    fn two_configs(cases: &[(i64, i64)]) -> Vec<BenchmarkConfig> {
        vec![
            BenchmarkConfig {
                config_id: "A".to_string(),
                test_vectors: vectors(cases),
                cost_table: cost_table(3),
            },
            BenchmarkConfig {
                config_id: "B".to_string(),
                test_vectors: vectors(cases),
                cost_table: cost_table(5),
            },
        ]
    }

    fn times3_cases() -> Vec<(i64, i64)> {
        vec![
            (0, 0),
            (1, 3),
            (2, 6),
            (7, 21),
            (-5, -15),
            // 3 * 2^62 wraps mod 2^64.
            (1 << 62, -4611686018427387904),
        ]
    }

    /// Multiply the input by three.
    pub fn times3() -> TaskSpec {
        TaskSpec {
            name: "times3".to_string(),
            reference: "const r1, 3\nmul r0, r0, r1".parse().unwrap(),
            configs: two_configs(&times3_cases()),
            output_register: Reg::R0,
            imm_pool: vec![1, 2, 3],
        }
    }

    /// Square the input; the reference is already optimal.
    pub fn square() -> TaskSpec {
        TaskSpec {
            name: "square".to_string(),
            reference: "mul r0, r0, r0".parse().unwrap(),
            configs: two_configs(&[
                (0, 0),
                (1, 1),
                (2, 4),
                (3, 9),
                (-4, 16),
                // (2^32)^2 wraps to zero.
                (1 << 32, 0),
            ]),
            output_register: Reg::R0,
            imm_pool: vec![1, 2, 3],
        }
    }

    /// Pass the input through unchanged; the empty program is optimal.
    pub fn identity() -> TaskSpec {
        TaskSpec {
            name: "identity".to_string(),
            reference: "nop".parse().unwrap(),
            configs: two_configs(&[(0, 0), (5, 5), (-9, -9), (123456789, 123456789)]),
            output_register: Reg::R0,
            imm_pool: vec![1, 2, 3],
        }
    }

    /// times3 with a dead constant prepended: reaching the optimum takes
    /// two rewrites (dead-code elimination, then strength reduction).
    pub fn deadcode_times3() -> TaskSpec {
        TaskSpec {
            name: "deadcode-times3".to_string(),
            reference: "const r2, 9\nconst r1, 3\nmul r0, r0, r1".parse().unwrap(),
            configs: two_configs(&times3_cases()),
            output_register: Reg::R0,
            imm_pool: vec![1, 2, 3],
        }
    }

    pub fn all() -> Vec<TaskSpec> {
        vec![times3(), square(), identity(), deadcode_times3()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_fixtures_validate() {
        for task in fixtures::all() {
            task.validate().unwrap_or_else(|e| panic!("{}: {e}", task.name));
        }
    }

    #[test]
    fn toml_round_trip() {
        for task in fixtures::all() {
            let text = task.to_toml_string();
            let back = TaskSpec::from_toml_str(&text).unwrap();
            assert_eq!(task, back, "{} did not round-trip", task.name);
        }
    }

    #[test]
    fn incorrect_reference_is_rejected() {
        let mut task = fixtures::times3();
        task.reference = "shl r0, r0, 1".parse().unwrap();
        assert!(matches!(
            task.validate(),
            Err(TaskError::ReferenceIncorrect { .. })
        ));
    }

    #[test]
    fn zero_cost_entry_is_rejected() {
        let mut task = fixtures::times3();
        task.configs[0].cost_table.insert(Opcode::Nop, 0);
        assert!(matches!(task.validate(), Err(TaskError::BadCostEntry { .. })));
    }

    #[test]
    fn duplicate_config_ids_rejected() {
        let mut task = fixtures::times3();
        task.configs[1].config_id = "A".to_string();
        assert!(matches!(task.validate(), Err(TaskError::DuplicateConfig(_))));
    }
}
