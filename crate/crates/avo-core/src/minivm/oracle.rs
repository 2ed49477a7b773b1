//! Brute-force optimality oracle: exhaustive enumeration of small programs
//! over a restricted operand space, filtered by correctness on every
//! configuration and ranked by geomean pseudo-throughput.
//!
//! Lengths are enumerated in ascending order. Every cost-table entry is at
//! least one cycle, so a program of length `L` scores at most
//! `scale / max(L, 1)` per configuration; once the running best reaches
//! that bound, longer programs cannot win (ties go to the shorter program)
//! and enumeration stops. Candidates of one length form a flat index space
//! that is scanned with rayon when the `parallel` feature is enabled; the
//! sequential scan is always available for comparison.

use serde::Serialize;

use crate::lineage::{geomean, ScoreEntry, ScoreVector};
use crate::scoring::score_config_scaled;

use super::task::TaskSpec;
use super::{exec_program, Instruction, Program, Reg};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Hard tractability cap on enumerated program length.
pub const MAX_ORACLE_LEN: usize = 4;

/// Search-space bounds for the enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleParams {
    /// Maximum program length, at most [`MAX_ORACLE_LEN`].
    pub max_len: usize,
    /// Registers candidate instructions may touch.
    pub reg_pool: Vec<Reg>,
    /// Admissible `shl` amounts.
    pub shift_pool: Vec<u8>,
    /// Pseudo-throughput scale; must match the scorer's to compare scores.
    pub scale: f64,
}

impl OracleParams {
    pub fn with_max_len(max_len: usize) -> OracleParams {
        OracleParams {
            max_len,
            ..OracleParams::default()
        }
    }
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            max_len: 3,
            reg_pool: (0..4).map(|i| Reg::new(i).unwrap()).collect(),
            shift_pool: vec![0, 1, 2, 3],
            scale: crate::scoring::DEFAULT_SCALE,
        }
    }
}

/// The best program found, with its scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub program: Program,
    pub scores: ScoreVector,
    pub geomean: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("max_len {0} exceeds the tractability cap of {MAX_ORACLE_LEN}")]
    MaxLenTooLarge(usize),
    #[error("oracle operand pools must be non-empty")]
    EmptyPool,
}

/// Exhaustive search over programs up to `params.max_len`. Returns the
/// correct program with maximal geomean, breaking ties toward the shortest
/// program and then the lexicographically first serialization. `Ok(None)`
/// when no correct program exists within bounds.
pub fn brute_force_optimal(
    task: &TaskSpec,
    params: &OracleParams,
) -> Result<Option<OracleResult>, OracleError> {
    search(task, params, cfg!(feature = "parallel"))
}

/// Sequential variant of [`brute_force_optimal`], kept available regardless
/// of features so the two scans can be compared.
pub fn brute_force_optimal_seq(
    task: &TaskSpec,
    params: &OracleParams,
) -> Result<Option<OracleResult>, OracleError> {
    search(task, params, false)
}

#[derive(Debug, Clone)]
struct Best {
    geomean: f64,
    serialization: String,
    program: Program,
    scores: ScoreVector,
}

fn pick_best(a: Best, b: Best) -> Best {
    if b.geomean > a.geomean || (b.geomean == a.geomean && b.serialization < a.serialization) {
        b
    } else {
        a
    }
}

fn search(
    task: &TaskSpec,
    params: &OracleParams,
    parallel: bool,
) -> Result<Option<OracleResult>, OracleError> {
    if params.max_len > MAX_ORACLE_LEN {
        return Err(OracleError::MaxLenTooLarge(params.max_len));
    }
    if params.reg_pool.is_empty() || params.shift_pool.is_empty() || task.imm_pool.is_empty() {
        return Err(OracleError::EmptyPool);
    }
    let options = instruction_options(task, params);
    let mut best: Option<Best> = None;

    for len in 0..=params.max_len {
        let bound = params.scale / (len.max(1) as f64);
        if let Some(b) = &best {
            if b.geomean >= bound {
                break; // shorter ties win; longer programs cannot beat this
            }
        }
        let local = best_of_length(task, params, &options, len, parallel);
        if let Some(candidate) = local {
            best = match best {
                Some(current) if candidate.geomean <= current.geomean => Some(current),
                _ => Some(candidate),
            };
        }
    }

    Ok(best.map(|b| OracleResult {
        program: b.program,
        scores: b.scores,
        geomean: b.geomean,
    }))
}

fn best_of_length(
    task: &TaskSpec,
    params: &OracleParams,
    options: &[Instruction],
    len: usize,
    parallel: bool,
) -> Option<Best> {
    let total: u64 = (options.len() as u64)
        .checked_pow(len as u32)
        .expect("search space fits in u64 for max_len <= 4");

    #[cfg(feature = "parallel")]
    if parallel {
        return (0..total)
            .into_par_iter()
            .filter_map(|index| score_candidate(task, params, decode(index, len, options)))
            .reduce_with(pick_best);
    }
    let _ = parallel;

    (0..total)
        .filter_map(|index| score_candidate(task, params, decode(index, len, options)))
        .reduce(pick_best)
}

/// Mixed-radix decode of a candidate index into a program.
fn decode(mut index: u64, len: usize, options: &[Instruction]) -> Program {
    let radix = options.len() as u64;
    let mut instructions = Vec::with_capacity(len);
    for _ in 0..len {
        instructions.push(options[(index % radix) as usize]);
        index /= radix;
    }
    Program::new(instructions)
}

/// Correctness on every configuration, then scores; `None` for incorrect
/// candidates.
fn score_candidate(task: &TaskSpec, params: &OracleParams, program: Program) -> Option<Best> {
    let out = task.output_register.index();
    let mut entries = Vec::with_capacity(task.configs.len());
    for config in &task.configs {
        for vector in &config.test_vectors {
            if exec_program(&program, &vector.inputs)[out] != vector.expected {
                return None;
            }
        }
        let cycles: u64 = program
            .instructions
            .iter()
            .map(|i| config.cost_table.get(&i.opcode()).copied().unwrap_or(1) as u64)
            .sum();
        entries.push(ScoreEntry::new(
            config.config_id.clone(),
            score_config_scaled(params.scale, cycles as f64),
        ));
    }
    let scores = ScoreVector::new(entries);
    let g = geomean(&scores).expect("tasks have at least one configuration");
    Some(Best {
        geomean: g,
        serialization: program.to_string(),
        program,
        scores,
    })
}

/// All instructions over the restricted operand space.
fn instruction_options(task: &TaskSpec, params: &OracleParams) -> Vec<Instruction> {
    let regs = &params.reg_pool;
    let mut options = Vec::new();
    for &dst in regs {
        for &imm in &task.imm_pool {
            options.push(Instruction::Const { dst, imm });
        }
        for &src in regs {
            options.push(Instruction::Mov { dst, src });
            for &amount in &params.shift_pool {
                options.push(Instruction::Shl { dst, src, amount });
            }
            for &b in regs {
                options.push(Instruction::Add { dst, a: src, b });
                options.push(Instruction::Sub { dst, a: src, b });
                options.push(Instruction::Mul { dst, a: src, b });
            }
        }
    }
    options.push(Instruction::Nop);
    options
}
