//! The optimization domain: a straight-line register VM.
//!
//! Programs are flat lists of instructions over eight 64-bit registers with
//! two's-complement wrapping arithmetic and no control flow. Register `r0`
//! doubles as the conventional output register. The absence of branches
//! keeps per-program cost static under any cost table and makes exhaustive
//! enumeration feasible for the [`oracle`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub mod oracle;
pub mod rewrite;
pub mod task;

pub use oracle::{brute_force_optimal, OracleParams, OracleResult};
pub use rewrite::{apply_rewrite, apply_rewrite_by_id, RewriteRule};
pub use task::TaskSpec;

/// Number of architectural registers (`r0` .. `r7`).
pub const REGISTER_COUNT: u8 = 8;

/// Hard cap on program length.
pub const MAX_PROGRAM_LEN: usize = 256;

/// A register `r0`..`r7`. `r0` is the output register by convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(u8);

impl Reg {
    pub const R0: Reg = Reg(0);

    pub fn new(index: u8) -> Option<Reg> {
        (index < REGISTER_COUNT).then_some(Reg(index))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// All registers in index order.
    pub fn all() -> impl Iterator<Item = Reg> {
        (0..REGISTER_COUNT).map(Reg)
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl FromStr for Reg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let rest = s
            .strip_prefix('r')
            .ok_or_else(|| format!("expected register, got `{s}`"))?;
        let index: u8 = rest
            .parse()
            .map_err(|_| format!("expected register, got `{s}`"))?;
        Reg::new(index).ok_or_else(|| format!("register out of range: `{s}`"))
    }
}

impl Serialize for Reg {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Reg {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Instruction opcode, used as the key of cost tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Opcode {
    Const,
    Mov,
    Add,
    Sub,
    Mul,
    Shl,
    Nop,
}

impl Opcode {
    pub const ALL: [Opcode; 7] = [
        Opcode::Const,
        Opcode::Mov,
        Opcode::Add,
        Opcode::Sub,
        Opcode::Mul,
        Opcode::Shl,
        Opcode::Nop,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Const => "const",
            Opcode::Mov => "mov",
            Opcode::Add => "add",
            Opcode::Sub => "sub",
            Opcode::Mul => "mul",
            Opcode::Shl => "shl",
            Opcode::Nop => "nop",
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

/// One straight-line instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Instruction {
    /// `const dst, imm` — load a 64-bit signed immediate.
    Const { dst: Reg, imm: i64 },
    /// `mov dst, src` — copy a register.
    Mov { dst: Reg, src: Reg },
    /// `add dst, a, b` — wrapping addition.
    Add { dst: Reg, a: Reg, b: Reg },
    /// `sub dst, a, b` — wrapping subtraction (`a - b`).
    Sub { dst: Reg, a: Reg, b: Reg },
    /// `mul dst, a, b` — wrapping multiplication.
    Mul { dst: Reg, a: Reg, b: Reg },
    /// `shl dst, src, amount` — logical shift left, amount in `[0, 63]`.
    Shl { dst: Reg, src: Reg, amount: u8 },
    /// `nop` — does nothing (but still costs cycles).
    Nop,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Const { .. } => Opcode::Const,
            Instruction::Mov { .. } => Opcode::Mov,
            Instruction::Add { .. } => Opcode::Add,
            Instruction::Sub { .. } => Opcode::Sub,
            Instruction::Mul { .. } => Opcode::Mul,
            Instruction::Shl { .. } => Opcode::Shl,
            Instruction::Nop => Opcode::Nop,
        }
    }

    /// Destination register, if the instruction writes one.
    pub fn dst(&self) -> Option<Reg> {
        match *self {
            Instruction::Const { dst, .. }
            | Instruction::Mov { dst, .. }
            | Instruction::Add { dst, .. }
            | Instruction::Sub { dst, .. }
            | Instruction::Mul { dst, .. }
            | Instruction::Shl { dst, .. } => Some(dst),
            Instruction::Nop => None,
        }
    }

    /// Source registers read by the instruction.
    pub fn sources(&self) -> Vec<Reg> {
        match *self {
            Instruction::Const { .. } | Instruction::Nop => vec![],
            Instruction::Mov { src, .. } | Instruction::Shl { src, .. } => vec![src],
            Instruction::Add { a, b, .. }
            | Instruction::Sub { a, b, .. }
            | Instruction::Mul { a, b, .. } => vec![a, b],
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instruction::Const { dst, imm } => write!(f, "const {dst}, {imm}"),
            Instruction::Mov { dst, src } => write!(f, "mov {dst}, {src}"),
            Instruction::Add { dst, a, b } => write!(f, "add {dst}, {a}, {b}"),
            Instruction::Sub { dst, a, b } => write!(f, "sub {dst}, {a}, {b}"),
            Instruction::Mul { dst, a, b } => write!(f, "mul {dst}, {a}, {b}"),
            Instruction::Shl { dst, src, amount } => write!(f, "shl {dst}, {src}, {amount}"),
            Instruction::Nop => write!(f, "nop"),
        }
    }
}

/// An ordered list of instructions. Programs serialize to their text form.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Program {
    pub instructions: Vec<Instruction>,
}

impl Program {
    pub fn new(instructions: Vec<Instruction>) -> Program {
        Program { instructions }
    }

    pub fn empty() -> Program {
        Program::default()
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for instr in &self.instructions {
            writeln!(f, "{instr}")?;
        }
        Ok(())
    }
}

impl FromStr for Program {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_program(s)
    }
}

impl Serialize for Program {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Program {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A parse failure with the 1-based line it occurred on.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseErrorKind {
    #[error("unknown opcode `{0}`")]
    UnknownOpcode(String),
    #[error("{0}")]
    BadRegister(String),
    #[error("malformed immediate `{0}`")]
    BadImmediate(String),
    #[error("expected {expected} operands, got {got}")]
    BadOperandCount { expected: usize, got: usize },
    #[error("program exceeds {MAX_PROGRAM_LEN} instructions")]
    TooLong,
}

/// Parse program text: one instruction per non-empty line, `#` starts a
/// comment, operands separated by commas with arbitrary whitespace.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut instructions = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let instr = parse_instruction(line).map_err(|kind| ParseError { line: line_no, kind })?;
        instructions.push(instr);
        if instructions.len() > MAX_PROGRAM_LEN {
            return Err(ParseError {
                line: line_no,
                kind: ParseErrorKind::TooLong,
            });
        }
    }
    Ok(Program::new(instructions))
}

fn parse_instruction(line: &str) -> Result<Instruction, ParseErrorKind> {
    let (mnemonic, rest) = match line.find(char::is_whitespace) {
        Some(pos) => (&line[..pos], line[pos..].trim()),
        None => (line, ""),
    };
    let operands: Vec<&str> = if rest.is_empty() {
        vec![]
    } else {
        rest.split(',').map(str::trim).collect()
    };

    let expect = |n: usize| -> Result<(), ParseErrorKind> {
        if operands.len() == n {
            Ok(())
        } else {
            Err(ParseErrorKind::BadOperandCount {
                expected: n,
                got: operands.len(),
            })
        }
    };
    let reg = |s: &str| -> Result<Reg, ParseErrorKind> {
        s.parse().map_err(ParseErrorKind::BadRegister)
    };

    match mnemonic {
        "const" => {
            expect(2)?;
            let dst = reg(operands[0])?;
            let imm: i64 = operands[1]
                .parse()
                .map_err(|_| ParseErrorKind::BadImmediate(operands[1].to_string()))?;
            Ok(Instruction::Const { dst, imm })
        }
        "mov" => {
            expect(2)?;
            Ok(Instruction::Mov {
                dst: reg(operands[0])?,
                src: reg(operands[1])?,
            })
        }
        "add" | "sub" | "mul" => {
            expect(3)?;
            let dst = reg(operands[0])?;
            let a = reg(operands[1])?;
            let b = reg(operands[2])?;
            Ok(match mnemonic {
                "add" => Instruction::Add { dst, a, b },
                "sub" => Instruction::Sub { dst, a, b },
                _ => Instruction::Mul { dst, a, b },
            })
        }
        "shl" => {
            expect(3)?;
            let dst = reg(operands[0])?;
            let src = reg(operands[1])?;
            let amount: u8 = operands[2]
                .parse()
                .ok()
                .filter(|a| *a <= 63)
                .ok_or_else(|| ParseErrorKind::BadImmediate(operands[2].to_string()))?;
            Ok(Instruction::Shl { dst, src, amount })
        }
        "nop" => {
            expect(0)?;
            Ok(Instruction::Nop)
        }
        other => Err(ParseErrorKind::UnknownOpcode(other.to_string())),
    }
}

/// The register file after execution.
pub type RegFile = [i64; REGISTER_COUNT as usize];

/// Initial register assignment for a test vector.
pub type RegAssignment = BTreeMap<Reg, i64>;

/// Execute a program: registers zero-initialized, inputs applied, then
/// instructions run in order with wrapping 64-bit arithmetic. Total and
/// deterministic; there is no control flow and no way to fault.
pub fn exec_program(program: &Program, inputs: &RegAssignment) -> RegFile {
    let mut regs: RegFile = [0; REGISTER_COUNT as usize];
    for (reg, value) in inputs {
        regs[reg.index()] = *value;
    }
    for instr in &program.instructions {
        match *instr {
            Instruction::Const { dst, imm } => regs[dst.index()] = imm,
            Instruction::Mov { dst, src } => regs[dst.index()] = regs[src.index()],
            Instruction::Add { dst, a, b } => {
                regs[dst.index()] = regs[a.index()].wrapping_add(regs[b.index()])
            }
            Instruction::Sub { dst, a, b } => {
                regs[dst.index()] = regs[a.index()].wrapping_sub(regs[b.index()])
            }
            Instruction::Mul { dst, a, b } => {
                regs[dst.index()] = regs[a.index()].wrapping_mul(regs[b.index()])
            }
            Instruction::Shl { dst, src, amount } => {
                regs[dst.index()] = regs[src.index()].wrapping_shl(amount as u32)
            }
            Instruction::Nop => {}
        }
    }
    regs
}

/// A counterexample found by [`equivalent_on_random_inputs`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CounterExample {
    pub inputs: RegAssignment,
    pub left: i64,
    pub right: i64,
}

/// Check that two programs agree on the given output register across
/// `samples` seeded random register files. Equivalence is judged on the
/// output register only; temporaries are free to differ.
pub fn equivalent_on_random_inputs(
    left: &Program,
    right: &Program,
    output: Reg,
    samples: usize,
    seed: u64,
) -> Result<(), Box<CounterExample>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let inputs: RegAssignment = Reg::all().map(|r| (r, rng.random::<i64>())).collect();
        let l = exec_program(left, &inputs)[output.index()];
        let r = exec_program(right, &inputs)[output.index()];
        if l != r {
            return Err(Box::new(CounterExample {
                inputs,
                left: l,
                right: r,
            }));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn times3() -> Program {
        parse_program("const r1, 3\nmul r0, r0, r1").unwrap()
    }

    #[test]
    fn parses_two_instruction_program() {
        let p = times3();
        assert_eq!(p.len(), 2);
        assert_eq!(
            p.instructions[0],
            Instruction::Const {
                dst: Reg::new(1).unwrap(),
                imm: 3
            }
        );
    }

    #[test]
    fn register_out_of_range_reports_line() {
        let err = parse_program("add r9, r0, r1").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(matches!(err.kind, ParseErrorKind::BadRegister(_)));
    }

    #[test]
    fn unknown_opcode_reports_line() {
        let err = parse_program("nop\nfrob r0").unwrap_err();
        assert_eq!(err.line, 2);
        assert_eq!(err.kind, ParseErrorKind::UnknownOpcode("frob".to_string()));
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let p = parse_program("# header\n\nconst r1, 3  # load\n   mul r0 , r0 , r1\n").unwrap();
        assert_eq!(p, times3());
    }

    #[test]
    fn shift_amount_range_enforced() {
        assert!(parse_program("shl r0, r0, 63").is_ok());
        let err = parse_program("shl r0, r0, 64").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::BadImmediate(_)));
    }

    #[test]
    fn length_limit_enforced() {
        let text = "nop\n".repeat(MAX_PROGRAM_LEN + 1);
        let err = parse_program(&text).unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::TooLong);
        assert!(parse_program(&"nop\n".repeat(MAX_PROGRAM_LEN)).is_ok());
    }

    #[test]
    fn exec_times3() {
        let inputs: RegAssignment = [(Reg::R0, 7)].into_iter().collect();
        let regs = exec_program(&times3(), &inputs);
        assert_eq!(regs[0], 21);
    }

    #[test]
    fn exec_wraps_on_shift() {
        let p = parse_program("shl r0, r0, 2").unwrap();
        let inputs: RegAssignment = [(Reg::R0, 1i64 << 62)].into_iter().collect();
        assert_eq!(exec_program(&p, &inputs)[0], 0);
    }

    #[test]
    fn empty_program_preserves_inputs() {
        let inputs: RegAssignment = [(Reg::R0, 5)].into_iter().collect();
        assert_eq!(exec_program(&Program::empty(), &inputs)[0], 5);
    }

    #[test]
    fn exec_is_deterministic() {
        let p = times3();
        let inputs: RegAssignment = [(Reg::R0, -17)].into_iter().collect();
        assert_eq!(exec_program(&p, &inputs), exec_program(&p, &inputs));
    }

    #[test]
    fn display_round_trips() {
        let p = parse_program("const r1, -42\nshl r2, r1, 3\nadd r0, r2, r1\nnop").unwrap();
        let reparsed = parse_program(&p.to_string()).unwrap();
        assert_eq!(p, reparsed);
    }

    #[test]
    fn equivalence_detects_mismatch() {
        let two_x = parse_program("shl r0, r0, 1").unwrap();
        let err =
            equivalent_on_random_inputs(&times3(), &two_x, Reg::R0, 1000, 7).unwrap_err();
        assert_ne!(err.left, err.right);
        assert!(equivalent_on_random_inputs(&times3(), &times3(), Reg::R0, 1000, 7).is_ok());
    }
}
