//! Semantics-preserving rewrite rules over straight-line programs.
//!
//! Each rule rewrites the leftmost applicable site and returns the new
//! program, or `None` when nothing matches. Soundness is judged on the
//! output register `r0`: a rewrite may change what temporaries hold (the
//! strength-reduction rule repurposes the constant's register as scratch)
//! but never the final value of `r0`.
//!
//! `bad-strength-reduce` is deliberately unsound. It exists so test
//! policies can exercise the diagnose-and-revert path of the agent loop and
//! is never part of [`RewriteRule::PRIORITY`].

use std::fmt;
use std::str::FromStr;

use super::{Instruction, Program, Reg};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewriteRule {
    DeadCodeElim,
    ConstFold,
    StrengthReduce,
    MovCollapse,
    NopRemove,
    /// Test-only: strength reduction that drops the `+x` correction term.
    BadStrengthReduce,
}

impl RewriteRule {
    /// The fixed priority order used by scripted generation. Excludes the
    /// unsound test-only rule.
    pub const PRIORITY: [RewriteRule; 5] = [
        RewriteRule::DeadCodeElim,
        RewriteRule::ConstFold,
        RewriteRule::StrengthReduce,
        RewriteRule::MovCollapse,
        RewriteRule::NopRemove,
    ];

    pub fn id(self) -> &'static str {
        match self {
            RewriteRule::DeadCodeElim => "dead-code-elim",
            RewriteRule::ConstFold => "const-fold",
            RewriteRule::StrengthReduce => "strength-reduce",
            RewriteRule::MovCollapse => "mov-collapse",
            RewriteRule::NopRemove => "nop-remove",
            RewriteRule::BadStrengthReduce => "bad-strength-reduce",
        }
    }
}

impl fmt::Display for RewriteRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown rewrite rule `{0}`")]
pub struct UnknownRule(pub String);

impl FromStr for RewriteRule {
    type Err = UnknownRule;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dead-code-elim" => Ok(RewriteRule::DeadCodeElim),
            "const-fold" => Ok(RewriteRule::ConstFold),
            "strength-reduce" => Ok(RewriteRule::StrengthReduce),
            "mov-collapse" => Ok(RewriteRule::MovCollapse),
            "nop-remove" => Ok(RewriteRule::NopRemove),
            "bad-strength-reduce" => Ok(RewriteRule::BadStrengthReduce),
            other => Err(UnknownRule(other.to_string())),
        }
    }
}

/// Apply one rule at its leftmost applicable site. `None` means the rule
/// does not apply anywhere in the program.
pub fn apply_rewrite(program: &Program, rule: RewriteRule) -> Option<Program> {
    match rule {
        RewriteRule::DeadCodeElim => dead_code_elim(program),
        RewriteRule::ConstFold => const_fold(program),
        RewriteRule::StrengthReduce => strength_reduce(program, true),
        RewriteRule::MovCollapse => mov_collapse(program),
        RewriteRule::NopRemove => nop_remove(program),
        RewriteRule::BadStrengthReduce => strength_reduce(program, false),
    }
}

/// Apply a rule by its textual id; unknown ids are an error, a
/// non-applicable rule is `Ok(None)`.
pub fn apply_rewrite_by_id(program: &Program, id: &str) -> Result<Option<Program>, UnknownRule> {
    Ok(apply_rewrite(program, id.parse()?))
}

/// The first rule from [`RewriteRule::PRIORITY`] that applies, with its
/// result.
pub fn first_applicable(program: &Program) -> Option<(RewriteRule, Program)> {
    RewriteRule::PRIORITY
        .iter()
        .find_map(|&rule| apply_rewrite(program, rule).map(|p| (rule, p)))
}

/// Bitmask of registers live after each instruction, with `r0` live at
/// program exit.
fn live_after(program: &Program) -> Vec<u8> {
    let mut live: u8 = 1 << Reg::R0.index();
    let mut out = vec![0u8; program.len()];
    for (i, instr) in program.instructions.iter().enumerate().rev() {
        out[i] = live;
        if let Some(dst) = instr.dst() {
            if live & (1 << dst.index()) != 0 {
                live &= !(1 << dst.index());
                for src in instr.sources() {
                    live |= 1 << src.index();
                }
            }
        }
    }
    out
}

/// Remove the leftmost instruction whose destination is dead.
fn dead_code_elim(program: &Program) -> Option<Program> {
    let live = live_after(program);
    for (i, instr) in program.instructions.iter().enumerate() {
        let Some(dst) = instr.dst() else { continue };
        if live[i] & (1 << dst.index()) == 0 {
            let mut instructions = program.instructions.clone();
            instructions.remove(i);
            return Some(Program::new(instructions));
        }
    }
    None
}

/// Forward constant tracking: `Some(v)` when the register provably holds
/// `v` at this point. All registers start unknown (any may be an input).
struct ConstState {
    values: [Option<i64>; 8],
    /// Index of the `const` instruction that directly defined the value,
    /// when it is still the defining write.
    const_def: [Option<usize>; 8],
}

impl ConstState {
    fn new() -> ConstState {
        ConstState {
            values: [None; 8],
            const_def: [None; 8],
        }
    }

    fn value_of(&self, instr: &Instruction) -> Option<i64> {
        match *instr {
            Instruction::Const { imm, .. } => Some(imm),
            Instruction::Mov { src, .. } => self.values[src.index()],
            Instruction::Add { a, b, .. } => {
                Some(self.values[a.index()]?.wrapping_add(self.values[b.index()]?))
            }
            Instruction::Sub { a, b, .. } => {
                Some(self.values[a.index()]?.wrapping_sub(self.values[b.index()]?))
            }
            Instruction::Mul { a, b, .. } => {
                Some(self.values[a.index()]?.wrapping_mul(self.values[b.index()]?))
            }
            Instruction::Shl { src, amount, .. } => {
                Some(self.values[src.index()]?.wrapping_shl(amount as u32))
            }
            Instruction::Nop => None,
        }
    }

    fn apply(&mut self, idx: usize, instr: &Instruction) {
        if let Some(dst) = instr.dst() {
            self.values[dst.index()] = self.value_of(instr);
            self.const_def[dst.index()] = match instr {
                Instruction::Const { .. } => Some(idx),
                _ => None,
            };
        }
    }
}

/// Replace the leftmost non-`const` instruction whose sources are all known
/// constants with a `const` of the computed value.
fn const_fold(program: &Program) -> Option<Program> {
    let mut state = ConstState::new();
    for (i, instr) in program.instructions.iter().enumerate() {
        if !matches!(instr, Instruction::Const { .. } | Instruction::Nop) {
            if let (Some(value), Some(dst)) = (state.value_of(instr), instr.dst()) {
                let mut instructions = program.instructions.clone();
                instructions[i] = Instruction::Const { dst, imm: value };
                return Some(Program::new(instructions));
            }
        }
        state.apply(i, instr);
    }
    None
}

/// Decompose a positive multiplier into shift form.
enum MulShape {
    /// `x * 2^k`
    Pow2(u8),
    /// `x * (2^k + 1)` = `(x << k) + x`
    Pow2Plus1(u8),
    /// `x * (2^k - 1)` = `(x << k) - x`
    Pow2Minus1(u8),
}

fn mul_shape(c: i64) -> Option<MulShape> {
    if c <= 0 {
        return None;
    }
    let c = c as u64;
    if c.is_power_of_two() {
        return Some(MulShape::Pow2(c.trailing_zeros() as u8));
    }
    if (c - 1).is_power_of_two() {
        return Some(MulShape::Pow2Plus1((c - 1).trailing_zeros() as u8));
    }
    if c != u64::MAX && (c + 1).is_power_of_two() {
        return Some(MulShape::Pow2Minus1((c + 1).trailing_zeros() as u8));
    }
    None
}

/// Rewrite `mul dst, x, c` (one operand a known constant) into shifts.
///
/// For `c = 2^k` only the `mul` is replaced by a `shl`; the defining
/// `const` is left for dead-code elimination. For `c = 2^k ± 1` a scratch
/// register is required, so the defining `const` itself is rewritten into
/// the shift and the `mul` becomes the add/sub correction:
///
/// ```text
/// const r1, 3        shl r1, r0, 1
/// mul r0, r0, r1  →  add r0, r1, r0
/// ```
///
/// The pair rewrite repurposes the constant's register, which is sound only
/// under the side conditions checked below (the register is not otherwise
/// read, the shifted operand is stable between the two sites, and `r0` is
/// not repurposed).
///
/// With `sound = false` this produces the deliberately broken variant that
/// drops the correction term entirely (`bad-strength-reduce`).
fn strength_reduce(program: &Program, sound: bool) -> Option<Program> {
    let mut state = ConstState::new();
    for (j, instr) in program.instructions.iter().enumerate() {
        if let Instruction::Mul { dst, a, b } = *instr {
            let known_a = state.values[a.index()];
            let known_b = state.values[b.index()];
            // Exactly one constant operand; two is const-fold territory.
            let (c_reg, c, x) = match (known_a, known_b) {
                (Some(c), None) => (a, c, b),
                (None, Some(c)) => (b, c, a),
                _ => {
                    state.apply(j, instr);
                    continue;
                }
            };
            if let Some(shape) = mul_shape(c) {
                match shape {
                    MulShape::Pow2(k) if sound => {
                        let mut instructions = program.instructions.clone();
                        instructions[j] = Instruction::Shl {
                            dst,
                            src: x,
                            amount: k,
                        };
                        return Some(Program::new(instructions));
                    }
                    MulShape::Pow2(_) => {}
                    MulShape::Pow2Plus1(k) | MulShape::Pow2Minus1(k) => {
                        if let Some(i) = state.const_def[c_reg.index()] {
                            if pair_rewrite_safe(program, i, j, c_reg, x, dst) {
                                let mut instructions = program.instructions.clone();
                                if sound {
                                    instructions[i] = Instruction::Shl {
                                        dst: c_reg,
                                        src: x,
                                        amount: k,
                                    };
                                    instructions[j] = match shape {
                                        MulShape::Pow2Plus1(_) => Instruction::Add {
                                            dst,
                                            a: c_reg,
                                            b: x,
                                        },
                                        _ => Instruction::Sub {
                                            dst,
                                            a: c_reg,
                                            b: x,
                                        },
                                    };
                                } else {
                                    // Drops the ±x correction: wrong result.
                                    instructions[j] = Instruction::Shl {
                                        dst,
                                        src: x,
                                        amount: k,
                                    };
                                    instructions.remove(i);
                                }
                                return Some(Program::new(instructions));
                            }
                        }
                    }
                }
            }
        }
        state.apply(j, instr);
    }
    None
}

/// Side conditions for rewriting the `const` at `i` and the `mul` at `j`
/// as a pair, repurposing `c_reg` as scratch.
fn pair_rewrite_safe(program: &Program, i: usize, j: usize, c_reg: Reg, x: Reg, dst: Reg) -> bool {
    if c_reg == x || c_reg == dst || c_reg == Reg::R0 {
        return false;
    }
    // Between the const and the mul: nothing may read c_reg (it would
    // observe the old constant) and nothing may write x (the shift moves
    // x's read from j to i).
    for instr in &program.instructions[i + 1..j] {
        if instr.sources().contains(&c_reg) {
            return false;
        }
        if instr.dst() == Some(x) {
            return false;
        }
    }
    // After the mul: c_reg now holds the shifted value, so it must not be
    // read again.
    for instr in &program.instructions[j + 1..] {
        if instr.sources().contains(&c_reg) {
            return false;
        }
    }
    true
}

/// Remove the leftmost collapsible `mov a, b`, renaming reads of `a` to `b`
/// until `a` is redefined. Applicable when `b` stays stable over that span
/// and `a`'s final value is irrelevant (it is redefined, or it is not the
/// output register).
fn mov_collapse(program: &Program) -> Option<Program> {
    'outer: for (i, instr) in program.instructions.iter().enumerate() {
        let Instruction::Mov { dst: a, src: b } = *instr else {
            continue;
        };
        if a == b {
            let mut instructions = program.instructions.clone();
            instructions.remove(i);
            return Some(Program::new(instructions));
        }
        // The first later instruction that redefines `a` still reads the
        // mov's value through its own sources, so the rename span includes
        // it. Without a redefinition the span runs to the end of the
        // program, and `a`'s final value must then be irrelevant.
        let redef = program.instructions[i + 1..]
            .iter()
            .position(|later| later.dst() == Some(a))
            .map(|off| i + 1 + off);
        if redef.is_none() && a == Reg::R0 {
            continue; // the mov defines the program output
        }
        let rename_end = redef.map(|r| r + 1).unwrap_or(program.len());
        // Renamed reads must still see `b`'s value from the mov site. An
        // instruction's reads happen before its write, so a write to `b`
        // only invalidates renamed reads strictly after it.
        let mut b_clobbered = false;
        for later in &program.instructions[i + 1..rename_end] {
            if b_clobbered && later.sources().contains(&a) {
                continue 'outer;
            }
            if later.dst() == Some(b) {
                b_clobbered = true;
            }
        }
        let mut instructions = program.instructions.clone();
        for later in &mut instructions[i + 1..rename_end] {
            rename_sources(later, a, b);
        }
        instructions.remove(i);
        return Some(Program::new(instructions));
    }
    None
}

fn rename_sources(instr: &mut Instruction, from: Reg, to: Reg) {
    let sub = |r: &mut Reg| {
        if *r == from {
            *r = to;
        }
    };
    match instr {
        Instruction::Mov { src, .. } | Instruction::Shl { src, .. } => sub(src),
        Instruction::Add { a, b, .. }
        | Instruction::Sub { a, b, .. }
        | Instruction::Mul { a, b, .. } => {
            sub(a);
            sub(b);
        }
        Instruction::Const { .. } | Instruction::Nop => {}
    }
}

/// Remove the leftmost `nop`.
fn nop_remove(program: &Program) -> Option<Program> {
    let pos = program
        .instructions
        .iter()
        .position(|i| matches!(i, Instruction::Nop))?;
    let mut instructions = program.instructions.clone();
    instructions.remove(pos);
    Some(Program::new(instructions))
}
