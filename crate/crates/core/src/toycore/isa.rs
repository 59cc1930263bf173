//! Instruction set of the toy core.
//!
//! Encoding (32-bit word): `op[31:28] rd[27:24] rs1[23:20] rs2[19:16] imm[15:0]`,
//! with `imm` signed for address/arithmetic use and zero-extended as a branch
//! target.

use std::fmt;

pub const NUM_REGS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Op {
    Halt = 0,
    /// `rd = mem[rs1 + imm]`
    Load = 1,
    /// `mem[rs1 + imm] = rs2`
    Store = 2,
    Add = 3,
    Sub = 4,
    Mul = 5,
    Xor = 6,
    Shl = 7,
    Shr = 8,
    /// Branch to absolute `imm` if `rs1 == 0`.
    Bz = 9,
    Jump = 10,
    /// Append `rs1` to the output buffer.
    Out = 11,
    /// `rd = rs1 + imm`
    Addi = 12,
}

impl Op {
    pub fn from_bits(bits: u32) -> Option<Op> {
        Some(match bits {
            0 => Op::Halt,
            1 => Op::Load,
            2 => Op::Store,
            3 => Op::Add,
            4 => Op::Sub,
            5 => Op::Mul,
            6 => Op::Xor,
            7 => Op::Shl,
            8 => Op::Shr,
            9 => Op::Bz,
            10 => Op::Jump,
            11 => Op::Out,
            12 => Op::Addi,
            _ => return None,
        })
    }

    pub fn writes_reg(self) -> bool {
        matches!(
            self,
            Op::Load | Op::Add | Op::Sub | Op::Mul | Op::Xor | Op::Shl | Op::Shr | Op::Addi
        )
    }

    pub fn reads_rs1(self) -> bool {
        !matches!(self, Op::Halt | Op::Jump)
    }

    pub fn reads_rs2(self) -> bool {
        matches!(
            self,
            Op::Store | Op::Add | Op::Sub | Op::Mul | Op::Xor | Op::Shl | Op::Shr
        )
    }

    pub fn is_control(self) -> bool {
        matches!(self, Op::Bz | Op::Jump)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instr {
    pub op: Op,
    pub rd: u8,
    pub rs1: u8,
    pub rs2: u8,
    pub imm: i16,
}

impl Instr {
    pub fn new(op: Op, rd: u8, rs1: u8, rs2: u8, imm: i16) -> Self {
        Instr { op, rd, rs1, rs2, imm }
    }

    pub fn encode(&self) -> u32 {
        ((self.op as u32) << 28)
            | ((self.rd as u32 & 0xf) << 24)
            | ((self.rs1 as u32 & 0xf) << 20)
            | ((self.rs2 as u32 & 0xf) << 16)
            | (self.imm as u16 as u32)
    }

    /// `None` for the unassigned opcodes 13..=15.
    pub fn decode(word: u32) -> Option<Instr> {
        let f = Fields::of(word);
        Some(Instr { op: Op::from_bits(f.op)?, rd: f.rd as u8, rs1: f.rs1 as u8, rs2: f.rs2 as u8, imm: f.imm as u16 as i16 })
    }

    /// Absolute branch/jump target, if this is a control-flow instruction.
    pub fn target(&self) -> Option<usize> {
        self.op.is_control().then_some(self.imm as u16 as usize)
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Instr { op, rd, rs1, rs2, imm } = *self;
        match op {
            Op::Halt => write!(f, "halt"),
            Op::Load => write!(f, "load r{rd}, {imm}(r{rs1})"),
            Op::Store => write!(f, "store r{rs2}, {imm}(r{rs1})"),
            Op::Addi => write!(f, "addi r{rd}, r{rs1}, {imm}"),
            Op::Bz => write!(f, "bz r{rs1}, {}", imm as u16),
            Op::Jump => write!(f, "jump {}", imm as u16),
            Op::Out => write!(f, "out r{rs1}"),
            _ => write!(f, "{} r{rd}, r{rs1}, r{rs2}", format!("{op:?}").to_lowercase()),
        }
    }
}

/// Raw bit fields of an instruction word, valid or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Fields {
    pub op: u32,
    pub rd: u32,
    pub rs1: u32,
    pub rs2: u32,
    pub imm: u32,
}

impl Fields {
    pub fn of(word: u32) -> Self {
        Fields {
            op: word >> 28,
            rd: (word >> 24) & 0xf,
            rs1: (word >> 20) & 0xf,
            rs2: (word >> 16) & 0xf,
            imm: word & 0xffff,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unassigned_opcodes_do_not_decode() {
        for op in 13u32..16 {
            assert_eq!(Instr::decode(op << 28), None);
        }
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(op in 0u32..13, rd in 0u8..16, rs1 in 0u8..16, rs2 in 0u8..16, imm: i16) {
            let i = Instr::new(Op::from_bits(op).unwrap(), rd, rs1, rs2, imm);
            prop_assert_eq!(Instr::decode(i.encode()), Some(i));
        }
    }
}
