//! A tiny assembler with symbolic labels, used to author the bundled benchmarks.

use std::collections::HashMap;

use super::isa::{Instr, Op};
use super::{ToyError, ToyProgram};

#[derive(Debug, Clone)]
enum Target {
    Resolved(i16),
    Label(String),
}

#[derive(Debug, Clone)]
struct Pending {
    op: Op,
    rd: u8,
    rs1: u8,
    rs2: u8,
    imm: Target,
}

#[derive(Debug, Default)]
pub struct Asm {
    code: Vec<Pending>,
    labels: HashMap<String, usize>,
    duplicate_label: Option<String>,
}

impl Asm {
    pub fn new() -> Self {
        Self::default()
    }

    /// Address of the next emitted instruction.
    pub fn here(&self) -> usize {
        self.code.len()
    }

    pub fn label(&mut self, name: &str) -> &mut Self {
        if self.labels.insert(name.to_string(), self.code.len()).is_some() {
            self.duplicate_label.get_or_insert_with(|| name.to_string());
        }
        self
    }

    fn emit(&mut self, op: Op, rd: u8, rs1: u8, rs2: u8, imm: Target) -> &mut Self {
        self.code.push(Pending { op, rd, rs1, rs2, imm });
        self
    }

    fn rrr(&mut self, op: Op, rd: u8, rs1: u8, rs2: u8) -> &mut Self {
        self.emit(op, rd, rs1, rs2, Target::Resolved(0))
    }

    pub fn add(&mut self, rd: u8, rs1: u8, rs2: u8) -> &mut Self {
        self.rrr(Op::Add, rd, rs1, rs2)
    }

    pub fn sub(&mut self, rd: u8, rs1: u8, rs2: u8) -> &mut Self {
        self.rrr(Op::Sub, rd, rs1, rs2)
    }

    pub fn mul(&mut self, rd: u8, rs1: u8, rs2: u8) -> &mut Self {
        self.rrr(Op::Mul, rd, rs1, rs2)
    }

    pub fn xor(&mut self, rd: u8, rs1: u8, rs2: u8) -> &mut Self {
        self.rrr(Op::Xor, rd, rs1, rs2)
    }

    pub fn shl(&mut self, rd: u8, rs1: u8, rs2: u8) -> &mut Self {
        self.rrr(Op::Shl, rd, rs1, rs2)
    }

    pub fn shr(&mut self, rd: u8, rs1: u8, rs2: u8) -> &mut Self {
        self.rrr(Op::Shr, rd, rs1, rs2)
    }

    pub fn addi(&mut self, rd: u8, rs1: u8, imm: i16) -> &mut Self {
        self.emit(Op::Addi, rd, rs1, 0, Target::Resolved(imm))
    }

    /// Load a small constant.
    pub fn li(&mut self, rd: u8, imm: i16) -> &mut Self {
        self.addi(rd, 0, imm)
    }

    pub fn mov(&mut self, rd: u8, rs: u8) -> &mut Self {
        self.addi(rd, rs, 0)
    }

    pub fn load(&mut self, rd: u8, base: u8, offset: i16) -> &mut Self {
        self.emit(Op::Load, rd, base, 0, Target::Resolved(offset))
    }

    pub fn store(&mut self, value: u8, base: u8, offset: i16) -> &mut Self {
        self.emit(Op::Store, 0, base, value, Target::Resolved(offset))
    }

    pub fn bz(&mut self, rs: u8, label: &str) -> &mut Self {
        self.emit(Op::Bz, 0, rs, 0, Target::Label(label.to_string()))
    }

    pub fn jump(&mut self, label: &str) -> &mut Self {
        self.emit(Op::Jump, 0, 0, 0, Target::Label(label.to_string()))
    }

    pub fn out(&mut self, rs: u8) -> &mut Self {
        self.emit(Op::Out, 0, rs, 0, Target::Resolved(0))
    }

    pub fn halt(&mut self) -> &mut Self {
        self.emit(Op::Halt, 0, 0, 0, Target::Resolved(0))
    }

    pub fn assemble(&self, name: &str, data: Vec<u32>) -> Result<ToyProgram, ToyError> {
        if let Some(label) = &self.duplicate_label {
            return Err(ToyError::InvalidProgram(format!("label `{label}` defined twice")));
        }
        let mut words = Vec::with_capacity(self.code.len());
        for p in &self.code {
            let imm = match &p.imm {
                Target::Resolved(v) => *v,
                Target::Label(l) => {
                    let addr = *self.labels.get(l).ok_or_else(|| {
                        ToyError::InvalidProgram(format!("undefined label `{l}`"))
                    })?;
                    addr as u16 as i16
                }
            };
            words.push(Instr::new(p.op, p.rd, p.rs1, p.rs2, imm).encode());
        }
        ToyProgram::new(name, words, data)
    }
}
