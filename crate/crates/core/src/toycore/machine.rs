//! Cycle-level model of the 5-stage in-order toy pipeline.
//!
//! Every pipeline latch is a named state element whose bits can be flipped.
//! Stages are evaluated from a snapshot of the current latches, so the model
//! behaves like edge-triggered hardware: write-back updates the register file
//! first, then MEM/EX/ID/IF compute the next latch values. There is no
//! forwarding; ID interlocks on RAW hazards against EX and MEM, branches resolve
//! in EX and squash the two younger slots.

use crate::design::Stage;

use super::isa::{Fields, Op, NUM_REGS};
use super::ToyProgram;

/// Data memory size in 32-bit words.
pub const MEM_WORDS: usize = 512;
/// Store address that signals a software-detected error.
pub const DETECT_PORT: u32 = 0x7000;
/// Output buffer capacity in words; overflowing it traps.
pub const OUTPUT_CAP: usize = 4096;

/// One pipeline-latch field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatchSpec {
    pub name: &'static str,
    pub width: u32,
    pub stage: Stage,
}

const fn l(name: &'static str, width: u32, stage: Stage) -> LatchSpec {
    LatchSpec { name, width, stage }
}

pub const LATCHES: [LatchSpec; 22] = [
    l("pc", 16, Stage::Fetch),
    l("if_id.valid", 1, Stage::Decode),
    l("if_id.fault", 1, Stage::Decode),
    l("if_id.instr", 32, Stage::Decode),
    l("id_ex.valid", 1, Stage::Execute),
    l("id_ex.fault", 1, Stage::Execute),
    l("id_ex.op", 4, Stage::Execute),
    l("id_ex.rd", 4, Stage::Execute),
    l("id_ex.a", 32, Stage::Execute),
    l("id_ex.b", 32, Stage::Execute),
    l("id_ex.imm", 16, Stage::Execute),
    l("ex_mem.valid", 1, Stage::Memory),
    l("ex_mem.op", 4, Stage::Memory),
    l("ex_mem.rd", 4, Stage::Memory),
    l("ex_mem.result", 32, Stage::Memory),
    l("ex_mem.store", 32, Stage::Memory),
    l("mem_wb.valid", 1, Stage::Writeback),
    l("mem_wb.op", 4, Stage::Writeback),
    l("mem_wb.rd", 4, Stage::Writeback),
    l("mem_wb.value", 32, Stage::Writeback),
    l("status.flags", 4, Stage::Exception),
    l("status.retired", 16, Stage::Other),
];

const PC: usize = 0;
const IF_VALID: usize = 1;
const IF_FAULT: usize = 2;
const IF_INSTR: usize = 3;
const ID_VALID: usize = 4;
const ID_FAULT: usize = 5;
const ID_OP: usize = 6;
const ID_RD: usize = 7;
const ID_A: usize = 8;
const ID_B: usize = 9;
const ID_IMM: usize = 10;
const EX_VALID: usize = 11;
const EX_OP: usize = 12;
const EX_RD: usize = 13;
const EX_RESULT: usize = 14;
const EX_STORE: usize = 15;
const WB_VALID: usize = 16;
const WB_OP: usize = 17;
const WB_RD: usize = 18;
const WB_VALUE: usize = 19;
const STATUS_FLAGS: usize = 20;
const RETIRED: usize = 21;

pub const NUM_LATCHES: usize = LATCHES.len();

fn mask(width: u32) -> u32 {
    if width >= 32 {
        u32::MAX
    } else {
        (1 << width) - 1
    }
}

fn sext16(v: u32) -> u32 {
    v as u16 as i16 as i32 as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trap {
    IllegalOpcode,
    FetchOutOfRange,
    MemoryOutOfRange,
    OutputOverflow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Running,
    Halted,
    Trap(Trap),
    /// A store to [`DETECT_PORT`] while the detection hook is armed.
    Detected,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Machine {
    latch: [u32; NUM_LATCHES],
    regs: [u32; NUM_REGS],
    mem: Vec<u32>,
    output: Vec<u32>,
    cycle: u64,
    detect_hook: bool,
    last_store: Option<u32>,
}

impl Machine {
    pub fn new(program: &ToyProgram, detect_hook: bool) -> Self {
        let mut mem = program.data().to_vec();
        mem.resize(MEM_WORDS, 0);
        Machine {
            latch: [0; NUM_LATCHES],
            regs: [0; NUM_REGS],
            mem,
            output: Vec::new(),
            cycle: 0,
            detect_hook,
            last_store: None,
        }
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn output(&self) -> &[u32] {
        &self.output
    }

    pub fn memory(&self) -> &[u32] {
        &self.mem
    }

    pub fn reg(&self, r: usize) -> u32 {
        self.regs[r]
    }

    pub fn latch(&self, index: usize) -> u32 {
        self.latch[index]
    }

    pub fn latch_by_name(&self, name: &str) -> Option<u32> {
        LATCHES.iter().position(|s| s.name == name).map(|i| self.latch[i])
    }

    /// Memory word written during the last step, if any.
    pub fn last_store(&self) -> Option<u32> {
        self.last_store
    }

    pub fn flip_latch(&mut self, index: usize, bit: u32) {
        debug_assert!(bit < LATCHES[index].width);
        self.latch[index] ^= 1 << bit;
    }

    pub fn flip_reg(&mut self, r: usize, bit: u32) {
        self.regs[r] ^= 1 << bit;
    }

    /// Pipeline and register state equal, ignoring memory, output and the
    /// status latches (nothing reads those back).
    pub fn core_state_eq(&self, other: &Machine) -> bool {
        self.latch[..STATUS_FLAGS] == other.latch[..STATUS_FLAGS] && self.regs == other.regs
    }

    fn writes(op_bits: u32, rd: u32) -> bool {
        rd != 0 && Op::from_bits(op_bits).is_some_and(Op::writes_reg)
    }

    pub fn step(&mut self, program: &ToyProgram) -> StepEvent {
        self.cycle += 1;
        self.last_store = None;
        let s = self.latch;
        let mut n = s;

        // WB
        if s[WB_VALID] == 1 {
            n[RETIRED] = (s[RETIRED] + 1) & mask(16);
            let op = Op::from_bits(s[WB_OP]);
            if Self::writes(s[WB_OP], s[WB_RD]) {
                self.regs[s[WB_RD] as usize] = s[WB_VALUE];
            }
            match op {
                Some(Op::Out) => {
                    if self.output.len() >= OUTPUT_CAP {
                        return StepEvent::Trap(Trap::OutputOverflow);
                    }
                    self.output.push(s[WB_VALUE]);
                }
                Some(Op::Halt) => {
                    self.latch = n;
                    return StepEvent::Halted;
                }
                _ => {}
            }
        }

        // MEM
        n[WB_VALID] = s[EX_VALID];
        if s[EX_VALID] == 1 {
            n[WB_OP] = s[EX_OP];
            n[WB_RD] = s[EX_RD];
            let addr = s[EX_RESULT];
            n[WB_VALUE] = match Op::from_bits(s[EX_OP]) {
                Some(Op::Load) => match self.mem.get(addr as usize) {
                    Some(&v) => v,
                    None => return StepEvent::Trap(Trap::MemoryOutOfRange),
                },
                Some(Op::Store) => {
                    if addr == DETECT_PORT {
                        if self.detect_hook {
                            return StepEvent::Detected;
                        }
                    } else if (addr as usize) < self.mem.len() {
                        self.mem[addr as usize] = s[EX_STORE];
                        self.last_store = Some(addr);
                    } else {
                        return StepEvent::Trap(Trap::MemoryOutOfRange);
                    }
                    0
                }
                _ => s[EX_RESULT],
            };
        }

        // EX
        let mut redirect = None;
        n[EX_VALID] = s[ID_VALID];
        if s[ID_VALID] == 1 {
            if s[ID_FAULT] == 1 {
                return StepEvent::Trap(Trap::FetchOutOfRange);
            }
            let Some(op) = Op::from_bits(s[ID_OP]) else {
                return StepEvent::Trap(Trap::IllegalOpcode);
            };
            let (a, b, imm) = (s[ID_A], s[ID_B], s[ID_IMM]);
            n[EX_OP] = s[ID_OP];
            n[EX_RD] = s[ID_RD];
            n[EX_STORE] = b;
            n[EX_RESULT] = match op {
                Op::Load | Op::Store | Op::Addi => a.wrapping_add(sext16(imm)),
                Op::Add => a.wrapping_add(b),
                Op::Sub => a.wrapping_sub(b),
                Op::Mul => a.wrapping_mul(b),
                Op::Xor => a ^ b,
                Op::Shl => a << (b & 31),
                Op::Shr => a >> (b & 31),
                Op::Out => a,
                Op::Bz => {
                    if a == 0 {
                        redirect = Some(imm);
                    }
                    s[EX_RESULT]
                }
                Op::Jump => {
                    redirect = Some(imm);
                    s[EX_RESULT]
                }
                Op::Halt => s[EX_RESULT],
            };
        }

        if let Some(target) = redirect {
            n[ID_VALID] = 0;
            n[IF_VALID] = 0;
            n[PC] = target & mask(16);
            self.latch = n;
            return StepEvent::Running;
        }

        // ID
        let f = Fields::of(s[IF_INSTR]);
        let dec_op = Op::from_bits(f.op);
        let stall = s[IF_VALID] == 1 && {
            let busy = |valid: usize, op: usize, rd: usize| {
                s[valid] == 1 && Self::writes(s[op], s[rd])
            };
            let conflicts = |r: u32| {
                (busy(ID_VALID, ID_OP, ID_RD) && s[ID_RD] == r)
                    || (busy(EX_VALID, EX_OP, EX_RD) && s[EX_RD] == r)
            };
            match dec_op {
                Some(op) => {
                    (op.reads_rs1() && conflicts(f.rs1)) || (op.reads_rs2() && conflicts(f.rs2))
                }
                None => false,
            }
        };
        if stall {
            n[ID_VALID] = 0;
            self.latch = n;
            return StepEvent::Running;
        }
        n[ID_VALID] = s[IF_VALID];
        if s[IF_VALID] == 1 {
            n[ID_FAULT] = s[IF_FAULT];
            n[ID_OP] = f.op;
            n[ID_RD] = f.rd;
            n[ID_A] = self.regs[f.rs1 as usize];
            n[ID_B] = self.regs[f.rs2 as usize];
            n[ID_IMM] = f.imm;
        }

        // IF
        let halt = Op::Halt as u32;
        let halt_in_flight = (s[IF_VALID] == 1 && f.op == halt)
            || (s[ID_VALID] == 1 && s[ID_OP] == halt)
            || (s[EX_VALID] == 1 && s[EX_OP] == halt);
        if halt_in_flight {
            n[IF_VALID] = 0;
        } else {
            let pc = s[PC] as usize;
            n[IF_VALID] = 1;
            match program.code().get(pc) {
                Some(&word) => {
                    n[IF_FAULT] = 0;
                    n[IF_INSTR] = word;
                }
                None => n[IF_FAULT] = 1,
            }
            n[PC] = (s[PC] + 1) & mask(16);
        }
        self.latch = n;
        StepEvent::Running
    }
}

#[cfg(test)]
mod tests {
    use super::super::asm::Asm;
    use super::*;

    fn run(p: &ToyProgram) -> (StepEvent, Machine) {
        let mut m = Machine::new(p, false);
        loop {
            match m.step(p) {
                StepEvent::Running if m.cycle() < 10_000 => {}
                ev => return (ev, m),
            }
        }
    }

    #[test]
    fn latch_widths_total() {
        let bits: u32 = LATCHES.iter().map(|s| s.width).sum();
        assert_eq!(bits, 274);
    }

    #[test]
    fn out_then_halt() {
        let mut a = Asm::new();
        a.li(1, 7).out(1).halt();
        let p = a.assemble("t", vec![]).unwrap();
        let (ev, m) = run(&p);
        assert_eq!(ev, StepEvent::Halted);
        assert_eq!(m.output(), &[7]);
    }

    #[test]
    fn interlock_and_branches() {
        let mut a = Asm::new();
        a.li(1, 3).li(2, 0);
        a.label("loop").add(2, 2, 1).addi(1, 1, -1).bz(1, "done").jump("loop");
        a.label("done").out(2).store(2, 0, 5).load(3, 0, 5).out(3).halt();
        let p = a.assemble("t", vec![]).unwrap();
        let (ev, m) = run(&p);
        assert_eq!(ev, StepEvent::Halted);
        assert_eq!(m.output(), &[6, 6]);
        assert_eq!(m.memory()[5], 6);
    }

    #[test]
    fn illegal_store_traps_and_detect_port() {
        let mut a = Asm::new();
        a.li(1, 1).store(1, 0, DETECT_PORT as i16).out(1).halt();
        let p = a.assemble("t", vec![]).unwrap();
        let (ev, _) = run(&p);
        assert_eq!(ev, StepEvent::Halted);
        let mut m = Machine::new(&p, true);
        let ev = loop {
            match m.step(&p) {
                StepEvent::Running => {}
                ev => break ev,
            }
        };
        assert_eq!(ev, StepEvent::Detected);

        let mut a = Asm::new();
        a.li(1, 1).store(1, 0, 600).halt();
        let p = a.assemble("t", vec![]).unwrap();
        assert_eq!(run(&p).0, StepEvent::Trap(Trap::MemoryOutOfRange));
    }
}
