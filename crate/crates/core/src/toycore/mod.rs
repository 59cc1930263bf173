//! Flip-flop-level fault injection on a small 5-stage in-order core.

pub mod asm;
pub mod bench;
pub mod campaign;
pub mod isa;
pub mod layout;
pub mod machine;

use thiserror::Error;

pub use campaign::{
    inject_one, run_campaign, run_campaigns, run_golden, CampaignConfig, DetectionHook, Golden, InjectionPoint,
    StateMap,
};
pub use machine::{Machine, StepEvent, Trap};

use isa::Instr;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ToyError {
    #[error("invalid program: {0}")]
    InvalidProgram(String),
    #[error("golden run does not terminate within {ceiling} cycles")]
    GoldenDoesNotTerminate { ceiling: u64 },
    #[error("golden run ended abnormally: {0}")]
    GoldenAbnormal(String),
    #[error("invalid campaign configuration: {0}")]
    InvalidConfig(String),
    #[error("{count} injections exceed the configured ceiling of {ceiling}")]
    TooManyInjections { count: u64, ceiling: u64 },
    #[error("design does not match the core state map: {0}")]
    DesignMismatch(String),
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("injection target out of range: {0}")]
    BadInjectionPoint(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyProgram {
    name: String,
    code: Vec<u32>,
    data: Vec<u32>,
}

impl ToyProgram {
    /// Validates that every branch/jump target lies inside the program and the
    /// data image fits in memory.
    pub fn new(name: &str, code: Vec<u32>, data: Vec<u32>) -> Result<Self, ToyError> {
        if code.is_empty() {
            return Err(ToyError::InvalidProgram("empty program".into()));
        }
        if data.len() > machine::MEM_WORDS {
            return Err(ToyError::InvalidProgram(format!(
                "data image of {} words exceeds memory of {} words",
                data.len(),
                machine::MEM_WORDS
            )));
        }
        for (pc, &word) in code.iter().enumerate() {
            let instr = Instr::decode(word).ok_or_else(|| {
                ToyError::InvalidProgram(format!("illegal opcode at {pc}"))
            })?;
            if let Some(t) = instr.target() {
                if t >= code.len() {
                    return Err(ToyError::InvalidProgram(format!(
                        "branch at {pc} targets {t}, outside {} instructions",
                        code.len()
                    )));
                }
            }
        }
        Ok(ToyProgram { name: name.to_string(), code, data })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn code(&self) -> &[u32] {
        &self.code
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }
}
