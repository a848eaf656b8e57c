use thiserror::Error;

use crate::isa::FReg;

/// Architectural faults raised by the simulator or the functional reference.
#[derive(Debug, Clone, PartialEq, Eq, Error, serde::Serialize, serde::Deserialize)]
pub enum Fault {
    #[error("misaligned access at {0:#x}")]
    Misaligned(u64),
    #[error("access outside memory at {0:#x}")]
    OutOfRange(u64),
    #[error("unknown CSR {0:#x}")]
    UnknownCsr(u16),
    #[error("chaining disabled on {0} while its FIFO is not empty")]
    ChainDrainViolation(FReg),
    #[error("chaining is not supported by this core")]
    ChainingUnsupported,
    #[error("stream on {0} exhausted")]
    StreamExhausted(FReg),
    #[error("{0} used against its stream direction")]
    StreamDirection(FReg),
    #[error("chained {0} read twice by one instruction")]
    DoublePop(FReg),
    #[error("read from empty FIFO {0}")]
    FifoUnderflow(FReg),
    #[error("pc {0} outside program")]
    PcOutOfRange(usize),
    #[error("step limit exceeded")]
    StepLimit,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("invalid kernel parameters: {0}")]
    InvalidSpec(String),
    #[error("register plan needs {needed} FP registers, only 32 exist")]
    RegisterBudget { needed: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("region of interest has zero cycles")]
    ZeroCycles,
    #[error("baseline `{0}` missing")]
    MissingBaseline(String),
    #[error("no entries to compare")]
    Empty,
}
