//! Cycle-accurate model of a single-issue in-order core with a pipelined
//! FPU, stream semantic registers and FIFO-chained architectural registers.
//!
//! * [`isa`] and [`asm`]: instruction subset, text assembler and emitter.
//! * [`sim`]: timing model, issue rules and an untimed functional reference.
//! * [`kernels`]: vector and stencil benchmark generators with oracles.
//! * [`report`]: utilization, energy and variant comparison tables.

pub mod asm;
pub mod error;
pub mod isa;
pub mod kernels;
pub mod program;
pub mod report;
pub mod sim;

pub use asm::{emit_text, parse_program};
pub use error::{ConfigError, Fault, KernelError, ReportError};
pub use isa::{classify, ChainMask, Csr, FReg, Instr, InstrClass, LoopCount, XReg};
pub use program::{DataSegment, Diagnostic, DiagnosticKind, Direction, Program, StreamerConfig};
pub use report::{compare, energy, energy_efficiency, fpu_utilization, ComparisonTable, Counters, EnergyParams, RunRecord};
pub use sim::{
    can_issue, functional_reference, run, run_with, CoreConfig, IssueVerdict, MachineState, Outcome, SimOptions,
    SimResult, StallReason,
};
