//! The unit of simulation: instructions plus launch state.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::isa::{FReg, Instr};

/// Largest number of loop dimensions a streamer supports.
pub const MAX_STREAM_DIMS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Read,
    Write,
}

/// Affine address generator bound to one FP register.
///
/// Dimension 0 is innermost. Element `i` of the walk lives at
/// `base + sum(idx_d * strides[d])`; read streams hand out each element
/// `repeat` times before advancing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamerConfig {
    pub index: usize,
    pub reg: FReg,
    pub direction: Direction,
    pub base: u64,
    pub bounds: Vec<u64>,
    pub strides: Vec<i64>,
    pub repeat: u32,
}

impl StreamerConfig {
    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    pub fn total_elements(&self) -> u64 {
        self.bounds.iter().product()
    }

    pub fn check(&self) -> Result<(), String> {
        let dims = self.bounds.len();
        if dims == 0 || dims > MAX_STREAM_DIMS {
            return Err(format!("dims must be in 1..={MAX_STREAM_DIMS}, got {dims}"));
        }
        if self.strides.len() != dims {
            return Err("bounds and strides differ in length".into());
        }
        if self.bounds.contains(&0) {
            return Err("zero bound".into());
        }
        if !self.base.is_multiple_of(8) || self.strides.iter().any(|s| s % 8 != 0) {
            return Err("addresses must be 8-byte aligned".into());
        }
        if self.repeat == 0 {
            return Err("repeat must be at least 1".into());
        }
        if self.direction == Direction::Write && self.repeat != 1 {
            return Err("repeat is only meaningful for read streams".into());
        }
        Ok(())
    }
}

/// Initial memory contents: consecutive doubles starting at `addr`.
/// Values are kept as raw bit patterns so equality is exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSegment {
    pub addr: u64,
    pub words: Vec<u64>,
}

impl DataSegment {
    pub fn from_f64(addr: u64, values: &[f64]) -> Self {
        DataSegment { addr, words: values.iter().map(|v| v.to_bits()).collect() }
    }

    pub fn zeros(addr: u64, count: usize) -> Self {
        DataSegment { addr, words: vec![0; count] }
    }

    pub fn end(&self) -> u64 {
        self.addr + 8 * self.words.len() as u64
    }

    pub fn contains(&self, addr: u64) -> bool {
        (self.addr..self.end()).contains(&addr)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Program {
    pub instrs: Vec<Instr>,
    pub labels: BTreeMap<String, usize>,
    pub data: Vec<DataSegment>,
    pub streamers: Vec<StreamerConfig>,
    pub entry: usize,
    /// 1-based source line per instruction; empty for generated programs.
    #[serde(default)]
    pub lines: Vec<usize>,
}

impl Program {
    pub fn line_of(&self, index: usize) -> usize {
        self.lines.get(index).copied().unwrap_or(0)
    }

    /// Bytes of simulated memory: everything up to the end of the last segment.
    pub fn mem_size(&self) -> usize {
        self.data.iter().map(|s| s.end()).max().unwrap_or(0) as usize
    }

    /// Equality ignoring label names and source positions.
    pub fn same_structure(&self, other: &Program) -> bool {
        let targets = |p: &Program| {
            let mut t: Vec<usize> = p.labels.values().copied().collect();
            t.sort_unstable();
            t.dedup();
            t
        };
        self.instrs == other.instrs
            && self.data == other.data
            && self.streamers == other.streamers
            && self.entry == other.entry
            && targets(self) == targets(other)
    }

    /// Index of the data segment containing `addr`.
    pub fn segment_of(&self, addr: u64) -> Option<usize> {
        self.data.iter().position(|s| s.contains(addr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticKind {
    UnknownMnemonic,
    BadRegister,
    BadImmediate,
    WrongArity,
    DuplicateLabel,
    UnresolvedLabel,
    IllegalLoopBody,
    OverlappingData,
    BadDirective,
    BadStream,
    UnmappedStream,
    NoHalt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based; 0 for program-level findings without a source position.
    pub line: usize,
    pub column: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, column: usize, kind: DiagnosticKind, message: String) -> Self {
        Diagnostic { line, column, kind, message }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {:?}: {}", self.line, self.column, self.kind, self.message)
    }
}
