//! 27-point radius-1 stencils on a padded 3D grid.
//!
//! Points are processed in tiles of `unroll` consecutive x positions. For
//! every tile the schedule runs `for k in 0..27 { for p in tile { .. } }`, so
//! `unroll` independent accumulations are in flight and each point still
//! accumulates in ascending `k`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{clear_csr, f, fp_regs_used, set_csr, CoeffPlacement, KernelBundle, A2, A3, T1, T2};
use crate::error::KernelError;
use crate::isa::{Csr, FReg, Instr, LoopCount};
use crate::program::{DataSegment, Direction, Program, StreamerConfig};
use crate::sim::CoreConfig;

pub const TAPS: usize = 27;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StencilKind {
    Box3d1r,
    J3d27pt,
}

impl StencilKind {
    pub const ALL: [StencilKind; 2] = [StencilKind::Box3d1r, StencilKind::J3d27pt];

    pub fn name(self) -> &'static str {
        match self {
            StencilKind::Box3d1r => "box3d1r",
            StencilKind::J3d27pt => "j3d27pt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StencilVariant {
    /// Coefficients loaded with `fld` for every use; results stored with `fsd`.
    BaseMM,
    /// As `BaseMM` with results written through a write stream.
    BaseM,
    /// Coefficients streamed through an SSR; results stored with `fsd`.
    Base,
    /// Coefficients resident in the register file, one chained accumulator.
    Chaining,
    /// As `Chaining` with results written through a write stream.
    ChainingPlus,
    /// `Base` with coefficients in the register file instead of an SSR.
    /// Never fits in 32 registers; exists to demonstrate the budget check.
    BaseRfCoeffs,
}

impl StencilVariant {
    pub const ALL: [StencilVariant; 5] = [
        StencilVariant::BaseMM,
        StencilVariant::BaseM,
        StencilVariant::Base,
        StencilVariant::Chaining,
        StencilVariant::ChainingPlus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            StencilVariant::BaseMM => "Base--",
            StencilVariant::BaseM => "Base-",
            StencilVariant::Base => "Base",
            StencilVariant::Chaining => "Chaining",
            StencilVariant::ChainingPlus => "Chaining+",
            StencilVariant::BaseRfCoeffs => "Base(RF)",
        }
    }

    /// Case-insensitive label match.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.label().eq_ignore_ascii_case(s))
    }

    pub fn coeff_placement(self) -> CoeffPlacement {
        match self {
            StencilVariant::BaseMM | StencilVariant::BaseM => CoeffPlacement::ExplicitLoad,
            StencilVariant::Base => CoeffPlacement::Ssr,
            _ => CoeffPlacement::Rf,
        }
    }

    fn chained(self) -> bool {
        matches!(self, StencilVariant::Chaining | StencilVariant::ChainingPlus)
    }

    fn stream_output(self) -> bool {
        matches!(self, StencilVariant::BaseM | StencilVariant::ChainingPlus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StencilSpec {
    pub kind: StencilKind,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Indexed by `(dz+1)*9 + (dy+1)*3 + (dx+1)`.
    pub coeffs: Vec<f64>,
    /// Padded grid of `(nx+2)*(ny+2)*(nz+2)` doubles, x fastest.
    pub input: Vec<f64>,
    pub variant: StencilVariant,
    /// Points per tile; `None` means `fpu_depth + 1`.
    pub unroll: Option<usize>,
}

impl StencilSpec {
    pub fn new(
        kind: StencilKind,
        (nx, ny, nz): (usize, usize, usize),
        coeffs: Vec<f64>,
        input: Vec<f64>,
        variant: StencilVariant,
    ) -> Self {
        StencilSpec { kind, nx, ny, nz, coeffs, input, variant, unroll: None }
    }

    pub fn padded_len(nx: usize, ny: usize, nz: usize) -> usize {
        (nx + 2) * (ny + 2) * (nz + 2)
    }

    pub fn points(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    /// Flat index into `input` of interior point `(x, y, z)` shifted by `(dx, dy, dz)`.
    pub fn input_index(&self, (x, y, z): (usize, usize, usize), (dx, dy, dz): (i64, i64, i64)) -> usize {
        let px = (x as i64 + 1 + dx) as usize;
        let py = (y as i64 + 1 + dy) as usize;
        let pz = (z as i64 + 1 + dz) as usize;
        (pz * (self.ny + 2) + py) * (self.nx + 2) + px
    }

    fn check(&self, u: usize) -> Result<(), KernelError> {
        let bad = |m: String| Err(KernelError::InvalidSpec(m));
        if self.nx < 2 || self.ny < 2 || self.nz < 2 {
            return bad("grid dimensions must be at least 2".into());
        }
        if self.coeffs.len() != TAPS {
            return bad(format!("expected {TAPS} coefficients, got {}", self.coeffs.len()));
        }
        if self.input.len() != Self::padded_len(self.nx, self.ny, self.nz) {
            return bad("input length does not match the padded grid".into());
        }
        if u == 0 || !self.nx.is_multiple_of(u) {
            return bad(format!("nx={} is not divisible by the unroll factor {u}", self.nx));
        }
        Ok(())
    }
}

/// Coefficients that depend only on the Manhattan distance of the offset:
/// `weights[0]` centre, `[1]` faces, `[2]` edges, `[3]` corners.
pub fn symmetric_coeffs(weights: [f64; 4]) -> Vec<f64> {
    offsets().map(|(dx, dy, dz)| weights[(dx.abs() + dy.abs() + dz.abs()) as usize]).collect()
}

/// Offsets in ascending tap order: dx fastest, then dy, then dz.
fn offsets() -> impl Iterator<Item = (i64, i64, i64)> {
    (0..TAPS as i64).map(|k| (k % 3 - 1, k / 3 % 3 - 1, k / 9 - 1))
}

/// Output grid, x fastest. Every point accumulates in ascending tap order,
/// starting with a plain product and continuing with fused multiply-adds.
pub fn reference_stencil(spec: &StencilSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.points());
    for z in 0..spec.nz {
        for y in 0..spec.ny {
            for x in 0..spec.nx {
                let mut acc = 0.0;
                for (k, off) in offsets().enumerate() {
                    let v = spec.input[spec.input_index((x, y, z), off)];
                    acc = if k == 0 { v * spec.coeffs[0] } else { v.mul_add(spec.coeffs[k], acc) };
                }
                out.push(acc);
            }
        }
    }
    out
}

const IN_ADDR: u64 = 0x1000;

pub fn build_stencil(spec: &StencilSpec, config: &CoreConfig) -> Result<KernelBundle, KernelError> {
    let u = spec.unroll.unwrap_or(config.fpu_depth + 1);
    spec.check(u)?;
    if config.ssr_count < 3 {
        return Err(KernelError::InvalidSpec("stencils need three SSRs".into()));
    }
    let v = spec.variant;
    let reserved = 3;
    let planned = match v.coeff_placement() {
        CoeffPlacement::Rf if v.chained() => reserved + 1 + TAPS,
        CoeffPlacement::Rf => reserved + u + TAPS,
        CoeffPlacement::Ssr => reserved + u,
        CoeffPlacement::ExplicitLoad => reserved + u + 2,
    };
    if planned > 32 {
        return Err(KernelError::RegisterBudget { needed: planned });
    }
    if v.chained() && u > config.fifo_capacity() {
        return Err(KernelError::InvalidSpec(format!(
            "{u} points in flight exceed the chained FIFO capacity {}",
            config.fifo_capacity()
        )));
    }

    let (nx, ny, nz) = (spec.nx as u64, spec.ny as u64, spec.nz as u64);
    let uu = u as u64;
    let row = 8 * (nx + 2) as i64;
    let plane = row * (ny + 2) as i64;
    let coef_addr = IN_ADDR + 8 * spec.input.len() as u64;
    let out_addr = coef_addr + 8 * TAPS as u64;
    let points = spec.points();
    let tiles = (nx / uu) * ny * nz;

    let mut streamers = vec![StreamerConfig {
        index: 0,
        reg: f(0),
        direction: Direction::Read,
        base: IN_ADDR,
        bounds: vec![uu, 3, 3, 3, nx / uu, ny, nz],
        strides: vec![8, 8, row, plane, 8 * uu as i64, row, plane],
        repeat: 1,
    }];
    if v.coeff_placement() == CoeffPlacement::Ssr {
        streamers.push(StreamerConfig {
            index: 1,
            reg: f(1),
            direction: Direction::Read,
            base: coef_addr,
            bounds: vec![uu, TAPS as u64, tiles],
            strides: vec![0, 8, 0],
            repeat: 1,
        });
    }
    if v.stream_output() {
        streamers.push(StreamerConfig {
            index: 2,
            reg: f(2),
            direction: Direction::Write,
            base: out_addr,
            bounds: vec![points as u64],
            strides: vec![8],
            repeat: 1,
        });
    }

    let mut code = vec![
        Instr::Li { rd: A2, imm: out_addr as i64 },
        Instr::Li { rd: A3, imm: coef_addr as i64 },
    ];
    set_csr(&mut code, Csr::SSR_ENABLE, T1, 1);
    if v.coeff_placement() == CoeffPlacement::Rf {
        for k in 0..TAPS {
            code.push(Instr::Fld { rd: f(4 + k), offset: 8 * k as i64, base: A3 });
        }
    }
    if v.chained() {
        set_csr(&mut code, Csr::CHAIN_MASK, T2, 1 << 3);
    }
    code.push(Instr::RoiBegin);
    let loop_at = code.len();
    code.push(Instr::HwLoop { n_iter: LoopCount::Imm(tiles), n_instr: 0 });

    let acc = |p: usize| if v.chained() { f(3) } else { f(3 + p) };
    let temp = |j: usize| f(3 + u + j % 2);
    let coef_load = |j: usize| Instr::Fld { rd: temp(j), offset: 8 * (j / u) as i64, base: A3 };
    let ops = TAPS * u;
    let explicit = v.coeff_placement() == CoeffPlacement::ExplicitLoad;
    if explicit {
        code.extend((0..ops.min(2)).map(coef_load));
    }
    for j in 0..ops {
        let (k, p) = (j / u, j % u);
        let coef: FReg = match v.coeff_placement() {
            CoeffPlacement::ExplicitLoad => temp(j),
            CoeffPlacement::Ssr => f(1),
            CoeffPlacement::Rf => f(4 + k),
        };
        let rd = if k == TAPS - 1 && v.stream_output() { f(2) } else { acc(p) };
        code.push(if k == 0 {
            Instr::FMulD { rd, rs1: f(0), rs2: coef }
        } else {
            Instr::FMaddD { rd, rs1: f(0), rs2: coef, rs3: acc(p) }
        });
        if explicit && j + 2 < ops {
            code.push(coef_load(j + 2));
        }
    }
    if !v.stream_output() {
        for p in 0..u {
            code.push(Instr::Fsd { rs: acc(p), offset: 8 * p as i64, base: A2 });
        }
        code.push(Instr::Addi { rd: A2, rs1: A2, imm: 8 * u as i64 });
    }
    let body = (code.len() - loop_at - 1) as u32;
    code[loop_at] = Instr::HwLoop { n_iter: LoopCount::Imm(tiles), n_instr: body };

    code.push(Instr::RoiEnd);
    if v.chained() {
        clear_csr(&mut code, Csr::CHAIN_MASK, T2);
    }
    clear_csr(&mut code, Csr::SSR_ENABLE, T1);
    code.push(Instr::Halt);

    let program = Program {
        instrs: code,
        labels: BTreeMap::from([("tile".to_string(), loop_at + 1)]),
        data: vec![
            DataSegment::from_f64(IN_ADDR, &spec.input),
            DataSegment::from_f64(coef_addr, &spec.coeffs),
            DataSegment::zeros(out_addr, points),
        ],
        streamers,
        entry: 0,
        lines: Vec::new(),
    };
    let used = fp_regs_used(&program, config.ssr_count);
    if used > 32 {
        return Err(KernelError::RegisterBudget { needed: used });
    }
    let streams: Vec<String> = program.streamers.iter().map(|s| s.reg.to_string()).collect();
    let meta = BTreeMap::from([
        ("kernel".to_string(), spec.kind.name().to_string()),
        ("variant".to_string(), v.label().to_string()),
        ("unroll".to_string(), u.to_string()),
        ("streams".to_string(), streams.join(",")),
        ("coefficients".to_string(), format!("{:?}", v.coeff_placement())),
    ]);
    Ok(KernelBundle {
        program,
        expected_memory: vec![(out_addr, reference_stencil(spec))],
        fp_regs_used: used,
        meta,
        coeff_segment: Some(1),
    })
}
