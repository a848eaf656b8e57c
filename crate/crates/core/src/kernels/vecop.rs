//! `a = b * (c + d)` over `n` elements, streamed through SSRs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{clear_csr, f, fp_regs_used, set_csr, KernelBundle, A0, A1, T0, T1, T2};
use crate::error::KernelError;
use crate::isa::{Csr, FReg, Instr};
use crate::program::{DataSegment, Direction, Program, StreamerConfig};
use crate::sim::CoreConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VecopVariant {
    /// One `fadd`/`fmul` pair per iteration.
    Base,
    /// `unroll` adds into distinct registers, then `unroll` multiplies.
    Unroll4,
    /// Unrolled shape with every sum passing through one chained register.
    Chained,
}

impl VecopVariant {
    pub const ALL: [VecopVariant; 3] = [VecopVariant::Base, VecopVariant::Unroll4, VecopVariant::Chained];

    pub fn label(self) -> &'static str {
        match self {
            VecopVariant::Base => "Base",
            VecopVariant::Unroll4 => "Unroll4",
            VecopVariant::Chained => "Chained",
        }
    }

    /// Case-insensitive label match.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.label().eq_ignore_ascii_case(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VecopSpec {
    pub b: f64,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub variant: VecopVariant,
    /// Unroll factor of the unrolled shapes; `None` means `fpu_depth + 1`.
    pub unroll: Option<usize>,
}

impl VecopSpec {
    pub fn new(variant: VecopVariant, b: f64, c: Vec<f64>, d: Vec<f64>) -> Self {
        VecopSpec { b, c, d, variant, unroll: None }
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    fn unroll_for(&self, config: &CoreConfig) -> usize {
        match self.variant {
            VecopVariant::Base => 1,
            _ => self.unroll.unwrap_or(config.fpu_depth + 1),
        }
    }
}

const B_ADDR: u64 = 0x100;
const C_ADDR: u64 = 0x1000;

pub fn reference_vecop(spec: &VecopSpec) -> Vec<f64> {
    spec.c.iter().zip(&spec.d).map(|(c, d)| (c + d) * spec.b).collect()
}

pub fn build_vecop(spec: &VecopSpec, config: &CoreConfig) -> Result<KernelBundle, KernelError> {
    let n = spec.n();
    if n == 0 || spec.d.len() != n {
        return Err(KernelError::InvalidSpec("c and d must be non-empty and of equal length".into()));
    }
    if config.ssr_count < 3 {
        return Err(KernelError::InvalidSpec("vecop needs three SSRs".into()));
    }
    let u = spec.unroll_for(config);
    if u == 0 || !n.is_multiple_of(u) {
        return Err(KernelError::InvalidSpec(format!("n={n} is not divisible by the unroll factor {u}")));
    }
    if 3 + u > 10 {
        return Err(KernelError::InvalidSpec(format!("unroll factor {u} would overlap fa0 (at most 7)")));
    }

    let d_addr = C_ADDR + 8 * n as u64;
    let a_addr = d_addr + 8 * n as u64;
    let stream = |index: usize, reg: u8, direction, base| StreamerConfig {
        index,
        reg: FReg::of(reg),
        direction,
        base,
        bounds: vec![n as u64],
        strides: vec![8],
        repeat: 1,
    };
    let (ft0, ft1, ft2, ft3, fa0) = (f(0), f(1), f(2), f(3), f(10));

    let mut code = vec![
        Instr::Li { rd: T0, imm: B_ADDR as i64 },
        Instr::Fld { rd: fa0, offset: 0, base: T0 },
    ];
    set_csr(&mut code, Csr::SSR_ENABLE, T1, 1);
    let chained = spec.variant == VecopVariant::Chained;
    if chained {
        set_csr(&mut code, Csr::CHAIN_MASK, T2, 1 << 3);
    }
    code.push(Instr::Li { rd: A0, imm: 0 });
    code.push(Instr::Li { rd: A1, imm: (n / u) as i64 });
    code.push(Instr::RoiBegin);
    let top = code.len();
    match spec.variant {
        VecopVariant::Base => {
            code.push(Instr::FAddD { rd: ft3, rs1: ft0, rs2: ft1 });
            code.push(Instr::FMulD { rd: ft2, rs1: ft3, rs2: fa0 });
        }
        VecopVariant::Unroll4 => {
            for i in 0..u {
                code.push(Instr::FAddD { rd: f(3 + i), rs1: ft0, rs2: ft1 });
            }
            for i in 0..u {
                code.push(Instr::FMulD { rd: ft2, rs1: f(3 + i), rs2: fa0 });
            }
        }
        VecopVariant::Chained => {
            for _ in 0..u {
                code.push(Instr::FAddD { rd: ft3, rs1: ft0, rs2: ft1 });
            }
            for _ in 0..u {
                code.push(Instr::FMulD { rd: ft2, rs1: ft3, rs2: fa0 });
            }
        }
    }
    code.push(Instr::Addi { rd: A0, rs1: A0, imm: 1 });
    code.push(Instr::Bne { rs1: A0, rs2: A1, target: top });
    code.push(Instr::RoiEnd);
    if chained {
        clear_csr(&mut code, Csr::CHAIN_MASK, T2);
    }
    clear_csr(&mut code, Csr::SSR_ENABLE, T1);
    code.push(Instr::Halt);

    let program = Program {
        instrs: code,
        labels: BTreeMap::from([("loop".to_string(), top)]),
        data: vec![
            DataSegment::from_f64(B_ADDR, &[spec.b]),
            DataSegment::from_f64(C_ADDR, &spec.c),
            DataSegment::from_f64(d_addr, &spec.d),
            DataSegment::zeros(a_addr, n),
        ],
        streamers: vec![
            stream(0, 0, Direction::Read, C_ADDR),
            stream(1, 1, Direction::Read, d_addr),
            stream(2, 2, Direction::Write, a_addr),
        ],
        entry: 0,
        lines: Vec::new(),
    };
    let used = fp_regs_used(&program, config.ssr_count);
    let meta = BTreeMap::from([
        ("kernel".to_string(), "vecop".to_string()),
        ("variant".to_string(), spec.variant.label().to_string()),
        ("unroll".to_string(), u.to_string()),
        ("streams".to_string(), "ft0,ft1,ft2".to_string()),
    ]);
    Ok(KernelBundle {
        program,
        expected_memory: vec![(a_addr, reference_vecop(spec))],
        fp_regs_used: used,
        meta,
        coeff_segment: None,
    })
}
