//! Benchmark program generators with bit-exact oracles.

mod data;
mod stencil;
mod vecop;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::isa::{fp_reads, fp_writes, stream_registers, Csr, FReg, Instr, XReg};
use crate::program::Program;

pub use data::{
    bench_matrix, build_case, random_stencil, random_vecop, variant_labels, BenchCase, CaseSize, BENCH_STENCIL_EDGE,
    BENCH_VECOP_N, KERNEL_NAMES,
};
pub use stencil::{build_stencil, reference_stencil, symmetric_coeffs, StencilKind, StencilSpec, StencilVariant};
pub use vecop::{build_vecop, reference_vecop, VecopSpec, VecopVariant};

/// Where stencil coefficients live during the hot loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CoeffPlacement {
    Rf,
    Ssr,
    ExplicitLoad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelBundle {
    pub program: Program,
    /// Output regions and their oracle values.
    pub expected_memory: Vec<(u64, Vec<f64>)>,
    pub fp_regs_used: usize,
    pub meta: BTreeMap<String, String>,
    /// Data segment holding stencil coefficients.
    pub coeff_segment: Option<usize>,
}

impl KernelBundle {
    /// Compares `mem` with the expected outputs bit for bit. Returns the
    /// first mismatching address.
    pub fn check(&self, mem: &[u8]) -> Result<(), u64> {
        for (addr, values) in &self.expected_memory {
            for (i, v) in values.iter().enumerate() {
                let a = addr + 8 * i as u64;
                let got = mem
                    .get(a as usize..a as usize + 8)
                    .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")));
                if got != Some(v.to_bits()) {
                    return Err(a);
                }
            }
        }
        Ok(())
    }

    /// Output doubles read back from a memory image.
    pub fn outputs(&self, mem: &[u8]) -> Vec<f64> {
        self.expected_memory
            .iter()
            .flat_map(|(addr, values)| {
                (0..values.len()).map(move |i| {
                    let a = (*addr + 8 * i as u64) as usize;
                    f64::from_le_bytes(mem[a..a + 8].try_into().expect("8 bytes"))
                })
            })
            .collect()
    }
}

/// Distinct FP registers a program references. When it enables SSRs, the
/// `ssr_count` stream registers are counted as reserved.
pub fn fp_regs_used(program: &Program, ssr_count: usize) -> usize {
    let mut regs: BTreeSet<FReg> = BTreeSet::new();
    let mut ssr = false;
    for i in &program.instrs {
        regs.extend(fp_reads(i));
        regs.extend(fp_writes(i));
        if matches!(i, Instr::CsrRs { csr: Csr::SSR_ENABLE, .. } | Instr::CsrRw { csr: Csr::SSR_ENABLE, .. }) {
            ssr = true;
        }
    }
    if ssr {
        regs.extend(stream_registers(ssr_count));
    }
    regs.len()
}

pub(crate) const T0: XReg = XReg::of(5);
pub(crate) const T1: XReg = XReg::of(6);
pub(crate) const T2: XReg = XReg::of(7);
pub(crate) const A0: XReg = XReg::of(10);
pub(crate) const A1: XReg = XReg::of(11);
pub(crate) const A2: XReg = XReg::of(12);
pub(crate) const A3: XReg = XReg::of(13);

pub(crate) fn f(i: usize) -> FReg {
    FReg::of(i as u8)
}

/// `li t, value; csrs csr, t`
pub(crate) fn set_csr(code: &mut Vec<Instr>, csr: Csr, tmp: XReg, value: i64) {
    code.push(Instr::Li { rd: tmp, imm: value });
    code.push(Instr::CsrRs { rd: XReg::ZERO, csr, rs1: tmp });
}

pub(crate) fn clear_csr(code: &mut Vec<Instr>, csr: Csr, tmp: XReg) {
    code.push(Instr::CsrRc { rd: XReg::ZERO, csr, rs1: tmp });
}
