//! Seeded input data and the full benchmark matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    build_stencil, build_vecop, KernelBundle, StencilKind, StencilSpec, StencilVariant, VecopSpec, VecopVariant,
};
use crate::error::KernelError;
use crate::sim::CoreConfig;

/// Vector length of the vecop entries in the benchmark matrix.
pub const BENCH_VECOP_N: usize = 1024;
/// Interior edge length of the stencil entries in the benchmark matrix.
pub const BENCH_STENCIL_EDGE: usize = 16;

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Vecop operands drawn uniformly from `[-1, 1)`.
pub fn random_vecop(variant: VecopVariant, n: usize, seed: u64) -> VecopSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = rng.gen_range(-1.0..1.0);
    let c = uniform(&mut rng, n);
    let d = uniform(&mut rng, n);
    VecopSpec::new(variant, b, c, d)
}

/// Stencil grid and coefficients drawn uniformly from `[-1, 1)`. `J3d27pt`
/// uses distance-symmetric coefficients.
pub fn random_stencil(kind: StencilKind, dims: (usize, usize, usize), variant: StencilVariant, seed: u64) -> StencilSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = match kind {
        StencilKind::Box3d1r => uniform(&mut rng, 27),
        StencilKind::J3d27pt => {
            let w = uniform(&mut rng, 4);
            super::symmetric_coeffs([w[0], w[1], w[2], w[3]])
        }
    };
    let input = uniform(&mut rng, StencilSpec::padded_len(dims.0, dims.1, dims.2));
    StencilSpec::new(kind, dims, coeffs, input, variant)
}

#[derive(Debug, Clone)]
pub struct BenchCase {
    pub kernel: String,
    pub label: String,
    pub bundle: KernelBundle,
}

/// Problem sizes for a named kernel: `n` for vecop, the grid for stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaseSize {
    pub n: usize,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Default for CaseSize {
    fn default() -> Self {
        let e = BENCH_STENCIL_EDGE;
        CaseSize { n: BENCH_VECOP_N, nx: e, ny: e, nz: e }
    }
}

pub const KERNEL_NAMES: [&str; 3] = ["vecop", "box3d1r", "j3d27pt"];

/// Labels of the variants of `kernel` in the benchmark matrix.
pub fn variant_labels(kernel: &str) -> Option<Vec<&'static str>> {
    match kernel {
        "vecop" => Some(VecopVariant::ALL.iter().map(|v| v.label()).collect()),
        _ => StencilKind::parse(kernel).map(|_| StencilVariant::ALL.iter().map(|v| v.label()).collect()),
    }
}

/// Builds one kernel by name with seeded data. All variants of a kernel
/// share their data; different kernels draw from different streams.
pub fn build_case(
    kernel: &str,
    variant: &str,
    size: CaseSize,
    seed: u64,
    config: &CoreConfig,
) -> Result<BenchCase, KernelError> {
    let unknown = |what: &str, name: &str| KernelError::InvalidSpec(format!("unknown {what} `{name}`"));
    let (label, bundle) = if kernel == "vecop" {
        let v = VecopVariant::parse(variant).ok_or_else(|| unknown("vecop variant", variant))?;
        (v.label(), build_vecop(&random_vecop(v, size.n, seed), config)?)
    } else {
        let kind = StencilKind::parse(kernel).ok_or_else(|| unknown("kernel", kernel))?;
        let v = StencilVariant::parse(variant).ok_or_else(|| unknown("stencil variant", variant))?;
        let offset = 1 + StencilKind::ALL.iter().position(|k| *k == kind).unwrap_or(0) as u64;
        let spec = random_stencil(kind, (size.nx, size.ny, size.nz), v, seed.wrapping_add(offset));
        (v.label(), build_stencil(&spec, config)?)
    };
    Ok(BenchCase { kernel: kernel.to_string(), label: label.to_string(), bundle })
}

/// Every kernel in every variant: vecop (n = 1024) in three variants and
/// both stencils (16³) in five.
pub fn bench_matrix(config: &CoreConfig, seed: u64) -> Result<Vec<BenchCase>, KernelError> {
    let mut cases = Vec::new();
    for kernel in KERNEL_NAMES {
        for label in variant_labels(kernel).unwrap_or_default() {
            cases.push(build_case(kernel, label, CaseSize::default(), seed, config)?);
        }
    }
    Ok(cases)
}
