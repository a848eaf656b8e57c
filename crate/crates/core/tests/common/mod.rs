//! Shared helpers for integration tests: seeded data, a random program
//! generator for chained-register workloads, and a naive interpreter coded
//! independently of the library.

#![allow(dead_code)]

pub mod batches;

use std::collections::{BTreeMap, VecDeque};

use chainsim::isa::fp_reads;
use chainsim::{Csr, DataSegment, Direction, FReg, Instr, LoopCount, Program, StreamerConfig, XReg};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub const IN_ADDR: u64 = 0x1000;
pub const OUT_ADDR: u64 = 0x2000;
pub const STREAM_IN: u64 = 0x3000;
pub const STREAM_OUT: u64 = 0x4000;
pub const OUT_SLOTS: usize = 128;

const A0: XReg = XReg::of(10);
const A1: XReg = XReg::of(11);
const T0: XReg = XReg::of(5);
const T1: XReg = XReg::of(6);
const T2: XReg = XReg::of(7);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Imbalance {
    /// One pop more than pushes on some chained register.
    ExtraPop,
    /// Capacity + 1 pushes before the first pop.
    Overflow,
}

#[derive(Debug, Clone, Copy)]
pub struct GenOpts {
    pub chain: bool,
    pub streams: bool,
    pub hwloops: bool,
    pub imbalance: Option<Imbalance>,
    pub capacity: usize,
    pub max_ops: usize,
}

impl Default for GenOpts {
    fn default() -> Self {
        GenOpts { chain: true, streams: true, hwloops: true, imbalance: None, capacity: 4, max_ops: 30 }
    }
}

struct Gen<'r> {
    rng: &'r mut ChaCha8Rng,
    opts: GenOpts,
    code: Vec<Instr>,
    chained: Vec<FReg>,
    counts: BTreeMap<FReg, usize>,
    next_out: usize,
    stream_reads: u64,
    stream_writes: u64,
}

const CONV: [u8; 5] = [8, 9, 10, 11, 12];

impl Gen<'_> {
    fn conv(&mut self) -> FReg {
        FReg::of(CONV[self.rng.gen_range(0..CONV.len())])
    }

    /// A source operand; pops at most once per chained register per instruction.
    fn source(&mut self, popped: &mut Vec<FReg>) -> FReg {
        let roll = self.rng.gen_range(0..10);
        if roll < 4 {
            let avail: Vec<FReg> = self
                .chained
                .iter()
                .copied()
                .filter(|r| self.counts[r] > 0 && !popped.contains(r))
                .collect();
            if !avail.is_empty() {
                let r = avail[self.rng.gen_range(0..avail.len())];
                popped.push(r);
                return r;
            }
        }
        if roll == 9 && self.opts.streams {
            self.stream_reads += 1;
            return FReg::of(0);
        }
        self.conv()
    }

    fn dest(&mut self, popped: &[FReg]) -> FReg {
        let roll = self.rng.gen_range(0..10);
        if roll < 5 {
            let cap = self.opts.capacity;
            let ok: Vec<FReg> = self
                .chained
                .iter()
                .copied()
                .filter(|r| {
                    let released = popped.iter().filter(|p| *p == r).count();
                    self.counts[r] < cap + released
                })
                .collect();
            if !ok.is_empty() {
                return ok[self.rng.gen_range(0..ok.len())];
            }
        }
        if roll == 9 && self.opts.streams {
            self.stream_writes += 1;
            return FReg::of(2);
        }
        self.conv()
    }

    fn account(&mut self, popped: &[FReg], dest: Option<FReg>) {
        for p in popped {
            *self.counts.get_mut(p).unwrap() -= 1;
        }
        if let Some(d) = dest {
            if let Some(c) = self.counts.get_mut(&d) {
                *c += 1;
            }
        }
    }

    fn store(&mut self, rs: FReg) {
        let off = 8 * self.next_out as i64;
        self.next_out += 1;
        self.code.push(Instr::Fsd { rs, offset: off, base: A1 });
    }

    fn op(&mut self) {
        let mut popped = Vec::new();
        let kind = self.rng.gen_range(0..12);
        match kind {
            0..=5 => {
                let a = self.source(&mut popped);
                let b = self.source(&mut popped);
                let c = self.source(&mut popped);
                let rd = self.dest(&popped);
                let instr = match kind {
                    0 | 1 => Instr::FAddD { rd, rs1: a, rs2: b },
                    2 => Instr::FSubD { rd, rs1: a, rs2: b },
                    3 => Instr::FMulD { rd, rs1: a, rs2: b },
                    4 => Instr::FMaddD { rd, rs1: a, rs2: b, rs3: c },
                    _ => Instr::FMvD { rd, rs1: a },
                };
                // Undo source picks the instruction does not read.
                let reads = fp_reads(&instr);
                let unused: Vec<FReg> = [a, b, c].into_iter().filter(|r| !reads.contains(r)).collect();
                for r in unused {
                    if let Some(i) = popped.iter().position(|p| *p == r) {
                        popped.remove(i);
                    } else if r == FReg::of(0) {
                        self.stream_reads -= 1;
                    }
                }
                self.account(&popped, Some(rd));
                self.code.push(instr);
            }
            6 | 7 => {
                let rd = self.dest(&popped);
                let off = 8 * self.rng.gen_range(0..32) as i64;
                self.account(&popped, Some(rd));
                self.code.push(Instr::Fld { rd, offset: off, base: A0 });
            }
            8 | 9 => {
                if self.next_out < OUT_SLOTS - 40 {
                    let rs = self.source(&mut popped);
                    self.account(&popped, None);
                    self.store(rs);
                }
            }
            10 => {
                let imm = self.rng.gen_range(-8..8);
                self.code.push(Instr::Addi { rd: T0, rs1: T0, imm });
            }
            _ => {
                if self.opts.hwloops {
                    let n = self.rng.gen_range(0..4u64);
                    let len = self.rng.gen_range(1..4u32);
                    self.code.push(Instr::HwLoop { n_iter: LoopCount::Imm(n), n_instr: len });
                    for _ in 0..len {
                        let rd = self.conv();
                        let (a, b) = (self.conv(), self.conv());
                        self.code.push(match self.rng.gen_range(0..3) {
                            0 => Instr::FAddD { rd, rs1: a, rs2: b },
                            1 => Instr::FMulD { rd, rs1: a, rs2: b },
                            _ => Instr::Addi { rd: T0, rs1: T0, imm: 1 },
                        });
                    }
                }
            }
        }
    }
}

/// A program whose chained registers never hold more than `capacity`
/// values in program order and are fully drained before `halt`, unless an
/// imbalance is requested.
pub fn random_program(rng: &mut ChaCha8Rng, opts: GenOpts) -> Program {
    let mut g = Gen {
        rng,
        opts,
        code: Vec::new(),
        chained: Vec::new(),
        counts: BTreeMap::new(),
        next_out: 0,
        stream_reads: 0,
        stream_writes: 0,
    };
    let mut mask = 0i64;
    if opts.chain {
        for r in 3..7u8 {
            if g.rng.gen_bool(0.5) || (r == 6 && mask == 0) {
                mask |= 1 << r;
                g.chained.push(FReg::of(r));
                g.counts.insert(FReg::of(r), 0);
            }
        }
    }
    g.code.push(Instr::Li { rd: A0, imm: IN_ADDR as i64 });
    g.code.push(Instr::Li { rd: A1, imm: OUT_ADDR as i64 });
    for (i, r) in CONV.iter().enumerate() {
        g.code.push(Instr::Fld { rd: FReg::of(*r), offset: 8 * i as i64, base: A0 });
    }
    if opts.streams {
        g.code.push(Instr::Li { rd: T1, imm: 1 });
        g.code.push(Instr::CsrRs { rd: XReg::ZERO, csr: Csr::SSR_ENABLE, rs1: T1 });
    }
    if mask != 0 {
        g.code.push(Instr::Li { rd: T2, imm: mask });
        g.code.push(Instr::CsrRs { rd: XReg::ZERO, csr: Csr::CHAIN_MASK, rs1: T2 });
    }
    let roi = g.rng.gen_bool(0.7);
    if roi {
        g.code.push(Instr::RoiBegin);
    }
    let n_ops = g.rng.gen_range(1..=opts.max_ops);
    for _ in 0..n_ops {
        g.op();
    }
    if let (Some(kind), false) = (opts.imbalance, g.chained.is_empty()) {
        let r = g.chained[0];
        match kind {
            Imbalance::ExtraPop => {
                for _ in 0..g.counts[&r] + 1 {
                    g.store(r);
                }
                g.counts.insert(r, 0);
            }
            Imbalance::Overflow => {
                for _ in g.counts[&r]..=opts.capacity {
                    let src = g.conv();
                    g.code.push(Instr::FMvD { rd: r, rs1: src });
                }
                g.counts.insert(r, opts.capacity + 1);
            }
        }
    }
    let regs: Vec<FReg> = g.chained.clone();
    for r in regs {
        for _ in 0..g.counts[&r] {
            g.store(r);
        }
        g.counts.insert(r, 0);
    }
    if roi {
        g.code.push(Instr::RoiEnd);
    }
    if mask != 0 {
        g.code.push(Instr::CsrRc { rd: XReg::ZERO, csr: Csr::CHAIN_MASK, rs1: T2 });
    }
    if opts.streams {
        g.code.push(Instr::CsrRc { rd: XReg::ZERO, csr: Csr::SSR_ENABLE, rs1: T1 });
    }
    g.code.push(Instr::Halt);

    let mut data = vec![
        DataSegment::from_f64(IN_ADDR, &uniform(g.rng, 32)),
        DataSegment::zeros(OUT_ADDR, OUT_SLOTS),
    ];
    let mut streamers = Vec::new();
    if opts.streams {
        let (reads, writes) = (g.stream_reads, g.stream_writes);
        data.push(DataSegment::from_f64(STREAM_IN, &uniform(g.rng, 128)));
        data.push(DataSegment::zeros(STREAM_OUT, 64));
        if reads > 0 {
            let repeat = if reads % 2 == 0 && g.rng.gen_bool(0.3) { 2 } else { 1 };
            let elems = reads / u64::from(repeat);
            let (bounds, strides) = if elems % 2 == 0 && elems > 2 {
                (vec![2, elems / 2], vec![8i64, 16])
            } else {
                (vec![elems], vec![8i64])
            };
            streamers.push(StreamerConfig {
                index: 0,
                reg: FReg::of(0),
                direction: Direction::Read,
                base: STREAM_IN,
                bounds,
                strides,
                repeat,
            });
        }
        if writes > 0 {
            streamers.push(StreamerConfig {
                index: 2,
                reg: FReg::of(2),
                direction: Direction::Write,
                base: STREAM_OUT,
                bounds: vec![writes],
                strides: vec![8],
                repeat: 1,
            });
        }
    }
    Program { instrs: g.code, labels: BTreeMap::new(), data, streamers, entry: 0, lines: Vec::new() }
}

/// Naive sequential interpreter. Returns final memory in the same flat
/// layout as the library (bytes `0..max segment end`).
pub fn naive_interpret(p: &Program, step_limit: usize) -> Result<Vec<u8>, String> {
    let mut words: BTreeMap<u64, u64> = BTreeMap::new();
    for seg in &p.data {
        for (i, w) in seg.words.iter().enumerate() {
            words.insert(seg.addr + 8 * i as u64, *w);
        }
    }
    let size = p.data.iter().map(|s| s.addr + 8 * s.words.len() as u64).max().unwrap_or(0);
    // Expand every stream into its full address list.
    let mut addr_lists: BTreeMap<u8, (Direction, Vec<u64>, usize)> = BTreeMap::new();
    for s in &p.streamers {
        let mut list = Vec::new();
        let total: u64 = s.bounds.iter().product();
        for n in 0..total {
            let mut rem = n;
            let mut a = s.base as i64;
            for (b, st) in s.bounds.iter().zip(&s.strides) {
                a += (rem % b) as i64 * st;
                rem /= b;
            }
            for _ in 0..s.repeat {
                list.push(a as u64);
            }
        }
        addr_lists.insert(s.reg.index() as u8, (s.direction, list, 0));
    }
    let streamed: Vec<usize> = addr_lists.keys().map(|k| *k as usize).collect();
    let mut x = [0i64; 32];
    let mut fr = [0f64; 32];
    let mut queues: Vec<VecDeque<f64>> = vec![VecDeque::new(); 32];
    let mut mask: u32 = 0;
    let mut ssr_on = false;
    // (first body index, last body index, remaining repeats)
    let mut loops: Vec<(usize, usize, u64)> = Vec::new();
    let mut pc = p.entry;

    let load = |words: &BTreeMap<u64, u64>, a: u64| -> Result<f64, String> {
        words.get(&a).map(|w| f64::from_bits(*w)).ok_or_else(|| format!("bad load {a:#x}"))
    };
    for _ in 0..step_limit {
        let instr = *p.instrs.get(pc).ok_or("pc out of range")?;
        let stream = |r: FReg| -> bool { ssr_on && streamed.contains(&r.index()) };
        // Sources.
        let mut vals = Vec::new();
        let srcs = fp_reads(&instr);
        let mut seen = Vec::new();
        for r in &srcs {
            let i = r.index();
            if stream(*r) {
                let (dir, list, pos) = addr_lists.get_mut(&(i as u8)).unwrap();
                if *dir != Direction::Read {
                    return Err("read of write stream".into());
                }
                let a = *list.get(*pos).ok_or("stream exhausted")?;
                *pos += 1;
                vals.push(load(&words, a)?);
            } else if mask >> i & 1 == 1 {
                if seen.contains(&i) {
                    return Err("double pop".into());
                }
                seen.push(i);
                let v = queues[i].pop_front().ok_or("underflow")?;
                fr[i] = v;
                vals.push(v);
            } else {
                vals.push(fr[i]);
            }
        }
        let mut write_f = |r: FReg, v: f64, words: &mut BTreeMap<u64, u64>| -> Result<(), String> {
            let i = r.index();
            if stream(r) {
                let (dir, list, pos) = addr_lists.get_mut(&(i as u8)).unwrap();
                if *dir != Direction::Write {
                    return Err("write of read stream".into());
                }
                let a = *list.get(*pos).ok_or("stream exhausted")?;
                *pos += 1;
                words.insert(a, v.to_bits());
            } else if mask >> i & 1 == 1 {
                queues[i].push_back(v);
            } else {
                fr[i] = v;
            }
            Ok(())
        };
        let mut next = pc + 1;
        match instr {
            Instr::FAddD { rd, .. } => write_f(rd, vals[0] + vals[1], &mut words)?,
            Instr::FSubD { rd, .. } => write_f(rd, vals[0] - vals[1], &mut words)?,
            Instr::FMulD { rd, .. } => write_f(rd, vals[0] * vals[1], &mut words)?,
            Instr::FMaddD { rd, .. } => write_f(rd, vals[0].mul_add(vals[1], vals[2]), &mut words)?,
            Instr::FMvD { rd, .. } => write_f(rd, vals[0], &mut words)?,
            Instr::Fld { rd, offset, base } => {
                let v = load(&words, (x[base.index()] + offset) as u64)?;
                write_f(rd, v, &mut words)?;
            }
            Instr::Fsd { offset, base, .. } => {
                let a = (x[base.index()] + offset) as u64;
                if !words.contains_key(&a) {
                    return Err(format!("bad store {a:#x}"));
                }
                words.insert(a, vals[0].to_bits());
            }
            Instr::Addi { rd, rs1, imm } => x[rd.index()] = x[rs1.index()].wrapping_add(imm),
            Instr::Add { rd, rs1, rs2 } => x[rd.index()] = x[rs1.index()].wrapping_add(x[rs2.index()]),
            Instr::Sub { rd, rs1, rs2 } => x[rd.index()] = x[rs1.index()].wrapping_sub(x[rs2.index()]),
            Instr::Li { rd, imm } => x[rd.index()] = imm,
            Instr::Bne { rs1, rs2, target } if x[rs1.index()] != x[rs2.index()] => next = target,
            Instr::Beq { rs1, rs2, target } if x[rs1.index()] == x[rs2.index()] => next = target,
            Instr::Blt { rs1, rs2, target } if x[rs1.index()] < x[rs2.index()] => next = target,
            Instr::Bne { .. } | Instr::Beq { .. } | Instr::Blt { .. } => {}
            Instr::Jump { target } => next = target,
            Instr::CsrRw { rd, csr, rs1 } | Instr::CsrRs { rd, csr, rs1 } | Instr::CsrRc { rd, csr, rs1 } => {
                let v = x[rs1.index()] as u64;
                let old = match csr {
                    Csr::SSR_ENABLE => u64::from(ssr_on),
                    Csr::CHAIN_MASK => u64::from(mask),
                    _ => return Err("unknown csr".into()),
                };
                let new = match instr {
                    Instr::CsrRw { .. } => v,
                    Instr::CsrRs { .. } => old | v,
                    _ => old & !v,
                };
                if csr == Csr::SSR_ENABLE {
                    ssr_on = new & 1 == 1;
                } else {
                    let new = new as u32;
                    for (i, q) in queues.iter_mut().enumerate() {
                        let was = mask >> i & 1 == 1;
                        let is = new >> i & 1 == 1;
                        if was && !is && !q.is_empty() {
                            return Err("drain violation".into());
                        }
                        if !was && is {
                            q.clear();
                        }
                    }
                    mask = new;
                }
                x[rd.index()] = old as i64;
            }
            Instr::HwLoop { n_iter, n_instr } => {
                let n = match n_iter {
                    LoopCount::Imm(n) => n,
                    LoopCount::Reg(r) => x[r.index()] as u64,
                };
                if n == 0 {
                    next = pc + 1 + n_instr as usize;
                } else {
                    loops.push((pc + 1, pc + n_instr as usize, n - 1));
                }
            }
            Instr::RoiBegin | Instr::RoiEnd => {}
            Instr::Halt => {
                let mut mem = vec![0u8; size as usize];
                for (a, w) in words {
                    mem[a as usize..a as usize + 8].copy_from_slice(&w.to_le_bytes());
                }
                return Ok(mem);
            }
        }
        x[0] = 0;
        if let Some(top) = loops.last_mut() {
            if pc == top.1 {
                if top.2 > 0 {
                    top.2 -= 1;
                    next = top.0;
                } else {
                    loops.pop();
                }
            }
        }
        pc = next;
    }
    Err("step limit".into())
}
