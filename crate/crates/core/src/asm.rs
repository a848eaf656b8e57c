//! Text assembler and emitter.
//!
//! One instruction per line, `#` and `//` comments, `label:` prefixes, and
//! three directives:
//!
//! ```text
//! .data 0x1000: 1.0, 2.5, -3.0
//! .stream 0 dir=r base=0x1000 dims=1 bounds=[3] strides=[8] reg=ft0 repeat=1
//! .entry start
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::isa::{validate_program, Csr, FReg, Instr, LoopCount, XReg};
use crate::program::{
    DataSegment, Diagnostic, DiagnosticKind, Direction, Program, StreamerConfig,
};

/// Decimal or `0x` hex integer with optional leading `-`.
/// Hex literals are taken as 64-bit patterns.
pub fn parse_int(text: &str) -> Option<i64> {
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let value = if let Some(hex) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        if hex.is_empty() || hex.starts_with(['+', '-']) {
            return None;
        }
        u64::from_str_radix(hex, 16).ok()? as i64
    } else {
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if neg {
            // Allows i64::MIN.
            return format!("-{body}").parse::<i64>().ok();
        }
        body.parse::<i64>().ok()?
    };
    Some(if neg { value.wrapping_neg() } else { value })
}

/// Unresolved branch operand awaiting label resolution.
struct Fixup {
    instr: usize,
    label: String,
    line: usize,
    column: usize,
}

#[derive(Clone, Copy)]
struct Operand<'a> {
    text: &'a str,
    column: usize,
}

struct LineCtx<'d> {
    line: usize,
    diags: &'d mut Vec<Diagnostic>,
}

impl LineCtx<'_> {
    fn err(&mut self, column: usize, kind: DiagnosticKind, message: impl Into<String>) {
        self.diags.push(Diagnostic::new(self.line, column, kind, message.into()));
    }

    fn freg(&mut self, op: Operand) -> Option<FReg> {
        let r = FReg::parse(op.text);
        if r.is_none() {
            self.err(op.column, DiagnosticKind::BadRegister, format!("expected FP register, found `{}`", op.text));
        }
        r
    }

    fn xreg(&mut self, op: Operand) -> Option<XReg> {
        let r = XReg::parse(op.text);
        if r.is_none() {
            self.err(op.column, DiagnosticKind::BadRegister, format!("expected integer register, found `{}`", op.text));
        }
        r
    }

    fn imm(&mut self, op: Operand) -> Option<i64> {
        let v = parse_int(op.text);
        if v.is_none() {
            self.err(op.column, DiagnosticKind::BadImmediate, format!("bad immediate `{}`", op.text));
        }
        v
    }

    fn csr(&mut self, op: Operand) -> Option<Csr> {
        let c = Csr::parse(op.text);
        if c.is_none() {
            self.err(op.column, DiagnosticKind::BadImmediate, format!("bad CSR `{}`", op.text));
        }
        c
    }

    /// `offset(base)`
    fn mem(&mut self, op: Operand) -> Option<(i64, XReg)> {
        let parsed = op.text.strip_suffix(')').and_then(|t| t.split_once('('));
        let Some((off, base)) = parsed else {
            self.err(op.column, DiagnosticKind::BadImmediate, format!("expected `offset(reg)`, found `{}`", op.text));
            return None;
        };
        let off = if off.trim().is_empty() { Some(0) } else { self.imm(Operand { text: off.trim(), column: op.column }) };
        let base = self.xreg(Operand { text: base.trim(), column: op.column });
        Some((off?, base?))
    }

    fn label(&mut self, op: Operand) -> Option<String> {
        if is_ident(op.text) {
            Some(op.text.to_string())
        } else {
            self.err(op.column, DiagnosticKind::UnresolvedLabel, format!("bad label `{}`", op.text));
            None
        }
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn strip_comment(line: &str) -> &str {
    let cut = [line.find('#'), line.find("//")].into_iter().flatten().min();
    match cut {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Splits `text` (starting at 1-based `column`) on commas.
fn split_operands(text: &str, column: usize) -> Vec<Operand<'_>> {
    if text.trim().is_empty() {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ','))) {
        if c == ',' {
            let piece = &text[start..i];
            let lead = piece.len() - piece.trim_start().len();
            out.push(Operand { text: piece.trim(), column: column + start + lead });
            start = i + 1;
        }
    }
    out
}

pub fn parse_program(source: &str) -> Result<Program, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut program = Program::default();
    let mut fixups = Vec::new();
    let mut label_lines: HashMap<String, usize> = HashMap::new();
    let mut entry_label: Option<(String, usize, usize)> = None;
    let mut data_lines = Vec::new();

    for (idx, raw) in source.lines().enumerate() {
        let line_no = idx + 1;
        let code = strip_comment(raw);
        let mut rest = code;
        let mut col = 1;

        // Leading labels.
        loop {
            let trimmed = rest.trim_start();
            col += rest.len() - trimmed.len();
            rest = trimmed;
            if rest.starts_with('.') {
                break;
            }
            let Some(colon) = rest.find(':') else { break };
            let name = rest[..colon].trim_end();
            if !is_ident(name) {
                break;
            }
            if label_lines.insert(name.to_string(), line_no).is_some() {
                diags.push(Diagnostic::new(line_no, col, DiagnosticKind::DuplicateLabel, format!("label `{name}` defined twice")));
            } else {
                program.labels.insert(name.to_string(), program.instrs.len());
            }
            rest = &rest[colon + 1..];
            col += colon + 1;
        }
        let rest_trim = rest.trim_end();
        if rest_trim.is_empty() {
            continue;
        }

        let mut ctx = LineCtx { line: line_no, diags: &mut diags };
        if rest_trim.starts_with('.') {
            parse_directive(rest_trim, col, &mut ctx, &mut program, &mut entry_label, &mut data_lines);
            continue;
        }

        let (mnemonic, operands_text) = match rest_trim.find(char::is_whitespace) {
            Some(i) => (&rest_trim[..i], &rest_trim[i..]),
            None => (rest_trim, ""),
        };
        let op_col = col + mnemonic.len();
        let ops = split_operands(operands_text, op_col);
        let index = program.instrs.len();
        if let Some((instr, label)) = parse_instr(mnemonic, &ops, col, &mut ctx) {
            if let Some((label, column)) = label {
                fixups.push(Fixup { instr: index, label, line: line_no, column });
            }
            program.instrs.push(instr);
            program.lines.push(line_no);
        }
    }

    for fix in fixups {
        match program.labels.get(&fix.label) {
            Some(&target) => program.instrs[fix.instr].set_branch_target(target),
            None => diags.push(Diagnostic::new(
                fix.line,
                fix.column,
                DiagnosticKind::UnresolvedLabel,
                format!("undefined label `{}`", fix.label),
            )),
        }
    }
    if let Some((name, line, column)) = entry_label {
        match program.labels.get(&name) {
            Some(&t) => program.entry = t,
            None => diags.push(Diagnostic::new(line, column, DiagnosticKind::UnresolvedLabel, format!("undefined entry label `{name}`"))),
        }
    }

    // Segment overlap.
    let mut order: Vec<usize> = (0..program.data.len()).collect();
    order.sort_by_key(|&i| program.data[i].addr);
    for pair in order.windows(2) {
        let (a, b) = (&program.data[pair[0]], &program.data[pair[1]]);
        if b.addr < a.end() {
            let line = data_lines[pair[1]];
            diags.push(Diagnostic::new(line, 1, DiagnosticKind::OverlappingData, format!("data at {:#x} overlaps segment at {:#x}", b.addr, a.addr)));
        }
    }

    if diags.is_empty() && !program.instrs.is_empty() {
        diags.extend(validate_program(&program));
    }
    if diags.is_empty() {
        Ok(program)
    } else {
        diags.sort_by_key(|d| (d.line, d.column));
        Err(diags)
    }
}

type LabelRef = Option<(String, usize)>;

fn parse_instr(mnemonic: &str, ops: &[Operand], column: usize, ctx: &mut LineCtx) -> Option<(Instr, LabelRef)> {
    let arity = |n: usize, ctx: &mut LineCtx| -> bool {
        if ops.len() == n {
            true
        } else {
            ctx.err(column, DiagnosticKind::WrongArity, format!("`{mnemonic}` takes {n} operands, found {}", ops.len()));
            false
        }
    };
    macro_rules! fff {
        ($variant:ident) => {{
            if !arity(3, ctx) { return None; }
            let (rd, rs1, rs2) = (ctx.freg(ops[0]), ctx.freg(ops[1]), ctx.freg(ops[2]));
            Instr::$variant { rd: rd?, rs1: rs1?, rs2: rs2? }
        }};
    }
    macro_rules! xxx {
        ($variant:ident) => {{
            if !arity(3, ctx) { return None; }
            let (rd, rs1, rs2) = (ctx.xreg(ops[0]), ctx.xreg(ops[1]), ctx.xreg(ops[2]));
            Instr::$variant { rd: rd?, rs1: rs1?, rs2: rs2? }
        }};
    }
    macro_rules! branch {
        ($variant:ident) => {{
            if !arity(3, ctx) { return None; }
            let (rs1, rs2, l) = (ctx.xreg(ops[0]), ctx.xreg(ops[1]), ctx.label(ops[2]));
            return Some((Instr::$variant { rs1: rs1?, rs2: rs2?, target: 0 }, Some((l?, ops[2].column))));
        }};
    }
    macro_rules! csr3 {
        ($variant:ident) => {{
            if !arity(3, ctx) { return None; }
            let (rd, csr, rs1) = (ctx.xreg(ops[0]), ctx.csr(ops[1]), ctx.xreg(ops[2]));
            Instr::$variant { rd: rd?, csr: csr?, rs1: rs1? }
        }};
    }
    macro_rules! csr2 {
        ($variant:ident) => {{
            if !arity(2, ctx) { return None; }
            let (csr, rs1) = (ctx.csr(ops[0]), ctx.xreg(ops[1]));
            Instr::$variant { rd: XReg::ZERO, csr: csr?, rs1: rs1? }
        }};
    }

    let instr = match mnemonic {
        "fadd.d" => fff!(FAddD),
        "fsub.d" => fff!(FSubD),
        "fmul.d" => fff!(FMulD),
        "fmadd.d" => {
            if !arity(4, ctx) {
                return None;
            }
            let regs: Vec<_> = ops.iter().map(|o| ctx.freg(*o)).collect();
            Instr::FMaddD { rd: regs[0]?, rs1: regs[1]?, rs2: regs[2]?, rs3: regs[3]? }
        }
        "fmv.d" => {
            if !arity(2, ctx) {
                return None;
            }
            let (rd, rs1) = (ctx.freg(ops[0]), ctx.freg(ops[1]));
            Instr::FMvD { rd: rd?, rs1: rs1? }
        }
        "fld" | "fsd" => {
            if !arity(2, ctx) {
                return None;
            }
            let (r, m) = (ctx.freg(ops[0]), ctx.mem(ops[1]));
            let (offset, base) = m?;
            if mnemonic == "fld" {
                Instr::Fld { rd: r?, offset, base }
            } else {
                Instr::Fsd { rs: r?, offset, base }
            }
        }
        "addi" => {
            if !arity(3, ctx) {
                return None;
            }
            let (rd, rs1, imm) = (ctx.xreg(ops[0]), ctx.xreg(ops[1]), ctx.imm(ops[2]));
            Instr::Addi { rd: rd?, rs1: rs1?, imm: imm? }
        }
        "add" => xxx!(Add),
        "sub" => xxx!(Sub),
        "li" => {
            if !arity(2, ctx) {
                return None;
            }
            let (rd, imm) = (ctx.xreg(ops[0]), ctx.imm(ops[1]));
            Instr::Li { rd: rd?, imm: imm? }
        }
        "bne" | "bneq" => branch!(Bne),
        "beq" => branch!(Beq),
        "blt" => branch!(Blt),
        "j" => {
            if !arity(1, ctx) {
                return None;
            }
            let l = ctx.label(ops[0])?;
            return Some((Instr::Jump { target: 0 }, Some((l, ops[0].column))));
        }
        "csrrw" => csr3!(CsrRw),
        "csrrs" => csr3!(CsrRs),
        "csrrc" => csr3!(CsrRc),
        "csrw" => csr2!(CsrRw),
        "csrs" => csr2!(CsrRs),
        "csrc" => csr2!(CsrRc),
        "hwloop" => {
            if !arity(2, ctx) {
                return None;
            }
            let n_iter = match XReg::parse(ops[0].text) {
                Some(r) => Some(LoopCount::Reg(r)),
                None => match parse_int(ops[0].text) {
                    Some(v) if v >= 0 => Some(LoopCount::Imm(v as u64)),
                    _ => {
                        ctx.err(ops[0].column, DiagnosticKind::BadImmediate, format!("bad loop count `{}`", ops[0].text));
                        None
                    }
                },
            };
            let n_instr = match parse_int(ops[1].text) {
                Some(v) if (1..=u32::MAX as i64).contains(&v) => Some(v as u32),
                _ => {
                    ctx.err(ops[1].column, DiagnosticKind::BadImmediate, format!("bad loop body length `{}`", ops[1].text));
                    None
                }
            };
            Instr::HwLoop { n_iter: n_iter?, n_instr: n_instr? }
        }
        "roi.begin" | "roi.end" | "halt" => {
            if !arity(0, ctx) {
                return None;
            }
            match mnemonic {
                "roi.begin" => Instr::RoiBegin,
                "roi.end" => Instr::RoiEnd,
                _ => Instr::Halt,
            }
        }
        other => {
            ctx.err(column, DiagnosticKind::UnknownMnemonic, format!("unknown mnemonic `{other}`"));
            return None;
        }
    };
    Some((instr, None))
}

fn parse_directive(
    text: &str,
    column: usize,
    ctx: &mut LineCtx,
    program: &mut Program,
    entry_label: &mut Option<(String, usize, usize)>,
    data_lines: &mut Vec<usize>,
) {
    let (name, body) = match text.find(char::is_whitespace) {
        Some(i) => (&text[..i], text[i..].trim()),
        None => (text, ""),
    };
    match name {
        ".data" => {
            let Some((addr, values)) = body.split_once(':') else {
                ctx.err(column, DiagnosticKind::BadDirective, "expected `.data addr: values`");
                return;
            };
            let addr = match parse_int(addr.trim()) {
                Some(a) if a >= 0 && a % 8 == 0 => a as u64,
                _ => {
                    ctx.err(column, DiagnosticKind::BadImmediate, format!("bad data address `{}`", addr.trim()));
                    return;
                }
            };
            let mut words = Vec::new();
            for v in values.split(',').map(str::trim).filter(|v| !v.is_empty()) {
                match v.parse::<f64>() {
                    Ok(x) => words.push(x.to_bits()),
                    Err(_) => {
                        ctx.err(column, DiagnosticKind::BadImmediate, format!("bad double `{v}`"));
                        return;
                    }
                }
            }
            program.data.push(DataSegment { addr, words });
            data_lines.push(ctx.line);
        }
        ".stream" => match parse_stream(body) {
            Ok(s) => program.streamers.push(s),
            Err(msg) => ctx.err(column, DiagnosticKind::BadDirective, msg),
        },
        ".entry" => {
            if is_ident(body) {
                *entry_label = Some((body.to_string(), ctx.line, column));
            } else {
                ctx.err(column, DiagnosticKind::BadDirective, "expected `.entry label`");
            }
        }
        other => ctx.err(column, DiagnosticKind::BadDirective, format!("unknown directive `{other}`")),
    }
}

fn parse_list<T: std::str::FromStr>(text: &str, conv: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, String> {
    let inner = text
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or_else(|| format!("expected `[..]`, found `{text}`"))?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| conv(s).ok_or_else(|| format!("bad list element `{s}`")))
        .collect()
}

fn parse_stream(body: &str) -> Result<StreamerConfig, String> {
    // Collapse whitespace inside brackets so `key=[a, b]` stays one token.
    let mut flat = String::with_capacity(body.len());
    let mut depth = 0;
    for c in body.chars() {
        match c {
            '[' => depth += 1,
            ']' => depth -= 1,
            c if c.is_whitespace() && depth > 0 => continue,
            _ => {}
        }
        flat.push(c);
    }
    let mut tokens = flat.split_whitespace();
    let index = tokens
        .next()
        .and_then(parse_int)
        .filter(|&i| (0..32).contains(&i))
        .ok_or("expected stream index")? as usize;
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for tok in tokens {
        let (k, v) = tok.split_once('=').ok_or_else(|| format!("expected key=value, found `{tok}`"))?;
        if fields.insert(k, v).is_some() {
            return Err(format!("duplicate key `{k}`"));
        }
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| format!("missing `{k}`"));
    let direction = match get("dir")? {
        "r" => Direction::Read,
        "w" => Direction::Write,
        other => return Err(format!("bad direction `{other}`")),
    };
    let base = parse_int(get("base")?).filter(|b| *b >= 0).ok_or("bad base")? as u64;
    let bounds = parse_list(get("bounds")?, |s| parse_int(s).filter(|v| *v >= 0).map(|v| v as u64))?;
    let strides = parse_list(get("strides")?, parse_int)?;
    let reg = FReg::parse(get("reg")?).ok_or("bad stream register")?;
    let repeat = match fields.get("repeat") {
        Some(r) => parse_int(r).filter(|v| (1..=u32::MAX as i64).contains(v)).ok_or("bad repeat")? as u32,
        None => 1,
    };
    if let Some(d) = fields.get("dims") {
        if parse_int(d) != Some(bounds.len() as i64) {
            return Err(format!("dims={d} disagrees with {} bounds", bounds.len()));
        }
    }
    for k in fields.keys() {
        if !matches!(*k, "dir" | "base" | "dims" | "bounds" | "strides" | "reg" | "repeat") {
            return Err(format!("unknown stream key `{k}`"));
        }
    }
    let s = StreamerConfig { index, reg, direction, base, bounds, strides, repeat };
    s.check()?;
    Ok(s)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Renders a program back to source. Labels are regenerated as `L<index>`.
pub fn emit_text(program: &Program) -> String {
    let mut out = String::new();
    for seg in &program.data {
        let values: Vec<String> = seg.words.iter().map(|w| format!("{:?}", f64::from_bits(*w))).collect();
        let _ = writeln!(out, ".data {:#x}: {}", seg.addr, values.join(", "));
    }
    for s in &program.streamers {
        let dir = match s.direction {
            Direction::Read => "r",
            Direction::Write => "w",
        };
        let _ = write!(
            out,
            ".stream {} dir={dir} base={:#x} dims={} bounds=[{}] strides=[{}] reg={}",
            s.index,
            s.base,
            s.dims(),
            join(&s.bounds),
            join(&s.strides),
            s.reg
        );
        if s.repeat != 1 {
            let _ = write!(out, " repeat={}", s.repeat);
        }
        out.push('\n');
    }

    let mut targets: BTreeSet<usize> = program.instrs.iter().filter_map(Instr::branch_target).collect();
    targets.extend(program.labels.values().copied());
    if program.entry != 0 {
        targets.insert(program.entry);
        let _ = writeln!(out, ".entry L{}", program.entry);
    }
    let label = |t: usize| format!("L{t}");
    for (i, instr) in program.instrs.iter().enumerate() {
        if targets.contains(&i) {
            let _ = writeln!(out, "L{i}:");
        }
        let _ = writeln!(out, "    {}", instr.render(&label));
    }
    if targets.contains(&program.instrs.len()) {
        let _ = writeln!(out, "L{}:", program.instrs.len());
    }
    out
}
