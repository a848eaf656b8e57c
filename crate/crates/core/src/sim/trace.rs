use std::fmt::Write as _;

use super::{FpSlot, TraceRow};

pub const TRACE_HEADER: &str = "cycle\tfp_slot\tint_slot\tfifo_occ\tstall_reason";

/// Tab-separated trace, one line per cycle, preceded by `TRACE_HEADER`.
///
/// `fifo_occ` lists `reg=count` pairs joined by commas, `-` when no register
/// is chained. Empty slots print as `-`.
pub fn format_trace(rows: &[TraceRow]) -> String {
    let mut out = String::with_capacity(48 * (rows.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for row in rows {
        let fp = match row.fp_slot {
            FpSlot::Issued(i) => i.to_string(),
            FpSlot::Stall(_) => "stall".to_string(),
            FpSlot::Idle => "-".to_string(),
        };
        let int = row.int_slot.map_or_else(|| "-".to_string(), |i| i.to_string());
        let occ = if row.fifo_occ.is_empty() {
            "-".to_string()
        } else {
            row.fifo_occ.iter().map(|(r, n)| format!("{r}={n}")).collect::<Vec<_>>().join(",")
        };
        let reason = row.stall_reason().map_or_else(|| "-".to_string(), |r| format!("{r:?}"));
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", row.cycle, fp, int, occ, reason);
    }
    out
}
