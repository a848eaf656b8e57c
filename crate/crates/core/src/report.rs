//! Figures of merit: FPU utilization, event-based energy, and comparison
//! tables across kernel variants.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::ReportError;
use crate::sim::SimResult;

/// Event counts accumulated inside the region of interest.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub cycles_roi: u64,
    /// FP compute instructions issued to the FPU.
    pub fp_issued: u64,
    /// `fld`/`fsd` issued by the FP subsystem.
    pub fp_mem_issued: u64,
    /// Integer, control and meta instructions executed by the front end.
    pub int_issued: u64,
    pub stall_raw: u64,
    pub stall_fifo_empty: u64,
    pub stall_backpressure: u64,
    pub stall_mem: u64,
    pub l1_reads: u64,
    pub l1_writes: u64,
    pub rf_reads: u64,
    pub rf_writes: u64,
    pub ssr_elem_reads: u64,
    pub ssr_elem_writes: u64,
}

impl AddAssign for Counters {
    fn add_assign(&mut self, o: Counters) {
        self.cycles_roi += o.cycles_roi;
        self.fp_issued += o.fp_issued;
        self.fp_mem_issued += o.fp_mem_issued;
        self.int_issued += o.int_issued;
        self.stall_raw += o.stall_raw;
        self.stall_fifo_empty += o.stall_fifo_empty;
        self.stall_backpressure += o.stall_backpressure;
        self.stall_mem += o.stall_mem;
        self.l1_reads += o.l1_reads;
        self.l1_writes += o.l1_writes;
        self.rf_reads += o.rf_reads;
        self.rf_writes += o.rf_writes;
        self.ssr_elem_reads += o.ssr_elem_reads;
        self.ssr_elem_writes += o.ssr_elem_writes;
    }
}

impl Counters {
    pub fn stall_total(&self) -> u64 {
        self.stall_raw + self.stall_fifo_empty + self.stall_backpressure + self.stall_mem
    }
}

/// Energy per event, arbitrary units. Only ratios are meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub e_fpu_op: f64,
    pub e_rf_access: f64,
    pub e_l1_access: f64,
    pub e_ssr_access: f64,
    pub e_issue: f64,
    pub e_cycle_static: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            e_fpu_op: 10.0,
            e_rf_access: 1.0,
            e_l1_access: 15.0,
            e_ssr_access: 3.0,
            e_issue: 2.0,
            e_cycle_static: 5.0,
        }
    }
}

impl EnergyParams {
    pub fn scaled(&self, alpha: f64) -> Self {
        EnergyParams {
            e_fpu_op: self.e_fpu_op * alpha,
            e_rf_access: self.e_rf_access * alpha,
            e_l1_access: self.e_l1_access * alpha,
            e_ssr_access: self.e_ssr_access * alpha,
            e_issue: self.e_issue * alpha,
            e_cycle_static: self.e_cycle_static * alpha,
        }
    }
}

/// FP compute instructions issued per ROI cycle.
pub fn fpu_utilization(c: &Counters) -> Result<f64, ReportError> {
    if c.cycles_roi == 0 {
        return Err(ReportError::ZeroCycles);
    }
    Ok(c.fp_issued as f64 / c.cycles_roi as f64)
}

pub fn energy(c: &Counters, p: &EnergyParams) -> f64 {
    let issued = c.fp_issued + c.fp_mem_issued + c.int_issued;
    c.fp_issued as f64 * p.e_fpu_op
        + (c.rf_reads + c.rf_writes) as f64 * p.e_rf_access
        + (c.l1_reads + c.l1_writes) as f64 * p.e_l1_access
        + (c.ssr_elem_reads + c.ssr_elem_writes) as f64 * p.e_ssr_access
        + issued as f64 * p.e_issue
        + c.cycles_roi as f64 * p.e_cycle_static
}

/// Useful FP operations per unit energy.
pub fn energy_efficiency(c: &Counters, p: &EnergyParams) -> f64 {
    c.fp_issued as f64 / energy(c, p)
}

/// One simulated configuration to be compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub label: String,
    pub kernel: String,
    pub counters: Counters,
}

impl RunRecord {
    pub fn new(label: impl Into<String>, kernel: impl Into<String>, counters: Counters) -> Self {
        RunRecord { label: label.into(), kernel: kernel.into(), counters }
    }

    pub fn from_result(label: impl Into<String>, kernel: impl Into<String>, result: &SimResult) -> Self {
        RunRecord::new(label, kernel, result.counters)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub label: String,
    pub kernel: String,
    pub cycles: u64,
    pub fp_issued: u64,
    pub utilization: f64,
    pub stall_raw: u64,
    pub stall_fifo_empty: u64,
    pub stall_backpressure: u64,
    pub l1_reads: u64,
    pub l1_writes: u64,
    pub energy: f64,
    pub speedup: f64,
    pub eff_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeomeanRow {
    pub label: String,
    pub kernels: usize,
    pub speedup: f64,
    pub eff_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub rows: Vec<Row>,
    pub geomean: Vec<GeomeanRow>,
}

pub const CSV_HEADER: &str = "label,kernel,cycles,fp_issued,utilization,stall_raw,stall_fifo_empty,stall_backpressure,l1_reads,l1_writes,energy,speedup,eff_ratio";

pub fn geomean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp()
}

/// Speedup and efficiency of every entry relative to the entry labelled
/// `baseline` for the same kernel, plus per-label geomeans across kernels.
pub fn compare(entries: &[RunRecord], baseline: &str, params: &EnergyParams) -> Result<ComparisonTable, ReportError> {
    if entries.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut base: BTreeMap<&str, &Counters> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.label == baseline) {
        base.insert(&e.kernel, &e.counters);
    }
    let mut rows = Vec::with_capacity(entries.len());
    let mut per_label: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for e in entries {
        let b = base.get(e.kernel.as_str()).ok_or_else(|| ReportError::MissingBaseline(baseline.to_string()))?;
        let c = &e.counters;
        let speedup = b.cycles_roi as f64 / c.cycles_roi as f64;
        let eff_ratio = energy_efficiency(c, params) / energy_efficiency(b, params);
        let slot = per_label.entry(&e.label).or_default();
        slot.0.push(speedup);
        slot.1.push(eff_ratio);
        rows.push(Row {
            label: e.label.clone(),
            kernel: e.kernel.clone(),
            cycles: c.cycles_roi,
            fp_issued: c.fp_issued,
            utilization: fpu_utilization(c)?,
            stall_raw: c.stall_raw,
            stall_fifo_empty: c.stall_fifo_empty,
            stall_backpressure: c.stall_backpressure,
            l1_reads: c.l1_reads,
            l1_writes: c.l1_writes,
            energy: energy(c, params),
            speedup,
            eff_ratio,
        });
    }
    let geomean = per_label
        .into_iter()
        .map(|(label, (s, e))| GeomeanRow {
            label: label.to_string(),
            kernels: s.len(),
            speedup: geomean(&s),
            eff_ratio: geomean(&e),
        })
        .collect();
    Ok(ComparisonTable { baseline: baseline.to_string(), rows, geomean })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{},{},{},{},{},{:.1},{:.6},{:.6}",
                r.label,
                r.kernel,
                r.cycles,
                r.fp_issued,
                r.utilization,
                r.stall_raw,
                r.stall_fifo_empty,
                r.stall_backpressure,
                r.l1_reads,
                r.l1_writes,
                r.energy,
                r.speedup,
                r.eff_ratio
            );
        }
        for g in &self.geomean {
            let _ = writeln!(out, "{},geomean,,,,,,,,,,{:.6},{:.6}", g.label, g.speedup, g.eff_ratio);
        }
        out
    }

    /// JSON mirror of the CSV. `meta` is emitted first when present.
    pub fn to_json(&self, meta: Option<serde_json::Value>) -> String {
        let mut doc = serde_json::Map::new();
        if let Some(m) = meta {
            doc.insert("meta".into(), m);
        }
        doc.insert("baseline".into(), self.baseline.clone().into());
        doc.insert("rows".into(), serde_json::to_value(&self.rows).expect("rows serialize"));
        doc.insert("geomean".into(), serde_json::to_value(&self.geomean).expect("geomean serializes"));
        serde_json::to_string_pretty(&serde_json::Value::Object(doc)).expect("table serializes")
    }
}
