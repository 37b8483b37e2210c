//! Bitmap-index query: how many records satisfy a conjunction of criteria.
//!
//! Records are striped across the wires of a row, one PIM cluster per
//! `X`-record chunk; criteria occupy span positions. All chunks run the
//! same command stream in lock-step. A pass is one TR-based bulk AND: the
//! first pass takes up to `trd` columns, later passes fold the running
//! result with up to `trd - 1` new columns. The final popcount happens on
//! the host.

use serde::{Deserialize, Serialize};

use crate::cost::{baseline_compare, BaselineModel, Counters, CpuOps};
use crate::dbc::{BulkOpKind, Dbc, Row};
use crate::error::{Error, Result};
use crate::hierarchy::{Address, Engine};
use crate::workloads::dataset::BitmapDataset;
use crate::workloads::RunReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitmapQuery {
    pub criteria: Vec<String>,
    /// Recorded in the report only.
    pub seed: u64,
    /// Flips one result bit before readout to exercise the oracle check.
    pub inject_fault: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitmapStats {
    pub count: u64,
    pub oracle_count: u64,
    pub chunks: usize,
    pub multi_operand_passes: usize,
    pub pairwise_passes: usize,
    pub multi_operand: Counters,
    pub pairwise: Counters,
}

/// Bulk passes needed to AND `k` columns taking `fan_in` operands per pass.
pub fn passes_needed(k: usize, fan_in: usize) -> usize {
    if k <= 1 {
        1
    } else {
        (k - 1).div_ceil(fan_in - 1)
    }
}

/// ANDs `cols` on one cluster, at most `fan_in` operands per pass.
/// Returns the result row and the number of passes.
fn and_columns(dbc: &mut Dbc, cols: &[Row], fan_in: usize) -> Result<(Row, usize)> {
    let trd = dbc.trd();
    let first = cols.len().min(fan_in);
    for (i, c) in cols[..first].iter().enumerate() {
        dbc.copy_in(i, c)?;
    }
    for r in first..trd {
        dbc.clear_row(r)?;
    }
    let mut acc = dbc.bulk_bitwise(BulkOpKind::And, &(0..first).collect::<Vec<_>>())?;
    let mut passes = 1;
    let mut next = first;
    while next < cols.len() {
        dbc.write_back_row_buffer(0)?;
        let g = (cols.len() - next).min(fan_in - 1);
        for i in 0..g {
            dbc.copy_in(1 + i, &cols[next + i])?;
        }
        for r in 1 + g..trd {
            dbc.clear_row(r)?;
        }
        acc = dbc.bulk_bitwise(BulkOpKind::And, &(0..=g).collect::<Vec<_>>())?;
        next += g;
        passes += 1;
    }
    Ok((acc, passes))
}

fn chunk_rows(cols: &[&[bool]], chunk: usize, width: usize) -> Vec<Row> {
    cols.iter()
        .map(|c| {
            let lo = chunk * width;
            let hi = (lo + width).min(c.len());
            let mut bits = c[lo..hi].to_vec();
            bits.resize(width, false);
            Row::from_bits(bits)
        })
        .collect()
}

/// Runs the query over every chunk with `fan_in` operands per pass.
fn run(engine: &mut Engine, cols: &[&[bool]], records: usize, fan_in: usize) -> Result<(Vec<Row>, usize)> {
    let g = engine.geometry().clone();
    let targets: Vec<Address> = g.pim_clusters().collect();
    if targets.is_empty() {
        return Err(Error::NonPimTarget("geometry has no PIM clusters".into()));
    }
    // earlier work may have left clusters at different shift offsets;
    // bring them home so the lock-step streams agree
    for t in &targets {
        if engine.cluster_offset(t)? != 0 {
            engine.run_on(t, |d| d.align_span(0))?;
        }
    }
    let chunks = records.div_ceil(g.wires);
    let mut results = Vec::with_capacity(chunks);
    let mut passes = 0;
    for round in (0..chunks).collect::<Vec<_>>().chunks(targets.len()) {
        let outs = engine.run_simd(&targets[..round.len()], |i, dbc| {
            and_columns(dbc, &chunk_rows(cols, round[i], g.wires), fan_in)
        })?;
        for (row, p) in outs {
            passes = p;
            results.push(row);
        }
    }
    Ok((results, passes))
}

/// Counts records whose criteria columns are all set, verifying against a
/// direct fold, and measures the same query restricted to two operands
/// per pass on a separate engine.
pub fn bitmap_query(
    engine: &mut Engine,
    data: &BitmapDataset,
    query: &BitmapQuery,
) -> Result<(u64, RunReport, BitmapStats)> {
    if query.criteria.is_empty() {
        return Err(Error::OperandCountOutOfRange(0));
    }
    let cols: Vec<&[bool]> = query.criteria.iter().map(|c| data.column(c)).collect::<Result<_>>()?;
    let n = data.num_records();
    let trd = engine.geometry().trd;

    let before = engine.counters().clone();
    let (mut rows, multi_passes) = run(engine, &cols, n, trd)?;
    let multi = engine.counters().since(&before);
    if query.inject_fault {
        if let Some(r) = rows.first_mut() {
            r.set(0, !r.get(0));
        }
    }
    let count: u64 = rows.iter().map(|r| r.count_ones() as u64).sum();

    let mut pair_engine = Engine::new(engine.geometry().clone(), engine.table().clone())?;
    pair_engine.set_tracing(false);
    let (pair_rows, pair_passes) = run(&mut pair_engine, &cols, n, 2)?;
    let pairwise = pair_engine.counters().clone();

    let oracle = (0..n).filter(|&i| cols.iter().all(|c| c[i])).count() as u64;
    let pair_count: u64 = pair_rows.iter().map(|r| r.count_ones() as u64).sum();
    let matched = count == oracle && pair_count == oracle;

    let bytes = (cols.len() * n.div_ceil(8)) as u64;
    let words = n.div_ceil(64) as u64;
    let ops = CpuOps { adds: words * (cols.len() as u64 - 1) + words, muls: 0 };
    let mut report = RunReport::new("bitmap", query.seed, &[count as i64], matched, &multi)
        .with_extra("records", n)
        .with_extra("criteria", cols.len())
        .with_extra("count", count)
        .with_extra("oracle_count", oracle)
        .with_extra("chunks", rows.len())
        .with_extra("multi_operand_passes", multi_passes)
        .with_extra("pairwise_passes", pair_passes)
        .with_extra("pairwise_cycles", pairwise.cycles)
        .with_extra("pairwise_energy_pj", pairwise.energy_pj())
        .with_extra("cycle_speedup_vs_pairwise", pairwise.cycles as f64 / multi.cycles.max(1) as f64);
    report.baseline = Some(baseline_compare(&multi, bytes, ops, &BaselineModel::default()));
    let stats = BitmapStats {
        count,
        oracle_count: oracle,
        chunks: rows.len(),
        multi_operand_passes: multi_passes,
        pairwise_passes: pair_passes,
        multi_operand: multi,
        pairwise,
    };
    Ok((count, report, stats))
}
