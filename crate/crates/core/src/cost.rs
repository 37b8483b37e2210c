//! Latency/energy accounting, calibration of the shipped cost table, the
//! CPU data-movement baseline and area overhead.
//!
//! Energies are kept as integer attojoules so that sums are exact.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::command::{Command, OpKind};
use crate::error::{Error, Result};
use crate::hierarchy::{Geometry, MicroOp};

const AJ_PER_PJ: f64 = 1e6;

pub fn pj_to_aj(pj: f64) -> u64 {
    (pj * AJ_PER_PJ).round() as u64
}

pub fn aj_to_pj(aj: u64) -> f64 {
    aj as f64 / AJ_PER_PJ
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEntry {
    pub latency: u64,
    pub energy_aj: u64,
}

impl CostEntry {
    pub fn new(latency: u64, energy_pj: f64) -> Self {
        Self { latency, energy_aj: pj_to_aj(energy_pj) }
    }

    pub fn energy_pj(&self) -> f64 {
        aj_to_pj(self.energy_aj)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub entries: BTreeMap<OpKind, CostEntry>,
    pub cycle_time_ns: f64,
    pub areas: BTreeMap<String, f64>,
}

const DEFAULT_TABLE: &str = include_str!("../data/default_cost_table.txt");

impl Default for CostTable {
    fn default() -> Self {
        Self::parse(DEFAULT_TABLE).expect("shipped cost table parses")
    }
}

impl CostTable {
    /// Parses `key = latency, energy_pj` lines, `cycle_time_ns = t` and
    /// `area.<component> = um2`. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut areas = BTreeMap::new();
        let mut cycle_time_ns = 1.0;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::Parse(format!("cost table line {}: {what}", n + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let number = |s: &str| -> Result<f64> {
                let v: f64 = s.trim().parse().map_err(|_| bad(&format!("`{s}` is not a number")))?;
                if v < 0.0 || !v.is_finite() {
                    return Err(bad("values must be finite and non-negative"));
                }
                Ok(v)
            };
            if let Some(component) = key.strip_prefix("area.") {
                areas.insert(component.to_string(), number(value)?);
            } else if key == "cycle_time_ns" {
                cycle_time_ns = number(value)?;
            } else {
                let kind = OpKind::from_cost_key(key).ok_or_else(|| bad(&format!("unknown primitive `{key}`")))?;
                let (lat, en) = value.split_once(',').ok_or_else(|| bad("expected `latency, energy`"))?;
                let lat = lat.trim().parse::<u64>().map_err(|_| bad("latency must be a whole number of cycles"))?;
                entries.insert(kind, CostEntry::new(lat, number(en)?));
            }
        }
        Ok(Self { entries, cycle_time_ns, areas })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, e) in &self.entries {
            let _ = writeln!(s, "{} = {}, {}", k.cost_key(), e.latency, e.energy_pj());
        }
        let _ = writeln!(s, "cycle_time_ns = {}", self.cycle_time_ns);
        for (k, v) in &self.areas {
            let _ = writeln!(s, "area.{k} = {v}");
        }
        s
    }

    pub fn entry(&self, kind: OpKind) -> Result<CostEntry> {
        self.entries.get(&kind).copied().ok_or(Error::MissingCostEntry(kind))
    }

    pub fn area(&self, component: &str) -> Result<f64> {
        self.areas.get(component).copied().ok_or_else(|| Error::MissingAreaEntry(component.into()))
    }

    /// Cycles and attojoules of one command.
    pub fn cost_of(&self, cmd: &Command) -> Result<(u64, u64)> {
        let e = self.entry(cmd.kind)?;
        let q = u64::from(cmd.quantity);
        let cycles = if cmd.kind.latency_scales() { e.latency * q } else { e.latency };
        Ok((cycles, e.energy_aj * q))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub cycles: u64,
    pub energy_aj: u64,
    pub events: BTreeMap<OpKind, u64>,
}

impl Counters {
    pub fn energy_pj(&self) -> f64 {
        aj_to_pj(self.energy_aj)
    }

    pub fn add(&mut self, kind: OpKind, cycles: u64, energy_aj: u64) {
        self.cycles += cycles;
        self.energy_aj += energy_aj;
        *self.events.entry(kind).or_default() += 1;
    }

    /// Work done since `earlier`, a snapshot of the same counters.
    pub fn since(&self, earlier: &Counters) -> Counters {
        Counters {
            cycles: self.cycles - earlier.cycles,
            energy_aj: self.energy_aj - earlier.energy_aj,
            events: self
                .events
                .iter()
                .map(|(k, v)| (*k, v - earlier.events.get(k).copied().unwrap_or(0)))
                .filter(|(_, v)| *v > 0)
                .collect(),
        }
    }

    pub fn merge(&mut self, other: &Counters) {
        self.cycles += other.cycles;
        self.energy_aj += other.energy_aj;
        for (k, v) in &other.events {
            *self.events.entry(*k).or_default() += v;
        }
    }
}

/// Charges one command; returns its cycles and attojoules.
pub fn charge_command(counters: &mut Counters, cmd: &Command, table: &CostTable) -> Result<(u64, u64)> {
    let (c, e) = table.cost_of(cmd)?;
    counters.add(cmd.kind, c, e);
    Ok((c, e))
}

pub fn charge(counters: &mut Counters, op: &MicroOp, table: &CostTable) -> Result<(u64, u64)> {
    charge_command(counters, &op.command(), table)
}

pub fn charge_all(counters: &mut Counters, cmds: &[Command], table: &CostTable) -> Result<()> {
    cmds.iter().try_for_each(|c| charge_command(counters, c, table).map(|_| ()))
}

/// Canonical 8-step addition: operand staging, then one TR plus one
/// simultaneous sum/carry write per step. `span` is the TR width.
pub fn canonical_add_schedule(operands: u32, span: u32) -> Vec<Command> {
    let mut s = vec![Command::new(OpKind::AddSetup, operands, 0)];
    for _ in 0..8 {
        s.push(Command::new(OpKind::Tr, span, 0));
        s.push(Command::unit(OpKind::WriteRow, 0));
    }
    s
}

/// Canonical 8-bit multiply: copy A in, 7 shifted copies, copy B to the
/// row buffer, 8 predicated zero writes, one 7-to-3 reduction, then a
/// 4-operand addition over the 16-bit product.
pub fn canonical_mul_schedule() -> Vec<Command> {
    use OpKind::*;
    let mut s = vec![Command::unit(InterBankCopy, 0)];
    for i in 1..8 {
        s.push(Command::unit(LogicalShiftWrite, i));
        s.push(Command::new(DwShift, 1, 0));
    }
    s.push(Command::unit(InterBankCopy, 0));
    for i in (0..8).rev() {
        s.push(Command::unit(WriteRow, i));
        if i > 0 {
            s.push(Command::new(DwShift, 1, 0));
        }
    }
    s.push(Command::new(Tr, 7, 0));
    s.push(Command::unit(WriteRow, 1));
    s.push(Command::new(DwShift, 1, 0));
    s.push(Command::unit(WriteRow, 2));
    s.push(Command::new(DwShift, 1, 0));
    s.push(Command::unit(WriteRow, 3));
    for _ in 0..16 {
        s.push(Command::new(Tr, 7, 0));
        s.push(Command::unit(WriteRow, 0));
    }
    s
}

/// Energies implied by the calibration targets once the TR, shift and
/// logical-shift energies are fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvedEnergies {
    pub add_setup_per_operand: f64,
    pub port_write: f64,
    pub inter_bank_copy_per_row: f64,
}

/// Solves the add targets for setup and write energy, then the multiply
/// target for the inter-bank copy energy.
pub fn solve_energies(tr_per_domain: f64, shift_per_domain: f64, logical_shift_write: f64) -> SolvedEnergies {
    // 5a + 8(7t + w) = 22.14 and 2a + 8(4t + w) = 12.54
    let a = (22.14 - 12.54 - 24.0 * tr_per_domain) / 3.0;
    let w = (12.54 - 2.0 * a - 32.0 * tr_per_domain) / 8.0;
    // multiply: 2 copies + 7 (lsw + shift) + 8 w + 7 shift + (7t + 3w + 2 shift) + 16 (7t + w)
    let rest = 7.0 * (logical_shift_write + shift_per_domain)
        + 8.0 * w
        + 7.0 * shift_per_domain
        + 7.0 * tr_per_domain
        + 3.0 * w
        + 2.0 * shift_per_domain
        + 16.0 * (7.0 * tr_per_domain + w);
    SolvedEnergies { add_setup_per_operand: a, port_write: w, inter_bank_copy_per_row: (57.39 - rest) / 2.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownLine {
    pub kind: OpKind,
    pub events: u64,
    pub cycles: u64,
    pub energy_pj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCheck {
    pub name: String,
    pub cycles: u64,
    pub energy_pj: f64,
    pub target_cycles: u64,
    pub target_energy_pj: f64,
    /// Allowed relative deviation; 0 means exact.
    pub tolerance: f64,
    pub pass: bool,
    pub breakdown: Vec<BreakdownLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub checks: Vec<CalibrationCheck>,
}

impl CalibrationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

impl fmt::Display for CalibrationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let dc = (c.cycles as f64 / c.target_cycles as f64 - 1.0) * 100.0;
            let de = (c.energy_pj / c.target_energy_pj - 1.0) * 100.0;
            writeln!(
                f,
                "{:<10} {:>4} cycles (target {}, {:+.1}%)  {:>8.4} pJ (target {}, {:+.2}%)  tol {}  {}",
                c.name,
                c.cycles,
                c.target_cycles,
                dc,
                c.energy_pj,
                c.target_energy_pj,
                de,
                if c.tolerance == 0.0 { "exact".to_string() } else { format!("±{:.0}%", c.tolerance * 100.0) },
                if c.pass { "PASS" } else { "FAIL" }
            )?;
            for b in &c.breakdown {
                writeln!(
                    f,
                    "    {:<18} x{:<3} {:>4} cycles {:>9.4} pJ",
                    b.kind.cost_key(),
                    b.events,
                    b.cycles,
                    b.energy_pj
                )?;
            }
        }
        Ok(())
    }
}

fn run_check(
    name: &str,
    schedule: &[Command],
    table: &CostTable,
    target_cycles: u64,
    target_energy_pj: f64,
    tolerance: f64,
) -> Result<CalibrationCheck> {
    let mut per: BTreeMap<OpKind, (u64, u64, u64)> = BTreeMap::new();
    let mut total = Counters::default();
    for cmd in schedule {
        let (c, e) = charge_command(&mut total, cmd, table)?;
        let slot = per.entry(cmd.kind).or_default();
        slot.0 += 1;
        slot.1 += c;
        slot.2 += e;
    }
    let pass = if tolerance == 0.0 {
        total.cycles == target_cycles && total.energy_aj == pj_to_aj(target_energy_pj)
    } else {
        let within = |got: f64, want: f64| (got - want).abs() <= tolerance * want;
        within(total.cycles as f64, target_cycles as f64) && within(total.energy_pj(), target_energy_pj)
    };
    Ok(CalibrationCheck {
        name: name.into(),
        cycles: total.cycles,
        energy_pj: total.energy_pj(),
        target_cycles,
        target_energy_pj,
        tolerance,
        pass,
        breakdown: per
            .into_iter()
            .map(|(kind, (events, cycles, aj))| BreakdownLine { kind, events, cycles, energy_pj: aj_to_pj(aj) })
            .collect(),
    })
}

/// Replays the canonical schedules against the published operation totals.
pub fn calibration_report(table: &CostTable) -> Result<CalibrationReport> {
    Ok(CalibrationReport {
        checks: vec![
            run_check("add5", &canonical_add_schedule(5, 7), table, 26, 22.14, 0.0)?,
            run_check("add2", &canonical_add_schedule(2, 4), table, 26, 12.54, 0.0)?,
            run_check("mul8", &canonical_mul_schedule(), table, 64, 57.39, 0.10)?,
        ],
    })
}

/// Like [`calibration_report`], but a failed check is an error carrying
/// the per-primitive breakdown.
pub fn calibrate_check(table: &CostTable) -> Result<CalibrationReport> {
    let report = calibration_report(table)?;
    if report.pass() {
        Ok(report)
    } else {
        Err(Error::CalibrationMismatch(report.to_string()))
    }
}

/// CPU-side cost of doing the same work after shipping the data out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub transfer_pj_per_byte: f64,
    pub cpu_add_pj: f64,
    pub cpu_mul_pj: f64,
}

impl Default for BaselineModel {
    fn default() -> Self {
        Self { transfer_pj_per_byte: 1250.0, cpu_add_pj: 111.0, cpu_mul_pj: 164.0 }
    }
}

impl BaselineModel {
    pub fn energy_pj(&self, bytes_moved: u64, ops: CpuOps) -> f64 {
        bytes_moved as f64 * self.transfer_pj_per_byte
            + ops.adds as f64 * self.cpu_add_pj
            + ops.muls as f64 * self.cpu_mul_pj
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpuOps {
    pub adds: u64,
    pub muls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub pim_cycles: u64,
    pub pim_energy_pj: f64,
    pub baseline_energy_pj: f64,
    pub bytes_moved: u64,
    pub cpu_ops: CpuOps,
    /// Baseline energy divided by PIM energy; absent when either is zero.
    pub energy_advantage: Option<f64>,
}

pub fn baseline_compare(counters: &Counters, bytes_moved: u64, ops: CpuOps, model: &BaselineModel) -> BaselineReport {
    let base = model.energy_pj(bytes_moved, ops);
    let pim = counters.energy_pj();
    BaselineReport {
        pim_cycles: counters.cycles,
        pim_energy_pj: pim,
        baseline_energy_pj: base,
        bytes_moved,
        cpu_ops: ops,
        energy_advantage: (pim > 0.0 && base > 0.0).then(|| base / pim),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum IsaFeatures {
    /// Multiplication, 5-operand addition and bulk-bitwise logic.
    Full,
    NoBulkBitwise,
    Add5Only,
    Add2Only,
}

impl IsaFeatures {
    fn components(self) -> &'static [&'static str] {
        match self {
            IsaFeatures::Full => &["add5", "mul", "bulk_bitwise"],
            IsaFeatures::NoBulkBitwise => &["add5", "mul"],
            IsaFeatures::Add5Only => &["add5"],
            IsaFeatures::Add2Only => &["add2"],
        }
    }
}

/// PIM area added relative to the base array, in percent.
pub fn area_overhead(geometry: &Geometry, table: &CostTable, features: IsaFeatures) -> Result<f64> {
    let base = table.area("subarray_per_bitline")?;
    let mut added = 0.0;
    for c in features.components() {
        added += table.area(c)?;
    }
    Ok(geometry.pim_subarray_fraction() * geometry.pim_tiles_per_subarray as f64 * added / base * 100.0)
}
