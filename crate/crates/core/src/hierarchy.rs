//! Memory organization (bank / subarray / tile / cluster / row), the
//! controller micro-op interface, trace recording and SIMD dispatch.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::command::{Command, OpKind};
use crate::cost::{aj_to_pj, CostTable, Counters};
use crate::dbc::{BulkOpKind, Dbc, Row};
use crate::device::{Direction, Nanowire, DEFAULT_TRD};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Geometry {
    pub banks: usize,
    pub subarrays_per_bank: usize,
    pub tiles_per_subarray: usize,
    pub dbcs_per_tile: usize,
    /// Tiles `0..pim_tiles_per_subarray` of a PIM subarray carry PIM logic.
    pub pim_tiles_per_subarray: usize,
    /// Every `pim_subarray_stride`-th subarray of a bank is a PIM subarray.
    pub pim_subarray_stride: usize,
    /// Nanowires per cluster (row width in bits).
    pub wires: usize,
    /// Data domains per nanowire (rows per cluster).
    pub rows: usize,
    pub trd: usize,
    /// Configured capacity the organization must add up to.
    pub memory_bits: Option<u64>,
}

impl Default for Geometry {
    fn default() -> Self {
        Self {
            banks: 32,
            subarrays_per_bank: 64,
            tiles_per_subarray: 16,
            dbcs_per_tile: 16,
            pim_tiles_per_subarray: 1,
            pim_subarray_stride: 1,
            wires: 512,
            rows: 32,
            trd: DEFAULT_TRD,
            memory_bits: Some(8 << 30),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Address {
    pub bank: usize,
    pub subarray: usize,
    pub tile: usize,
    pub dbc: usize,
    pub row: usize,
}

impl Address {
    pub fn new(bank: usize, subarray: usize, tile: usize, dbc: usize, row: usize) -> Self {
        Self { bank, subarray, tile, dbc, row }
    }

    pub fn with_row(self, row: usize) -> Self {
        Self { row, ..self }
    }

    fn cluster(&self) -> (usize, usize, usize, usize) {
        (self.bank, self.subarray, self.tile, self.dbc)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}.{}.{}", self.bank, self.subarray, self.tile, self.dbc, self.row)
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("banks", self.banks),
            ("subarrays_per_bank", self.subarrays_per_bank),
            ("tiles_per_subarray", self.tiles_per_subarray),
            ("dbcs_per_tile", self.dbcs_per_tile),
            ("pim_subarray_stride", self.pim_subarray_stride),
            ("wires", self.wires),
        ];
        if let Some((name, _)) = counts.iter().find(|c| c.1 == 0) {
            return Err(Error::InvalidGeometry(format!("{name} must be at least 1")));
        }
        if self.pim_tiles_per_subarray > self.tiles_per_subarray {
            return Err(Error::InvalidGeometry(format!(
                "{} PIM tiles in a {}-tile subarray",
                self.pim_tiles_per_subarray, self.tiles_per_subarray
            )));
        }
        crate::pim_logic::check_trd(self.trd)?;
        Nanowire::pim(self.rows, self.trd)?;
        if let Some(bits) = self.memory_bits {
            if self.capacity_bits() != Some(bits) {
                return Err(Error::InvalidGeometry(format!(
                    "organization holds {:?} bits, configured memory is {bits}",
                    self.capacity_bits()
                )));
            }
        }
        Ok(())
    }

    pub fn clusters(&self) -> usize {
        self.banks * self.subarrays_per_bank * self.tiles_per_subarray * self.dbcs_per_tile
    }

    pub fn total_rows(&self) -> u64 {
        self.clusters() as u64 * self.rows as u64
    }

    pub fn capacity_bits(&self) -> Option<u64> {
        self.total_rows().checked_mul(self.wires as u64)
    }

    /// Fraction of subarrays that carry PIM tiles.
    pub fn pim_subarray_fraction(&self) -> f64 {
        self.subarrays_per_bank.div_ceil(self.pim_subarray_stride) as f64 / self.subarrays_per_bank as f64
    }

    pub fn pim_dbc_count(&self) -> usize {
        self.banks
            * self.subarrays_per_bank.div_ceil(self.pim_subarray_stride)
            * self.pim_tiles_per_subarray
            * self.dbcs_per_tile
    }

    /// Every PIM cluster, in bank > subarray > tile > cluster order.
    pub fn pim_clusters(&self) -> impl Iterator<Item = Address> + '_ {
        (0..self.banks).flat_map(move |b| {
            (0..self.subarrays_per_bank).step_by(self.pim_subarray_stride).flat_map(move |s| {
                (0..self.pim_tiles_per_subarray)
                    .flat_map(move |t| (0..self.dbcs_per_tile).map(move |d| Address::new(b, s, t, d, 0)))
            })
        })
    }

    pub fn is_pim(&self, a: &Address) -> bool {
        a.tile < self.pim_tiles_per_subarray && a.subarray.is_multiple_of(self.pim_subarray_stride)
    }

    pub fn check(&self, a: &Address) -> Result<()> {
        if a.bank >= self.banks
            || a.subarray >= self.subarrays_per_bank
            || a.tile >= self.tiles_per_subarray
            || a.dbc >= self.dbcs_per_tile
            || a.row >= self.rows
        {
            return Err(Error::OutOfRange(format!("address {a} outside the geometry")));
        }
        Ok(())
    }

    /// Flat row index to coordinates, row-major bank > subarray > tile >
    /// cluster > row.
    pub fn decode_address(&self, flat: u64) -> Result<Address> {
        if flat >= self.total_rows() {
            return Err(Error::OutOfRange(format!("row {flat} of {}", self.total_rows())));
        }
        let mut rest = flat;
        let mut next = |n: usize| {
            let v = (rest % n as u64) as usize;
            rest /= n as u64;
            v
        };
        let row = next(self.rows);
        let dbc = next(self.dbcs_per_tile);
        let tile = next(self.tiles_per_subarray);
        let subarray = next(self.subarrays_per_bank);
        let bank = next(self.banks);
        Ok(Address { bank, subarray, tile, dbc, row })
    }

    pub fn encode_address(&self, a: &Address) -> Result<u64> {
        self.check(a)?;
        let mut flat = a.bank as u64;
        for (v, n) in [
            (a.subarray, self.subarrays_per_bank),
            (a.tile, self.tiles_per_subarray),
            (a.dbc, self.dbcs_per_tile),
            (a.row, self.rows),
        ] {
            flat = flat * n as u64 + v as u64;
        }
        Ok(flat)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    Activate,
    ReadRow,
    WriteRow(Row),
    DwShift {
        direction: Direction,
        count: usize,
    },
    /// TR over the span whose first row is the target row.
    Tr {
        width: usize,
    },
    Tw(Row),
    BulkOp {
        op: BulkOpKind,
        rows: Vec<usize>,
    },
    PredReset(bool),
    InterBankCopy {
        src: Address,
    },
    /// `target := src << 1`.
    LogicalShiftWrite {
        src_row: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicroOp {
    pub target: Address,
    pub payload: Payload,
}

impl MicroOp {
    pub fn new(target: Address, payload: Payload) -> Self {
        Self { target, payload }
    }

    pub fn kind(&self) -> OpKind {
        match self.payload {
            Payload::Activate => OpKind::Activate,
            Payload::ReadRow => OpKind::ReadRow,
            Payload::WriteRow(_) => OpKind::WriteRow,
            Payload::DwShift { .. } => OpKind::DwShift,
            Payload::Tr { .. } => OpKind::Tr,
            Payload::Tw(_) => OpKind::Tw,
            Payload::BulkOp { .. } => OpKind::BulkOp,
            Payload::PredReset(_) => OpKind::PredReset,
            Payload::InterBankCopy { .. } => OpKind::InterBankCopy,
            Payload::LogicalShiftWrite { .. } => OpKind::LogicalShiftWrite,
        }
    }

    /// The chargeable command this micro-op stands for.
    pub fn command(&self) -> Command {
        let q = match self.payload {
            Payload::DwShift { count, .. } => count,
            Payload::Tr { width } => width,
            _ => 1,
        };
        Command::new(self.kind(), q as u32, self.target.row)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Cycle at which the command starts.
    pub cycle: u64,
    pub kind: OpKind,
    pub quantity: u32,
    pub address: Address,
    pub energy_pj: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub counts: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    None,
    Row(Row),
    Counts(Vec<u32>),
}

type ClusterId = (usize, usize, usize, usize);

/// Owns the memory state, counters and trace. Clusters are materialized on
/// first touch and start zeroed.
#[derive(Debug, Clone)]
pub struct Engine {
    geometry: Geometry,
    table: CostTable,
    clusters: BTreeMap<ClusterId, Dbc>,
    counters: Counters,
    trace: Vec<TraceRecord>,
    tracing: bool,
}

impl Engine {
    pub fn new(geometry: Geometry, table: CostTable) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            geometry,
            table,
            clusters: BTreeMap::new(),
            counters: Counters::default(),
            trace: Vec::new(),
            tracing: true,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn table(&self) -> &CostTable {
        &self.table
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Disables per-command trace records; counters are still kept.
    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    fn cluster(&mut self, a: &Address) -> Result<&mut Dbc> {
        self.geometry.check(a)?;
        let g = &self.geometry;
        let (w, r, t) = (g.wires, g.rows, g.trd);
        match self.clusters.entry(a.cluster()) {
            std::collections::btree_map::Entry::Occupied(e) => Ok(e.into_mut()),
            std::collections::btree_map::Entry::Vacant(e) => Ok(e.insert(Dbc::new(w, r, t)?)),
        }
    }

    fn take_cluster(&mut self, a: &Address) -> Result<Dbc> {
        self.cluster(a)?;
        Ok(self.clusters.remove(&a.cluster()).expect("materialized above"))
    }

    fn require_pim(&self, a: &Address) -> Result<()> {
        if self.geometry.is_pim(a) {
            Ok(())
        } else {
            Err(Error::NonPimTarget(a.to_string()))
        }
    }

    /// Charges commands run in parallel on `copies` clusters: latency once,
    /// energy per cluster. One record per cluster per command.
    fn account(&mut self, cmds: &[Command], targets: &[Address]) -> Result<()> {
        for cmd in cmds {
            let (cycles, aj) = self.table.cost_of(cmd)?;
            let start = self.counters.cycles;
            self.counters.cycles += cycles;
            for t in targets {
                self.counters.energy_aj += aj;
                *self.counters.events.entry(cmd.kind).or_default() += 1;
                if self.tracing {
                    self.trace.push(TraceRecord {
                        cycle: start,
                        kind: cmd.kind,
                        quantity: cmd.quantity,
                        address: t.with_row(cmd.row as usize),
                        energy_pj: aj_to_pj(aj),
                        counts: None,
                    });
                }
            }
        }
        Ok(())
    }

    /// Current shift offset of a cluster (0 at rest).
    pub fn cluster_offset(&mut self, a: &Address) -> Result<isize> {
        Ok(self.cluster(a)?.offset())
    }

    /// Non-charging view of a row, for checking results.
    pub fn peek_row(&mut self, a: &Address) -> Result<Row> {
        let row = a.row;
        self.cluster(a)?.peek_row(row)
    }

    /// Executes one micro-op and appends exactly one trace record.
    pub fn issue(&mut self, op: &MicroOp) -> Result<Response> {
        let a = op.target;
        self.geometry.check(&a)?;
        let needs_pim = matches!(
            op.kind(),
            OpKind::Tr | OpKind::Tw | OpKind::BulkOp | OpKind::PredReset | OpKind::LogicalShiftWrite
        );
        if needs_pim {
            self.require_pim(&a)?;
        }
        if let Payload::InterBankCopy { src } = &op.payload {
            self.geometry.check(src)?;
        }
        let trd = self.geometry.trd;
        let response = match &op.payload {
            Payload::Activate => Response::None,
            Payload::ReadRow => Response::Row(self.cluster(&a)?.read_row(a.row)?),
            Payload::WriteRow(r) => {
                self.cluster(&a)?.write_row(a.row, r)?;
                Response::None
            }
            Payload::DwShift { direction, count } => {
                self.cluster(&a)?.dw_shift(*direction, *count)?;
                Response::None
            }
            Payload::Tr { width } => {
                if *width != trd {
                    return Err(Error::SpanTooWide { width: *width, trd });
                }
                Response::Counts(self.cluster(&a)?.tr_counts(a.row)?)
            }
            Payload::Tw(r) => Response::Row(self.cluster(&a)?.tw_rotate_step(r)?),
            Payload::BulkOp { op, rows } => Response::Row(self.cluster(&a)?.bulk_bitwise(*op, rows)?),
            Payload::PredReset(c) => {
                self.cluster(&a)?.predicated_row_reset(*c)?;
                Response::None
            }
            Payload::InterBankCopy { src } => {
                let row = self.cluster(src)?.peek_row(src.row)?;
                self.cluster(&a)?.copy_in(a.row, &row)?;
                Response::None
            }
            Payload::LogicalShiftWrite { src_row } => {
                self.cluster(&a)?.logical_shift_write(*src_row, a.row)?;
                Response::None
            }
        };
        // the cluster log already holds the command (plus any alignment
        // shifts); the micro-op is recorded as one event carrying them all
        let log = self.cluster(&a)?.take_log();
        let mut cycles = 0;
        let mut aj = 0;
        for cmd in &log {
            let (c, e) = self.table.cost_of(cmd)?;
            cycles += c;
            aj += e;
        }
        if op.kind() == OpKind::Activate {
            let (c, e) = self.table.cost_of(&op.command())?;
            cycles += c;
            aj += e;
        }
        let start = self.counters.cycles;
        self.counters.add(op.kind(), cycles, aj);
        if self.tracing {
            self.trace.push(TraceRecord {
                cycle: start,
                kind: op.kind(),
                quantity: op.command().quantity,
                address: a,
                energy_pj: aj_to_pj(aj),
                counts: match &response {
                    Response::Counts(c) => Some(c.clone()),
                    _ => None,
                },
            });
        }
        Ok(response)
    }

    /// Copies a row between clusters, RowClone style: one copy event.
    pub fn inter_bank_copy(&mut self, src: &Address, dst: &Address) -> Result<()> {
        self.issue(&MicroOp::new(*dst, Payload::InterBankCopy { src: *src }))?;
        Ok(())
    }

    /// Runs a routine on one PIM cluster, charging and tracing every
    /// command it emits (also those emitted before a failure).
    pub fn run_on<T>(&mut self, target: &Address, f: impl FnOnce(&mut Dbc) -> Result<T>) -> Result<T> {
        self.require_pim(target)?;
        let dbc = self.cluster(target)?;
        let out = f(dbc);
        let log = dbc.take_log();
        self.account(&log, std::slice::from_ref(target))?;
        out
    }

    /// Runs a routine needing a main and a scratch cluster.
    pub fn run_on_pair<T>(
        &mut self,
        main: &Address,
        scratch: &Address,
        f: impl FnOnce(&mut Dbc, &mut Dbc) -> Result<T>,
    ) -> Result<T> {
        self.require_pim(main)?;
        self.require_pim(scratch)?;
        if main.cluster() == scratch.cluster() {
            return Err(Error::ScratchUnavailable("scratch must be a different cluster".into()));
        }
        let mut m = self.take_cluster(main)?;
        let mut s = match self.take_cluster(scratch) {
            Ok(s) => s,
            Err(e) => {
                self.clusters.insert(main.cluster(), m);
                return Err(e);
            }
        };
        let out = f(&mut m, &mut s);
        let (lm, ls) = (m.take_log(), s.take_log());
        self.clusters.insert(main.cluster(), m);
        self.clusters.insert(scratch.cluster(), s);
        self.account(&lm, std::slice::from_ref(main))?;
        self.account(&ls, std::slice::from_ref(scratch))?;
        out
    }

    /// Applies one micro-op template to the same cluster/row of several PIM
    /// tiles. Latency is charged once, energy once per target.
    pub fn simd_dispatch(&mut self, template: &MicroOp, targets: &[Address]) -> Result<Vec<Response>> {
        for t in targets {
            self.geometry.check(t)?;
            self.require_pim(t)?;
        }
        let mut responses = Vec::with_capacity(targets.len());
        let start = self.counters.cycles;
        let mut latency = 0;
        for (i, t) in targets.iter().enumerate() {
            let op = MicroOp::new(t.with_row(template.target.row), template.payload.clone());
            let before = self.counters.cycles;
            responses.push(self.issue(&op)?);
            let spent = self.counters.cycles - before;
            latency = latency.max(spent);
            self.counters.cycles = start;
            if let Some(rec) = self.trace.last_mut() {
                rec.cycle = start;
            }
            if i + 1 == targets.len() {
                self.counters.cycles = start + latency;
            }
        }
        Ok(responses)
    }

    /// Runs the same routine on several PIM clusters in lock-step. The
    /// routine may see different data per target but must emit identical
    /// command streams.
    pub fn run_simd<T>(
        &mut self,
        targets: &[Address],
        mut f: impl FnMut(usize, &mut Dbc) -> Result<T>,
    ) -> Result<Vec<T>> {
        for t in targets {
            self.require_pim(t)?;
        }
        let mut outs = Vec::with_capacity(targets.len());
        let mut reference: Option<Vec<Command>> = None;
        for (i, t) in targets.iter().enumerate() {
            let dbc = self.cluster(t)?;
            let out = f(i, dbc);
            let log = dbc.take_log();
            let out = out?;
            match &reference {
                None => reference = Some(log),
                Some(r) if *r == log => {}
                Some(_) => return Err(Error::SimdDivergence),
            }
            outs.push(out);
        }
        if let Some(cmds) = reference {
            self.account(&cmds, targets)?;
        }
        Ok(outs)
    }

    pub fn trace_text(&self) -> String {
        let mut s = String::from("# cycle, kind, bank.subarray.tile.dbc.row, energy_pj\n");
        for r in &self.trace {
            let _ = writeln!(s, "{}, {}, {}, {}", r.cycle, r.kind, r.address, r.energy_pj);
        }
        s
    }

    pub fn trace_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&self.trace).map_err(|e| Error::Parse(e.to_string()))
    }
}
