//! Domain block cluster: `X` nanowires shifted in lock-step, sharing two
//! TR-capable ports and a row buffer.
//!
//! Row `r` of the cluster is domain `r` of every wire. At the rest
//! alignment rows `0..trd` lie between the ports and form the TR span:
//! span position 0 is row 0 under the left port, span position `trd - 1`
//! is row `trd - 1` under the right port. Wire `i` holds bit `i` of every
//! row, so a TR on wire `i` sees the same bit position of all span rows.
//!
//! Every primitive is appended to a command log that the cost model
//! charges; operand staging is never hidden.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::command::{Command, OpKind};
use crate::device::{Direction, Nanowire, TrSpan};
use crate::error::{Error, Result};
use crate::pim_logic::{self, LogicOutputs, SenseLevels};

pub const PORT_L: usize = 0;
pub const PORT_R: usize = 1;

/// A row of bits, bit `i` living on wire `i`.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Row(Vec<bool>);

impl Row {
    pub fn zeros(width: usize) -> Self {
        Row(vec![false; width])
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Row(bits)
    }

    /// Little-endian: bit `i` of `value` goes to wire `i`.
    pub fn from_u128(value: u128, width: usize) -> Self {
        Row((0..width).map(|i| i < 128 && value >> i & 1 == 1).collect())
    }

    pub fn to_u128(&self) -> u128 {
        self.0.iter().take(128).enumerate().fold(0, |acc, (i, &b)| acc | (u128::from(b) << i))
    }

    /// Packs values into consecutive `field_width`-bit fields, truncating
    /// each value to its field.
    pub fn pack_fields(values: &[u64], field_width: usize, width: usize) -> Result<Self> {
        if field_width == 0 || field_width > 64 {
            return Err(Error::WidthOverflow(format!("field width {field_width} not in 1..=64")));
        }
        if values.len() * field_width > width {
            return Err(Error::WidthOverflow(format!(
                "{} fields of {field_width} bits exceed a {width}-bit row",
                values.len()
            )));
        }
        let mut row = Row::zeros(width);
        for (j, v) in values.iter().enumerate() {
            for b in 0..field_width {
                row.0[j * field_width + b] = v >> b & 1 == 1;
            }
        }
        Ok(row)
    }

    pub fn field(&self, index: usize, field_width: usize) -> u64 {
        (0..field_width.min(64)).filter(|b| self.0[index * field_width + b]).fold(0, |acc, b| acc | 1 << b)
    }

    /// All complete fields of the row.
    pub fn fields(&self, field_width: usize) -> Vec<u64> {
        (0..self.len() / field_width).map(|j| self.field(j, field_width)).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.0[i] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_zero(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    /// Bit `i` moves to bit `i + 1` inside each field; the top bit of a
    /// field is dropped and bit 0 becomes 0.
    pub fn shifted_in_fields(&self, field_width: usize) -> Row {
        let mut out = Row::zeros(self.len());
        for i in 0..self.len() {
            if (i + 1) % field_width != 0 && i + 1 < self.len() {
                out.0[i + 1] = self.0[i];
            }
        }
        out
    }

    pub fn map2(&self, other: &Row, f: impl Fn(bool, bool) -> bool) -> Row {
        Row(self.0.iter().zip(&other.0).map(|(&a, &b)| f(a, b)).collect())
    }
}

impl fmt::Debug for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // MSB first
        let s: String = self.0.iter().rev().map(|&b| if b { '1' } else { '0' }).collect();
        write!(f, "Row({s})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowBuffer {
    pub bits: Row,
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BulkOpKind {
    Or,
    Nor,
    And,
    Nand,
    Xor,
    Xnor,
    Not,
}

impl BulkOpKind {
    pub fn select(self, o: &LogicOutputs) -> bool {
        match self {
            BulkOpKind::Or => o.or,
            BulkOpKind::Nor => o.nor,
            BulkOpKind::And => o.and,
            BulkOpKind::Nand => o.nand,
            BulkOpKind::Xor => o.xor,
            BulkOpKind::Xnor => o.xnor,
            BulkOpKind::Not => o.not,
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name.to_ascii_lowercase().as_str() {
            "or" => BulkOpKind::Or,
            "nor" => BulkOpKind::Nor,
            "and" => BulkOpKind::And,
            "nand" => BulkOpKind::Nand,
            "xor" => BulkOpKind::Xor,
            "xnor" => BulkOpKind::Xnor,
            "not" => BulkOpKind::Not,
            _ => return None,
        })
    }
}

/// Operand placement for a multi-operand addition.
///
/// Operands sit in span rows `1..=operands`; rows 0 and `trd - 1` receive
/// the sum / super-carry and carry bits. Each row is split into
/// `field_width`-bit fields that are added independently and in parallel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddLayout {
    pub operands: usize,
    pub word_bits: usize,
    pub field_width: usize,
    /// Carries leaving a field are dropped, giving sums mod `2^field_width`.
    pub modular: bool,
}

impl AddLayout {
    /// `word_bits`-wide words separated by zero gaps; the gap must be at
    /// least three columns so that every carry dies inside the field.
    pub fn packed(operands: usize, word_bits: usize, field_width: usize) -> Result<Self> {
        if word_bits == 0 || field_width < word_bits + 3 {
            return Err(Error::WidthOverflow(format!(
                "{word_bits}-bit words need fields of at least {} bits, got {field_width}",
                word_bits + 3
            )));
        }
        Ok(Self { operands, word_bits, field_width, modular: false })
    }

    /// A single word whose sum occupies `word_bits + 3` wires.
    pub fn single(operands: usize, word_bits: usize) -> Self {
        Self { operands, word_bits, field_width: word_bits + 3, modular: false }
    }

    pub fn modular(operands: usize, field_width: usize) -> Self {
        Self { operands, word_bits: field_width, field_width, modular: true }
    }

    /// Number of TR steps of the carry walk.
    pub fn steps(&self) -> usize {
        if self.modular {
            self.field_width
        } else {
            self.word_bits + 3
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dbc {
    wires: Vec<Nanowire>,
    rows: usize,
    trd: usize,
    row_buffer: RowBuffer,
    log: Vec<Command>,
}

impl Dbc {
    pub fn new(width: usize, rows: usize, trd: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::InvalidGeometry("cluster needs at least one wire".into()));
        }
        pim_logic::check_trd(trd)?;
        let proto = Nanowire::pim(rows, trd)?;
        Ok(Self {
            wires: vec![proto; width],
            rows,
            trd,
            row_buffer: RowBuffer { bits: Row::zeros(width), valid: false },
            log: Vec::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.wires.len()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn trd(&self) -> usize {
        self.trd
    }

    pub fn wires(&self) -> &[Nanowire] {
        &self.wires
    }

    pub fn offset(&self) -> isize {
        self.wires[0].offset()
    }

    pub fn row_buffer(&self) -> &RowBuffer {
        &self.row_buffer
    }

    pub fn log(&self) -> &[Command] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<Command> {
        std::mem::take(&mut self.log)
    }

    fn record(&mut self, kind: OpKind, quantity: usize, row: usize) {
        self.log.push(Command::new(kind, quantity as u32, row));
    }

    /// Largest operand count an addition can take with this TR distance.
    pub fn max_add_operands(&self) -> usize {
        let cap = if cfg!(feature = "wide-trd") { usize::MAX } else { 5 };
        self.trd.saturating_sub(2).min(cap)
    }

    fn check_addr(&self, addr: usize) -> Result<()> {
        if addr >= self.rows {
            return Err(Error::AddressOutOfRange { addr, rows: self.rows });
        }
        Ok(())
    }

    fn check_width(&self, row: &Row) -> Result<()> {
        if row.len() != self.width() {
            return Err(Error::RowWidthMismatch { expected: self.width(), got: row.len() });
        }
        Ok(())
    }

    /// Lock-step DW shift of every wire.
    pub fn dw_shift(&mut self, direction: Direction, count: usize) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        // identical geometry: probing one wire is enough
        self.wires[0].clone().shift(direction, count)?;
        for w in &mut self.wires {
            w.shift(direction, count)?;
        }
        self.record(OpKind::DwShift, count, 0);
        Ok(())
    }

    fn move_start_to(&mut self, start: usize) -> Result<()> {
        let cur = self.wires[0].data_start();
        if start > cur {
            self.dw_shift(Direction::Right, start - cur)
        } else {
            self.dw_shift(Direction::Left, cur - start)
        }
    }

    fn port_pos(&self, port: usize) -> usize {
        self.wires[0].ports()[port]
    }

    /// Aligns `addr` with the port needing the shorter shift.
    fn align_row(&mut self, addr: usize) -> Result<usize> {
        self.check_addr(addr)?;
        let cur = self.wires[0].data_start() as isize;
        let max_start = (self.wires[0].total_len() - self.rows) as isize;
        let mut best: Option<(usize, isize)> = None;
        for port in [PORT_L, PORT_R] {
            let start = self.port_pos(port) as isize - addr as isize;
            if (0..=max_start).contains(&start) {
                let dist = (start - cur).abs();
                if best.is_none_or(|(_, d)| dist < d) {
                    best = Some((port, dist));
                }
            }
        }
        let (port, _) = best.expect("pim geometry makes every row reachable");
        self.move_start_to(self.port_pos(port) - addr)?;
        Ok(port)
    }

    /// Brings rows `base..base + trd` between the ports.
    pub fn align_span(&mut self, base: usize) -> Result<()> {
        if base + self.trd > self.rows {
            return Err(Error::AddressOutOfRange { addr: base + self.trd - 1, rows: self.rows });
        }
        self.move_start_to(self.port_pos(PORT_L) - base)
    }

    fn fetch(&mut self, addr: usize) -> Result<Row> {
        let port = self.align_row(addr)?;
        Ok(Row(self.wires.iter().map(|w| w.read_at(port).map(|b| b == 1)).collect::<Result<_>>()?))
    }

    fn store(&mut self, addr: usize, row: &Row, mask: Option<&Row>) -> Result<()> {
        self.check_width(row)?;
        let port = self.align_row(addr)?;
        for (i, w) in self.wires.iter_mut().enumerate() {
            if mask.is_none_or(|m| m.get(i)) {
                w.write_at(port, u8::from(row.get(i)))?;
            }
        }
        Ok(())
    }

    /// Current contents of a row without moving anything or charging cost.
    pub fn peek_row(&self, addr: usize) -> Result<Row> {
        self.check_addr(addr)?;
        Ok(Row(self.wires.iter().map(|w| w.data()[addr] == 1).collect()))
    }

    pub fn read_row(&mut self, addr: usize) -> Result<Row> {
        let row = self.fetch(addr)?;
        self.row_buffer = RowBuffer { bits: row.clone(), valid: true };
        self.record(OpKind::ReadRow, 1, addr);
        Ok(row)
    }

    pub fn write_row(&mut self, addr: usize, bits: &Row) -> Result<()> {
        self.store(addr, bits, None)?;
        self.record(OpKind::WriteRow, 1, addr);
        Ok(())
    }

    /// Write with the driver enabled only where `mask` is set.
    pub fn write_row_masked(&mut self, addr: usize, bits: &Row, mask: &Row) -> Result<()> {
        self.check_width(mask)?;
        self.store(addr, bits, Some(mask))?;
        self.record(OpKind::WriteRow, 1, addr);
        Ok(())
    }

    pub fn clear_row(&mut self, addr: usize) -> Result<()> {
        self.write_row(addr, &Row::zeros(self.width()))
    }

    /// Row arriving from another bank (RowClone-style copy).
    pub fn copy_in(&mut self, addr: usize, bits: &Row) -> Result<()> {
        self.store(addr, bits, None)?;
        self.record(OpKind::InterBankCopy, 1, addr);
        Ok(())
    }

    /// Row arriving from another bank straight into the row buffer.
    pub fn copy_in_row_buffer(&mut self, bits: &Row) -> Result<()> {
        self.check_width(bits)?;
        self.row_buffer = RowBuffer { bits: bits.clone(), valid: true };
        self.record(OpKind::InterBankCopy, 1, 0);
        Ok(())
    }

    pub fn write_back_row_buffer(&mut self, addr: usize) -> Result<()> {
        if !self.row_buffer.valid {
            return Err(Error::BufferInvalid);
        }
        let bits = self.row_buffer.bits.clone();
        self.write_row(addr, &bits)
    }

    /// Reads whatever row is under `port` without shifting.
    pub fn read_port(&mut self, port: usize) -> Result<Row> {
        let row = Row(self.wires.iter().map(|w| w.read_at(port).map(|b| b == 1)).collect::<Result<_>>()?);
        let addr = self.wires[0].row_at_port(port)?.unwrap_or(0);
        self.row_buffer = RowBuffer { bits: row.clone(), valid: true };
        self.record(OpKind::ReadRow, 1, addr);
        Ok(row)
    }

    /// Per-wire ones counts over the span starting at row `base`.
    pub fn tr_counts(&mut self, base: usize) -> Result<Vec<u32>> {
        self.align_span(base)?;
        let span = TrSpan::between_ports(&self.wires[0], PORT_L, PORT_R)?;
        let counts = self.wires.iter().map(|w| w.transverse_read(span)).collect::<Result<_>>()?;
        self.record(OpKind::Tr, self.trd, base);
        Ok(counts)
    }

    fn levels(&self, count: u32) -> Result<SenseLevels> {
        #[cfg(feature = "wide-trd")]
        if self.trd > pim_logic::SENSE_LEVELS {
            return pim_logic::sense_wide(count);
        }
        pim_logic::sense(count)
    }

    /// Multi-operand bulk-bitwise operation over span rows.
    ///
    /// Every span row not listed must be zero. The result lands in the row
    /// buffer; operands are left untouched.
    pub fn bulk_bitwise(&mut self, op: BulkOpKind, operand_addrs: &[usize]) -> Result<Row> {
        let k = operand_addrs.len();
        if k == 0 || k > self.trd.min(pim_logic::SENSE_LEVELS.max(self.trd)) {
            return Err(Error::TooManyOperands { got: k, max: self.trd });
        }
        if op == BulkOpKind::Not && k != 1 {
            return Err(Error::TooManyOperands { got: k, max: 1 });
        }
        for (i, &a) in operand_addrs.iter().enumerate() {
            if a >= self.trd {
                return Err(Error::OperandsNotInSpan { addr: a });
            }
            if operand_addrs[..i].contains(&a) {
                return Err(Error::Parse(format!("row {a} listed twice")));
            }
        }
        for r in 0..self.trd {
            if !operand_addrs.contains(&r) && !self.peek_row(r)?.is_zero() {
                return Err(Error::SpanNotClear { row: r });
            }
        }
        let counts = self.tr_counts(0)?;
        let mut out = Row::zeros(self.width());
        for (i, &c) in counts.iter().enumerate() {
            let o = pim_logic::decode(self.levels(c)?, k)?;
            out.set(i, op.select(&o));
        }
        self.row_buffer = RowBuffer { bits: out.clone(), valid: true };
        self.record(OpKind::BulkOp, 1, 0);
        Ok(out)
    }

    /// Sum, carry and super-carry rows of the span starting at `base`:
    /// per wire, the binary expansion of its ones count. Rows are returned
    /// unshifted (carry has weight 2, super-carry weight 4).
    pub fn reduce_span(&mut self, base: usize) -> Result<(Row, Row, Row)> {
        let counts = self.tr_counts(base)?;
        let x = self.width();
        let (mut s, mut c, mut c2) = (Row::zeros(x), Row::zeros(x), Row::zeros(x));
        for (i, &n) in counts.iter().enumerate() {
            let o = pim_logic::decode(self.levels(n)?, 1)?;
            s.set(i, o.sum);
            c.set(i, o.carry);
            c2.set(i, o.super_carry);
        }
        self.record(OpKind::BulkOp, 1, base);
        Ok((s, c, c2))
    }

    /// Multi-operand addition by the carry walk.
    ///
    /// Step `k` reads wire `k` of every field, then writes its sum bit to
    /// span position 0 of wire `k`, its carry to position `trd - 1` of wire
    /// `k + 1` and its super-carry to position 0 of wire `k + 2`. The read
    /// happens before the writes, so the super-carry parked in position 0
    /// is consumed before the sum overwrites it.
    pub fn add_multi(&mut self, layout: &AddLayout) -> Result<Row> {
        let max = self.max_add_operands();
        if layout.operands == 0 || layout.operands > max {
            return Err(Error::TooManyOperands { got: layout.operands, max });
        }
        let f = layout.field_width;
        if f == 0 || f > self.width() {
            return Err(Error::WidthOverflow(format!("field of {f} bits does not fit {} wires", self.width())));
        }
        if !layout.modular && layout.word_bits + 3 > f {
            return Err(Error::WidthOverflow("gap narrower than three columns".into()));
        }
        let top = self.trd - 1;
        if !self.peek_row(0)?.is_zero() || !self.peek_row(top)?.is_zero() {
            return Err(Error::EdgeColumnsNotZero);
        }
        for r in layout.operands + 1..top {
            if !self.peek_row(r)?.is_zero() {
                return Err(Error::SpanNotClear { row: r });
            }
        }
        let fields = self.width() / f;
        if !layout.modular {
            for r in 1..=layout.operands {
                let row = self.peek_row(r)?;
                for j in 0..fields {
                    if (layout.word_bits..f).any(|b| row.get(j * f + b)) {
                        return Err(Error::WidthOverflow(format!(
                            "operand row {r} has bits above {} in field {j}",
                            layout.word_bits
                        )));
                    }
                }
            }
        }

        self.align_span(0)?;
        let span = TrSpan::between_ports(&self.wires[0], PORT_L, PORT_R)?;
        for k in 0..layout.steps().min(f) {
            for j in 0..fields {
                let i = j * f + k;
                let count = self.wires[i].transverse_read(span)?;
                let o = pim_logic::decode(self.levels(count)?, 1)?;
                self.wires[i].write_at(PORT_L, u8::from(o.sum))?;
                if k + 1 < f {
                    self.wires[i + 1].write_at(PORT_R, u8::from(o.carry))?;
                }
                if k + 2 < f {
                    self.wires[i + 2].write_at(PORT_L, u8::from(o.super_carry))?;
                }
            }
            self.record(OpKind::Tr, self.trd, 0);
            self.record(OpKind::WriteRow, 1, 0);
        }
        self.read_port(PORT_L)
    }

    /// `dst := src << 1` across the whole row.
    pub fn logical_shift_write(&mut self, src: usize, dst: usize) -> Result<()> {
        let w = self.width();
        self.logical_shift_write_fields(src, dst, w)
    }

    /// `dst := src << 1` inside each `field_width`-bit field.
    pub fn logical_shift_write_fields(&mut self, src: usize, dst: usize, field_width: usize) -> Result<()> {
        self.check_addr(dst)?;
        let row = self.fetch(src)?;
        self.store(dst, &row.shifted_in_fields(field_width), None)?;
        self.record(OpKind::LogicalShiftWrite, 1, dst);
        Ok(())
    }

    pub fn predicated_row_reset(&mut self, condition: bool) -> Result<()> {
        if !self.row_buffer.valid {
            return Err(Error::BufferInvalid);
        }
        if condition {
            self.row_buffer.bits = Row::zeros(self.width());
        }
        self.record(OpKind::PredReset, 1, 0);
        Ok(())
    }

    /// Resets the row-buffer fields whose predicate is set.
    pub fn predicated_field_reset(&mut self, conditions: &[bool], field_width: usize) -> Result<()> {
        if !self.row_buffer.valid {
            return Err(Error::BufferInvalid);
        }
        for (j, &c) in conditions.iter().enumerate() {
            if c {
                for b in 0..field_width {
                    self.row_buffer.bits.set(j * field_width + b, false);
                }
            }
        }
        self.record(OpKind::PredReset, 1, 0);
        Ok(())
    }

    /// Transverse write of `write_bits` at the left port of every wire;
    /// returns the row pushed out under the right port.
    pub fn tw_rotate_step(&mut self, write_bits: &Row) -> Result<Row> {
        self.check_width(write_bits)?;
        self.align_span(0)?;
        let evicted = self
            .wires
            .iter_mut()
            .enumerate()
            .map(|(i, w)| w.transverse_write(PORT_L, PORT_R, u8::from(write_bits.get(i))).map(|b| b == 1))
            .collect::<Result<_>>()?;
        self.record(OpKind::Tw, 1, 0);
        Ok(Row(evicted))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dbc(x: usize) -> Dbc {
        Dbc::new(x, 32, 7).unwrap()
    }

    #[test]
    fn write_then_read_row() {
        let mut d = dbc(16);
        let r = Row::from_u128(0xBEEF, 16);
        d.write_row(12, &r).unwrap();
        assert_eq!(d.read_row(12).unwrap(), r);
        let r2 = Row::from_u128(0x1234, 16);
        d.write_row(12, &r2).unwrap();
        assert_eq!(d.read_row(12).unwrap(), r2);
        assert_eq!(d.read_row(32), Err(Error::AddressOutOfRange { addr: 32, rows: 32 }));
        assert!(d.write_row(32, &r).is_err());
    }

    #[test]
    fn aligned_row_needs_no_shift() {
        let mut d = dbc(8);
        d.read_row(0).unwrap();
        assert!(d.log().iter().all(|c| c.kind != OpKind::DwShift));
        d.take_log();
        d.read_row(6).unwrap();
        assert!(d.log().iter().all(|c| c.kind != OpKind::DwShift));
        d.take_log();
        d.read_row(3).unwrap();
        let shifted: u32 = d.log().iter().filter(|c| c.kind == OpKind::DwShift).map(|c| c.quantity).sum();
        assert_eq!(shifted, 3);
    }

    #[test]
    fn every_row_reachable_and_lock_step() {
        let mut d = dbc(4);
        for r in (0..32).chain((0..32).rev()) {
            d.write_row(r, &Row::from_u128(r as u128 % 16, 4)).unwrap();
            let offs: Vec<_> = d.wires().iter().map(|w| w.offset()).collect();
            assert!(offs.iter().all(|&o| o == offs[0]));
        }
        for r in 0..32 {
            assert_eq!(d.read_row(r).unwrap().to_u128(), r as u128 % 16);
        }
    }

    #[test]
    fn bulk_or_and_xor() {
        let mut d = dbc(4);
        d.write_row(0, &Row::from_u128(0b1010, 4)).unwrap();
        d.write_row(1, &Row::from_u128(0b0110, 4)).unwrap();
        d.write_row(2, &Row::from_u128(0b0001, 4)).unwrap();
        assert_eq!(d.bulk_bitwise(BulkOpKind::Or, &[0, 1, 2]).unwrap().to_u128(), 0b1111);
        assert_eq!(d.bulk_bitwise(BulkOpKind::Xor, &[0, 1, 2]).unwrap().to_u128(), 0b1101);
        assert_eq!(d.bulk_bitwise(BulkOpKind::And, &[0, 1, 2]).unwrap().to_u128(), 0);
        assert_eq!(d.peek_row(1).unwrap().to_u128(), 0b0110);
        assert_eq!(d.bulk_bitwise(BulkOpKind::Or, &[0, 1]), Err(Error::SpanNotClear { row: 2 }));
        assert_eq!(d.bulk_bitwise(BulkOpKind::Or, &[0, 9]), Err(Error::OperandsNotInSpan { addr: 9 }));
        assert!(matches!(
            d.bulk_bitwise(BulkOpKind::Or, &[0, 1, 2, 3, 4, 5, 6, 0]),
            Err(Error::TooManyOperands { .. })
        ));
    }

    #[test]
    fn and_of_identical_rows() {
        let mut d = dbc(8);
        let r = Row::from_u128(0b1011_0010, 8);
        for k in 1..=7 {
            for a in 0..7 {
                d.write_row(a, &if a < k { r.clone() } else { Row::zeros(8) }).unwrap();
            }
            let addrs: Vec<_> = (0..k).collect();
            assert_eq!(d.bulk_bitwise(BulkOpKind::And, &addrs).unwrap(), r);
        }
    }

    #[test]
    fn add_three_operands() {
        let mut d = dbc(8);
        for (i, v) in [7u128, 2, 3].iter().enumerate() {
            d.write_row(1 + i, &Row::from_u128(*v, 8)).unwrap();
        }
        let sum = d.add_multi(&AddLayout::single(3, 4)).unwrap();
        assert_eq!(sum.to_u128() & 0x7f, 12);
        // operands below the span top are preserved
        assert_eq!(d.peek_row(1).unwrap().to_u128(), 7);
    }

    #[test]
    fn add_walk_first_column() {
        // 7 + 2 + 3: column 0 holds 1,0,1 -> S=0 on wire 0, C=1 on wire 1
        let mut d = dbc(8);
        for (i, v) in [7u128, 2, 3].iter().enumerate() {
            d.write_row(1 + i, &Row::from_u128(*v, 8)).unwrap();
        }
        let mut one = AddLayout::single(3, 4);
        one.word_bits = 4;
        d.add_multi(&one).unwrap();
        let s = d.peek_row(0).unwrap();
        assert!(!s.get(0));
        // the carry parked in the right-port column of wire 1 is the step-0 carry
        let c = d.peek_row(6).unwrap();
        assert!(c.get(1));
    }

    #[test]
    fn add_zero_operands_writes_no_carries() {
        let mut d = dbc(11);
        let sum = d.add_multi(&AddLayout::single(5, 8)).unwrap();
        assert!(sum.is_zero());
        assert!(d.peek_row(6).unwrap().is_zero());
    }

    #[test]
    fn add_five_max_values() {
        let mut d = dbc(11);
        for r in 1..=5 {
            d.write_row(r, &Row::from_u128(255, 11)).unwrap();
        }
        assert_eq!(d.add_multi(&AddLayout::single(5, 8)).unwrap().to_u128(), 1275);
    }

    #[test]
    fn add_rejects_bad_layouts() {
        let mut d = dbc(16);
        assert!(matches!(d.add_multi(&AddLayout::single(6, 4)), Err(Error::TooManyOperands { .. })));
        assert!(matches!(d.add_multi(&AddLayout::single(2, 14)), Err(Error::WidthOverflow(_))));
        d.write_row(0, &Row::from_u128(1, 16)).unwrap();
        assert_eq!(d.add_multi(&AddLayout::single(2, 4)), Err(Error::EdgeColumnsNotZero));
        d.clear_row(0).unwrap();
        d.write_row(1, &Row::from_u128(0x10, 16)).unwrap();
        assert!(matches!(d.add_multi(&AddLayout::single(2, 4)), Err(Error::WidthOverflow(_))));
        assert!(AddLayout::packed(2, 8, 10).is_err());
    }

    #[test]
    fn logical_shift_write_doubles() {
        let mut d = dbc(8);
        d.write_row(10, &Row::from_u128(0b0011, 8)).unwrap();
        d.logical_shift_write(10, 11).unwrap();
        assert_eq!(d.peek_row(11).unwrap().to_u128(), 0b0110);
        d.logical_shift_write(20, 21).unwrap();
        assert!(d.peek_row(21).unwrap().is_zero());
        d.write_row(12, &Row::from_u128(5, 8)).unwrap();
        for _ in 0..4 {
            d.logical_shift_write(12, 12).unwrap();
        }
        assert_eq!(d.peek_row(12).unwrap().to_u128(), 80);
    }

    #[test]
    fn field_shift_drops_field_top() {
        let r = Row::pack_fields(&[0x80, 0x01], 8, 16).unwrap();
        assert_eq!(r.shifted_in_fields(8).fields(8), vec![0, 2]);
    }

    #[test]
    fn predicated_reset() {
        let mut d = dbc(8);
        assert_eq!(d.predicated_row_reset(true), Err(Error::BufferInvalid));
        d.write_row(3, &Row::from_u128(0xA5, 8)).unwrap();
        d.read_row(3).unwrap();
        d.predicated_row_reset(false).unwrap();
        assert_eq!(d.row_buffer().bits.to_u128(), 0xA5);
        d.predicated_row_reset(true).unwrap();
        assert!(d.row_buffer().bits.is_zero());
        d.predicated_row_reset(true).unwrap();
        assert!(d.row_buffer().bits.is_zero());
    }

    #[test]
    fn tw_rotation_cycles_span() {
        let mut d = dbc(8);
        let vals: Vec<u128> = (0..7).map(|r| (r * 37 + 11) % 256).collect();
        for (r, v) in vals.iter().enumerate() {
            d.write_row(r, &Row::from_u128(*v, 8)).unwrap();
        }
        d.write_row(7, &Row::from_u128(0xFF, 8)).unwrap();
        d.align_span(0).unwrap();
        for step in 1..=7 {
            let out = d.read_port(PORT_R).unwrap();
            let ev = d.tw_rotate_step(&out).unwrap();
            assert_eq!(ev, out);
            let now: Vec<u128> = (0..7).map(|r| d.peek_row(r).unwrap().to_u128()).collect();
            let expect: Vec<u128> = (0..7).map(|r| vals[(r + 7 - step) % 7]).collect();
            assert_eq!(now, expect);
        }
        assert_eq!(d.peek_row(7).unwrap().to_u128(), 0xFF);

        let mut z = dbc(4);
        z.tw_rotate_step(&Row::zeros(4)).unwrap();
        assert!((0..32).all(|r| z.peek_row(r).unwrap().is_zero()));
    }

    #[test]
    fn reduce_span_preserves_sum() {
        let mut d = dbc(8);
        let vals = [13u128, 7, 200, 1, 0, 99, 31];
        for (r, v) in vals.iter().enumerate() {
            d.write_row(r, &Row::from_u128(*v, 8)).unwrap();
        }
        let (s, c, c2) = d.reduce_span(0).unwrap();
        let total: u128 = vals.iter().sum();
        assert_eq!(s.to_u128() + 2 * c.to_u128() + 4 * c2.to_u128(), total);
    }
}
