//! Single racetrack nanowire.
//!
//! Data domains are kept in logical order together with a signed offset
//! that records how far the data has been shifted relative to the fixed
//! access ports. Overhead domains at both extremities are implicit: they
//! always read as `0` and can never be written, so shifting is pure
//! bookkeeping and data loss is reported instead of silently truncated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default maximum transverse-read distance.
pub const DEFAULT_TRD: usize = 7;
/// Largest TR distance the sense logic can be configured for.
pub const MAX_TRD: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Right,
}

/// A contiguous run of domains sensed by one transverse read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrSpan {
    /// Absolute index of the first domain.
    pub first: usize,
    /// Number of domains, both end domains included.
    pub width: usize,
}

impl TrSpan {
    pub fn new(first: usize, width: usize) -> Result<Self> {
        if width == 0 {
            return Err(Error::SpanOutOfBounds { first, width });
        }
        Ok(Self { first, width })
    }

    /// Span between two access ports, inclusive of both port-aligned domains.
    pub fn between_ports(nw: &Nanowire, low_port: usize, high_port: usize) -> Result<Self> {
        let lo = nw.port_position(low_port)?;
        let hi = nw.port_position(high_port)?;
        if hi < lo {
            return Err(Error::InvalidPort { port: high_port });
        }
        Self::new(lo, hi - lo + 1)
    }

    /// Span from an access port to the left extremity of the wire.
    pub fn to_left_end(nw: &Nanowire, port: usize) -> Result<Self> {
        let p = nw.port_position(port)?;
        Self::new(0, p + 1)
    }

    /// Span from an access port to the right extremity of the wire.
    pub fn to_right_end(nw: &Nanowire, port: usize) -> Result<Self> {
        let p = nw.port_position(port)?;
        Self::new(p, nw.total_len() - p)
    }

    pub fn last(&self) -> usize {
        self.first + self.width - 1
    }

    fn overlaps(&self, other: &TrSpan) -> bool {
        self.first <= other.last() && other.first <= self.last()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nanowire {
    data: Vec<u8>,
    total_len: usize,
    /// Absolute position of `data[0]` when `offset == 0`.
    home_start: usize,
    offset: isize,
    ports: Vec<usize>,
    trd: usize,
}

impl Nanowire {
    /// A wire with `data_len` data domains, the given overhead on each side
    /// and ports at absolute domain positions.
    pub fn new(
        data_len: usize,
        overhead_left: usize,
        overhead_right: usize,
        ports: Vec<usize>,
        trd: usize,
    ) -> Result<Self> {
        if data_len == 0 {
            return Err(Error::InvalidGeometry("nanowire needs at least one data domain".into()));
        }
        if !(2..=MAX_TRD).contains(&trd) {
            return Err(Error::InvalidGeometry(format!("TRD {trd} outside 2..={MAX_TRD}")));
        }
        let total_len = data_len + overhead_left + overhead_right;
        if ports.is_empty() {
            return Err(Error::InvalidGeometry("nanowire needs an access port".into()));
        }
        if ports.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGeometry("port positions must be strictly increasing".into()));
        }
        if *ports.last().unwrap() >= total_len {
            return Err(Error::InvalidGeometry("port beyond the end of the wire".into()));
        }
        Ok(Self { data: vec![0; data_len], total_len, home_start: overhead_left, offset: 0, ports, trd })
    }

    /// PIM-enabled wire holding `rows` data domains with two ports exactly
    /// `trd` domains apart.
    ///
    /// The ports sit at `rows - trd` and `rows - 1` of a `2 * rows - trd`
    /// domain wire: every row can reach its nearer port, and at the rest
    /// position rows `0..trd` lie between the ports (row 0 under the left
    /// port, row `trd - 1` under the right one).
    pub fn pim(rows: usize, trd: usize) -> Result<Self> {
        if rows < trd {
            return Err(Error::InvalidGeometry(format!("{rows} rows cannot hold a TR span of {trd} domains")));
        }
        let overhead = rows - trd;
        Self::new(rows, overhead, 0, vec![rows - trd, rows - 1], trd)
    }

    pub fn data_len(&self) -> usize {
        self.data.len()
    }

    pub fn total_len(&self) -> usize {
        self.total_len
    }

    pub fn trd(&self) -> usize {
        self.trd
    }

    pub fn offset(&self) -> isize {
        self.offset
    }

    pub fn ports(&self) -> &[usize] {
        &self.ports
    }

    /// Logical data domains, row 0 first.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Absolute position currently holding data domain 0.
    pub fn data_start(&self) -> usize {
        (self.home_start as isize + self.offset) as usize
    }

    pub fn overhead_left(&self) -> usize {
        self.data_start()
    }

    pub fn overhead_right(&self) -> usize {
        self.total_len - self.data_start() - self.data.len()
    }

    pub fn port_position(&self, port: usize) -> Result<usize> {
        self.ports.get(port).copied().ok_or(Error::InvalidPort { port })
    }

    /// Value of the domain at an absolute position (overhead reads as 0).
    pub fn domain(&self, position: usize) -> u8 {
        self.data_index(position).map_or(0, |i| self.data[i])
    }

    /// Full tape including overhead domains.
    pub fn domains(&self) -> Vec<u8> {
        (0..self.total_len).map(|p| self.domain(p)).collect()
    }

    /// Data row currently aligned with `port`, if any.
    pub fn row_at_port(&self, port: usize) -> Result<Option<usize>> {
        let p = self.port_position(port)?;
        Ok(self.data_index(p))
    }

    fn data_index(&self, position: usize) -> Option<usize> {
        let start = self.data_start();
        (position >= start && position < start + self.data.len()).then(|| position - start)
    }

    pub fn shift(&mut self, direction: Direction, count: usize) -> Result<()> {
        let available = match direction {
            Direction::Left => self.overhead_left(),
            Direction::Right => self.overhead_right(),
        };
        if count > available {
            return Err(Error::ShiftOverflow { requested: count, available });
        }
        match direction {
            Direction::Left => self.offset -= count as isize,
            Direction::Right => self.offset += count as isize,
        }
        Ok(())
    }

    pub fn read_at(&self, port: usize) -> Result<u8> {
        let p = self.port_position(port)?;
        Ok(self.domain(p))
    }

    pub fn write_at(&mut self, port: usize, value: u8) -> Result<()> {
        let p = self.port_position(port)?;
        let i = self.data_index(p).ok_or(Error::OverheadAccess { position: p })?;
        self.data[i] = value & 1;
        Ok(())
    }

    /// Ones count over the span, both ends included.
    pub fn transverse_read(&self, span: TrSpan) -> Result<u32> {
        self.check_span(span)?;
        Ok((span.first..=span.last()).map(|p| u32::from(self.domain(p))).sum())
    }

    /// Reads several disjoint spans in one event.
    pub fn segmented_transverse_read(&self, segments: &[TrSpan]) -> Result<Vec<u32>> {
        for (i, a) in segments.iter().enumerate() {
            self.check_span(*a)?;
            if segments[i + 1..].iter().any(|b| a.overlaps(b)) {
                return Err(Error::OverlappingSegments);
            }
        }
        segments.iter().map(|s| self.transverse_read(*s)).collect()
    }

    /// Writes `value` under `left_port` while the segment up to `right_port`
    /// moves one domain to the right. Returns the bit pushed out under
    /// `right_port`; domains outside the segment are untouched.
    pub fn transverse_write(&mut self, left_port: usize, right_port: usize, value: u8) -> Result<u8> {
        let lo = self.port_position(left_port)?;
        let hi = self.port_position(right_port)?;
        if hi <= lo {
            return Err(Error::InvalidPort { port: right_port });
        }
        let width = hi - lo + 1;
        if width > self.trd {
            return Err(Error::SpanTooWide { width, trd: self.trd });
        }
        let first = self.data_index(lo).ok_or(Error::OverheadAccess { position: lo })?;
        let last = self.data_index(hi).ok_or(Error::OverheadAccess { position: hi })?;
        let evicted = self.data[last];
        self.data.copy_within(first..last, first + 1);
        self.data[first] = value & 1;
        Ok(evicted)
    }

    fn check_span(&self, span: TrSpan) -> Result<()> {
        if span.width > self.trd {
            return Err(Error::SpanTooWide { width: span.width, trd: self.trd });
        }
        if span.width == 0 || span.last() >= self.total_len {
            return Err(Error::SpanOutOfBounds { first: span.first, width: span.width });
        }
        Ok(())
    }

    /// Direct data access for staging test fixtures.
    pub fn set_data(&mut self, row: usize, value: u8) {
        self.data[row] = value & 1;
    }
}
