//! Word-level arithmetic composed from cluster primitives.
//!
//! Words are packed side by side in fixed-width fields of a row; every
//! routine processes all fields of a row with one command stream.

pub mod csd;
pub mod mul;
pub mod nn;

use serde::{Deserialize, Serialize};

use crate::dbc::{BulkOpKind, Dbc, Row, PORT_R};
use crate::error::{Error, Result};

pub use csd::{plan_arbitrary, plan_const_mul, recode_csd, MulSchedule, SignedDigitString};
pub use mul::{mul_arbitrary, mul_const};
pub use nn::{avgpool, convolve, fully_connected, maxpool, Matrix};

/// Two's-complement encoding of `v` in `field_width` bits.
pub fn to_field(v: i64, field_width: usize) -> u64 {
    if field_width >= 64 {
        v as u64
    } else {
        (v as u64) & ((1u64 << field_width) - 1)
    }
}

/// Signed value of a `field_width`-bit two's-complement field.
pub fn from_field(u: u64, field_width: usize) -> i64 {
    if field_width >= 64 {
        return u as i64;
    }
    let shift = 64 - field_width as u32;
    ((u << shift) as i64) >> shift
}

/// Whether `v` is representable in `field_width` signed bits.
pub fn fits_signed(v: i64, field_width: usize) -> bool {
    field_width >= 64 || (-(1i64 << (field_width - 1))..(1i64 << (field_width - 1))).contains(&v)
}

/// Up to `trd` operand rows for one reduction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionSet {
    pub rows: Vec<Row>,
}

/// Reduces up to `trd` rows to sum, carry and super-carry rows whose
/// weighted total `S + 2C + 4C'` equals the sum of the inputs. The rows
/// are staged into the span and the rest of the span is cleared.
pub fn reduce_7_3(dbc: &mut Dbc, set: &ReductionSet) -> Result<(Row, Row, Row)> {
    let n = set.rows.len();
    if n == 0 || n > dbc.trd() {
        return Err(Error::TooManyOperands { got: n, max: dbc.trd() });
    }
    for (i, r) in set.rows.iter().enumerate() {
        dbc.write_row(i, r)?;
    }
    for i in n..dbc.trd() {
        dbc.clear_row(i)?;
    }
    dbc.reduce_span(0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulStats {
    pub logical_shifts: usize,
    pub reductions: usize,
    pub additions: usize,
}

/// Which cluster of a main/scratch pair holds the live rows.
fn pick<'a>(main: &'a mut Dbc, scratch: &'a mut Dbc, second: bool) -> (&'a mut Dbc, &'a mut Dbc) {
    if second {
        (scratch, main)
    } else {
        (main, scratch)
    }
}

fn check_pair(main: &Dbc, scratch: &Dbc) -> Result<()> {
    if scratch.width() != main.width() || scratch.trd() != main.trd() || scratch.rows() != main.rows() {
        return Err(Error::ScratchUnavailable(format!(
            "scratch cluster {}x{} (trd {}) does not match {}x{} (trd {})",
            scratch.width(),
            scratch.rows(),
            scratch.trd(),
            main.width(),
            main.rows(),
            main.trd()
        )));
    }
    Ok(())
}

/// Sums `count` rows stored at `start..start + count` of `main`, modulo
/// `2^field_width` per field.
///
/// Full groups of `trd` rows go through 7-to-3 reduction into the other
/// cluster (carry rows shifted into place on arrival), remainders are
/// copied across, and passes repeat until the add can take the rest.
fn reduce_and_add(
    main: &mut Dbc,
    scratch: &mut Dbc,
    start: usize,
    count: usize,
    field_width: usize,
    stats: &mut MulStats,
) -> Result<Row> {
    check_pair(main, scratch)?;
    let trd = main.trd();
    let budget = main.max_add_operands();
    let (mut second, mut start, mut count) = (false, start, count);
    if count == 0 {
        return Ok(Row::zeros(main.width()));
    }
    while count > budget {
        let (cur, other) = pick(main, scratch, second);
        let groups = (count / trd).max(1);
        let reduced = (groups * trd).min(count);
        if reduced < trd {
            if start + trd > cur.rows() {
                return Err(Error::ScratchUnavailable("no room for a reduction span".into()));
            }
            for r in start + reduced..start + trd {
                cur.clear_row(r)?;
            }
        }
        let mut dst = 1;
        for g in 0..groups {
            let (s, c, c2) = cur.reduce_span(start + g * trd)?;
            other.copy_in(dst, &s)?;
            other.copy_in(dst + 1, &c)?;
            other.logical_shift_write_fields(dst + 1, dst + 1, field_width)?;
            other.copy_in(dst + 2, &c2)?;
            for _ in 0..2 {
                other.logical_shift_write_fields(dst + 2, dst + 2, field_width)?;
            }
            dst += 3;
            stats.reductions += 1;
        }
        for r in start + reduced..start + count {
            let row = cur.read_row(r)?;
            other.copy_in(dst, &row)?;
            dst += 1;
        }
        second = !second;
        start = 1;
        count = dst - 1;
    }
    if start != 1 {
        let (cur, other) = pick(main, scratch, second);
        for i in 0..count {
            let row = cur.read_row(start + i)?;
            other.copy_in(1 + i, &row)?;
        }
        second = !second;
    }
    let (cur, _) = pick(main, scratch, second);
    cur.clear_row(0)?;
    for r in count + 1..trd {
        cur.clear_row(r)?;
    }
    stats.additions += 1;
    cur.add_multi(&crate::dbc::AddLayout::modular(count, field_width))
}

/// Field-wise sum of `rows` modulo `2^field_width`.
pub fn sum_rows(main: &mut Dbc, scratch: &mut Dbc, rows: &[Row], field_width: usize) -> Result<Row> {
    let cap = main.rows();
    let mut stats = MulStats::default();
    let mut pending: Vec<Row> = rows.to_vec();
    loop {
        let take = pending.len().min(cap);
        for (i, r) in pending[..take].iter().enumerate() {
            main.copy_in(i, r)?;
        }
        let partial = reduce_and_add(main, scratch, 0, take, field_width, &mut stats)?;
        if take == pending.len() {
            return Ok(partial);
        }
        let mut rest = vec![partial];
        rest.extend_from_slice(&pending[take..]);
        pending = rest;
    }
}

/// Multiplier shape: `bits` partial products per field of `field_width`
/// bits. Unsigned `w`-bit words use `bits = w`, `field_width = 2w`;
/// two's-complement words use `bits = field_width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MulConfig {
    pub bits: usize,
    pub field_width: usize,
}

impl MulConfig {
    pub fn unsigned(w: usize) -> Self {
        Self { bits: w, field_width: 2 * w }
    }

    pub fn signed(field_width: usize) -> Self {
        Self { bits: field_width, field_width }
    }
}

/// Field-parallel product `a_j * b_j mod 2^field_width`.
///
/// Shifted copies of A fill rows `0..bits` of `main`; copy `i` of field
/// `j` is zeroed where bit `i` of `b_j` is clear, driven from B held in
/// the row buffer. The surviving partial products are reduced between the
/// two clusters and finished with one addition.
pub fn mul_optimized(main: &mut Dbc, scratch: &mut Dbc, a: &Row, b: &Row, cfg: MulConfig) -> Result<(Row, MulStats)> {
    check_pair(main, scratch)?;
    let MulConfig { bits, field_width: f } = cfg;
    if bits == 0 || bits > f || f > 64 || f > main.width() {
        return Err(Error::WidthOverflow(format!("{bits} multiplier bits in {f}-bit fields")));
    }
    if bits > main.rows() {
        return Err(Error::WidthOverflow(format!("{bits} partial products exceed {} rows", main.rows())));
    }
    let x = main.width();
    if a.len() != x || b.len() != x {
        return Err(Error::RowWidthMismatch { expected: x, got: if a.len() != x { a.len() } else { b.len() } });
    }
    let mut stats = MulStats::default();
    main.copy_in(0, a)?;
    for i in 1..bits {
        main.logical_shift_write_fields(i - 1, i, f)?;
        stats.logical_shifts += 1;
    }
    main.copy_in_row_buffer(b)?;
    let fields = x / f;
    let zero = Row::zeros(x);
    for i in (0..bits).rev() {
        let mut mask = Row::zeros(x);
        for j in 0..fields {
            if !main.row_buffer().bits.get(j * f + i) {
                (j * f..(j + 1) * f).for_each(|k| mask.set(k, true));
            }
        }
        main.write_row_masked(i, &zero, &mask)?;
    }
    let product = reduce_and_add(main, scratch, 0, bits, f, &mut stats)?;
    Ok((product, stats))
}

/// Field-wise unsigned maximum of up to `trd - 2` words.
///
/// Bits are examined MSB first. Whenever some word has the current bit
/// set, every word lacking it is reset to zero as the span is cycled once
/// through the row buffer; the command stream never depends on the data.
pub fn max_reduce(dbc: &mut Dbc, words: &[Row], field_width: usize) -> Result<Row> {
    let trd = dbc.trd();
    let k = words.len();
    if k == 0 || k > trd - 2 {
        return Err(Error::TooManyOperands { got: k, max: trd - 2 });
    }
    if field_width == 0 || field_width > dbc.width() {
        return Err(Error::WidthOverflow(format!("field of {field_width} bits")));
    }
    for (i, w) in words.iter().enumerate() {
        dbc.write_row(i, w)?;
    }
    for i in k..trd {
        dbc.clear_row(i)?;
    }
    let fields = dbc.width() / field_width;
    for bit in (0..field_width).rev() {
        let counts = dbc.tr_counts(0)?;
        let any: Vec<bool> = (0..fields).map(|j| counts[j * field_width + bit] > 0).collect();
        for _ in 0..trd {
            let out = dbc.read_port(PORT_R)?;
            let reset: Vec<bool> = (0..fields).map(|j| any[j] && !out.get(j * field_width + bit)).collect();
            dbc.predicated_field_reset(&reset, field_width)?;
            let back = dbc.row_buffer().bits.clone();
            dbc.tw_rotate_step(&back)?;
        }
    }
    let all: Vec<usize> = (0..trd).collect();
    dbc.bulk_bitwise(BulkOpKind::Or, &all)
}

/// Zeroes every negative two's-complement field of row `addr` in place.
pub fn relu_row(dbc: &mut Dbc, addr: usize, field_width: usize) -> Result<Row> {
    if field_width == 0 || field_width > dbc.width() {
        return Err(Error::WidthOverflow(format!("field of {field_width} bits")));
    }
    let row = dbc.read_row(addr)?;
    let negative: Vec<bool> = (0..dbc.width() / field_width).map(|j| row.get((j + 1) * field_width - 1)).collect();
    dbc.predicated_field_reset(&negative, field_width)?;
    dbc.write_back_row_buffer(addr)?;
    Ok(dbc.row_buffer().bits.clone())
}
