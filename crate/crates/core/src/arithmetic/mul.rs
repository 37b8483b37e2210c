//! Multiplication by a scheduled sequence of logical shifts and
//! multi-operand additions, on a single cluster.
//!
//! Rows `0..trd` form the compute span and are clobbered; the multiplicand
//! and intermediate results live above it.

use crate::arithmetic::csd::{plan_arbitrary, plan_const_mul, MulSchedule, Source, Term};
use crate::dbc::{AddLayout, BulkOpKind, Dbc, Row};
use crate::error::{Error, Result};

struct Workspace {
    free: Vec<usize>,
}

impl Workspace {
    fn new(dbc: &Dbc, a_addr: usize) -> Result<Self> {
        if a_addr < dbc.trd() || a_addr >= dbc.rows() {
            return Err(Error::OutOfRange(format!(
                "multiplicand row {a_addr} must lie in {}..{}",
                dbc.trd(),
                dbc.rows()
            )));
        }
        let mut free: Vec<usize> = (dbc.trd()..dbc.rows()).filter(|&r| r != a_addr).collect();
        free.reverse();
        Ok(Self { free })
    }

    fn take(&mut self) -> Result<usize> {
        self.free.pop().ok_or_else(|| Error::ScratchUnavailable("out of work rows".into()))
    }
}

/// `dst := src << shift` within fields; `shift == 0` is a plain copy.
fn shifted_copy(dbc: &mut Dbc, src: usize, dst: usize, shift: u32, f: usize) -> Result<()> {
    if shift == 0 {
        let row = dbc.read_row(src)?;
        return dbc.write_row(dst, &row);
    }
    dbc.logical_shift_write_fields(src, dst, f)?;
    for _ in 1..shift {
        dbc.logical_shift_write_fields(dst, dst, f)?;
    }
    Ok(())
}

fn clear_span(dbc: &mut Dbc) -> Result<()> {
    for r in 0..dbc.trd() {
        dbc.clear_row(r)?;
    }
    Ok(())
}

/// Runs a schedule over the fields of row `a_addr`, modulo `2^field_width`.
pub fn execute_schedule(dbc: &mut Dbc, a_addr: usize, schedule: &MulSchedule, field_width: usize) -> Result<Row> {
    let budget = dbc.max_add_operands();
    if let Some(step) = schedule.steps.iter().find(|s| s.slots() > budget) {
        return Err(Error::TooManyOperands { got: step.slots(), max: budget });
    }
    if field_width == 0 || field_width > dbc.width() {
        return Err(Error::WidthOverflow(format!("field of {field_width} bits")));
    }
    let x = dbc.width();
    let f = field_width;
    let mut ws = Workspace::new(dbc, a_addr)?;
    let mut results: Vec<usize> = Vec::new();
    let addr_of = |s: Source, results: &[usize]| match s {
        Source::A => a_addr,
        Source::Step(i) => results[i],
    };
    let fields = x / f;
    let one = Row::pack_fields(&vec![1; fields], f, x)?;

    for step in &schedule.steps {
        clear_span(dbc)?;
        // complemented terms go out of the span before staging
        let mut negs: Vec<(Term, usize)> = Vec::new();
        for t in step.terms.iter().filter(|t| t.negate) {
            shifted_copy(dbc, addr_of(t.source, &results), 1, t.shift, f)?;
            dbc.bulk_bitwise(BulkOpKind::Not, &[1])?;
            let slot = ws.take()?;
            dbc.write_back_row_buffer(slot)?;
            dbc.clear_row(1)?;
            negs.push((*t, slot));
        }
        let mut pos = 1;
        for t in &step.terms {
            if t.negate {
                let slot = negs.iter().find(|(n, _)| n == t).map(|n| n.1).expect("staged above");
                shifted_copy(dbc, slot, pos, 0, f)?;
                pos += 1;
                dbc.write_row(pos, &one)?;
            } else {
                shifted_copy(dbc, addr_of(t.source, &results), pos, t.shift, f)?;
            }
            pos += 1;
        }
        let sum = dbc.add_multi(&AddLayout::modular(step.slots(), f))?;
        for (_, slot) in negs {
            ws.free.push(slot);
        }
        let out = ws.take()?;
        dbc.write_row(out, &sum)?;
        results.push(out);
    }

    match schedule.output {
        None => Ok(Row::zeros(x)),
        Some(t) => {
            let src = addr_of(t.source, &results);
            if t.shift == 0 && !t.negate {
                return dbc.read_row(src);
            }
            let out = ws.take()?;
            shifted_copy(dbc, src, out, t.shift, f)?;
            dbc.read_row(out)
        }
    }
}

/// `constant * A` for every `2w`-bit field of row `a_addr` (words in the
/// low `w` bits), modulo `2^{2w}`.
pub fn mul_const(dbc: &mut Dbc, a_addr: usize, constant: u64, w: usize) -> Result<(Row, MulSchedule)> {
    let f = 2 * w;
    if f < 64 && constant >> f != 0 {
        return Err(Error::WidthOverflow(format!("constant {constant} exceeds {f}-bit fields")));
    }
    let plan = plan_const_mul(constant, dbc.max_add_operands())
        .ok_or(Error::TooManyOperands { got: 2, max: dbc.max_add_operands() })?;
    let row = execute_schedule(dbc, a_addr, &plan, f)?;
    Ok((row, plan))
}

/// `b * A` by summing the partial products `A << i` of the set bits of `b`.
pub fn mul_arbitrary(dbc: &mut Dbc, a_addr: usize, b: u64, w: usize) -> Result<(Row, MulSchedule)> {
    let f = 2 * w;
    if f < 64 && b >> f != 0 {
        return Err(Error::WidthOverflow(format!("multiplier {b} exceeds {f}-bit fields")));
    }
    let plan = plan_arbitrary(b, dbc.max_add_operands())
        .ok_or(Error::TooManyOperands { got: 2, max: dbc.max_add_operands() })?;
    let row = execute_schedule(dbc, a_addr, &plan, f)?;
    Ok((row, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::OpKind;

    fn staged(values: &[u64], w: usize) -> Dbc {
        let mut d = Dbc::new(64, 32, 7).unwrap();
        let row = Row::pack_fields(values, 2 * w, 64).unwrap();
        d.write_row(20, &row).unwrap();
        d
    }

    #[test]
    fn const_20061() {
        let mut d = staged(&[3, 255, 0, 1], 8);
        let (p, plan) = mul_const(&mut d, 20, 20061, 8).unwrap();
        assert_eq!(plan.steps.len(), 2);
        let adds = d.log().iter().filter(|c| c.kind == OpKind::Tr).count();
        assert!(adds > 0);
        assert_eq!(p.fields(16), vec![60183, (255 * 20061) % 65536, 0, 20061]);
    }

    #[test]
    fn const_trivial() {
        let mut d = staged(&[3, 7, 0, 200], 8);
        let (p, _) = mul_const(&mut d, 20, 0, 8).unwrap();
        assert!(p.is_zero());
        d.take_log();
        let (p, plan) = mul_const(&mut d, 20, 2, 8).unwrap();
        assert!(plan.steps.is_empty());
        assert_eq!(p.fields(16), vec![6, 14, 0, 400]);
        assert!(d.log().iter().all(|c| c.kind != OpKind::Tr));
        assert!(mul_const(&mut d, 20, 1 << 16, 8).is_err());
    }

    #[test]
    fn const_sweep() {
        let vals = [1u64, 2, 77, 255];
        let mut d = staged(&vals, 8);
        for c in (0..65536u64).step_by(997).chain([3, 5, 7, 11, 255, 65535]) {
            let (p, _) = mul_const(&mut d, 20, c, 8).unwrap();
            let want: Vec<u64> = vals.iter().map(|v| v * c % 65536).collect();
            assert_eq!(p.fields(16), want, "constant {c}");
        }
    }

    #[test]
    fn arbitrary_products() {
        let vals = [3u64, 100, 255, 0];
        let mut d = staged(&vals, 8);
        for b in [0u64, 1, 20061, 255, 65535, 12345] {
            let (p, _) = mul_arbitrary(&mut d, 20, b, 8).unwrap();
            let want: Vec<u64> = vals.iter().map(|v| v * b % 65536).collect();
            assert_eq!(p.fields(16), want, "b = {b}");
        }
    }

    #[test]
    fn multiplicand_must_sit_above_span() {
        let mut d = staged(&[1], 8);
        assert!(matches!(mul_const(&mut d, 3, 5, 8), Err(Error::OutOfRange(_))));
    }
}
