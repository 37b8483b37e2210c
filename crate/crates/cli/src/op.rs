//! `op`: one operation on literal operands, checked against plain integer
//! arithmetic. Prints the result, cycles and energy; writes `report.json`.

use std::fmt::Write as _;
use std::fs;

use racetrack_pim::arithmetic::mul::mul_const;
use racetrack_pim::arithmetic::{max_reduce, mul_optimized, MulConfig};
use racetrack_pim::dbc::{AddLayout, BulkOpKind, Row};
use racetrack_pim::hierarchy::Engine;
use racetrack_pim::workloads::{cluster_pair, RunReport};

use crate::config::Config;
use crate::{CliError, OpCommand};

fn check_width(values: &[u64], w: usize) -> Result<(), CliError> {
    if w == 0 || w > 32 {
        return Err(CliError::Usage(format!("word width {w} outside 1..=32")));
    }
    match values.iter().find(|&&v| v >> w != 0) {
        Some(v) => Err(CliError::Usage(format!("{v} does not fit in {w} bits"))),
        None => Ok(()),
    }
}

fn parse_hex(s: &str) -> Result<u128, CliError> {
    let digits = s.trim_start_matches("0x").trim_start_matches("0X");
    u128::from_str_radix(digits, 16).map_err(|_| CliError::Usage(format!("`{s}` is not a hexadecimal value")))
}

fn fold(op: BulkOpKind, values: &[u128], mask: u128) -> u128 {
    let and = values.iter().fold(mask, |a, v| a & v);
    let or = values.iter().fold(0, |a, v| a | v);
    let xor = values.iter().fold(0, |a, v| a ^ v);
    let r = match op {
        BulkOpKind::And => and,
        BulkOpKind::Nand => !and,
        BulkOpKind::Or => or,
        BulkOpKind::Nor => !or,
        BulkOpKind::Xor => xor,
        BulkOpKind::Xnor => !xor,
        BulkOpKind::Not => !values[0],
    };
    r & mask
}

struct Outcome {
    name: &'static str,
    result: u128,
    expected: u128,
    shown: String,
    notes: String,
}

fn compute(engine: &mut Engine, op: &OpCommand) -> Result<Outcome, CliError> {
    let (main, scratch) = cluster_pair(engine)?;
    let x = engine.geometry().wires;
    let trd = engine.geometry().trd;
    Ok(match op {
        OpCommand::Add5 { values, w } => {
            check_width(values, *w)?;
            let k = values.len();
            let row = engine.run_on(&main, |d| {
                for (i, &v) in values.iter().enumerate() {
                    d.write_row(i + 1, &Row::from_u128(u128::from(v), x))?;
                }
                d.add_multi(&AddLayout::single(k, *w))
            })?;
            let result = row.to_u128() & ((1u128 << (w + 3)) - 1);
            let expected = values.iter().map(|&v| u128::from(v)).sum();
            Outcome { name: "add5", result, expected, shown: result.to_string(), notes: String::new() }
        }
        OpCommand::Mulc { a, constant, w } => {
            check_width(&[*a], *w)?;
            let f = 2 * w;
            let (row, plan) = engine.run_on(&main, |d| {
                d.write_row(trd, &Row::pack_fields(&[*a], f, x)?)?;
                mul_const(d, trd, *constant, *w)
            })?;
            let result = u128::from(row.field(0, f));
            let expected = (u128::from(*a) * u128::from(*constant)) & ((1u128 << f) - 1);
            let mut notes = format!("addition steps: {}\n", plan.steps.len());
            let _ = writeln!(notes, "{plan}");
            Outcome { name: "mulc", result, expected, shown: result.to_string(), notes }
        }
        OpCommand::Mul { a, b, w } => {
            check_width(&[*a, *b], *w)?;
            let f = 2 * w;
            let (ra, rb) = (Row::pack_fields(&[*a], f, x)?, Row::pack_fields(&[*b], f, x)?);
            let (row, stats) =
                engine.run_on_pair(&main, &scratch, |m, s| mul_optimized(m, s, &ra, &rb, MulConfig::unsigned(*w)))?;
            let result = u128::from(row.field(0, f));
            let notes = format!(
                "logical shifts: {}\nreductions: {}\nadditions: {}\n",
                stats.logical_shifts, stats.reductions, stats.additions
            );
            Outcome { name: "mul", result, expected: u128::from(*a) * u128::from(*b), shown: result.to_string(), notes }
        }
        OpCommand::Bbop { op, values } => {
            let kind =
                BulkOpKind::parse(op).ok_or_else(|| CliError::Usage(format!("unknown bulk operation `{op}`")))?;
            let nums: Vec<u128> = values.iter().map(|v| parse_hex(v)).collect::<Result<_, _>>()?;
            let digits =
                values.iter().map(|v| v.trim_start_matches("0x").trim_start_matches("0X").len()).max().unwrap_or(1);
            let bits = (4 * digits).min(128);
            let mask = if bits == 128 { u128::MAX } else { (1u128 << bits) - 1 };
            let k = nums.len();
            let row = engine.run_on(&main, |d| {
                for (i, &v) in nums.iter().enumerate() {
                    d.write_row(i, &Row::from_u128(v, x))?;
                }
                d.bulk_bitwise(kind, &(0..k).collect::<Vec<_>>())
            })?;
            let result = row.to_u128() & mask;
            let expected = fold(kind, &nums, mask);
            Outcome { name: "bbop", result, expected, shown: format!("0x{result:X}"), notes: String::new() }
        }
        OpCommand::Max { values, w } => {
            check_width(values, *w)?;
            let rows: Vec<Row> = values.iter().map(|&v| Row::pack_fields(&[v], *w, x)).collect::<Result<_, _>>()?;
            let row = engine.run_on(&main, |d| max_reduce(d, &rows, *w))?;
            let result = u128::from(row.field(0, *w));
            let expected = values.iter().map(|&v| u128::from(v)).max().unwrap_or(0);
            Outcome { name: "max", result, expected, shown: result.to_string(), notes: String::new() }
        }
    })
}

pub fn run(cfg: &Config, op: &OpCommand) -> Result<(), CliError> {
    let mut engine = Engine::new(cfg.geometry.clone(), cfg.cost_table()?)?;
    engine.set_tracing(cfg.trace);
    let out = compute(&mut engine, op)?;
    let c = engine.counters();
    println!("{}", out.shown);
    print!("{}", out.notes);
    println!("cycles: {}", c.cycles);
    println!("energy_pj: {}", c.energy_pj());
    let as_i64 = i64::try_from(out.result).unwrap_or(i64::MAX);
    let mut report = RunReport::new(&format!("op-{}", out.name), cfg.seed, &[as_i64], out.result == out.expected, c)
        .with_extra("result", out.shown.clone());
    fs::create_dir_all(&cfg.out)?;
    if cfg.trace {
        fs::write(cfg.out.join("trace.txt"), engine.trace_text())?;
        fs::write(cfg.out.join("trace.json"), engine.trace_json()?)?;
        report.trace_path = Some(cfg.out.join("trace.json").display().to_string());
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Usage(e.to_string()))?;
    fs::write(cfg.out.join("report.json"), json + "\n")?;
    if report.oracle_match {
        Ok(())
    } else {
        Err(CliError::Mismatch(format!("got {}, expected {}", out.result, out.expected)))
    }
}
