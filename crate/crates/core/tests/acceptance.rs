//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails. Every tolerance and time budget is a constant here.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use racetrack_pim::arithmetic::nn::{convolve, fully_connected, Matrix};
use racetrack_pim::arithmetic::{
    from_field, max_reduce, mul_const, mul_optimized, reduce_7_3, relu_row, to_field, MulConfig, ReductionSet,
};
use racetrack_pim::cost::{area_overhead, calibration_report, CostTable, IsaFeatures};
use racetrack_pim::hierarchy::{Engine, Geometry};
use racetrack_pim::workloads::{
    bitmap_query, passes_needed, run_cnn_forward, run_kernel, BitmapDataset, BitmapQuery, CnnSpec, KernelKind,
    KernelSpec,
};
use racetrack_pim::{AddLayout, BulkOpKind, Dbc, Nanowire, Row, TrSpan};

const TR_BUDGET: Duration = Duration::from_secs(1);
const BULK_BUDGET: Duration = Duration::from_secs(10);
const ADD_BUDGET: Duration = Duration::from_secs(60);
const MUL_BUDGET: Duration = Duration::from_secs(300);
const BULK_RANDOM_ROWS: usize = 10_000;
const ADD_RANDOM_TRIALS: usize = 100_000;
const REDUCE_RANDOM_SETS: usize = 10_000;
const MULC_RANDOM_PAIRS: usize = 10_000;
const LAYER_RANDOM_TRIALS: usize = 10_000;
const MUL_TARGET_CYCLES: u64 = 64;
const MUL_TARGET_PJ: f64 = 57.39;
const MUL_TOLERANCE: f64 = 0.10;
const AREA_TARGET_PCT: f64 = 10.0;
const AREA_TOLERANCE_PP: f64 = 1.0;
const BASELINE_MIN_ADVANTAGE: f64 = 5.0;
const BITMAP_RECORDS: usize = 65_536;
const X: usize = 512;
const TRD: usize = 7;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < budget, || format!("took {t:.2?}, budget {budget:?}"))?;
    Ok(t)
}

fn dbc(width: usize) -> Dbc {
    Dbc::new(width, 32, TRD).unwrap()
}

fn e<E: std::fmt::Debug>(err: E) -> String {
    format!("{err:?}")
}

fn column_rows(k: usize) -> Vec<Row> {
    // column j holds the bits of j, one operand row per bit
    (0..k).map(|r| Row::from_bits((0..1usize << k).map(|j| j >> r & 1 == 1).collect())).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for state in 0u32..1 << TRD {
        let mut w = Nanowire::pim(32, TRD).map_err(e)?;
        for r in 0..TRD {
            w.set_data(r, (state >> r & 1) as u8);
        }
        let first = w.port_position(0).map_err(e)?;
        for width in 1..=TRD {
            let got = w.transverse_read(TrSpan::new(first, width).map_err(e)?).map_err(e)?;
            let want = (state & ((1 << width) - 1)).count_ones();
            ensure(got == want, || format!("state {state:07b} width {width}: {got} != {want}"))?;
            checked += 1;
        }
    }
    let t = within_budget(start, TR_BUDGET)?;
    Ok(format!("{checked} span reads exact in {t:.2?}"))
}

fn fold(op: BulkOpKind, bits: &[bool]) -> bool {
    let ones = bits.iter().filter(|&&b| b).count();
    match op {
        BulkOpKind::Or => ones > 0,
        BulkOpKind::Nor => ones == 0,
        BulkOpKind::And => ones == bits.len(),
        BulkOpKind::Nand => ones != bits.len(),
        BulkOpKind::Xor => ones % 2 == 1,
        BulkOpKind::Xnor => ones % 2 == 0,
        BulkOpKind::Not => !bits[0],
    }
}

const BULK_OPS: [BulkOpKind; 6] =
    [BulkOpKind::Or, BulkOpKind::Nor, BulkOpKind::And, BulkOpKind::Nand, BulkOpKind::Xor, BulkOpKind::Xnor];

fn bulk_check(d: &mut Dbc, op: BulkOpKind, rows: &[Row]) -> Result<(), String> {
    for (i, r) in rows.iter().enumerate() {
        d.write_row(i, r).map_err(e)?;
    }
    for i in rows.len()..TRD {
        d.clear_row(i).map_err(e)?;
    }
    let out = d.bulk_bitwise(op, &(0..rows.len()).collect::<Vec<_>>()).map_err(e)?;
    d.take_log();
    for c in 0..d.width() {
        let col: Vec<bool> = rows.iter().map(|r| r.get(c)).collect();
        ensure(out.get(c) == fold(op, &col), || format!("{op:?} k={} column {c}", rows.len()))?;
    }
    Ok(())
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    for k in 2..=TRD {
        let rows = column_rows(k);
        let mut d = dbc(1 << k);
        for op in BULK_OPS {
            bulk_check(&mut d, op, &rows)?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut d = dbc(X);
    for _ in 0..BULK_RANDOM_ROWS {
        let k = rng.gen_range(2..=TRD);
        let op = BULK_OPS[rng.gen_range(0..BULK_OPS.len())];
        let rows: Vec<Row> = (0..k).map(|_| Row::from_bits((0..X).map(|_| rng.gen()).collect())).collect();
        bulk_check(&mut d, op, &rows)?;
    }
    let t = within_budget(start, BULK_BUDGET)?;
    Ok(format!("exhaustive k=2..7 x 6 ops, {BULK_RANDOM_ROWS} random 512-bit row sets, {t:.2?}"))
}

/// Adds `ops[i][j]` over `i` for every field `j`; returns the field sums.
fn packed_add(d: &mut Dbc, ops: &[Vec<u64>], w: usize) -> Result<Vec<u64>, String> {
    let f = w + 3;
    for (i, vals) in ops.iter().enumerate() {
        d.write_row(i + 1, &Row::pack_fields(vals, f, d.width()).map_err(e)?).map_err(e)?;
    }
    d.clear_row(0).map_err(e)?;
    for r in ops.len() + 1..TRD {
        d.clear_row(r).map_err(e)?;
    }
    let sum = d.add_multi(&AddLayout::packed(ops.len(), w, f).map_err(e)?).map_err(e)?;
    d.take_log();
    Ok((0..ops[0].len()).map(|j| sum.field(j, f)).collect())
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut d = dbc(X);
    let per_row = X / 7;
    let cases: Vec<u64> = (0..1u64 << 20).collect();
    for chunk in cases.chunks(per_row) {
        let ops: Vec<Vec<u64>> = (0..5).map(|i| chunk.iter().map(|c| c >> (4 * i) & 0xF).collect()).collect();
        let got = packed_add(&mut d, &ops, 4)?;
        for (j, &c) in chunk.iter().enumerate() {
            let want: u64 = (0..5).map(|i| c >> (4 * i) & 0xF).sum();
            ensure(got[j] == want, || format!("case {c:05x}: {} != {want}", got[j]))?;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut trials = 0;
    for (n, w) in [8usize, 16, 32].into_iter().enumerate() {
        let quota = ADD_RANDOM_TRIALS / 3 + usize::from(n == 0) * (ADD_RANDOM_TRIALS % 3);
        let per_row = X / (w + 3);
        let mut done = 0;
        while done < quota {
            let fields = per_row.min(quota - done);
            let k = rng.gen_range(2..=5);
            let ops: Vec<Vec<u64>> =
                (0..k).map(|_| (0..fields).map(|_| rng.gen_range(0..1u64 << w)).collect()).collect();
            let got = packed_add(&mut d, &ops, w)?;
            for j in 0..fields {
                let want: u64 = ops.iter().map(|o| o[j]).sum();
                ensure(got[j] == want, || format!("w={w} k={k}: {} != {want}", got[j]))?;
            }
            done += fields;
        }
        trials += done;
    }
    let t = within_budget(start, ADD_BUDGET)?;
    Ok(format!("2^20 exhaustive (5 x 4-bit) + {trials} random at w=8/16/32, {t:.2?}"))
}

fn check_reduction(d: &mut Dbc, rows: &[Row]) -> Result<(), String> {
    let (s, c, c2) = reduce_7_3(d, &ReductionSet { rows: rows.to_vec() }).map_err(e)?;
    d.take_log();
    for j in 0..d.width() {
        let ones = rows.iter().filter(|r| r.get(j)).count();
        let got = usize::from(s.get(j)) + 2 * usize::from(c.get(j)) + 4 * usize::from(c2.get(j));
        ensure(got == ones, || format!("column {j}: S+2C+4C' = {got}, inputs {ones}"))?;
    }
    Ok(())
}

fn criterion_4() -> Outcome {
    let mut d = dbc(1 << TRD);
    check_reduction(&mut d, &column_rows(TRD))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut d = dbc(X);
    for _ in 0..REDUCE_RANDOM_SETS {
        let k = rng.gen_range(1..=TRD);
        let rows: Vec<Row> = (0..k).map(|_| Row::from_bits((0..X).map(|_| rng.gen()).collect())).collect();
        check_reduction(&mut d, &rows)?;
    }
    Ok(format!("2^7 column patterns + {REDUCE_RANDOM_SETS} random row sets"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let (mut m, mut s) = (dbc(X), dbc(X));
    let f = 16;
    let pairs: Vec<(u64, u64)> = (0..256u64).flat_map(|a| (0..256u64).map(move |b| (a, b))).collect();
    for chunk in pairs.chunks(X / f) {
        let a = Row::pack_fields(&chunk.iter().map(|p| p.0).collect::<Vec<_>>(), f, X).map_err(e)?;
        let b = Row::pack_fields(&chunk.iter().map(|p| p.1).collect::<Vec<_>>(), f, X).map_err(e)?;
        let (p, _) = mul_optimized(&mut m, &mut s, &a, &b, MulConfig::unsigned(8)).map_err(e)?;
        m.take_log();
        s.take_log();
        for (j, &(x, y)) in chunk.iter().enumerate() {
            ensure(p.field(j, f) == x * y, || format!("{x} * {y} = {}", p.field(j, f)))?;
        }
    }
    let t = within_budget(start, MUL_BUDGET)?;

    let mut d = dbc(X);
    d.write_row(TRD, &Row::pack_fields(&[3], 32, X).map_err(e)?).map_err(e)?;
    let (row, plan) = mul_const(&mut d, TRD, 20061, 16).map_err(e)?;
    ensure(plan.steps.len() == 2, || format!("20061 planned in {} steps:\n{plan}", plan.steps.len()))?;
    ensure(row.field(0, 32) == 60183, || format!("3 * 20061 = {}", row.field(0, 32)))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let per_row = X / 32;
    for _ in 0..MULC_RANDOM_PAIRS / per_row {
        let c = rng.gen_range(1..1u64 << 16);
        let a: Vec<u64> = (0..per_row).map(|_| rng.gen_range(0..1u64 << 16)).collect();
        let mut d = dbc(X);
        d.write_row(TRD, &Row::pack_fields(&a, 32, X).map_err(e)?).map_err(e)?;
        let (row, _) = mul_const(&mut d, TRD, c, 16).map_err(e)?;
        for (j, &x) in a.iter().enumerate() {
            ensure(row.field(j, 32) == x * c, || format!("{x} * {c} = {}", row.field(j, 32)))?;
        }
    }
    Ok(format!(
        "65536 8-bit products in {t:.2?}; 20061 in 2 steps; {} random constant products",
        MULC_RANDOM_PAIRS / per_row * per_row
    ))
}

fn criterion_6() -> Outcome {
    // max: every 4-tuple of 4-bit words, one tuple per field
    let mut d = dbc(X);
    let f = 4;
    let tuples: Vec<u64> = (0..1u64 << 16).collect();
    for chunk in tuples.chunks(X / f) {
        let words: Vec<Row> = (0..4)
            .map(|i| Row::pack_fields(&chunk.iter().map(|t| t >> (4 * i) & 0xF).collect::<Vec<_>>(), f, X))
            .collect::<Result<_, _>>()
            .map_err(e)?;
        let out = max_reduce(&mut d, &words, f).map_err(e)?;
        d.take_log();
        for (j, &t) in chunk.iter().enumerate() {
            let want = (0..4).map(|i| t >> (4 * i) & 0xF).max().unwrap();
            ensure(out.field(j, f) == want, || format!("max of {t:04x}: {}", out.field(j, f)))?;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = 16;
    let mut done = 0;
    while done < LAYER_RANDOM_TRIALS {
        let v: Vec<i64> = (0..X / f).map(|_| rng.gen_range(-(1 << 15)..1 << 15)).collect();
        d.write_row(TRD, &Row::pack_fields(&v.iter().map(|&x| to_field(x, f)).collect::<Vec<_>>(), f, X).map_err(e)?)
            .map_err(e)?;
        let out = relu_row(&mut d, TRD, f).map_err(e)?;
        d.take_log();
        for (j, &x) in v.iter().enumerate() {
            ensure(from_field(out.field(j, f), f) == x.max(0), || format!("relu({x})"))?;
        }
        done += v.len();
    }

    let (mut m, mut s) = (dbc(X), dbc(X));
    let mut done = 0;
    while done < LAYER_RANDOM_TRIALS {
        let input = Matrix::from_fn(8, 8, |_, _| rng.gen_range(-16..16));
        let kernel = Matrix::from_fn(3, 3, |_, _| rng.gen_range(-16..16));
        let out = convolve(&mut m, &mut s, &input, &kernel, 16).map_err(e)?;
        for r in 0..6 {
            for c in 0..6 {
                let want: i64 = (0..9).map(|t| kernel.get(t / 3, t % 3) * input.get(r + t / 3, c + t % 3)).sum();
                ensure(out.get(r, c) == want, || format!("conv ({r},{c}): {} != {want}", out.get(r, c)))?;
            }
        }
        done += 36;
    }
    m.take_log();
    s.take_log();

    let mut done = 0;
    while done < LAYER_RANDOM_TRIALS {
        let w = Matrix::from_fn(32, 8, |_, _| rng.gen_range(-128..128));
        let x: Vec<i64> = (0..8).map(|_| rng.gen_range(-128..128)).collect();
        let b: Vec<i64> = (0..32).map(|_| rng.gen_range(-1000..1000)).collect();
        let out = fully_connected(&mut m, &mut s, &w, &x, &b, 32).map_err(e)?;
        m.take_log();
        s.take_log();
        for j in 0..32 {
            let want = ((0..8).map(|i| w.get(j, i) * x[i]).sum::<i64>() + b[j]).max(0);
            ensure(out[j] == want, || format!("fc output {j}: {} != {want}", out[j]))?;
        }
        done += 32;
    }
    Ok(format!("max 2^16 exhaustive; relu, conv, fc {LAYER_RANDOM_TRIALS}+ random outputs each"))
}

fn criterion_7() -> Outcome {
    let table = CostTable::default();
    let report = calibration_report(&table).map_err(e)?;
    let get = |n: &str| report.checks.iter().find(|c| c.name == n).cloned().ok_or(format!("missing check {n}"));
    let (a5, a2, mul) = (get("add5")?, get("add2")?, get("mul8")?);
    ensure(a5.cycles == 26 && (a5.energy_pj - 22.14).abs() < 1e-9, || {
        format!("add5 {} cycles {} pJ", a5.cycles, a5.energy_pj)
    })?;
    ensure(a2.cycles == 26 && (a2.energy_pj - 12.54).abs() < 1e-9, || {
        format!("add2 {} cycles {} pJ", a2.cycles, a2.energy_pj)
    })?;
    let rel = |got: f64, want: f64| (got - want).abs() / want;
    let (dc, de) = (rel(mul.cycles as f64, MUL_TARGET_CYCLES as f64), rel(mul.energy_pj, MUL_TARGET_PJ));
    ensure(dc <= MUL_TOLERANCE && de <= MUL_TOLERANCE, || format!("mul8 off target:\n{report}"))?;
    if mul.cycles != MUL_TARGET_CYCLES {
        println!("    mul8 deviation {:+.1}% cycles, {:+.2}% energy; breakdown:", dc * 100.0, de * 100.0);
        for b in &mul.breakdown {
            println!("      {:<24} x{:<3} {:>3} cycles {:>9.4} pJ", b.kind.cost_key(), b.events, b.cycles, b.energy_pj);
        }
    }
    let area = area_overhead(&Geometry::default(), &table, IsaFeatures::Full).map_err(e)?;
    ensure((area - AREA_TARGET_PCT).abs() <= AREA_TOLERANCE_PP, || format!("area overhead {area:.2}%"))?;
    Ok(format!(
        "add5 26/22.14 exact, add2 26/12.54 exact, mul8 {}/{:.2} pJ, area {area:.2}%",
        mul.cycles, mul.energy_pj
    ))
}

fn engine() -> Engine {
    Engine::new(Geometry::default(), CostTable::default()).unwrap()
}

fn criterion_8() -> Outcome {
    let report = run_kernel(&mut engine(), &KernelSpec::new(KernelKind::Gemm)).map_err(e)?;
    ensure(report.oracle_match, || "gemm result differs from the reference".into())?;
    let adv = report.baseline.and_then(|b| b.energy_advantage).ok_or("no baseline")?;
    ensure(adv > BASELINE_MIN_ADVANTAGE, || format!("advantage {adv:.2}x"))?;
    Ok(format!("8x8x8 gemm energy advantage {adv:.1}x"))
}

fn criterion_9() -> Outcome {
    let data = BitmapDataset::random(BITMAP_RECORDS, 5, 0.5, 9);
    let query = BitmapQuery { criteria: data.names().to_vec(), seed: 9, inject_fault: false };
    let (count, report, stats) = bitmap_query(&mut engine(), &data, &query).map_err(e)?;
    ensure(report.oracle_match && count == stats.oracle_count, || format!("count {count} vs {}", stats.oracle_count))?;
    ensure(stats.multi_operand_passes == 1 && stats.pairwise_passes == 4, || {
        format!("passes {} vs {}", stats.multi_operand_passes, stats.pairwise_passes)
    })?;
    let wide = BitmapDataset::random(2048, 20, 0.8, 10);
    for k in 2..=20 {
        let q = BitmapQuery { criteria: wide.names()[..k].to_vec(), seed: 10, inject_fault: false };
        let (_, r, st) = bitmap_query(&mut engine(), &wide, &q).map_err(e)?;
        ensure(r.oracle_match, || format!("k={k} count mismatch"))?;
        ensure(
            st.multi_operand_passes == (k - 1).div_ceil(6) && st.multi_operand_passes == passes_needed(k, TRD),
            || format!("k={k}: {} passes", st.multi_operand_passes),
        )?;
        ensure(st.pairwise_passes == k - 1, || format!("k={k}: {} pairwise passes", st.pairwise_passes))?;
        ensure(k < 3 || st.multi_operand_passes < st.pairwise_passes, || format!("k={k}: no fewer passes"))?;
    }
    Ok(format!("{BITMAP_RECORDS} records count {count} matches; 1 vs 4 passes at k=5; k=2..20 pass counts hold"))
}

fn criterion_10() -> Outcome {
    let run = || -> Result<_, String> {
        let mut eng = engine();
        let gemm = run_kernel(&mut eng, &KernelSpec { seed: 11, ..KernelSpec::new(KernelKind::Gemm) }).map_err(e)?;
        let data = BitmapDataset::random(4096, 5, 0.5, 11);
        let q = BitmapQuery { criteria: data.names().to_vec(), seed: 11, inject_fault: false };
        let (_, bitmap, _) = bitmap_query(&mut eng, &data, &q).map_err(e)?;
        let spec = CnnSpec::random(8, 11);
        let (_, cnn) = run_cnn_forward(&mut eng, &spec, &CnnSpec::random_input(8, 11)).map_err(e)?;
        Ok((vec![gemm, bitmap, cnn], eng.trace_json().map_err(e)?, eng.trace_text()))
    };
    let (a, b) = (run()?, run()?);
    ensure(a.0 == b.0, || "reports differ".into())?;
    ensure(a.1 == b.1 && a.2 == b.2, || "traces differ".into())?;
    Ok(format!("3 reports and {} trace lines identical across two runs", a.2.lines().count() - 1))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("TR equals popcount", criterion_1),
        ("bulk bitwise equals k-ary fold", criterion_2),
        ("multi-operand add equals integer sum", criterion_3),
        ("7-to-3 reduction preserves the sum", criterion_4),
        ("multiplication", criterion_5),
        ("max / ReLU / conv / fc", criterion_6),
        ("calibration and area", criterion_7),
        ("baseline energy advantage", criterion_8),
        ("bitmap query", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
