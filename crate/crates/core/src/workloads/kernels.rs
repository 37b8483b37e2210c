//! Matrix kernels on one main/scratch cluster pair, each checked against a
//! plain integer reference.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arithmetic::nn::{batched_dot, convolve, fully_connected, maxpool, Matrix};
use crate::arithmetic::{from_field, sum_rows, to_field};
use crate::cost::{baseline_compare, BaselineModel, CpuOps};
use crate::dbc::{Dbc, Row};
use crate::error::{Error, Result};
use crate::hierarchy::{Address, Engine};
use crate::workloads::{cluster_pair, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `C = A + B`.
    Madd,
    /// `C = alpha A B + beta C`.
    Gemm,
    /// Valid 2-D convolution.
    Conv,
    /// Non-overlapping max pooling.
    Maxpool,
    /// `ReLU(W x + b)`.
    Fc,
}

impl KernelKind {
    pub const ALL: [KernelKind; 5] = [Self::Madd, Self::Gemm, Self::Conv, Self::Maxpool, Self::Fc];

    pub fn name(self) -> &'static str {
        match self {
            Self::Madd => "madd",
            Self::Gemm => "gemm",
            Self::Conv => "conv",
            Self::Maxpool => "maxpool",
            Self::Fc => "fc",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Parse(format!("unknown kernel `{s}`")))
    }
}

/// Dimensions by kind:
/// madd `rows x cols`; gemm `A: rows x inner`, `B: inner x cols`;
/// conv `rows x cols` input with a `kernel_size` square kernel;
/// maxpool `rows x cols` input with `kernel_size` windows;
/// fc `rows` outputs from `cols` inputs.
/// Inputs are random `w`-bit signed values (unsigned for maxpool).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub rows: usize,
    pub cols: usize,
    pub inner: usize,
    pub w: usize,
    pub alpha: i64,
    pub beta: i64,
    pub kernel_size: usize,
    pub seed: u64,
    /// Perturbs one output before the oracle comparison.
    pub inject_fault: bool,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Self {
        let kernel_size = if kind == KernelKind::Maxpool { 2 } else { 3 };
        Self { kind, rows: 8, cols: 8, inner: 8, w: 8, alpha: 1, beta: 1, kernel_size, seed: 0, inject_fault: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || (self.kind == KernelKind::Gemm && self.inner == 0) {
            return Err(Error::InvalidGeometry("kernel dimensions must be positive".into()));
        }
        if !(2..=32).contains(&self.w) {
            return Err(Error::WidthOverflow(format!("word width {} outside 2..=32", self.w)));
        }
        if matches!(self.kind, KernelKind::Conv | KernelKind::Maxpool)
            && (self.kernel_size == 0 || self.kernel_size > self.rows || self.kernel_size > self.cols)
        {
            return Err(Error::InvalidGeometry(format!(
                "kernel size {} over a {}x{} input",
                self.kernel_size, self.rows, self.cols
            )));
        }
        Ok(())
    }
}

/// Smallest field holding a signed magnitude below `bound`. Multiplies
/// need one partial-product row per field bit, so fields stop at 32.
fn field_for(bound: i128) -> Result<usize> {
    [8, 16, 32]
        .into_iter()
        .find(|&f| bound < 1i128 << (f - 1))
        .ok_or_else(|| Error::WidthOverflow(format!("results up to {bound} exceed 32-bit fields")))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, w: usize, signed: bool) -> Matrix {
    let (lo, hi) = if signed { (-(1i64 << (w - 1)), 1i64 << (w - 1)) } else { (0, 1i64 << w) };
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(lo..hi))
}

fn element_bytes(count: usize, w: usize) -> u64 {
    (count * w.div_ceil(8)) as u64
}

struct Outcome {
    values: Vec<i64>,
    oracle: Vec<i64>,
    bytes: u64,
    ops: CpuOps,
}

/// Elementwise sum of equally sized value lists, in packed fields.
fn madd_values(main: &mut Dbc, scratch: &mut Dbc, a: &[i64], b: &[i64], f: usize) -> Result<Vec<i64>> {
    let x = main.width();
    let mut out = Vec::with_capacity(a.len());
    for (ca, cb) in a.chunks(x / f).zip(b.chunks(x / f)) {
        let ra = Row::pack_fields(&ca.iter().map(|&v| to_field(v, f)).collect::<Vec<_>>(), f, x)?;
        let rb = Row::pack_fields(&cb.iter().map(|&v| to_field(v, f)).collect::<Vec<_>>(), f, x)?;
        let s = sum_rows(main, scratch, &[ra, rb], f)?;
        out.extend((0..ca.len()).map(|j| from_field(s.field(j, f), f)));
    }
    Ok(out)
}

fn execute(engine: &mut Engine, spec: &KernelSpec, main: &Address, scratch: &Address) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (r, c, w) = (spec.rows, spec.cols, spec.w);
    let half = 1i128 << (w - 1);
    match spec.kind {
        KernelKind::Madd => {
            let a = random_matrix(&mut rng, r, c, w, true);
            let b = random_matrix(&mut rng, r, c, w, true);
            let f = field_for(2 * half)?;
            let values = engine.run_on_pair(main, scratch, |m, s| madd_values(m, s, &a.data, &b.data, f))?;
            let oracle = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
            Ok(Outcome {
                values,
                oracle,
                bytes: element_bytes(3 * r * c, w),
                ops: CpuOps { adds: (r * c) as u64, muls: 0 },
            })
        }
        KernelKind::Gemm => {
            let n = spec.inner;
            let a = random_matrix(&mut rng, r, n, w, true);
            let b = random_matrix(&mut rng, n, c, w, true);
            let c0 = random_matrix(&mut rng, r, c, w, true);
            let prod_bound = n as i128 * half * half;
            let total_bound = i128::from(spec.alpha).abs() * prod_bound + i128::from(spec.beta).abs() * half;
            let f = field_for(total_bound.max(i128::from(spec.alpha).abs()).max(i128::from(spec.beta).abs()))?;
            let mut xs = Vec::with_capacity(r * c);
            let mut ws = Vec::with_capacity(r * c);
            for i in 0..r {
                for j in 0..c {
                    xs.push((0..n).map(|t| a.get(i, t)).collect::<Vec<_>>());
                    ws.push((0..n).map(|t| b.get(t, j)).collect::<Vec<_>>());
                }
            }
            let (alpha, beta) = (spec.alpha, spec.beta);
            let values = engine.run_on_pair(main, scratch, |m, s| {
                let p = batched_dot(m, s, &xs, &ws, f)?;
                let xs2: Vec<Vec<i64>> = p.iter().zip(&c0.data).map(|(&p, &c)| vec![p, c]).collect();
                let ws2 = vec![vec![alpha, beta]; xs2.len()];
                batched_dot(m, s, &xs2, &ws2, f)
            })?;
            let mut oracle = Vec::with_capacity(r * c);
            for i in 0..r {
                for j in 0..c {
                    let p: i64 = (0..n).map(|t| a.get(i, t) * b.get(t, j)).sum();
                    oracle.push(alpha * p + beta * c0.get(i, j));
                }
            }
            let cells = (r * c) as u64;
            Ok(Outcome {
                values,
                oracle,
                bytes: element_bytes(r * n + n * c + 2 * r * c, w),
                ops: CpuOps { adds: cells * n as u64, muls: cells * (n as u64 + 2) },
            })
        }
        KernelKind::Conv => {
            let k = spec.kernel_size;
            let input = random_matrix(&mut rng, r, c, w, true);
            let kernel = random_matrix(&mut rng, k, k, w, true);
            let f = field_for((k * k) as i128 * half * half)?;
            let out = engine.run_on_pair(main, scratch, |m, s| convolve(m, s, &input, &kernel, f))?;
            let (oh, ow) = (r - k + 1, c - k + 1);
            let mut oracle = Vec::with_capacity(oh * ow);
            for i in 0..oh {
                for j in 0..ow {
                    oracle.push((0..k * k).map(|t| kernel.get(t / k, t % k) * input.get(i + t / k, j + t % k)).sum());
                }
            }
            let taps = (oh * ow * k * k) as u64;
            Ok(Outcome {
                values: out.data,
                oracle,
                bytes: element_bytes(r * c + k * k + oh * ow, w),
                ops: CpuOps { adds: taps, muls: taps },
            })
        }
        KernelKind::Maxpool => {
            let k = spec.kernel_size;
            let input = random_matrix(&mut rng, r, c, w, false);
            let out = engine.run_on(main, |m| maxpool(m, &input, k, w))?;
            let (oh, ow) = (r / k, c / k);
            let mut oracle = Vec::with_capacity(oh * ow);
            for i in 0..oh {
                for j in 0..ow {
                    oracle.push((0..k * k).map(|t| input.get(i * k + t / k, j * k + t % k)).max().unwrap_or(0));
                }
            }
            Ok(Outcome {
                values: out.data,
                oracle,
                bytes: element_bytes(r * c + oh * ow, w),
                ops: CpuOps { adds: (oh * ow * (k * k - 1)) as u64, muls: 0 },
            })
        }
        KernelKind::Fc => {
            let weights = random_matrix(&mut rng, r, c, w, true);
            let x: Vec<i64> = random_matrix(&mut rng, 1, c, w, true).data;
            let bias: Vec<i64> = random_matrix(&mut rng, 1, r, w, true).data;
            let f = field_for((c as i128 + 1) * half * half)?;
            let values = engine.run_on_pair(main, scratch, |m, s| fully_connected(m, s, &weights, &x, &bias, f))?;
            let oracle =
                (0..r).map(|j| ((0..c).map(|i| weights.get(j, i) * x[i]).sum::<i64>() + bias[j]).max(0)).collect();
            let cells = (r * c) as u64;
            Ok(Outcome {
                values,
                oracle,
                bytes: element_bytes(r * c + c + 2 * r, w),
                ops: CpuOps { adds: cells + r as u64, muls: cells },
            })
        }
    }
}

/// Runs one kernel on the first PIM cluster pair of `engine`, compares
/// it with the integer reference and attaches the CPU-transfer baseline.
pub fn run_kernel(engine: &mut Engine, spec: &KernelSpec) -> Result<RunReport> {
    spec.validate()?;
    let (main, scratch) = cluster_pair(engine)?;
    let before = engine.counters().clone();
    let mut out = execute(engine, spec, &main, &scratch)?;
    let work = engine.counters().since(&before);
    if spec.inject_fault {
        if let Some(v) = out.values.first_mut() {
            *v += 1;
        }
    }
    let matched = out.values == out.oracle;
    let mut report = RunReport::new(spec.kind.name(), spec.seed, &out.values, matched, &work)
        .with_extra("rows", spec.rows)
        .with_extra("cols", spec.cols)
        .with_extra("w", spec.w)
        .with_extra("outputs", out.values.len());
    if spec.kind == KernelKind::Gemm {
        report = report.with_extra("inner", spec.inner).with_extra("alpha", spec.alpha).with_extra("beta", spec.beta);
    }
    if matches!(spec.kind, KernelKind::Conv | KernelKind::Maxpool) {
        report = report.with_extra("kernel_size", spec.kernel_size);
    }
    report.baseline = Some(baseline_compare(&work, out.bytes, out.ops, &BaselineModel::default()));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostTable;
    use crate::hierarchy::Geometry;

    fn engine() -> Engine {
        let g = Geometry {
            banks: 1,
            subarrays_per_bank: 2,
            tiles_per_subarray: 2,
            dbcs_per_tile: 4,
            memory_bits: None,
            ..Geometry::default()
        };
        Engine::new(g, CostTable::default()).unwrap()
    }

    #[test]
    fn every_kernel_matches_its_oracle() {
        for kind in KernelKind::ALL {
            let spec = KernelSpec { seed: 9, ..KernelSpec::new(kind) };
            let report = run_kernel(&mut engine(), &spec).unwrap();
            assert!(report.oracle_match, "{kind}");
            assert!(report.cycles > 0);
        }
    }

    #[test]
    fn madd_of_zeros_is_zero() {
        let (mut m, mut s) = (Dbc::new(512, 32, 7).unwrap(), Dbc::new(512, 32, 7).unwrap());
        assert_eq!(madd_values(&mut m, &mut s, &[0; 100], &[0; 100], 16).unwrap(), vec![0; 100]);
        assert_eq!(madd_values(&mut m, &mut s, &[-5, 7], &[3, -9], 8).unwrap(), vec![-2, -2]);
    }

    #[test]
    fn gemm_scaled_and_wide() {
        let spec =
            KernelSpec { alpha: -3, beta: 2, rows: 4, cols: 5, inner: 6, w: 12, ..KernelSpec::new(KernelKind::Gemm) };
        assert!(run_kernel(&mut engine(), &spec).unwrap().oracle_match);
    }

    #[test]
    fn gemm_beats_baseline() {
        let report = run_kernel(&mut engine(), &KernelSpec::new(KernelKind::Gemm)).unwrap();
        assert!(report.baseline.unwrap().energy_advantage.unwrap() > 5.0);
    }

    #[test]
    fn reports_are_reproducible_and_faults_detected() {
        let spec = KernelSpec::new(KernelKind::Conv);
        assert_eq!(run_kernel(&mut engine(), &spec).unwrap(), run_kernel(&mut engine(), &spec).unwrap());
        let bad = KernelSpec { inject_fault: true, ..spec };
        assert!(!run_kernel(&mut engine(), &bad).unwrap().oracle_match);
    }

    #[test]
    fn rejects_bad_specs() {
        let spec = KernelSpec { w: 40, ..KernelSpec::new(KernelKind::Madd) };
        assert!(matches!(run_kernel(&mut engine(), &spec), Err(Error::WidthOverflow(_))));
        let spec = KernelSpec { w: 20, ..KernelSpec::new(KernelKind::Gemm) };
        assert!(matches!(run_kernel(&mut engine(), &spec), Err(Error::WidthOverflow(_))));
        let spec = KernelSpec { kernel_size: 9, ..KernelSpec::new(KernelKind::Conv) };
        assert!(run_kernel(&mut engine(), &spec).is_err());
        assert_eq!("GEMM".parse::<KernelKind>().unwrap(), KernelKind::Gemm);
        assert!("fft".parse::<KernelKind>().is_err());
    }
}
