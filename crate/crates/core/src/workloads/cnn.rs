//! Tiny integer CNN: convolution, in-memory ReLU, max pooling and a
//! fully-connected output layer producing raw logits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arithmetic::nn::{batched_dot, maxpool, Matrix};
use crate::arithmetic::{from_field, relu_row, to_field};
use crate::dbc::{Dbc, Row};
use crate::error::{Error, Result};
use crate::hierarchy::Engine;
use crate::workloads::{cluster_pair, RunReport};

/// Field width of the convolution and pooling layers.
pub const FEATURE_FIELD: usize = 16;
/// Field width of the fully-connected layer.
pub const LOGIT_FIELD: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub kernel: Matrix,
    pub conv_bias: i64,
    pub pool: usize,
    /// One row per logit, one column per pooled feature (row-major).
    pub fc_weights: Matrix,
    pub fc_bias: Vec<i64>,
    pub seed: u64,
    pub inject_fault: bool,
}

impl CnnSpec {
    /// 3x3 kernel, 2x2 pooling and 4 logits over an `input_size` square input.
    pub fn random(input_size: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pooled = (input_size.saturating_sub(2) / 2).pow(2);
        Self {
            kernel: Matrix::from_fn(3, 3, |_, _| rng.gen_range(-4..4)),
            conv_bias: rng.gen_range(-8..8),
            pool: 2,
            fc_weights: Matrix::from_fn(4, pooled, |_, _| rng.gen_range(-8..8)),
            fc_bias: (0..4).map(|_| rng.gen_range(-32..32)).collect(),
            seed,
            inject_fault: false,
        }
    }

    /// Matching random input with values in `0..16`.
    pub fn random_input(input_size: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        Matrix::from_fn(input_size, input_size, |_, _| rng.gen_range(0..16))
    }

    fn shapes(&self, input: &Matrix) -> Result<(usize, usize, usize, usize)> {
        let k = self.kernel.rows;
        if k == 0 || k != self.kernel.cols || k > input.rows || k > input.cols {
            return Err(Error::InvalidGeometry("kernel does not fit the input".into()));
        }
        let (ch, cw) = (input.rows - k + 1, input.cols - k + 1);
        if self.pool == 0 || self.pool > ch || self.pool > cw {
            return Err(Error::InvalidGeometry(format!("pool window {} over {ch}x{cw}", self.pool)));
        }
        let (ph, pw) = (ch / self.pool, cw / self.pool);
        if self.fc_weights.cols != ph * pw || self.fc_weights.rows != self.fc_bias.len() {
            return Err(Error::InvalidGeometry(format!(
                "fc weights {}x{} for {} features and {} biases",
                self.fc_weights.rows,
                self.fc_weights.cols,
                ph * pw,
                self.fc_bias.len()
            )));
        }
        Ok((ch, cw, ph, pw))
    }
}

/// Reference integer inference.
pub fn cnn_oracle(spec: &CnnSpec, input: &Matrix) -> Result<Vec<i64>> {
    let (ch, cw, ph, pw) = spec.shapes(input)?;
    let k = spec.kernel.rows;
    let conv = Matrix::from_fn(ch, cw, |r, c| {
        let s: i64 = (0..k * k).map(|t| spec.kernel.get(t / k, t % k) * input.get(r + t / k, c + t % k)).sum();
        (s + spec.conv_bias).max(0)
    });
    let p = spec.pool;
    let pooled: Vec<i64> = (0..ph * pw)
        .map(|i| (0..p * p).map(|t| conv.get(i / pw * p + t / p, i % pw * p + t % p)).max().unwrap_or(0))
        .collect();
    Ok((0..spec.fc_weights.rows)
        .map(|j| pooled.iter().enumerate().map(|(i, x)| spec.fc_weights.get(j, i) * x).sum::<i64>() + spec.fc_bias[j])
        .collect())
}

/// Zeroes negative values in place, one packed row at a time.
fn relu_values(dbc: &mut Dbc, values: &[i64], field_width: usize) -> Result<Vec<i64>> {
    let x = dbc.width();
    let addr = dbc.rows() - 1;
    let mut out = Vec::with_capacity(values.len());
    for chunk in values.chunks(x / field_width) {
        let f: Vec<u64> = chunk.iter().map(|&v| to_field(v, field_width)).collect();
        dbc.write_row(addr, &Row::pack_fields(&f, field_width, x)?)?;
        let r = relu_row(dbc, addr, field_width)?;
        out.extend((0..chunk.len()).map(|j| from_field(r.field(j, field_width), field_width)));
    }
    Ok(out)
}

fn forward(main: &mut Dbc, scratch: &mut Dbc, spec: &CnnSpec, input: &Matrix) -> Result<Vec<i64>> {
    let (ch, cw, ph, pw) = spec.shapes(input)?;
    // the conv bias is one more tap whose input is the constant 1
    let k = spec.kernel.rows;
    let mut taps = spec.kernel.data.clone();
    taps.push(spec.conv_bias);
    let mut xs = Vec::with_capacity(ch * cw);
    for r in 0..ch {
        for c in 0..cw {
            let mut x: Vec<i64> = (0..k * k).map(|t| input.get(r + t / k, c + t % k)).collect();
            x.push(1);
            xs.push(x);
        }
    }
    let conv = batched_dot(main, scratch, &xs, &vec![taps; xs.len()], FEATURE_FIELD)?;
    let activated = Matrix { rows: ch, cols: cw, data: relu_values(main, &conv, FEATURE_FIELD)? };
    let pooled = maxpool(main, &activated, spec.pool, FEATURE_FIELD)?;
    debug_assert_eq!(pooled.data.len(), ph * pw);
    let ws: Vec<Vec<i64>> = (0..spec.fc_weights.rows)
        .map(|j| {
            let mut w: Vec<i64> = (0..spec.fc_weights.cols).map(|i| spec.fc_weights.get(j, i)).collect();
            w.push(spec.fc_bias[j]);
            w
        })
        .collect();
    let mut x = pooled.data;
    x.push(1);
    batched_dot(main, scratch, &vec![x; ws.len()], &ws, LOGIT_FIELD)
}

/// Runs the network on the first PIM cluster pair and checks the logits
/// against the reference inference. Operations count multiplies, adds and
/// comparisons of the reference.
pub fn run_cnn_forward(engine: &mut Engine, spec: &CnnSpec, input: &Matrix) -> Result<(Vec<i64>, RunReport)> {
    let (ch, cw, ph, pw) = spec.shapes(input)?;
    let (main, scratch) = cluster_pair(engine)?;
    let before = engine.counters().clone();
    let mut logits = engine.run_on_pair(&main, &scratch, |m, s| forward(m, s, spec, input))?;
    let work = engine.counters().since(&before);
    if spec.inject_fault {
        if let Some(v) = logits.first_mut() {
            *v += 1;
        }
    }
    let oracle = cnn_oracle(spec, input)?;
    let k = spec.kernel.rows;
    let fc = spec.fc_weights.rows * spec.fc_weights.cols;
    let ops =
        (ch * cw * (2 * k * k + 1)) + ch * cw + ph * pw * (spec.pool * spec.pool - 1) + 2 * fc + spec.fc_bias.len();
    let nj = work.energy_pj() / 1000.0;
    let report = RunReport::new("cnn", spec.seed, &logits, logits == oracle, &work)
        .with_extra("ops", ops)
        .with_extra("ops_per_cycle", ops as f64 / work.cycles.max(1) as f64)
        .with_extra("ops_per_nj", if nj > 0.0 { ops as f64 / nj } else { 0.0 });
    Ok((logits, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::CostTable;
    use crate::hierarchy::Geometry;

    fn engine() -> Engine {
        let g = Geometry {
            banks: 1,
            subarrays_per_bank: 1,
            tiles_per_subarray: 1,
            dbcs_per_tile: 2,
            memory_bits: None,
            ..Geometry::default()
        };
        Engine::new(g, CostTable::default()).unwrap()
    }

    #[test]
    fn toy_network_matches_oracle() {
        for seed in 0..4 {
            let spec = CnnSpec::random(8, seed);
            let input = CnnSpec::random_input(8, seed);
            let (logits, report) = run_cnn_forward(&mut engine(), &spec, &input).unwrap();
            assert_eq!(logits, cnn_oracle(&spec, &input).unwrap());
            assert_eq!(logits.len(), 4);
            assert!(report.oracle_match);
            assert!(report.extra["ops_per_cycle"].as_f64().unwrap() > 0.0);
        }
    }

    #[test]
    fn zero_input_zero_bias_gives_zero_logits() {
        let mut spec = CnnSpec::random(8, 1);
        spec.conv_bias = 0;
        spec.fc_bias = vec![0; 4];
        let (logits, _) = run_cnn_forward(&mut engine(), &spec, &Matrix::zeros(8, 8)).unwrap();
        assert_eq!(logits, vec![0; 4]);
    }

    #[test]
    fn identity_layers_pass_pooled_input_through() {
        let mut kernel = Matrix::zeros(3, 3);
        kernel.set(0, 0, 1);
        let spec = CnnSpec {
            kernel,
            conv_bias: 0,
            pool: 2,
            fc_weights: Matrix::from_fn(4, 4, |r, c| i64::from(r == c)),
            fc_bias: vec![0; 4],
            seed: 0,
            inject_fault: false,
        };
        let input = Matrix::from_fn(6, 6, |r, c| (r * 6 + c) as i64);
        let (logits, _) = run_cnn_forward(&mut engine(), &spec, &input).unwrap();
        let want: Vec<i64> =
            (0..4).map(|i| (0..4).map(|t| input.get(i / 2 * 2 + t / 2, i % 2 * 2 + t % 2)).max().unwrap()).collect();
        assert_eq!(logits, want);
    }

    #[test]
    fn shape_and_width_errors() {
        let spec = CnnSpec::random(8, 0);
        assert!(run_cnn_forward(&mut engine(), &spec, &Matrix::zeros(6, 6)).is_err());
        let mut big = CnnSpec::random(8, 0);
        big.kernel = Matrix::from_fn(3, 3, |_, _| 4000);
        let input = Matrix::from_fn(8, 8, |_, _| 100);
        assert!(matches!(run_cnn_forward(&mut engine(), &big, &input), Err(Error::WidthOverflow(_))));
    }
}
