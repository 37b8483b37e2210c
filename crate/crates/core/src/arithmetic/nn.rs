//! Neural-network layers over packed fields: one output element per field,
//! all outputs of a batch computed by the same command stream.

use serde::{Deserialize, Serialize};

use crate::arithmetic::{fits_signed, from_field, max_reduce, mul_optimized, relu_row, sum_rows, to_field, MulConfig};
use crate::dbc::{Dbc, Row};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<i64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> i64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse("ragged matrix".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn get(&self, r: usize, c: usize) -> i64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: i64) {
        self.data[r * self.cols + c] = v;
    }

    fn max_abs(&self) -> i64 {
        self.data.iter().map(|v| v.abs()).max().unwrap_or(0)
    }
}

/// Signed dot products `Σ_t xs[o][t] * ws[o][t]`, one output per field.
/// Every output must have the same number of taps.
pub fn batched_dot(
    main: &mut Dbc,
    scratch: &mut Dbc,
    xs: &[Vec<i64>],
    ws: &[Vec<i64>],
    field_width: usize,
) -> Result<Vec<i64>> {
    let taps = xs.first().map_or(0, Vec::len);
    if xs.len() != ws.len() || xs.iter().chain(ws).any(|v| v.len() != taps) {
        return Err(Error::Parse("dot-product operands differ in length".into()));
    }
    let bound: i128 = xs
        .iter()
        .zip(ws)
        .map(|(x, w)| x.iter().zip(w).map(|(&a, &b)| i128::from(a).abs() * i128::from(b).abs()).sum::<i128>())
        .max()
        .unwrap_or(0);
    if field_width < 64 && bound >= 1i128 << (field_width - 1) {
        return Err(Error::WidthOverflow(format!("dot products up to {bound} do not fit {field_width}-bit fields")));
    }
    let x = main.width();
    let per_row = x / field_width;
    if per_row == 0 {
        return Err(Error::WidthOverflow(format!("{field_width}-bit field wider than the row")));
    }
    let mut out = Vec::with_capacity(xs.len());
    for batch in (0..xs.len()).collect::<Vec<_>>().chunks(per_row) {
        let mut products = Vec::with_capacity(taps);
        for t in 0..taps {
            let a: Vec<u64> = batch.iter().map(|&o| to_field(xs[o][t], field_width)).collect();
            let b: Vec<u64> = batch.iter().map(|&o| to_field(ws[o][t], field_width)).collect();
            let a = Row::pack_fields(&a, field_width, x)?;
            let b = Row::pack_fields(&b, field_width, x)?;
            let (p, _) = mul_optimized(main, scratch, &a, &b, MulConfig::signed(field_width))?;
            products.push(p);
        }
        let sum = sum_rows(main, scratch, &products, field_width)?;
        out.extend((0..batch.len()).map(|j| from_field(sum.field(j, field_width), field_width)));
    }
    Ok(out)
}

/// Valid (no padding, stride 1) 2-D convolution with a square kernel.
pub fn convolve(
    main: &mut Dbc,
    scratch: &mut Dbc,
    input: &Matrix,
    kernel: &Matrix,
    field_width: usize,
) -> Result<Matrix> {
    let k = kernel.rows;
    if k != kernel.cols || k == 0 || k > input.rows || k > input.cols {
        return Err(Error::InvalidGeometry(format!(
            "{}x{} kernel over a {}x{} input",
            kernel.rows, kernel.cols, input.rows, input.cols
        )));
    }
    if !fits_signed(input.max_abs(), field_width) || !fits_signed(kernel.max_abs(), field_width) {
        return Err(Error::WidthOverflow(format!("operands exceed {field_width}-bit fields")));
    }
    let (oh, ow) = (input.rows - k + 1, input.cols - k + 1);
    let mut xs = Vec::with_capacity(oh * ow);
    let mut ws = Vec::with_capacity(oh * ow);
    let taps: Vec<i64> = kernel.data.clone();
    for m in 0..oh {
        for p in 0..ow {
            xs.push((0..k * k).map(|i| input.get(m + i / k, p + i % k)).collect());
            ws.push(taps.clone());
        }
    }
    let v = batched_dot(main, scratch, &xs, &ws, field_width)?;
    Ok(Matrix { rows: oh, cols: ow, data: v })
}

fn windows(input: &Matrix, window: usize) -> Result<(usize, usize, Vec<Vec<i64>>)> {
    if window == 0 || window > input.rows || window > input.cols {
        return Err(Error::InvalidGeometry(format!("pool window {window} over {}x{}", input.rows, input.cols)));
    }
    let (oh, ow) = (input.rows / window, input.cols / window);
    let mut out = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        for c in 0..ow {
            out.push(
                (0..window * window).map(|i| input.get(r * window + i / window, c * window + i % window)).collect(),
            );
        }
    }
    Ok((oh, ow, out))
}

/// Non-overlapping max pooling of non-negative values below `2^field_width`.
/// Windows with more elements than one max can take are reduced as a tree.
pub fn maxpool(dbc: &mut Dbc, input: &Matrix, window: usize, field_width: usize) -> Result<Matrix> {
    if input.data.iter().any(|&v| v < 0 || (field_width < 63 && v >> field_width != 0)) {
        return Err(Error::WidthOverflow(format!("max pooling needs values in 0..2^{field_width}")));
    }
    let (oh, ow, wins) = windows(input, window)?;
    let x = dbc.width();
    let per_row = x / field_width;
    let fan_in = dbc.trd() - 2;
    let mut out = Vec::with_capacity(wins.len());
    for batch in wins.chunks(per_row.max(1)) {
        // element i of every window in this batch, one row per i
        let mut level: Vec<Row> = (0..window * window)
            .map(|i| {
                let v: Vec<u64> = batch.iter().map(|w| w[i] as u64).collect();
                Row::pack_fields(&v, field_width, x)
            })
            .collect::<Result<_>>()?;
        while level.len() > 1 {
            level = level.chunks(fan_in).map(|g| max_reduce(dbc, g, field_width)).collect::<Result<_>>()?;
        }
        out.extend((0..batch.len()).map(|j| level[0].field(j, field_width) as i64));
    }
    Ok(Matrix { rows: oh, cols: ow, data: out })
}

/// Non-overlapping average pooling: in-memory window sums, then a
/// truncating host-side division by the window size.
pub fn avgpool(main: &mut Dbc, scratch: &mut Dbc, input: &Matrix, window: usize, field_width: usize) -> Result<Matrix> {
    let (oh, ow, wins) = windows(input, window)?;
    let n = (window * window) as i64;
    if !fits_signed(input.max_abs().saturating_mul(n), field_width) {
        return Err(Error::WidthOverflow(format!("window sums exceed {field_width}-bit fields")));
    }
    let x = main.width();
    let mut out = Vec::with_capacity(wins.len());
    for batch in wins.chunks((x / field_width).max(1)) {
        let rows: Vec<Row> = (0..window * window)
            .map(|i| {
                let v: Vec<u64> = batch.iter().map(|w| to_field(w[i], field_width)).collect();
                Row::pack_fields(&v, field_width, x)
            })
            .collect::<Result<_>>()?;
        let sum = sum_rows(main, scratch, &rows, field_width)?;
        out.extend((0..batch.len()).map(|j| from_field(sum.field(j, field_width), field_width) / n));
    }
    Ok(Matrix { rows: oh, cols: ow, data: out })
}

/// `ReLU(W x + b)`; the bias enters as one more product tap with input 1.
pub fn fully_connected(
    main: &mut Dbc,
    scratch: &mut Dbc,
    weights: &Matrix,
    x: &[i64],
    bias: &[i64],
    field_width: usize,
) -> Result<Vec<i64>> {
    if weights.cols != x.len() || weights.rows != bias.len() {
        return Err(Error::InvalidGeometry(format!(
            "{}x{} weights with {} inputs and {} biases",
            weights.rows,
            weights.cols,
            x.len(),
            bias.len()
        )));
    }
    let mut xs = Vec::with_capacity(weights.rows);
    let mut ws = Vec::with_capacity(weights.rows);
    for (j, &b) in bias.iter().enumerate() {
        let mut xi = x.to_vec();
        xi.push(1);
        let mut wj: Vec<i64> = (0..weights.cols).map(|i| weights.get(j, i)).collect();
        wj.push(b);
        xs.push(xi);
        ws.push(wj);
    }
    let pre = batched_dot(main, scratch, &xs, &ws, field_width)?;
    let width = main.width();
    let mut out = Vec::with_capacity(pre.len());
    let relu_addr = main.rows() - 1;
    for batch in pre.chunks((width / field_width).max(1)) {
        let v: Vec<u64> = batch.iter().map(|&p| to_field(p, field_width)).collect();
        main.write_row(relu_addr, &Row::pack_fields(&v, field_width, width)?)?;
        let r = relu_row(main, relu_addr, field_width)?;
        out.extend((0..batch.len()).map(|j| from_field(r.field(j, field_width), field_width)));
    }
    Ok(out)
}
