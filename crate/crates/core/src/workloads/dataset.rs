//! Bitmap datasets: one bit per record per named criterion.
//!
//! Two on-disk forms: CSV (one record per line, one 0/1 field per column,
//! optional header) and a packed binary form: the magic `PIRMBM1`, the
//! record count as a little-endian u64, then each column as
//! `ceil(records / 8)` bytes, bit `i` of the column in byte `i / 8` at bit
//! `i % 8`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 7] = b"PIRMBM1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitmapDataset {
    num_records: usize,
    names: Vec<String>,
    columns: Vec<Vec<bool>>,
}

impl BitmapDataset {
    pub fn new(names: Vec<String>, columns: Vec<Vec<bool>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Parse(format!("{} names for {} columns", names.len(), columns.len())));
        }
        let num_records = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != num_records) {
            return Err(Error::Parse("columns differ in length".into()));
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Parse(format!("duplicate column `{n}`")));
            }
        }
        Ok(Self { num_records, names, columns })
    }

    pub fn default_names(count: usize) -> Vec<String> {
        (0..count).map(|i| format!("c{i}")).collect()
    }

    /// Columns `c0..` with independent bits set with probability `density`.
    pub fn random(num_records: usize, num_columns: usize, density: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let columns = (0..num_columns).map(|_| (0..num_records).map(|_| rng.gen_bool(density)).collect()).collect();
        Self { num_records, names: Self::default_names(num_columns), columns }
    }

    pub fn num_records(&self) -> usize {
        self.num_records
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, name: &str) -> Result<&[bool]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.into()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty()).peekable();
        let split = |l: &str| l.split(',').map(|f| f.trim().to_string()).collect::<Vec<_>>();
        let header = match lines.peek() {
            Some(first) if split(first).iter().any(|f| f != "0" && f != "1") => {
                let h = split(first);
                lines.next();
                Some(h)
            }
            _ => None,
        };
        let mut columns: Vec<Vec<bool>> = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields = split(line);
            if columns.is_empty() {
                columns = vec![Vec::new(); fields.len()];
            }
            if fields.len() != columns.len() {
                return Err(Error::Parse(format!(
                    "record {}: {} fields, expected {}",
                    n + 1,
                    fields.len(),
                    columns.len()
                )));
            }
            for (c, f) in fields.iter().enumerate() {
                columns[c].push(match f.as_str() {
                    "0" => false,
                    "1" => true,
                    other => return Err(Error::Parse(format!("record {}: `{other}` is not 0 or 1", n + 1))),
                });
            }
        }
        let names = match header {
            Some(h) => {
                if columns.is_empty() {
                    columns = vec![Vec::new(); h.len()];
                }
                if h.len() != columns.len() {
                    return Err(Error::Parse("header and records differ in width".into()));
                }
                h
            }
            None => Self::default_names(columns.len()),
        };
        Self::new(names, columns)
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.names.join(",");
        s.push('\n');
        for r in 0..self.num_records {
            let row: Vec<&str> = self.columns.iter().map(|c| if c[r] { "1" } else { "0" }).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// Column names are not stored; columns come back as `c0..`. With zero
    /// records the column count is unrecoverable and no columns are returned.
    pub fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 15 || &bytes[..7] != BINARY_MAGIC {
            return Err(Error::Parse("missing PIRMBM1 header".into()));
        }
        let n = u64::from_le_bytes(bytes[7..15].try_into().expect("8 bytes"));
        let n = usize::try_from(n).map_err(|_| Error::Parse("record count too large".into()))?;
        let body = &bytes[15..];
        let per = n.div_ceil(8);
        if per == 0 {
            if !body.is_empty() {
                return Err(Error::Parse("payload present for zero records".into()));
            }
            return Self::new(vec![], vec![]);
        }
        if !body.len().is_multiple_of(per) {
            return Err(Error::Parse(format!("{} payload bytes are not whole {per}-byte columns", body.len())));
        }
        let columns: Vec<Vec<bool>> =
            body.chunks(per).map(|c| (0..n).map(|i| c[i / 8] >> (i % 8) & 1 == 1).collect()).collect();
        Self::new(Self::default_names(columns.len()), columns)
    }

    pub fn to_binary(&self) -> Vec<u8> {
        let per = self.num_records.div_ceil(8);
        let mut out = Vec::with_capacity(15 + per * self.columns.len());
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&(self.num_records as u64).to_le_bytes());
        for c in &self.columns {
            let mut packed = vec![0u8; per];
            for (i, &b) in c.iter().enumerate() {
                if b {
                    packed[i / 8] |= 1 << (i % 8);
                }
            }
            out.extend_from_slice(&packed);
        }
        out
    }
}
