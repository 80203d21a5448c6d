//! Compressed sparse row matrices: Matrix Market ingestion and random
//! generation.

use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub rows: u32,
    pub cols: u32,
    pub row_ptr: Vec<u32>,
    pub col_idx: Vec<u32>,
    pub values: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("entry ({row}, {col}) outside a {rows}x{cols} matrix")]
    OutOfRange { row: u64, col: u64, rows: u32, cols: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: u32) -> std::ops::Range<usize> {
        self.row_ptr[i as usize] as usize..self.row_ptr[i as usize + 1] as usize
    }

    /// Builds a matrix from 0-based (row, col, value) triplets. Entries are
    /// sorted by position; for duplicate positions the last one given wins.
    pub fn from_triplets(rows: u32, cols: u32, entries: &[(u32, u32, f64)]) -> Result<Self, MatrixError> {
        for &(r, c, _) in entries {
            if r >= rows || c >= cols {
                return Err(MatrixError::OutOfRange { row: r as u64, col: c as u64, rows, cols });
            }
        }
        let mut order: Vec<usize> = (0..entries.len()).collect();
        // Stable sort keeps input order among duplicates.
        order.sort_by_key(|&k| (entries[k].0, entries[k].1));
        let mut row_ptr = vec![0u32; rows as usize + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut last: Option<(u32, u32)> = None;
        for k in order {
            let (r, c, v) = entries[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() = v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r as usize + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for i in 0..rows as usize {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(CsrMatrix { rows, cols, row_ptr, col_idx, values })
    }

    /// Uniformly random sparsity pattern with `density` of the positions set.
    pub fn random(rows: u32, cols: u32, density: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let total = rows as u64 * cols as u64;
        let nnz = ((total as f64 * density).round() as u64).min(total) as usize;
        let mut positions: Vec<u64> =
            rand::seq::index::sample(&mut rng, total as usize, nnz).into_iter().map(|p| p as u64).collect();
        positions.sort_unstable();
        let entries: Vec<(u32, u32, f64)> = positions
            .into_iter()
            .map(|p| ((p / cols as u64) as u32, (p % cols as u64) as u32, rng.gen_range(-1.0..1.0)))
            .collect();
        Self::from_triplets(rows, cols, &entries).expect("generated entries in range")
    }

    pub fn check(&self) -> Result<(), String> {
        if self.row_ptr.len() != self.rows as usize + 1 || self.row_ptr[0] != 0 {
            return Err("row_ptr has the wrong shape".into());
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return Err("row_ptr is not monotone".into());
        }
        if *self.row_ptr.last().unwrap() as usize != self.col_idx.len() || self.col_idx.len() != self.values.len() {
            return Err("nnz mismatch".into());
        }
        if self.col_idx.iter().any(|&c| c >= self.cols) {
            return Err("column index out of bounds".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

/// Parses a coordinate-format Matrix Market file.
pub fn load_matrix_market<R: BufRead>(input: R) -> Result<CsrMatrix, MatrixError> {
    let err = |line: usize, msg: &str| MatrixError::Parse { line, msg: msg.to_string() };
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
    let header = header?;
    let h: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" || h[2] != "coordinate" {
        return Err(err(1, "expected `%%MatrixMarket matrix coordinate <field> <symmetry>`"));
    }
    let field = match h[3].as_str() {
        "real" | "double" => Field::Real,
        "integer" => Field::Integer,
        "pattern" => Field::Pattern,
        other => return Err(err(1, &format!("unsupported field `{other}`"))),
    };
    let symmetric = match h[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(err(1, &format!("unsupported symmetry `{other}`"))),
    };
    let mut size: Option<(u32, u32, usize)> = None;
    let mut entries = Vec::new();
    let mut read = 0usize;
    for (no, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let Some((rows, cols, _)) = size else {
            if toks.len() != 3 {
                return Err(err(no, "size line needs `rows cols nnz`"));
            }
            let p = |s: &str| s.parse::<u64>().map_err(|_| err(no, &format!("bad number `{s}`")));
            let (r, c, n) = (p(toks[0])?, p(toks[1])?, p(toks[2])?);
            if r > u32::MAX as u64 || c > u32::MAX as u64 {
                return Err(err(no, "matrix dimensions too large"));
            }
            size = Some((r as u32, c as u32, n as usize));
            entries.reserve(n as usize);
            continue;
        };
        let want = if field == Field::Pattern { 2 } else { 3 };
        if toks.len() != want {
            return Err(err(no, &format!("expected {want} fields per entry")));
        }
        let i: u64 = toks[0].parse().map_err(|_| err(no, "bad row index"))?;
        let j: u64 = toks[1].parse().map_err(|_| err(no, "bad column index"))?;
        if i == 0 || j == 0 || i > rows as u64 || j > cols as u64 {
            return Err(MatrixError::OutOfRange { row: i, col: j, rows, cols });
        }
        let v = match field {
            Field::Pattern => 1.0,
            Field::Integer => toks[2].parse::<i64>().map_err(|_| err(no, "bad integer value"))? as f64,
            Field::Real => toks[2].parse::<f64>().map_err(|_| err(no, "bad real value"))?,
        };
        let (r, c) = ((i - 1) as u32, (j - 1) as u32);
        entries.push((r, c, v));
        if symmetric && r != c {
            entries.push((c, r, v));
        }
        read += 1;
    }
    let (rows, cols, nnz) = size.ok_or_else(|| err(1, "missing size line"))?;
    if read != nnz {
        return Err(err(1, &format!("header declares {nnz} entries, file has {read}")));
    }
    CsrMatrix::from_triplets(rows, cols, &entries)
}
