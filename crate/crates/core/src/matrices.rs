//! Ternary sensing matrices and the chunk layout of the repeated-column
//! construction.
//!
//! The detection matrix `Φ_k` is `m × (m + m/k)`: the first `m` columns are
//! the unit vectors `e_1..e_m`, and column `m + g` holds `-1` in the `k`
//! consecutive rows of measurement group `g`. Every row therefore sums to
//! zero, so a common offset on all sensors cancels in the measurement.
//!
//! `Φ_{k,l}` repeats each column of `Φ_k` over a *chunk* of `l` adjacent
//! sensors (the last few chunks get `l - 1` when the sensor count is not a
//! multiple of the chunk count). All storage is integer and column-major.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Which construction a matrix came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    Tdm,
    Cdm,
    PhiK,
    PhiKl,
    Bernoulli,
}

impl Scheme {
    pub fn tag(self) -> &'static str {
        match self {
            Scheme::Tdm => "TDM",
            Scheme::Cdm => "CDM",
            Scheme::PhiK => "PHI_K",
            Scheme::PhiKl => "PHI_KL",
            Scheme::Bernoulli => "BERNOULLI",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "TDM" => Ok(Scheme::Tdm),
            "CDM" => Ok(Scheme::Cdm),
            "PHI_K" => Ok(Scheme::PhiK),
            "PHI_KL" => Ok(Scheme::PhiKl),
            "BERNOULLI" => Ok(Scheme::Bernoulli),
            other => Err(format!("unknown scheme tag `{other}`")),
        }
    }
}

/// Sparse `m × N` matrix with entries in `{-1, 0, +1}`, stored by column.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TernaryMatrix {
    rows: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<i8>,
    scheme: Scheme,
}

impl TernaryMatrix {
    fn from_columns<I, C>(rows: usize, columns: I, scheme: Scheme) -> Self
    where
        I: IntoIterator<Item = C>,
        C: IntoIterator<Item = (usize, i8)>,
    {
        let mut col_ptr = vec![0];
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        for column in columns {
            for (r, v) in column {
                debug_assert!(r < rows && (v == 1 || v == -1));
                row_idx.push(r as u32);
                values.push(v);
            }
            col_ptr.push(row_idx.len());
        }
        TernaryMatrix {
            rows,
            col_ptr,
            row_idx,
            values,
            scheme,
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets (0-based). Values
    /// must be `±1`; positions must be in range and unique.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: &[(usize, usize, i8)],
        scheme: Scheme,
    ) -> Result<Self> {
        let mut columns: Vec<Vec<(usize, i8)>> = vec![Vec::new(); cols];
        for &(r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::InvalidParams(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} matrix"
                )));
            }
            if v != 1 && v != -1 {
                return Err(Error::InvalidParams(format!(
                    "entry ({r}, {c}) has value {v}, expected -1 or +1"
                )));
            }
            columns[c].push((r, v));
        }
        for (c, column) in columns.iter_mut().enumerate() {
            column.sort_unstable();
            if column.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::InvalidParams(format!(
                    "duplicate entry in column {c}"
                )));
            }
        }
        Ok(Self::from_columns(rows, columns, scheme))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Nonzeros of column `c` as `(row, value)`, rows ascending.
    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, i8)> + '_ {
        let span = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&r, &v)| (r as usize, v))
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.column(col)
            .find(|&(r, _)| r == row)
            .map_or(0, |(_, v)| v)
    }

    /// All nonzeros as `(row, col, value)` in column-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, i8)> + '_ {
        (0..self.cols()).flat_map(move |c| self.column(c).map(move |(r, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> Vec<Vec<i8>> {
        let mut dense = vec![vec![0i8; self.cols()]; self.rows];
        for (r, c, v) in self.entries() {
            dense[r][c] = v;
        }
        dense
    }

    pub fn row_sums(&self) -> Vec<i64> {
        let mut sums = vec![0i64; self.rows];
        for (&r, &v) in self.row_idx.iter().zip(&self.values) {
            sums[r as usize] += i64::from(v);
        }
        sums
    }

    /// `y = Φ x`, touching only stored nonzeros.
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y)?;
        Ok(y)
    }

    /// Overwrites `y` with `Φ x`.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                expected: self.cols(),
                got: x.len(),
            });
        }
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: y.len(),
            });
        }
        y.fill(0.0);
        for (c, &xc) in x.iter().enumerate() {
            for i in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[i] as usize;
                if self.values[i] > 0 {
                    y[r] += xc;
                } else {
                    y[r] -= xc;
                }
            }
        }
        Ok(())
    }

    /// `Φᵀ y`.
    pub fn transpose_mul_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: y.len(),
            });
        }
        Ok((0..self.cols())
            .map(|c| {
                self.column(c)
                    .map(|(r, v)| f64::from(v) * y[r])
                    .sum::<f64>()
            })
            .collect())
    }

    /// Writes the debug triplet format: a header line `m N scheme`, then
    /// one `row col value` line per nonzero, 1-based, column-major.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {} {}", self.rows, self.cols(), self.scheme)?;
        for (r, c, v) in self.entries() {
            writeln!(out, "{} {} {}", r + 1, c + 1, v)?;
        }
        Ok(())
    }

    pub fn parse_triplets(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::Triplet {
            line: 1,
            msg: "missing header".into(),
        })?;
        let head: Vec<&str> = header.split_whitespace().collect();
        let bad_header = || Error::Triplet {
            line: 1,
            msg: format!("expected `m N scheme`, got `{header}`"),
        };
        if head.len() != 3 {
            return Err(bad_header());
        }
        let rows: usize = head[0].parse().map_err(|_| bad_header())?;
        let cols: usize = head[1].parse().map_err(|_| bad_header())?;
        let scheme: Scheme = head[2]
            .parse()
            .map_err(|msg| Error::Triplet { line: 1, msg })?;

        let mut triplets = Vec::new();
        for (i, line) in lines {
            let bad = |msg: &str| Error::Triplet {
                line: i + 1,
                msg: msg.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(bad("expected `row col value`"));
            }
            let r: usize = fields[0].parse().map_err(|_| bad("bad row"))?;
            let c: usize = fields[1].parse().map_err(|_| bad("bad column"))?;
            let v: i8 = fields[2].parse().map_err(|_| bad("bad value"))?;
            if r == 0 || c == 0 {
                return Err(bad("indices are 1-based"));
            }
            triplets.push((r - 1, c - 1, v));
        }
        Self::from_triplets(rows, cols, &triplets, scheme)
    }
}

/// Dimensions of a repeated-column detection matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct MatrixParams {
    /// Measurements per frame.
    pub m: usize,
    /// Sparsity the matrix resolves exactly.
    pub k: usize,
    /// Sensors per chunk.
    pub l: usize,
    /// Total sensors `N`.
    pub n_sensors: usize,
}

impl MatrixParams {
    pub fn new(m: usize, k: usize, l: usize, n_sensors: usize) -> Result<Self> {
        let p = MatrixParams { m, k, l, n_sensors };
        p.validate()?;
        Ok(p)
    }

    /// Untrimmed parameters: `N = l·(m + m/k)`.
    pub fn full(m: usize, k: usize, l: usize) -> Result<Self> {
        check_mk(m, k)?;
        Self::new(m, k, l, l * (m + m / k))
    }

    pub fn validate(&self) -> Result<()> {
        check_mk(self.m, self.k)?;
        if self.l == 0 {
            return Err(Error::InvalidParams("l must be at least 1".into()));
        }
        let n = self.n_chunks();
        if self.n_sensors > n * self.l {
            return Err(Error::InvalidParams(format!(
                "N = {} exceeds n·l = {}",
                self.n_sensors,
                n * self.l
            )));
        }
        if self.n_sensors <= (self.l - 1) * n {
            return Err(Error::InvalidParams(format!(
                "N = {} fits in n·(l-1) = {}; use a smaller l",
                self.n_sensors,
                (self.l - 1) * n
            )));
        }
        Ok(())
    }

    /// Chunk count `n = m + m/k` (columns of `Φ_k`).
    pub fn n_chunks(&self) -> usize {
        self.m + self.m / self.k
    }

    pub fn groups(&self) -> usize {
        self.m / self.k
    }

    /// Chunks repeated `l - 1` times instead of `l`.
    pub fn trimmed_chunks(&self) -> usize {
        self.n_chunks() * self.l - self.n_sensors
    }

    pub fn sampling_ratio(&self) -> f64 {
        self.m as f64 / self.n_sensors as f64
    }

    /// Smallest `m` (a multiple of `k`) with `m/N` at least `target`, and
    /// the smallest `l` that then covers `N` sensors.
    pub fn for_sampling_ratio(k: usize, n_sensors: usize, target: f64) -> Result<Self> {
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::InvalidParams(format!(
                "sampling ratio {target} outside (0, 1)"
            )));
        }
        if k == 0 {
            return Err(Error::InvalidParams("k must be at least 1".into()));
        }
        // The epsilon keeps 0.042 * 10000 from rounding up to 421.
        let raw = (target * n_sensors as f64 - 1e-9).ceil().max(1.0) as usize;
        let m = raw.div_ceil(k) * k;
        let n = m + m / k;
        let l = n_sensors.div_ceil(n).max(1);
        Self::new(m, k, l, n_sensors)
    }
}

fn check_mk(m: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParams("k must be at least 1".into()));
    }
    if m == 0 || !m.is_multiple_of(k) {
        return Err(Error::InvalidParams(format!(
            "m must be multiple of k (m = {m}, k = {k})"
        )));
    }
    Ok(())
}

/// What a chunk's `Φ_k` column is.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChunkRole {
    /// Unit column `e_row`.
    Unit(usize),
    /// Block column covering the rows of measurement group `group`.
    Block(usize),
}

/// Partition of the `N` sensors into contiguous chunks, one per `Φ_k`
/// column, in the order `e_1..e_m, a_1..a_{m/k}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChunkMap {
    m: usize,
    k: usize,
    starts: Vec<usize>,
    lens: Vec<usize>,
    sensor_chunk: Vec<u32>,
}

impl ChunkMap {
    /// Trailing `n·l - N` chunks get `l - 1` sensors, the rest `l`.
    pub fn new(params: &MatrixParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_chunks();
        let full = n - params.trimmed_chunks();
        let mut starts = Vec::with_capacity(n);
        let mut lens = Vec::with_capacity(n);
        let mut sensor_chunk = Vec::with_capacity(params.n_sensors);
        let mut next = 0;
        for c in 0..n {
            let len = if c < full { params.l } else { params.l - 1 };
            starts.push(next);
            lens.push(len);
            sensor_chunk.extend(std::iter::repeat_n(c as u32, len));
            next += len;
        }
        debug_assert_eq!(next, params.n_sensors);
        Ok(ChunkMap {
            m: params.m,
            k: params.k,
            starts,
            lens,
            sensor_chunk,
        })
    }

    pub fn n_chunks(&self) -> usize {
        self.lens.len()
    }

    pub fn n_sensors(&self) -> usize {
        self.sensor_chunk.len()
    }

    pub fn measurements(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self, chunk: usize) -> usize {
        self.lens[chunk]
    }

    pub fn is_empty(&self) -> bool {
        self.lens.is_empty()
    }

    /// Chunks holding at least one sensor. Only `l = 1` with trimming
    /// produces empty chunks, and those are always trailing.
    pub fn occupied_chunks(&self) -> usize {
        self.lens.partition_point(|&len| len > 0)
    }

    pub fn sensors(&self, chunk: usize) -> Range<usize> {
        self.starts[chunk]..self.starts[chunk] + self.lens[chunk]
    }

    pub fn chunk_of(&self, sensor: usize) -> usize {
        self.sensor_chunk[sensor] as usize
    }

    pub fn role(&self, chunk: usize) -> ChunkRole {
        if chunk < self.m {
            ChunkRole::Unit(chunk)
        } else {
            ChunkRole::Block(chunk - self.m)
        }
    }

    /// Chunk index of the block column for `group`.
    pub fn block_chunk(&self, group: usize) -> usize {
        self.m + group
    }

    /// Measurement rows covered by `group`.
    pub fn group_rows(&self, group: usize) -> Range<usize> {
        group * self.k..(group + 1) * self.k
    }

    /// Distinct chunks touched by a set of sensors, ascending.
    pub fn chunks_of(&self, sensors: &[usize]) -> Vec<usize> {
        let mut chunks: Vec<usize> = sensors.iter().map(|&s| self.chunk_of(s)).collect();
        chunks.sort_unstable();
        chunks.dedup();
        chunks
    }
}

/// `Φ_k`: `m × (m + m/k)`, unit columns followed by `-1` block columns.
pub fn build_phi_k(m: usize, k: usize) -> Result<TernaryMatrix> {
    check_mk(m, k)?;
    let columns = (0..m + m / k).map(|c| phi_k_column(m, k, c));
    Ok(TernaryMatrix::from_columns(m, columns, Scheme::PhiK))
}

fn phi_k_column(m: usize, k: usize, c: usize) -> Vec<(usize, i8)> {
    if c < m {
        vec![(c, 1)]
    } else {
        let g = c - m;
        (g * k..(g + 1) * k).map(|r| (r, -1)).collect()
    }
}

/// `Φ_{k,l}`: every sensor carries its chunk's `Φ_k` column.
pub fn build_phi_kl(params: &MatrixParams) -> Result<(TernaryMatrix, ChunkMap)> {
    let chunks = ChunkMap::new(params)?;
    let columns =
        (0..params.n_sensors).map(|s| phi_k_column(params.m, params.k, chunks.chunk_of(s)));
    let mat = TernaryMatrix::from_columns(params.m, columns, Scheme::PhiKl);
    Ok((mat, chunks))
}

/// TDM sensing matrix `I_n`.
pub fn build_identity(n: usize) -> Result<TernaryMatrix> {
    if n == 0 {
        return Err(Error::InvalidParams(
            "identity order must be at least 1".into(),
        ));
    }
    Ok(TernaryMatrix::from_columns(
        n,
        (0..n).map(|c| [(c, 1)]),
        Scheme::Tdm,
    ))
}

/// Sylvester Hadamard matrix; entry `(i, j)` is `(-1)^popcount(i & j)`.
pub fn build_hadamard(n: usize) -> Result<TernaryMatrix> {
    if !n.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n));
    }
    let columns = (0..n)
        .map(|c| (0..n).map(move |r| (r, if (r & c).count_ones() % 2 == 0 { 1 } else { -1 })));
    Ok(TernaryMatrix::from_columns(n, columns, Scheme::Cdm))
}

/// In-place fast Walsh–Hadamard transform: replaces `v` with `H v` for the
/// Sylvester matrix of order `v.len()`.
pub fn fast_hadamard(v: &mut [f64]) -> Result<()> {
    if !v.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo(v.len()));
    }
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = x + y;
                *b = x - y;
            }
        }
        h *= 2;
    }
    Ok(())
}

/// Dense i.i.d. `±1` matrix from a seeded stream.
pub fn build_bernoulli(m: usize, n: usize, seed: u64) -> Result<TernaryMatrix> {
    if m == 0 || m > n {
        return Err(Error::InvalidParams(format!(
            "Bernoulli matrix needs 0 < m <= n (m = {m}, n = {n})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<(usize, i8)>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|r| (r, if rng.random::<bool>() { 1 } else { -1 }))
                .collect()
        })
        .collect();
    Ok(TernaryMatrix::from_columns(m, columns, Scheme::Bernoulli))
}

/// Column subsets checked by [`find_dependent_columns`] before giving up.
pub const ENUMERATION_BUDGET: u128 = 2_000_000;

/// Exhaustive check that every set of at most `k` columns is linearly
/// independent (exact integer rank).
pub fn verify_k_independence(mat: &TernaryMatrix, k: usize) -> Result<bool> {
    Ok(find_dependent_columns(mat, k)?.is_none())
}

/// First (lexicographic, by size) set of at most `k` columns that is
/// linearly dependent, if any.
pub fn find_dependent_columns(mat: &TernaryMatrix, k: usize) -> Result<Option<Vec<usize>>> {
    let n = mat.cols();
    let subsets: u128 = (1..=k.min(n)).map(|j| binomial(n, j)).sum();
    if subsets > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget {
            subsets,
            budget: ENUMERATION_BUDGET,
        });
    }
    let dense = mat.to_dense();
    for size in 1..=k.min(n) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            if rank(&dense, &idx) < size {
                return Ok(Some(idx));
            }
            if !next_combination(&mut idx, n) {
                break;
            }
        }
    }
    Ok(None)
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

pub(crate) fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let size = idx.len();
    for i in (0..size).rev() {
        if idx[i] < n - size + i {
            idx[i] += 1;
            for j in i + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Rank of the selected columns by fraction-free (Bareiss) elimination.
fn rank(dense: &[Vec<i8>], cols: &[usize]) -> usize {
    let mut a: Vec<Vec<i128>> = dense
        .iter()
        .map(|row| cols.iter().map(|&c| i128::from(row[c])).collect())
        .collect();
    let (rows, width) = (a.len(), cols.len());
    let mut rank = 0;
    let mut prev = 1i128;
    for col in 0..width {
        let Some(pivot) = (rank..rows).find(|&r| a[r][col] != 0) else {
            continue;
        };
        a.swap(rank, pivot);
        for r in rank + 1..rows {
            for c in col + 1..width {
                a[r][c] = (a[r][c] * a[rank][col] - a[r][col] * a[rank][c]) / prev;
            }
            a[r][col] = 0;
        }
        prev = a[rank][col];
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}
