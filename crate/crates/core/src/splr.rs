//! Storage for incomplete matrices and sparse-plus-low-rank matrices.
//!
//! Every solver in the crate reaches the data through the types here. An
//! [`ObservedMatrix`] holds the observed set Ω once, in row-major entry
//! order, with a column index of positions into that list. A
//! [`SplrMatrix`] reuses the same pattern for its sparse part and carries a
//! dense factored term `left · rightᵀ` on top of it, which is how the
//! filled-in matrix `X* = P_Ω(X) + P_Ω^⊥(ABᵀ)` is represented without ever
//! forming an `m × n` array.

use std::cell::Cell;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{mismatch, Error, Result};

/// Rows per parallel block in the skinny multiplies.
const BLOCK_ROWS: usize = 64;

/// Execution context for the heavy kernels: whether to split work into
/// row blocks on the current rayon pool, plus a running count of
/// multiply-add operations.
///
/// Each output row of a multiply is computed by exactly one block with the
/// same sequence of operations, so results do not depend on the number of
/// workers.
#[derive(Debug, Default)]
pub struct Exec {
    parallel: bool,
    ops: Cell<u64>,
}

impl Exec {
    pub fn serial() -> Self {
        Self::default()
    }

    pub fn parallel() -> Self {
        Exec {
            parallel: true,
            ops: Cell::new(0),
        }
    }

    pub fn is_parallel(&self) -> bool {
        self.parallel
    }

    /// Multiply-add operations counted so far.
    pub fn ops(&self) -> u64 {
        self.ops.get()
    }

    pub fn count(&self, n: u64) {
        self.ops.set(self.ops.get() + n);
    }
}

/// Runs `f` with an execution context: serial for `threads == 1`,
/// otherwise on a private pool of `threads` workers (0 = all cores).
pub fn with_threads<R, F>(threads: usize, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce(&Exec) -> R + Send,
{
    if threads == 1 {
        return Ok(f(&Exec::serial()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| f(&Exec::parallel())))
}

/// The observed index set Ω of an `m × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    nrows: usize,
    ncols: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    row_ptr: Vec<usize>,
    col_ptr: Vec<usize>,
    col_pos: Vec<usize>,
}

impl Pattern {
    /// Builds a pattern from index pairs that are already sorted row-major
    /// and free of duplicates.
    fn from_sorted(nrows: usize, ncols: usize, rows: Vec<usize>, cols: Vec<usize>) -> Self {
        let mut row_ptr = vec![0usize; nrows + 1];
        for &i in &rows {
            row_ptr[i + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_pos_index = build_col_index(ncols, &cols);
        Pattern {
            nrows,
            ncols,
            rows,
            cols,
            row_ptr,
            col_ptr: col_pos_index.0,
            col_pos: col_pos_index.1,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// |Ω|.
    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn row_of(&self, pos: usize) -> usize {
        self.rows[pos]
    }

    pub fn col_of(&self, pos: usize) -> usize {
        self.cols[pos]
    }

    /// Entry positions of row `i`; the columns there are increasing.
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Ω_i: sorted observed columns of row `i`.
    pub fn row_cols(&self, i: usize) -> &[usize] {
        &self.cols[self.row_range(i)]
    }

    /// Positions into the entry list for column `j`, ordered by row.
    pub fn col_positions(&self, j: usize) -> &[usize] {
        &self.col_pos[self.col_ptr[j]..self.col_ptr[j + 1]]
    }

    /// n_i.
    pub fn row_count(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    /// m_j.
    pub fn col_count(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Entry position of `(i, j)` if observed.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.nrows {
            return None;
        }
        let range = self.row_range(i);
        self.cols[range.clone()]
            .binary_search(&j)
            .ok()
            .map(|off| range.start + off)
    }

    /// Rebuilds the column index from the row-major entry list; used to
    /// cross-check the two orientations.
    pub fn rebuilt_col_index(&self) -> (Vec<usize>, Vec<usize>) {
        build_col_index(self.ncols, &self.cols)
    }

    pub fn col_index(&self) -> (&[usize], &[usize]) {
        (&self.col_ptr, &self.col_pos)
    }

    pub fn is_full(&self) -> bool {
        self.nnz() == self.nrows * self.ncols
    }

    fn transpose_with_perm(&self) -> (Pattern, Vec<usize>) {
        // Column-major order of the original is row-major order of the transpose.
        let rows: Vec<usize> = self.col_pos.iter().map(|&p| self.cols[p]).collect();
        let cols: Vec<usize> = self.col_pos.iter().map(|&p| self.rows[p]).collect();
        (
            Pattern::from_sorted(self.ncols, self.nrows, rows, cols),
            self.col_pos.clone(),
        )
    }
}

fn build_col_index(ncols: usize, cols: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut col_ptr = vec![0usize; ncols + 1];
    for &j in cols {
        col_ptr[j + 1] += 1;
    }
    for j in 0..ncols {
        col_ptr[j + 1] += col_ptr[j];
    }
    let mut next = col_ptr.clone();
    let mut col_pos = vec![0usize; cols.len()];
    // Entries are row-major, so filling in order keeps each column sorted by row.
    for (p, &j) in cols.iter().enumerate() {
        col_pos[next[j]] = p;
        next[j] += 1;
    }
    (col_ptr, col_pos)
}

/// An incomplete matrix: values on Ω, nothing elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

/// One observed cell with the source line it came from (for error reports).
#[derive(Debug, Clone, Copy)]
pub struct SourcedEntry {
    pub row: usize,
    pub col: usize,
    pub value: f64,
    pub line: usize,
}

impl ObservedMatrix {
    /// Builds from `(row, col, value)` triplets in any order. Duplicates are
    /// rejected; their 1-based ordinal in the input is reported as the line.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let entries = triplets
            .into_iter()
            .enumerate()
            .map(|(k, (row, col, value))| SourcedEntry {
                row,
                col,
                value,
                line: k + 1,
            })
            .collect();
        Self::from_sourced(nrows, ncols, entries)
    }

    pub fn from_sourced(nrows: usize, ncols: usize, mut entries: Vec<SourcedEntry>) -> Result<Self> {
        for e in &entries {
            if e.row >= nrows || e.col >= ncols {
                return Err(Error::IndexOutOfBounds {
                    row: e.row,
                    col: e.col,
                    nrows,
                    ncols,
                });
            }
            if !e.value.is_finite() {
                return Err(Error::NonFinite { row: e.row, col: e.col });
            }
        }
        entries.sort_by_key(|e| (e.row, e.col, e.line));
        for w in entries.windows(2) {
            if w[0].row == w[1].row && w[0].col == w[1].col {
                return Err(Error::DuplicateEntry {
                    row: w[0].row,
                    col: w[0].col,
                    first_line: w[0].line,
                    second_line: w[1].line,
                });
            }
        }
        let rows = entries.iter().map(|e| e.row).collect();
        let cols = entries.iter().map(|e| e.col).collect();
        let values = entries.iter().map(|e| e.value).collect();
        Ok(ObservedMatrix {
            pattern: Arc::new(Pattern::from_sorted(nrows, ncols, rows, cols)),
            values,
        })
    }

    /// Every cell of `dense` observed.
    pub fn fully_observed(dense: ArrayView2<f64>) -> Result<Self> {
        let (m, n) = dense.dim();
        Self::from_triplets(
            m,
            n,
            (0..m)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| (i, j, dense[[i, j]])),
        )
    }

    /// Cells of `dense` where `mask` is true.
    pub fn from_dense_masked(dense: ArrayView2<f64>, mask: &Array2<bool>) -> Result<Self> {
        let (m, n) = dense.dim();
        if mask.dim() != (m, n) {
            return Err(mismatch("mask", format!("{m}x{n}"), format!("{:?}", mask.dim())));
        }
        let mut trip = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if mask[[i, j]] {
                    trip.push((i, j, dense[[i, j]]));
                }
            }
        }
        Self::from_triplets(m, n, trip)
    }

    /// Same pattern, new values (aligned with [`Self::entries`] order).
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.nnz() {
            return Err(mismatch("with_values", self.nnz(), values.len()));
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: self.pattern.rows[p],
                col: self.pattern.cols[p],
            });
        }
        Ok(ObservedMatrix {
            pattern: Arc::clone(&self.pattern),
            values,
        })
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(i, j, value)` in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pattern
            .rows
            .iter()
            .zip(&self.pattern.cols)
            .zip(&self.values)
            .map(|((&i, &j), &v)| (i, j, v))
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.pattern.position(i, j).map(|p| self.values[p])
    }

    /// ‖P_Ω(X)‖_F.
    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn missing_fraction(&self) -> f64 {
        1.0 - self.nnz() as f64 / (self.nrows() * self.ncols()) as f64
    }

    /// P_Ω(X) as a dense array with zeros off Ω.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows(), self.ncols()));
        for (i, j, v) in self.entries() {
            out[[i, j]] = v;
        }
        out
    }

    pub fn mask(&self) -> Array2<bool> {
        let mut out = Array2::from_elem((self.nrows(), self.ncols()), false);
        for (i, j, _) in self.entries() {
            out[[i, j]] = true;
        }
        out
    }

    pub fn transpose(&self) -> ObservedMatrix {
        let (pattern, perm) = self.pattern.transpose_with_perm();
        ObservedMatrix {
            pattern: Arc::new(pattern),
            values: perm.iter().map(|&p| self.values[p]).collect(),
        }
    }
}

/// `P_Ω(M)` for a model given as an evaluator, aligned with the entry order
/// of `target`.
pub fn project_omega<F>(probe: F, target: &ObservedMatrix) -> Vec<f64>
where
    F: Fn(usize, usize) -> f64,
{
    target.entries().map(|(i, j, _)| probe(i, j)).collect()
}

/// `(A Bᵀ)_ij` for every `(i, j)` in the pattern; `r |Ω|` multiply-adds.
pub fn project_product(pattern: &Pattern, a: ArrayView2<f64>, b: ArrayView2<f64>, exec: &Exec) -> Vec<f64> {
    let r = a.ncols();
    let a = a.as_standard_layout();
    let b = b.as_standard_layout();
    let a_s = a.as_slice().expect("standard layout");
    let b_s = b.as_slice().expect("standard layout");
    let mut out = vec![0.0; pattern.nnz()];
    let fill = |i: usize, out_row: &mut [f64]| {
        let ai = &a_s[i * r..(i + 1) * r];
        for (slot, &j) in out_row.iter_mut().zip(pattern.row_cols(i)) {
            let bj = &b_s[j * r..(j + 1) * r];
            *slot = dot(ai, bj);
        }
    };
    if exec.is_parallel() {
        let chunks = split_by_rows(&mut out, pattern, BLOCK_ROWS);
        chunks.into_par_iter().for_each(|(start, slice)| {
            let mut offset = 0;
            let mut i = start;
            while offset < slice.len() {
                let len = pattern.row_count(i);
                fill(i, &mut slice[offset..offset + len]);
                offset += len;
                i += 1;
            }
        });
    } else {
        for i in 0..pattern.nrows() {
            let range = pattern.row_range(i);
            fill(i, &mut out[range]);
        }
    }
    exec.count((r * pattern.nnz()) as u64);
    out
}

/// Splits the entry-aligned buffer into blocks of whole rows.
fn split_by_rows<'a>(buf: &'a mut [f64], pattern: &Pattern, block: usize) -> Vec<(usize, &'a mut [f64])> {
    let mut out = Vec::new();
    let mut rest = buf;
    let mut start = 0;
    while start < pattern.nrows() {
        let end = (start + block).min(pattern.nrows());
        let len = pattern.row_ptr[end] - pattern.row_ptr[start];
        let (head, tail) = rest.split_at_mut(len);
        out.push((start, head));
        rest = tail;
        start = end;
    }
    out
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Anything that can be multiplied by a skinny dense matrix on either side.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `X · W` for `W` of shape `ncols × k`.
    fn mul_right(&self, w: ArrayView2<f64>, exec: &Exec) -> Array2<f64>;
    /// `Xᵀ · W` for `W` of shape `nrows × k`.
    fn mul_left(&self, w: ArrayView2<f64>, exec: &Exec) -> Array2<f64>;
    /// ‖X‖²_F, with unobserved entries of a sparse matrix taken as zero.
    fn frobenius_norm_sq(&self) -> f64;
}

impl LinearOperator for Array2<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn mul_right(&self, w: ArrayView2<f64>, exec: &Exec) -> Array2<f64> {
        exec.count((self.len() * w.ncols()) as u64);
        self.dot(&w)
    }

    fn mul_left(&self, w: ArrayView2<f64>, exec: &Exec) -> Array2<f64> {
        exec.count((self.len() * w.ncols()) as u64);
        self.t().dot(&w)
    }

    fn frobenius_norm_sq(&self) -> f64 {
        self.iter().map(|x| x * x).sum()
    }
}

/// `out[row] += Σ_p values[p] · w[other[p]]` over the positions of each row.
#[allow(clippy::too_many_arguments)]
fn sparse_accumulate<P, It>(
    out: &mut [f64],
    nrows: usize,
    k: usize,
    positions: P,
    other: &[usize],
    values: &[f64],
    w: &[f64],
    parallel: bool,
) where
    P: Fn(usize) -> It + Sync,
    It: Iterator<Item = usize>,
{
    let body = |row: usize, out_row: &mut [f64]| {
        for p in positions(row) {
            let s = values[p];
            let w_row = &w[other[p] * k..(other[p] + 1) * k];
            for (o, &x) in out_row.iter_mut().zip(w_row) {
                *o += s * x;
            }
        }
    };
    if k == 0 {
        return;
    }
    if parallel {
        out.par_chunks_mut(BLOCK_ROWS * k).enumerate().for_each(|(blk, chunk)| {
            for (r, out_row) in chunk.chunks_mut(k).enumerate() {
                body(blk * BLOCK_ROWS + r, out_row);
            }
        });
    } else {
        for (row, out_row) in out.chunks_mut(k).enumerate().take(nrows) {
            body(row, out_row);
        }
    }
}

impl LinearOperator for ObservedMatrix {
    fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    fn mul_right(&self, w: ArrayView2<f64>, exec: &Exec) -> Array2<f64> {
        sparse_mul_right(&self.pattern, &self.values, w, exec)
    }

    fn mul_left(&self, w: ArrayView2<f64>, exec: &Exec) -> Array2<f64> {
        sparse_mul_left(&self.pattern, &self.values, w, exec)
    }

    fn frobenius_norm_sq(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum()
    }
}

pub(crate) fn sparse_mul_right(pattern: &Pattern, values: &[f64], w: ArrayView2<f64>, exec: &Exec) -> Array2<f64> {
    let k = w.ncols();
    let w = w.as_standard_layout();
    let mut out = Array2::zeros((pattern.nrows, k));
    sparse_accumulate(
        out.as_slice_mut().expect("fresh array"),
        pattern.nrows,
        k,
        |i| pattern.row_range(i),
        &pattern.cols,
        values,
        w.as_slice().expect("standard layout"),
        exec.is_parallel(),
    );
    exec.count((k * pattern.nnz()) as u64);
    out
}

pub(crate) fn sparse_mul_left(pattern: &Pattern, values: &[f64], w: ArrayView2<f64>, exec: &Exec) -> Array2<f64> {
    let k = w.ncols();
    let w = w.as_standard_layout();
    let mut out = Array2::zeros((pattern.ncols, k));
    sparse_accumulate(
        out.as_slice_mut().expect("fresh array"),
        pattern.ncols,
        k,
        |j| pattern.col_positions(j).iter().copied(),
        &pattern.rows,
        values,
        w.as_slice().expect("standard layout"),
        exec.is_parallel(),
    );
    exec.count((k * pattern.nnz()) as u64);
    out
}

/// `X* = S + left · rightᵀ` with `S` supported on a pattern.
#[derive(Debug, Clone)]
pub struct SplrMatrix {
    pattern: Arc<Pattern>,
    sparse: Vec<f64>,
    left: Array2<f64>,
    right: Array2<f64>,
}

impl SplrMatrix {
    pub fn new(pattern: Arc<Pattern>, sparse: Vec<f64>, left: Array2<f64>, right: Array2<f64>) -> Result<Self> {
        if sparse.len() != pattern.nnz() {
            return Err(mismatch("splr sparse part", pattern.nnz(), sparse.len()));
        }
        if left.nrows() != pattern.nrows || right.nrows() != pattern.ncols || left.ncols() != right.ncols() {
            return Err(mismatch(
                "splr factors",
                format!("{}xr and {}xr", pattern.nrows, pattern.ncols),
                format!("{:?} and {:?}", left.dim(), right.dim()),
            ));
        }
        Ok(SplrMatrix {
            pattern,
            sparse,
            left,
            right,
        })
    }

    /// `X* = (P_Ω(X) − P_Ω(ABᵀ)) + ABᵀ`.
    pub fn from_residual(x: &ObservedMatrix, a: ArrayView2<f64>, b: ArrayView2<f64>, exec: &Exec) -> Result<Self> {
        if a.nrows() != x.nrows() || b.nrows() != x.ncols() || a.ncols() != b.ncols() {
            return Err(mismatch(
                "splr_from_residual",
                format!("{}xr and {}xr", x.nrows(), x.ncols()),
                format!("{:?} and {:?}", a.dim(), b.dim()),
            ));
        }
        let fitted = project_product(&x.pattern, a, b, exec);
        let sparse = x.values.iter().zip(&fitted).map(|(v, f)| v - f).collect();
        Ok(SplrMatrix {
            pattern: Arc::clone(&x.pattern),
            sparse,
            left: a.to_owned(),
            right: b.to_owned(),
        })
    }

    /// Like [`Self::from_residual`] with the sparse residual already known.
    pub fn from_parts_unchecked(
        pattern: Arc<Pattern>,
        sparse: Vec<f64>,
        left: Array2<f64>,
        right: Array2<f64>,
    ) -> Self {
        debug_assert_eq!(sparse.len(), pattern.nnz());
        SplrMatrix {
            pattern,
            sparse,
            left,
            right,
        }
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn sparse_values(&self) -> &[f64] {
        &self.sparse
    }

    pub fn left(&self) -> &Array2<f64> {
        &self.left
    }

    pub fn right(&self) -> &Array2<f64> {
        &self.right
    }

    pub fn low_rank(&self) -> usize {
        self.left.ncols()
    }

    /// Value at `(i, j)`: `s_ij + Σ_k left[i,k] right[j,k]`.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        let s = self.pattern.position(i, j).map_or(0.0, |p| self.sparse[p]);
        s + self.left.row(i).dot(&self.right.row(j))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = self.left.dot(&self.right.t());
        for (p, (&i, &j)) in self.pattern.rows.iter().zip(&self.pattern.cols).enumerate() {
            out[[i, j]] += self.sparse[p];
        }
        out
    }

    /// ‖X*‖²_F without materializing.
    pub fn frobenius_norm_sq(&self) -> f64 {
        let lr = self.left.t().dot(&self.left);
        let rr = self.right.t().dot(&self.right);
        let low: f64 = (&lr * &rr).sum();
        let fitted = project_product(&self.pattern, self.left.view(), self.right.view(), &Exec::serial());
        let cross: f64 = self.sparse.iter().zip(&fitted).map(|(s, f)| s * f).sum();
        let sq: f64 = self.sparse.iter().map(|s| s * s).sum();
        sq + 2.0 * cross + low
    }

    pub fn transpose(&self) -> SplrMatrix {
        let (pattern, perm) = self.pattern.transpose_with_perm();
        SplrMatrix {
            pattern: Arc::new(pattern),
            sparse: perm.iter().map(|&p| self.sparse[p]).collect(),
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }
}

impl LinearOperator for SplrMatrix {
    fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    /// `S W + left (rightᵀ W)`: `k|Ω| + (m + n) r k` multiply-adds.
    fn mul_right(&self, w: ArrayView2<f64>, exec: &Exec) -> Array2<f64> {
        let mut out = sparse_mul_right(&self.pattern, &self.sparse, w, exec);
        add_low_rank(&mut out, &self.left, &self.right, w, exec);
        out
    }

    fn mul_left(&self, w: ArrayView2<f64>, exec: &Exec) -> Array2<f64> {
        let mut out = sparse_mul_left(&self.pattern, &self.sparse, w, exec);
        add_low_rank(&mut out, &self.right, &self.left, w, exec);
        out
    }

    fn frobenius_norm_sq(&self) -> f64 {
        SplrMatrix::frobenius_norm_sq(self)
    }
}

/// `out += outer · (innerᵀ w)`.
fn add_low_rank(out: &mut Array2<f64>, outer: &Array2<f64>, inner: &Array2<f64>, w: ArrayView2<f64>, exec: &Exec) {
    let r = outer.ncols();
    let k = w.ncols();
    if r == 0 || k == 0 {
        return;
    }
    let t = inner.t().dot(&w);
    exec.count((inner.nrows() * r * k) as u64);
    let t = t.as_standard_layout();
    let t_s = t.as_slice().expect("standard layout");
    let outer = outer.as_standard_layout();
    let outer_s = outer.as_slice().expect("standard layout");
    let body = |i: usize, out_row: &mut [f64]| {
        for (l, &c) in outer_s[i * r..(i + 1) * r].iter().enumerate() {
            for (o, &x) in out_row.iter_mut().zip(&t_s[l * k..(l + 1) * k]) {
                *o += c * x;
            }
        }
    };
    let out_s = out.as_slice_mut().expect("fresh array");
    if exec.is_parallel() {
        out_s
            .par_chunks_mut(BLOCK_ROWS * k)
            .enumerate()
            .for_each(|(blk, chunk)| {
                for (rr, row) in chunk.chunks_mut(k).enumerate() {
                    body(blk * BLOCK_ROWS + rr, row);
                }
            });
    } else {
        for (i, row) in out_s.chunks_mut(k).enumerate() {
            body(i, row);
        }
    }
    exec.count((outer.nrows() * r * k) as u64);
}

/// A model `M = U diag(d) Vᵀ` with orthonormal `U`, `V` and nonincreasing
/// `d ≥ 0` (the singular values of `M`).
///
/// The factor pair seen by the solvers is `A = U diag(√d)`,
/// `B = V diag(√d)`, so `ABᵀ = M` and `½(‖A‖² + ‖B‖²) = Σ d = ‖M‖_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub u: Array2<f64>,
    pub d: Array1<f64>,
    pub v: Array2<f64>,
}

/// Orthonormality tolerance enforced on construction.
pub const ORTHO_TOL: f64 = 1e-10;

impl FactorPair {
    pub fn new(u: Array2<f64>, d: Array1<f64>, v: Array2<f64>) -> Result<Self> {
        let f = FactorPair { u, d, v };
        f.validate()?;
        Ok(f)
    }

    pub(crate) fn new_unchecked(u: Array2<f64>, d: Array1<f64>, v: Array2<f64>) -> Self {
        FactorPair { u, d, v }
    }

    /// The rank-0 model of an `m × n` matrix.
    pub fn zero(m: usize, n: usize) -> Self {
        FactorPair {
            u: Array2::zeros((m, 0)),
            d: Array1::zeros(0),
            v: Array2::zeros((n, 0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.d.len();
        if self.u.ncols() != r || self.v.ncols() != r {
            return Err(mismatch(
                "factor pair",
                format!("{r} columns"),
                format!("U {:?}, V {:?}", self.u.dim(), self.v.dim()),
            ));
        }
        if self.d.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidConfig("singular values must be finite and >= 0".into()));
        }
        if self.d.windows(2).into_iter().any(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig("singular values must be nonincreasing".into()));
        }
        let eu = orthonormality_error(self.u.view());
        let ev = orthonormality_error(self.v.view());
        if eu > ORTHO_TOL || ev > ORTHO_TOL {
            return Err(Error::InvalidConfig(format!(
                "factor columns not orthonormal (|UᵀU−I|max={eu:.3e}, |VᵀV−I|max={ev:.3e})"
            )));
        }
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.nrows()
    }

    /// Operating rank (number of stored components).
    pub fn rank(&self) -> usize {
        self.d.len()
    }

    /// Components with `d_i > 1e-9 · d_1`.
    pub fn rank_estimate(&self) -> usize {
        rank_estimate(self.d.as_slice().expect("contiguous"))
    }

    /// Components with `d_i > 0`.
    pub fn nonzero_rank(&self) -> usize {
        self.d.iter().filter(|&&x| x > 0.0).count()
    }

    /// ‖M‖_* = Σ d_i.
    pub fn nuclear_norm(&self) -> f64 {
        self.d.sum()
    }

    /// `A = U diag(√d)`.
    pub fn a(&self) -> Array2<f64> {
        scale_columns(&self.u, self.d.iter().map(|x| x.sqrt()))
    }

    /// `B = V diag(√d)`.
    pub fn b(&self) -> Array2<f64> {
        scale_columns(&self.v, self.d.iter().map(|x| x.sqrt()))
    }

    pub fn predict(&self, i: usize, j: usize) -> f64 {
        let mut s = 0.0;
        for k in 0..self.d.len() {
            s += self.u[[i, k]] * self.d[k] * self.v[[j, k]];
        }
        s
    }

    pub fn to_dense(&self) -> Array2<f64> {
        scale_columns(&self.u, self.d.iter().copied()).dot(&self.v.t())
    }

    /// Keeps the first `q` components.
    pub fn truncated(&self, q: usize) -> FactorPair {
        let q = q.min(self.rank());
        FactorPair {
            u: self.u.slice(ndarray::s![.., ..q]).to_owned(),
            d: self.d.slice(ndarray::s![..q]).to_owned(),
            v: self.v.slice(ndarray::s![.., ..q]).to_owned(),
        }
    }
}

pub(crate) fn rank_estimate(d: &[f64]) -> usize {
    let top = d.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    d.iter().filter(|&&x| x > 1e-9 * top).count()
}

/// `M · diag(s)`.
pub fn scale_columns<I: IntoIterator<Item = f64>>(m: &Array2<f64>, s: I) -> Array2<f64> {
    let mut out = m.clone();
    for (mut col, f) in out.axis_iter_mut(Axis(1)).zip(s) {
        col *= f;
    }
    out
}

/// `‖MᵀM − I‖_max`.
pub fn orthonormality_error(m: ArrayView2<f64>) -> f64 {
    let g = m.t().dot(&m);
    let mut worst: f64 = 0.0;
    for ((i, j), &x) in g.indexed_iter() {
        let target = if i == j { 1.0 } else { 0.0 };
        worst = worst.max((x - target).abs());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_observed(m: usize, n: usize, frac: f64, seed: u64) -> ObservedMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trip = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.random::<f64>() < frac {
                    trip.push((i, j, rng.random::<f64>() * 2.0 - 1.0));
                }
            }
        }
        ObservedMatrix::from_triplets(m, n, trip).unwrap()
    }

    fn random_dense(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, n), |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_duplicates_with_lines() {
        let err = ObservedMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0)]).unwrap_err();
        match err {
            Error::DuplicateEntry {
                row: 0,
                col: 0,
                first_line: 1,
                second_line: 3,
            } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_bounds_and_nonfinite() {
        assert!(matches!(
            ObservedMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]),
            Err(Error::IndexOutOfBounds { .. })
        ));
        assert!(matches!(
            ObservedMatrix::from_triplets(2, 2, vec![(0, 0, f64::NAN)]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn row_and_column_indices_agree() {
        let x = random_observed(17, 11, 0.4, 3);
        let p = x.pattern();
        let total_rows: usize = (0..17).map(|i| p.row_count(i)).sum();
        let total_cols: usize = (0..11).map(|j| p.col_count(j)).sum();
        assert_eq!(total_rows, x.nnz());
        assert_eq!(total_cols, x.nnz());
        let (ptr, pos) = p.rebuilt_col_index();
        assert_eq!((ptr.as_slice(), pos.as_slice()), p.col_index());
        for j in 0..11 {
            let rows: Vec<usize> = p.col_positions(j).iter().map(|&q| p.row_of(q)).collect();
            assert!(rows.windows(2).all(|w| w[0] < w[1]));
            assert!(p.col_positions(j).iter().all(|&q| p.col_of(q) == j));
        }
    }

    #[test]
    fn project_omega_cases() {
        let x = ObservedMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (0, 2, -2.0), (1, 1, 4.0), (2, 0, 0.5)]).unwrap();
        assert_eq!(project_omega(|_, _| 0.0, &x), vec![0.0; 4]);
        assert_eq!(project_omega(|i, j| x.get(i, j).unwrap_or(0.0), &x), x.values());
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0, -1.0];
        let dense = Array2::from_shape_fn((3, 3), |(i, j)| u[i] * v[j]);
        let got = project_omega(|i, j| u[i] * v[j], &x);
        let expected: Vec<f64> = x.entries().map(|(i, j, _)| dense[[i, j]]).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn splr_from_residual_cases() {
        let x = random_observed(5, 4, 0.6, 9);
        let exec = Exec::serial();
        let zero =
            SplrMatrix::from_residual(&x, Array2::zeros((5, 2)).view(), Array2::zeros((4, 2)).view(), &exec).unwrap();
        assert_eq!(zero.sparse_values(), x.values());

        let a = random_dense(5, 2, 1);
        let b = random_dense(4, 2, 2);
        let ab = a.dot(&b.t());
        let exact = x
            .with_values(x.entries().map(|(i, j, _)| ab[[i, j]]).collect())
            .unwrap();
        let fit = SplrMatrix::from_residual(&exact, a.view(), b.view(), &exec).unwrap();
        assert!(fit.sparse_values().iter().all(|s| s.abs() < 1e-15));

        // Dense construction of P_Ω(X) + P_Ω^⊥(ABᵀ).
        let star = SplrMatrix::from_residual(&x, a.view(), b.view(), &exec).unwrap();
        let mut reference = ab.clone();
        for (i, j, v) in x.entries() {
            reference[[i, j]] = v;
        }
        assert!(max_abs_diff(&star.to_dense(), &reference) < 1e-14);
        for i in 0..5 {
            for j in 0..4 {
                assert!((star.value(i, j) - reference[[i, j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn splr_multiply_cases() {
        let exec = Exec::serial();
        let x = random_observed(6, 5, 0.5, 4);
        let star =
            SplrMatrix::from_residual(&x, random_dense(6, 3, 5).view(), random_dense(5, 3, 6).view(), &exec).unwrap();
        let w0 = Array2::zeros((5, 2));
        assert!(star.mul_right(w0.view(), &exec).iter().all(|&v| v == 0.0));

        // S = 0, unit-norm right column: X* w = left column.
        let left = array![[1.0], [2.0], [-1.0]];
        let right = array![[0.6], [0.8]];
        let empty = ObservedMatrix::from_triplets(3, 2, Vec::new()).unwrap();
        let unit = SplrMatrix::new(Arc::clone(empty.pattern()), vec![], left.clone(), right.clone()).unwrap();
        let got = unit.mul_right(right.view(), &exec);
        assert!(max_abs_diff(&got, &left) < 1e-15);

        let w = random_dense(5, 2, 7);
        let dense = star.to_dense();
        let expected = dense.dot(&w);
        let got = star.mul_right(w.view(), &exec);
        let scale = expected.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(max_abs_diff(&got, &expected) <= 1e-12 * scale);

        let wl = random_dense(6, 2, 8);
        let expected = dense.t().dot(&wl);
        let got = star.mul_left(wl.view(), &exec);
        assert!(max_abs_diff(&got, &expected) <= 1e-12 * scale.max(1.0));

        let via_transpose = star.transpose().mul_right(wl.view(), &exec);
        assert!(max_abs_diff(&via_transpose, &got) < 1e-14);
    }

    #[test]
    fn multiply_counts_follow_cost_model() {
        let x = random_observed(40, 30, 0.3, 10);
        let (r, k) = (4, 3);
        let exec = Exec::serial();
        let star =
            SplrMatrix::from_residual(&x, random_dense(40, r, 1).view(), random_dense(30, r, 2).view(), &exec).unwrap();
        let before = exec.ops();
        star.mul_right(random_dense(30, k, 3).view(), &exec);
        let counted = (exec.ops() - before) as f64;
        let model = (k * x.nnz() + (40 + 30) * r * k) as f64;
        assert!(counted <= 2.0 * model && counted >= 0.5 * model, "{counted} vs {model}");
    }

    #[test]
    fn parallel_multiply_is_bit_identical() {
        let x = random_observed(300, 170, 0.2, 11);
        let star = SplrMatrix::from_residual(
            &x,
            random_dense(300, 5, 1).view(),
            random_dense(170, 5, 2).view(),
            &Exec::serial(),
        )
        .unwrap();
        let w = random_dense(170, 5, 3);
        let wl = random_dense(300, 5, 4);
        let serial_r = star.mul_right(w.view(), &Exec::serial());
        let serial_l = star.mul_left(wl.view(), &Exec::serial());
        for threads in [1, 2, 3, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let (pr, pl) = pool.install(|| {
                let exec = Exec::parallel();
                (star.mul_right(w.view(), &exec), star.mul_left(wl.view(), &exec))
            });
            assert_eq!(pr, serial_r);
            assert_eq!(pl, serial_l);
        }
    }

    #[test]
    fn transpose_roundtrip() {
        let x = random_observed(9, 7, 0.5, 12);
        assert_eq!(x.transpose().transpose(), x);
        assert_eq!(x.transpose().to_dense(), x.to_dense().t());
    }

    #[test]
    fn factor_pair_validation() {
        let u = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        let v = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(FactorPair::new(u.clone(), array![2.0, 1.0], v.clone()).is_ok());
        assert!(FactorPair::new(u.clone(), array![1.0, 2.0], v.clone()).is_err());
        assert!(FactorPair::new(u.clone(), array![1.0, -1.0], v.clone()).is_err());
        assert!(FactorPair::new(u * 2.0, array![2.0, 1.0], v).is_err());
        let z = FactorPair::zero(3, 4);
        assert_eq!(z.rank(), 0);
        assert_eq!(z.to_dense(), Array2::<f64>::zeros((3, 4)));
    }

    #[test]
    fn splr_norm_matches_dense() {
        let x = random_observed(8, 6, 0.5, 13);
        let star = SplrMatrix::from_residual(
            &x,
            random_dense(8, 2, 1).view(),
            random_dense(6, 2, 2).view(),
            &Exec::serial(),
        )
        .unwrap();
        let dense = star.to_dense();
        let expected: f64 = dense.iter().map(|v| v * v).sum();
        assert!((star.frobenius_norm_sq() - expected).abs() < 1e-12 * expected);
    }
}
