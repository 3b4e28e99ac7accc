use crate::error::SolverError;

/// Compressed sparse row matrix with sorted, unique column indices per row.
///
/// Explicit zeros are kept: the pattern of an assembled operator depends only on
/// the mesh connectivity, which lets factorizations reuse symbolic analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-format accumulator; duplicates are summed on conversion.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn build(self) -> SparseMatrix {
        let Self { nrows, ncols, entries } = self;
        // counting sort by row, then sort and merge each row segment
        let mut counts = vec![0usize; nrows + 1];
        for &(r, _, _) in &entries {
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut sorted = vec![(0usize, 0.0f64); entries.len()];
        for &(r, c, v) in &entries {
            sorted[next[r]] = (c, v);
            next[r] += 1;
        }
        drop(entries);
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        row_ptr.push(0);
        for r in 0..nrows {
            let seg = &mut sorted[counts[r]..counts[r + 1]];
            seg.sort_unstable_by_key(|e| e.0);
            let mut last = usize::MAX;
            for &(c, v) in seg.iter() {
                if c == last {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = c;
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix { nrows, ncols, row_ptr, col_idx, values }
    }
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating the invariants.
    pub fn from_csr(
        nrows: usize,
        ncols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, SolverError> {
        if row_ptr.len() != nrows + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len() {
            return Err(SolverError::Dimension("row offsets inconsistent".into()));
        }
        if col_idx.len() != values.len() {
            return Err(SolverError::Dimension("column/value length mismatch".into()));
        }
        for r in 0..nrows {
            if row_ptr[r] > row_ptr[r + 1] {
                return Err(SolverError::Dimension(format!("row offsets decrease at row {r}")));
            }
            let cols = &col_idx[row_ptr[r]..row_ptr[r + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&c| c >= ncols) {
                return Err(SolverError::Dimension(format!("row {r} columns unsorted or out of range")));
            }
        }
        Ok(Self { nrows, ncols, row_ptr, col_idx, values })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, row_ptr: vec![0; nrows + 1], col_idx: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let mut t = TripletBuilder::new(rows.len(), ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    t.push(i, j, v);
                }
            }
        }
        t.build()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                d[r][self.col_idx[k]] += self.values[k];
            }
        }
        d
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        cols.binary_search(&c).map_or(0.0, |k| vals[k])
    }

    /// Adds `v` to an entry that must already be in the pattern.
    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: f64) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        let k = self.col_idx[span.clone()]
            .binary_search(&c)
            .unwrap_or_else(|_| panic!("entry ({r}, {c}) not in pattern"));
        self.values[span.start + k] += v;
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.row_ptr == other.row_ptr
            && self.col_idx == other.col_idx
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols, "matvec dimension");
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(self.matvec(y)).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.col_idx {
            counts[c + 1] += 1;
        }
        for i in 0..self.ncols {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                col_idx[next[c]] = r;
                values[next[c]] = self.values[k];
                next[c] += 1;
            }
        }
        Self { nrows: self.ncols, ncols: self.nrows, row_ptr: counts, col_idx, values }
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// `α·self + β·other` on the union pattern.
    pub fn add_scaled(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        assert!(self.nrows == other.nrows && self.ncols == other.ncols, "add dimension");
        let mut row_ptr = Vec::with_capacity(self.nrows + 1);
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(col_idx.capacity());
        row_ptr.push(0);
        for r in 0..self.nrows {
            let (ca, va) = self.row(r);
            let (cb, vb) = other.row(r);
            let (mut i, mut j) = (0, 0);
            while i < ca.len() || j < cb.len() {
                let take_a = j >= cb.len() || (i < ca.len() && ca[i] <= cb[j]);
                let take_b = i >= ca.len() || (j < cb.len() && cb[j] <= ca[i]);
                let (c, v) = match (take_a, take_b) {
                    (true, true) => {
                        let out = (ca[i], alpha * va[i] + beta * vb[j]);
                        i += 1;
                        j += 1;
                        out
                    }
                    (true, false) => {
                        i += 1;
                        (ca[i - 1], alpha * va[i - 1])
                    }
                    _ => {
                        j += 1;
                        (cb[j - 1], beta * vb[j - 1])
                    }
                };
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Self { nrows: self.nrows, ncols: self.ncols, row_ptr, col_idx, values }
    }

    /// Assembles a block matrix. `blocks[i][j]` is an optional scaled block; all
    /// blocks in a block row share their row count, all in a block column their
    /// column count. Empty block rows/columns need an explicit size.
    pub fn from_blocks(row_sizes: &[usize], col_sizes: &[usize], blocks: &[Vec<Option<(&Self, f64)>>]) -> Self {
        assert_eq!(blocks.len(), row_sizes.len());
        let col_off: Vec<usize> = std::iter::once(0)
            .chain(col_sizes.iter().scan(0, |s, &n| {
                *s += n;
                Some(*s)
            }))
            .collect();
        let nrows: usize = row_sizes.iter().sum();
        let ncols = col_off[col_sizes.len()];
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (bi, brow) in blocks.iter().enumerate() {
            assert_eq!(brow.len(), col_sizes.len());
            for (bj, b) in brow.iter().enumerate() {
                if let Some((m, _)) = b {
                    assert_eq!(m.nrows, row_sizes[bi], "block ({bi},{bj}) rows");
                    assert_eq!(m.ncols, col_sizes[bj], "block ({bi},{bj}) cols");
                }
            }
            for r in 0..row_sizes[bi] {
                for (bj, b) in brow.iter().enumerate() {
                    if let Some((m, s)) = b {
                        let (cols, vals) = m.row(r);
                        col_idx.extend(cols.iter().map(|c| c + col_off[bj]));
                        values.extend(vals.iter().map(|v| v * s));
                    }
                }
                row_ptr.push(col_idx.len());
            }
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Symmetric elimination of the listed unknowns: zero row and column, unit diagonal.
    /// The diagonal entry must exist in the pattern.
    pub fn eliminate_symmetric(&mut self, fixed: &[bool]) {
        assert_eq!(fixed.len(), self.nrows);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                if fixed[r] || fixed[c] {
                    self.values[k] = if r == c { 1.0 } else { 0.0 };
                }
            }
        }
    }

    /// Zeroes the listed rows and columns (no unit diagonal). `row_fixed`/`col_fixed` may differ for rectangular blocks.
    pub fn zero_rows_cols(&mut self, row_fixed: Option<&[bool]>, col_fixed: Option<&[bool]>) {
        for r in 0..self.nrows {
            let row_out = row_fixed.is_some_and(|f| f[r]);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if row_out || col_fixed.is_some_and(|f| f[self.col_idx[k]]) {
                    self.values[k] = 0.0;
                }
            }
        }
    }
}

pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
