//! Dense real linear algebra for the small matrices that appear in minor
//! moment computations: submatrix extraction, determinants, SPD inversion,
//! Schur complements, traces of compound matrices and falling factorials.
//!
//! Everything here is sized for dimensions in the tens at most. Storage is
//! row-major `Vec<f64>`.

use std::fmt;
use std::ops::Index;

use crate::error::{invalid, Error, Result};

/// Relative symmetry tolerance applied when building a [`CovarianceMatrix`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Above this dimension [`compound_trace`] switches from summing principal
/// minors to characteristic-polynomial coefficients.
const BRUTE_FORCE_COMPOUND_MAX_DIM: usize = 8;

/// Dense row-major real matrix. Square matrices (including the 0×0 one)
/// are the common case; submatrix extraction can produce rectangular ones.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "entry ({}, {}) is not finite",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of rows of equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for (i, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.len() != n_cols {
                return Err(invalid(format!(
                    "row {i} has {} entries, expected {n_cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(n_rows, n_cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut data = vec![0.0; n * n];
        for (i, &d) in diag.iter().enumerate() {
            data[i * n + i] = d;
        }
        Self::new(n, n, data)
    }

    /// The 0×0 matrix.
    pub fn empty() -> Self {
        Self::zeros(0, 0)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self[(i, j)];
            }
        }
        t
    }

    /// Matrix product `self * rhs`.
    ///
    /// Panics if the inner dimensions disagree.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, rhs.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    out.data[i * rhs.cols + j] += a * rhs[(l, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Largest absolute entry, 0 for the empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// `(A + Aᵀ) / 2`. Panics on non-square input.
    pub fn symmetrized(&self) -> Matrix {
        assert!(self.is_square(), "symmetrize requires a square matrix");
        let n = self.rows;
        let mut out = self.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                out.data[i * n + j] = avg;
                out.data[j * n + i] = avg;
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix{}x{} ", self.rows, self.cols)?;
        f.debug_list().entries(self.to_rows()).finish()
    }
}

/// Strictly increasing set of 0-based indices into an ambient `[0, dim)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IndexSet {
    indices: Vec<usize>,
    dim: usize,
}

impl IndexSet {
    /// Sorts `indices`; duplicates and out-of-range entries are rejected.
    pub fn new(mut indices: Vec<usize>, dim: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(invalid(format!("duplicate index {}", w[0])));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim) {
            return Err(invalid(format!(
                "index {bad} out of range for dimension {dim}"
            )));
        }
        Ok(Self { indices, dim })
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            indices: Vec::new(),
            dim,
        }
    }

    /// `{0, 1, …, dim − 1}`.
    pub fn full(dim: usize) -> Self {
        Self {
            indices: (0..dim).collect(),
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn intersection(&self, other: &IndexSet) -> IndexSet {
        IndexSet {
            indices: self.iter().filter(|&i| other.contains(i)).collect(),
            dim: self.dim,
        }
    }

    pub fn difference(&self, other: &IndexSet) -> IndexSet {
        IndexSet {
            indices: self.iter().filter(|&i| !other.contains(i)).collect(),
            dim: self.dim,
        }
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut indices: Vec<usize> = self.iter().chain(other.iter()).collect();
        indices.sort_unstable();
        indices.dedup();
        IndexSet {
            indices,
            dim: self.dim.max(other.dim),
        }
    }

    /// `[0, dim) ∖ self`.
    pub fn complement(&self) -> IndexSet {
        IndexSet {
            indices: (0..self.dim).filter(|&i| !self.contains(i)).collect(),
            dim: self.dim,
        }
    }

    /// Maps every index through `table` (old index → new position), e.g. the
    /// table returned by [`schur_complement`]. Fails if an index has no image.
    pub fn reindex(&self, table: &[Option<usize>], new_dim: usize) -> Result<IndexSet> {
        let mapped = self
            .iter()
            .map(|i| {
                table
                    .get(i)
                    .copied()
                    .flatten()
                    .ok_or_else(|| invalid(format!("index {i} has no image under reindexing")))
            })
            .collect::<Result<Vec<_>>>()?;
        IndexSet::new(mapped, new_dim)
    }
}

/// Symmetric positive-definite matrix.
///
/// Construction symmetrizes the input and verifies positive definiteness
/// with a Cholesky factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix(Matrix);

impl CovarianceMatrix {
    /// Validates with the default [`SYMMETRY_TOLERANCE`].
    pub fn new(matrix: Matrix) -> Result<Self> {
        Self::with_symmetry_tolerance(matrix, SYMMETRY_TOLERANCE)
    }

    /// Validates symmetry relative to the largest absolute entry, then
    /// symmetrizes and checks positive definiteness.
    pub fn with_symmetry_tolerance(matrix: Matrix, tolerance: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid(format!(
                "covariance matrix must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if matrix.rows() == 0 {
            return Err(invalid("covariance matrix must have dimension >= 1"));
        }
        let n = matrix.rows();
        let bound = tolerance * matrix.max_abs();
        for i in 0..n {
            for j in (i + 1)..n {
                let deviation = (matrix[(i, j)] - matrix[(j, i)]).abs();
                if deviation > bound {
                    return Err(Error::Asymmetric {
                        row: i,
                        col: j,
                        deviation,
                    });
                }
            }
        }
        let sym = matrix.symmetrized();
        cholesky(&sym)?;
        Ok(Self(sym))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Matrix::identity(dim))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Lower-triangular `L` with `Σ = L·Lᵀ`.
    pub fn cholesky(&self) -> Result<Matrix> {
        cholesky(&self.0)
    }

    /// Principal submatrix on `set`; positive definite whenever `self` is.
    pub fn principal(&self, set: &IndexSet) -> Result<CovarianceMatrix> {
        if set.is_empty() {
            return Err(invalid("principal submatrix of an empty index set"));
        }
        Ok(Self(submatrix(&self.0, set, set)?))
    }

    /// `λ·Σ` for `λ > 0`.
    pub fn scaled(&self, factor: f64) -> Result<CovarianceMatrix> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(invalid(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Self(self.0.scale(factor)))
    }

    /// `P·Σ·Pᵀ` where `P` sends coordinate `i` to `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<CovarianceMatrix> {
        let n = self.dim();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(invalid("not a permutation of the matrix dimension"));
        }
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(perm[i], perm[j], self.get(i, j));
            }
        }
        Ok(Self(out))
    }
}

impl Index<(usize, usize)> for CovarianceMatrix {
    type Output = f64;

    fn index(&self, idx: (usize, usize)) -> &f64 {
        &self.0[idx]
    }
}

/// Entries `M[i, j]` for `i ∈ rows`, `j ∈ cols`, both in ascending order.
pub fn submatrix(m: &Matrix, rows: &IndexSet, cols: &IndexSet) -> Result<Matrix> {
    if let Some(i) = rows.iter().find(|&i| i >= m.rows()) {
        return Err(invalid(format!(
            "row index {i} out of range for a {}-row matrix",
            m.rows()
        )));
    }
    if let Some(j) = cols.iter().find(|&j| j >= m.cols()) {
        return Err(invalid(format!(
            "column index {j} out of range for a {}-column matrix",
            m.cols()
        )));
    }
    let data = rows
        .iter()
        .flat_map(|i| cols.iter().map(move |j| m[(i, j)]))
        .collect();
    Ok(Matrix {
        rows: rows.len(),
        cols: cols.len(),
        data,
    })
}

/// Determinant by LU elimination with partial pivoting. The 0×0 matrix has
/// determinant 1.
///
/// Panics if `m` is not square.
pub fn determinant(m: &Matrix) -> f64 {
    assert!(m.is_square(), "determinant of a {}x{} matrix", m.rows(), m.cols());
    let n = m.rows();
    let mut a = m.data.clone();
    let mut det = 1.0;
    for k in 0..n {
        let (pivot_row, pivot_abs) = (k..n)
            .map(|i| (i, a[i * n + k].abs()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if pivot_abs == 0.0 {
            return 0.0;
        }
        if pivot_row != k {
            for j in 0..n {
                a.swap(k * n + j, pivot_row * n + j);
            }
            det = -det;
        }
        let pivot = a[k * n + k];
        det *= pivot;
        for i in (k + 1)..n {
            let factor = a[i * n + k] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in (k + 1)..n {
                a[i * n + j] -= factor * a[k * n + j];
            }
        }
    }
    det
}

/// Cholesky factor `L` (lower triangular) of a symmetric matrix. Fails with
/// the index of the first non-positive pivot.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    assert!(m.is_square(), "cholesky of a {}x{} matrix", m.rows(), m.cols());
    let n = m.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d.is_nan() || d <= 0.0 {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `L·X = B` for lower-triangular `L`.
fn forward_substitute(l: &Matrix, b: &Matrix) -> Matrix {
    let n = l.rows();
    let mut x = b.clone();
    for col in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, col)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, col)];
            }
            x.set(i, col, s / l[(i, i)]);
        }
    }
    x
}

/// `M⁻¹` through the Cholesky factor, symmetrized.
pub fn inverse_spd(m: &CovarianceMatrix) -> Result<Matrix> {
    let l = m.cholesky()?;
    // M⁻¹ = L⁻ᵀ L⁻¹ = Yᵀ Y with Y = L⁻¹.
    let y = forward_substitute(&l, &Matrix::identity(m.dim()));
    Ok(y.transpose().matmul(&y).symmetrized())
}

/// Schur complement of `Σ_{C×C}` in `Σ`, indexed by `D = [r] ∖ C`.
#[derive(Clone, Debug)]
pub struct SchurComplement {
    /// `Σ_{D×D} − Σ_{D×C} Σ_{C×C}⁻¹ Σ_{C×D}`.
    pub matrix: CovarianceMatrix,
    /// The retained coordinates `D`, ascending.
    pub kept: IndexSet,
    /// Old index → position in `matrix`; `None` for indices in `C`.
    pub remap: Vec<Option<usize>>,
}

pub fn schur_complement(sigma: &CovarianceMatrix, conditioned: &IndexSet) -> Result<SchurComplement> {
    let r = sigma.dim();
    if conditioned.dim() != r {
        return Err(invalid(format!(
            "index set has ambient dimension {}, matrix has {r}",
            conditioned.dim()
        )));
    }
    if conditioned.len() == r {
        return Err(invalid("Schur complement with an empty complement"));
    }
    let kept = conditioned.complement();
    let mut remap = vec![None; r];
    for (pos, old) in kept.iter().enumerate() {
        remap[old] = Some(pos);
    }

    let s = sigma.as_matrix();
    let s_dd = submatrix(s, &kept, &kept)?;
    let matrix = if conditioned.is_empty() {
        s_dd
    } else {
        let l = cholesky(&submatrix(s, conditioned, conditioned)?)?;
        // Σ_DC Σ_CC⁻¹ Σ_CD = Yᵀ Y with L·Y = Σ_CD.
        let y = forward_substitute(&l, &submatrix(s, conditioned, &kept)?);
        let correction = y.transpose().matmul(&y);
        let data = s_dd
            .data
            .iter()
            .zip(&correction.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix::new(kept.len(), kept.len(), data)?
    };
    Ok(SchurComplement {
        matrix: CovarianceMatrix::new(matrix.symmetrized())?,
        kept,
        remap,
    })
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(pos) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[pos] += 1;
        for i in (pos + 1)..k {
            idx[i] = idx[i - 1] + 1;
        }
    }
}

/// Trace of the `k`-th compound matrix of `b`: the sum of its `k×k`
/// principal minors, i.e. the `k`-th elementary symmetric polynomial of the
/// eigenvalues. `k = 0` gives 1.
pub fn compound_trace(b: &Matrix, k: usize) -> Result<f64> {
    if !b.is_square() {
        return Err(invalid(format!(
            "compound trace of a {}x{} matrix",
            b.rows(),
            b.cols()
        )));
    }
    if k > b.rows() {
        return Err(invalid(format!(
            "compound order {k} exceeds matrix dimension {}",
            b.rows()
        )));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if b.rows() <= BRUTE_FORCE_COMPOUND_MAX_DIM {
        Ok(principal_minor_sum(b, k))
    } else {
        Ok(faddeev_leverrier(b, k))
    }
}

pub(crate) fn principal_minor_sum(b: &Matrix, k: usize) -> f64 {
    let mut total = 0.0;
    let mut block = Matrix::zeros(k, k);
    for_each_combination(b.rows(), k, |subset| {
        for (a, &i) in subset.iter().enumerate() {
            for (c, &j) in subset.iter().enumerate() {
                block.set(a, c, b[(i, j)]);
            }
        }
        total += determinant(&block);
    });
    total
}

/// Elementary symmetric polynomial `e_k` of the eigenvalues of `b` from the
/// Faddeev–LeVerrier recursion for the characteristic polynomial.
pub(crate) fn faddeev_leverrier(b: &Matrix, k: usize) -> f64 {
    let n = b.rows();
    let mut m = Matrix::identity(n);
    let mut coeff = 0.0;
    for j in 1..=k {
        let bm = b.matmul(&m);
        coeff = -bm.trace() / j as f64;
        m = bm;
        for i in 0..n {
            m.data[i * n + i] += coeff;
        }
    }
    if k.is_multiple_of(2) {
        coeff
    } else {
        -coeff
    }
}

/// `x·(x − 1)·…·(x − k + 1)`, evaluated as an explicit product so that an
/// integer `x < k` yields exactly 0.
pub fn falling_factorial(x: f64, k: u32) -> f64 {
    (0..k).map(|i| x - f64::from(i)).product()
}

/// `k!` as a float.
pub fn factorial(k: u32) -> f64 {
    falling_factorial(f64::from(k), k)
}
