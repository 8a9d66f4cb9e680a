//! Dense third-order tensors and the structural operators around them.
//!
//! A tensor `A` has dimensions `ell x m x n`. Mathematical notation indexes
//! entries `a_{ijk}` from 1; this crate indexes from 0 everywhere, so the
//! one-based entry `a_{ijk}` is `a.get(i - 1, j - 1, k - 1)`, frontal slice
//! `A^(k)` is `a.frontal_slice(k - 1)`, and so on.
//!
//! Storage is tube-contiguous: entry `(i, j, k)` lives at `(i * m + j) * n + k`.
//! Tubes (mode-3 fibers) are therefore contiguous slices, which is what the
//! transform-domain code iterates over. Frontal slices are strided views with
//! row stride `m * n` and column stride `n`.
//!
//! `bcirc`, `bdiag` and `kron` materialize large dense matrices. They exist
//! for verification and diagnostics only and refuse to build anything above
//! [`MATERIALIZATION_CAP`] entries.

use std::fmt;

use crate::error::{Error, Result};
use crate::gemm::{gemm, View, ViewMut};

/// Upper bound on entries for any materialized oracle matrix.
pub const MATERIALIZATION_CAP: usize = 1_000_000;

fn check_cap(rows: usize, cols: usize) -> Result<()> {
    let entries = rows.saturating_mul(cols);
    if entries > MATERIALIZATION_CAP {
        return Err(Error::MaterializationCap {
            entries,
            cap: MATERIALIZATION_CAP,
        });
    }
    Ok(())
}

/// Plain dense row-major matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::mismatch(
                "Matrix::from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows; panics on ragged input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::mismatch(
                "Matrix::matmul",
                format!(
                    "{}x{} times {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            ));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            1.0,
            View::row_major(&self.data, self.rows, self.cols),
            View::row_major(&other.data, other.rows, other.cols),
            0.0,
            ViewMut {
                rows: self.rows,
                cols: other.cols,
                rs: other.cols,
                cs: 1,
                offset: 0,
                data: &mut out.data,
            },
        );
        Ok(out)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec length");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "Matrix::add shape");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.shape(), other.shape(), "Matrix::sub shape");
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "Matrix::max_abs_diff shape");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Copies `block` into this matrix with its top-left corner at `(r0, c0)`.
    pub fn set_block(&mut self, r0: usize, c0: usize, block: &Matrix) {
        for r in 0..block.rows {
            let dst = (r0 + r) * self.cols + c0;
            self.data[dst..dst + block.cols].copy_from_slice(block.row(r));
        }
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |r, c| self.get(r0 + r, c0 + c))
    }
}

/// Dense `ell x m x n` real tensor in tube-contiguous layout.
#[derive(Clone, PartialEq)]
pub struct Tensor3 {
    ell: usize,
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor3 {}x{}x{} ", self.ell, self.m, self.n)?;
        if self.data.len() <= 64 {
            write!(f, "{:?}", self.data)
        } else {
            write!(f, "[{} values]", self.data.len())
        }
    }
}

impl Tensor3 {
    /// Zero tensor. Panics if any dimension is 0; use [`Tensor3::from_vec`]
    /// for fallible construction.
    pub fn zeros(ell: usize, m: usize, n: usize) -> Self {
        assert!(ell > 0 && m > 0 && n > 0, "Tensor3 dims must be >= 1");
        Tensor3 {
            ell,
            m,
            n,
            data: vec![0.0; ell * m * n],
        }
    }

    pub fn from_vec(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        let (ell, m, n) = dims;
        if ell == 0 || m == 0 || n == 0 {
            return Err(Error::InvalidDims(dims));
        }
        if data.len() != ell * m * n {
            return Err(Error::mismatch(
                "Tensor3::from_vec",
                format!("{} values for dims {dims:?}", data.len()),
            ));
        }
        Ok(Tensor3 { ell, m, n, data })
    }

    pub fn from_fn(
        ell: usize,
        m: usize,
        n: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Tensor3::zeros(ell, m, n);
        for i in 0..ell {
            for j in 0..m {
                for k in 0..n {
                    t.data[(i * m + j) * n + k] = f(i, j, k);
                }
            }
        }
        t
    }

    /// `ell x m x n` tensor whose frontal slices are the given matrices.
    pub fn from_frontal_slices(slices: &[Matrix]) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::mismatch("from_frontal_slices", "no slices"))?;
        let (ell, m) = first.shape();
        if slices.iter().any(|s| s.shape() != (ell, m)) {
            return Err(Error::mismatch(
                "from_frontal_slices",
                "slices have different shapes",
            ));
        }
        let n = slices.len();
        if ell == 0 || m == 0 {
            return Err(Error::InvalidDims((ell, m, n)));
        }
        Ok(Tensor3::from_fn(ell, m, n, |i, j, k| slices[k].get(i, j)))
    }

    /// `1 x 1 x n` tensor holding a single tube.
    pub fn from_tube(tube: &[f64]) -> Result<Self> {
        Tensor3::from_vec((1, 1, tube.len()), tube.to_vec())
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.ell, self.m, self.n)
    }

    #[inline]
    pub fn ell(&self) -> usize {
        self.ell
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.ell && j < self.m && k < self.n);
        (i * self.m + j) * self.n + k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let at = self.idx(i, j, k);
        self.data[at] = v;
    }

    /// Tube `(i, j)`: the length-`n` mode-3 fiber.
    #[inline]
    pub fn tube(&self, i: usize, j: usize) -> &[f64] {
        let start = (i * self.m + j) * self.n;
        &self.data[start..start + self.n]
    }

    #[inline]
    pub fn tube_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let start = (i * self.m + j) * self.n;
        &mut self.data[start..start + self.n]
    }

    /// Iterates over all tubes in `(i, j)` row-major order.
    pub fn tubes(&self) -> std::slice::Chunks<'_, f64> {
        self.data.chunks(self.n)
    }

    pub fn tubes_mut(&mut self) -> std::slice::ChunksMut<'_, f64> {
        self.data.chunks_mut(self.n)
    }

    /// Frontal slice `k` as an `ell x m` matrix.
    pub fn frontal_slice(&self, k: usize) -> Matrix {
        assert!(k < self.n, "frontal slice index out of range");
        Matrix::from_fn(self.ell, self.m, |i, j| self.get(i, j, k))
    }

    /// Lateral slice `j` as an `ell x n` matrix (one data sample).
    pub fn lateral_slice(&self, j: usize) -> Matrix {
        assert!(j < self.m, "lateral slice index out of range");
        Matrix::from_fn(self.ell, self.n, |i, k| self.get(i, j, k))
    }

    pub fn set_lateral_slice(&mut self, j: usize, slice: &Matrix) {
        assert_eq!(slice.shape(), (self.ell, self.n), "lateral slice shape");
        for i in 0..self.ell {
            self.tube_mut(i, j).copy_from_slice(slice.row(i));
        }
    }

    /// New tensor made of the lateral slices `indices`, in that order.
    pub fn select_lateral(&self, indices: &[usize]) -> Tensor3 {
        assert!(!indices.is_empty(), "select_lateral: empty selection");
        let mut out = Tensor3::zeros(self.ell, indices.len(), self.n);
        for i in 0..self.ell {
            for (dst, &src) in indices.iter().enumerate() {
                out.tube_mut(i, dst).copy_from_slice(self.tube(i, src));
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor3 {
        Tensor3 {
            ell: self.ell,
            m: self.m,
            n: self.n,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor3, f: impl Fn(f64, f64) -> f64) -> Tensor3 {
        assert_eq!(self.dims(), other.dims(), "zip_map dims");
        Tensor3 {
            ell: self.ell,
            m: self.m,
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Tensor3) -> Tensor3 {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor3) -> Tensor3 {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor3) -> Tensor3 {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Tensor3 {
        self.map(|v| v * s)
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Tensor3) {
        assert_eq!(self.dims(), other.dims(), "axpy dims");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Tensor3) -> f64 {
        assert_eq!(self.dims(), other.dims(), "max_abs_diff dims");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum over lateral slices (mode 2): `ell x m x n -> ell x 1 x n`.
    pub fn sum_lateral(&self) -> Tensor3 {
        let mut out = Tensor3::zeros(self.ell, 1, self.n);
        for i in 0..self.ell {
            let acc = out.tube_mut(i, 0);
            for j in 0..self.m {
                let start = (i * self.m + j) * self.n;
                for (a, v) in acc.iter_mut().zip(&self.data[start..start + self.n]) {
                    *a += v;
                }
            }
        }
        out
    }

    /// Sum along mode 3: `ell x m x n -> ell x m` matrix of tube sums.
    pub fn sum_tubes(&self) -> Matrix {
        Matrix::from_fn(self.ell, self.m, |i, j| self.tube(i, j).iter().sum())
    }

    /// Adds an `ell x 1 x n` tensor to every lateral slice in place.
    pub fn add_lateral_broadcast(&mut self, bias: &Tensor3) -> Result<()> {
        if bias.dims() != (self.ell, 1, self.n) {
            return Err(Error::mismatch(
                "add_lateral_broadcast",
                format!("bias {:?} for tensor {:?}", bias.dims(), self.dims()),
            ));
        }
        for i in 0..self.ell {
            let b = bias.tube(i, 0).to_vec();
            for j in 0..self.m {
                for (v, bv) in self.tube_mut(i, j).iter_mut().zip(&b) {
                    *v += bv;
                }
            }
        }
        Ok(())
    }

    /// Per-frontal-slice transpose (`ell x m x n -> m x ell x n`), no slice
    /// reordering.
    pub fn facewise_transpose(&self) -> Tensor3 {
        let mut out = Tensor3::zeros(self.m, self.ell, self.n);
        for i in 0..self.ell {
            for j in 0..self.m {
                out.tube_mut(j, i).copy_from_slice(self.tube(i, j));
            }
        }
        out
    }
}

/// Stacks the frontal slices vertically: `(ell * n) x m`, `A^(1)` on top.
pub fn unfold(a: &Tensor3) -> Matrix {
    let (ell, m, n) = a.dims();
    Matrix::from_fn(ell * n, m, |r, c| a.get(r % ell, c, r / ell))
}

/// Inverse of [`unfold`].
pub fn fold(u: &Matrix, dims: (usize, usize, usize)) -> Result<Tensor3> {
    let (ell, m, n) = dims;
    if ell == 0 || m == 0 || n == 0 {
        return Err(Error::InvalidDims(dims));
    }
    if u.shape() != (ell * n, m) {
        return Err(Error::mismatch(
            "fold",
            format!("{:?} matrix for dims {dims:?}", u.shape()),
        ));
    }
    Ok(Tensor3::from_fn(ell, m, n, |i, j, k| u.get(k * ell + i, j)))
}

/// Block-circulant matrix of the frontal slices, `(ell * n) x (m * n)`.
/// Block `(r, c)` is `A^((r - c) mod n)` (0-based slice index).
pub fn bcirc(a: &Tensor3) -> Result<Matrix> {
    let (ell, m, n) = a.dims();
    check_cap(ell * n, m * n)?;
    Ok(Matrix::from_fn(ell * n, m * n, |r, c| {
        let (br, bc) = (r / ell, c / m);
        a.get(r % ell, c % m, (br + n - bc) % n)
    }))
}

/// `n x n` circulant matrix whose first column is `tube`.
pub fn circ(tube: &[f64]) -> Matrix {
    let n = tube.len();
    Matrix::from_fn(n, n, |r, c| tube[(r + n - c) % n])
}

/// Mode-3 unfolding: `n x (ell * m)` matrix whose columns are the tubes.
///
/// Column ordering is `j`-major then `i`: tube `(i, j)` is column
/// `j * ell + i`.
pub fn unfold3(a: &Tensor3) -> Matrix {
    let (ell, m, n) = a.dims();
    Matrix::from_fn(n, ell * m, |k, col| a.get(col % ell, col / ell, k))
}

/// Inverse of [`unfold3`].
pub fn fold3(u: &Matrix, dims: (usize, usize, usize)) -> Result<Tensor3> {
    let (ell, m, n) = dims;
    if ell == 0 || m == 0 || n == 0 {
        return Err(Error::InvalidDims(dims));
    }
    if u.shape() != (n, ell * m) {
        return Err(Error::mismatch(
            "fold3",
            format!("{:?} matrix for dims {dims:?}", u.shape()),
        ));
    }
    Ok(Tensor3::from_fn(ell, m, n, |i, j, k| u.get(k, j * ell + i)))
}

/// `A x_3 M`: every tube `t` of `A` replaced by `M t`.
pub fn mode3_product(a: &Tensor3, mat: &Matrix) -> Result<Tensor3> {
    let (ell, m, n) = a.dims();
    if mat.shape() != (n, n) {
        return Err(Error::mismatch(
            "mode3_product",
            format!("{:?} matrix for tubes of length {n}", mat.shape()),
        ));
    }
    let mut out = Tensor3::zeros(ell, m, n);
    mode3_into(a.as_slice(), ell * m, n, mat, out.as_mut_slice());
    Ok(out)
}

/// Applies `mat` to each of `tubes` contiguous length-`n` tubes of `src`,
/// writing into `dst`. Computed as one `(tubes x n) * mat^T` product.
pub(crate) fn mode3_into(src: &[f64], tubes: usize, n: usize, mat: &Matrix, dst: &mut [f64]) {
    gemm(
        1.0,
        View::row_major(src, tubes, n),
        View::row_major(mat.as_slice(), n, n).t(),
        0.0,
        ViewMut {
            rows: tubes,
            cols: n,
            rs: n,
            cs: 1,
            offset: 0,
            data: dst,
        },
    );
}

/// Frontal slice `k` of a tube-contiguous buffer with dims `(rows, cols, n)`.
pub(crate) fn slice_view(data: &[f64], rows: usize, cols: usize, n: usize, k: usize) -> View<'_> {
    View {
        data,
        offset: k,
        rows,
        cols,
        rs: cols * n,
        cs: n,
    }
}

pub(crate) fn slice_view_mut(
    data: &mut [f64],
    rows: usize,
    cols: usize,
    n: usize,
    k: usize,
) -> ViewMut<'_> {
    ViewMut {
        data,
        offset: k,
        rows,
        cols,
        rs: cols * n,
        cs: n,
    }
}

pub(crate) fn check_conformable(op: &'static str, a: &Tensor3, b: &Tensor3) -> Result<()> {
    let (_, p, n) = a.dims();
    let (p2, _, n2) = b.dims();
    if p != p2 || n != n2 {
        return Err(Error::mismatch(
            op,
            format!("{:?} with {:?}", a.dims(), b.dims()),
        ));
    }
    Ok(())
}

/// `C^(k) = A^(k) B^(k)` for every frontal slice.
pub fn facewise_product(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    check_conformable("facewise_product", a, b)?;
    let (ell, p, n) = a.dims();
    let m = b.m();
    let mut out = Tensor3::zeros(ell, m, n);
    facewise_into(
        a.as_slice(),
        b.as_slice(),
        ell,
        p,
        m,
        n,
        1.0,
        0.0,
        out.as_mut_slice(),
    );
    Ok(out)
}

/// `c^(k) = alpha * a^(k) b^(k) + beta * c^(k)` over raw tube-contiguous buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn facewise_into(
    a: &[f64],
    b: &[f64],
    ell: usize,
    p: usize,
    m: usize,
    n: usize,
    alpha: f64,
    beta: f64,
    c: &mut [f64],
) {
    for k in 0..n {
        gemm(
            alpha,
            slice_view(a, ell, p, n, k),
            slice_view(b, p, m, n, k),
            beta,
            slice_view_mut(c, ell, m, n, k),
        );
    }
}

/// Block-diagonal matrix of the frontal slices (oracle for the facewise product).
pub fn bdiag(a: &Tensor3) -> Result<Matrix> {
    let (ell, m, n) = a.dims();
    check_cap(ell * n, m * n)?;
    let mut out = Matrix::zeros(ell * n, m * n);
    for k in 0..n {
        out.set_block(k * ell, k * m, &a.frontal_slice(k));
    }
    Ok(out)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    check_cap(ar * br, ac * bc)?;
    Ok(Matrix::from_fn(ar * br, ac * bc, |r, c| {
        a.get(r / br, c / bc) * b.get(r % br, c % bc)
    }))
}
