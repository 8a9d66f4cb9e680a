//! Offline eigenvalue diagnostics for the stability requirement.
//!
//! The operators are materialized densely and handed to a general real
//! eigensolver (Hessenberg reduction plus shifted QR, via `nalgebra`), so
//! everything here is guarded by [`MATERIALIZATION_CAP`].

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{bcirc, unfold, Matrix, Tensor3, MATERIALIZATION_CAP};
use crate::transform::{Transform, TransformKind};

/// Eigenvalues of a materialized operator.
#[derive(Debug, Clone)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex64>,
}

impl SpectrumReport {
    /// Largest real part, `-inf` for an empty spectrum.
    pub fn max_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `|Re(lambda)|`.
    pub fn max_abs_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|z| z.re.abs())
            .fold(0.0, f64::max)
    }
}

fn check_cap(rows: usize, cols: usize) -> Result<()> {
    let entries = rows * cols;
    if entries > MATERIALIZATION_CAP {
        return Err(Error::MaterializationCap {
            entries,
            cap: MATERIALIZATION_CAP,
        });
    }
    Ok(())
}

/// Eigenvalues of a square dense matrix.
pub fn eigenvalues(a: &Matrix) -> Result<SpectrumReport> {
    let (r, c) = a.shape();
    if r != c {
        return Err(Error::mismatch(
            "eigenvalues",
            format!("{r}x{c} matrix is not square"),
        ));
    }
    check_cap(r, c)?;
    let m = DMatrix::from_row_slice(r, c, a.as_slice());
    let eigenvalues = m
        .complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect();
    Ok(SpectrumReport { eigenvalues })
}

fn check_square(op: &'static str, w: &Tensor3) -> Result<()> {
    if w.ell() != w.m() {
        return Err(Error::mismatch(
            op,
            format!(
                "weight {:?} is not square in its first two dimensions",
                w.dims()
            ),
        ));
    }
    Ok(())
}

/// Eigenvalues of `bcirc(W)`.
pub fn bcirc_spectrum(w: &Tensor3) -> Result<SpectrumReport> {
    check_square("bcirc_spectrum", w)?;
    eigenvalues(&bcirc(w)?)
}

/// The matrix of `X -> W * X` acting on `unfold(X)` for lateral slices `X`
/// of size `m x 1 x n`. For the circulant kind this is `bcirc(W)`; for the
/// other kinds it plays the same role for the M-product.
pub fn operator_matrix(w: &Tensor3, t: &Transform) -> Result<Matrix> {
    let (ell, m, n) = w.dims();
    t.check_len("operator_matrix", n)?;
    check_cap(ell * n, m * n)?;
    if t.kind() == TransformKind::Circulant {
        return bcirc(w);
    }
    let mut out = Matrix::zeros(ell * n, m * n);
    // column index of unfold(X) for entry (i, 0, k) is k * m + i
    for k in 0..n {
        for i in 0..m {
            let mut e = Tensor3::zeros(m, 1, n);
            e.set(i, 0, k, 1.0);
            let col = unfold(&t.product(w, &e)?);
            for r in 0..ell * n {
                out.set(r, k * m + i, col.get(r, 0));
            }
        }
    }
    Ok(out)
}

/// The block system `[[0, K], [-K^T, 0]]` with `K` the operator matrix of
/// `W`: the forward propagation matrix of a leapfrog step.
pub fn antisymmetric_system(w: &Tensor3, t: &Transform) -> Result<Matrix> {
    check_square("antisymmetric_system", w)?;
    let d = w.ell() * w.n();
    check_cap(2 * d, 2 * d)?;
    let k = operator_matrix(w, t)?;
    let mut out = Matrix::zeros(2 * d, 2 * d);
    out.set_block(0, d, &k);
    out.set_block(d, 0, &k.transpose().scale(-1.0));
    Ok(out)
}

/// Eigenvalues of [`antisymmetric_system`].
pub fn antisymmetric_spectrum(w: &Tensor3, t: &Transform) -> Result<SpectrumReport> {
    eigenvalues(&antisymmetric_system(w, t)?)
}

/// Eigenvalues of the operator matrix of `W` under any transform.
pub fn operator_spectrum(w: &Tensor3, t: &Transform) -> Result<SpectrumReport> {
    check_square("operator_spectrum", w)?;
    eigenvalues(&operator_matrix(w, t)?)
}
