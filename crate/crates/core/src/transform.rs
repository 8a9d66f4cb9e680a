//! The transform that selects a tensor-tensor product.
//!
//! * `Circulant` is the t-product: circulant convolution along mode 3. Its
//!   transform domain is the (unnormalized) DFT of each tube, i.e. the
//!   eigenvalues of `circ(tube)`.
//! * `Orthogonal` is the M-product for a real orthogonal `M` (default: the
//!   orthonormal DCT-II). The transform domain is `A x_3 M`.
//! * `Identity` is the facewise product.
//!
//! Transform-domain values are complex only for `Circulant`, and they never
//! leave this crate: every public operation takes and returns real tensors.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::{mode3_into, mode3_product, Matrix, Tensor3};

/// Maximum `|M M^T - I|` accepted for an orthogonal transform.
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Circulant,
    Orthogonal,
    Identity,
}

/// How the t-product (circulant kind) is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TProductPath {
    /// Real-arithmetic slice convolution,
    /// `C^(k) = sum_i A^(i) B^((k - i) mod n)`.
    #[default]
    Direct,
    /// FFT along mode 3, independent complex slice products, inverse FFT.
    Fourier,
}

#[derive(Clone)]
struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

#[derive(Clone)]
enum Kind {
    Circulant(FftPair),
    Orthogonal { m: Matrix, m_t: Matrix },
    Identity,
}

/// Invertible mode-3 transform `M` together with its inverse.
#[derive(Clone)]
pub struct Transform {
    n: usize,
    kind: Kind,
    path: TProductPath,
}

impl fmt::Debug for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transform")
            .field("kind", &self.kind())
            .field("n", &self.n)
            .field("path", &self.path)
            .finish()
    }
}

impl PartialEq for Transform {
    fn eq(&self, other: &Self) -> bool {
        if self.n != other.n || self.kind() != other.kind() {
            return false;
        }
        match (&self.kind, &other.kind) {
            (Kind::Orthogonal { m: a, .. }, Kind::Orthogonal { m: b, .. }) => a == b,
            _ => true,
        }
    }
}

/// Orthonormal DCT-II matrix: `M[k][j] = c_k cos(pi (2j + 1) k / 2n)`.
pub fn dct_matrix(n: usize) -> Matrix {
    let nf = n as f64;
    Matrix::from_fn(n, n, |k, j| {
        let scale = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        scale * (PI * (2 * j + 1) as f64 * k as f64 / (2.0 * nf)).cos()
    })
}

impl Transform {
    pub fn circulant(n: usize) -> Self {
        assert!(n > 0, "transform length must be >= 1");
        let mut planner = FftPlanner::new();
        Transform {
            n,
            kind: Kind::Circulant(FftPair {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            }),
            path: TProductPath::Direct,
        }
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "transform length must be >= 1");
        Transform {
            n,
            kind: Kind::Identity,
            path: TProductPath::Direct,
        }
    }

    /// M-product with the orthonormal DCT-II.
    pub fn dct(n: usize) -> Self {
        assert!(n > 0, "transform length must be >= 1");
        Self::orthogonal(dct_matrix(n)).expect("DCT-II matrix is orthogonal")
    }

    /// M-product with an arbitrary real orthogonal matrix.
    pub fn orthogonal(m: Matrix) -> Result<Self> {
        let (r, c) = m.shape();
        if r != c || r == 0 {
            return Err(Error::mismatch(
                "Transform::orthogonal",
                format!("{r}x{c} is not a non-empty square matrix"),
            ));
        }
        let m_t = m.transpose();
        let residual = m.matmul(&m_t)?.max_abs_diff(&Matrix::identity(r));
        if residual > ORTHOGONALITY_TOLERANCE {
            return Err(Error::NotOrthogonal { residual });
        }
        Ok(Transform {
            n: r,
            kind: Kind::Orthogonal { m, m_t },
            path: TProductPath::Direct,
        })
    }

    pub fn with_path(mut self, path: TProductPath) -> Self {
        self.path = path;
        self
    }

    pub fn kind(&self) -> TransformKind {
        match self.kind {
            Kind::Circulant(_) => TransformKind::Circulant,
            Kind::Orthogonal { .. } => TransformKind::Orthogonal,
            Kind::Identity => TransformKind::Identity,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn path(&self) -> TProductPath {
        self.path
    }

    /// The orthogonal matrix `M`, if this is an M-product transform.
    pub fn matrix(&self) -> Option<&Matrix> {
        match &self.kind {
            Kind::Orthogonal { m, .. } => Some(m),
            _ => None,
        }
    }

    pub(crate) fn check_len(&self, op: &'static str, n: usize) -> Result<()> {
        if n != self.n {
            return Err(Error::mismatch(
                op,
                format!("tensor has n = {n}, transform has n = {}", self.n),
            ));
        }
        Ok(())
    }

    /// Real-domain forward transform along mode 3 (`A x_3 M`). Only defined
    /// for the real kinds; the circulant kind returns `None`.
    pub(crate) fn forward_real(&self, a: &Tensor3) -> Option<Tensor3> {
        match &self.kind {
            Kind::Orthogonal { m, .. } => Some(mode3_product(a, m).expect("checked n")),
            Kind::Identity => Some(a.clone()),
            Kind::Circulant(_) => None,
        }
    }

    pub(crate) fn inverse_real(&self, a: &Tensor3) -> Option<Tensor3> {
        match &self.kind {
            Kind::Orthogonal { m_t, .. } => Some(mode3_product(a, m_t).expect("checked n")),
            Kind::Identity => Some(a.clone()),
            Kind::Circulant(_) => None,
        }
    }

    /// Applies the forward real transform in place on a raw tube-contiguous buffer.
    pub(crate) fn forward_real_into(&self, src: &[f64], dst: &mut [f64]) {
        match &self.kind {
            Kind::Orthogonal { m, .. } => mode3_into(src, src.len() / self.n, self.n, m, dst),
            Kind::Identity => dst.copy_from_slice(src),
            Kind::Circulant(_) => unreachable!("circulant has no real transform domain"),
        }
    }

    pub(crate) fn inverse_real_into(&self, src: &[f64], dst: &mut [f64]) {
        match &self.kind {
            Kind::Orthogonal { m_t, .. } => mode3_into(src, src.len() / self.n, self.n, m_t, dst),
            Kind::Identity => dst.copy_from_slice(src),
            Kind::Circulant(_) => unreachable!("circulant has no real transform domain"),
        }
    }

    /// Transform-domain representation of `a`.
    pub(crate) fn to_spectrum(&self, a: &Tensor3) -> Spectrum {
        let (ell, m, n) = a.dims();
        let data = match &self.kind {
            Kind::Circulant(fft) => {
                let mut buf: Vec<Complex64> = a
                    .as_slice()
                    .iter()
                    .map(|&v| Complex64::new(v, 0.0))
                    .collect();
                fft.forward.process(&mut buf);
                buf
            }
            _ => {
                let real = self.forward_real(a).expect("real kind");
                real.into_vec()
                    .into_iter()
                    .map(|v| Complex64::new(v, 0.0))
                    .collect()
            }
        };
        Spectrum { ell, m, n, data }
    }

    /// Inverse of [`Transform::to_spectrum`]; discards the (round-off sized)
    /// imaginary part.
    pub(crate) fn real_from_spectrum(&self, s: &Spectrum) -> Tensor3 {
        let dims = (s.ell, s.m, s.n);
        match &self.kind {
            Kind::Circulant(fft) => {
                let mut buf = s.data.clone();
                fft.inverse.process(&mut buf);
                let scale = 1.0 / self.n as f64;
                let real = buf.iter().map(|z| z.re * scale).collect();
                Tensor3::from_vec(dims, real).expect("spectrum dims")
            }
            _ => {
                let real =
                    Tensor3::from_vec(dims, s.data.iter().map(|z| z.re).collect()).expect("dims");
                self.inverse_real(&real).expect("real kind")
            }
        }
    }

    /// Adjoint (plain transpose, not conjugate) of the inverse transform,
    /// applied to a real tensor. Used when back-propagating through
    /// `real_from_spectrum`: for the DFT this is `F^{-T} = F^{-1}`, for orthogonal
    /// `M` it is `M`.
    pub(crate) fn spectrum_of_cotangent(&self, g: &Tensor3) -> Spectrum {
        match &self.kind {
            Kind::Circulant(fft) => {
                let (ell, m, n) = g.dims();
                let mut buf: Vec<Complex64> = g
                    .as_slice()
                    .iter()
                    .map(|&v| Complex64::new(v, 0.0))
                    .collect();
                fft.inverse.process(&mut buf);
                let scale = 1.0 / self.n as f64;
                buf.iter_mut().for_each(|z| *z *= scale);
                Spectrum {
                    ell,
                    m,
                    n,
                    data: buf,
                }
            }
            _ => self.to_spectrum(g),
        }
    }

    /// Adjoint of the forward transform: `F^T = F` for the DFT, `M^T` for
    /// orthogonal `M`. The input must be the cotangent of a real tensor's
    /// spectrum so the result is real.
    pub(crate) fn cotangent_from_spectrum(&self, s: &Spectrum) -> Tensor3 {
        match &self.kind {
            Kind::Circulant(fft) => {
                let mut buf = s.data.clone();
                fft.forward.process(&mut buf);
                Tensor3::from_vec((s.ell, s.m, s.n), buf.iter().map(|z| z.re).collect())
                    .expect("spectrum dims")
            }
            _ => self.real_from_spectrum(s),
        }
    }
}

/// Transform-domain tensor: one complex coefficient per entry, same
/// tube-contiguous layout as [`Tensor3`].
#[derive(Clone, Debug)]
pub(crate) struct Spectrum {
    pub ell: usize,
    pub m: usize,
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl Spectrum {
    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> Complex64 {
        self.data[(i * self.m + j) * self.n + k]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize, k: usize) -> &mut Complex64 {
        &mut self.data[(i * self.m + j) * self.n + k]
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Spectrum {
        Spectrum {
            data: self.data.iter().map(|&z| f(z)).collect(),
            ..*self
        }
    }
}
