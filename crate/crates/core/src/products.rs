//! The t-product and M-product algebras.
//!
//! Everything here takes and returns real tensors. [`Transform::product`]
//! dispatches on the transform kind so network code is written once for
//! both algebras.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{
    check_conformable, facewise_into, facewise_product, slice_view, slice_view_mut, Tensor3,
};
use crate::transform::{Spectrum, TProductPath, Transform, TransformKind};

/// Transform-domain magnitude below which a tube is treated as singular.
pub const SINGULAR_TUBE_THRESHOLD: f64 = 1e-12;

/// t-product `A * B` using the direct slice-convolution path.
pub fn t_product(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    t_product_with(a, b, TProductPath::Direct)
}

/// t-product with an explicit evaluation path. Both paths compute
/// `fold(bcirc(A) unfold(B))`.
pub fn t_product_with(a: &Tensor3, b: &Tensor3, path: TProductPath) -> Result<Tensor3> {
    check_conformable("t_product", a, b)?;
    match path {
        TProductPath::Direct => Ok(t_product_direct(a, b)),
        TProductPath::Fourier => Ok(t_product_fourier(a, b, &Transform::circulant(a.n()))),
    }
}

/// `C^(k) = sum_i A^(i) B^((k - i) mod n)`; for each `k` the terms are
/// accumulated in increasing `i`.
fn t_product_direct(a: &Tensor3, b: &Tensor3) -> Tensor3 {
    let (ell, p, n) = a.dims();
    let m = b.m();
    let mut out = Tensor3::zeros(ell, m, n);
    for k in 0..n {
        for i in 0..n {
            let bk = (k + n - i) % n;
            crate::gemm::gemm(
                1.0,
                slice_view(a.as_slice(), ell, p, n, i),
                slice_view(b.as_slice(), p, m, n, bk),
                if i == 0 { 0.0 } else { 1.0 },
                slice_view_mut(out.as_mut_slice(), ell, m, n, k),
            );
        }
    }
    out
}

/// FFT along tubes, complex slice products for bins `0..=n/2`, conjugate
/// symmetry for the rest, inverse FFT.
fn t_product_fourier(a: &Tensor3, b: &Tensor3, t: &Transform) -> Tensor3 {
    let (ell, p, n) = a.dims();
    let m = b.m();
    let sa = t.to_spectrum(a);
    let sb = t.to_spectrum(b);
    let split = |s: &Spectrum| -> (Vec<f64>, Vec<f64>) {
        (
            s.data.iter().map(|z| z.re).collect(),
            s.data.iter().map(|z| z.im).collect(),
        )
    };
    let (ar, ai) = split(&sa);
    let (br, bi) = split(&sb);
    let mut cr = vec![0.0; ell * m * n];
    let mut ci = vec![0.0; ell * m * n];
    for k in 0..=n / 2 {
        let av = |d| slice_view(d, ell, p, n, k);
        let bv = |d| slice_view(d, p, m, n, k);
        // real part: Ar Br - Ai Bi
        crate::gemm::gemm(
            1.0,
            av(&ar),
            bv(&br),
            0.0,
            slice_view_mut(&mut cr, ell, m, n, k),
        );
        crate::gemm::gemm(
            -1.0,
            av(&ai),
            bv(&bi),
            1.0,
            slice_view_mut(&mut cr, ell, m, n, k),
        );
        // imaginary part: Ar Bi + Ai Br
        crate::gemm::gemm(
            1.0,
            av(&ar),
            bv(&bi),
            0.0,
            slice_view_mut(&mut ci, ell, m, n, k),
        );
        crate::gemm::gemm(
            1.0,
            av(&ai),
            bv(&br),
            1.0,
            slice_view_mut(&mut ci, ell, m, n, k),
        );
    }
    let mut sc = Spectrum {
        ell,
        m,
        n,
        data: cr
            .iter()
            .zip(&ci)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect(),
    };
    for tube in sc.data.chunks_mut(n) {
        for k in n / 2 + 1..n {
            tube[k] = tube[n - k].conj();
        }
    }
    t.real_from_spectrum(&sc)
}

/// t-transpose: each frontal slice transposed, slices `2..n` reversed
/// (0-based: output slice `k` is input slice `(n - k) mod n`).
pub fn t_transpose(a: &Tensor3) -> Tensor3 {
    let (ell, m, n) = a.dims();
    let mut out = Tensor3::zeros(m, ell, n);
    for i in 0..ell {
        for j in 0..m {
            let src = a.tube(i, j);
            let dst = out.tube_mut(j, i);
            for k in 0..n {
                dst[k] = src[(n - k) % n];
            }
        }
    }
    out
}

/// Identity for the t-product: first frontal slice `I_m`, the rest zero.
pub fn t_identity(m: usize, n: usize) -> Tensor3 {
    Tensor3::from_fn(m, m, n, |i, j, k| if i == j && k == 0 { 1.0 } else { 0.0 })
}

/// M-product transpose: per-slice transpose, no reordering.
pub fn m_transpose(a: &Tensor3) -> Tensor3 {
    a.facewise_transpose()
}

/// `((A x_3 M) facewise (B x_3 M)) x_3 M^{-1}`. A circulant transform routes
/// to the t-product.
pub fn m_product(a: &Tensor3, b: &Tensor3, t: &Transform) -> Result<Tensor3> {
    t.product(a, b)
}

impl Transform {
    /// The tensor-tensor product selected by this transform.
    pub fn product(&self, a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
        check_conformable("product", a, b)?;
        self.check_len("product", a.n())?;
        match self.kind() {
            TransformKind::Circulant => Ok(match self.path() {
                TProductPath::Direct => t_product_direct(a, b),
                TProductPath::Fourier => t_product_fourier(a, b, self),
            }),
            TransformKind::Identity => facewise_product(a, b),
            TransformKind::Orthogonal => {
                let (ell, p, n) = a.dims();
                let m = b.m();
                let mut ah = vec![0.0; a.len()];
                let mut bh = vec![0.0; b.len()];
                self.forward_real_into(a.as_slice(), &mut ah);
                self.forward_real_into(b.as_slice(), &mut bh);
                let mut ch = vec![0.0; ell * m * n];
                facewise_into(&ah, &bh, ell, p, m, n, 1.0, 0.0, &mut ch);
                let mut out = Tensor3::zeros(ell, m, n);
                self.inverse_real_into(&ch, out.as_mut_slice());
                Ok(out)
            }
        }
    }

    /// The transpose that matches this product: t-transpose for the
    /// circulant kind, per-slice transpose otherwise.
    pub fn transpose(&self, a: &Tensor3) -> Tensor3 {
        match self.kind() {
            TransformKind::Circulant => t_transpose(a),
            _ => m_transpose(a),
        }
    }

    /// Multiplicative identity tube: `e_1` for the t-product, the tube whose
    /// transform is all ones otherwise.
    pub fn identity_tube(&self) -> Vec<f64> {
        match self.kind() {
            TransformKind::Circulant => {
                let mut e = vec![0.0; self.n()];
                e[0] = 1.0;
                e
            }
            TransformKind::Identity => vec![1.0; self.n()],
            TransformKind::Orthogonal => {
                let ones = Tensor3::from_vec((1, 1, self.n()), vec![1.0; self.n()]).unwrap();
                self.inverse_real(&ones).unwrap().into_vec()
            }
        }
    }

    /// `m x m x n` identity: the identity tube on the diagonal.
    pub fn identity_tensor(&self, m: usize) -> Tensor3 {
        let e = self.identity_tube();
        let mut out = Tensor3::zeros(m, m, self.n());
        for i in 0..m {
            out.tube_mut(i, i).copy_from_slice(&e);
        }
        out
    }
}

fn check_tube(op: &'static str, a: &[f64], t: &Transform) -> Result<()> {
    if a.len() != t.n() {
        return Err(Error::mismatch(
            op,
            format!("tube of length {}, transform n = {}", a.len(), t.n()),
        ));
    }
    Ok(())
}

/// Scalar multiplication of the algebra. Circulant: circular convolution
/// `c_k = sum_i a_i b_{(k - i) mod n}`.
pub fn tube_mult(a: &[f64], b: &[f64], t: &Transform) -> Result<Vec<f64>> {
    check_tube("tube_mult", a, t)?;
    check_tube("tube_mult", b, t)?;
    let n = t.n();
    match t.kind() {
        TransformKind::Circulant => Ok((0..n)
            .map(|k| (0..n).map(|i| a[i] * b[(k + n - i) % n]).sum())
            .collect()),
        _ => {
            let ta = Tensor3::from_tube(a)?;
            let tb = Tensor3::from_tube(b)?;
            let ha = t.forward_real(&ta).unwrap();
            let hb = t.forward_real(&tb).unwrap();
            Ok(t.inverse_real(&ha.hadamard(&hb)).unwrap().into_vec())
        }
    }
}

/// Multiplicative inverse of a tube: reciprocal of every transform-domain
/// coefficient.
pub fn tube_inverse(a: &[f64], t: &Transform) -> Result<Vec<f64>> {
    check_tube("tube_inverse", a, t)?;
    let s = t.to_spectrum(&Tensor3::from_tube(a)?);
    for (index, z) in s.data.iter().enumerate() {
        let magnitude = z.norm();
        if magnitude <= SINGULAR_TUBE_THRESHOLD {
            return Err(Error::SingularTube { index, magnitude });
        }
    }
    Ok(t.real_from_spectrum(&s.map(|z| z.inv())).into_vec())
}

/// Applies a scalar function tube-wise: transform along mode 3, apply `phi`
/// to every transform-domain coefficient, transform back.
///
/// For the real kinds `phi` only ever sees values with zero imaginary part.
/// For the circulant kind it sees DFT coefficients; any `phi` that commutes
/// with conjugation (`phi(conj z) = conj phi(z)`, true for real-analytic
/// functions such as `exp`) yields a real result, and the imaginary residue
/// is discarded.
pub fn tubal_apply(
    phi: impl Fn(Complex64) -> Complex64,
    a: &Tensor3,
    t: &Transform,
) -> Result<Tensor3> {
    t.check_len("tubal_apply", a.n())?;
    let s = t.to_spectrum(a);
    Ok(t.real_from_spectrum(&s.map(phi)))
}

/// Tubal exponential.
pub fn tubal_exp(a: &Tensor3, t: &Transform) -> Result<Tensor3> {
    tubal_apply(|z| z.exp(), a, t)
}
