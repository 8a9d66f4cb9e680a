//! Central finite differences for checking hand-written gradients.

use crate::tensor::Tensor3;

/// Default finite-difference step.
pub const STEP: f64 = 1e-6;

/// `(f(x + s e_i) - f(x - s e_i)) / 2s` for every entry `i` of `x`.
pub fn numeric_gradient(x: &Tensor3, step: f64, mut f: impl FnMut(&Tensor3) -> f64) -> Tensor3 {
    let mut probe = x.clone();
    let mut out = x.clone();
    for i in 0..x.len() {
        let orig = x.as_slice()[i];
        probe.as_mut_slice()[i] = orig + step;
        let up = f(&probe);
        probe.as_mut_slice()[i] = orig - step;
        let down = f(&probe);
        probe.as_mut_slice()[i] = orig;
        out.as_mut_slice()[i] = (up - down) / (2.0 * step);
    }
    out
}

/// `||a - b||_F / max(||a||_F, ||b||_F)`, or 0 when both are zero.
pub fn relative_error(a: &Tensor3, b: &Tensor3) -> f64 {
    let scale = a.frobenius_norm().max(b.frobenius_norm());
    if scale == 0.0 {
        return 0.0;
    }
    a.sub(b).frobenius_norm() / scale
}
