//! Tubal softmax, tensor cross-entropy, their gradients, the weight
//! smoothness regularizer and SGD with momentum.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};
use crate::transform::{Spectrum, Transform};

/// Probabilities below this are clamped before taking the logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-15;

/// A column whose pre-normalization sum falls below this is rejected.
pub const DEGENERATE_COLUMN_SUM: f64 = 1e-8;

/// Per transform-domain slice softmax over the class index. For the
/// circulant kind the entries are complex; the shift by the largest real
/// part keeps `exp` finite and leaves the result unchanged.
fn spectral_softmax(x: &Spectrum) -> Spectrum {
    let (p, m, n) = (x.ell, x.m, x.n);
    let mut out = x.clone();
    let mut col = vec![Complex64::new(0.0, 0.0); p];
    for j in 0..m {
        for k in 0..n {
            let shift = (0..p)
                .map(|i| x.at(i, j, k).re)
                .fold(f64::NEG_INFINITY, f64::max);
            let mut total = Complex64::new(0.0, 0.0);
            for (i, c) in col.iter_mut().enumerate() {
                *c = (x.at(i, j, k) - shift).exp();
                total += *c;
            }
            for (i, c) in col.iter().enumerate() {
                *out.at_mut(i, j, k) = c / total;
            }
        }
    }
    out
}

/// Tubal softmax: every lateral slice is transformed along mode 3, the
/// classical softmax over the `p` classes is applied in each transform
/// slice independently, and the result is transformed back.
pub fn tubal_softmax_h(x: &Tensor3, t: &Transform) -> Result<Tensor3> {
    t.check_len("tubal_softmax_h", x.n())?;
    Ok(t.real_from_spectrum(&spectral_softmax(&t.to_spectrum(x))))
}

/// Column-stochastic `p x m` matrix with the normalization residual of each
/// column before the safeguard was applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    pub probs: Matrix,
    /// `|sum_i Q_ij - 1|` for the raw column `Q_j`.
    pub residuals: Vec<f64>,
    /// Pre-normalization column sums after clamping negatives.
    pub(crate) sums: Vec<f64>,
    /// Raw tube sums before the safeguard.
    pub(crate) raw: Matrix,
}

impl ProbabilityMatrix {
    pub fn classes(&self) -> usize {
        self.probs.rows()
    }

    pub fn samples(&self) -> usize {
        self.probs.cols()
    }

    pub fn get(&self, class: usize, sample: usize) -> f64 {
        self.probs.get(class, sample)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    /// 1-based predicted class of each sample; ties go to the lowest index.
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.samples())
            .map(|j| {
                let mut best = 0;
                for i in 1..self.classes() {
                    if self.probs.get(i, j) > self.probs.get(best, j) {
                        best = i;
                    }
                }
                best + 1
            })
            .collect()
    }
}

/// Scalar tubal softmax: the tubal softmax followed by a sum along mode 3.
///
/// The safeguard clamps negative entries to zero and renormalizes each
/// column. In the circulant algebra it is a no-op up to round-off; in other
/// algebras the raw column sums can differ from 1 and the residual records
/// by how much.
pub fn scalar_tubal_softmax(x: &Tensor3, t: &Transform) -> Result<ProbabilityMatrix> {
    let raw = tubal_softmax_h(x, t)?.sum_tubes();
    let (p, m) = raw.shape();
    let mut probs = Matrix::zeros(p, m);
    let mut residuals = Vec::with_capacity(m);
    let mut sums = Vec::with_capacity(m);
    for j in 0..m {
        let total: f64 = (0..p).map(|i| raw.get(i, j)).sum();
        residuals.push((total - 1.0).abs());
        let clamped: f64 = (0..p).map(|i| raw.get(i, j).max(0.0)).sum();
        if clamped.is_nan() || clamped < DEGENERATE_COLUMN_SUM {
            return Err(Error::DegenerateColumn {
                column: j,
                sum: clamped,
            });
        }
        for i in 0..p {
            probs.set(i, j, raw.get(i, j).max(0.0) / clamped);
        }
        sums.push(clamped);
    }
    Ok(ProbabilityMatrix {
        probs,
        residuals,
        sums,
        raw,
    })
}

/// Back-propagates a cotangent `dP` on the probabilities of
/// [`scalar_tubal_softmax`] to its input `X`. Differentiates the safeguarded
/// map exactly; clamped entries receive zero gradient.
pub fn scalar_tubal_softmax_backward(
    x: &Tensor3,
    probs: &ProbabilityMatrix,
    dp: &Matrix,
    t: &Transform,
) -> Result<Tensor3> {
    let (p, m, n) = x.dims();
    if dp.shape() != (p, m) || probs.probs.shape() != (p, m) {
        return Err(Error::mismatch(
            "scalar_tubal_softmax_backward",
            format!("cotangent {:?} for input {:?}", dp.shape(), x.dims()),
        ));
    }
    t.check_len("scalar_tubal_softmax_backward", n)?;

    // through the renormalization P = max(Q, 0) / sum
    let mut dq = Matrix::zeros(p, m);
    for j in 0..m {
        let dot: f64 = (0..p).map(|i| dp.get(i, j) * probs.get(i, j)).sum();
        for i in 0..p {
            if probs.raw.get(i, j) > 0.0 {
                dq.set(i, j, (dp.get(i, j) - dot) / probs.sums[j]);
            }
        }
    }

    // through the sum along mode 3, then the inverse transform
    let dy = Tensor3::from_fn(p, m, n, |i, j, _| dq.get(i, j));
    let g = t.spectrum_of_cotangent(&dy);

    // through the per-slice softmax; its Jacobian diag(s) - s s^T is
    // symmetric, so the pairing stays bilinear
    let s = spectral_softmax(&t.to_spectrum(x));
    let mut dx_hat = g.clone();
    for j in 0..m {
        for k in 0..n {
            let dot: Complex64 = (0..p).map(|i| s.at(i, j, k) * g.at(i, j, k)).sum();
            for i in 0..p {
                *dx_hat.at_mut(i, j, k) = s.at(i, j, k) * (g.at(i, j, k) - dot);
            }
        }
    }
    Ok(t.cotangent_from_spectrum(&dx_hat))
}

/// How per-sample losses are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// Value of a cross-entropy evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    /// How many probabilities were raised to [`PROBABILITY_FLOOR`].
    pub clamped: usize,
}

fn check_labels(labels: &[usize], p: usize, m: usize) -> Result<()> {
    if labels.len() != m {
        return Err(Error::mismatch(
            "cross_entropy",
            format!("{} labels for {m} samples", labels.len()),
        ));
    }
    for &label in labels {
        if label == 0 || label > p {
            return Err(Error::LabelOutOfRange { label, classes: p });
        }
    }
    Ok(())
}

/// `-sum_i log P[c_i, i]` over samples, with 1-based labels `c_i`.
pub fn cross_entropy(
    probs: &ProbabilityMatrix,
    labels: &[usize],
    reduction: Reduction,
) -> Result<CrossEntropy> {
    let (p, m) = probs.probs.shape();
    check_labels(labels, p, m)?;
    let mut clamped = 0;
    let mut terms: Vec<f64> = labels
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let v = probs.get(c - 1, j);
            if v < PROBABILITY_FLOOR {
                clamped += 1;
            }
            -v.max(PROBABILITY_FLOOR).ln()
        })
        .collect();
    // summing in sorted order makes the value independent of sample order
    terms.sort_by(f64::total_cmp);
    let mut loss: f64 = terms.iter().sum();
    if reduction == Reduction::Mean {
        loss /= m as f64;
    }
    Ok(CrossEntropy { loss, clamped })
}

/// Cotangent of [`cross_entropy`] with respect to the probabilities.
/// Clamped entries are constant in the loss and get zero gradient.
pub fn cross_entropy_grad(
    probs: &ProbabilityMatrix,
    labels: &[usize],
    reduction: Reduction,
) -> Result<Matrix> {
    let (p, m) = probs.probs.shape();
    check_labels(labels, p, m)?;
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / m as f64,
    };
    let mut dp = Matrix::zeros(p, m);
    for (j, &c) in labels.iter().enumerate() {
        let v = probs.get(c - 1, j);
        if v >= PROBABILITY_FLOOR {
            dp.set(c - 1, j, -scale / v);
        }
    }
    Ok(dp)
}

/// Gradient of `cross_entropy(scalar_tubal_softmax(X), labels)` with respect
/// to the classifier output `X`.
pub fn loss_input_gradient(
    x: &Tensor3,
    labels: &[usize],
    t: &Transform,
    reduction: Reduction,
) -> Result<Tensor3> {
    let probs = scalar_tubal_softmax(x, t)?;
    let dp = cross_entropy_grad(&probs, labels, reduction)?;
    scalar_tubal_softmax_backward(x, &probs, &dp, t)
}

/// `0.5 * sum (P - C)^2` against one-hot targets, with its cotangent.
pub fn least_squares(
    probs: &ProbabilityMatrix,
    labels: &[usize],
    reduction: Reduction,
) -> Result<(f64, Matrix)> {
    let (p, m) = probs.probs.shape();
    check_labels(labels, p, m)?;
    let scale = match reduction {
        Reduction::Sum => 1.0,
        Reduction::Mean => 1.0 / m as f64,
    };
    let mut loss = 0.0;
    let mut dp = Matrix::zeros(p, m);
    for (j, &c) in labels.iter().enumerate() {
        for i in 0..p {
            let target = if i + 1 == c { 1.0 } else { 0.0 };
            let r = probs.get(i, j) - target;
            loss += 0.5 * r * r;
            dp.set(i, j, scale * r);
        }
    }
    Ok((loss * scale, dp))
}

/// `R = (1 / 2h) sum_j ||W_j - W_{j-1}||_F^2` and its gradient with respect
/// to every `W_j`.
pub fn smoothness_regularizer(weights: &[&Tensor3], h: f64) -> Result<(f64, Vec<Tensor3>)> {
    if weights.len() < 2 {
        return Err(Error::mismatch(
            "smoothness_regularizer",
            format!("needs at least 2 weights, got {}", weights.len()),
        ));
    }
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Config(format!(
            "regularizer step size must be positive, got {h}"
        )));
    }
    let dims = weights[0].dims();
    if let Some(w) = weights.iter().find(|w| w.dims() != dims) {
        return Err(Error::mismatch(
            "smoothness_regularizer",
            format!("{:?} vs {:?}", w.dims(), dims),
        ));
    }
    let mut value = 0.0;
    let mut grads: Vec<Tensor3> = weights
        .iter()
        .map(|_| Tensor3::zeros(dims.0, dims.1, dims.2))
        .collect();
    for j in 1..weights.len() {
        let d = weights[j].sub(weights[j - 1]);
        let norm = d.frobenius_norm();
        value += norm * norm;
        grads[j].axpy(1.0 / h, &d);
        grads[j - 1].axpy(-1.0 / h, &d);
    }
    Ok((value / (2.0 * h), grads))
}

/// Classical momentum SGD: `v <- mu v + g`, `w <- w - alpha v`.
#[derive(Debug, Clone)]
pub struct SgdState {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Weight of the smoothness regularizer, applied by the trainer.
    pub smoothness: f64,
    /// Step size `h` used inside the regularizer.
    pub smoothness_h: f64,
    velocities: Vec<Tensor3>,
}

impl SgdState {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        SgdState {
            learning_rate,
            momentum,
            smoothness: 0.0,
            smoothness_h: 1.0,
            velocities: Vec::new(),
        }
    }

    pub fn with_smoothness(mut self, weight: f64, h: f64) -> Self {
        self.smoothness = weight;
        self.smoothness_h = h;
        self
    }

    pub fn velocities(&self) -> &[Tensor3] {
        &self.velocities
    }

    /// One update of every parameter. Velocities are created lazily on the
    /// first call and must keep their shapes afterwards.
    pub fn step(&mut self, params: &mut [&mut Tensor3], grads: &[Tensor3]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::mismatch(
                "sgd_step",
                format!("{} parameters, {} gradients", params.len(), grads.len()),
            ));
        }
        if self.velocities.is_empty() {
            self.velocities = grads
                .iter()
                .map(|g| {
                    let (a, b, c) = g.dims();
                    Tensor3::zeros(a, b, c)
                })
                .collect();
        }
        if self.velocities.len() != params.len() {
            return Err(Error::mismatch(
                "sgd_step",
                format!(
                    "state holds {} velocities, got {} parameters",
                    self.velocities.len(),
                    params.len()
                ),
            ));
        }
        for ((w, g), v) in params.iter().zip(grads).zip(&self.velocities) {
            if w.dims() != g.dims() || v.dims() != g.dims() {
                return Err(Error::mismatch(
                    "sgd_step",
                    format!("parameter {:?}, gradient {:?}", w.dims(), g.dims()),
                ));
            }
        }
        for ((w, g), v) in params.iter_mut().zip(grads).zip(self.velocities.iter_mut()) {
            for ((wi, &gi), vi) in w
                .as_mut_slice()
                .iter_mut()
                .zip(g.as_slice())
                .zip(v.as_mut_slice().iter_mut())
            {
                *vi = self.momentum * *vi + gi;
                *wi -= self.learning_rate * *vi;
            }
        }
        Ok(())
    }
}
