//! Tensor network layers with explicit forward and backward passes.
//!
//! Every layer computes `sigma(W * A + B)` where `*` is the product of the
//! network's [`Transform`] and `B` (an `ell x 1 x n` tensor) is added to
//! every lateral slice. Backward passes use the transpose that matches the
//! product ([`Transform::transpose`]).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::loss::{
    cross_entropy, cross_entropy_grad, least_squares, scalar_tubal_softmax,
    scalar_tubal_softmax_backward, ProbabilityMatrix, Reduction,
};
use crate::tensor::Tensor3;
use crate::transform::{Transform, TransformKind};

/// Elementwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Tanh,
    /// `relu'(0)` is taken to be 0.
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative at the pre-activation value `z`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// `W * A + B` with `B` broadcast over lateral slices.
fn affine(w: &Tensor3, a: &Tensor3, b: &Tensor3, t: &Transform) -> Result<Tensor3> {
    let mut z = t.product(w, a)?;
    z.add_lateral_broadcast(b)?;
    Ok(z)
}

/// `G = d ⊙ sigma'(Z)`.
fn local_gradient(d: &Tensor3, z: &Tensor3, act: Activation, scale: f64) -> Tensor3 {
    d.zip_map(z, |g, zv| scale * g * act.derivative(zv))
}

fn check_bias(op: &'static str, w: &Tensor3, b: &Tensor3) -> Result<()> {
    if b.dims() != (w.ell(), 1, w.n()) {
        return Err(Error::mismatch(
            op,
            format!("bias {:?} for weight {:?}", b.dims(), w.dims()),
        ));
    }
    Ok(())
}

fn check_square(op: &'static str, w: &Tensor3) -> Result<()> {
    if w.ell() != w.m() {
        return Err(Error::mismatch(
            op,
            format!("weight {:?} is not square", w.dims()),
        ));
    }
    Ok(())
}

/// Gradients of one affine layer.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub d_input: Tensor3,
    pub d_weight: Tensor3,
    pub d_bias: Tensor3,
}

/// `A_{j+1} = sigma(W * A_j + B)`.
#[derive(Debug, Clone)]
pub struct TLinearLayer {
    pub weight: Tensor3,
    pub bias: Tensor3,
    pub activation: Activation,
    cache: Option<(Tensor3, Tensor3)>,
}

impl TLinearLayer {
    pub fn new(weight: Tensor3, bias: Tensor3, activation: Activation) -> Result<Self> {
        check_bias("TLinearLayer::new", &weight, &bias)?;
        Ok(TLinearLayer {
            weight,
            bias,
            activation,
            cache: None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Computes the layer output and caches the input and the
    /// pre-activation `Z` for [`TLinearLayer::backward`].
    pub fn forward(&mut self, a: &Tensor3, t: &Transform) -> Result<Tensor3> {
        let z = affine(&self.weight, a, &self.bias, t)?;
        let out = z.map(|v| self.activation.apply(v));
        self.cache = Some((a.clone(), z));
        Ok(out)
    }

    /// With `G = dA_{j+1} ⊙ sigma'(Z)`: `dA_j = W^T * G`, `dW = G * A_j^T`,
    /// `dB = sum of the lateral slices of G`.
    pub fn backward(&self, d_next: &Tensor3, t: &Transform) -> Result<LayerGrads> {
        self.backward_scaled(d_next, 1.0, t)
    }

    fn backward_scaled(&self, d_next: &Tensor3, scale: f64, t: &Transform) -> Result<LayerGrads> {
        let (a, z) = self.cache.as_ref().ok_or(Error::MissingCache)?;
        if d_next.dims() != z.dims() {
            return Err(Error::mismatch(
                "tlinear_backward",
                format!("cotangent {:?} for output {:?}", d_next.dims(), z.dims()),
            ));
        }
        let g = local_gradient(d_next, z, self.activation, scale);
        Ok(LayerGrads {
            d_input: t.product(&t.transpose(&self.weight), &g)?,
            d_weight: t.product(&g, &t.transpose(a))?,
            d_bias: g.sum_lateral(),
        })
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Forward Euler steps `A_{j+1} = A_j + h sigma(W_j * A_j + B_j)`.
#[derive(Debug, Clone)]
pub struct ResidualBlock {
    pub layers: Vec<TLinearLayer>,
    pub h: f64,
}

impl ResidualBlock {
    pub fn new(layers: Vec<TLinearLayer>, h: f64) -> Result<Self> {
        for l in &layers {
            check_square("ResidualBlock::new", &l.weight)?;
        }
        Ok(ResidualBlock { layers, h })
    }

    pub fn forward(&mut self, a: &Tensor3, t: &Transform) -> Result<Tensor3> {
        let mut cur = a.clone();
        for layer in &mut self.layers {
            let step = layer.forward(&cur, t)?;
            cur.axpy(self.h, &step);
        }
        Ok(cur)
    }

    /// Returns `dA_0` and per-step gradients in layer order.
    pub fn backward(&self, d_out: &Tensor3, t: &Transform) -> Result<(Tensor3, Vec<LayerGrads>)> {
        let mut g = d_out.clone();
        let mut grads = Vec::with_capacity(self.layers.len());
        for layer in self.layers.iter().rev() {
            let lg = layer.backward_scaled(&g, self.h, t)?;
            g.axpy(1.0, &lg.d_input);
            grads.push(lg);
        }
        grads.reverse();
        Ok((g, grads))
    }

    /// `A_0, ..., A_{N-1}`, the step inputs of the last forward pass.
    pub fn states(&self) -> Result<Vec<Tensor3>> {
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            out.push(layer.cache.as_ref().ok_or(Error::MissingCache)?.0.clone());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
struct LeapfrogCache {
    /// `A_0 .. A_N`.
    a: Vec<Tensor3>,
    /// `Z_{j+1/2}` for `j = 0 .. N-1`.
    z: Vec<Tensor3>,
    pre1: Vec<Tensor3>,
    pre2: Vec<Tensor3>,
}

/// Leapfrog discretization of the antisymmetric Hamiltonian system:
///
/// ```text
/// Z_{j+1/2} = Z_{j-1/2} - h sigma(W_j^T * A_j + B_j)
/// A_{j+1}   = A_j       + h sigma(W_j   * Z_{j+1/2} + B_j)
/// ```
///
/// with `Z_{-1/2} = 0`. With `shared` set, one weight and bias serve every
/// step.
#[derive(Debug, Clone)]
pub struct LeapfrogBlock {
    pub weights: Vec<Tensor3>,
    pub biases: Vec<Tensor3>,
    pub steps: usize,
    pub h: f64,
    pub activation: Activation,
    cache: Option<LeapfrogCache>,
}

impl LeapfrogBlock {
    /// `weights.len()` must be `steps` or 1 (shared).
    pub fn new(
        weights: Vec<Tensor3>,
        biases: Vec<Tensor3>,
        steps: usize,
        h: f64,
        activation: Activation,
    ) -> Result<Self> {
        if weights.len() != biases.len() || !(weights.len() == steps || weights.len() == 1) {
            return Err(Error::mismatch(
                "LeapfrogBlock::new",
                format!(
                    "{} weights, {} biases for {steps} steps",
                    weights.len(),
                    biases.len()
                ),
            ));
        }
        for (w, b) in weights.iter().zip(&biases) {
            check_square("LeapfrogBlock::new", w)?;
            check_bias("LeapfrogBlock::new", w, b)?;
            if w.dims() != weights[0].dims() {
                return Err(Error::mismatch(
                    "LeapfrogBlock::new",
                    "weights differ in shape",
                ));
            }
        }
        Ok(LeapfrogBlock {
            weights,
            biases,
            steps,
            h,
            activation,
            cache: None,
        })
    }

    pub fn is_shared(&self) -> bool {
        self.weights.len() == 1 && self.steps != 1
    }

    fn index(&self, j: usize) -> usize {
        if self.weights.len() == 1 {
            0
        } else {
            j
        }
    }

    pub fn forward(&mut self, a0: &Tensor3, t: &Transform) -> Result<Tensor3> {
        let (ell, m, n) = a0.dims();
        let act = self.activation;
        let mut cache = LeapfrogCache {
            a: vec![a0.clone()],
            z: Vec::with_capacity(self.steps),
            pre1: Vec::with_capacity(self.steps),
            pre2: Vec::with_capacity(self.steps),
        };
        let mut z = Tensor3::zeros(ell, m, n);
        for j in 0..self.steps {
            let w = &self.weights[self.index(j)];
            let b = &self.biases[self.index(j)];
            let a = &cache.a[j];
            let pre1 = affine(&t.transpose(w), a, b, t)?;
            z.axpy(-self.h, &pre1.map(|v| act.apply(v)));
            let pre2 = affine(w, &z, b, t)?;
            let mut next = a.clone();
            next.axpy(self.h, &pre2.map(|v| act.apply(v)));
            cache.z.push(z.clone());
            cache.pre1.push(pre1);
            cache.pre2.push(pre2);
            cache.a.push(next);
        }
        let out = cache.a[self.steps].clone();
        self.cache = Some(cache);
        Ok(out)
    }

    /// Exact reverse-mode pass through the cached trajectory. Returns `dA_0`
    /// and gradients for every stored weight and bias.
    pub fn backward(
        &self,
        d_out: &Tensor3,
        t: &Transform,
    ) -> Result<(Tensor3, Vec<Tensor3>, Vec<Tensor3>)> {
        let cache = self.cache.as_ref().ok_or(Error::MissingCache)?;
        if d_out.dims() != cache.a[0].dims() {
            return Err(Error::mismatch(
                "leapfrog_backward",
                format!(
                    "cotangent {:?} for state {:?}",
                    d_out.dims(),
                    cache.a[0].dims()
                ),
            ));
        }
        let (ell, m, n) = d_out.dims();
        let act = self.activation;
        let mut dw: Vec<Tensor3> = self
            .weights
            .iter()
            .map(|w| Tensor3::zeros(w.ell(), w.m(), w.n()))
            .collect();
        let mut db: Vec<Tensor3> = self
            .biases
            .iter()
            .map(|b| Tensor3::zeros(b.ell(), b.m(), b.n()))
            .collect();
        let mut ga = d_out.clone();
        let mut gz = Tensor3::zeros(ell, m, n);
        for j in (0..self.steps).rev() {
            let idx = self.index(j);
            let w = &self.weights[idx];
            let wt = t.transpose(w);
            // A_{j+1} = A_j + h sigma(W Z + B)
            let g2 = local_gradient(&ga, &cache.pre2[j], act, self.h);
            dw[idx].axpy(1.0, &t.product(&g2, &t.transpose(&cache.z[j]))?);
            db[idx].axpy(1.0, &g2.sum_lateral());
            gz.axpy(1.0, &t.product(&wt, &g2)?);
            // Z_{j+1/2} = Z_{j-1/2} - h sigma(W^T A + B)
            let g1 = local_gradient(&gz, &cache.pre1[j], act, -self.h);
            ga.axpy(1.0, &t.product(w, &g1)?);
            dw[idx].axpy(1.0, &t.product(&cache.a[j], &t.transpose(&g1))?);
            db[idx].axpy(1.0, &g1.sum_lateral());
        }
        Ok((ga, dw, db))
    }

    /// `A_0, A_1, ..., A_N` from the last forward pass.
    pub fn states(&self) -> Result<Vec<Tensor3>> {
        Ok(self.cache.as_ref().ok_or(Error::MissingCache)?.a.clone())
    }

    /// `Z_{1/2}, ..., Z_{N-1/2}` from the last forward pass.
    pub fn momenta(&self) -> Result<Vec<Tensor3>> {
        Ok(self.cache.as_ref().ok_or(Error::MissingCache)?.z.clone())
    }
}

/// Architecture of one block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlockSpec {
    /// A t-linear layer mapping `ell_in` to `out` rows.
    Linear { out: usize, activation: Activation },
    Residual {
        steps: usize,
        h: f64,
        activation: Activation,
    },
    Leapfrog {
        steps: usize,
        h: f64,
        activation: Activation,
        shared: bool,
    },
}

impl BlockSpec {
    fn out_width(&self, ell_in: usize) -> usize {
        match *self {
            BlockSpec::Linear { out, .. } => out,
            _ => ell_in,
        }
    }

    /// Learnable weight entries (excluding biases) for an input width.
    pub fn weight_count(&self, ell_in: usize, n: usize) -> usize {
        match *self {
            BlockSpec::Linear { out, .. } => out * ell_in * n,
            BlockSpec::Residual { steps, .. } => steps * ell_in * ell_in * n,
            BlockSpec::Leapfrog { steps, shared, .. } => {
                let stored = if shared { 1 } else { steps };
                stored * ell_in * ell_in * n
            }
        }
    }

    /// Learnable bias entries for an input width.
    pub fn bias_count(&self, ell_in: usize, n: usize) -> usize {
        let rows = self.out_width(ell_in);
        match *self {
            BlockSpec::Linear { .. } => rows * n,
            BlockSpec::Residual { steps, .. } => steps * rows * n,
            BlockSpec::Leapfrog { steps, shared, .. } => {
                let stored = if shared { 1 } else { steps };
                stored * rows * n
            }
        }
    }
}

/// The classification tensor `W_N` (`p x ell_N x n`) with an optional bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierSpec {
    pub classes: usize,
    pub bias: bool,
}

/// Weight initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Init {
    /// Every transform-domain frontal slice is a dense Gaussian with
    /// standard deviation `1/sqrt(ell_in)`. For the circulant kind this
    /// means spatial entries with standard deviation `1/sqrt(ell_in n)`.
    #[default]
    Gaussian,
    /// Every weight is a standard-normal tensor scaled to unit Frobenius
    /// norm.
    NormalizedGaussian,
}

/// Shape-level description of a network: input lateral slices are
/// `width x 1 x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub width: usize,
    pub n: usize,
    pub blocks: Vec<BlockSpec>,
    pub classifier: Option<ClassifierSpec>,
}

impl NetworkSpec {
    /// Width of the features after the last block.
    pub fn feature_width(&self) -> usize {
        self.blocks.iter().fold(self.width, |w, b| b.out_width(w))
    }
}

/// Exact number of learnable scalars.
pub fn param_count(spec: &NetworkSpec) -> usize {
    let mut width = spec.width;
    let mut total = 0;
    for b in &spec.blocks {
        total += b.weight_count(width, spec.n) + b.bias_count(width, spec.n);
        width = b.out_width(width);
    }
    if let Some(c) = spec.classifier {
        total += c.classes * width * spec.n;
        if c.bias {
            total += c.classes * spec.n;
        }
    }
    total
}

/// A runtime block.
#[derive(Debug, Clone)]
pub enum Block {
    Linear(TLinearLayer),
    Residual(ResidualBlock),
    Leapfrog(LeapfrogBlock),
}

impl Block {
    pub fn forward(&mut self, a: &Tensor3, t: &Transform) -> Result<Tensor3> {
        match self {
            Block::Linear(l) => l.forward(a, t),
            Block::Residual(r) => r.forward(a, t),
            Block::Leapfrog(l) => l.forward(a, t),
        }
    }

    /// Returns `dA_in` and the gradients in [`Block::params`] order.
    pub fn backward(&self, d: &Tensor3, t: &Transform) -> Result<(Tensor3, Vec<Tensor3>)> {
        match self {
            Block::Linear(l) => {
                let g = l.backward(d, t)?;
                Ok((g.d_input, vec![g.d_weight, g.d_bias]))
            }
            Block::Residual(r) => {
                let (da, gs) = r.backward(d, t)?;
                Ok((
                    da,
                    gs.into_iter()
                        .flat_map(|g| [g.d_weight, g.d_bias])
                        .collect(),
                ))
            }
            Block::Leapfrog(l) => {
                let (da, dw, db) = l.backward(d, t)?;
                Ok((
                    da,
                    dw.into_iter().zip(db).flat_map(|(w, b)| [w, b]).collect(),
                ))
            }
        }
    }

    /// Parameters as (suffix, tensor): weight then bias for each step.
    pub fn params(&self) -> Vec<(String, &Tensor3)> {
        match self {
            Block::Linear(l) => vec![("weight".into(), &l.weight), ("bias".into(), &l.bias)],
            Block::Residual(r) => r
                .layers
                .iter()
                .enumerate()
                .flat_map(|(j, l)| {
                    [
                        (format!("step{j}.weight"), &l.weight),
                        (format!("step{j}.bias"), &l.bias),
                    ]
                })
                .collect(),
            Block::Leapfrog(l) => l
                .weights
                .iter()
                .zip(&l.biases)
                .enumerate()
                .flat_map(|(j, (w, b))| {
                    [(format!("step{j}.weight"), w), (format!("step{j}.bias"), b)]
                })
                .collect(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor3> {
        match self {
            Block::Linear(l) => vec![&mut l.weight, &mut l.bias],
            Block::Residual(r) => r
                .layers
                .iter_mut()
                .flat_map(|l| [&mut l.weight, &mut l.bias])
                .collect(),
            Block::Leapfrog(l) => l
                .weights
                .iter_mut()
                .zip(l.biases.iter_mut())
                .flat_map(|(w, b)| [w, b])
                .collect(),
        }
    }

    /// The per-step weight sequence `W_0, W_1, ...` of a multi-step block.
    pub fn weight_sequence(&self) -> Vec<&Tensor3> {
        match self {
            Block::Linear(_) => Vec::new(),
            Block::Residual(r) => r.layers.iter().map(|l| &l.weight).collect(),
            Block::Leapfrog(l) => l.weights.iter().collect(),
        }
    }

    /// The input of every step of the last forward pass.
    pub fn step_inputs(&self) -> Result<Vec<Tensor3>> {
        match self {
            Block::Linear(l) => Ok(vec![l.cache.as_ref().ok_or(Error::MissingCache)?.0.clone()]),
            Block::Residual(r) => r.states(),
            Block::Leapfrog(l) => {
                let mut s = l.states()?;
                s.pop();
                Ok(s)
            }
        }
    }
}

/// The objective applied to the scalar tubal softmax output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    CrossEntropy(Reduction),
    /// `0.5 ||P - C||^2` against one-hot targets.
    LeastSquares(Reduction),
}

impl Default for Objective {
    fn default() -> Self {
        Objective::CrossEntropy(Reduction::Sum)
    }
}

/// Value, probabilities and parameter gradients of one evaluation.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub probs: ProbabilityMatrix,
    pub grads: Vec<Tensor3>,
}

/// Blocks followed by the classification tensor and the scalar tubal
/// softmax.
#[derive(Debug, Clone)]
pub struct Network {
    pub spec: NetworkSpec,
    pub transform: Transform,
    pub blocks: Vec<Block>,
    pub classifier: Tensor3,
    pub classifier_bias: Option<Tensor3>,
    pub objective: Objective,
    features: Option<Tensor3>,
}

fn gaussian_weight(
    rows: usize,
    cols: usize,
    t: &Transform,
    init: Init,
    rng: &mut impl Rng,
) -> Tensor3 {
    let n = t.n();
    let mut draw = |std: f64| {
        Tensor3::from_fn(rows, cols, n, |_, _, _| {
            let z: f64 = rng.sample(StandardNormal);
            std * z
        })
    };
    match init {
        Init::NormalizedGaussian => {
            let w = draw(1.0);
            let norm = w.frobenius_norm();
            w.scale(1.0 / norm)
        }
        Init::Gaussian => {
            let std = 1.0 / (cols as f64).sqrt();
            match t.kind() {
                TransformKind::Circulant => draw(std / (n as f64).sqrt()),
                _ => t.inverse_real(&draw(std)).expect("real kind"),
            }
        }
    }
}

impl Network {
    /// Builds a network with freshly initialized weights and zero biases.
    pub fn new(
        spec: NetworkSpec,
        transform: Transform,
        init: Init,
        objective: Objective,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if spec.n != transform.n() {
            return Err(Error::Config(format!(
                "network n = {} but transform n = {}",
                spec.n,
                transform.n()
            )));
        }
        let cls = spec
            .classifier
            .ok_or_else(|| Error::Config("network needs a classifier".into()))?;
        if spec.width == 0 || cls.classes == 0 {
            return Err(Error::Config(
                "width and class count must be positive".into(),
            ));
        }
        let n = spec.n;
        let t = &transform;
        let mut width = spec.width;
        let mut blocks = Vec::with_capacity(spec.blocks.len());
        for b in &spec.blocks {
            let block = match *b {
                BlockSpec::Linear { out, activation } => Block::Linear(TLinearLayer::new(
                    gaussian_weight(out, width, t, init, rng),
                    Tensor3::zeros(out, 1, n),
                    activation,
                )?),
                BlockSpec::Residual {
                    steps,
                    h,
                    activation,
                } => {
                    let mut layers = Vec::with_capacity(steps);
                    for _ in 0..steps {
                        layers.push(TLinearLayer::new(
                            gaussian_weight(width, width, t, init, rng),
                            Tensor3::zeros(width, 1, n),
                            activation,
                        )?);
                    }
                    Block::Residual(ResidualBlock::new(layers, h)?)
                }
                BlockSpec::Leapfrog {
                    steps,
                    h,
                    activation,
                    shared,
                } => {
                    let stored = if shared { 1 } else { steps };
                    let weights = (0..stored)
                        .map(|_| gaussian_weight(width, width, t, init, rng))
                        .collect();
                    let biases = (0..stored).map(|_| Tensor3::zeros(width, 1, n)).collect();
                    Block::Leapfrog(LeapfrogBlock::new(weights, biases, steps, h, activation)?)
                }
            };
            width = b.out_width(width);
            blocks.push(block);
        }
        let classifier = gaussian_weight(cls.classes, width, t, Init::Gaussian, rng);
        let classifier_bias = cls.bias.then(|| Tensor3::zeros(cls.classes, 1, n));
        Ok(Network {
            spec,
            transform,
            blocks,
            classifier,
            classifier_bias,
            objective,
            features: None,
        })
    }

    pub fn classes(&self) -> usize {
        self.classifier.ell()
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.spec)
    }

    /// Final features `A_N`.
    pub fn features(&mut self, a0: &Tensor3) -> Result<Tensor3> {
        if a0.ell() != self.spec.width || a0.n() != self.spec.n {
            return Err(Error::mismatch(
                "network input",
                format!(
                    "input {:?}, network expects {} x m x {}",
                    a0.dims(),
                    self.spec.width,
                    self.spec.n
                ),
            ));
        }
        let mut a = a0.clone();
        for b in &mut self.blocks {
            a = b.forward(&a, &self.transform)?;
        }
        Ok(a)
    }

    /// Classifier output `W_N * A_N (+ B_N)` before the softmax.
    pub fn forward(&mut self, a0: &Tensor3) -> Result<Tensor3> {
        let a = self.features(a0)?;
        let mut x = self.transform.product(&self.classifier, &a)?;
        if let Some(b) = &self.classifier_bias {
            x.add_lateral_broadcast(b)?;
        }
        self.features = Some(a);
        Ok(x)
    }

    /// Column-wise class probabilities.
    pub fn classify(&mut self, a0: &Tensor3) -> Result<ProbabilityMatrix> {
        let x = self.forward(a0)?;
        scalar_tubal_softmax(&x, &self.transform)
    }

    /// Objective value without gradients.
    pub fn loss(&mut self, a0: &Tensor3, labels: &[usize]) -> Result<(f64, ProbabilityMatrix)> {
        let probs = self.classify(a0)?;
        let loss = match self.objective {
            Objective::CrossEntropy(r) => cross_entropy(&probs, labels, r)?.loss,
            Objective::LeastSquares(r) => least_squares(&probs, labels, r)?.0,
        };
        Ok((loss, probs))
    }

    /// Objective value and gradients for every parameter in
    /// [`Network::param_names`] order.
    pub fn loss_and_grad(&mut self, a0: &Tensor3, labels: &[usize]) -> Result<LossEval> {
        let t = self.transform.clone();
        let x = self.forward(a0)?;
        let probs = scalar_tubal_softmax(&x, &t)?;
        let (loss, dp) = match self.objective {
            Objective::CrossEntropy(r) => (
                cross_entropy(&probs, labels, r)?.loss,
                cross_entropy_grad(&probs, labels, r)?,
            ),
            Objective::LeastSquares(r) => least_squares(&probs, labels, r)?,
        };
        let dx = scalar_tubal_softmax_backward(&x, &probs, &dp, &t)?;
        let a = self.features.take().ok_or(Error::MissingCache)?;
        let d_cls = t.product(&dx, &t.transpose(&a))?;
        let mut g = t.product(&t.transpose(&self.classifier), &dx)?;
        let mut block_grads = Vec::with_capacity(self.blocks.len());
        for b in self.blocks.iter().rev() {
            let (da, gs) = b.backward(&g, &t)?;
            g = da;
            block_grads.push(gs);
        }
        let mut grads: Vec<Tensor3> = block_grads.into_iter().rev().flatten().collect();
        grads.push(d_cls);
        if self.classifier_bias.is_some() {
            grads.push(dx.sum_lateral());
        }
        Ok(LossEval { loss, probs, grads })
    }

    /// Stable parameter names, used by checkpoints.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            for (suffix, _) in b.params() {
                names.push(format!("block{i}.{suffix}"));
            }
        }
        names.push("classifier.weight".into());
        if self.classifier_bias.is_some() {
            names.push("classifier.bias".into());
        }
        names
    }

    pub fn params(&self) -> Vec<&Tensor3> {
        let mut out: Vec<&Tensor3> = self
            .blocks
            .iter()
            .flat_map(|b| b.params().into_iter().map(|(_, t)| t))
            .collect();
        out.push(&self.classifier);
        if let Some(b) = &self.classifier_bias {
            out.push(b);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor3> {
        let mut out: Vec<&mut Tensor3> = self
            .blocks
            .iter_mut()
            .flat_map(|b| b.params_mut())
            .collect();
        out.push(&mut self.classifier);
        if let Some(b) = &mut self.classifier_bias {
            out.push(b);
        }
        out
    }

    /// Feature states `A_0, ..., A_N` through every step of every block.
    pub fn trajectory(&mut self, a0: &Tensor3) -> Result<Vec<Tensor3>> {
        let last = self.features(a0)?;
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(b.step_inputs()?);
        }
        out.push(last);
        Ok(out)
    }

    /// Largest `||W_j - W_{j-1}||_F` over consecutive steps of every block.
    pub fn max_weight_delta(&self) -> f64 {
        let mut best: f64 = 0.0;
        for b in &self.blocks {
            let ws = b.weight_sequence();
            for pair in ws.windows(2) {
                best = best.max(pair[1].sub(pair[0]).frobenius_norm());
            }
        }
        best
    }
}
