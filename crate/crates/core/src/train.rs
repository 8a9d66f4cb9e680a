//! Mini-batch training and evaluation loops.

use rand::Rng;

use crate::data::{batch_indices, Dataset};
use crate::error::Result;
use crate::loss::{cross_entropy, least_squares, smoothness_regularizer, Reduction, SgdState};
use crate::network::{Network, Objective};

/// Summary of one pass over a dataset. `loss` is the objective per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub accuracy: f64,
    pub safeguard_residual_max: f64,
}

fn sample_loss_sum(
    net: &Network,
    probs: &crate::loss::ProbabilityMatrix,
    labels: &[usize],
) -> Result<f64> {
    Ok(match net.objective {
        Objective::CrossEntropy(_) => cross_entropy(probs, labels, Reduction::Sum)?.loss,
        Objective::LeastSquares(_) => least_squares(probs, labels, Reduction::Sum)?.0,
    })
}

/// Adds `weight * grad R` of every multi-step block to `grads` and returns
/// `weight * R`.
pub fn add_smoothness(
    net: &Network,
    weight: f64,
    h: f64,
    grads: &mut [crate::Tensor3],
) -> Result<f64> {
    if weight == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut offset = 0;
    for b in &net.blocks {
        let ws = b.weight_sequence();
        if ws.len() >= 2 {
            let (r, g) = smoothness_regularizer(&ws, h)?;
            total += weight * r;
            for (j, gj) in g.iter().enumerate() {
                // parameters alternate weight, bias per step
                grads[offset + 2 * j].axpy(weight, gj);
            }
        }
        offset += b.params().len();
    }
    Ok(total)
}

/// One epoch of SGD over shuffled mini-batches. The returned statistics are
/// running values accumulated batch by batch during the epoch.
pub fn train_epoch(
    net: &mut Network,
    opt: &mut SgdState,
    data: &Dataset,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<EpochStats> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut residual: f64 = 0.0;
    for idx in batch_indices(data.len(), batch_size, rng) {
        let batch = data.batch(&idx);
        let mut eval = net.loss_and_grad(&batch.samples, &batch.labels)?;
        add_smoothness(net, opt.smoothness, opt.smoothness_h, &mut eval.grads)?;
        loss_sum += sample_loss_sum(net, &eval.probs, &batch.labels)?;
        correct += eval
            .probs
            .predictions()
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
        residual = residual.max(eval.probs.max_residual());
        opt.step(&mut net.params_mut(), &eval.grads)?;
    }
    Ok(EpochStats {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
        safeguard_residual_max: residual,
    })
}

/// Forward-only evaluation in chunks of `chunk` samples, in dataset order.
pub fn evaluate(net: &mut Network, data: &Dataset, chunk: usize) -> Result<EpochStats> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut residual: f64 = 0.0;
    let chunk = chunk.max(1);
    let mut start = 0;
    while start < data.len() {
        let end = (start + chunk).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let batch = data.batch(&idx);
        let probs = net.classify(&batch.samples)?;
        loss_sum += sample_loss_sum(net, &probs, &batch.labels)?;
        correct += probs
            .predictions()
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
        residual = residual.max(probs.max_residual());
        start = end;
    }
    Ok(EpochStats {
        loss: loss_sum / data.len() as f64,
        accuracy: correct as f64 / data.len() as f64,
        safeguard_residual_max: residual,
    })
}
