//! The three-spheres stability experiment: forward-Euler and leapfrog
//! networks of tube-sized weights trained on points in `R^3`.
//!
//! Outputs in the configured directory:
//!
//! * `spheres_summary.csv`: `seed,variant,h,steps,epochs,train_accuracy,norm_ratio,final_train_loss,train_seconds`
//!   with one row per trained network. `norm_ratio` is the largest
//!   `‖a_N‖ / ‖a_0‖` over the training points.
//! * `snapshots_seed<seed>_<variant>_h<h>.csv`: `layer,point,x,y,z,label`,
//!   the coordinates of every point after every layer (layer 0 is the input)
//!   of the trained network.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use tnn_core::data::{gen_spheres, stream_rng, Dataset, STREAM_INIT, STREAM_SHUFFLE};
use tnn_core::train::{evaluate, train_epoch};
use tnn_core::{
    BlockSpec, ClassifierSpec, Init, Network, NetworkSpec, SgdState, TProductPath, Tensor3,
};

use crate::config::SpheresConfig;
use crate::train::make_transform;

pub const SUMMARY_FILE: &str = "spheres_summary.csv";

/// Discretization of one spheres network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    ForwardEuler,
    Leapfrog,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::ForwardEuler => "euler",
            Variant::Leapfrog => "leapfrog",
        }
    }
}

/// Outcome of one trained network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpheresRun {
    pub seed: u64,
    pub variant: &'static str,
    pub h: f64,
    pub steps: usize,
    pub epochs: usize,
    pub train_accuracy: f64,
    pub norm_ratio: f64,
    pub final_train_loss: f64,
    pub train_seconds: f64,
    #[serde(skip)]
    pub snapshot: Option<PathBuf>,
}

/// Largest per-point ratio `‖a_N‖ / ‖a_0‖`.
pub fn norm_ratio(first: &Tensor3, last: &Tensor3) -> f64 {
    let norm = |t: &Tensor3, j: usize| t.tube(0, j).iter().map(|x| x * x).sum::<f64>().sqrt();
    (0..first.m())
        .map(|j| norm(last, j) / norm(first, j))
        .fold(0.0, f64::max)
}

fn write_snapshots(path: &Path, trajectory: &[Tensor3], data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(["layer", "point", "x", "y", "z", "label"])?;
    for (layer, state) in trajectory.iter().enumerate() {
        for j in 0..state.m() {
            let p = state.tube(0, j);
            w.write_record([
                layer.to_string(),
                j.to_string(),
                format!("{:?}", p[0]),
                format!("{:?}", p[1]),
                format!("{:?}", p[2]),
                data.labels[j].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Trains one network and measures it.
pub fn run_variant(
    cfg: &SpheresConfig,
    seed: u64,
    variant: Variant,
    h: f64,
) -> Result<(SpheresRun, Vec<Tensor3>, Dataset)> {
    let data = gen_spheres(seed, cfg.counts);
    let block = match variant {
        Variant::ForwardEuler => BlockSpec::Residual {
            steps: cfg.steps,
            h,
            activation: cfg.activation,
        },
        Variant::Leapfrog => BlockSpec::Leapfrog {
            steps: cfg.steps,
            h,
            activation: cfg.activation,
            shared: false,
        },
    };
    let spec = NetworkSpec {
        width: 1,
        n: 3,
        blocks: vec![block],
        classifier: Some(ClassifierSpec {
            classes: 3,
            bias: cfg.classifier_bias,
        }),
    };
    let t = make_transform(cfg.transform, 3, TProductPath::Direct);
    let mut net = Network::new(
        spec,
        t,
        Init::NormalizedGaussian,
        cfg.objective,
        &mut stream_rng(seed, STREAM_INIT),
    )?;
    // the regularizer divides by h, so a zero step disables it
    let smoothness = if h > 0.0 { cfg.smoothness } else { 0.0 };
    let mut opt = SgdState::new(cfg.learning_rate, cfg.momentum).with_smoothness(smoothness, h);
    let mut shuffle = stream_rng(seed, STREAM_SHUFFLE);
    let start = Instant::now();
    let mut last_loss = f64::NAN;
    for _ in 0..cfg.epochs {
        last_loss = train_epoch(&mut net, &mut opt, &data, cfg.batch_size, &mut shuffle)?.loss;
    }
    let train_seconds = start.elapsed().as_secs_f64();
    let final_stats = evaluate(&mut net, &data, data.len())?;
    let trajectory = net.trajectory(&data.samples)?;
    let run = SpheresRun {
        seed,
        variant: variant.name(),
        h,
        steps: cfg.steps,
        epochs: cfg.epochs,
        train_accuracy: final_stats.accuracy,
        norm_ratio: norm_ratio(&trajectory[0], trajectory.last().expect("non-empty")),
        final_train_loss: if cfg.epochs == 0 {
            final_stats.loss
        } else {
            last_loss
        },
        train_seconds,
        snapshot: None,
    };
    Ok((run, trajectory, data))
}

/// Runs every seed and variant, writing the summary and snapshots.
pub fn spheres(cfg: &SpheresConfig, mut log: impl FnMut(&str)) -> Result<Vec<SpheresRun>> {
    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
    let mut variants: Vec<(Variant, f64)> = cfg
        .euler_h
        .iter()
        .map(|&h| (Variant::ForwardEuler, h))
        .collect();
    variants.push((Variant::Leapfrog, cfg.leapfrog_h));
    let mut summary = csv::Writer::from_path(cfg.output_dir.join(SUMMARY_FILE))?;
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        for &(variant, h) in &variants {
            let (mut run, trajectory, data) = run_variant(cfg, seed, variant, h)?;
            if cfg.snapshots {
                let path = cfg
                    .output_dir
                    .join(format!("snapshots_seed{seed}_{}_h{h}.csv", variant.name()));
                write_snapshots(&path, &trajectory, &data)?;
                run.snapshot = Some(path);
            }
            log(&format!(
                "seed {seed} {} h={h}: train accuracy {:.4}, norm ratio {:.3}, {:.1}s",
                variant.name(),
                run.train_accuracy,
                run.norm_ratio,
                run.train_seconds
            ));
            summary.serialize(&run)?;
            summary.flush()?;
            runs.push(run);
        }
    }
    Ok(runs)
}
