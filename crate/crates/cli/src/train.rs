//! `train` and `eval`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use tnn_core::checkpoint::{load_network, save_network};
use tnn_core::data::{
    cifar10_files, load_cifar10, load_mnist, mnist_files, stream_rng, CifarOptions, Dataset,
    ImageLayout, MnistOptions, NormalizationSpec, Split, STREAM_INIT, STREAM_SHUFFLE,
};
use tnn_core::train::{evaluate, train_epoch, EpochStats};
use tnn_core::{
    Checkpoint, ClassifierSpec, Network, NetworkSpec, SgdState, Transform, TransformKind,
};

use crate::config::{DataConfig, DatasetKind, ModelConfig, RunConfig};
use crate::metrics::{MetricsRow, MetricsWriter};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "model.tnn";

/// Loads one split of an image dataset from `dir`.
pub fn load_split(
    dataset: DatasetKind,
    dir: &Path,
    split: Split,
    layout: ImageLayout,
    normalization: &NormalizationSpec,
    limit: Option<usize>,
) -> Result<Dataset> {
    let mut d = match dataset {
        DatasetKind::Mnist => {
            let (images, labels) = mnist_files(dir, split);
            let opts = MnistOptions {
                layout,
                normalization: normalization.clone(),
                limit,
            };
            load_mnist(&images, &labels, &opts)?
        }
        DatasetKind::Cifar10 => {
            let opts = CifarOptions {
                layout,
                normalization: normalization.clone(),
                limit,
            };
            load_cifar10(&cifar10_files(dir, split), &opts)?
        }
    };
    d.split = split;
    Ok(d)
}

fn load_config_split(data: &DataConfig, split: Split) -> Result<Dataset> {
    let limit = match split {
        Split::Train => data.train_limit,
        Split::Test => data.test_limit,
    };
    let dir = data.resolved_dir();
    load_split(
        data.dataset,
        &dir,
        split,
        data.layout,
        &data.normalization,
        limit,
    )
    .with_context(|| {
        format!(
            "loading {} {split:?} split from {}",
            data.dataset.name(),
            dir.display()
        )
    })
}

pub fn make_transform(kind: TransformKind, n: usize, path: tnn_core::TProductPath) -> Transform {
    match kind {
        TransformKind::Circulant => Transform::circulant(n).with_path(path),
        TransformKind::Orthogonal => Transform::dct(n),
        TransformKind::Identity => Transform::identity(n),
    }
}

/// The network a config describes for samples of `width x 1 x n`.
pub fn network_spec(model: &ModelConfig, width: usize, n: usize, classes: usize) -> NetworkSpec {
    NetworkSpec {
        width,
        n,
        blocks: model.blocks.clone(),
        classifier: Some(ClassifierSpec {
            classes,
            bias: model.classifier_bias,
        }),
    }
}

/// Builds the freshly initialized network for `cfg` and its data shape.
pub fn build_network(cfg: &RunConfig, width: usize, n: usize, classes: usize) -> Result<Network> {
    let spec = network_spec(&cfg.model, width, n, classes);
    let t = make_transform(cfg.model.transform, n, cfg.model.product_path);
    let mut rng = stream_rng(cfg.seed, STREAM_INIT);
    Ok(Network::new(
        spec,
        t,
        cfg.model.init,
        cfg.model.objective,
        &mut rng,
    )?)
}

/// Files and rows produced by [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub rows: Vec<MetricsRow>,
    pub param_count: usize,
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:?}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn run_meta(cfg: &RunConfig) -> Vec<(String, String)> {
    let d = &cfg.data;
    let limit = |l: Option<usize>| l.map_or("all".to_string(), |v| v.to_string());
    vec![
        ("run".into(), cfg.name.clone()),
        ("seed".into(), cfg.seed.to_string()),
        ("epochs".into(), cfg.epochs.to_string()),
        ("dataset".into(), d.dataset.name().into()),
        ("layout".into(), d.layout.name().into()),
        ("train_limit".into(), limit(d.train_limit)),
        ("test_limit".into(), limit(d.test_limit)),
        ("normalization_mean".into(), join(&d.normalization.means)),
        ("normalization_std".into(), join(&d.normalization.stds)),
        (
            "eval_batch_size".into(),
            cfg.optim.eval_batch_size.to_string(),
        ),
    ]
}

fn row(epoch: usize, split: &str, s: &EpochStats, start: Instant, net: &Network) -> MetricsRow {
    MetricsRow {
        epoch,
        split: split.into(),
        loss: s.loss,
        accuracy: s.accuracy,
        wall_seconds: start.elapsed().as_secs_f64(),
        max_weight_delta: net.max_weight_delta(),
        safeguard_residual_max: s.safeguard_residual_max,
    }
}

/// Trains per `cfg`, writing `metrics.csv` and `model.tnn` into the output
/// directory. Data is loaded and the network built before any file is
/// created, so configuration and loader failures leave nothing behind.
pub fn train(cfg: &RunConfig, mut log: impl FnMut(&str)) -> Result<TrainOutcome> {
    let train_set = load_config_split(&cfg.data, Split::Train)?;
    let test_set = load_config_split(&cfg.data, Split::Test)?;
    let (width, _, n) = train_set.samples.dims();
    let classes = train_set.classes;
    let mut net = build_network(cfg, width, n, classes)?;
    let mut opt = SgdState::new(cfg.optim.learning_rate, cfg.optim.momentum)
        .with_smoothness(cfg.optim.smoothness, cfg.optim.smoothness_h);
    let mut shuffle = stream_rng(cfg.seed, STREAM_SHUFFLE);

    std::fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
    let metrics_path = cfg.output_dir.join(METRICS_FILE);
    let checkpoint_path = cfg.output_dir.join(CHECKPOINT_FILE);
    let mut writer = MetricsWriter::create(&metrics_path)?;
    log(&format!(
        "{}: {} train / {} test samples of {width}x1x{n}, {} parameters",
        cfg.name,
        train_set.len(),
        test_set.len(),
        net.param_count()
    ));

    let start = Instant::now();
    let mut rows = Vec::with_capacity(2 * cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let tr = train_epoch(
            &mut net,
            &mut opt,
            &train_set,
            cfg.optim.batch_size,
            &mut shuffle,
        )?;
        if !tr.loss.is_finite() {
            bail!("training diverged in epoch {epoch} (loss {})", tr.loss);
        }
        let train_row = row(epoch, "train", &tr, start, &net);
        writer.append(&train_row)?;
        let te = evaluate(&mut net, &test_set, cfg.optim.eval_batch_size)?;
        let test_row = row(epoch, "test", &te, start, &net);
        writer.append(&test_row)?;
        log(&format!(
            "epoch {epoch}: train loss {:.4} acc {:.4} | test loss {:.4} acc {:.4} | {:.1}s",
            tr.loss, tr.accuracy, te.loss, te.accuracy, test_row.wall_seconds
        ));
        rows.push(train_row);
        rows.push(test_row);
    }
    save_network(&net, &run_meta(cfg)).write(&checkpoint_path)?;
    Ok(TrainOutcome {
        metrics_path,
        checkpoint_path,
        rows,
        param_count: net.param_count(),
    })
}

/// Result of [`eval`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub loss: f64,
    pub accuracy: f64,
    pub samples: usize,
}

fn meta<'a>(ck: &'a Checkpoint, key: &str) -> Result<&'a str> {
    ck.meta(key)
        .ok_or_else(|| anyhow!("checkpoint has no `{key}` metadata; was it written by `train`?"))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| anyhow!("bad number {v:?}: {e}"))
        })
        .collect()
}

/// Evaluates a checkpoint on one split of the dataset in `dataset_dir`, with
/// the layout, normalization and sample limit recorded at training time
/// unless `limit` overrides it.
pub fn eval(
    checkpoint: &Path,
    dataset_dir: &Path,
    split: Split,
    limit: Option<usize>,
) -> Result<EvalReport> {
    let ck = Checkpoint::read(checkpoint)?;
    let mut net = load_network(&ck)?;
    let dataset = DatasetKind::parse(meta(&ck, "dataset")?)?;
    let layout = ImageLayout::parse(meta(&ck, "layout")?)
        .ok_or_else(|| anyhow!("checkpoint has unknown layout"))?;
    let normalization = NormalizationSpec::new(
        parse_list(meta(&ck, "normalization_mean")?)?,
        parse_list(meta(&ck, "normalization_std")?)?,
    )?;
    let recorded = match split {
        Split::Train => meta(&ck, "train_limit")?,
        Split::Test => meta(&ck, "test_limit")?,
    };
    let limit = match limit {
        Some(l) => Some(l),
        None if recorded == "all" => None,
        None => Some(
            recorded
                .parse()
                .map_err(|_| anyhow!("bad recorded limit {recorded:?}"))?,
        ),
    };
    let chunk: usize = meta(&ck, "eval_batch_size")?.parse().unwrap_or(500);
    let data = load_split(dataset, dataset_dir, split, layout, &normalization, limit)
        .with_context(|| format!("loading {} from {}", dataset.name(), dataset_dir.display()))?;
    let stats = evaluate(&mut net, &data, chunk)?;
    Ok(EvalReport {
        loss: stats.loss,
        accuracy: stats.accuracy,
        samples: data.len(),
    })
}
