use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::network::loss_grad;
use super::{
    Dataset, HeadKind, Layer, Loss, LossTarget, NetworkParameters, NetworkSpec, TrainingConfig,
    REGRESSION_OUTPUTS,
};
use crate::error::{Error, Result};

/// Evaluation chunk size; only affects memory.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Running frame accuracy (%) for classification, MAE for regression.
    pub metric: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self, metric_name: &str, provenance: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(p) = provenance {
            s.push_str(&format!("# {p}\n"));
        }
        s.push_str(&format!("epoch,loss,{metric_name}\n"));
        for r in &self.records {
            s.push_str(&format!("{},{:.9},{:.9}\n", r.epoch, r.loss, r.metric));
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

fn check_labels(data: &Dataset<usize>, n_outputs: usize) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    if let Some(&bad) = data.targets().iter().find(|&&l| l >= n_outputs) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {n_outputs} outputs"
        )));
    }
    Ok(())
}

fn check_shape<T: Clone>(net: &NetworkParameters, data: &Dataset<T>) -> Result<()> {
    if data.context != net.spec.context || data.n_mels != net.spec.n_mels {
        return Err(Error::DimensionMismatch {
            expected: net.spec.input_len(),
            actual: data.context * data.n_mels,
        });
    }
    Ok(())
}

/// Mini-batch SGD on cross-entropy from a seeded Glorot initialization.
pub fn train_am(
    spec: &NetworkSpec,
    data: &Dataset<usize>,
    cfg: &TrainingConfig,
) -> Result<(NetworkParameters, TrainingLog)> {
    cfg.validate()?;
    if cfg.loss != Loss::CrossEntropy {
        return Err(Error::Config(
            "acoustic model training uses cross_entropy".into(),
        ));
    }
    check_labels(data, spec.n_outputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = NetworkParameters::init(spec, HeadKind::Softmax, spec.n_outputs, &mut rng)?;
    check_shape(&net, data)?;
    if cfg.normalize_inputs {
        (net.input_mean, net.input_scale) = data.channel_stats();
    }
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut correct) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let x = data.batch(idx);
            let labels: Vec<usize> = idx.iter().map(|&i| *data.target(i)).collect();
            let (loss, grads, logits) =
                net.loss_gradients_output(&x, &LossTarget::Labels(&labels), 0)?;
            correct += count_correct(&logits, &labels);
            total += loss * idx.len() as f64;
            net.apply_gradients(&grads, cfg.learning_rate);
        }
        if !net.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite parameters at epoch {epoch}"
            )));
        }
        log.records.push(EpochRecord {
            epoch,
            loss: total / data.len() as f64,
            metric: 100.0 * correct as f64 / data.len() as f64,
        });
        log::info!("am epoch {epoch}: loss {:.4}", total / data.len() as f64);
    }
    Ok((net, log))
}

fn count_correct(logits: &DMatrix<f64>, labels: &[usize]) -> usize {
    logits
        .column_iter()
        .zip(labels)
        .filter(|(c, &l)| c.argmax().0 == l)
        .count()
}

/// Percentage of frames whose arg-max posterior equals the label.
pub fn frame_accuracy(net: &NetworkParameters, data: &Dataset<usize>) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    if net.head_kind != HeadKind::Softmax {
        return Err(Error::invalid("frame accuracy needs a softmax head"));
    }
    check_shape(net, data)?;
    let all: Vec<usize> = (0..data.len()).collect();
    let mut correct = 0;
    for idx in all.chunks(EVAL_CHUNK) {
        let labels: Vec<usize> = idx.iter().map(|&i| *data.target(i)).collect();
        correct += count_correct(&net.logits_batch(&data.batch(idx))?, &labels);
    }
    Ok(100.0 * correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptOptions {
    pub n_targets: usize,
    /// Freeze the bottleneck too, not only the layers below it.
    pub freeze_bottleneck: bool,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        Self {
            n_targets: REGRESSION_OUTPUTS,
            freeze_bottleneck: true,
        }
    }
}

/// Replaces the softmax by a zero-initialized 32-output linear regression
/// head and freezes the trunk through the bottleneck.
pub fn adapt_to_regression(net: &NetworkParameters) -> NetworkParameters {
    adapt_with(net, &AdaptOptions::default())
}

pub fn adapt_with(net: &NetworkParameters, opts: &AdaptOptions) -> NetworkParameters {
    let mut out = net.clone();
    let bi = out.bottleneck_index();
    for (i, layer) in out.layers.iter_mut().enumerate() {
        layer.frozen = i < bi || (i == bi && opts.freeze_bottleneck);
    }
    let bn = out.spec.bottleneck_width();
    *out.head_mut() = Layer::zeros("head", opts.n_targets, bn);
    out.head_kind = HeadKind::Regression;
    out
}

/// Same topology with a Glorot regression head and nothing frozen; the
/// random-initialization baseline.
pub fn random_baseline(
    spec: &NetworkSpec,
    n_targets: usize,
    seed: u64,
) -> Result<NetworkParameters> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NetworkParameters::init(spec, HeadKind::Regression, n_targets, &mut rng)
}

fn check_targets(net: &NetworkParameters, data: &Dataset<Vec<f64>>) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("empty dataset"));
    }
    let d = net.n_head_outputs();
    for t in data.targets() {
        if t.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: t.len(),
            });
        }
        if t.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("regression targets must lie in [0, 1]"));
        }
    }
    Ok(())
}

fn target_matrix(data: &Dataset<Vec<f64>>, idx: &[usize], d: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(d, idx.len());
    for (c, &i) in idx.iter().enumerate() {
        t.column_mut(c).copy_from_slice(data.target(i));
    }
    t
}

/// Mini-batch SGD on mean absolute error. Only non-frozen layers change.
/// When everything below the head is frozen the bottleneck activations are
/// computed once and reused.
pub fn train_regression(
    net: &NetworkParameters,
    data: &Dataset<Vec<f64>>,
    cfg: &TrainingConfig,
) -> Result<(NetworkParameters, TrainingLog)> {
    cfg.validate()?;
    if cfg.loss != Loss::Mae {
        return Err(Error::Config("regression training uses mae".into()));
    }
    if net.head_kind != HeadKind::Regression {
        return Err(Error::NotRegression);
    }
    check_shape(net, data)?;
    check_targets(net, data)?;
    let mut net = net.clone();
    let d = net.n_head_outputs();
    let Some(lowest) = net.lowest_trainable() else {
        return Ok((net, TrainingLog::default()));
    };
    if cfg.normalize_inputs && lowest == 0 {
        (net.input_mean, net.input_scale) = data.channel_stats();
    }
    let head_only = lowest == net.layers.len() - 1;
    let cached = if head_only {
        Some(bottleneck_cache(&net, data)?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let t = target_matrix(data, idx, d);
            let (loss, grads) = match &cached {
                Some(z) => head_gradients(&net, z, idx, &t)?,
                None => {
                    net.loss_and_gradients(&data.batch(idx), &LossTarget::Values(&t), lowest)?
                }
            };
            total += loss * idx.len() as f64;
            net.apply_gradients(&grads, cfg.learning_rate);
        }
        if !net.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite parameters at epoch {epoch}"
            )));
        }
        let loss = total / data.len() as f64;
        log.records.push(EpochRecord {
            epoch,
            loss,
            metric: loss,
        });
        log::info!("regression epoch {epoch}: mae {loss:.5}");
    }
    Ok((net, log))
}

fn bottleneck_cache<T: Clone>(net: &NetworkParameters, data: &Dataset<T>) -> Result<DMatrix<f64>> {
    let mut z = DMatrix::zeros(net.spec.bottleneck_width(), data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(EVAL_CHUNK) {
        let b = net.bottleneck_batch(&data.batch(idx))?;
        z.columns_mut(idx[0], idx.len()).copy_from(&b);
    }
    Ok(z)
}

fn head_gradients(
    net: &NetworkParameters,
    z: &DMatrix<f64>,
    idx: &[usize],
    t: &DMatrix<f64>,
) -> Result<(f64, super::Gradients)> {
    let zb = z.select_columns(idx);
    let y = net.head_from_bottleneck(&zb);
    let (loss, dy) = loss_grad(HeadKind::Regression, &y, &LossTarget::Values(t))?;
    let mut grads: super::Gradients = vec![None; net.layers.len()];
    let db = nalgebra::DVector::from_iterator(dy.nrows(), dy.row_iter().map(|r| r.sum()));
    *grads.last_mut().unwrap() = Some((&dy * zb.transpose(), db));
    Ok((loss, grads))
}

/// Mean absolute error of a regression network over a dataset.
pub fn regression_mae(net: &NetworkParameters, data: &Dataset<Vec<f64>>) -> Result<f64> {
    if net.head_kind != HeadKind::Regression {
        return Err(Error::NotRegression);
    }
    check_shape(net, data)?;
    check_targets(net, data)?;
    let d = net.n_head_outputs();
    let all: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for idx in all.chunks(EVAL_CHUNK) {
        let y = net.logits_batch(&data.batch(idx))?;
        let t = target_matrix(data, idx, d);
        total += (y - t).iter().map(|v| v.abs()).sum::<f64>();
    }
    Ok(total / (data.len() * d) as f64)
}
