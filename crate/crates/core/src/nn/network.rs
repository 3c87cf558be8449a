use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{selu, selu_grad, softmax, NetworkSpec};
use crate::error::{Error, Result};
use crate::frontend::ContextWindow;

/// Affine map `weight * x + bias`. For the convolution the weight rows are
/// flattened `filter_h x filter_w` kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub frozen: bool,
}

impl Layer {
    pub fn zeros(name: &str, out: usize, inp: usize) -> Self {
        Self {
            name: name.to_string(),
            weight: DMatrix::zeros(out, inp),
            bias: DVector::zeros(out),
            frozen: false,
        }
    }

    /// Uniform in `+-sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(
        name: &str,
        out: usize,
        inp: usize,
        fan: (usize, usize),
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let limit = (6.0 / (fan.0 + fan.1) as f64).sqrt();
        let mut layer = Self::zeros(name, out, inp);
        for w in layer.weight.iter_mut() {
            *w = rng.random_range(-limit..limit);
        }
        layer
    }

    fn affine(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = &self.weight * x;
        for mut col in y.column_iter_mut() {
            col += &self.bias;
        }
        y
    }

    pub fn is_finite(&self) -> bool {
        self.weight
            .iter()
            .chain(self.bias.iter())
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Softmax,
    Regression,
}

/// Weights of the whole network. `layers` holds the convolution, the hidden
/// layers, the bottleneck and the head, in that order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParameters {
    pub spec: NetworkSpec,
    pub head_kind: HeadKind,
    /// Fixed per-mel input normalization `(v - mean) * scale`.
    pub input_mean: Vec<f64>,
    pub input_scale: Vec<f64>,
    pub layers: Vec<Layer>,
}

/// Per-layer `(d weight, d bias)`, `None` for layers that were not needed.
pub type Gradients = Vec<Option<(DMatrix<f64>, DVector<f64>)>>;

pub enum LossTarget<'a> {
    Labels(&'a [usize]),
    /// `n_outputs x batch`.
    Values(&'a DMatrix<f64>),
}

struct Forward {
    cols: DMatrix<f64>,
    /// Input to each layer after the convolution.
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<DMatrix<f64>>,
    output: DMatrix<f64>,
}

impl NetworkParameters {
    /// Glorot-initialized network with a head of `n_head` outputs.
    pub fn init(
        spec: &NetworkSpec,
        head_kind: HeadKind,
        n_head: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        spec.validate()?;
        let (_, fh, fw) = spec.conv;
        let nf = spec.n_filters();
        let p = spec.conv_positions();
        let hidden = spec.hidden_width();
        let bn = spec.bottleneck_width();
        let mut layers = vec![Layer::glorot(
            "conv",
            nf,
            fh * fw,
            (fh * fw, nf * fh * fw),
            rng,
        )];
        let mut width = nf * p;
        for i in 0..spec.fc_layers {
            layers.push(Layer::glorot(
                &format!("fc{}", i + 1),
                hidden,
                width,
                (width, hidden),
                rng,
            ));
            width = hidden;
        }
        layers.push(Layer::glorot("bottleneck", bn, width, (width, bn), rng));
        layers.push(Layer::glorot("head", n_head, bn, (bn, n_head), rng));
        Ok(Self {
            spec: *spec,
            head_kind,
            input_mean: vec![0.0; spec.n_mels],
            input_scale: vec![1.0; spec.n_mels],
            layers,
        })
    }

    /// All-zero weights and biases.
    pub fn zeros(spec: &NetworkSpec, head_kind: HeadKind, n_head: usize) -> Result<Self> {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Self::init(spec, head_kind, n_head, &mut rng)?;
        for l in &mut net.layers {
            l.weight.fill(0.0);
        }
        Ok(net)
    }

    pub fn conv(&self) -> &Layer {
        &self.layers[0]
    }

    pub fn bottleneck_index(&self) -> usize {
        self.layers.len() - 2
    }

    pub fn head(&self) -> &Layer {
        self.layers.last().unwrap()
    }

    pub fn head_mut(&mut self) -> &mut Layer {
        self.layers.last_mut().unwrap()
    }

    pub fn n_head_outputs(&self) -> usize {
        self.head().bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Layer::is_finite)
    }

    /// Checks layer shapes against the spec.
    pub fn validate(&self) -> Result<()> {
        let s = &self.spec;
        s.validate()?;
        let (_, fh, fw) = s.conv;
        let mut expect = vec![(s.n_filters(), fh * fw)];
        let mut width = s.n_filters() * s.conv_positions();
        for _ in 0..s.fc_layers {
            expect.push((s.hidden_width(), width));
            width = s.hidden_width();
        }
        expect.push((s.bottleneck_width(), width));
        expect.push((self.n_head_outputs(), s.bottleneck_width()));
        if self.layers.len() != expect.len()
            || self.input_mean.len() != s.n_mels
            || self.input_scale.len() != s.n_mels
        {
            return Err(Error::invalid(
                "network layer count does not match its spec",
            ));
        }
        for (l, (r, c)) in self.layers.iter().zip(expect) {
            if l.weight.shape() != (r, c) || l.bias.len() != r {
                return Err(Error::invalid(format!(
                    "layer {} has shape {:?}, expected ({r}, {c})",
                    l.name,
                    l.weight.shape()
                )));
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.spec.input_len() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_len(),
                actual: x.nrows(),
            });
        }
        Ok(())
    }

    fn normalize(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.spec.n_mels;
        let mut out = x.clone();
        for mut col in out.column_iter_mut() {
            for (i, v) in col.iter_mut().enumerate() {
                *v = (*v - self.input_mean[i % m]) * self.input_scale[i % m];
            }
        }
        out
    }

    /// Valid-padding patches: `(filter_h * filter_w) x (batch * positions)`.
    fn im2col(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let s = &self.spec;
        let (_, fh, fw) = s.conv;
        let ow = s.n_mels - fw + 1;
        let p = s.conv_positions();
        let b = x.ncols();
        let mut cols = DMatrix::zeros(fh * fw, b * p);
        for (si, sample) in x.column_iter().enumerate() {
            for pos in 0..p {
                let (i, j) = (pos / ow, pos % ow);
                let mut col = cols.column_mut(si * p + pos);
                for r in 0..fh {
                    let src = (i + r) * s.n_mels + j;
                    for c in 0..fw {
                        col[r * fw + c] = sample[src + c];
                    }
                }
            }
        }
        cols
    }

    fn forward(&self, x: &DMatrix<f64>, upto_bottleneck: bool) -> Forward {
        let xn = self.normalize(x);
        let cols = self.im2col(&xn);
        let b = x.ncols();
        let p = self.spec.conv_positions();
        let nf = self.conv().bias.len();
        let z = self.conv().affine(&cols);
        let mut h = DMatrix::zeros(nf * p, b);
        for s in 0..b {
            for f in 0..nf {
                for pos in 0..p {
                    h[(f * p + pos, s)] = z[(f, s * p + pos)];
                }
            }
        }
        let bi = self.bottleneck_index();
        let mut inputs = Vec::with_capacity(self.layers.len() - 1);
        let mut pre = Vec::with_capacity(bi - 1);
        for layer in &self.layers[1..bi] {
            let a = layer.affine(&h);
            let next = a.map(selu);
            inputs.push(h);
            pre.push(a);
            h = next;
        }
        let bottleneck = self.layers[bi].affine(&h);
        inputs.push(h);
        let output = if upto_bottleneck {
            bottleneck
        } else {
            let y = self.head().affine(&bottleneck);
            inputs.push(bottleneck);
            y
        };
        Forward {
            cols,
            inputs,
            pre,
            output,
        }
    }

    /// Bottleneck activations, one column per input column.
    pub fn bottleneck_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x, true).output)
    }

    /// Head outputs before any softmax.
    pub fn logits_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x, false).output)
    }

    /// Head output per column: posteriors for a softmax head, coefficients
    /// for a regression head.
    pub fn output_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut y = self.logits_batch(x)?;
        if self.head_kind == HeadKind::Softmax {
            for mut col in y.column_iter_mut() {
                let p = softmax(col.as_slice());
                col.copy_from_slice(&p);
            }
        }
        Ok(y)
    }

    /// Head applied to given bottleneck activations.
    pub fn head_from_bottleneck(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        self.head().affine(z)
    }

    fn window_matrix(&self, window: &ContextWindow) -> Result<DMatrix<f64>> {
        if window.context != self.spec.context || window.n_mels != self.spec.n_mels {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_len(),
                actual: window.context * window.n_mels,
            });
        }
        Ok(DMatrix::from_column_slice(
            window.block.len(),
            1,
            &window.block,
        ))
    }

    /// Senone posteriors for one window.
    pub fn forward_am(&self, window: &ContextWindow) -> Result<Vec<f64>> {
        if self.head_kind != HeadKind::Softmax {
            return Err(Error::invalid("forward_am needs a softmax head"));
        }
        Ok(self
            .output_batch(&self.window_matrix(window)?)?
            .as_slice()
            .to_vec())
    }

    pub fn bottleneck_features(&self, window: &ContextWindow) -> Result<Vec<f64>> {
        Ok(self
            .bottleneck_batch(&self.window_matrix(window)?)?
            .as_slice()
            .to_vec())
    }

    /// Regression output for one window.
    pub fn forward_regression(&self, window: &ContextWindow) -> Result<Vec<f64>> {
        if self.head_kind != HeadKind::Regression {
            return Err(Error::NotRegression);
        }
        Ok(self
            .logits_batch(&self.window_matrix(window)?)?
            .as_slice()
            .to_vec())
    }

    /// Mean batch loss and gradients for every layer from `lowest` upward.
    /// Cross-entropy for a softmax head, mean absolute error (subgradient 0
    /// at a zero residual) for a regression head.
    pub fn loss_and_gradients(
        &self,
        x: &DMatrix<f64>,
        target: &LossTarget,
        lowest: usize,
    ) -> Result<(f64, Gradients)> {
        let (loss, grads, _) = self.loss_gradients_output(x, target, lowest)?;
        Ok((loss, grads))
    }

    /// As [`Self::loss_and_gradients`], also returning the head output.
    pub(super) fn loss_gradients_output(
        &self,
        x: &DMatrix<f64>,
        target: &LossTarget,
        lowest: usize,
    ) -> Result<(f64, Gradients, DMatrix<f64>)> {
        self.check_input(x)?;
        let mut fwd = self.forward(x, false);
        let (loss, dy) = loss_grad(self.head_kind, &fwd.output, target)?;
        let grads = self.backward(&fwd, dy, lowest);
        Ok((loss, grads, std::mem::take(&mut fwd.output)))
    }

    fn backward(&self, fwd: &Forward, dy: DMatrix<f64>, lowest: usize) -> Gradients {
        let n = self.layers.len();
        let mut grads: Gradients = vec![None; n];
        let mut delta = dy;
        for li in (lowest.max(1)..n).rev() {
            let input = &fwd.inputs[li - 1];
            let layer = &self.layers[li];
            let bi = self.bottleneck_index();
            if li < bi {
                // hidden layer: through the SELU first
                delta.zip_apply(&fwd.pre[li - 1], |d, a| *d *= selu_grad(a));
            }
            grads[li] = Some((&delta * input.transpose(), row_sums(&delta)));
            if li > lowest {
                delta = layer.weight.transpose() * &delta;
            }
        }
        if lowest == 0 {
            let p = self.spec.conv_positions();
            let nf = self.conv().bias.len();
            let b = delta.ncols();
            let mut dz = DMatrix::zeros(nf, b * p);
            for s in 0..b {
                for f in 0..nf {
                    for pos in 0..p {
                        dz[(f, s * p + pos)] = delta[(f * p + pos, s)];
                    }
                }
            }
            grads[0] = Some((&dz * fwd.cols.transpose(), row_sums(&dz)));
        }
        grads
    }

    /// Index of the lowest layer that is not frozen.
    pub fn lowest_trainable(&self) -> Option<usize> {
        self.layers.iter().position(|l| !l.frozen)
    }

    /// Plain SGD step on every non-frozen layer with a gradient.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            if let (false, Some((dw, db))) = (layer.frozen, g) {
                layer.weight.zip_apply(dw, |w, d| *w -= learning_rate * d);
                layer.bias.zip_apply(db, |w, d| *w -= learning_rate * d);
            }
        }
    }
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

/// Mean loss over the batch and its gradient with respect to the head output.
pub(super) fn loss_grad(
    kind: HeadKind,
    y: &DMatrix<f64>,
    target: &LossTarget,
) -> Result<(f64, DMatrix<f64>)> {
    let b = y.ncols();
    match (kind, target) {
        (HeadKind::Softmax, LossTarget::Labels(labels)) => {
            if labels.len() != b {
                return Err(Error::DimensionMismatch {
                    expected: b,
                    actual: labels.len(),
                });
            }
            let mut dy = DMatrix::zeros(y.nrows(), b);
            let mut loss = 0.0;
            for (s, &label) in labels.iter().enumerate() {
                if label >= y.nrows() {
                    return Err(Error::invalid(format!(
                        "label {label} out of range for {} outputs",
                        y.nrows()
                    )));
                }
                let p = softmax(y.column(s).as_slice());
                loss -= p[label].max(f64::MIN_POSITIVE).ln();
                for (k, pk) in p.iter().enumerate() {
                    dy[(k, s)] = (pk - if k == label { 1.0 } else { 0.0 }) / b as f64;
                }
            }
            Ok((loss / b as f64, dy))
        }
        (HeadKind::Regression, LossTarget::Values(t)) => {
            if t.shape() != y.shape() {
                return Err(Error::DimensionMismatch {
                    expected: y.len(),
                    actual: t.len(),
                });
            }
            let n = y.len() as f64;
            let r = y - *t;
            let loss = r.iter().map(|v| v.abs()).sum::<f64>() / n;
            let dy = r.map(|v| {
                if v > 0.0 {
                    1.0 / n
                } else if v < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                }
            });
            Ok((loss, dy))
        }
        _ => Err(Error::invalid(
            "loss target does not match the network head",
        )),
    }
}
