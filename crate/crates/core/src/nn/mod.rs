//! Convolutional acoustic model and its regression adaptation.
//!
//! Topology: one valid-padded convolution over the `context x n_mels`
//! window, flatten, `fc_layers` affine + SELU layers, a linear bottleneck and
//! an output head (softmax over senones, or a linear regression onto
//! blendshape coefficients). Batches are matrices with one column per sample.

mod checkpoint;
mod data;
mod network;
mod train;

#[cfg(test)]
mod tests;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use data::Dataset;
pub use network::{Gradients, HeadKind, Layer, LossTarget, NetworkParameters};
pub use train::{
    adapt_to_regression, adapt_with, frame_accuracy, random_baseline, regression_mae, train_am,
    train_regression, AdaptOptions, EpochRecord, TrainingLog,
};

use crate::error::{Error, Result};

pub const SELU_LAMBDA: f64 = 1.0507009873554805;
pub const SELU_ALPHA: f64 = 1.6732632423543772;

/// Output size of the regression head that replaces the softmax.
pub const REGRESSION_OUTPUTS: usize = 32;

pub fn selu(v: f64) -> f64 {
    if v > 0.0 {
        SELU_LAMBDA * v
    } else {
        SELU_LAMBDA * SELU_ALPHA * (v.exp() - 1.0)
    }
}

/// Derivative of [`selu`]; the left branch is used at 0.
pub fn selu_grad(v: f64) -> f64 {
    if v > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * v.exp()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Layer sizes. `scale` shrinks the filter count and every hidden width
/// (not the output count) for desk-scale runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkSpec {
    /// `(n_filters, filter_h, filter_w)`.
    pub conv: (usize, usize, usize),
    pub fc_layers: usize,
    pub fc_width: usize,
    pub bottleneck: usize,
    pub n_outputs: usize,
    pub context: usize,
    pub n_mels: usize,
    pub scale: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            conv: (128, 21, 8),
            fc_layers: 5,
            fc_width: 1024,
            bottleneck: 512,
            n_outputs: 8419,
            context: 21,
            n_mels: 40,
            scale: 1.0,
        }
    }
}

impl NetworkSpec {
    /// Full topology at 1/8 width with `n_outputs` classes.
    pub fn desk(n_outputs: usize) -> Self {
        Self {
            n_outputs,
            scale: 0.125,
            ..Self::default()
        }
    }

    fn scaled(&self, width: usize) -> usize {
        ((width as f64 * self.scale).round() as usize).max(1)
    }

    pub fn n_filters(&self) -> usize {
        self.scaled(self.conv.0)
    }

    pub fn hidden_width(&self) -> usize {
        self.scaled(self.fc_width)
    }

    pub fn bottleneck_width(&self) -> usize {
        self.scaled(self.bottleneck)
    }

    /// Convolution output positions per filter (`out_h * out_w`).
    pub fn conv_positions(&self) -> usize {
        (self.context - self.conv.1 + 1) * (self.n_mels - self.conv.2 + 1)
    }

    pub fn input_len(&self) -> usize {
        self.context * self.n_mels
    }

    pub fn validate(&self) -> Result<()> {
        let (f, h, w) = self.conv;
        if [
            f,
            h,
            w,
            self.fc_width,
            self.bottleneck,
            self.n_outputs,
            self.context,
            self.n_mels,
        ]
        .contains(&0)
        {
            return Err(Error::Config("network sizes must be positive".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if h > self.context || w > self.n_mels {
            return Err(Error::Config(format!(
                "filter {h}x{w} does not fit a {}x{} window",
                self.context, self.n_mels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    CrossEntropy,
    Mae,
}

impl Loss {
    pub fn as_str(&self) -> &'static str {
        match self {
            Loss::CrossEntropy => "cross_entropy",
            Loss::Mae => "mae",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cross_entropy" | "ce" => Ok(Loss::CrossEntropy),
            "mae" => Ok(Loss::Mae),
            _ => Err(Error::Config(format!("unknown loss {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub loss: Loss,
    /// Fit per-channel input mean / scale on the training features when the
    /// first layer is trainable.
    pub normalize_inputs: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 0.01,
            epochs: 20,
            seed: 0,
            loss: Loss::CrossEntropy,
            normalize_inputs: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}
