use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::frontend::{context_rows, ContextWindow};

/// Frame-level training set. Feature sequences are stored once and context
/// windows are cut on demand, edge frames replicated.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub context: usize,
    pub n_mels: usize,
    sequences: Vec<Vec<f64>>,
    samples: Vec<(usize, usize)>,
    targets: Vec<T>,
}

impl<T: Clone> Dataset<T> {
    pub fn new(context: usize, n_mels: usize) -> Result<Self> {
        if context.is_multiple_of(2) || n_mels == 0 {
            return Err(Error::invalid(format!(
                "need odd context and n_mels >= 1, got {context} and {n_mels}"
            )));
        }
        Ok(Self {
            context,
            n_mels,
            sequences: Vec::new(),
            samples: Vec::new(),
            targets: Vec::new(),
        })
    }

    /// Adds a row-major `frames x n_mels` sequence with one target per frame.
    pub fn push_sequence(&mut self, features: Vec<f64>, targets: Vec<T>) -> Result<()> {
        if features.len() != targets.len() * self.n_mels || targets.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: targets.len() * self.n_mels,
                actual: features.len(),
            });
        }
        let s = self.sequences.len();
        self.samples.extend((0..targets.len()).map(|t| (s, t)));
        self.targets.extend(targets);
        self.sequences.push(features);
        Ok(())
    }

    /// One sample per window; each block is stored as its own sequence.
    pub fn from_windows(windows: Vec<(ContextWindow, T)>) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::invalid("empty dataset"))?;
        let mut data = Self::new(first.0.context, first.0.n_mels)?;
        for (w, target) in windows {
            if w.context != data.context || w.n_mels != data.n_mels {
                return Err(Error::DimensionMismatch {
                    expected: data.context * data.n_mels,
                    actual: w.context * w.n_mels,
                });
            }
            let s = data.sequences.len();
            data.samples.push((s, data.context / 2));
            data.targets.push(target);
            data.sequences.push(w.block);
        }
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn target(&self, i: usize) -> &T {
        &self.targets[i]
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn sequences(&self) -> &[Vec<f64>] {
        &self.sequences
    }

    pub fn window(&self, i: usize, out: &mut [f64]) {
        let (s, t) = self.samples[i];
        context_rows(&self.sequences[s], self.n_mels, t, self.context, out);
    }

    /// Windows for `indices` as columns.
    pub fn batch(&self, indices: &[usize]) -> DMatrix<f64> {
        let len = self.context * self.n_mels;
        let mut m = DMatrix::zeros(len, indices.len());
        for (c, &i) in indices.iter().enumerate() {
            self.window(i, m.column_mut(c).as_mut_slice());
        }
        m
    }

    /// Per-channel mean and reciprocal standard deviation over all stored
    /// frames.
    pub fn channel_stats(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.n_mels;
        let mut sum = vec![0.0; m];
        let mut n = 0usize;
        for s in &self.sequences {
            for row in s.chunks_exact(m) {
                for (a, v) in sum.iter_mut().zip(row) {
                    *a += v;
                }
                n += 1;
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n.max(1) as f64).collect();
        let mut var = vec![0.0; m];
        for s in &self.sequences {
            for row in s.chunks_exact(m) {
                for ((a, v), mu) in var.iter_mut().zip(row).zip(&mean) {
                    *a += (v - mu) * (v - mu);
                }
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n.max(1) as f64).sqrt();
                if sd > 1e-8 {
                    1.0 / sd
                } else {
                    1.0
                }
            })
            .collect();
        (mean, scale)
    }
}
