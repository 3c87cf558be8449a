use super::FeatureFrame;
use crate::error::{Error, Result};

/// `context` consecutive frames centered on `center_index`, row-major
/// (`context` rows of `n_mels` values).
#[derive(Debug, Clone, PartialEq)]
pub struct ContextWindow {
    pub block: Vec<f64>,
    pub context: usize,
    pub n_mels: usize,
    pub center_index: usize,
}

impl ContextWindow {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.block[r * self.n_mels..(r + 1) * self.n_mels]
    }
}

/// Copies the context block for frame `t` of a flat row-major feature matrix
/// into `out`. Rows before the first / after the last frame replicate the edge.
pub fn context_rows(features: &[f64], n_mels: usize, t: usize, context: usize, out: &mut [f64]) {
    let n_frames = features.len() / n_mels;
    let half = (context / 2) as isize;
    for r in 0..context {
        let src = (t as isize + r as isize - half).clamp(0, n_frames as isize - 1) as usize;
        out[r * n_mels..(r + 1) * n_mels]
            .copy_from_slice(&features[src * n_mels..(src + 1) * n_mels]);
    }
}

/// One window per input frame, edge frames replicated at the boundaries.
pub fn stack_context(frames: &[FeatureFrame], context: usize) -> Result<Vec<ContextWindow>> {
    if context.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "context must be odd, got {context}"
        )));
    }
    if frames.is_empty() {
        return Err(Error::invalid("no frames to stack"));
    }
    let n_mels = frames[0].coefficients.len();
    let mut flat = Vec::with_capacity(frames.len() * n_mels);
    for f in frames {
        if f.coefficients.len() != n_mels {
            return Err(Error::DimensionMismatch {
                expected: n_mels,
                actual: f.coefficients.len(),
            });
        }
        flat.extend_from_slice(&f.coefficients);
    }
    Ok((0..frames.len())
        .map(|t| {
            let mut block = vec![0.0; context * n_mels];
            context_rows(&flat, n_mels, t, context, &mut block);
            ContextWindow {
                block,
                context,
                n_mels,
                center_index: t,
            }
        })
        .collect())
}
