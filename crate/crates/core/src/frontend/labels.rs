use crate::error::{Error, Result};

/// Per-frame senone ids at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTrack {
    pub labels: Vec<usize>,
    pub frame_rate: f64,
}

impl LabelTrack {
    pub fn duration(&self) -> f64 {
        self.labels.len() as f64 / self.frame_rate
    }

    pub fn check_range(&self, n_senones: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= n_senones) {
            Some(l) => Err(Error::invalid(format!(
                "label {l} outside [0, {n_senones})"
            ))),
            None => Ok(()),
        }
    }
}

/// Nearest-frame resampling: output frame `k` takes input index
/// `round(k * source_rate / target_rate)`, clipped to the track.
pub fn resample_labels(track: &LabelTrack, target_rate: f64) -> Result<LabelTrack> {
    if track.labels.is_empty() {
        return Err(Error::invalid("empty label track"));
    }
    if !(track.frame_rate > 0.0) || !(target_rate > 0.0) {
        return Err(Error::invalid("frame rates must be positive"));
    }
    if track.frame_rate == target_rate {
        return Ok(track.clone());
    }
    let n_out = super::frame_count(track.duration(), target_rate)?;
    let ratio = track.frame_rate / target_rate;
    let last = track.labels.len() - 1;
    let labels = (0..n_out)
        .map(|k| track.labels[((k as f64 * ratio).round() as usize).min(last)])
        .collect();
    Ok(LabelTrack {
        labels,
        frame_rate: target_rate,
    })
}
