//! Output smoothing for predicted coefficient tracks: centered moving median,
//! trailing-window bias removal, articulation gain and clamping.

use crate::error::{Error, Result};
use crate::track::CoefficientTrack;

#[derive(Debug, Clone, PartialEq)]
pub struct PostprocConfig {
    pub median_len: usize,
    pub bias_window: usize,
    pub global_scale: f64,
    pub special_scale: f64,
    pub special_channels: Vec<String>,
    pub clamp: bool,
    /// Subtract one bias shared by all channels (their mean) instead of a
    /// per-channel bias.
    pub shared_bias: bool,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self {
            median_len: 5,
            bias_window: 60,
            global_scale: 1.5,
            special_scale: 2.5,
            special_channels: vec!["lip_pucker".into(), "lip_funnel".into()],
            clamp: true,
            shared_bias: false,
        }
    }
}

impl PostprocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.median_len.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "median length must be odd, got {}",
                self.median_len
            )));
        }
        if self.bias_window == 0 {
            return Err(Error::Config("bias window must be at least 1".into()));
        }
        if !(self.global_scale > 0.0) || !(self.special_scale > 0.0) {
            return Err(Error::Config("scales must be positive".into()));
        }
        Ok(())
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Centered moving median per channel; the window shrinks at the ends. An
/// even-sized edge window takes the mean of its two middle values.
pub fn moving_median(track: &CoefficientTrack, len: usize) -> Result<CoefficientTrack> {
    if len.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "median length must be odd, got {len}"
        )));
    }
    let n = track.n_frames();
    let h = len / 2;
    let mut out = track.clone();
    let mut buf = Vec::with_capacity(len);
    for c in 0..track.n_channels() {
        for t in 0..n {
            buf.clear();
            buf.extend(
                track.frames[t.saturating_sub(h)..(t + h + 1).min(n)]
                    .iter()
                    .map(|r| r[c]),
            );
            out.frames[t][c] = median(&mut buf);
        }
    }
    Ok(out)
}

/// Trailing-window lower envelope of one channel: the running minimum,
/// averaged over the same trailing window. The average is clamped to the
/// range of the minima it averages so rounding cannot push it outside.
fn lower_envelope(x: &[f64], window: usize) -> Vec<f64> {
    let trailing = |t: usize| (t + 1).saturating_sub(window)..=t;
    let mins: Vec<f64> = (0..x.len())
        .map(|t| x[trailing(t)].iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    (0..mins.len())
        .map(|t| {
            let w = &mins[trailing(t)];
            let lo = w.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (w.iter().sum::<f64>() / w.len() as f64).clamp(lo, hi)
        })
        .collect()
}

pub fn bias_normalize(track: &CoefficientTrack, window: usize) -> Result<CoefficientTrack> {
    bias_normalize_with(track, window, false)
}

/// Subtracts the trailing lower envelope and floors at zero. With
/// `shared_bias` every channel uses the cross-channel mean envelope.
pub fn bias_normalize_with(
    track: &CoefficientTrack,
    window: usize,
    shared_bias: bool,
) -> Result<CoefficientTrack> {
    if track.is_empty() {
        return Err(Error::invalid("empty track"));
    }
    if window == 0 {
        return Err(Error::invalid("bias window must be at least 1"));
    }
    let k = track.n_channels();
    let mut bias: Vec<Vec<f64>> = (0..k)
        .map(|c| lower_envelope(&track.channel(c), window))
        .collect();
    if shared_bias && k > 0 {
        let mean: Vec<f64> = (0..track.n_frames())
            .map(|t| bias.iter().map(|b| b[t]).sum::<f64>() / k as f64)
            .collect();
        bias = vec![mean; k];
    }
    let mut out = track.clone();
    for (t, row) in out.frames.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = (*v - bias[c][t]).max(0.0);
        }
    }
    Ok(out)
}

pub fn boost(track: &CoefficientTrack, cfg: &PostprocConfig) -> Result<CoefficientTrack> {
    let special = cfg
        .special_channels
        .iter()
        .map(|name| {
            track
                .channel_index(name)
                .ok_or_else(|| Error::invalid(format!("unknown channel {name:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = track.clone();
    for row in &mut out.frames {
        for (c, v) in row.iter_mut().enumerate() {
            let s = if special.contains(&c) {
                cfg.special_scale
            } else {
                cfg.global_scale
            };
            *v = round_sig15(*v * s);
            if cfg.clamp {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
    Ok(out)
}

/// Rounds to 15 significant digits, so a product such as `0.4 * 1.5` lands
/// on the double nearest `0.6` rather than one ulp above it.
fn round_sig15(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.14e}").parse().unwrap_or(v)
}

/// Median, then bias normalization, then boost.
pub fn postprocess(track: &CoefficientTrack, cfg: &PostprocConfig) -> Result<CoefficientTrack> {
    cfg.validate()?;
    let smoothed = moving_median(track, cfg.median_len)?;
    let unbiased = bias_normalize_with(&smoothed, cfg.bias_window, cfg.shared_bias)?;
    boost(&unbiased, cfg)
}
