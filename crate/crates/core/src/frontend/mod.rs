//! Log-mel filterbank frontend: waveform framing, Hamming-windowed power
//! spectra, triangular mel filters and log flooring, plus context stacking
//! and label-rate conversion.

mod context;
pub mod io;
mod labels;
pub mod mel;

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub use context::{context_rows, stack_context, ContextWindow};
pub use labels::{resample_labels, LabelTrack};
pub use mel::MelFilterbank;

/// Mono audio, amplitudes nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Framing and filterbank parameters. Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSpec {
    pub window_len: f64,
    pub hop: f64,
    pub n_mels: usize,
    pub fft_size: usize,
    pub log_floor: f64,
}

impl Default for FrameSpec {
    /// 25 ms Hamming window, 10 ms hop, 40 mel channels.
    fn default() -> Self {
        Self {
            window_len: 0.025,
            hop: 0.010,
            n_mels: 40,
            fft_size: 512,
            log_floor: 1e-10,
        }
    }
}

impl FrameSpec {
    /// Same window, hop set to one video frame (`1 / fps` seconds).
    pub fn at_frame_rate(fps: f64) -> Self {
        Self {
            hop: 1.0 / fps,
            ..Self::default()
        }
    }

    pub fn frame_rate(&self) -> f64 {
        1.0 / self.hop
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hop > 0.0) || !(self.window_len >= self.hop) {
            return Err(Error::invalid(format!(
                "need window_len >= hop > 0 (window {}, hop {})",
                self.window_len, self.hop
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::invalid("n_mels must be at least 1"));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::invalid("log_floor must be positive"));
        }
        Ok(())
    }

    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_len * sample_rate as f64).round() as usize
    }

    /// First sample of frame `t`. Computed from the exact frame time so a
    /// non-integer hop (e.g. 1/60 s at 16 kHz) does not accumulate drift.
    pub fn frame_start(&self, t: usize, sample_rate: u32) -> usize {
        (t as f64 * self.hop * sample_rate as f64).round() as usize
    }
}

/// One log-mel frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub coefficients: Vec<f64>,
    pub frame_index: usize,
    pub time: f64,
}

/// Reusable extractor holding the FFT plan, window and filterbank for one
/// `(FrameSpec, sample_rate)` pair.
pub struct LmfbExtractor {
    spec: FrameSpec,
    sample_rate: u32,
    window: Vec<f64>,
    filterbank: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
}

impl LmfbExtractor {
    pub fn new(spec: FrameSpec, sample_rate: u32) -> Result<Self> {
        spec.validate()?;
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        let win = spec.window_samples(sample_rate);
        if win == 0 {
            return Err(Error::invalid("window shorter than one sample"));
        }
        if spec.fft_size < win {
            return Err(Error::invalid(format!(
                "fft_size {} smaller than window ({} samples)",
                spec.fft_size, win
            )));
        }
        let fft = FftPlanner::new().plan_fft_forward(spec.fft_size);
        Ok(Self {
            spec,
            sample_rate,
            window: mel::hamming(win),
            filterbank: MelFilterbank::new(spec.n_mels, spec.fft_size, sample_rate as f64),
            fft,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Number of frames that fit entirely inside `n_samples`.
    pub fn n_frames(&self, n_samples: usize) -> usize {
        let win = self.window.len();
        if n_samples < win {
            return 0;
        }
        let dur = n_samples as f64 / self.sample_rate as f64;
        let mut n = ((dur - self.spec.window_len) / self.spec.hop + 1e-9).floor() as usize + 1;
        while n > 0 && self.spec.frame_start(n - 1, self.sample_rate) + win > n_samples {
            n -= 1;
        }
        n
    }

    pub fn extract(&self, waveform: &Waveform) -> Result<Vec<FeatureFrame>> {
        if waveform.sample_rate != self.sample_rate {
            return Err(Error::invalid(format!(
                "extractor built for {} Hz, waveform is {} Hz",
                self.sample_rate, waveform.sample_rate
            )));
        }
        let samples = &waveform.samples;
        if samples.is_empty() {
            return Err(Error::invalid("empty waveform"));
        }
        let win = self.window.len();
        if samples.len() < win {
            return Err(Error::WaveformTooShort {
                samples: samples.len(),
                window: win,
            });
        }
        let n_frames = self.n_frames(samples.len());
        let n_bins = self.spec.fft_size / 2 + 1;
        let floor = self.spec.log_floor;

        let mut buf = vec![Complex::new(0.0, 0.0); self.spec.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; n_bins];
        let mut energies = vec![0.0; self.spec.n_mels];
        let mut frames = Vec::with_capacity(n_frames);

        for t in 0..n_frames {
            let start = self.spec.frame_start(t, self.sample_rate);
            for (i, c) in buf.iter_mut().enumerate() {
                *c = if i < win {
                    Complex::new(samples[start + i] as f64 * self.window[i], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            self.filterbank.apply(&power, &mut energies);
            frames.push(FeatureFrame {
                coefficients: energies.iter().map(|&e| e.max(floor).ln()).collect(),
                frame_index: t,
                time: t as f64 * self.spec.hop,
            });
        }
        Ok(frames)
    }
}

/// Log-mel filterbank features for a whole waveform.
pub fn extract_lmfb(waveform: &Waveform, spec: &FrameSpec) -> Result<Vec<FeatureFrame>> {
    LmfbExtractor::new(*spec, waveform.sample_rate)?.extract(waveform)
}

/// Audio span covered by `n_frames` consecutive hops, in milliseconds.
pub fn context_span_ms(n_frames: usize, hop: f64) -> Result<f64> {
    if n_frames == 0 {
        return Err(Error::invalid("context must contain at least one frame"));
    }
    Ok(n_frames as f64 * hop * 1000.0)
}

/// Frames produced by `duration` seconds at `frame_rate`.
pub fn frame_count(duration: f64, frame_rate: f64) -> Result<usize> {
    if !(duration >= 0.0) {
        return Err(Error::invalid(format!("negative duration {duration}")));
    }
    if !(frame_rate > 0.0) {
        return Err(Error::invalid("frame rate must be positive"));
    }
    Ok((duration * frame_rate + 1e-9).floor() as usize)
}
