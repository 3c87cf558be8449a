//! Mel scale conversions and the triangular filterbank.

/// Hz to mel, `2595 * log10(1 + f / 700)`.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of `n_mels` filters spaced evenly in mel between
/// 0 Hz and `sample_rate / 2`.
pub fn center_frequencies(n_mels: usize, sample_rate: f64) -> Vec<f64> {
    edge_frequencies(n_mels, sample_rate)[1..=n_mels].to_vec()
}

fn edge_frequencies(n_mels: usize, sample_rate: f64) -> Vec<f64> {
    let top = hz_to_mel(sample_rate / 2.0);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect()
}

/// Triangular filters with unit peak, one row per filter, one column per
/// non-negative FFT bin (`fft_size / 2 + 1`).
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, fft_size: usize, sample_rate: f64) -> Self {
        let edges = edge_frequencies(n_mels, sample_rate);
        let n_bins = fft_size / 2 + 1;
        let bin_hz = sample_rate / fft_size as f64;
        let weights = (0..n_mels)
            .map(|m| {
                let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f <= lo || f >= hi {
                            0.0
                        } else if f <= mid {
                            (f - lo) / (mid - lo)
                        } else {
                            (hi - f) / (hi - mid)
                        }
                    })
                    .collect()
            })
            .collect();
        Self { weights }
    }

    pub fn n_mels(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Filter energies for one power spectrum.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.weights) {
            *o = row.iter().zip(power).map(|(w, p)| w * p).sum();
        }
    }
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / denom).cos())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_round_trip() {
        for hz in [0.0, 100.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn filters_have_unit_peak_and_span_to_nyquist() {
        let fb = MelFilterbank::new(40, 512, 16000.0);
        assert_eq!(fb.n_mels(), 40);
        let centers = center_frequencies(40, 16000.0);
        assert!(centers.windows(2).all(|w| w[0] < w[1]));
        assert!(*centers.last().unwrap() < 8000.0);
        for row in fb.weights() {
            let peak = row.iter().cloned().fold(0.0, f64::max);
            assert!(peak <= 1.0 && peak > 0.3);
        }
    }

    #[test]
    fn hamming_endpoints() {
        let w = hamming(400);
        assert!((w[0] - 0.08).abs() < 1e-12);
        assert!((w[399] - 0.08).abs() < 1e-12);
    }
}
