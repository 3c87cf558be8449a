//! Binary feature files, text label files and WAV audio.
//!
//! Feature layout (little-endian): `b"LMFB"`, `u32` version, `u32` n_frames,
//! `u32` n_mels, `f64` hop seconds, then `n_frames * n_mels` `f32` values
//! row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{FeatureFrame, LabelTrack, Waveform};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"LMFB";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

/// Feature matrix as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub hop: f64,
    pub n_mels: usize,
    pub data: Vec<f32>,
}

impl FeatureFile {
    pub fn from_frames(frames: &[FeatureFrame], hop: f64) -> Result<Self> {
        let n_mels = frames.first().map_or(0, |f| f.coefficients.len());
        let mut data = Vec::with_capacity(frames.len() * n_mels);
        for f in frames {
            if f.coefficients.len() != n_mels {
                return Err(Error::DimensionMismatch {
                    expected: n_mels,
                    actual: f.coefficients.len(),
                });
            }
            data.extend(f.coefficients.iter().map(|&c| c as f32));
        }
        Ok(Self { hop, n_mels, data })
    }

    pub fn n_frames(&self) -> usize {
        if self.n_mels == 0 {
            0
        } else {
            self.data.len() / self.n_mels
        }
    }

    /// Row-major values widened to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn frames(&self) -> Vec<FeatureFrame> {
        (0..self.n_frames())
            .map(|t| FeatureFrame {
                coefficients: self.data[t * self.n_mels..(t + 1) * self.n_mels]
                    .iter()
                    .map(|&v| v as f64)
                    .collect(),
                frame_index: t,
                time: t as f64 * self.hop,
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_mels as u32).to_le_bytes());
        out.extend_from_slice(&self.hop.to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::format("feature file", m);
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(bad("missing LMFB header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u32_at(4);
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n_frames = u32_at(8) as usize;
        let n_mels = u32_at(12) as usize;
        let hop = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let body = &bytes[HEADER_LEN..];
        if body.len() != n_frames * n_mels * 4 {
            return Err(bad("body length does not match header"));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { hop, n_mels, data })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn write_labels(path: &Path, track: &LabelTrack, provenance: Option<&str>) -> Result<()> {
    let mut out = Vec::new();
    if let Some(p) = provenance {
        writeln!(out, "# {p}").unwrap();
    }
    writeln!(out, "rate={}", track.frame_rate).unwrap();
    for l in &track.labels {
        writeln!(out, "{l}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn parse_labels(text: &str) -> Result<LabelTrack> {
    let bad = |m: String| Error::format("label file", m);
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| bad("missing rate header".into()))?;
    let frame_rate: f64 = header
        .strip_prefix("rate=")
        .and_then(|r| r.trim().parse().ok())
        .ok_or_else(|| bad(format!("bad header {header:?}")))?;
    let labels = lines
        .map(|l| l.parse().map_err(|_| bad(format!("bad label {l:?}"))))
        .collect::<Result<Vec<usize>>>()?;
    Ok(LabelTrack { labels, frame_rate })
}

pub fn read_labels(path: &Path) -> Result<LabelTrack> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

/// Writes mono 32-bit float PCM, so samples round-trip exactly.
pub fn write_wav(path: &Path, wav: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wav.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let err = |e: hound::Error| Error::format(path.display().to_string(), e.to_string());
    let mut w = hound::WavWriter::create(path, spec).map_err(err)?;
    for &s in &wav.samples {
        w.write_sample(s).map_err(err)?;
    }
    w.finalize().map_err(err)
}

/// Reads float or integer PCM; multi-channel audio is averaged to mono.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path.display().to_string(), other.to_string()),
    };
    let mut r = hound::WavReader::open(path).map_err(err)?;
    let spec = r.spec();
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(err)?,
        hound::SampleFormat::Int => {
            let full = (1i64 << (spec.bits_per_sample - 1)) as f32;
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f32 / full))
                .collect::<std::result::Result<_, _>>()
                .map_err(err)?
        }
    };
    let ch = spec.channels.max(1) as usize;
    let samples = interleaved
        .chunks_exact(ch)
        .map(|c| c.iter().sum::<f32>() / ch as f32)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn feature_bytes_round_trip(
            n_mels in 1usize..6,
            rows in proptest::collection::vec(proptest::collection::vec(any::<f32>(), 6), 0..8),
            hop in 1e-4f64..1.0,
        ) {
            let data: Vec<f32> = rows.iter().flat_map(|r| r[..n_mels].to_vec()).collect();
            let file = FeatureFile { hop, n_mels, data };
            let bytes = file.to_bytes();
            let back = FeatureFile::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            prop_assert_eq!(back.hop.to_bits(), hop.to_bits());
        }
    }

    #[test]
    fn rejects_corrupt_feature_files() {
        assert!(FeatureFile::from_bytes(b"NOPE").is_err());
        let mut bytes = FeatureFile {
            hop: 0.01,
            n_mels: 2,
            data: vec![1.0, 2.0],
        }
        .to_bytes();
        bytes.pop();
        assert!(FeatureFile::from_bytes(&bytes).is_err());
    }

    #[test]
    fn label_text_round_trip() {
        let track = LabelTrack {
            labels: vec![0, 7, 7, 63],
            frame_rate: 60.0,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.txt");
        write_labels(&p, &track, Some("seed=1")).unwrap();
        assert_eq!(read_labels(&p).unwrap(), track);
        assert!(parse_labels("7\n").is_err());
    }

    #[test]
    fn wav_round_trip_is_exact() {
        let wav = Waveform::new(vec![0.0, 0.5, -0.25, 1e-7, -1.0], 16_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_wav(&p, &wav).unwrap();
        assert_eq!(read_wav(&p).unwrap(), wav);
        assert!(read_wav(&dir.path().join("missing.wav")).is_err());
    }

    #[test]
    fn reads_integer_stereo() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        for s in [16384i16, 0, -32768, -32768] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        let wav = read_wav(&p).unwrap();
        assert_eq!(wav.samples, vec![0.25, -1.0]);
        assert_eq!(wav.sample_rate, 8000);
    }
}
