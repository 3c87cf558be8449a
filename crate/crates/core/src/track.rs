//! Timestamped blendshape coefficient tracks and their CSV form.
//!
//! CSV layout: optional `#` comment lines (`# fps=60`, provenance), a header
//! `time,<name>,...`, then one row per frame with 6-decimal values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTrack {
    pub names: Vec<String>,
    pub fps: f64,
    /// `frames[t][c]`
    pub frames: Vec<Vec<f64>>,
}

impl CoefficientTrack {
    pub fn new(names: Vec<String>, fps: f64, frames: Vec<Vec<f64>>) -> Result<Self> {
        if !(fps > 0.0) {
            return Err(Error::invalid("track fps must be positive"));
        }
        if let Some(row) = frames.iter().find(|r| r.len() != names.len()) {
            return Err(Error::DimensionMismatch {
                expected: names.len(),
                actual: row.len(),
            });
        }
        Ok(Self { names, fps, frames })
    }

    pub fn zeros(names: Vec<String>, fps: f64, n_frames: usize) -> Self {
        let n = names.len();
        Self {
            names,
            fps,
            frames: vec![vec![0.0; n]; n_frames],
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_channels(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn time(&self, t: usize) -> f64 {
        t as f64 / self.fps
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.frames.iter().map(|r| r[c]).collect()
    }

    pub fn set_channel(&mut self, c: usize, values: &[f64]) {
        for (row, &v) in self.frames.iter_mut().zip(values) {
            row[c] = v;
        }
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.names.len() == other.names.len() && self.frames.len() == other.frames.len()
    }

    pub fn to_csv(&self, provenance: Option<&str>) -> String {
        let mut out = String::new();
        writeln!(out, "# fps={}", self.fps).unwrap();
        if let Some(p) = provenance {
            writeln!(out, "# {p}").unwrap();
        }
        out.push_str("time");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, row) in self.frames.iter().enumerate() {
            write!(out, "{:.6}", self.time(t)).unwrap();
            for v in row {
                write!(out, ",{v:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: String| Error::format("coefficient track", m);
        let mut fps = None;
        let mut header: Option<Vec<String>> = None;
        let mut times = Vec::new();
        let mut frames = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("fps=") {
                    fps = Some(
                        v.parse::<f64>()
                            .map_err(|_| bad(format!("bad fps {v:?}")))?,
                    );
                }
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            match &header {
                None => {
                    if cells.first() != Some(&"time") {
                        return Err(bad("first column must be `time`".into()));
                    }
                    header = Some(cells[1..].iter().map(|s| s.to_string()).collect());
                }
                Some(h) => {
                    if cells.len() != h.len() + 1 {
                        return Err(bad(format!(
                            "row {} has {} cells",
                            frames.len(),
                            cells.len()
                        )));
                    }
                    let vals = cells
                        .iter()
                        .map(|c| {
                            c.parse::<f64>()
                                .map_err(|_| bad(format!("bad value {c:?}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    times.push(vals[0]);
                    frames.push(vals[1..].to_vec());
                }
            }
        }
        let names = header.ok_or_else(|| bad("missing header".into()))?;
        let fps = match fps {
            Some(f) => f,
            None if times.len() >= 2 => 1.0 / (times[1] - times[0]),
            None => return Err(bad("cannot determine fps".into())),
        };
        Self::new(names, fps, frames)
    }

    pub fn write_csv(&self, path: &Path, provenance: Option<&str>) -> Result<()> {
        fs::write(path, self.to_csv(provenance)).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(path.display().to_string(), message),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_at_six_decimals() {
        let t = CoefficientTrack::new(
            vec!["lip_pucker".into(), "jaw_open".into()],
            60.0,
            vec![vec![0.25, 0.5], vec![0.125, 1.0], vec![0.0, 0.333333]],
        )
        .unwrap();
        let csv = t.to_csv(Some("config_hash=abc seed=3"));
        assert!(csv.contains("time,lip_pucker,jaw_open"));
        assert!(csv.contains("0.016667,0.125000,1.000000"));
        let back = CoefficientTrack::from_csv(&csv).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv(Some("config_hash=abc seed=3")), csv);
    }

    #[test]
    fn rejects_ragged_rows() {
        assert!(CoefficientTrack::new(vec!["a".into()], 60.0, vec![vec![0.0, 1.0]]).is_err());
        assert!(CoefficientTrack::from_csv("time,a\n0.0,1,2\n").is_err());
        assert!(CoefficientTrack::from_csv("a,b\n").is_err());
    }
}
