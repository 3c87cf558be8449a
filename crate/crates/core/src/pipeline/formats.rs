//! Depth and landmark sequence files.
//!
//! Depth sequence (little-endian): `b"AVDS"`, `u32` version, `u32` frames,
//! `u32` width, `u32` height, `f64` fx, fy, cx, cy, fps; then per frame the
//! bounding box of valid pixels as four `u32` (col, row, width, height) and
//! that box row-major as `f32`. Pixels outside the box, and zeros inside it,
//! carry no depth.
//!
//! Landmark sequence: CSV `frame,vertex,u,v` after `# fps=` and optional
//! provenance comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::face::{Camera, DepthMap};
use crate::solver::LandmarkSet;

const MAGIC: &[u8; 4] = b"AVDS";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DepthSequence {
    pub fps: f64,
    pub camera: Camera,
    pub frames: Vec<DepthMap>,
}

fn bounding_box(d: &DepthMap) -> [usize; 4] {
    let w = d.camera.width;
    let (mut c0, mut r0, mut c1, mut r1) = (usize::MAX, usize::MAX, 0, 0);
    for (i, &z) in d.depths.iter().enumerate() {
        if z > 0.0 {
            let (c, r) = (i % w, i / w);
            c0 = c0.min(c);
            r0 = r0.min(r);
            c1 = c1.max(c + 1);
            r1 = r1.max(r + 1);
        }
    }
    if c0 == usize::MAX {
        [0, 0, 0, 0]
    } else {
        [c0, r0, c1 - c0, r1 - r0]
    }
}

impl DepthSequence {
    /// Depths are stored as `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let cam = &self.camera;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [
            VERSION,
            self.frames.len() as u32,
            cam.width as u32,
            cam.height as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [cam.fx, cam.fy, cam.cx, cam.cy, self.fps] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for d in &self.frames {
            let b = bounding_box(d);
            for v in b {
                out.extend_from_slice(&(v as u32).to_le_bytes());
            }
            for r in b[1]..b[1] + b[3] {
                for c in b[0]..b[0] + b[2] {
                    out.extend_from_slice(&(d.at(c, r) as f32).to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::format("depth sequence", m);
        let mut pos = 0;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut u32s = [0usize; 4];
        for v in &mut u32s {
            *v = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        }
        let [version, n_frames, width, height] = u32s;
        if version != VERSION as usize {
            return Err(bad("unsupported version"));
        }
        let mut f = [0.0; 5];
        for v in &mut f {
            *v = f64::from_le_bytes(take(8)?.try_into().unwrap());
        }
        let camera =
            Camera::new(f[0], f[1], f[2], f[3], width, height).map_err(|e| bad(&e.to_string()))?;
        let mut frames = Vec::with_capacity(n_frames.min(1 << 16));
        for _ in 0..n_frames {
            let mut b = [0usize; 4];
            for v in &mut b {
                *v = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
            }
            if b[0] + b[2] > width || b[1] + b[3] > height {
                return Err(bad("box outside the image"));
            }
            let body = take(b[2] * b[3] * 4)?;
            let mut depths = vec![0.0; width * height];
            for (i, c) in body.chunks_exact(4).enumerate() {
                let (r, col) = (b[1] + i / b[2].max(1), b[0] + i % b[2].max(1));
                depths[r * width + col] = f32::from_le_bytes(c.try_into().unwrap()) as f64;
            }
            frames.push(DepthMap::new(depths, camera).map_err(|e| bad(&e.to_string()))?);
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        if !(f[4] > 0.0) {
            return Err(bad("fps must be positive"));
        }
        Ok(Self {
            fps: f[4],
            camera,
            frames,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(path.display().to_string(), message),
            other => other,
        })
    }
}

pub fn landmarks_to_csv(seq: &[LandmarkSet], fps: f64, provenance: Option<&str>) -> String {
    let mut s = String::new();
    writeln!(s, "# fps={fps}").unwrap();
    if let Some(p) = provenance {
        writeln!(s, "# {p}").unwrap();
    }
    s.push_str("frame,vertex,u,v\n");
    for (t, set) in seq.iter().enumerate() {
        for (j, p) in &set.entries {
            writeln!(s, "{t},{j},{},{}", p.x, p.y).unwrap();
        }
    }
    s
}

/// Parses a landmark sequence with `n_frames` frames; frames without rows
/// get an empty set.
pub fn parse_landmarks(text: &str, n_frames: usize) -> Result<Vec<LandmarkSet>> {
    let bad = |m: String| Error::format("landmark sequence", m);
    let mut out = vec![LandmarkSet::default(); n_frames];
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') || line.starts_with("frame") {
            continue;
        }
        let c: Vec<&str> = line.split(',').map(str::trim).collect();
        if c.len() != 4 {
            return Err(bad(format!("expected 4 columns: {line:?}")));
        }
        let t: usize = c[0]
            .parse()
            .map_err(|_| bad(format!("bad frame {:?}", c[0])))?;
        let j: usize = c[1]
            .parse()
            .map_err(|_| bad(format!("bad vertex {:?}", c[1])))?;
        let u: f64 = c[2].parse().map_err(|_| bad(format!("bad u {:?}", c[2])))?;
        let v: f64 = c[3].parse().map_err(|_| bad(format!("bad v {:?}", c[3])))?;
        let set = out
            .get_mut(t)
            .ok_or_else(|| bad(format!("frame {t} beyond {n_frames} frames")))?;
        set.entries.push((j, Vector2::new(u, v)));
    }
    Ok(out)
}

pub fn read_landmarks(path: &Path, n_frames: usize) -> Result<Vec<LandmarkSet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_landmarks(&text, n_frames)
}
