//! Seeded synthetic corpora: an ellipsoid head with mouth-region blendshapes,
//! smooth coefficient trajectories, audio driven by those coefficients,
//! rendered depth + landmarks, and grid-quantized senone labels.
//!
//! Every generator is a pure function of its config and inputs.

mod raster;

pub use raster::{rasterize_depth, rasterize_smooth};

use std::f64::consts::PI;

use nalgebra::{DMatrix, Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::face::{
    evaluate_unchecked, vertex_normals, BlendshapeBasis, Camera, DepthMap, RigidPose,
};
use crate::frontend::LabelTrack;
use crate::frontend::{frame_count, mel, FrameSpec, Waveform};
use crate::solver::LandmarkSet;
use crate::track::CoefficientTrack;

/// Head ellipsoid semi-axes (mm): width, height, depth.
const AXES: [f64; 3] = [70.0, 95.0, 110.0];
/// Polar extent of the frontal cap.
const CAP_DEG: f64 = 80.0;
/// Distance from camera to head center (mm).
const HEAD_DISTANCE: f64 = 600.0;
/// Mouth center on the ellipsoid, as (polar, azimuth) degrees; +y is down.
const MOUTH: (f64, f64) = (38.0, 90.0);
/// Width (mm) of the Gaussian envelope of every blendshape field.
const ENVELOPE: f64 = 18.0;
/// (horizontal, vertical) Hermite orders of the blendshape patterns.
const PATTERNS: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (1, 0),
    (0, 2),
    (1, 1),
    (2, 0),
    (1, 2),
    (2, 1),
    (0, 3),
    (3, 0),
];
/// Gaussian smoothing width of the trajectory noise, in frames at 60 fps.
const TRAJ_SMOOTH_60: f64 = 16.0;
const TRAJ_GAIN: f64 = 1.2;
/// Correlation of channels 2.. with the latent state of channels 0 and 1.
const COUPLING: f64 = 0.9;
/// Exponent of the within-cell warp on the two label channels.
const DWELL_POWER: f64 = 3.0;
const TONE_BIAS: f64 = 0.01;
const TONE_GAIN: f64 = 0.05;
const MIX_OFFDIAG: f64 = 0.15;
/// Per-edge subdivision of each mesh triangle when rendering depth.
const SUBDIVISIONS: usize = 6;

const SHAPE_NAMES: [&str; 8] = [
    "lip_pucker",
    "lip_funnel",
    "jaw_open",
    "mouth_smile_l",
    "mouth_smile_r",
    "lip_upper_up",
    "lip_lower_down",
    "mouth_press",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_coeffs: usize,
    /// Approximate; the cap mesh rounds to whole rings.
    pub n_vertices: usize,
    pub n_senones: usize,
    /// Seconds per utterance.
    pub duration: f64,
    pub sample_rate: u32,
    pub fps: f64,
    /// Square depth image side in pixels.
    pub image_size: usize,
    pub n_landmarks: usize,
    /// Gaussian pixel noise on landmarks; 0 for exact projections.
    pub landmark_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_coeffs: 8,
            n_vertices: 500,
            n_senones: 64,
            duration: 10.0,
            sample_rate: 24_000,
            fps: 60.0,
            image_size: 128,
            n_landmarks: 16,
            landmark_noise: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_coeffs == 0
            || self.n_vertices == 0
            || self.n_senones == 0
            || self.sample_rate == 0
            || self.image_size == 0
        {
            return Err(Error::Config(
                "synthetic config counts must be positive".into(),
            ));
        }
        if !(self.duration > 0.0) || !(self.fps > 0.0) || !(self.landmark_noise >= 0.0) {
            return Err(Error::Config(
                "duration and fps must be positive, landmark noise non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Same config with a different seed, for per-utterance streams.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn n_frames(&self) -> usize {
        frame_count(self.duration, self.fps).unwrap_or(0)
    }

    /// Analysis settings matched to this corpus: one frame per video frame,
    /// FFT size the next power of two above the window.
    pub fn frame_spec(&self) -> FrameSpec {
        let mut spec = FrameSpec::at_frame_rate(self.fps);
        spec.fft_size = spec
            .window_samples(self.sample_rate)
            .next_power_of_two()
            .max(spec.fft_size);
        spec
    }

    pub fn camera(&self) -> Camera {
        let s = self.image_size as f64;
        let c = (s - 1.0) / 2.0;
        Camera::new(2.4 * s, 2.4 * s, c, c, self.image_size, self.image_size)
            .expect("positive focal length")
    }

    pub fn shape_names(&self) -> Vec<String> {
        (0..self.n_coeffs)
            .map(|k| match SHAPE_NAMES.get(k) {
                Some(n) => n.to_string(),
                None => format!("shape_{k}"),
            })
            .collect()
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_BASIS: u64 = 1;
const STREAM_TRAJ: u64 = 2;
const STREAM_AUDIO: u64 = 3;
const STREAM_LABELS: u64 = 4;
const STREAM_POSE: u64 = 5;
const STREAM_NOISE: u64 = 6;
const STREAM_PHASE: u64 = 7;
const STREAM_COUPLING: u64 = 8;

fn ellipsoid_point(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(
        AXES[0] * theta.sin() * phi.cos(),
        AXES[1] * theta.sin() * phi.sin(),
        -AXES[2] * theta.cos(),
    )
}

/// Outward ellipsoid normal at a surface point.
fn ellipsoid_normal(p: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(
        p.x / (AXES[0] * AXES[0]),
        p.y / (AXES[1] * AXES[1]),
        p.z / (AXES[2] * AXES[2]),
    )
    .normalize()
}

/// Frontal ellipsoid cap facing `-z`, with `rings * segments + 1` vertices.
pub fn ellipsoid_cap(n_vertices: usize) -> (Vec<Vector3<f64>>, Vec<[usize; 3]>) {
    let n = n_vertices.max(17) - 1;
    let segments = ((n as f64).sqrt() * 1.1).round().max(8.0) as usize;
    let rings = ((n as f64 / segments as f64).round() as usize).max(2);
    let cap = CAP_DEG.to_radians();

    let mut vertices = vec![ellipsoid_point(0.0, 0.0)];
    for r in 1..=rings {
        let theta = cap * r as f64 / rings as f64;
        for s in 0..segments {
            let phi = 2.0 * PI * s as f64 / segments as f64;
            vertices.push(ellipsoid_point(theta, phi));
        }
    }
    let idx = |r: usize, s: usize| 1 + (r - 1) * segments + s % segments;
    let mut triangles = Vec::with_capacity(segments * (2 * rings - 1));
    for s in 0..segments {
        triangles.push([0, idx(1, s), idx(1, s + 1)]);
    }
    for r in 1..rings {
        for s in 0..segments {
            let (a, b) = (idx(r, s), idx(r, s + 1));
            let (c, d) = (idx(r + 1, s), idx(r + 1, s + 1));
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    // orient so normals point out of the head (toward the camera at the apex)
    let [i, j, k] = triangles[0];
    let n0 = (vertices[j] - vertices[i]).cross(&(vertices[k] - vertices[i]));
    if n0.z > 0.0 {
        for t in &mut triangles {
            t.swap(1, 2);
        }
    }
    (vertices, triangles)
}

/// Ellipsoid head with `n_coeffs` Gaussian mouth-region displacement fields.
pub fn gen_basis(cfg: &SynthConfig) -> Result<BlendshapeBasis> {
    cfg.validate()?;
    if cfg.n_coeffs < 2 {
        return Err(Error::Config(
            "need at least 2 blendshapes (lip_pucker and lip_funnel)".into(),
        ));
    }
    let mut rng = rng_for(cfg.seed, STREAM_BASIS);
    let (neutral, triangles) = ellipsoid_cap(cfg.n_vertices);
    let nv = neutral.len();
    let n = cfg.n_coeffs;

    // Each shape is a smooth field over the mouth region: a Gaussian envelope
    // times a low-order Hermite pattern in local surface coordinates, so
    // columns are near-orthogonal without needing sharp, under-sampled bumps.
    let mouth = ellipsoid_point(MOUTH.0.to_radians(), MOUTH.1.to_radians());
    let normal = ellipsoid_normal(&mouth);
    let e_u = Vector3::new(-1.0, 0.0, 0.0);
    let e_v = normal.cross(&e_u).normalize();
    let mut deltas = DMatrix::zeros(3 * nv, n);
    for k in 0..n {
        let (a, b) = PATTERNS[k % PATTERNS.len()];
        let amplitude = rng.random_range(8.0..12.0) * if k == 0 { 1.0 } else { rng_sign(&mut rng) };
        let tangent = {
            let w: f64 = rng.random_range(0.0..2.0 * PI);
            e_u * w.cos() + e_v * w.sin()
        };
        let direction = normal + tangent * rng.random_range(0.2..0.5);
        for (i, v) in neutral.iter().enumerate() {
            let d = v - mouth;
            let (u, w) = (d.dot(&e_u) / ENVELOPE, d.dot(&e_v) / ENVELOPE);
            let env = envelope((u * u + w * w).sqrt());
            if env == 0.0 {
                continue;
            }
            let scale = amplitude * env * hermite(a, u) * hermite(b, w);
            for c in 0..3 {
                deltas[(3 * i + c, k)] = scale * direction[c];
            }
        }
    }

    let mut candidates: Vec<usize> = (0..nv)
        .filter(|&i| (neutral[i] - mouth).norm() < 45.0)
        .collect();
    candidates.shuffle(&mut rng);
    candidates.truncate(cfg.n_landmarks);
    candidates.sort_unstable();

    BlendshapeBasis::new(neutral, deltas, cfg.shape_names(), triangles, candidates)
}

/// Gaussian in units of [`ENVELOPE`], tapered to exactly zero between 2
/// and 3 widths so the upper face stays rigid.
fn envelope(r: f64) -> f64 {
    let t = (r - 2.0).clamp(0.0, 1.0);
    let taper = 1.0 - t * t * (3.0 - 2.0 * t);
    (-r * r / 2.0).exp() * taper
}

/// Probabilists' Hermite polynomial, normalized to unit peak near 0..2.
fn hermite(order: usize, t: f64) -> f64 {
    match order {
        0 => 1.0,
        1 => t,
        2 => (t * t - 1.0) / 2.0,
        _ => (t * t * t - 3.0 * t) / 2.0,
    }
}

fn rng_sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Unit-variance Gaussian-smoothed white noise of length `n`.
fn smooth_noise(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Vec<f64> {
    let half = (4.0 * sigma).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * half)
        .map(|i| {
            let d = i as f64 - half as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let norm = kernel.iter().map(|k| k * k).sum::<f64>().sqrt();
    let raw: Vec<f64> = (0..n + 2 * half)
        .map(|_| StandardNormal.sample(&mut *rng))
        .collect();
    (0..n)
        .map(|t| {
            kernel
                .iter()
                .zip(&raw[t..t + 2 * half + 1])
                .map(|(k, r)| k * r)
                .sum::<f64>()
                / norm
        })
        .collect()
}

/// Smooth seeded coefficient trajectories in [0.05, 0.95].
pub fn gen_trajectory(cfg: &SynthConfig) -> Result<CoefficientTrack> {
    gen_utterance_trajectory(cfg, 0)
}

/// Trajectory of utterance `index` of a corpus sharing one basis, audio
/// mixing and label grid. Index 0 is [`gen_trajectory`].
pub fn gen_utterance_trajectory(cfg: &SynthConfig, index: u64) -> Result<CoefficientTrack> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, STREAM_TRAJ + (index << 8));
    let n = cfg.n_frames();
    let sigma = TRAJ_SMOOTH_60 * cfg.fps / 60.0;
    let mut track = CoefficientTrack::zeros(cfg.shape_names(), cfg.fps, n);
    let (rows, cols) = grid_shape(cfg.n_senones);
    // Mixing angles are per speaker, not per utterance.
    let mut angles = rng_for(cfg.seed, STREAM_COUPLING);
    let own = (1.0 - COUPLING * COUPLING).sqrt();
    let mut latent: Vec<Vec<f64>> = Vec::new();
    for c in 0..cfg.n_coeffs {
        let noise = smooth_noise(&mut rng, n, sigma);
        let z = if c < 2 {
            latent.push(noise.clone());
            noise
        } else {
            let (s, co) = angles.random_range(0.0..2.0 * PI).sin_cos();
            (0..n)
                .map(|t| COUPLING * (co * latent[0][t] + s * latent[1][t]) + own * noise[t])
                .collect()
        };
        let x: Vec<f64> = z
            .iter()
            .map(|z| 0.05 + 0.9 / (1.0 + (-TRAJ_GAIN * z).exp()))
            .map(|x| match c {
                0 => dwell(x, rows),
                1 => dwell(x, cols),
                _ => x,
            })
            .collect();
        track.set_channel(c, &x);
    }
    Ok(track)
}

/// Tone frequencies: one per coefficient, on distinct mel filters, rounded to
/// a whole number of cycles per video frame.
pub fn tone_frequencies(cfg: &SynthConfig) -> Vec<f64> {
    let spec = cfg.frame_spec();
    let centers = mel::center_frequencies(spec.n_mels, cfg.sample_rate as f64);
    let k = cfg.n_coeffs;
    let (lo, hi) = (spec.n_mels / 10, spec.n_mels - spec.n_mels / 8 - 1);
    (0..k)
        .map(|i| {
            let idx = if k == 1 {
                (lo + hi) / 2
            } else {
                lo + ((hi - lo) as f64 * i as f64 / (k - 1) as f64).round() as usize
            };
            let f = centers[idx];
            (f / cfg.fps).round().max(1.0) * cfg.fps
        })
        .collect()
}

/// Seeded mixing matrix `I + 0.15 R`, `R` uniform on [0, 1) off the diagonal.
pub fn mixing_matrix(cfg: &SynthConfig) -> DMatrix<f64> {
    let mut rng = rng_for(cfg.seed, STREAM_AUDIO);
    let k = cfg.n_coeffs;
    DMatrix::from_fn(k, k, |i, j| {
        let r: f64 = rng.random();
        if i == j {
            1.0
        } else {
            MIX_OFFDIAG * r
        }
    })
}

/// Sum of sinusoids whose amplitudes are `bias + gain * (M x_t)`, with frame
/// `t` anchored at the center of analysis window `t` and amplitudes linearly
/// interpolated between anchors. The waveform is just long enough that the
/// matching frame spec yields one feature frame per track frame.
pub fn synth_audio(track: &CoefficientTrack, cfg: &SynthConfig) -> Result<Waveform> {
    cfg.validate()?;
    if track.n_channels() != cfg.n_coeffs {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_coeffs,
            actual: track.n_channels(),
        });
    }
    if (track.fps - cfg.fps).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "track at {} fps, config expects {}",
            track.fps, cfg.fps
        )));
    }
    if track.is_empty() {
        return Err(Error::invalid("empty coefficient track"));
    }
    let spec = cfg.frame_spec();
    let sr = cfg.sample_rate as f64;
    let freqs = tone_frequencies(cfg);
    let m = mixing_matrix(cfg);
    let mut rng = rng_for(cfg.seed, STREAM_PHASE);
    let phases: Vec<f64> = (0..cfg.n_coeffs)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();

    let n = track.n_frames();
    let amps: Vec<Vec<f64>> = track
        .frames
        .iter()
        .map(|x| {
            let xv = nalgebra::DVector::from_column_slice(x);
            (&m * xv)
                .iter()
                .map(|v| TONE_BIAS + TONE_GAIN * v)
                .collect()
        })
        .collect();
    let anchor = spec.window_len / 2.0;
    let n_samples = (((n - 1) as f64 / cfg.fps + spec.window_len) * sr).round() as usize;
    let mut samples = vec![0f32; n_samples];
    for (s, out) in samples.iter_mut().enumerate() {
        let t = s as f64 / sr;
        let pos = ((t - anchor) * cfg.fps).clamp(0.0, (n - 1) as f64);
        let i0 = (pos.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        let frac = pos - i0 as f64;
        let mut v = 0.0;
        for k in 0..cfg.n_coeffs {
            let a = amps[i0][k] * (1.0 - frac) + amps[i1][k] * frac;
            v += a * (2.0 * PI * freqs[k] * t + phases[k]).sin();
        }
        *out = v as f32;
    }
    Waveform::new(samples, cfg.sample_rate)
}

/// Monotone warp inside each of `cells` equal label cells on [0.05, 0.95]:
/// flat at the cell center, steep at the edges. The label channels then
/// dwell on articulatory targets and cross cell boundaries quickly.
fn dwell(x: f64, cells: usize) -> f64 {
    let w = 0.9 / cells as f64;
    let c = (x - 0.05) / w;
    let i = c.floor().clamp(0.0, cells as f64 - 1.0);
    let t = 2.0 * (c - i) - 1.0;
    0.05 + w * (i + 0.5 + 0.5 * t.signum() * t.abs().powf(DWELL_POWER))
}

/// Rows/columns of the label grid over channels 0 and 1.
fn grid_shape(n_senones: usize) -> (usize, usize) {
    let rows = ((n_senones as f64).sqrt().floor() as usize).max(1);
    (rows, n_senones.div_ceil(rows))
}

fn quantize(x: f64, cells: usize) -> usize {
    (((x - 0.05) / 0.9 * cells as f64).floor().max(0.0) as usize).min(cells - 1)
}

/// Senone label per frame: the cell of (channel 0, channel 1) in a seeded
/// permutation of a grid with at least `n_senones` cells.
pub fn gen_senone_labels(track: &CoefficientTrack, cfg: &SynthConfig) -> Result<LabelTrack> {
    if cfg.n_senones < 2 {
        return Err(Error::Config("need at least 2 senones".into()));
    }
    if track.n_channels() < 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            actual: track.n_channels(),
        });
    }
    let (rows, cols) = grid_shape(cfg.n_senones);
    let mut perm: Vec<usize> = (0..rows * cols).collect();
    perm.shuffle(&mut rng_for(cfg.seed, STREAM_LABELS));
    let labels = track
        .frames
        .iter()
        .map(|x| perm[quantize(x[0], rows) * cols + quantize(x[1], cols)] % cfg.n_senones)
        .collect();
    Ok(LabelTrack {
        labels,
        frame_rate: track.fps,
    })
}

/// Resting pose: head centered on the optical axis, facing the camera.
pub fn base_pose() -> RigidPose {
    RigidPose::from_axis_angle(Vector3::zeros(), Vector3::new(0.0, 0.0, HEAD_DISTANCE))
}

/// Small smooth head motion around [`base_pose`]: a few degrees of rotation
/// and a few millimeters of translation.
pub fn gen_pose_track(cfg: &SynthConfig, n_frames: usize) -> Vec<RigidPose> {
    let mut rng = rng_for(cfg.seed, STREAM_POSE);
    let sigma = 2.0 * TRAJ_SMOOTH_60 * cfg.fps / 60.0;
    let ch: Vec<Vec<f64>> = (0..6)
        .map(|_| smooth_noise(&mut rng, n_frames, sigma))
        .collect();
    (0..n_frames)
        .map(|t| {
            let rot = Vector3::new(ch[0][t], ch[1][t], ch[2][t]) * 1.5f64.to_radians();
            let trans = Vector3::new(
                ch[3][t] * 3.0,
                ch[4][t] * 3.0,
                HEAD_DISTANCE + ch[5][t] * 3.0,
            );
            RigidPose::from_axis_angle(rot, trans)
        })
        .collect()
}

/// Z-buffered depth of the posed mesh (smoothly tessellated, see
/// [`rasterize_smooth`]) plus exact projections of the basis
/// landmark vertices that land inside the image.
pub fn render_depth(
    basis: &BlendshapeBasis,
    x: &[f64],
    pose: &RigidPose,
    camera: &Camera,
) -> Result<(DepthMap, LandmarkSet)> {
    if x.len() != basis.n_shapes() {
        return Err(Error::DimensionMismatch {
            expected: basis.n_shapes(),
            actual: x.len(),
        });
    }
    let vertices = evaluate_unchecked(basis, x, pose);
    let normals = vertex_normals(&vertices, &basis.triangles);
    let depth = rasterize_smooth(&vertices, &normals, &basis.triangles, camera, SUBDIVISIONS)?;
    let entries = basis
        .landmark_vertices
        .iter()
        .filter_map(|&j| {
            let p = camera.project(&vertices[j]).ok()?;
            camera.contains(&p).then_some((j, p))
        })
        .collect();
    Ok((depth, LandmarkSet { entries }))
}

/// Adds seeded Gaussian pixel noise, clamped to the image.
pub fn add_landmark_noise(landmarks: &mut LandmarkSet, sigma: f64, seed: u64, camera: &Camera) {
    if sigma <= 0.0 {
        return;
    }
    let mut rng = rng_for(seed, STREAM_NOISE);
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let (w, h) = ((camera.width - 1) as f64, (camera.height - 1) as f64);
    for (_, p) in &mut landmarks.entries {
        *p += Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng));
        p.x = p.x.clamp(0.0, w);
        p.y = p.y.clamp(0.0, h);
    }
}
