//! Line-oriented `section.key = value` configuration.
//!
//! Every key has a default, so an empty file is a valid config. Unknown keys
//! are rejected. Serialization writes every key in a fixed order, floats in
//! their shortest round-trip form, so parse and serialize are inverse.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::face::RigidPose;
use crate::frontend::FrameSpec;
use crate::nn::{Loss, NetworkSpec, TrainingConfig};
use crate::postproc::PostprocConfig;
use crate::solver::{SolverWeights, TrackOptions};
use crate::synth::{base_pose, SynthConfig};

/// Fitting options beyond the objective weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub max_sweeps: usize,
    pub tol: f64,
    pub outer_iters: usize,
    pub alternations: usize,
    pub icp_iters: usize,
    /// Axis-angle (radians) and translation of the first frame's pose guess.
    pub initial_rotation: [f64; 3],
    pub initial_translation: [f64; 3],
    /// Largest tolerated share of failed or non-converged frames per
    /// utterance before the stage reports a numerical failure.
    pub max_unconverged: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        let d = TrackOptions::default();
        let t = base_pose().translation;
        Self {
            max_sweeps: d.solver.max_sweeps,
            tol: d.solver.tol,
            outer_iters: d.solver.outer_iters,
            alternations: d.alternations,
            icp_iters: d.icp.max_iters,
            initial_rotation: [0.0; 3],
            initial_translation: [t.x, t.y, t.z],
            max_unconverged: 0.1,
        }
    }
}

impl FitSettings {
    pub fn track_options(&self) -> TrackOptions {
        let mut o = TrackOptions::default();
        o.solver.max_sweeps = self.max_sweeps;
        o.solver.tol = self.tol;
        o.solver.outer_iters = self.outer_iters;
        o.alternations = self.alternations;
        o.icp.max_iters = self.icp_iters;
        o.initial_pose = RigidPose::from_axis_angle(
            Vector3::from(self.initial_rotation),
            Vector3::from(self.initial_translation),
        );
        o
    }
}

/// Sizes of the synthetic corpus written by `synth-data`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusConfig {
    /// Audio + senone label utterances for acoustic-model training.
    pub am_utterances: usize,
    /// Labelled utterances held out for validation accuracy.
    pub am_heldout: usize,
    pub am_duration: f64,
    /// Audio + depth + landmark utterances whose fitted tracks train the
    /// regression models.
    pub fit_utterances: usize,
    /// Audio + depth + landmark utterances for evaluation.
    pub test_utterances: usize,
    pub fit_duration: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            am_utterances: 10,
            am_heldout: 2,
            am_duration: 60.0,
            fit_utterances: 1,
            test_utterances: 2,
            fit_duration: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Seeds data synthesis and every training run.
    pub seed: u64,
    pub output_dir: PathBuf,
    pub frontend: FrameSpec,
    pub solver: SolverWeights,
    pub fit: FitSettings,
    pub network: NetworkSpec,
    pub am: TrainingConfig,
    pub adapt: TrainingConfig,
    pub freeze_bottleneck: bool,
    pub postproc: PostprocConfig,
    pub synth: SynthConfig,
    pub corpus: CorpusConfig,
    /// Channels reported as the speech group by `evaluate`.
    pub speech_channels: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        let mut cfg = Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            frontend: synth.frame_spec(),
            solver: SolverWeights::default(),
            fit: FitSettings::default(),
            network: NetworkSpec::desk(synth.n_senones),
            am: TrainingConfig {
                batch_size: 32,
                learning_rate: 0.003,
                epochs: 20,
                ..TrainingConfig::default()
            },
            adapt: TrainingConfig {
                batch_size: 32,
                learning_rate: 0.0003,
                epochs: 100,
                loss: Loss::Mae,
                ..TrainingConfig::default()
            },
            freeze_bottleneck: true,
            postproc: PostprocConfig::default(),
            synth,
            corpus: CorpusConfig::default(),
            speech_channels: vec!["lip_pucker".into(), "lip_funnel".into(), "jaw_open".into()],
        };
        cfg.set_seed(0);
        cfg
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!(
            "{key}: expected true or false, got {v:?}"
        ))),
    }
}

fn parse_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_vec3(key: &str, v: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "{key}: expected three comma-separated numbers"
        )));
    }
    Ok([
        parse_num(key, parts[0])?,
        parse_num(key, parts[1])?,
        parse_num(key, parts[2])?,
    ])
}

fn vec3(v: &[f64; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

fn training_fields(prefix: &str, t: &TrainingConfig) -> Vec<(String, String)> {
    vec![
        (format!("{prefix}.batch_size"), t.batch_size.to_string()),
        (
            format!("{prefix}.learning_rate"),
            t.learning_rate.to_string(),
        ),
        (format!("{prefix}.epochs"), t.epochs.to_string()),
        (format!("{prefix}.loss"), t.loss.as_str().to_string()),
        (
            format!("{prefix}.normalize_inputs"),
            t.normalize_inputs.to_string(),
        ),
    ]
}

fn set_training(t: &mut TrainingConfig, key: &str, field: &str, v: &str) -> Result<bool> {
    match field {
        "batch_size" => t.batch_size = parse_num(key, v)?,
        "learning_rate" => t.learning_rate = parse_num(key, v)?,
        "epochs" => t.epochs = parse_num(key, v)?,
        "loss" => t.loss = Loss::parse(v)?,
        "normalize_inputs" => t.normalize_inputs = parse_bool(key, v)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl PipelineConfig {
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
        self.am.seed = seed;
        self.adapt.seed = seed;
    }

    /// `(key, value)` pairs in file order.
    pub fn fields(&self) -> Vec<(String, String)> {
        let f = &self.frontend;
        let n = &self.network;
        let p = &self.postproc;
        let s = &self.synth;
        let c = &self.corpus;
        let fit = &self.fit;
        let mut out: Vec<(String, String)> = vec![
            ("run.seed".into(), self.seed.to_string()),
            (
                "run.output_dir".into(),
                self.output_dir.display().to_string(),
            ),
            ("frontend.window_len".into(), f.window_len.to_string()),
            ("frontend.hop".into(), f.hop.to_string()),
            ("frontend.n_mels".into(), f.n_mels.to_string()),
            ("frontend.fft_size".into(), f.fft_size.to_string()),
            ("frontend.log_floor".into(), f.log_floor.to_string()),
            ("solver.depth".into(), self.solver.depth.to_string()),
            ("solver.landmark".into(), self.solver.landmark.to_string()),
            ("solver.l1".into(), self.solver.l1.to_string()),
            ("solver.max_sweeps".into(), fit.max_sweeps.to_string()),
            ("solver.tol".into(), fit.tol.to_string()),
            ("solver.outer_iters".into(), fit.outer_iters.to_string()),
            ("solver.alternations".into(), fit.alternations.to_string()),
            ("solver.icp_iters".into(), fit.icp_iters.to_string()),
            (
                "solver.initial_rotation".into(),
                vec3(&fit.initial_rotation),
            ),
            (
                "solver.initial_translation".into(),
                vec3(&fit.initial_translation),
            ),
            (
                "solver.max_unconverged".into(),
                fit.max_unconverged.to_string(),
            ),
            ("network.conv_filters".into(), n.conv.0.to_string()),
            ("network.conv_height".into(), n.conv.1.to_string()),
            ("network.conv_width".into(), n.conv.2.to_string()),
            ("network.fc_layers".into(), n.fc_layers.to_string()),
            ("network.fc_width".into(), n.fc_width.to_string()),
            ("network.bottleneck".into(), n.bottleneck.to_string()),
            ("network.n_outputs".into(), n.n_outputs.to_string()),
            ("network.context".into(), n.context.to_string()),
            ("network.n_mels".into(), n.n_mels.to_string()),
            ("network.scale".into(), n.scale.to_string()),
        ];
        out.extend(training_fields("am", &self.am));
        out.extend(training_fields("adapt", &self.adapt));
        out.push((
            "adapt.freeze_bottleneck".into(),
            self.freeze_bottleneck.to_string(),
        ));
        out.extend([
            ("postproc.median_len".into(), p.median_len.to_string()),
            ("postproc.bias_window".into(), p.bias_window.to_string()),
            ("postproc.global_scale".into(), p.global_scale.to_string()),
            ("postproc.special_scale".into(), p.special_scale.to_string()),
            (
                "postproc.special_channels".into(),
                p.special_channels.join(","),
            ),
            ("postproc.clamp".into(), p.clamp.to_string()),
            ("postproc.shared_bias".into(), p.shared_bias.to_string()),
            ("synth.n_coeffs".into(), s.n_coeffs.to_string()),
            ("synth.n_vertices".into(), s.n_vertices.to_string()),
            ("synth.n_senones".into(), s.n_senones.to_string()),
            ("synth.sample_rate".into(), s.sample_rate.to_string()),
            ("synth.fps".into(), s.fps.to_string()),
            ("synth.image_size".into(), s.image_size.to_string()),
            ("synth.n_landmarks".into(), s.n_landmarks.to_string()),
            ("synth.landmark_noise".into(), s.landmark_noise.to_string()),
            ("corpus.am_utterances".into(), c.am_utterances.to_string()),
            ("corpus.am_heldout".into(), c.am_heldout.to_string()),
            ("corpus.am_duration".into(), c.am_duration.to_string()),
            ("corpus.fit_utterances".into(), c.fit_utterances.to_string()),
            (
                "corpus.test_utterances".into(),
                c.test_utterances.to_string(),
            ),
            ("corpus.fit_duration".into(), c.fit_duration.to_string()),
            (
                "eval.speech_channels".into(),
                self.speech_channels.join(","),
            ),
        ]);
        out
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("key {key:?} is not section.key")))?;
        let unknown = || Error::Config(format!("unknown key {key:?}"));
        match section {
            "run" => match field {
                "seed" => self.set_seed(parse_num(key, v)?),
                "output_dir" => self.output_dir = PathBuf::from(v),
                _ => return Err(unknown()),
            },
            "frontend" => {
                let f = &mut self.frontend;
                match field {
                    "window_len" => f.window_len = parse_num(key, v)?,
                    "hop" => f.hop = parse_num(key, v)?,
                    "n_mels" => f.n_mels = parse_num(key, v)?,
                    "fft_size" => f.fft_size = parse_num(key, v)?,
                    "log_floor" => f.log_floor = parse_num(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "solver" => {
                let fit = &mut self.fit;
                match field {
                    "depth" => self.solver.depth = parse_num(key, v)?,
                    "landmark" => self.solver.landmark = parse_num(key, v)?,
                    "l1" => self.solver.l1 = parse_num(key, v)?,
                    "max_sweeps" => fit.max_sweeps = parse_num(key, v)?,
                    "tol" => fit.tol = parse_num(key, v)?,
                    "outer_iters" => fit.outer_iters = parse_num(key, v)?,
                    "alternations" => fit.alternations = parse_num(key, v)?,
                    "icp_iters" => fit.icp_iters = parse_num(key, v)?,
                    "initial_rotation" => fit.initial_rotation = parse_vec3(key, v)?,
                    "initial_translation" => fit.initial_translation = parse_vec3(key, v)?,
                    "max_unconverged" => fit.max_unconverged = parse_num(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "network" => {
                let n = &mut self.network;
                match field {
                    "conv_filters" => n.conv.0 = parse_num(key, v)?,
                    "conv_height" => n.conv.1 = parse_num(key, v)?,
                    "conv_width" => n.conv.2 = parse_num(key, v)?,
                    "fc_layers" => n.fc_layers = parse_num(key, v)?,
                    "fc_width" => n.fc_width = parse_num(key, v)?,
                    "bottleneck" => n.bottleneck = parse_num(key, v)?,
                    "n_outputs" => n.n_outputs = parse_num(key, v)?,
                    "context" => n.context = parse_num(key, v)?,
                    "n_mels" => n.n_mels = parse_num(key, v)?,
                    "scale" => n.scale = parse_num(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "am" => {
                if !set_training(&mut self.am, key, field, v)? {
                    return Err(unknown());
                }
            }
            "adapt" => {
                if field == "freeze_bottleneck" {
                    self.freeze_bottleneck = parse_bool(key, v)?;
                } else if !set_training(&mut self.adapt, key, field, v)? {
                    return Err(unknown());
                }
            }
            "postproc" => {
                let p = &mut self.postproc;
                match field {
                    "median_len" => p.median_len = parse_num(key, v)?,
                    "bias_window" => p.bias_window = parse_num(key, v)?,
                    "global_scale" => p.global_scale = parse_num(key, v)?,
                    "special_scale" => p.special_scale = parse_num(key, v)?,
                    "special_channels" => p.special_channels = parse_list(v),
                    "clamp" => p.clamp = parse_bool(key, v)?,
                    "shared_bias" => p.shared_bias = parse_bool(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "synth" => {
                let s = &mut self.synth;
                match field {
                    "n_coeffs" => s.n_coeffs = parse_num(key, v)?,
                    "n_vertices" => s.n_vertices = parse_num(key, v)?,
                    "n_senones" => s.n_senones = parse_num(key, v)?,
                    "sample_rate" => s.sample_rate = parse_num(key, v)?,
                    "fps" => s.fps = parse_num(key, v)?,
                    "image_size" => s.image_size = parse_num(key, v)?,
                    "n_landmarks" => s.n_landmarks = parse_num(key, v)?,
                    "landmark_noise" => s.landmark_noise = parse_num(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "corpus" => {
                let c = &mut self.corpus;
                match field {
                    "am_utterances" => c.am_utterances = parse_num(key, v)?,
                    "am_heldout" => c.am_heldout = parse_num(key, v)?,
                    "am_duration" => c.am_duration = parse_num(key, v)?,
                    "fit_utterances" => c.fit_utterances = parse_num(key, v)?,
                    "test_utterances" => c.test_utterances = parse_num(key, v)?,
                    "fit_duration" => c.fit_duration = parse_num(key, v)?,
                    _ => return Err(unknown()),
                }
            }
            "eval" => match field {
                "speech_channels" => self.speech_channels = parse_list(v),
                _ => return Err(unknown()),
            },
            _ => return Err(unknown()),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut section = String::new();
        for (k, v) in self.fields() {
            let sec = k.split('.').next().unwrap_or_default();
            if sec != section {
                if !section.is_empty() {
                    s.push('\n');
                }
                section = sec.to_string();
            }
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        self.frontend.validate().map_err(cfg_err)?;
        self.solver.validate().map_err(cfg_err)?;
        self.network.validate().map_err(cfg_err)?;
        self.am.validate().map_err(cfg_err)?;
        self.adapt.validate().map_err(cfg_err)?;
        self.postproc.validate()?;
        self.synth.validate()?;
        if self.network.n_mels != self.frontend.n_mels {
            return Err(Error::Config(format!(
                "network.n_mels {} differs from frontend.n_mels {}",
                self.network.n_mels, self.frontend.n_mels
            )));
        }
        if self.am.loss != Loss::CrossEntropy || self.adapt.loss != Loss::Mae {
            return Err(Error::Config(
                "am.loss must be cross_entropy and adapt.loss mae".into(),
            ));
        }
        let fit = &self.fit;
        if fit.max_sweeps == 0 || fit.alternations == 0 || fit.outer_iters == 0 {
            return Err(Error::Config(
                "solver iteration counts must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&fit.max_unconverged) {
            return Err(Error::Config(
                "solver.max_unconverged must lie in [0, 1]".into(),
            ));
        }
        let c = &self.corpus;
        if !(c.am_duration > 0.0) || !(c.fit_duration > 0.0) {
            return Err(Error::Config("corpus durations must be positive".into()));
        }
        Ok(())
    }

    /// SHA-256 of the serialized config, first 16 hex digits. The output
    /// directory is left out so relocated runs hash alike.
    pub fn hash(&self) -> String {
        let text = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        }
        .to_text();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Comment text recorded at the top of every text output.
    pub fn provenance(&self) -> String {
        format!("config_hash={} seed={}", self.hash(), self.seed)
    }
}
