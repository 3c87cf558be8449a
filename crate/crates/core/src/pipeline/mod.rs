//! Staged workflow: synthesize or ingest data, extract features, fit
//! blendshape tracks, train and adapt networks, infer, post-process and
//! evaluate. Each stage reads and writes files under one output directory:
//!
//! | path | written by |
//! |---|---|
//! | `manifest.csv`, `basis/`, `audio/`, `depth/`, `landmarks/`, `labels/`, `truth/` | `synth-data` |
//! | `features/<id>.lmfb` | `extract-features` |
//! | `tracks/<id>.csv`, `poses/<id>.csv`, `fit_report.csv` | `fit-bsc` |
//! | `am.ckpt`, `adapted.ckpt`, `baseline.ckpt` and `*_log.csv` | training stages |
//! | `raw/<id>.csv`, `predictions/<id>.csv` | `infer`, `postprocess` |
//! | `report.txt`, `report.csv` | `evaluate` |
//!
//! Text outputs start with a `# config_hash=... seed=...` comment; binary
//! outputs are listed with their SHA-256 in `provenance/<stage>.txt`.

pub mod config;
pub mod formats;
pub mod manifest;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

pub use config::{CorpusConfig, FitSettings, PipelineConfig};
pub use formats::{landmarks_to_csv, parse_landmarks, read_landmarks, DepthSequence};
pub use manifest::{Manifest, ManifestEntry, Split};

use crate::error::{Error, Result};
use crate::face::obj::{load_basis, save_basis, write_obj};
use crate::face::{evaluate_mesh, CoefficientFrame, RigidPose};
use crate::frontend::io::{read_labels, read_wav, write_labels, write_wav, FeatureFile};
use crate::frontend::{resample_labels, LmfbExtractor, Waveform};
use crate::nn::{
    adapt_with, frame_accuracy, random_baseline, read_checkpoint, train_am, train_regression,
    write_checkpoint, AdaptOptions, Dataset, HeadKind, NetworkParameters, TrainingLog,
};
use crate::postproc::postprocess;
use crate::solver::io::write_poses;
use crate::solver::track_sequence;
use crate::stats::{
    grouped_mae, mae, parse_order, preference_report, preference_summary, read_grades,
    shown_first_count, PreferenceSummary,
};
use crate::synth::{
    add_landmark_noise, gen_basis, gen_pose_track, gen_senone_labels, gen_utterance_trajectory,
    render_depth, synth_audio, SynthConfig,
};
use crate::track::CoefficientTrack;

/// Utterance index offsets keep the trajectory streams of the corpus roles
/// apart.
const FIT_INDEX: u64 = 1000;
const TEST_INDEX: u64 = 2000;

/// Frames per inference batch.
const INFER_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Am,
    Adapt,
    RandomBaseline,
}

impl TrainMode {
    fn checkpoint_name(self) -> &'static str {
        match self {
            TrainMode::Am => "am.ckpt",
            TrainMode::Adapt => "adapted.ckpt",
            TrainMode::RandomBaseline => "baseline.ckpt",
        }
    }

    fn log_name(self) -> &'static str {
        match self {
            TrainMode::Am => "am_log.csv",
            TrainMode::Adapt => "adapt_log.csv",
            TrainMode::RandomBaseline => "baseline_log.csv",
        }
    }
}

/// Per-utterance fitting outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub id: String,
    pub frames: usize,
    pub converged: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitReport {
    pub fitted: Vec<FitSummary>,
    /// `(utterance, reason)` for utterances without the needed modalities.
    pub skipped: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradeSummary {
    pub summary: PreferenceSummary,
    pub n_grades: usize,
    /// Grades whose utterance showed system A first, when an order sidecar
    /// was given.
    pub shown_a_first: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_utterance: Vec<(String, f64)>,
    pub mae: f64,
    pub groups: Vec<(String, f64)>,
    pub grades: Option<GradeSummary>,
}

impl EvalReport {
    pub fn to_text(&self, provenance: &str) -> String {
        let mut s = String::new();
        writeln!(s, "# {provenance}").unwrap();
        writeln!(s, "utterance    mae").unwrap();
        for (id, v) in &self.per_utterance {
            writeln!(s, "{id:<12} {v:.6}").unwrap();
        }
        writeln!(s, "{:<12} {:.6}", "all", self.mae).unwrap();
        for (g, v) in &self.groups {
            writeln!(s, "{:<12} {v:.6}", format!("[{g}]")).unwrap();
        }
        if let Some(g) = &self.grades {
            s.push('\n');
            s.push_str(&preference_report(&g.summary, g.n_grades));
            if let Some(n) = g.shown_a_first {
                writeln!(s, "A shown first in {n} of {} grades", g.n_grades).unwrap();
            }
        }
        s
    }

    pub fn to_csv(&self, provenance: &str) -> String {
        let mut s = String::new();
        writeln!(s, "# {provenance}").unwrap();
        writeln!(s, "metric,key,value").unwrap();
        for (id, v) in &self.per_utterance {
            writeln!(s, "mae,{id},{v:.9}").unwrap();
        }
        writeln!(s, "mae,all,{:.9}", self.mae).unwrap();
        for (g, v) in &self.groups {
            writeln!(s, "group_mae,{g},{v:.9}").unwrap();
        }
        if let Some(g) = &self.grades {
            let p = &g.summary;
            writeln!(s, "preference,A,{:.6}", p.percent_a).unwrap();
            writeln!(s, "preference,B,{:.6}", p.percent_b).unwrap();
            writeln!(s, "preference,ND,{:.6}", p.percent_no_difference).unwrap();
            writeln!(s, "mann_whitney,u,{:.9}", p.test.u_normalized).unwrap();
            writeln!(s, "mann_whitney,p,{:.9e}", p.test.p_value).unwrap();
            writeln!(s, "mann_whitney,method,{}", p.test.method.as_str()).unwrap();
        }
        s
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Allows a one-frame disagreement between two streams and returns the
/// common length.
fn aligned_len(id: &str, a: usize, b: usize) -> Result<usize> {
    if a.abs_diff(b) > 1 {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        }
        .at_utterance(id));
    }
    Ok(a.min(b))
}

/// Per-utterance outputs are produced in utterance-id order.
fn sorted_split(manifest: &Manifest, split: Split) -> Vec<&ManifestEntry> {
    let mut v: Vec<&ManifestEntry> = manifest.split(split).collect();
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v
}

/// Default channel names for a regression head of `n` outputs.
pub fn default_channel_names(n: usize) -> Vec<String> {
    SynthConfig {
        n_coeffs: n,
        ..SynthConfig::default()
    }
    .shape_names()
}

fn channels_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".channels");
    PathBuf::from(s)
}

/// Channel names stored beside a regression checkpoint, or the defaults.
pub fn checkpoint_channels(checkpoint: &Path, n: usize) -> Result<Vec<String>> {
    let p = channels_path(checkpoint);
    if !p.exists() {
        return Ok(default_channel_names(n));
    }
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let names: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    if names.len() != n {
        return Err(Error::format(
            p.display().to_string(),
            format!("{} names for {n} outputs", names.len()),
        ));
    }
    Ok(names)
}

/// Features -> regression network -> raw track -> post-processed track.
pub fn run_infer(
    net: &NetworkParameters,
    audio: &Waveform,
    cfg: &PipelineConfig,
    names: &[String],
) -> Result<(CoefficientTrack, CoefficientTrack)> {
    if net.head_kind != HeadKind::Regression {
        return Err(Error::NotRegression);
    }
    let feats = LmfbExtractor::new(cfg.frontend, audio.sample_rate)?.extract(audio)?;
    let raw = predict_track(
        net,
        &feats_to_rows(&feats),
        cfg.frontend.n_mels,
        cfg.frontend.frame_rate(),
        names,
    )?;
    let post = postprocess(&raw, &cfg.postproc)?;
    Ok((raw, post))
}

fn feats_to_rows(feats: &[crate::frontend::FeatureFrame]) -> Vec<f64> {
    feats
        .iter()
        .flat_map(|f| f.coefficients.iter().copied())
        .collect()
}

fn predict_track(
    net: &NetworkParameters,
    rows: &[f64],
    n_mels: usize,
    fps: f64,
    names: &[String],
) -> Result<CoefficientTrack> {
    let d = net.n_head_outputs();
    if names.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: names.len(),
        });
    }
    let n = rows.len() / n_mels.max(1);
    let mut data = Dataset::new(net.spec.context, n_mels)?;
    data.push_sequence(rows.to_vec(), vec![(); n])?;
    let mut frames = Vec::with_capacity(n);
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(INFER_CHUNK) {
        let y = net.logits_batch(&data.batch(chunk))?;
        frames.extend(
            y.column_iter()
                .map(|c| c.iter().copied().collect::<Vec<f64>>()),
        );
    }
    CoefficientTrack::new(names.to_vec(), fps, frames)
}

/// MAE, grouped MAE and optional preference statistics over aligned
/// `(utterance, predicted, truth)` triples.
pub fn evaluate_tracks(
    pairs: &[(String, CoefficientTrack, CoefficientTrack)],
    speech_channels: &[String],
    grades: Option<GradeSummary>,
) -> Result<EvalReport> {
    let (_, _, first) = pairs
        .first()
        .ok_or_else(|| Error::invalid("nothing to evaluate"))?;
    let names = first.names.clone();
    let mut per_utterance = Vec::new();
    let mut all_p = Vec::new();
    let mut all_t = Vec::new();
    for (id, p, t) in pairs {
        if p.names != t.names || p.names != names {
            return Err(Error::invalid("channel names differ").at_utterance(id));
        }
        let n = aligned_len(id, p.n_frames(), t.n_frames())?;
        let p = CoefficientTrack::new(p.names.clone(), p.fps, p.frames[..n].to_vec())?;
        let t = CoefficientTrack::new(t.names.clone(), t.fps, t.frames[..n].to_vec())?;
        per_utterance.push((id.clone(), mae(&p, &t).map_err(|e| e.at_utterance(id))?));
        all_p.extend(p.frames);
        all_t.extend(t.frames);
    }
    let p = CoefficientTrack::new(names.clone(), first.fps, all_p)?;
    let t = CoefficientTrack::new(names.clone(), first.fps, all_t)?;
    let speech: Vec<String> = speech_channels
        .iter()
        .filter(|c| names.contains(c))
        .cloned()
        .collect();
    let other: Vec<String> = names
        .iter()
        .filter(|c| !speech.contains(c))
        .cloned()
        .collect();
    let groups: Vec<(String, Vec<String>)> = [("speech", speech), ("other", other)]
        .into_iter()
        .filter(|(_, c)| !c.is_empty())
        .map(|(g, c)| (g.to_string(), c))
        .collect();
    Ok(EvalReport {
        per_utterance,
        mae: mae(&p, &t)?,
        groups: grouped_mae(&p, &t, &groups)?,
        grades,
    })
}

pub fn summarize_grades(grades: &Path, order: Option<&Path>) -> Result<GradeSummary> {
    let records = read_grades(grades)?;
    let summary = preference_summary(&records)?;
    let shown_a_first = match order {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Some(shown_first_count(&records, &parse_order(&text)?)?)
        }
        None => None,
    };
    Ok(GradeSummary {
        summary,
        n_grades: records.len(),
        shown_a_first,
    })
}

/// Runs stages against one output directory with a worker pool for
/// per-utterance work. Results never depend on the pool size.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub out: PathBuf,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, out: impl Into<PathBuf>, jobs: usize) -> Result<Self> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        Ok(Self {
            config,
            out: out.into(),
            pool,
        })
    }

    pub fn provenance(&self) -> String {
        self.config.provenance()
    }

    fn path(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.out.clone(), |p, s| p.join(s))
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.path(&["manifest.csv"])
    }

    pub fn features_path(&self, id: &str) -> PathBuf {
        self.path(&["features", &format!("{id}.lmfb")])
    }

    pub fn track_path(&self, id: &str) -> PathBuf {
        self.path(&["tracks", &format!("{id}.csv")])
    }

    pub fn raw_path(&self, id: &str) -> PathBuf {
        self.path(&["raw", &format!("{id}.csv")])
    }

    pub fn prediction_path(&self, id: &str) -> PathBuf {
        self.path(&["predictions", &format!("{id}.csv")])
    }

    pub fn checkpoint_path(&self, mode: TrainMode) -> PathBuf {
        self.path(&[mode.checkpoint_name()])
    }

    fn par_map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    /// Lists binary outputs with their digests.
    fn record(&self, stage: &str, files: &[PathBuf]) -> Result<()> {
        let dir = self.path(&["provenance"]);
        mkdir(&dir)?;
        let mut s = format!("# {}\n", self.provenance());
        for f in files {
            let bytes = fs::read(f).map_err(|e| Error::io(f, e))?;
            let digest: String = Sha256::digest(&bytes)
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect();
            let rel = f.strip_prefix(&self.out).unwrap_or(f);
            writeln!(s, "{digest}  {}", rel.display()).unwrap();
        }
        write_text(&dir.join(format!("{stage}.txt")), &s)
    }

    /// Writes a complete synthetic dataset and its manifest into the output
    /// directory.
    pub fn synth_data(&self) -> Result<Manifest> {
        let cfg = &self.config;
        let c = &cfg.corpus;
        for d in ["audio", "depth", "landmarks", "labels", "truth"] {
            mkdir(&self.path(&[d]))?;
        }
        let basis = gen_basis(&cfg.synth)?;
        save_basis(&self.path(&["basis"]), &basis)?;

        struct Job {
            id: String,
            index: u64,
            duration: f64,
            split: Split,
            depth: bool,
        }
        let mut jobs = Vec::new();
        for i in 0..c.am_utterances + c.am_heldout {
            let (prefix, split) = if i < c.am_utterances {
                ("am", Split::Train)
            } else {
                ("val", Split::Validation)
            };
            jobs.push(Job {
                id: format!("{prefix}_{i:03}"),
                index: i as u64,
                duration: c.am_duration,
                split,
                depth: false,
            });
        }
        for i in 0..c.fit_utterances {
            jobs.push(Job {
                id: format!("fit_{i:03}"),
                index: FIT_INDEX + i as u64,
                duration: c.fit_duration,
                split: Split::Train,
                depth: true,
            });
        }
        for i in 0..c.test_utterances {
            jobs.push(Job {
                id: format!("test_{i:03}"),
                index: TEST_INDEX + i as u64,
                duration: c.fit_duration,
                split: Split::Test,
                depth: true,
            });
        }

        let prov = self.provenance();
        let results = self.par_map(&jobs, |job| -> Result<(ManifestEntry, Vec<PathBuf>)> {
            let scfg = SynthConfig {
                duration: job.duration,
                ..cfg.synth.clone()
            };
            let truth = gen_utterance_trajectory(&scfg, job.index)?;
            let wav = synth_audio(&truth, &scfg)?;
            let audio = PathBuf::from(format!("audio/{}.wav", job.id));
            write_wav(&self.out.join(&audio), &wav)?;
            truth.write_csv(
                &self.path(&["truth", &format!("{}.csv", job.id)]),
                Some(&prov),
            )?;
            let mut binaries = vec![self.out.join(&audio)];
            let mut entry = ManifestEntry {
                id: job.id.clone(),
                audio,
                depth: None,
                landmarks: None,
                labels: None,
                split: job.split,
            };
            if job.depth {
                let camera = scfg.camera();
                let poses = gen_pose_track(
                    &scfg.with_seed(scfg.seed.wrapping_add(job.index)),
                    truth.n_frames(),
                );
                let mut frames = Vec::with_capacity(truth.n_frames());
                let mut marks = Vec::with_capacity(truth.n_frames());
                for (t, (x, pose)) in truth.frames.iter().zip(&poses).enumerate() {
                    let (d, mut l) = render_depth(&basis, x, pose, &camera)?;
                    let noise_seed = scfg.seed ^ (job.index << 32) ^ t as u64;
                    add_landmark_noise(&mut l, scfg.landmark_noise, noise_seed, &camera);
                    frames.push(d);
                    marks.push(l);
                }
                let depth = PathBuf::from(format!("depth/{}.avds", job.id));
                DepthSequence {
                    fps: scfg.fps,
                    camera,
                    frames,
                }
                .write(&self.out.join(&depth))?;
                let lm = PathBuf::from(format!("landmarks/{}.csv", job.id));
                write_text(
                    &self.out.join(&lm),
                    &landmarks_to_csv(&marks, scfg.fps, Some(&prov)),
                )?;
                binaries.push(self.out.join(&depth));
                entry.depth = Some(depth);
                entry.landmarks = Some(lm);
            } else {
                let labels = PathBuf::from(format!("labels/{}.txt", job.id));
                write_labels(
                    &self.out.join(&labels),
                    &gen_senone_labels(&truth, &scfg)?,
                    Some(&prov),
                )?;
                entry.labels = Some(labels);
            }
            Ok((entry, binaries))
        });
        let mut manifest = Manifest {
            basis: Some(PathBuf::from("basis")),
            entries: Vec::new(),
        };
        let mut binaries = Vec::new();
        for r in results {
            let (e, b) = r?;
            manifest.entries.push(e);
            binaries.extend(b);
        }
        write_text(&self.manifest_path(), &manifest.to_text(Some(&prov)))?;
        self.config.save(&self.path(&["config.txt"]))?;
        self.record("synth-data", &binaries)?;
        Ok(manifest.resolved(&self.out))
    }

    pub fn extract_features(&self, manifest: &Manifest) -> Result<Vec<PathBuf>> {
        mkdir(&self.path(&["features"]))?;
        let spec = self.config.frontend;
        let results = self.par_map(&manifest.entries, |e| -> Result<PathBuf> {
            let run = || -> Result<PathBuf> {
                let wav = read_wav(&e.audio)?;
                let frames = LmfbExtractor::new(spec, wav.sample_rate)?.extract(&wav)?;
                let path = self.features_path(&e.id);
                FeatureFile::from_frames(&frames, spec.hop)?.write(&path)?;
                Ok(path)
            };
            run().map_err(|err| err.at_utterance(&e.id))
        });
        let paths = results.into_iter().collect::<Result<Vec<_>>>()?;
        self.record("extract-features", &paths)?;
        Ok(paths)
    }

    /// Fits every utterance with depth and landmarks; others are skipped with
    /// a warning. Fails with a numerical error, after writing all outputs, if
    /// an utterance has too many failed or unconverged frames.
    pub fn fit_bsc(&self, manifest: &Manifest) -> Result<FitReport> {
        let cfg = &self.config;
        mkdir(&self.path(&["tracks"]))?;
        mkdir(&self.path(&["poses"]))?;
        let mut report = FitReport::default();
        let mut todo = Vec::new();
        for e in &manifest.entries {
            match (&e.depth, &e.landmarks) {
                (Some(d), Some(l)) => todo.push((e.id.clone(), d.clone(), l.clone())),
                _ => {
                    let reason = if e.depth.is_none() {
                        "no depth"
                    } else {
                        "no landmarks"
                    };
                    log::warn!("fit-bsc: skipping {}: {reason}", e.id);
                    report.skipped.push((e.id.clone(), reason.to_string()));
                }
            }
        }
        todo.sort();
        let basis = match (&manifest.basis, todo.is_empty()) {
            (_, true) => None,
            (Some(b), false) => Some(load_basis(b)?),
            (None, false) => {
                return Err(Error::format(
                    "manifest",
                    "depth data needs a `basis = <dir>` line",
                ))
            }
        };
        let opts = cfg.fit.track_options();
        let prov = self.provenance();
        let fitted = self.par_map(&todo, |(id, depth, lm)| -> Result<(FitSummary, String)> {
            let run = || -> Result<(FitSummary, String)> {
                let basis = basis.as_ref().expect("basis loaded when there is work");
                let seq = DepthSequence::read(depth)?;
                let marks = read_landmarks(lm, seq.frames.len())?;
                let frames: Vec<_> = seq.frames.into_iter().zip(marks).collect();
                let result = track_sequence(basis, &frames, &cfg.solver, &opts)?;
                let track = result.coefficient_track(&basis.names, seq.fps);
                track.write_csv(&self.track_path(id), Some(&prov))?;
                write_poses(
                    &self.path(&["poses", &format!("{id}.csv")]),
                    &result.poses(),
                    seq.fps,
                    Some(&prov),
                )?;
                let mut rows = String::new();
                for (t, r) in result.frames.iter().enumerate() {
                    writeln!(
                        rows,
                        "{id},{t},{:.9e},{},{}",
                        r.objective, r.iterations, r.converged
                    )
                    .unwrap();
                }
                for (t, msg) in &result.failures {
                    log::warn!("fit-bsc: {id} frame {t}: {msg}");
                }
                Ok((
                    FitSummary {
                        id: id.clone(),
                        frames: result.frames.len(),
                        converged: result.frames.iter().filter(|r| r.converged).count(),
                        failures: result.failures.len(),
                    },
                    rows,
                ))
            };
            run().map_err(|e| e.at_utterance(id))
        });
        let mut text = format!("# {prov}\nutterance_id,frame,objective,iterations,converged\n");
        for r in fitted {
            let (summary, rows) = r?;
            text.push_str(&rows);
            report.fitted.push(summary);
        }
        for (id, reason) in &report.skipped {
            writeln!(text, "# skipped {id}: {reason}").unwrap();
        }
        write_text(&self.path(&["fit_report.csv"]), &text)?;
        for s in &report.fitted {
            let bad = s.frames - s.converged;
            if bad as f64 > cfg.fit.max_unconverged * s.frames as f64 {
                return Err(Error::Numerical(format!(
                    "{}: {bad} of {} frames did not converge",
                    s.id, s.frames
                )));
            }
        }
        Ok(report)
    }

    fn read_features(&self, id: &str) -> Result<FeatureFile> {
        let path = self.features_path(id);
        if !path.exists() {
            return Err(Error::invalid(format!(
                "missing features {} (run extract-features)",
                path.display()
            ))
            .at_utterance(id));
        }
        let f = FeatureFile::read(&path)?;
        if f.n_mels != self.config.frontend.n_mels {
            return Err(Error::DimensionMismatch {
                expected: self.config.frontend.n_mels,
                actual: f.n_mels,
            }
            .at_utterance(id));
        }
        Ok(f)
    }

    fn label_dataset<'a>(
        &self,
        entries: impl Iterator<Item = &'a ManifestEntry>,
    ) -> Result<Dataset<usize>> {
        let spec = &self.config.network;
        let mut data = Dataset::new(spec.context, spec.n_mels)?;
        for e in entries {
            let Some(lp) = &e.labels else { continue };
            let f = self.read_features(&e.id)?;
            let mut labels = read_labels(lp).map_err(|err| err.at_utterance(&e.id))?;
            let rate = 1.0 / f.hop;
            if (labels.frame_rate - rate).abs() > 1e-9 * rate {
                labels = resample_labels(&labels, rate)?;
            }
            let n = aligned_len(&e.id, f.n_frames(), labels.labels.len())?;
            let mut rows = f.to_f64();
            rows.truncate(n * f.n_mels);
            labels.labels.truncate(n);
            data.push_sequence(rows, labels.labels)
                .map_err(|err| err.at_utterance(&e.id))?;
        }
        Ok(data)
    }

    fn regression_dataset(&self, manifest: &Manifest) -> Result<(Dataset<Vec<f64>>, Vec<String>)> {
        let spec = &self.config.network;
        let mut data = Dataset::new(spec.context, spec.n_mels)?;
        let mut names: Option<Vec<String>> = None;
        for e in manifest.split(Split::Train).filter(|e| e.depth.is_some()) {
            let tp = self.track_path(&e.id);
            if !tp.exists() {
                return Err(Error::invalid(format!(
                    "missing fitted track {} (run fit-bsc)",
                    tp.display()
                ))
                .at_utterance(&e.id));
            }
            let track = CoefficientTrack::read_csv(&tp)?;
            match &names {
                None => names = Some(track.names.clone()),
                Some(n) if *n != track.names => {
                    return Err(Error::invalid("track channels differ").at_utterance(&e.id))
                }
                _ => {}
            }
            let f = self.read_features(&e.id)?;
            let n = aligned_len(&e.id, f.n_frames(), track.n_frames())?;
            let mut rows = f.to_f64();
            rows.truncate(n * f.n_mels);
            let targets = track.frames[..n].to_vec();
            data.push_sequence(rows, targets)
                .map_err(|err| err.at_utterance(&e.id))?;
        }
        let names = names.ok_or_else(|| {
            Error::invalid("no training utterances with depth data for regression")
        })?;
        Ok((data, names))
    }

    pub fn train(&self, manifest: &Manifest, mode: TrainMode) -> Result<PathBuf> {
        let cfg = &self.config;
        let prov = self.provenance();
        let ckpt = self.checkpoint_path(mode);
        let (net, log, metric, extra) = match mode {
            TrainMode::Am => {
                let train = self.label_dataset(manifest.split(Split::Train))?;
                if train.is_empty() {
                    return Err(Error::invalid("no labelled training utterances"));
                }
                let (net, log) = train_am(&cfg.network, &train, &cfg.am)?;
                let held = self.label_dataset(manifest.split(Split::Validation))?;
                let extra = if held.is_empty() {
                    None
                } else {
                    Some(format!(
                        "validation_accuracy={:.4}",
                        frame_accuracy(&net, &held)?
                    ))
                };
                (net, log, "accuracy", extra)
            }
            TrainMode::Adapt | TrainMode::RandomBaseline => {
                let start = if mode == TrainMode::Adapt {
                    let am_path = self.checkpoint_path(TrainMode::Am);
                    if !am_path.exists() {
                        return Err(Error::MissingAcousticModel(am_path));
                    }
                    Some(read_checkpoint(&am_path)?)
                } else {
                    None
                };
                let (data, names) = self.regression_dataset(manifest)?;
                let opts = AdaptOptions {
                    n_targets: names.len(),
                    freeze_bottleneck: cfg.freeze_bottleneck,
                };
                let init = match start {
                    Some(am) => adapt_with(&am, &opts),
                    None => random_baseline(&cfg.network, names.len(), cfg.adapt.seed)?,
                };
                let (net, log) = train_regression(&init, &data, &cfg.adapt)?;
                let mut list = names.join("\n");
                list.push('\n');
                write_text(&channels_path(&ckpt), &list)?;
                (net, log, "mae", None)
            }
        };
        write_checkpoint(&ckpt, &net)?;
        let mut text = log.to_csv(metric, Some(&prov));
        if let Some(x) = extra {
            writeln!(text, "# {x}").unwrap();
        }
        write_text(&self.path(&[mode.log_name()]), &text)?;
        self.record(
            mode.checkpoint_name().trim_end_matches(".ckpt"),
            std::slice::from_ref(&ckpt),
        )?;
        Ok(ckpt)
    }

    /// Raw and post-processed predictions for every test utterance.
    pub fn infer(&self, manifest: &Manifest, checkpoint: &Path) -> Result<Vec<PathBuf>> {
        let net = read_checkpoint(checkpoint)?;
        if net.head_kind != HeadKind::Regression {
            return Err(Error::NotRegression);
        }
        let names = checkpoint_channels(checkpoint, net.n_head_outputs())?;
        mkdir(&self.path(&["raw"]))?;
        mkdir(&self.path(&["predictions"]))?;
        let prov = self.provenance();
        let test = sorted_split(manifest, Split::Test);
        let results = self.par_map(&test, |e| -> Result<PathBuf> {
            let run = || -> Result<PathBuf> {
                let wav = read_wav(&e.audio)?;
                let (raw, post) = run_infer(&net, &wav, &self.config, &names)?;
                raw.write_csv(&self.raw_path(&e.id), Some(&prov))?;
                let out = self.prediction_path(&e.id);
                post.write_csv(&out, Some(&prov))?;
                Ok(out)
            };
            run().map_err(|err| err.at_utterance(&e.id))
        });
        results.into_iter().collect()
    }

    /// Re-runs post-processing from `raw/` into `predictions/`.
    pub fn postprocess(&self, manifest: &Manifest) -> Result<Vec<PathBuf>> {
        mkdir(&self.path(&["predictions"]))?;
        let prov = self.provenance();
        let mut out = Vec::new();
        for e in sorted_split(manifest, Split::Test) {
            let raw = CoefficientTrack::read_csv(&self.raw_path(&e.id))
                .map_err(|err| err.at_utterance(&e.id))?;
            let post =
                postprocess(&raw, &self.config.postproc).map_err(|err| err.at_utterance(&e.id))?;
            let p = self.prediction_path(&e.id);
            post.write_csv(&p, Some(&prov))?;
            out.push(p);
        }
        Ok(out)
    }

    /// Compares `predictions/` with the fitted `tracks/` of the test split.
    pub fn evaluate(
        &self,
        manifest: &Manifest,
        grades: Option<GradeSummary>,
    ) -> Result<EvalReport> {
        let mut pairs = Vec::new();
        for e in sorted_split(manifest, Split::Test) {
            let read =
                |p: PathBuf| CoefficientTrack::read_csv(&p).map_err(|err| err.at_utterance(&e.id));
            pairs.push((
                e.id.clone(),
                read(self.prediction_path(&e.id))?,
                read(self.track_path(&e.id))?,
            ));
        }
        let report = evaluate_tracks(&pairs, &self.config.speech_channels, grades)?;
        let prov = self.provenance();
        write_text(&self.path(&["report.txt"]), &report.to_text(&prov))?;
        write_text(&self.path(&["report.csv"]), &report.to_csv(&prov))?;
        Ok(report)
    }

    /// Writes one OBJ mesh per frame of `track` under `dir`, in the neutral
    /// pose.
    pub fn export_obj(
        &self,
        manifest: &Manifest,
        track: &CoefficientTrack,
        dir: &Path,
    ) -> Result<usize> {
        let b = manifest
            .basis
            .as_ref()
            .ok_or_else(|| Error::format("manifest", "no basis for mesh export"))?;
        let basis = load_basis(b)?;
        mkdir(dir)?;
        for (t, x) in track.frames.iter().enumerate() {
            let v = evaluate_mesh(
                &basis,
                &CoefficientFrame::new(x.clone())?,
                &RigidPose::identity(),
            )?;
            write_obj(&dir.join(format!("frame_{t:05}.obj")), &v, &basis.triangles)?;
        }
        Ok(track.n_frames())
    }
}

/// Training log CSV for a finished run.
pub fn log_csv(log: &TrainingLog, metric: &str, provenance: &str) -> String {
    log.to_csv(metric, Some(provenance))
}
