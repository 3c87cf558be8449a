use std::fs;
use std::path::Path;
use std::process::Command;

use avsynth::frontend::io::write_wav;
use avsynth::frontend::Waveform;
use avsynth::nn::read_checkpoint;
use avsynth::pipeline::{
    checkpoint_channels, run_infer, summarize_grades, Manifest, Pipeline, PipelineConfig, TrainMode,
};
use avsynth::stats::{grouped_mae, mae};
use avsynth::track::CoefficientTrack;

fn tiny_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    for (k, v) in [
        ("corpus.am_utterances", "2"),
        ("corpus.am_heldout", "1"),
        ("corpus.am_duration", "4"),
        ("corpus.fit_utterances", "1"),
        ("corpus.test_utterances", "2"),
        ("corpus.fit_duration", "2"),
        ("am.epochs", "2"),
        ("adapt.epochs", "2"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.set_seed(seed);
    cfg
}

fn run_through_adapt(out: &Path, seed: u64) -> (Pipeline, Manifest) {
    let p = Pipeline::new(tiny_config(seed), out, 2).unwrap();
    p.synth_data().unwrap();
    let m = Manifest::load(&p.manifest_path()).unwrap();
    p.extract_features(&m).unwrap();
    let fit = p.fit_bsc(&m).unwrap();
    assert_eq!(fit.fitted.len(), 3);
    for s in &fit.fitted {
        assert_eq!(s.converged, s.frames, "{}", s.id);
    }
    p.train(&m, TrainMode::Am).unwrap();
    p.train(&m, TrainMode::Adapt).unwrap();
    (p, m)
}

#[test]
fn stages_chain_and_report_matches_direct_calls() {
    let dir = tempfile::tempdir().unwrap();
    let (p, m) = run_through_adapt(dir.path(), 5);
    let ckpt = p.checkpoint_path(TrainMode::Adapt);

    let first = p.infer(&m, &ckpt).unwrap();
    let bytes: Vec<Vec<u8>> = first.iter().map(|f| fs::read(f).unwrap()).collect();
    p.infer(&m, &ckpt).unwrap();
    for (f, b) in first.iter().zip(&bytes) {
        assert_eq!(&fs::read(f).unwrap(), b, "inference is not repeatable");
    }

    let report = p.evaluate(&m, None).unwrap();
    let mut all_p = Vec::new();
    let mut all_t = Vec::new();
    for e in m.split(avsynth::pipeline::Split::Test) {
        let pred = CoefficientTrack::read_csv(&p.prediction_path(&e.id)).unwrap();
        let truth = CoefficientTrack::read_csv(&p.track_path(&e.id)).unwrap();
        assert_eq!(pred.fps, 60.0);
        assert!(pred.n_frames().abs_diff(truth.n_frames()) <= 1);
        let n = pred.n_frames().min(truth.n_frames());
        all_p.extend_from_slice(&pred.frames[..n]);
        all_t.extend_from_slice(&truth.frames[..n]);
    }
    let names = p.config.synth.shape_names();
    let pred = CoefficientTrack::new(names.clone(), 60.0, all_p).unwrap();
    let truth = CoefficientTrack::new(names.clone(), 60.0, all_t).unwrap();
    assert_eq!(report.mae, mae(&pred, &truth).unwrap());
    let speech: Vec<String> = p.config.speech_channels.clone();
    let other: Vec<String> = names
        .iter()
        .filter(|n| !speech.contains(n))
        .cloned()
        .collect();
    let groups = grouped_mae(
        &pred,
        &truth,
        &[("speech".into(), speech), ("other".into(), other)],
    )
    .unwrap();
    assert_eq!(report.groups, groups);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with(&format!("# {}", p.provenance())));
}

#[test]
fn perfect_predictions_and_unanimous_grades() {
    let dir = tempfile::tempdir().unwrap();
    let (p, m) = run_through_adapt(dir.path(), 6);
    fs::create_dir_all(dir.path().join("predictions")).unwrap();
    for e in m.split(avsynth::pipeline::Split::Test) {
        fs::copy(p.track_path(&e.id), p.prediction_path(&e.id)).unwrap();
    }
    let grades = dir.path().join("grades.csv");
    fs::write(
        &grades,
        "grader_id,utterance_id,preference\ng1,u1,A\ng1,u2,A\ng2,u1,A\n",
    )
    .unwrap();
    let g = summarize_grades(&grades, None).unwrap();
    let report = p.evaluate(&m, Some(g)).unwrap();
    assert_eq!(report.mae, 0.0);
    let s = &report.grades.as_ref().unwrap().summary;
    assert_eq!(
        (s.percent_a, s.percent_b, s.percent_no_difference),
        (100.0, 0.0, 0.0)
    );
    assert_eq!(s.test.u_normalized, 1.0);
    let text = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("0.000000"), "{text}");
}

#[test]
fn misaligned_tracks_name_the_utterance() {
    let dir = tempfile::tempdir().unwrap();
    let (p, m) = run_through_adapt(dir.path(), 7);
    p.infer(&m, &p.checkpoint_path(TrainMode::Adapt)).unwrap();
    let e = m.split(avsynth::pipeline::Split::Test).next().unwrap();
    let mut t = CoefficientTrack::read_csv(&p.prediction_path(&e.id)).unwrap();
    t.frames.truncate(t.n_frames() - 5);
    t.write_csv(&p.prediction_path(&e.id), None).unwrap();
    let err = p.evaluate(&m, None).unwrap_err().to_string();
    assert!(err.contains(&e.id), "{err}");
}

#[test]
fn silence_gives_a_zero_track_at_sixty_fps() {
    let dir = tempfile::tempdir().unwrap();
    let (p, _) = run_through_adapt(dir.path(), 8);
    let ckpt = p.checkpoint_path(TrainMode::Adapt);
    let net = read_checkpoint(&ckpt).unwrap();
    let names = checkpoint_channels(&ckpt, net.n_head_outputs()).unwrap();
    let wav = Waveform::new(vec![0.0; 16000 * 3 / 2], 16000).unwrap();
    let (raw, post) = run_infer(&net, &wav, &p.config, &names).unwrap();
    assert_eq!(post.fps, 60.0);
    assert!(post.n_frames().abs_diff(90) <= 1, "{}", post.n_frames());
    assert!(raw.frames.windows(2).all(|w| w[0] == w[1]));
    assert!(post.frames.iter().flatten().all(|&v| v == 0.0));
}

#[test]
fn training_is_deterministic_and_needs_its_inputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_through_adapt(a.path(), 9);
    let (p, m) = run_through_adapt(b.path(), 9);
    for name in ["am.ckpt", "adapted.ckpt"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }

    let err = p.infer(&m, &p.checkpoint_path(TrainMode::Am)).unwrap_err();
    assert!(err.to_string().contains("not a regression network"));

    fs::remove_file(p.checkpoint_path(TrainMode::Am)).unwrap();
    let err = p.train(&m, TrainMode::Adapt).unwrap_err();
    assert!(err.to_string().contains("missing acoustic model"), "{err}");

    fs::remove_dir_all(b.path().join("features")).unwrap();
    let err = p.train(&m, TrainMode::Am).unwrap_err().to_string();
    assert!(err.contains("missing features"), "{err}");
}

#[test]
fn fitting_skips_utterances_without_depth() {
    let dir = tempfile::tempdir().unwrap();
    let wav = Waveform::new(vec![0.0; 1600], 16000).unwrap();
    fs::create_dir(dir.path().join("audio")).unwrap();
    write_wav(&dir.path().join("audio/a.wav"), &wav).unwrap();
    write_wav(&dir.path().join("audio/b.wav"), &wav).unwrap();
    let manifest = dir.path().join("manifest.csv");
    fs::write(
        &manifest,
        "utterance_id,audio,depth,landmarks,labels,split\n\
         a,audio/a.wav,-,-,-,train\nb,audio/b.wav,-,-,-,test\n",
    )
    .unwrap();
    let m = Manifest::load(&manifest).unwrap();
    let p = Pipeline::new(PipelineConfig::default(), dir.path(), 1).unwrap();
    let r = p.fit_bsc(&m).unwrap();
    assert!(r.fitted.is_empty());
    assert_eq!(r.skipped.len(), 2);
    let report = fs::read_to_string(dir.path().join("fit_report.csv")).unwrap();
    assert!(report.contains("# skipped a: no depth"), "{report}");
    assert_eq!(fs::read_dir(dir.path().join("tracks")).unwrap().count(), 0);
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_avsynth"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
    assert_eq!(cli(&["no-such-stage"]).status.code(), Some(1));
    assert_eq!(cli(&["--jobs", "x", "fit-bsc"]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let r = cli(&["--out", out, "extract-features"]);
    assert_eq!(r.status.code(), Some(2));

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "am.epochs = many\n").unwrap();
    let r = cli(&["--config", bad.to_str().unwrap(), "synth-data"]);
    assert_eq!(r.status.code(), Some(1));
}
