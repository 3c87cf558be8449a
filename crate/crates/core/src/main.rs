use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use avsynth::error::{Error, Result};
use avsynth::frontend::io::read_wav;
use avsynth::nn::read_checkpoint;
use avsynth::pipeline::{
    checkpoint_channels, run_infer, summarize_grades, Manifest, Pipeline, PipelineConfig, TrainMode,
};
use avsynth::postproc::postprocess;
use avsynth::track::CoefficientTrack;

/// Speech-driven blendshape animation pipeline.
#[derive(Parser, Debug)]
#[command(name = "avsynth", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Config file (`section.key = value` lines). Defaults to `<out>/config.txt`
    /// when that exists, else built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset manifest [default: <out>/manifest.csv]
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `run.output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for per-utterance stages.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus and its manifest.
    SynthData,
    /// Log-mel features for every utterance.
    ExtractFeatures,
    /// Fit blendshape tracks to depth and landmark sequences.
    FitBsc,
    /// Train the senone acoustic model.
    TrainAm,
    /// Adapt the acoustic model to blendshape regression.
    Adapt,
    /// Train the regression network from a random initialization.
    TrainBaseline,
    /// Predict tracks for the test split, or for one file with --audio.
    Infer(InferArgs),
    /// Post-process raw predictions.
    Postprocess(PostArgs),
    /// Score predictions against fitted tracks.
    Evaluate(EvalArgs),
}

#[derive(Args, Debug)]
struct InferArgs {
    /// Regression checkpoint [default: <out>/adapted.ckpt]
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Single WAV file instead of the manifest's test split.
    #[arg(long, requires = "output")]
    audio: Option<PathBuf>,
    /// Post-processed track CSV for --audio.
    #[arg(long, requires = "audio")]
    output: Option<PathBuf>,
    /// Also write the raw network output for --audio.
    #[arg(long, requires = "audio")]
    raw_output: Option<PathBuf>,
    /// Write one OBJ mesh per frame for --audio (needs a manifest basis).
    #[arg(long, requires = "audio")]
    obj_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PostArgs {
    /// Single raw track CSV instead of `<out>/raw/`.
    #[arg(long, requires = "output")]
    input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Preference grades CSV: grader_id,utterance_id,preference (A, B or ND).
    #[arg(long)]
    grades: Option<PathBuf>,
    /// Presentation order CSV: utterance_id,shown_first.
    #[arg(long, requires = "grades")]
    order: Option<PathBuf>,
}

fn load_config(g: &Global) -> Result<PipelineConfig> {
    let mut cfg = match (&g.config, &g.out) {
        (Some(p), _) => PipelineConfig::load(p)?,
        (None, Some(out)) if out.join("config.txt").is_file() => {
            PipelineConfig::load(&out.join("config.txt"))?
        }
        _ => PipelineConfig::default(),
    };
    if let Some(out) = &g.out {
        cfg.output_dir = out.clone();
    }
    if let Some(s) = g.seed {
        cfg.set_seed(s);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn manifest(g: &Global, p: &Pipeline) -> Result<Manifest> {
    let path = g.manifest.clone().unwrap_or_else(|| p.manifest_path());
    Manifest::load(&path)
}

fn infer_file(p: &Pipeline, g: &Global, args: &InferArgs, checkpoint: &Path) -> Result<()> {
    let (Some(audio), Some(output)) = (&args.audio, &args.output) else {
        unreachable!("clap enforces --audio with --output")
    };
    let net = read_checkpoint(checkpoint)?;
    let names = checkpoint_channels(checkpoint, net.n_head_outputs())?;
    let wav = read_wav(audio)?;
    let (raw, post) = run_infer(&net, &wav, &p.config, &names)?;
    let prov = p.provenance();
    post.write_csv(output, Some(&prov))?;
    if let Some(r) = &args.raw_output {
        raw.write_csv(r, Some(&prov))?;
    }
    if let Some(dir) = &args.obj_dir {
        let n = p.export_obj(&manifest(g, p)?, &post, dir)?;
        log::info!("wrote {n} meshes to {}", dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let cfg = load_config(g)?;
    let out = cfg.output_dir.clone();
    let p = Pipeline::new(cfg, &out, g.jobs)?;
    match &cli.command {
        Command::SynthData => {
            let m = p.synth_data()?;
            println!("wrote {} utterances to {}", m.entries.len(), out.display());
        }
        Command::ExtractFeatures => {
            let files = p.extract_features(&manifest(g, &p)?)?;
            println!("extracted features for {} utterances", files.len());
        }
        Command::FitBsc => {
            let r = p.fit_bsc(&manifest(g, &p)?)?;
            for s in &r.fitted {
                println!("{}: {}/{} frames converged", s.id, s.converged, s.frames);
            }
            if !r.skipped.is_empty() {
                println!(
                    "skipped {} utterances (see fit_report.csv)",
                    r.skipped.len()
                );
            }
        }
        Command::TrainAm | Command::Adapt | Command::TrainBaseline => {
            let mode = match cli.command {
                Command::TrainAm => TrainMode::Am,
                Command::Adapt => TrainMode::Adapt,
                _ => TrainMode::RandomBaseline,
            };
            let ckpt = p.train(&manifest(g, &p)?, mode)?;
            println!("wrote {}", ckpt.display());
        }
        Command::Infer(args) => {
            let ckpt = args
                .checkpoint
                .clone()
                .unwrap_or_else(|| p.checkpoint_path(TrainMode::Adapt));
            if args.audio.is_some() {
                infer_file(&p, g, args, &ckpt)?;
            } else {
                let files = p.infer(&manifest(g, &p)?, &ckpt)?;
                println!("wrote {} predictions", files.len());
            }
        }
        Command::Postprocess(args) => match (&args.input, &args.output) {
            (Some(i), Some(o)) => {
                let raw = CoefficientTrack::read_csv(i)?;
                postprocess(&raw, &p.config.postproc)?.write_csv(o, Some(&p.provenance()))?;
            }
            _ => {
                let files = p.postprocess(&manifest(g, &p)?)?;
                println!("post-processed {} tracks", files.len());
            }
        },
        Command::Evaluate(args) => {
            let grades = match &args.grades {
                Some(gp) => Some(summarize_grades(gp, args.order.as_deref())?),
                None => None,
            };
            let report = p.evaluate(&manifest(g, &p)?, grades)?;
            print!("{}", report.to_text(&p.provenance()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code().clamp(1, 255) as u8
}
