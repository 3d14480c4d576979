//! The `crowdim` command line: synth, ingest, train, predict, eval, sweep,
//! render, and rerun from a manifest.

mod manifest;

pub use manifest::{fnv64, InputDigest, RunManifest, TOOL_VERSION};

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::adversary::{DiscriminatorNet, PosteriorNet};
use crate::checkpoint::{stored_width, Checkpoint};
use crate::error::{Error, Result};
use crate::eval::{evaluate, evaluate_with, intention_sweep, predict, report, write_render, write_sweep_csv, BatchPrediction};
use crate::optim::{constant_velocity_predict, train_gail, train_sagail, train_supervised, IterationState, TrainConfig, TrainData, METRICS_HEADER};
use crate::policy::{rollout, LatentCode, PolicyNet, RolloutOptions, SocialFlags};
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;
use crate::trajdata::{
    build_episodes, load_tracklets, make_frame_batches, of_split, resample, save_tracklets, synth_generate, Episode, FrameBatch, Point,
    SceneSpec, Split, SynthParams, WindowOptions, T_OBS,
};

#[derive(Debug, Parser)]
#[command(name = "crowdim", version, about = "Imitation learning of pedestrian trajectories")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Generate synthetic tracklets for a scene.
    Synth(SynthArgs),
    /// Validate, resample and normalize a raw tracklet file.
    Ingest(IngestArgs),
    /// Train a policy (supervised baseline or adversarial imitation).
    Train(TrainArgs),
    /// Write deterministic predictions for a data split.
    Predict(PredictArgs),
    /// Compute displacement and collision metrics.
    Eval(EvalArgs),
    /// Roll out every latent code and measure intention statistics.
    Sweep(SweepArgs),
    /// Draw observed, true and generated paths as SVG.
    Render(RenderArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    /// Scene file (TOML).
    #[arg(long)]
    pub scene: PathBuf,
    /// Number of walkers to spawn.
    #[arg(long, default_value_t = 20)]
    pub agents: usize,
    /// Simulated steps at 2 fps.
    #[arg(long, default_value_t = 400)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generator parameters (TOML); defaults when omitted.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Output tracklet CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    /// Raw `id,frame,x,y[,goal_exit]` CSV in pixels.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Frame rate of the input.
    #[arg(long, default_value_t = 2.0)]
    pub src_fps: f64,
    /// Frame rate of the output.
    #[arg(long, default_value_t = 2.0)]
    pub dst_fps: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Supervised,
    Gail,
    Sagail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Training configuration (TOML); defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gail")]
    pub mode: Mode,
    /// Tracklet CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Overrides the seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "f64")]
    pub precision: Precision,
    /// Output directory for checkpoints, metrics and the manifest.
    #[arg(long)]
    pub out: PathBuf,
}

/// Options shared by the commands that run a trained policy.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Tracklet CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Largest frame batch.
    #[arg(long, default_value_t = 16)]
    pub max_batch: usize,
    /// Disable the collision gate.
    #[arg(long, default_value_t = false)]
    pub no_gate: bool,
    /// Disable the social vicinity layer.
    #[arg(long, default_value_t = false)]
    pub no_vicinity: bool,
}

impl ModelArgs {
    fn social(&self) -> SocialFlags {
        SocialFlags { gate: !self.no_gate, vicinity: !self.no_vicinity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Latent code used by coded policies.
    #[arg(long, default_value_t = 0)]
    pub code: usize,
    /// Output CSV `episode_id,tracklet_id,frame,x,y` in pixels.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    ConstantVelocity,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Policy checkpoint; exactly one of checkpoint, baseline, predictions.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    /// Prediction CSV as written by `predict`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 16)]
    pub max_batch: usize,
    #[arg(long, default_value_t = false)]
    pub no_gate: bool,
    #[arg(long, default_value_t = false)]
    pub no_vicinity: bool,
    /// Report JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Code dimension K of the checkpoint.
    #[arg(long, default_value_t = 2)]
    pub codes: usize,
    /// Output CSV `episode_id,code,dev_px,endpoint_x,endpoint_y`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Episodes drawn, in split order.
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    /// Output SVG.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn out_mut(&mut self) -> Option<&mut PathBuf> {
        match self {
            Command::Synth(a) => Some(&mut a.out),
            Command::Ingest(a) => Some(&mut a.out),
            Command::Train(a) => Some(&mut a.out),
            Command::Predict(a) => Some(&mut a.out),
            Command::Eval(a) => Some(&mut a.out),
            Command::Sweep(a) => Some(&mut a.out),
            Command::Render(a) => Some(&mut a.out),
            Command::Rerun(_) => None,
        }
    }
}

/// Process exit status of an error: 2 usage or configuration, 3 input or
/// output, 4 runtime abort.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Parse { .. } | Error::Checkpoint(_) => 3,
        Error::Divergence { .. } | Error::NonFiniteGradient(_) | Error::Aborted(_) => 4,
        Error::EmptyDataset
        | Error::DegenerateTracklet { .. }
        | Error::Split(_)
        | Error::Config(_)
        | Error::Shape(_)
        | Error::NumericInput
        | Error::Argument(_) => 2,
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Snapshots that replace file inputs when repeating a manifest.
#[derive(Default)]
struct Snapshots {
    scene: Option<SceneSpec>,
    config: Option<TrainConfig>,
    synth: Option<SynthParams>,
}

impl Snapshots {
    fn scene(&self, path: &Path) -> Result<SceneSpec> {
        match &self.scene {
            Some(s) => Ok(s.clone()),
            None => SceneSpec::load(path),
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    execute(command, &Snapshots::default())
}

fn execute(command: Command, snap: &Snapshots) -> Result<()> {
    match command.clone() {
        Command::Synth(a) => cmd_synth(&a, command, snap),
        Command::Ingest(a) => cmd_ingest(&a, command, snap),
        Command::Train(a) => cmd_train(&a, command, snap),
        Command::Predict(a) => match load_checkpoint(&a.model.checkpoint)? {
            AnyCheckpoint::F32(c) => cmd_predict(&a, c, command, snap),
            AnyCheckpoint::F64(c) => cmd_predict(&a, c, command, snap),
        },
        Command::Eval(a) => cmd_eval(&a, command, snap),
        Command::Sweep(a) => match load_checkpoint(&a.model.checkpoint)? {
            AnyCheckpoint::F32(c) => cmd_sweep(&a, c, command, snap),
            AnyCheckpoint::F64(c) => cmd_sweep(&a, c, command, snap),
        },
        Command::Render(a) => match load_checkpoint(&a.model.checkpoint)? {
            AnyCheckpoint::F32(c) => cmd_render(&a, c, command, snap),
            AnyCheckpoint::F64(c) => cmd_render(&a, c, command, snap),
        },
        Command::Rerun(a) => cmd_rerun(&a),
    }
}

/// A checkpoint in its stored precision.
enum AnyCheckpoint {
    F32(Checkpoint<f32>),
    F64(Checkpoint<f64>),
}

fn load_checkpoint(path: &Path) -> Result<AnyCheckpoint> {
    let bytes = std::fs::read(path)?;
    match stored_width(&bytes)? {
        4 => Ok(AnyCheckpoint::F32(Checkpoint::from_bytes(&bytes)?)),
        8 => Ok(AnyCheckpoint::F64(Checkpoint::from_bytes(&bytes)?)),
        w => Err(Error::Checkpoint(format!("unsupported scalar width {w}"))),
    }
}

fn sidecar(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p)?;
    }
    Ok(())
}

fn say(line: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}")?;
    out.flush()?;
    Ok(())
}

fn cmd_synth(a: &SynthArgs, command: Command, snap: &Snapshots) -> Result<()> {
    let scene = snap.scene(&a.scene)?;
    let params = match (&snap.synth, &a.params) {
        (Some(p), _) => p.clone(),
        (None, Some(path)) => toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Config(e.to_string()))?,
        (None, None) => SynthParams::default(),
    };
    let mut m = RunManifest::new(command).with_scene(&scene);
    m.seed = Some(a.seed);
    m.synth = Some(params.clone());
    m.artifacts.push(a.out.clone());
    create_parent(&a.out)?;
    m.write(&sidecar(&a.out))?;
    let ts = synth_generate(&scene, a.agents, a.steps, a.seed, &params)?;
    save_tracklets(&a.out, &ts, &scene)?;
    say(&format!("wrote {} tracklets to {}", ts.len(), a.out.display()))
}

fn cmd_ingest(a: &IngestArgs, command: Command, snap: &Snapshots) -> Result<()> {
    let scene = snap.scene(&a.scene)?;
    let mut m = RunManifest::new(command).with_scene(&scene);
    m.input(&a.input)?;
    m.artifacts.push(a.out.clone());
    create_parent(&a.out)?;
    m.write(&sidecar(&a.out))?;
    let raw = load_tracklets(&a.input, &scene)?;
    let mut kept = Vec::with_capacity(raw.len());
    for t in &raw {
        match resample(t, a.src_fps, a.dst_fps) {
            Ok(r) => kept.push(r),
            Err(Error::DegenerateTracklet { id, len }) => eprintln!("warning: tracklet {id} dropped ({len} points after resampling)"),
            Err(e) => return Err(e),
        }
    }
    save_tracklets(&a.out, &kept, &scene)?;
    say(&format!("kept {} of {} tracklets", kept.len(), raw.len()))
}

fn load_episodes(data: &Path, scene: &SceneSpec) -> Result<Vec<Episode>> {
    build_episodes(&load_tracklets(data, scene)?, WindowOptions::default())
}

fn cmd_train(a: &TrainArgs, command: Command, snap: &Snapshots) -> Result<()> {
    let mut cfg = match (&snap.config, &a.config) {
        (Some(c), _) => c.clone(),
        (None, Some(p)) => TrainConfig::load(p)?,
        (None, None) => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    match a.mode {
        Mode::Gail if cfg.codes != 0 => return Err(Error::Config(format!("mode gail requires codes = 0, config has {}", cfg.codes))),
        Mode::Sagail if !matches!(cfg.codes, 2 | 3) => {
            return Err(Error::Config(format!("mode sagail requires codes 2 or 3, config has {}", cfg.codes)))
        }
        _ => {}
    }
    let scene = snap.scene(&a.scene)?;
    std::fs::create_dir_all(a.out.join("checkpoints"))?;
    let mut m = RunManifest::new(command).with_scene(&scene);
    m.seed = Some(cfg.seed);
    m.config = Some(cfg.clone());
    m.input(&a.data)?;
    m.artifacts.extend([PathBuf::from("metrics.csv"), PathBuf::from("final.ckpt")]);
    m.write(&a.out.join("manifest.json"))?;

    let tracklets = load_tracklets(&a.data, &scene)?;
    let data = TrainData::from_tracklets(scene, &tracklets, cfg.train_stride, cfg.max_batch_agents)?;
    match a.precision {
        Precision::F32 => train_as::<f32>(a, &cfg, &data),
        Precision::F64 => train_as::<f64>(a, &cfg, &data),
    }
}

fn train_as<T: Scalar>(a: &TrainArgs, cfg: &TrainConfig, data: &TrainData) -> Result<()> {
    let policy = PolicyNet::<T>::new(cfg.policy_config(), &mut stream(cfg.seed, Stream::PolicyInit));
    let mut metrics = std::io::BufWriter::new(File::create(a.out.join("metrics.csv"))?);
    let save = |name: String, c: &Checkpoint<T>| c.save(&a.out.join(name));
    let periodic = |i: usize| cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0;

    let final_ckpt = if a.mode == Mode::Supervised {
        writeln!(metrics, "epoch,train_loss,val_ade,val_fde,val_normade,collision_rate")?;
        let out = train_supervised(policy, data, &cfg.supervised, cfg.social, cfg.seed, &mut |row, p| {
            let v = row.val.map_or([f64::NAN; 4], |v| [v.ade_px, v.fde_px, v.norm_ade, v.collision_rate]);
            writeln!(metrics, "{},{:.9},{:.9},{:.9},{:.9},{:.9}", row.epoch, row.train_loss, v[0], v[1], v[2], v[3])?;
            metrics.flush()?;
            say(&format!("epoch {} loss {:.6} val_ade {:.3}", row.epoch, row.train_loss, v[0]))?;
            if periodic(row.epoch) {
                let c = Checkpoint { policy: p.clone(), discriminator: None, posterior: None };
                save(format!("checkpoints/epoch_{:05}.ckpt", row.epoch + 1), &c)?;
            }
            Ok(())
        })?;
        Checkpoint { policy: out.policy, discriminator: None, posterior: None }
    } else {
        writeln!(metrics, "{METRICS_HEADER}")?;
        let d = DiscriminatorNet::<T>::new(cfg.critic, &mut stream(cfg.seed, Stream::DiscriminatorInit));
        let mut observer = |s: &IterationState<'_, T>| -> Result<()> {
            writeln!(metrics, "{}", s.row.csv_line())?;
            metrics.flush()?;
            let r = s.row;
            say(&format!(
                "iter {} d_loss {:.4} d_acc {:.3} reward {:.4} mi {:.4} kl {:.5} accepted {} val_ade {:.3}",
                r.iter,
                r.d_loss,
                r.d_acc,
                r.mean_reward,
                r.mi_lower_bound,
                r.kl,
                u8::from(r.step_accepted),
                r.val.map_or(f64::NAN, |v| v.ade_px)
            ))?;
            if periodic(r.iter) {
                let c = Checkpoint { policy: s.policy.clone(), discriminator: Some(s.discriminator.clone()), posterior: s.posterior.cloned() };
                save(format!("checkpoints/iter_{:05}.ckpt", r.iter + 1), &c)?;
            }
            Ok(())
        };
        let out = if a.mode == Mode::Sagail {
            // Zero head: the posterior starts uniform, so the logged bound starts at 0.
            let mut q = PosteriorNet::<T>::new(cfg.critic, cfg.codes, &mut stream(cfg.seed, Stream::PosteriorInit))?;
            q.zero_head();
            train_sagail(policy, d, q, data, cfg, &mut observer)?
        } else {
            train_gail(policy, d, data, cfg, &mut observer)?
        };
        if out.stopped_early {
            say("early stopping")?;
        }
        Checkpoint { policy: out.policy, discriminator: Some(out.discriminator), posterior: out.posterior }
    };
    save("final.ckpt".into(), &final_ckpt)?;
    say(&format!("wrote {}", a.out.join("final.ckpt").display()))
}

fn split_batches(data: &Path, scene: &SceneSpec, split: SplitArg, max_batch: usize) -> Result<Vec<FrameBatch>> {
    let eps = of_split(&load_episodes(data, scene)?, split.into());
    if eps.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(make_frame_batches(&eps, scene, max_batch.max(1)))
}

fn model_manifest(command: Command, model: &ModelArgs, scene: &SceneSpec, out: &Path) -> Result<()> {
    let mut m = RunManifest::new(command).with_scene(scene);
    m.input(&model.checkpoint)?;
    m.input(&model.data)?;
    m.artifacts.push(out.to_path_buf());
    create_parent(out)?;
    m.write(&sidecar(out))
}

fn cmd_predict<T: Scalar>(a: &PredictArgs, c: Checkpoint<T>, command: Command, snap: &Snapshots) -> Result<()> {
    let scene = snap.scene(&a.model.scene)?;
    model_manifest(command, &a.model, &scene, &a.out)?;
    let batches = split_batches(&a.model.data, &scene, a.model.split, a.model.max_batch)?;
    let k = c.policy.config().code_dim;
    let code = if k > 0 { Some(LatentCode::new(k, a.code)?) } else { None };
    let opts = RolloutOptions { stochastic: false, social: a.model.social() };
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let mut w = std::io::BufWriter::new(File::create(&a.out)?);
    writeln!(w, "episode_id,tracklet_id,frame,x,y")?;
    let mut id = 0;
    for b in &batches {
        for (ep, r) in b.episodes.iter().zip(rollout(&c.policy, b, &vec![code; b.len()], opts, &scene, &mut rng)?) {
            for (k, p) in r.actions.iter().enumerate() {
                let q = scene.denormalize(*p);
                writeln!(w, "{id},{},{},{:.6},{:.6}", ep.tracklet_id, ep.t0 + (T_OBS + k) as i64, q[0], q[1])?;
            }
            id += 1;
        }
    }
    w.flush()?;
    say(&format!("wrote predictions for {id} episodes"))
}

#[derive(Deserialize)]
struct PredictionRow {
    episode_id: usize,
    x: f64,
    y: f64,
}

fn read_predictions(path: &Path, batches: &[FrameBatch], scene: &SceneSpec) -> Result<Vec<Vec<Vec<Point>>>> {
    let n: usize = batches.iter().map(FrameBatch::len).sum();
    let mut per_ep: Vec<Vec<Point>> = vec![Vec::new(); n];
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Io(e.into()))?;
    for (line, rec) in rdr.deserialize::<PredictionRow>().enumerate() {
        let row = rec.map_err(|e| Error::Parse { line: line as u64 + 2, msg: e.to_string() })?;
        let slot = per_ep.get_mut(row.episode_id).ok_or_else(|| Error::Shape(format!("episode {} not in the split", row.episode_id)))?;
        slot.push(scene.normalize([row.x, row.y]));
    }
    let mut it = per_ep.into_iter();
    Ok(batches.iter().map(|b| it.by_ref().take(b.len()).collect()).collect())
}

fn cmd_eval(a: &EvalArgs, command: Command, snap: &Snapshots) -> Result<()> {
    let sources = usize::from(a.checkpoint.is_some()) + usize::from(a.baseline.is_some()) + usize::from(a.predictions.is_some());
    if sources != 1 {
        return Err(Error::Argument("give exactly one of --checkpoint, --baseline, --predictions".into()));
    }
    let scene = snap.scene(&a.scene)?;
    let mut m = RunManifest::new(command).with_scene(&scene);
    for p in [&a.checkpoint, &a.predictions].into_iter().flatten() {
        m.input(p)?;
    }
    m.input(&a.data)?;
    m.artifacts.push(a.out.clone());
    create_parent(&a.out)?;
    m.write(&sidecar(&a.out))?;
    let batches = split_batches(&a.data, &scene, a.split, a.max_batch)?;
    let social = SocialFlags { gate: !a.no_gate, vicinity: !a.no_vicinity };
    let rep = if let Some(path) = &a.checkpoint {
        match load_checkpoint(path)? {
            AnyCheckpoint::F32(c) => evaluate(&c.policy, &batches, social, &scene)?,
            AnyCheckpoint::F64(c) => evaluate(&c.policy, &batches, social, &scene)?,
        }
    } else if let Some(path) = &a.predictions {
        let futures = read_predictions(path, &batches, &scene)?;
        let preds: Vec<BatchPrediction<'_>> = batches.iter().zip(futures).map(|(batch, futures)| BatchPrediction { batch, futures }).collect();
        report(&preds, &scene)?
    } else {
        evaluate_with(&batches, &scene, constant_velocity_predict)?
    };
    rep.write_json(&a.out)?;
    say(&rep.to_json())
}

fn cmd_sweep<T: Scalar>(a: &SweepArgs, c: Checkpoint<T>, command: Command, snap: &Snapshots) -> Result<()> {
    let scene = snap.scene(&a.model.scene)?;
    model_manifest(command, &a.model, &scene, &a.out)?;
    let batches = split_batches(&a.model.data, &scene, a.model.split, a.model.max_batch)?;
    let sweep = intention_sweep(&c.policy, &batches, a.codes, a.model.social(), &scene)?;
    write_sweep_csv(&sweep, &a.out)?;
    let devs: Vec<String> = sweep.mean_dev_px.iter().map(|d| format!("{d:.6}")).collect();
    say(&format!(
        "{{\"codes\": {}, \"mean_dev_px\": [{}], \"separation_px\": {:.6}, \"alignment\": {:.6}, \"mode_alignment\": {}}}",
        sweep.codes,
        devs.join(", "),
        sweep.separation_px,
        sweep.alignment,
        sweep.mode_alignment.map_or("null".to_string(), |a| format!("{a:.6}"))
    ))
}

fn cmd_render<T: Scalar>(a: &RenderArgs, c: Checkpoint<T>, command: Command, snap: &Snapshots) -> Result<()> {
    let scene = snap.scene(&a.model.scene)?;
    model_manifest(command, &a.model, &scene, &a.out)?;
    let batches = split_batches(&a.model.data, &scene, a.model.split, a.model.max_batch)?;
    let k = c.policy.config().code_dim;
    let futures: Vec<Vec<Vec<Point>>> = if k > 0 {
        intention_sweep(&c.policy, &batches, k, a.model.social(), &scene)?.futures
    } else {
        predict(&c.policy, &batches, a.model.social(), &scene)?.into_iter().flatten().map(|f| vec![f]).collect()
    };
    let episodes: Vec<Episode> = batches.iter().flat_map(|b| b.episodes.iter().cloned()).collect();
    let n = a.episodes.min(episodes.len());
    write_render(&scene, &episodes[..n], &futures[..n], &a.out)?;
    say(&format!("rendered {n} episodes to {}", a.out.display()))
}

fn cmd_rerun(a: &RerunArgs) -> Result<()> {
    let m = RunManifest::load(&a.manifest)?;
    if m.tool_version != TOOL_VERSION {
        eprintln!("warning: manifest written by version {}, running {TOOL_VERSION}", m.tool_version);
    }
    for i in &m.inputs {
        i.verify()?;
    }
    let mut command = m.command.clone();
    if let Command::Rerun(_) = command {
        return Err(Error::Config("a manifest cannot record a rerun".into()));
    }
    if let (Some(out), Some(slot)) = (&a.out, command.out_mut()) {
        *slot = out.clone();
    }
    let snap = Snapshots { scene: m.scene_spec()?, config: m.config.clone(), synth: m.synth.clone() };
    execute(command, &snap)
}
