use std::io::Write;

use rand::seq::SliceRandom;

use crate::adversary::{code_log_likelihood, d_loss_grad, discriminate, mi_lower_bound, q_loss_grad, reward_signal, DiscriminatorNet, PosteriorNet};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricReport};
use crate::policy::{rollout, LatentCode, PolicyNet, RolloutOptions};
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;
use crate::trajdata::{build_episodes, make_frame_batches, of_split, Episode, FrameBatch, Point, SceneSpec, Split, Tracklet, WindowOptions, T_FULL};

use super::{train_supervised, trust_region_step, AdvantageBatch, Optimizer, PolicySample, SupervisedConfig, TrainConfig};

/// Consecutive divergent batches tolerated before a run is aborted.
const MAX_SKIPS: usize = 10;

pub const METRICS_HEADER: &str = "iter,d_loss,d_acc,mean_reward,mi_lower_bound,val_ade,val_fde,val_normade,collision_rate,kl,step_accepted";

/// Frame batches of the train and validation splits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub scene: SceneSpec,
    pub train: Vec<FrameBatch>,
    pub val: Vec<FrameBatch>,
}

impl TrainData {
    pub fn new(scene: SceneSpec, episodes: &[Episode], max_batch: usize) -> Self {
        let train = make_frame_batches(&of_split(episodes, Split::Train), &scene, max_batch);
        let val = make_frame_batches(&of_split(episodes, Split::Val), &scene, max_batch);
        Self { scene, train, val }
    }

    /// Windows tracklets for training: train windows at `train_stride`,
    /// validation windows without overlap. Splits follow tracklet order.
    pub fn from_tracklets(scene: SceneSpec, tracklets: &[Tracklet], train_stride: usize, max_batch: usize) -> Result<Self> {
        let held_out = build_episodes(tracklets, WindowOptions::default())?;
        let mut data = Self::new(scene, &held_out, max_batch);
        if train_stride != T_FULL {
            let dense = build_episodes(tracklets, WindowOptions { stride: train_stride, ..WindowOptions::default() })?;
            data.train = make_frame_batches(&of_split(&dense, Split::Train), &data.scene, max_batch);
        }
        Ok(data)
    }

    pub fn train_episodes(&self) -> usize {
        self.train.iter().map(FrameBatch::len).sum()
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub d_loss: f64,
    pub d_acc: f64,
    pub mean_reward: f64,
    /// `mean log Q(c|traj) + ln K`; 0 without intention inference.
    pub mi_lower_bound: f64,
    pub val: Option<MetricReport>,
    pub kl: f64,
    pub step_accepted: bool,
}

impl MetricsRow {
    fn empty(iter: usize) -> Self {
        Self {
            iter,
            d_loss: f64::NAN,
            d_acc: f64::NAN,
            mean_reward: f64::NAN,
            mi_lower_bound: f64::NAN,
            val: None,
            kl: 0.0,
            step_accepted: false,
        }
    }

    pub fn csv_line(&self) -> String {
        let (ade, fde, norm, col) = match self.val {
            Some(v) => (v.ade_px, v.fde_px, v.norm_ade, v.collision_rate),
            None => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
        };
        format!(
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{}",
            self.iter,
            self.d_loss,
            self.d_acc,
            self.mean_reward,
            self.mi_lower_bound,
            ade,
            fde,
            norm,
            col,
            self.kl,
            u8::from(self.step_accepted)
        )
    }
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRow], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Networks and log line after an iteration, handed to the observer.
pub struct IterationState<'a, T> {
    pub row: &'a MetricsRow,
    pub policy: &'a PolicyNet<T>,
    pub discriminator: &'a DiscriminatorNet<T>,
    pub posterior: Option<&'a PosteriorNet<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<T> {
    pub policy: PolicyNet<T>,
    pub discriminator: DiscriminatorNet<T>,
    pub posterior: Option<PosteriorNet<T>>,
    pub log: Vec<MetricsRow>,
    pub stopped_early: bool,
}

/// Adversarial imitation without latent codes.
pub fn train_gail<T: Scalar>(
    policy: PolicyNet<T>,
    d: DiscriminatorNet<T>,
    data: &TrainData,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&IterationState<'_, T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    if cfg.codes != 0 || policy.config().code_dim != 0 {
        return Err(Error::Config("plain adversarial training requires codes = 0".into()));
    }
    adversarial_loop(policy, d, None, data, cfg, observer)
}

/// Adversarial imitation with a uniform code prior and the posterior reward.
pub fn train_sagail<T: Scalar>(
    policy: PolicyNet<T>,
    d: DiscriminatorNet<T>,
    q: PosteriorNet<T>,
    data: &TrainData,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&IterationState<'_, T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    if !matches!(cfg.codes, 2 | 3) {
        return Err(Error::Config(format!("intention inference requires codes 2 or 3, got {}", cfg.codes)));
    }
    if policy.config().code_dim != cfg.codes || q.codes() != cfg.codes {
        return Err(Error::Config("policy and posterior code dimensions must match codes".into()));
    }
    adversarial_loop(policy, d, Some(q), data, cfg, observer)
}

fn full(ep: &Episode, future: &[Point]) -> Vec<Point> {
    ep.observed.iter().chain(future).copied().collect()
}

fn adversarial_loop<T: Scalar>(
    mut policy: PolicyNet<T>,
    mut d: DiscriminatorNet<T>,
    mut q: Option<PosteriorNet<T>>,
    data: &TrainData,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&IterationState<'_, T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if data.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.pretrain_epochs > 0 {
        let sup = SupervisedConfig { epochs: cfg.pretrain_epochs, eval_every: 0, early_stopping_patience: None, ..cfg.supervised };
        policy = train_supervised(policy, data, &sup, cfg.social, cfg.seed, &mut |_, _| Ok(()))?.policy;
    }
    let scene = &data.scene;
    let k = cfg.codes;
    let mut batch_rng = stream(cfg.seed, Stream::Batching);
    let mut roll_rng = stream(cfg.seed, Stream::Rollout);
    let mut d_opt = Optimizer::new(cfg.critic_optimizer, cfg.d_lr, d.params.len());
    let mut q_opt = Optimizer::new(cfg.critic_optimizer, cfg.q_lr, q.as_ref().map_or(0, |q| q.params.len()));
    let opts = RolloutOptions { stochastic: true, social: cfg.social };
    let mut log = Vec::with_capacity(cfg.iterations);
    let mut skips = 0;
    let mut best_ade = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;

    for iter in 0..cfg.iterations {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        order.shuffle(&mut batch_rng);
        let mut samples: Vec<PolicySample<'_>> = Vec::new();
        let mut count = 0;
        for idx in order {
            if count >= cfg.batch_episodes {
                break;
            }
            let b = &data.train[idx];
            let codes: Vec<Option<LatentCode>> = (0..b.len()).map(|_| (k > 0).then(|| LatentCode::sample(k, &mut roll_rng))).collect();
            match rollout(&policy, b, &codes, opts, scene, &mut roll_rng) {
                Ok(rollouts) => {
                    skips = 0;
                    count += b.len();
                    samples.push(PolicySample { batch: b, codes, rollouts });
                }
                Err(Error::Divergence { step }) => {
                    eprintln!("warning: iteration {iter}: rollout diverged at step {step}, batch skipped");
                    skips += 1;
                    if skips >= MAX_SKIPS {
                        return Err(Error::Aborted(format!("{MAX_SKIPS} consecutive divergent batches")));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        let mut row = MetricsRow::empty(iter);
        if !samples.is_empty() {
            let mut real = Vec::with_capacity(count);
            let mut fake = Vec::with_capacity(count);
            let mut codes = Vec::with_capacity(count);
            for s in &samples {
                for (ep, r) in s.batch.episodes.iter().zip(&s.rollouts) {
                    real.push(full(ep, &ep.future));
                    fake.push(full(ep, &r.actions));
                    codes.push(r.code);
                }
            }
            let mut correct = 0usize;
            for t in &real {
                correct += usize::from(discriminate(&d, t)? > 0.5);
            }
            for t in &fake {
                correct += usize::from(discriminate(&d, t)? < 0.5);
            }
            row.d_acc = correct as f64 / (real.len() + fake.len()) as f64;
            let (dl, dg) = d_loss_grad(&d, &real, &fake)?;
            row.d_loss = dl;
            d_opt.step(&mut d.params, &dg)?;
            if let Some(q) = q.as_mut() {
                // The posterior always fits the codes; λ only weights its reward.
                let (_, qg) = q_loss_grad(q, &fake, &codes, 1.0)?;
                q_opt.step(&mut q.params, &qg)?;
            }

            let mut rewards = Vec::with_capacity(fake.len());
            let mut log_q = Vec::with_capacity(fake.len());
            for (t, c) in fake.iter().zip(&codes) {
                let post = match (q.as_ref(), c) {
                    (Some(q), Some(c)) => {
                        log_q.push(code_log_likelihood(q, t, *c)?);
                        Some((q, *c))
                    }
                    _ => None,
                };
                rewards.push(reward_signal(&d, post, t, cfg.lambda)?);
            }
            row.mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
            row.mi_lower_bound = if k > 0 { mi_lower_bound(&log_q, k) } else { 0.0 };
            let adv = AdvantageBatch::new(rewards, &samples)?;
            match trust_region_step(&mut policy, &samples, &adv, cfg.social, scene, &cfg.trust_region) {
                Ok(rep) => {
                    row.kl = rep.kl;
                    row.step_accepted = rep.accepted;
                }
                Err(Error::NonFiniteGradient(msg)) => {
                    eprintln!("warning: iteration {iter}: non-finite gradient ({msg}), update skipped");
                }
                Err(e) => return Err(e),
            }
        }
        if cfg.eval_every > 0 && (iter + 1) % cfg.eval_every == 0 && !data.val.is_empty() {
            match evaluate(&policy, &data.val, cfg.social, scene) {
                Ok(rep) => row.val = Some(rep),
                Err(Error::Divergence { step }) => eprintln!("warning: iteration {iter}: validation diverged at step {step}"),
                Err(e) => return Err(e),
            }
        }
        observer(&IterationState { row: &row, policy: &policy, discriminator: &d, posterior: q.as_ref() })?;
        log.push(row);
        if let (Some(patience), Some(v)) = (cfg.early_stopping_patience, row.val) {
            if v.ade_px < best_ade {
                best_ade = v.ade_px;
                stale = 0;
            } else {
                stale += 1;
                if stale >= patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome { policy, discriminator: d, posterior: q, log, stopped_early })
}
