use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::CellState;
use crate::policy::{collision_gate, gaussian_log_prob, sample_action, vicinity_groups, LatentCode, PolicyArch, PolicyNet};
use crate::scalar::Scalar;
use crate::trajdata::{FrameBatch, Point, SceneSpec, T_OBS, T_PRED};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SocialFlags {
    pub gate: bool,
    pub vicinity: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RolloutOptions {
    pub stochastic: bool,
    pub social: SocialFlags,
}

/// Generated future of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// Index of the episode within its batch.
    pub episode: usize,
    pub code: Option<LatentCode>,
    /// Executed (post-gate) positions, normalized.
    pub actions: Vec<Point>,
    /// Pre-gate sampled positions.
    pub sampled: Vec<Point>,
    pub means: Vec<Point>,
    /// Log-density of `sampled` under `means`.
    pub log_probs: Vec<f64>,
    pub gate_hits: Vec<bool>,
}

impl Rollout {
    fn new(episode: usize, code: Option<LatentCode>, t2: usize) -> Self {
        Self {
            episode,
            code,
            actions: Vec::with_capacity(t2),
            sampled: Vec::with_capacity(t2),
            means: Vec::with_capacity(t2),
            log_probs: Vec::with_capacity(t2),
            gate_hits: Vec::with_capacity(t2),
        }
    }
}

/// How decoded positions are fed back into the decoder.
pub enum Feed<'r> {
    /// Draw actions (or take means when not stochastic); executed positions
    /// enter the graph as constants.
    Sample { rng: &'r mut dyn RngCore, stochastic: bool },
    /// Means are executed and fed back as graph values, so gradients flow
    /// through the whole autoregressive chain (and the gate's pass-through
    /// branch).
    Differentiable,
    /// Re-evaluate recorded rollouts of the same batch.
    Replay(&'r [Rollout]),
}

/// A recorded batch forward pass.
pub struct BatchForward<'p, T> {
    pub tape: Tape<'p, T>,
    /// Per episode, the mean node of every decoding step.
    pub means: Vec<Vec<Var>>,
    /// Per episode, the node fed back as the executed position.
    pub executed: Vec<Vec<Var>>,
    pub rollouts: Vec<Rollout>,
}

fn to_point<T: Scalar>(v: &[T]) -> Point {
    [v[0].f64(), v[1].f64()]
}

/// Decodes every episode of `batch` in lockstep on the shared clock. At each
/// absolute time step all agents in their decoding phase advance together;
/// agents still in their observed phase contribute ground-truth positions and
/// encoder states to the vicinity layer. The gate acts jointly on the agents
/// decoding at that step.
pub fn forward_batch<'p, T: Scalar>(
    arch: &PolicyArch,
    params: &'p [T],
    batch: &FrameBatch,
    codes: &[Option<LatentCode>],
    social: SocialFlags,
    scene: &SceneSpec,
    mut feed: Feed<'_>,
) -> Result<BatchForward<'p, T>> {
    let n = batch.len();
    if !codes.is_empty() && codes.len() != n {
        return Err(Error::Shape(format!("{} codes for {} episodes", codes.len(), n)));
    }
    if let Feed::Replay(r) = &feed {
        if r.len() != n {
            return Err(Error::Shape(format!("{} recorded rollouts for {} episodes", r.len(), n)));
        }
    }
    if social.vicinity && arch.config.vicinity_cells != scene.vicinity_cells {
        return Err(Error::Config(format!(
            "policy expects a {}x{} vicinity grid, scene defines {}x{}",
            arch.config.vicinity_cells, arch.config.vicinity_cells, scene.vicinity_cells, scene.vicinity_cells
        )));
    }
    let code_of = |i: usize| codes.get(i).copied().flatten();
    let log_std = arch.config.log_std;
    let mut tape = Tape::new(params);

    let t1 = batch.episodes.first().map_or(T_OBS, |e| e.observed.len());
    let t2 = batch.episodes.first().map_or(T_PRED, |e| e.future.len());
    if t1 == 0 || t2 == 0 {
        return Err(Error::Shape("empty observed or future window".into()));
    }
    let full = t1 + t2;
    let mut states: Vec<Vec<Option<CellState>>> = vec![vec![None; full]; n];
    let mut pos: Vec<Vec<Point>> = vec![Vec::with_capacity(full); n];
    let mut pos_var: Vec<Vec<Option<Var>>> = vec![vec![None; full]; n];
    for (i, ep) in batch.episodes.iter().enumerate() {
        if ep.observed.len() != t1 || ep.future.len() != t2 {
            return Err(Error::Shape("episodes of one batch must share window lengths".into()));
        }
        for (k, s) in arch.encode_states(&mut tape, &ep.observed)?.into_iter().enumerate() {
            states[i][k] = Some(s);
        }
        pos[i].extend_from_slice(&ep.observed);
    }

    let mut rollouts: Vec<Rollout> = (0..n).map(|i| Rollout::new(i, code_of(i), t2)).collect();
    let mut means: Vec<Vec<Var>> = vec![Vec::with_capacity(t2); n];
    let mut executed_vars: Vec<Vec<Var>> = vec![Vec::with_capacity(t2); n];
    let px = |p: Point| scene.denormalize(p);

    for tau in batch.start()..batch.end() {
        let active: Vec<usize> = (0..n)
            .filter(|&i| {
                let k = tau - batch.episodes[i].t0;
                k >= t1 as i64 && k < full as i64
            })
            .collect();
        if active.is_empty() {
            continue;
        }
        let mut step_means: Vec<(Var, Point, CellState)> = Vec::with_capacity(active.len());
        for &i in &active {
            let k = (tau - batch.episodes[i].t0) as usize;
            let prev_var = match pos_var[i][k - 1] {
                Some(v) => v,
                None => {
                    let p = pos[i][k - 1];
                    let v = tape.input(&[T::lit(p[0]), T::lit(p[1])]);
                    pos_var[i][k - 1] = Some(v);
                    v
                }
            };
            let state = states[i][k - 1].expect("state of previous step");
            let groups = if social.vicinity {
                let present: Vec<usize> = batch.neighbor_index[i][k - 1].iter().map(|nb| nb.index).collect();
                let mut here: Vec<Point> = vec![[f64::NAN; 2]; n];
                here[i] = px(pos[i][k - 1]);
                for &j in &present {
                    let kj = (tau - 1 - batch.episodes[j].t0) as usize;
                    here[j] = px(pos[j][kj]);
                }
                let g: Vec<(usize, Vec<Var>)> = vicinity_groups(i, &here, &present, scene)
                    .into_iter()
                    .map(|(cell, members)| {
                        let hs = members
                            .into_iter()
                            .map(|j| {
                                let kj = (tau - 1 - batch.episodes[j].t0) as usize;
                                states[j][kj].expect("neighbor state").h
                            })
                            .collect();
                        (cell, hs)
                    })
                    .collect();
                Some(g)
            } else {
                None
            };
            let code = code_of(i);
            let (m, next) = arch.decode_step(&mut tape, prev_var, state, code.as_ref(), groups.as_deref())?;
            let mean = to_point(tape.value(m));
            if !mean[0].is_finite() || !mean[1].is_finite() {
                return Err(Error::Divergence { step: k - t1 + 1 });
            }
            step_means.push((m, mean, next));
        }

        let mut candidates = Vec::with_capacity(active.len());
        let mut log_probs = Vec::with_capacity(active.len());
        for (slot, &i) in active.iter().enumerate() {
            let mean = step_means[slot].1;
            let (cand, lp) = match &mut feed {
                Feed::Sample { rng, stochastic } => sample_action(mean, log_std, *stochastic, &mut **rng),
                Feed::Differentiable => (mean, gaussian_log_prob(mean, mean, log_std)),
                Feed::Replay(rec) => {
                    let t = (tau - batch.episodes[i].t0) as usize - t1;
                    let a = rec[i].sampled[t];
                    (a, gaussian_log_prob(a, mean, log_std))
                }
            };
            candidates.push(cand);
            log_probs.push(lp);
        }

        let (executed, hits) = match &feed {
            Feed::Replay(rec) => active
                .iter()
                .map(|&i| {
                    let t = (tau - batch.episodes[i].t0) as usize - t1;
                    (rec[i].actions[t], rec[i].gate_hits[t])
                })
                .unzip(),
            _ if social.gate => {
                let cand_px: Vec<Point> = candidates.iter().map(|&p| px(p)).collect();
                let prev_px: Vec<Point> = active
                    .iter()
                    .map(|&i| px(pos[i][(tau - batch.episodes[i].t0) as usize - 1]))
                    .collect();
                let (_, hits) = collision_gate(&cand_px, &prev_px, scene.collision_thresh_px);
                let exec: Vec<Point> = active
                    .iter()
                    .zip(&hits)
                    .zip(&candidates)
                    .map(|((&i, &hit), &c)| if hit { pos[i][(tau - batch.episodes[i].t0) as usize - 1] } else { c })
                    .collect();
                (exec, hits)
            }
            _ => (candidates.clone(), vec![false; active.len()]),
        };

        for (slot, &i) in active.iter().enumerate() {
            let k = (tau - batch.episodes[i].t0) as usize;
            let (m, mean, next) = step_means[slot];
            let var = match feed {
                Feed::Differentiable => {
                    if hits[slot] {
                        pos_var[i][k - 1].expect("previous position node")
                    } else {
                        m
                    }
                }
                _ => {
                    let p = executed[slot];
                    tape.input(&[T::lit(p[0]), T::lit(p[1])])
                }
            };
            pos[i].push(executed[slot]);
            pos_var[i][k] = Some(var);
            states[i][k] = Some(next);
            means[i].push(m);
            executed_vars[i].push(var);
            let r = &mut rollouts[i];
            r.means.push(mean);
            r.sampled.push(candidates[slot]);
            r.actions.push(executed[slot]);
            r.log_probs.push(log_probs[slot]);
            r.gate_hits.push(hits[slot]);
        }
    }
    Ok(BatchForward { tape, means, executed: executed_vars, rollouts })
}

/// Generates one rollout per episode of `batch`.
pub fn rollout<T: Scalar>(
    net: &PolicyNet<T>,
    batch: &FrameBatch,
    codes: &[Option<LatentCode>],
    opts: RolloutOptions,
    scene: &SceneSpec,
    rng: &mut dyn RngCore,
) -> Result<Vec<Rollout>> {
    let fwd = forward_batch(
        &net.arch,
        &net.params,
        batch,
        codes,
        opts.social,
        scene,
        Feed::Sample { rng, stochastic: opts.stochastic },
    )?;
    Ok(fwd.rollouts)
}
