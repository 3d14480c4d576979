use rand::seq::SliceRandom;

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::eval::{default_codes, evaluate, MetricReport};
use crate::policy::{forward_batch, Feed, LatentCode, PolicyNet, SocialFlags};
use crate::rng::{stream, Stream};
use crate::scalar::Scalar;
use crate::trajdata::{Episode, FrameBatch, Point, SceneSpec};

use super::{Optimizer, SupervisedConfig, TrainData};

/// Extrapolates the last observed displacement over the future window.
pub fn constant_velocity_predict(ep: &Episode) -> Vec<Point> {
    let n = ep.observed.len();
    let last = ep.observed[n - 1];
    let v = if n >= 2 { [last[0] - ep.observed[n - 2][0], last[1] - ep.observed[n - 2][1]] } else { [0.0, 0.0] };
    (1..=ep.future.len()).map(|k| [last[0] + k as f64 * v[0], last[1] + k as f64 * v[1]]).collect()
}

/// Sum of squared errors of the executed positions and, when `grad` is
/// supplied, its gradient scaled by `weight`.
fn batch_sse<T: Scalar>(
    net: &PolicyNet<T>,
    batch: &FrameBatch,
    codes: &[Option<LatentCode>],
    social: SocialFlags,
    scene: &SceneSpec,
    grad: Option<(&mut [T], f64)>,
) -> Result<(f64, usize)> {
    let fwd = forward_batch(&net.arch, &net.params, batch, codes, social, scene, Feed::Differentiable)?;
    let mut sse = 0.0;
    let mut count = 0;
    let mut seeds: Vec<(Var, [T; 2])> = Vec::new();
    for (ep, exec) in batch.episodes.iter().zip(&fwd.executed) {
        for (&v, gt) in exec.iter().zip(&ep.future) {
            let p = fwd.tape.value(v);
            let e = [p[0].f64() - gt[0], p[1].f64() - gt[1]];
            sse += e[0] * e[0] + e[1] * e[1];
            count += 1;
            seeds.push((v, [T::lit(2.0 * e[0]), T::lit(2.0 * e[1])]));
        }
    }
    if let Some((g, weight)) = grad {
        let w = T::lit(weight);
        let scaled: Vec<(Var, [T; 2])> = seeds.into_iter().map(|(v, s)| (v, [s[0] * w, s[1] * w])).collect();
        let pairs: Vec<(Var, &[T])> = scaled.iter().map(|(v, s)| (*v, &s[..])).collect();
        fwd.tape.backward(&pairs, g);
    }
    Ok((sse, count))
}

/// Mean over episodes and steps of the squared Euclidean error, normalized
/// coordinates, deterministic rollouts (code 0 for coded policies).
pub fn supervised_loss<T: Scalar>(net: &PolicyNet<T>, batches: &[FrameBatch], social: SocialFlags, scene: &SceneSpec) -> Result<f64> {
    let (mut sse, mut count) = (0.0, 0);
    for b in batches {
        let (s, c) = batch_sse(net, b, &default_codes(net, b.len()), social, scene, None)?;
        sse += s;
        count += c;
    }
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(sse / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedOutcome<T> {
    pub policy: PolicyNet<T>,
    pub log: Vec<EpochRow>,
    pub stopped_early: bool,
}

/// Fits the policy to ground-truth futures by gradient descent on the mean
/// squared error. With early stopping the best validated parameters are kept.
pub fn train_supervised<T: Scalar>(
    mut policy: PolicyNet<T>,
    data: &TrainData,
    cfg: &SupervisedConfig,
    social: SocialFlags,
    seed: u64,
    observer: &mut dyn FnMut(&EpochRow, &PolicyNet<T>) -> Result<()>,
) -> Result<SupervisedOutcome<T>> {
    if cfg.batch_episodes == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("supervised batch size and learning rate must be positive".into()));
    }
    if data.train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let scene = &data.scene;
    let mut rng = stream(seed, Stream::Batching);
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, policy.params.len());
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<T>)> = None;
    let mut stale = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let k = policy.config().code_dim;

    for epoch in 0..cfg.epochs {
        if cfg.cosine_decay {
            opt.lr = cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos());
        }
        order.shuffle(&mut rng);
        let (mut epoch_sse, mut epoch_count) = (0.0, 0usize);
        let mut start = 0;
        while start < order.len() {
            let mut end = start;
            let mut episodes = 0;
            while end < order.len() && episodes < cfg.batch_episodes {
                episodes += data.train[order[end]].len();
                end += 1;
            }
            let steps: usize = order[start..end].iter().map(|&i| data.train[i].episodes.iter().map(|e| e.future.len()).sum::<usize>()).sum();
            let weight = 1.0 / steps as f64;
            let mut grad = vec![T::zero(); policy.params.len()];
            for &i in &order[start..end] {
                let b = &data.train[i];
                // Coded policies see uniformly drawn codes so none is favored.
                let codes: Vec<Option<LatentCode>> = (0..b.len()).map(|_| (k > 0).then(|| LatentCode::sample(k, &mut rng))).collect();
                let (s, c) = batch_sse(&policy, b, &codes, social, scene, Some((&mut grad, weight)))?;
                epoch_sse += s;
                epoch_count += c;
            }
            if !epoch_sse.is_finite() {
                return Err(Error::Aborted(format!("non-finite training loss at epoch {epoch}")));
            }
            opt.step(&mut policy.params, &grad)?;
            start = end;
        }
        let mut row = EpochRow { epoch, train_loss: epoch_sse / epoch_count.max(1) as f64, val: None };
        if cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0 && !data.val.is_empty() {
            row.val = Some(evaluate(&policy, &data.val, social, scene)?);
        }
        observer(&row, &policy)?;
        log.push(row);
        if let (Some(patience), Some(v)) = (cfg.early_stopping_patience, row.val) {
            if best.as_ref().map_or(true, |(b, _)| v.ade_px < *b) {
                best = Some((v.ade_px, policy.params.clone()));
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
    if let Some((_, params)) = best {
        policy.params = params;
    }
    Ok(SupervisedOutcome { policy, log, stopped_early })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{ade_fde, evaluate_with};
    use crate::optim::OptimizerKind;
    use crate::policy::PolicyConfig;
    use crate::trajdata::{build_episodes, Preset, Split, WindowOptions};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ep(points: Vec<Point>) -> Episode {
        Episode {
            tracklet_id: 0,
            t0: 0,
            observed: points[..9].to_vec(),
            future: points[9..].to_vec(),
            split: Split::Test,
            goal_exit: None,
            mode: None,
        }
    }

    #[test]
    fn constant_velocity_cases() {
        let still = ep(vec![[0.3, 0.4]; 17]);
        assert!(constant_velocity_predict(&still).iter().all(|p| *p == [0.3, 0.4]));
        let line = ep((0..17).map(|k| [0.1 + 0.01 * k as f64, 0.5]).collect());
        let pred = constant_velocity_predict(&line);
        assert_abs_diff_eq!(pred[7][0], line.observed[8][0] + 0.08, epsilon = 1e-12);
        let (ade, _) = ade_fde(&pred, &line.future, &SceneSpec::corridor()).unwrap();
        assert!(ade < 1e-9);
    }

    fn net(social_cells: usize) -> PolicyNet<f64> {
        let cfg = PolicyConfig { hidden: 8, fc_hidden: 8, vicinity_cells: social_cells, ..PolicyConfig::default() };
        PolicyNet::new(cfg, &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        // The zero network holds the last observed point; a stationary agent
        // is then predicted exactly.
        let scene = SceneSpec::corridor();
        let b = FrameBatch::new(vec![ep(vec![[0.3, 0.4]; 17])], &scene);
        let z = PolicyNet::<f64>::zeros(PolicyConfig { hidden: 8, fc_hidden: 8, ..PolicyConfig::default() });
        assert_eq!(supervised_loss(&z, &[b], SocialFlags::default(), &scene).unwrap(), 0.0);
    }

    fn data() -> TrainData {
        let (scene, ts) = Preset::Corridor.generate(30, 9).unwrap();
        TrainData::new(scene, &build_episodes(&ts, WindowOptions::default()).unwrap(), 8)
    }

    #[test]
    fn zero_epochs_leave_parameters() {
        let d = data();
        let n = net(4);
        let cfg = SupervisedConfig { epochs: 0, ..SupervisedConfig::default() };
        let out = train_supervised(n.clone(), &d, &cfg, SocialFlags::default(), 0, &mut |_, _| Ok(())).unwrap();
        assert_eq!(out.policy, n);
    }

    #[test]
    fn training_reduces_the_loss() {
        let d = data();
        for social in [SocialFlags::default(), SocialFlags { gate: true, vicinity: true }] {
            let n = net(4);
            let before = supervised_loss(&n, &d.train, social, &d.scene).unwrap();
            let cfg = SupervisedConfig { epochs: 5, lr: 3e-3, optimizer: OptimizerKind::Adam, eval_every: 0, ..SupervisedConfig::default() };
            let out = train_supervised(n, &d, &cfg, social, 1, &mut |_, _| Ok(())).unwrap();
            let after = supervised_loss(&out.policy, &d.train, social, &d.scene).unwrap();
            assert!(after < before, "{after} vs {before}");
        }
    }

    #[test]
    fn baseline_report_on_straight_data_is_zero() {
        let scene = SceneSpec::corridor();
        let b = FrameBatch::new(vec![ep((0..17).map(|k| [0.1 + 0.01 * k as f64, 0.5]).collect())], &scene);
        let r = evaluate_with(&[b], &scene, constant_velocity_predict).unwrap();
        assert!(r.ade_px < 1e-9 && r.fde_px < 1e-9);
    }

    #[test]
    fn early_stopping_keeps_best_parameters() {
        let d = data();
        let cfg = SupervisedConfig { epochs: 30, lr: 0.5, optimizer: OptimizerKind::Sgd, early_stopping_patience: Some(2), ..SupervisedConfig::default() };
        let mut seen = Vec::new();
        let out = train_supervised(net(4), &d, &cfg, SocialFlags::default(), 2, &mut |row, p| {
            seen.push((row.val.unwrap().ade_px, p.params.clone()));
            Ok(())
        })
        .unwrap();
        let best = seen.iter().map(|(a, _)| *a).fold(f64::INFINITY, f64::min);
        let kept = evaluate(&out.policy, &d.val, SocialFlags::default(), &d.scene).unwrap().ade_px;
        assert_eq!(kept, best);
    }
}
