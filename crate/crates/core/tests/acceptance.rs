//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Pass criterion numbers (`c1 c5`) to run a subset.
//!
//! Runs without the libtest harness so the lines always reach stdout.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use crowd_imitation::adversary::{code_log_likelihood, d_loss, d_loss_grad, mi_lower_bound, q_loss, q_loss_grad, CriticConfig, DiscriminatorNet, PosteriorNet};
use crowd_imitation::autodiff::Var;
use crowd_imitation::eval::{ade_fde, collision_rate, evaluate, evaluate_with, intention_sweep, norm_ade, TimedTrack};
use crowd_imitation::nn::uniform;
use crowd_imitation::optim::{
    constant_velocity_predict, mean_kl, surrogate, train_sagail, train_supervised, trust_region_step, AdvantageBatch, OptimizerKind, PolicySample,
    SupervisedConfig, TrainConfig, TrainData, TrustRegionConfig,
};
use crowd_imitation::policy::{collision_gate, forward_batch, rollout, Feed, LatentCode, PolicyConfig, PolicyNet, RolloutOptions, SocialFlags};
use crowd_imitation::rng::{stream, Stream};
use crowd_imitation::trajdata::{
    build_episodes, dist, make_frame_batches, of_split, Episode, FrameBatch, Point, Preset, SceneSpec, Split, WindowOptions, T_FULL, T_OBS, T_PRED,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

// ---------------------------------------------------------------- 1

fn c1_metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let w = rng.gen_range(100..2000);
        let h = rng.gen_range(100..2000);
        let scene = SceneSpec::new(w, h, vec![[0.0, 0.0, 10.0, 10.0], [w as f64 - 10.0, 0.0, w as f64, 10.0]]).unwrap();
        let pred: Vec<Point> = (0..T_PRED).map(|_| [rng.gen(), rng.gen()]).collect();
        let gt: Vec<Point> = (0..T_PRED).map(|_| [rng.gen(), rng.gen()]).collect();

        let mut norm = 0.0;
        let mut px = Vec::new();
        for t in 0..T_PRED {
            norm += ((pred[t][0] - gt[t][0]).powi(2) + (pred[t][1] - gt[t][1]).powi(2)).sqrt();
            let ex = pred[t][0] * w as f64 - gt[t][0] * w as f64;
            let ey = pred[t][1] * h as f64 - gt[t][1] * h as f64;
            px.push(ex.hypot(ey));
        }
        norm /= T_PRED as f64;
        let ade = px.iter().sum::<f64>() / T_PRED as f64;
        let fde = px[T_PRED - 1];
        let (a, f) = ade_fde(&pred, &gt, &scene).unwrap();
        worst = worst.max((norm_ade(&pred, &gt).unwrap() - norm).abs()).max((a - ade).abs()).max((f - fde).abs());

        // Collision oracle: a dense frame table, every unordered pair per frame.
        let n = rng.gen_range(1..8);
        let thresh = rng.gen_range(1.0..30.0);
        let tracks: Vec<TimedTrack> = (0..n)
            .map(|_| {
                let start = rng.gen_range(-5..5i64);
                let len = rng.gen_range(1..10);
                TimedTrack { start, points_px: (0..len).map(|_| [rng.gen_range(0.0..60.0), rng.gen_range(0.0..60.0)]).collect() }
            })
            .collect();
        let mut table: Vec<Vec<Option<Point>>> = vec![vec![None; n]; 30];
        for (i, tr) in tracks.iter().enumerate() {
            for (k, p) in tr.points_px.iter().enumerate() {
                table[(tr.start + 10) as usize + k][i] = Some(*p);
            }
        }
        let (mut hits, mut pairs) = (0usize, 0usize);
        for row in &table {
            for i in 0..n {
                for j in 0..n {
                    if i < j {
                        if let (Some(a), Some(b)) = (row[i], row[j]) {
                            pairs += 1;
                            hits += usize::from(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() < thresh);
                        }
                    }
                }
            }
        }
        let want = if pairs == 0 { 0.0 } else { hits as f64 / pairs as f64 };
        worst = worst.max((collision_rate(&tracks, thresh) - want).abs());
    }
    let scene = SceneSpec::new(720, 480, vec![[0.0, 0.0, 10.0, 10.0], [710.0, 0.0, 720.0, 10.0]]).unwrap();
    // Pixel positions that survive normalization exactly, so the offset is
    // exactly (3, 4) in the metric's own coordinates.
    let gt_px: Vec<Point> = (0..T_PRED).map(|t| [t as f64, 240.0]).collect();
    let gt: Vec<Point> = gt_px.iter().map(|&p| scene.normalize(p)).collect();
    let pred: Vec<Point> = gt_px.iter().map(|p| scene.normalize([p[0] + 3.0, p[1] + 4.0])).collect();
    let (a, f) = ade_fde(&pred, &gt, &scene).unwrap();
    let offset_ok = a == 5.0 && f == 5.0;
    outcome(worst <= 1e-12 && offset_ok, format!("max deviation {worst:.2e} over 1000 inputs; (3,4) offset ADE {a} FDE {f}"))
}

// ---------------------------------------------------------------- 2

/// Central-difference gradient of `f` compared as a vector.
fn rel_error<F: FnMut(&[f64]) -> f64>(mut f: F, params: &[f64], analytic: &[f64]) -> f64 {
    let h = 1e-5;
    let mut p = params.to_vec();
    let mut fd = vec![0.0; p.len()];
    for k in 0..p.len() {
        let v = p[k];
        p[k] = v + h;
        let up = f(&p);
        p[k] = v - h;
        let dn = f(&p);
        p[k] = v;
        fd[k] = (up - dn) / (2.0 * h);
    }
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(&fd))
}

fn straight_episode(id: u64, t0: i64, start: Point, step: Point) -> Episode {
    let pts: Vec<Point> = (0..T_FULL).map(|k| [start[0] + step[0] * k as f64, start[1] + step[1] * k as f64]).collect();
    Episode { tracklet_id: id, t0, observed: pts[..T_OBS].to_vec(), future: pts[T_OBS..].to_vec(), split: Split::Train, goal_exit: None, mode: None }
}

fn tiny_policy(rng: &mut ChaCha8Rng) -> PolicyNet<f64> {
    let cfg = PolicyConfig { hidden: 8, fc_hidden: 8, code_dim: 2, vicinity_cells: 4, log_std: [-4.0, -4.0] };
    let mut net = PolicyNet::new(cfg, rng);
    uniform(&mut net.params, rng);
    net
}

fn random_traj(rng: &mut ChaCha8Rng) -> Vec<Point> {
    let mut p = [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
    let v = [rng.gen_range(-0.02..0.02), rng.gen_range(-0.02..0.02)];
    (0..T_FULL)
        .map(|_| {
            p = [p[0] + v[0] + rng.gen_range(-0.004..0.004), p[1] + v[1] + rng.gen_range(-0.004..0.004)];
            p
        })
        .collect()
}

fn c2_gradients() -> Outcome {
    let scene = SceneSpec::corridor();
    let social = SocialFlags { gate: true, vicinity: true };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_roll, mut worst_d, mut worst_q) = (0.0f64, 0.0f64, 0.0f64);
    let mut vicinity_touched = 0;
    for _ in 0..50 {
        let net = tiny_policy(&mut rng);
        // Two walkers (9, 8) px apart, one a step behind: neighbors inside a
        // vicinity cell (not on a cell edge) and clear of the gate.
        let y = rng.gen_range(0.3..0.7);
        let b = FrameBatch::new(
            vec![straight_episode(1, 0, [0.3, y], [0.01, 0.0]), straight_episode(2, 1, [0.3 + 9.0 / 720.0, y + 8.0 / 480.0], [0.01, 0.0])],
            &scene,
        );
        let codes = [Some(LatentCode::sample(2, &mut rng)), Some(LatentCode::sample(2, &mut rng))];
        let weights: Vec<[f64; 2]> = (0..2 * T_PRED).map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let objective = |params: &[f64], grad: Option<&mut Vec<f64>>| {
            let fwd = forward_batch(&net.arch, params, &b, &codes, social, &scene, Feed::Differentiable).unwrap();
            let means: Vec<Var> = fwd.means.iter().flatten().copied().collect();
            let total: f64 = means.iter().zip(&weights).map(|(&m, w)| fwd.tape.value(m)[0] * w[0] + fwd.tape.value(m)[1] * w[1]).sum();
            if let Some(g) = grad {
                let seeds: Vec<(Var, &[f64])> = means.iter().zip(&weights).map(|(&m, w)| (m, &w[..])).collect();
                fwd.tape.backward(&seeds, g);
            }
            total
        };
        let mut g = vec![0.0; net.params.len()];
        objective(&net.params, Some(&mut g));
        vicinity_touched += usize::from(g[net.arch.vicinity_embed.w.range()].iter().any(|v| *v != 0.0));
        let e = rel_error(|p| objective(p, None), &net.params, &g);
        worst_roll = worst_roll.max(e);

        let critic = CriticConfig { hidden: 8 };
        let mut d = DiscriminatorNet::<f64>::new(critic, &mut rng);
        uniform(&mut d.params, &mut rng);
        let real: Vec<Vec<Point>> = (0..3).map(|_| random_traj(&mut rng)).collect();
        let fake: Vec<Vec<Point>> = (0..3).map(|_| random_traj(&mut rng)).collect();
        let (_, dg) = d_loss_grad(&d, &real, &fake).unwrap();
        let mut probe = d.clone();
        worst_d = worst_d.max(rel_error(
            |p| {
                probe.params.copy_from_slice(p);
                d_loss(&probe, &real, &fake).unwrap()
            },
            &d.params,
            &dg,
        ));

        let k = rng.gen_range(2..=3);
        let mut q = PosteriorNet::<f64>::new(critic, k, &mut rng).unwrap();
        uniform(&mut q.params, &mut rng);
        let qc: Vec<Option<LatentCode>> = (0..3).map(|_| Some(LatentCode::sample(k, &mut rng))).collect();
        let lambda = rng.gen_range(0.1..2.0);
        let (_, qg) = q_loss_grad(&q, &fake, &qc, lambda).unwrap();
        let mut probe = q.clone();
        worst_q = worst_q.max(rel_error(
            |p| {
                probe.params.copy_from_slice(p);
                q_loss(&probe, &fake, &qc, lambda).unwrap()
            },
            &q.params,
            &qg,
        ));
    }
    let pass = worst_roll < 1e-4 && worst_d < 1e-4 && worst_q < 1e-4 && vicinity_touched == 50;
    outcome(
        pass,
        format!("max relative error rollout {worst_roll:.2e}, d_loss {worst_d:.2e}, q_loss {worst_q:.2e}; vicinity gradient nonzero in {vicinity_touched}/50 draws"),
    )
}

// ---------------------------------------------------------------- 3

fn c3_trust_region() -> Outcome {
    let scene = SceneSpec::corridor();
    let social = SocialFlags { gate: true, vicinity: true };
    let cfg = TrustRegionConfig::default();
    let (mut accepted, mut violations, mut moved) = (0, Vec::new(), 0);
    let mut worst_kl = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let pc = PolicyConfig { hidden: 6, fc_hidden: 5, code_dim: 2, vicinity_cells: 4, log_std: [-3.0, -3.0] };
        let mut net = PolicyNet::<f64>::new(pc, &mut rng);
        uniform(&mut net.params, &mut rng);
        let n = rng.gen_range(1..=4);
        let eps: Vec<Episode> = (0..n)
            .map(|i| {
                let start = [0.2 + 0.02 * i as f64, rng.gen_range(0.3..0.7)];
                straight_episode(i as u64, rng.gen_range(0..3), start, [rng.gen_range(0.005..0.02), rng.gen_range(-0.005..0.005)])
            })
            .collect();
        let batch = FrameBatch::new(eps, &scene);
        let codes: Vec<Option<LatentCode>> = (0..n).map(|_| Some(LatentCode::sample(2, &mut rng))).collect();
        let opts = RolloutOptions { stochastic: true, social };
        let samples: Vec<PolicySample<'_>> = (0..2)
            .map(|_| PolicySample { batch: &batch, codes: codes.clone(), rollouts: rollout(&net, &batch, &codes, opts, &scene, &mut rng).unwrap() })
            .collect();
        let rewards: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let adv = AdvantageBatch::new(rewards, &samples).unwrap();
        let before = surrogate(&net.arch, &net.params, &samples, &adv, social, &scene).unwrap();
        let mut stepped = net.clone();
        let rep = trust_region_step(&mut stepped, &samples, &adv, social, &scene, &cfg).unwrap();
        if rep.accepted {
            accepted += 1;
            let kl = mean_kl(&stepped.arch, &stepped.params, &samples, social, &scene).unwrap();
            let after = surrogate(&stepped.arch, &stepped.params, &samples, &adv, social, &scene).unwrap();
            worst_kl = worst_kl.max(kl);
            if kl > cfg.max_kl + 1e-6 || after <= before {
                violations.push(seed);
            }
        } else if stepped.params != net.params {
            violations.push(seed);
        }

        let flat = AdvantageBatch::new(vec![0.25; 2 * n], &samples).unwrap();
        let mut still = net.clone();
        trust_region_step(&mut still, &samples, &flat, social, &scene, &cfg).unwrap();
        let same = still.params.iter().zip(&net.params).all(|(a, b)| a.to_bits() == b.to_bits());
        moved += usize::from(!same);
    }
    outcome(
        violations.is_empty() && moved == 0 && accepted > 0,
        format!("{accepted}/100 steps accepted, max KL {worst_kl:.6}, violations {violations:?}; zero-advantage batches changed parameters {moved} times"),
    )
}

// ---------------------------------------------------------------- 4

fn c4_gate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    let mut flagged_total = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=16);
        let thresh = rng.gen_range(1.0..10.0);
        let side = rng.gen_range(10.0..80.0);
        let cand: Vec<Point> = (0..n).map(|_| [rng.gen_range(0.0..side), rng.gen_range(0.0..side)]).collect();
        let prev: Vec<Point> = (0..n).map(|_| [rng.gen_range(0.0..side), rng.gen_range(0.0..side)]).collect();
        let (out, hits) = collision_gate(&cand, &prev, thresh);
        flagged_total += hits.iter().filter(|&&h| h).count();
        for i in 0..n {
            if hits[i] && out[i] != prev[i] || !hits[i] && out[i] != cand[i] {
                bad += 1;
            }
            for j in i + 1..n {
                if !hits[i] && !hits[j] && dist(cand[i], cand[j]) < thresh {
                    bad += 1;
                }
            }
        }
    }
    let scene = SceneSpec::corridor();
    let mut singleton_diff = 0;
    for draw in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(40 + draw);
        let net = tiny_policy(&mut rng);
        let b = FrameBatch::new(vec![straight_episode(1, 0, [0.3, 0.5], [0.01, 0.002])], &scene);
        let codes = [Some(LatentCode::sample(2, &mut rng))];
        let run = |gate: bool| {
            let mut r = ChaCha8Rng::seed_from_u64(draw);
            rollout(&net, &b, &codes, RolloutOptions { stochastic: true, social: SocialFlags { gate, vicinity: true } }, &scene, &mut r).unwrap()
        };
        let (on, off) = (run(true), run(false));
        let bits = |rs: &[crowd_imitation::policy::Rollout]| {
            rs.iter().flat_map(|r| r.actions.iter().chain(&r.means).flat_map(|p| [p[0].to_bits(), p[1].to_bits()])).collect::<Vec<u64>>()
        };
        singleton_diff += usize::from(bits(&on) != bits(&off) || on != off);
    }
    outcome(
        bad == 0 && singleton_diff == 0,
        format!("{bad} property violations over 1000 batches ({flagged_total} agents held); singleton on/off mismatches {singleton_diff}/20"),
    )
}

// ---------------------------------------------------------------- 5

fn c5_prediction() -> Outcome {
    let mut passes = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let (scene, ts) = Preset::Corridor.generate(300, seed).unwrap();
        let data = TrainData::from_tracklets(scene.clone(), &ts, 4, 16).unwrap();
        let eps = build_episodes(&ts, WindowOptions::default()).unwrap();
        let test = make_frame_batches(&of_split(&eps, Split::Test), &scene, 16);
        let cv = evaluate_with(&test, &scene, constant_velocity_predict).unwrap().ade_px;
        let sup = SupervisedConfig {
            epochs: 60,
            lr: 1e-3,
            batch_episodes: 32,
            optimizer: OptimizerKind::Adam,
            eval_every: 0,
            early_stopping_patience: None,
            cosine_decay: true,
        };
        let fit = |vicinity: bool| {
            let social = SocialFlags { gate: false, vicinity };
            let cfg = PolicyConfig { hidden: 32, fc_hidden: 32, ..PolicyConfig::default() };
            let net = PolicyNet::<f64>::new(cfg, &mut stream(seed, Stream::PolicyInit));
            let out = train_supervised(net, &data, &sup, social, seed, &mut |_, _| Ok(())).unwrap();
            evaluate(&out.policy, &test, social, &scene).unwrap().ade_px
        };
        let (vanilla, social) = (fit(false), fit(true));
        let ok = vanilla <= 0.8 * cv && social <= 1.05 * vanilla;
        passes += usize::from(ok);
        lines.push(format!("seed {seed}: cv {cv:.2} vanilla {vanilla:.2} vicinity {social:.2}{}", if ok { "" } else { " (miss)" }));
    }
    outcome(passes >= 4, format!("{passes}/5 seeds; {}", lines.join("; ")))
}

// ---------------------------------------------------------------- 6

fn c6_collision_ablation() -> Outcome {
    let mut passes = 0;
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let (scene, ts) = Preset::Crossing.generate(200, seed).unwrap();
        let data = TrainData::from_tracklets(scene.clone(), &ts, T_FULL, 16).unwrap();
        let on = SocialFlags { gate: true, vicinity: true };
        let cfg = PolicyConfig { hidden: 32, fc_hidden: 32, ..PolicyConfig::default() };
        let net = PolicyNet::<f64>::new(cfg, &mut stream(seed, Stream::PolicyInit));
        let sup = SupervisedConfig {
            epochs: 60,
            lr: 3e-3,
            batch_episodes: 32,
            optimizer: OptimizerKind::Adam,
            eval_every: 5,
            early_stopping_patience: Some(8),
            cosine_decay: false,
        };
        let policy = train_supervised(net, &data, &sup, on, seed, &mut |_, _| Ok(())).unwrap().policy;
        let (_, fresh) = Preset::Crossing.generate(200, seed + 1000).unwrap();
        let eval_eps = build_episodes(&fresh, WindowOptions::default()).unwrap();
        let batches = make_frame_batches(&eval_eps, &scene, 16);
        let gated = evaluate(&policy, &batches, on, &scene).unwrap().collision_rate;
        let ungated = evaluate(&policy, &batches, SocialFlags { gate: false, vicinity: true }, &scene).unwrap().collision_rate;
        let ok = gated <= 0.5 * ungated;
        passes += usize::from(ok);
        lines.push(format!("seed {seed}: gate on {gated:.5} off {ungated:.5}{}", if ok { "" } else { " (miss)" }));
    }
    outcome(passes >= 4, format!("{passes}/5 seeds; {}", lines.join("; ")))
}

// ---------------------------------------------------------------- 7

/// Largest logged MI bound over every SA-GAIL run of the suite.
struct MiLedger {
    max_excess: f64,
    rows: usize,
}

impl MiLedger {
    fn record(&mut self, mi: f64, k: usize) {
        self.max_excess = self.max_excess.max(mi - (k as f64).ln());
        self.rows += 1;
    }
}

fn c7_intentions(mi: &mut MiLedger) -> Outcome {
    let text = std::fs::read_to_string(workspace_root().join("configs/twomode_sagail.toml")).unwrap();
    let base = TrainConfig::from_toml(&text).unwrap();
    let social = base.social;
    let mut passes = 0;
    let mut lines = Vec::new();
    let mut null = Vec::new();
    for seed in 0..5u64 {
        let cfg = TrainConfig { seed, ..base.clone() };
        let (scene, ts) = Preset::TwoMode.generate(300, seed).unwrap();
        let data = TrainData::from_tracklets(scene.clone(), &ts, cfg.train_stride, cfg.max_batch_agents).unwrap();
        let (_, fresh) = Preset::TwoMode.generate(300, seed + 1000).unwrap();
        let eval_eps = build_episodes(&fresh, WindowOptions::default()).unwrap();
        let batches = make_frame_batches(&eval_eps, &scene, 16);

        let policy = PolicyNet::<f64>::new(cfg.policy_config(), &mut stream(seed, Stream::PolicyInit));
        null.push(intention_sweep(&policy, &batches, 2, social, &scene).unwrap().mode_alignment.unwrap());
        let d = DiscriminatorNet::new(cfg.critic, &mut stream(seed, Stream::DiscriminatorInit));
        let mut q = PosteriorNet::new(cfg.critic, 2, &mut stream(seed, Stream::PosteriorInit)).unwrap();
        q.zero_head();
        let out = train_sagail(policy, d, q, &data, &cfg, &mut |_| Ok(())).unwrap();
        out.log.iter().for_each(|r| mi.record(r.mi_lower_bound, 2));
        let sweep = intention_sweep(&out.policy, &batches, 2, social, &scene).unwrap();
        let align = sweep.mode_alignment.unwrap();
        let ok = out.log.len() == 300 && sweep.separation_px >= 20.0 && align >= 0.60;
        passes += usize::from(ok);
        lines.push(format!(
            "seed {seed}: separation {:.1} px alignment {align:.3} (n {}){}",
            sweep.separation_px,
            sweep.futures.len(),
            if ok { "" } else { " (miss)" }
        ));
    }
    null.sort_by(f64::total_cmp);
    let null_desc = format!("untrained null median {:.3} range {:.3}..{:.3}", null[2], null[0], null[4]);
    outcome(passes >= 3, format!("{passes}/5 seeds; {}; {null_desc}", lines.join("; ")))
}

// ---------------------------------------------------------------- 8

fn crowdim(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_crowdim")).args(args).current_dir(dir).output().expect("binary runs")
}

fn c8_determinism(mi: &mut MiLedger) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = workspace_root();
    let scene = root.join("configs/corridor.toml");
    let smoke = root.join("configs/smoke.toml");
    let (scene, smoke) = (scene.to_str().unwrap(), smoke.to_str().unwrap());
    let synth = crowdim(&["synth", "--scene", scene, "--agents", "60", "--steps", "300", "--seed", "3", "--out", "data.csv"], dir.path());
    if !synth.status.success() {
        return outcome(false, format!("synth failed: {}", String::from_utf8_lossy(&synth.stderr)));
    }
    let a = crowdim(&["train", "--config", smoke, "--mode", "sagail", "--data", "data.csv", "--scene", scene, "--out", "a"], dir.path());
    let b = crowdim(&["rerun", "--manifest", "a/manifest.json", "--out", "b"], dir.path());
    let c = crowdim(&["train", "--config", smoke, "--mode", "sagail", "--data", "data.csv", "--scene", scene, "--out", "c"], dir.path());
    for (name, o) in [("train", &a), ("rerun", &b), ("second train", &c)] {
        if !o.status.success() {
            return outcome(false, format!("{name} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    let read = |run: &str, file: &str| std::fs::read(dir.path().join(run).join(file)).unwrap();
    let same = ["b", "c"].iter().all(|r| read("a", "metrics.csv") == read(r, "metrics.csv") && read("a", "final.ckpt") == read(r, "final.ckpt"));
    let csv = String::from_utf8(read("a", "metrics.csv")).unwrap();
    let col = csv.lines().next().unwrap().split(',').position(|h| h == "mi_lower_bound").unwrap();
    let rows: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect();
    rows.iter().for_each(|&v| mi.record(v, 2));
    outcome(
        same && rows.len() == 2,
        format!("metrics.csv and final.ckpt byte-identical across train, rerun and a second train: {same}; {} iterations", rows.len()),
    )
}

// ---------------------------------------------------------------- 9

fn c9_mi_bound(mi: &MiLedger) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_init = 0.0f64;
    for k in [2, 3] {
        let mut q = PosteriorNet::<f64>::new(CriticConfig { hidden: 8 }, k, &mut rng).unwrap();
        uniform(&mut q.params, &mut rng);
        q.zero_head();
        let log_q: Vec<f64> = (0..20).map(|_| code_log_likelihood(&q, &random_traj(&mut rng), LatentCode::sample(k, &mut rng)).unwrap()).collect();
        worst_init = worst_init.max(mi_lower_bound(&log_q, k).abs());
    }
    // With no training run in this invocation only the init point is checked.
    let ok = mi.max_excess <= 1e-9 && worst_init <= 1e-12;
    outcome(ok, format!("{} logged iterations, max (L_I - ln K) {:.3e}; |L_I| at zero-head init {worst_init:.1e}", mi.rows, mi.max_excess.max(f64::MIN)))
}

fn main() {
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('c')).collect();
    let run = |id: &str| wanted.is_empty() || wanted.iter().any(|w| w == id);
    let mut mi = MiLedger { max_excess: f64::NEG_INFINITY, rows: 0 };
    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut(&mut MiLedger) -> Outcome, mi: &mut MiLedger| {
        let t = Instant::now();
        let o = f(mi);
        println!("criterion {n} {name}: {} ({:.1} s) {}", if o.pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    };
    if run("c1") {
        report(1, "metric oracles", &mut |_| c1_metric_oracles(), &mut mi);
    }
    if run("c2") {
        report(2, "gradient integrity", &mut |_| c2_gradients(), &mut mi);
    }
    if run("c3") {
        report(3, "trust-region contract", &mut |_| c3_trust_region(), &mut mi);
    }
    if run("c4") {
        report(4, "collision gate", &mut |_| c4_gate(), &mut mi);
    }
    if run("c5") {
        report(5, "scaled prediction", &mut |_| c5_prediction(), &mut mi);
    }
    if run("c6") {
        report(6, "collision ablation", &mut |_| c6_collision_ablation(), &mut mi);
    }
    if run("c7") {
        report(7, "intention disentanglement", &mut c7_intentions, &mut mi);
    }
    if run("c8") {
        report(8, "loop determinism", &mut c8_determinism, &mut mi);
    }
    if run("c9") {
        report(9, "mutual information bound", &mut |m| c9_mi_bound(m), &mut mi);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
