use crate::error::{Error, Result};
use crate::policy::{forward_batch, gaussian_log_prob, BatchForward, Feed, LatentCode, PolicyArch, PolicyNet, Rollout, SocialFlags};
use crate::scalar::{axpy, dot, Scalar};
use crate::trajdata::{FrameBatch, SceneSpec};

use super::{conjugate_gradient, TrustRegionConfig};

/// Rollouts of one frame batch together with the codes that produced them.
#[derive(Debug, Clone)]
pub struct PolicySample<'a> {
    pub batch: &'a FrameBatch,
    pub codes: Vec<Option<LatentCode>>,
    pub rollouts: Vec<Rollout>,
}

/// Whitened episodic rewards broadcast over each rollout's steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageBatch {
    /// One reward per rollout, in sample order.
    pub rewards: Vec<f64>,
    pub advantages: Vec<Vec<f64>>,
    pub old_log_probs: Vec<Vec<f64>>,
}

impl AdvantageBatch {
    /// `rewards` holds one entry per rollout, flattened over `samples`.
    pub fn new(rewards: Vec<f64>, samples: &[PolicySample<'_>]) -> Result<Self> {
        let rollouts: Vec<&Rollout> = samples.iter().flat_map(|s| &s.rollouts).collect();
        if rewards.len() != rollouts.len() {
            return Err(Error::Shape(format!("{} rewards for {} rollouts", rewards.len(), rollouts.len())));
        }
        if rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::Argument("non-finite reward".into()));
        }
        let n = rewards.len().max(1) as f64;
        let constant = rewards.windows(2).all(|w| w[0] == w[1]);
        let mean = if constant { rewards.first().copied().unwrap_or(0.0) } else { rewards.iter().sum::<f64>() / n };
        let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        let advantages = rewards
            .iter()
            .zip(&rollouts)
            .map(|(r, ro)| vec![(r - mean) / (std + 1e-8); ro.actions.len()])
            .collect();
        let old_log_probs = rollouts.iter().map(|r| r.log_probs.clone()).collect();
        Ok(Self { rewards, advantages, old_log_probs })
    }

    fn steps(&self) -> usize {
        self.advantages.iter().map(Vec::len).sum()
    }
}

/// Outcome of one trust-region update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub accepted: bool,
    /// Mean KL between the old and the accepted policy; 0 when rejected.
    pub kl: f64,
    pub improvement: f64,
    pub backtracks: usize,
    pub grad_norm: f64,
}

impl StepReport {
    fn rejected(grad_norm: f64) -> Self {
        Self { accepted: false, kl: 0.0, improvement: 0.0, backtracks: 0, grad_norm }
    }
}

fn inv_var(arch: &PolicyArch) -> [f64; 2] {
    let s = arch.config.log_std;
    [(-2.0 * s[0]).exp(), (-2.0 * s[1]).exp()]
}

fn replay<'p, T: Scalar>(
    arch: &PolicyArch,
    params: &'p [T],
    samples: &[PolicySample<'_>],
    social: SocialFlags,
    scene: &SceneSpec,
) -> Result<Vec<BatchForward<'p, T>>> {
    samples
        .iter()
        .map(|s| forward_batch(arch, params, s.batch, &s.codes, social, scene, Feed::Replay(&s.rollouts)))
        .collect()
}

/// Surrogate and mean KL of `params` relative to the recorded policy.
fn evaluate<T: Scalar>(
    arch: &PolicyArch,
    params: &[T],
    samples: &[PolicySample<'_>],
    adv: &AdvantageBatch,
    social: SocialFlags,
    scene: &SceneSpec,
) -> Result<(f64, f64)> {
    let iv = inv_var(arch);
    let log_std = arch.config.log_std;
    let (mut surr, mut kl, mut n) = (0.0, 0.0, 0usize);
    let mut r = 0;
    for (s, fwd) in samples.iter().zip(replay(arch, params, samples, social, scene)?) {
        for (old, new) in s.rollouts.iter().zip(&fwd.rollouts) {
            for t in 0..old.actions.len() {
                let lp = gaussian_log_prob(old.sampled[t], new.means[t], log_std);
                surr += (lp - adv.old_log_probs[r][t]).exp() * adv.advantages[r][t];
                let d = [old.means[t][0] - new.means[t][0], old.means[t][1] - new.means[t][1]];
                kl += 0.5 * (d[0] * d[0] * iv[0] + d[1] * d[1] * iv[1]);
                n += 1;
            }
            r += 1;
        }
    }
    let n = n.max(1) as f64;
    Ok((surr / n, kl / n))
}

/// Probability-ratio surrogate `mean[exp(logp − logp_old) · A]` at `params`.
pub fn surrogate<T: Scalar>(
    arch: &PolicyArch,
    params: &[T],
    samples: &[PolicySample<'_>],
    adv: &AdvantageBatch,
    social: SocialFlags,
    scene: &SceneSpec,
) -> Result<f64> {
    Ok(evaluate(arch, params, samples, adv, social, scene)?.0)
}

/// Mean KL(old ‖ new) over every recorded step.
pub fn mean_kl<T: Scalar>(
    arch: &PolicyArch,
    params: &[T],
    samples: &[PolicySample<'_>],
    social: SocialFlags,
    scene: &SceneSpec,
) -> Result<f64> {
    let zero = AdvantageBatch {
        rewards: vec![],
        advantages: samples.iter().flat_map(|s| s.rollouts.iter().map(|r| vec![0.0; r.actions.len()])).collect(),
        old_log_probs: samples.iter().flat_map(|s| s.rollouts.iter().map(|r| vec![0.0; r.actions.len()])).collect(),
    };
    Ok(evaluate(arch, params, samples, &zero, social, scene)?.1)
}

/// Recorded graphs at the current parameters; source of the surrogate
/// gradient and of curvature products.
struct Linearization<'p, T> {
    fwds: Vec<BatchForward<'p, T>>,
    inv_var: [f64; 2],
    steps: usize,
    len: usize,
}

impl<'p, T: Scalar> Linearization<'p, T> {
    fn new(arch: &PolicyArch, params: &'p [T], samples: &[PolicySample<'_>], social: SocialFlags, scene: &SceneSpec) -> Result<Self> {
        let fwds = replay(arch, params, samples, social, scene)?;
        let steps = fwds.iter().flat_map(|f| &f.means).map(Vec::len).sum();
        Ok(Self { fwds, inv_var: inv_var(arch), steps, len: params.len() })
    }

    fn surrogate_gradient(&self, samples: &[PolicySample<'_>], adv: &AdvantageBatch) -> Vec<T> {
        let n = self.steps.max(1) as f64;
        let mut g = vec![T::zero(); self.len];
        let mut r = 0;
        for (s, fwd) in samples.iter().zip(&self.fwds) {
            let mut seeds: Vec<[T; 2]> = Vec::new();
            let mut vars = Vec::new();
            for (ro, means) in s.rollouts.iter().zip(&fwd.means) {
                for (t, &m) in means.iter().enumerate() {
                    let mu = fwd.rollouts[ro.episode].means[t];
                    let a = adv.advantages[r][t] / n;
                    let d = |k: usize| T::lit(a * (ro.sampled[t][k] - mu[k]) * self.inv_var[k]);
                    seeds.push([d(0), d(1)]);
                    vars.push(m);
                }
                r += 1;
            }
            let seeds: Vec<_> = vars.into_iter().zip(&seeds).map(|(v, s)| (v, &s[..])).collect();
            fwd.tape.backward(&seeds, &mut g);
        }
        g
    }

    /// Product of the mean-KL Hessian with `v`: `Jᵀ Σ⁻¹ J v / N`.
    fn fvp(&self, v: &[T]) -> Vec<T> {
        let n = self.steps.max(1) as f64;
        let scale = [T::lit(self.inv_var[0] / n), T::lit(self.inv_var[1] / n)];
        let mut out = vec![T::zero(); self.len];
        for fwd in &self.fwds {
            let tan = fwd.tape.jvp(v);
            let seeds: Vec<[T; 2]> = fwd
                .means
                .iter()
                .flatten()
                .map(|&m| {
                    let jv = tan.get(m);
                    [jv[0] * scale[0], jv[1] * scale[1]]
                })
                .collect();
            let pairs: Vec<_> = fwd.means.iter().flatten().zip(&seeds).map(|(&m, s)| (m, &s[..])).collect();
            fwd.tape.backward(&pairs, &mut out);
        }
        out
    }
}

/// Fisher-vector product of the mean KL at `params`.
pub fn fisher_vector_product<T: Scalar>(
    arch: &PolicyArch,
    params: &[T],
    samples: &[PolicySample<'_>],
    social: SocialFlags,
    scene: &SceneSpec,
    v: &[T],
) -> Result<Vec<T>> {
    Ok(Linearization::new(arch, params, samples, social, scene)?.fvp(v))
}

/// One KL-constrained natural-gradient step with backtracking. Parameters
/// are left untouched unless a candidate both improves the surrogate and
/// satisfies the KL bound.
pub fn trust_region_step<T: Scalar>(
    net: &mut PolicyNet<T>,
    samples: &[PolicySample<'_>],
    adv: &AdvantageBatch,
    social: SocialFlags,
    scene: &SceneSpec,
    cfg: &TrustRegionConfig,
) -> Result<StepReport> {
    cfg.validate()?;
    let counts: Vec<usize> = samples.iter().flat_map(|s| s.rollouts.iter().map(|r| r.actions.len())).collect();
    let shape_ok = counts.len() == adv.advantages.len()
        && counts.iter().zip(&adv.advantages).all(|(c, a)| *c == a.len())
        && counts.iter().zip(&adv.old_log_probs).all(|(c, l)| *c == l.len());
    if !shape_ok || adv.steps() == 0 {
        return Err(Error::Shape("advantages do not match the rollouts".into()));
    }
    if adv.advantages.iter().flatten().chain(adv.old_log_probs.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite advantage or log-probability".into()));
    }

    let old = net.params.clone();
    let (step, report) = {
        let lin = Linearization::new(&net.arch, &old, samples, social, scene)?;
        let g = lin.surrogate_gradient(samples, adv);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient("policy surrogate".into()));
        }
        let grad_norm = dot(&g, &g).f64().sqrt();
        if grad_norm == 0.0 {
            return Ok(StepReport::rejected(0.0));
        }
        let damping = T::lit(cfg.cg_damping);
        let x = conjugate_gradient(
            |v: &[T]| {
                let mut fv = lin.fvp(v);
                axpy(damping, v, &mut fv);
                fv
            },
            &g,
            cfg.cg_iters,
            1e-20,
        );
        let xfx = dot(&x, &lin.fvp(&x)).f64();
        if !(xfx > 0.0) || !xfx.is_finite() {
            return Ok(StepReport::rejected(grad_norm));
        }
        let beta = (2.0 * cfg.max_kl / xfx).sqrt();
        let full: Vec<T> = x.iter().map(|&v| v * T::lit(beta)).collect();
        (full, grad_norm)
    };
    let base = surrogate(&net.arch, &old, samples, adv, social, scene)?;
    match line_search(&net.arch, &old, &step, base, samples, adv, social, scene, cfg) {
        Some((params, improvement, kl, backtracks)) => {
            net.params = params;
            Ok(StepReport { accepted: true, kl, improvement, backtracks, grad_norm: report })
        }
        None => Ok(StepReport { backtracks: cfg.max_backtracks, ..StepReport::rejected(report) }),
    }
}

/// Tries `old + ratio^i · step` for `i = 0..max_backtracks`; returns the
/// first candidate with positive improvement and KL within the bound.
#[allow(clippy::too_many_arguments)]
fn line_search<T: Scalar>(
    arch: &PolicyArch,
    old: &[T],
    step: &[T],
    base: f64,
    samples: &[PolicySample<'_>],
    adv: &AdvantageBatch,
    social: SocialFlags,
    scene: &SceneSpec,
    cfg: &TrustRegionConfig,
) -> Option<(Vec<T>, f64, f64, usize)> {
    let mut frac = 1.0;
    for i in 0..cfg.max_backtracks {
        let mut cand = old.to_vec();
        axpy(T::lit(frac), step, &mut cand);
        frac *= cfg.backtrack_ratio;
        if cand.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let Ok((surr, kl)) = evaluate(arch, &cand, samples, adv, social, scene) else {
            continue;
        };
        let improvement = surr - base;
        if improvement > 0.0 && kl <= cfg.max_kl {
            return Some((cand, improvement, kl, i));
        }
    }
    None
}
