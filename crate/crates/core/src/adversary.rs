//! Trajectory critics: the discriminator D and the code posterior Q.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamLayout, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{Linear, LstmCell};
use crate::policy::LatentCode;
use crate::scalar::{sigmoid, Scalar};
use crate::trajdata::{Point, T_FULL};

/// Probability clamp used by every log in the adversarial losses.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticConfig {
    pub hidden: usize,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self { hidden: 128 }
    }
}

/// Scale of per-step displacements fed to the critics; a typical step of
/// about 0.02 normalized units maps to order one.
const STEP_GAIN: f64 = 50.0;

/// Recurrent trunk over a full trajectory followed by an affine head on the
/// last hidden state.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticArch {
    pub layout: ParamLayout,
    pub cell: LstmCell,
    pub head: Linear,
}

impl CriticArch {
    fn new(hidden: usize, outputs: usize) -> Self {
        let mut layout = ParamLayout::new();
        let cell = LstmCell::new(&mut layout, "cell", 4, hidden);
        let head = Linear::new(&mut layout, "head", hidden, outputs);
        Self { layout, cell, head }
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden
    }

    pub fn outputs(&self) -> usize {
        self.head.outputs()
    }

    /// Records the head pre-activation for `traj` on `tape`.
    pub fn logits<T: Scalar>(&self, tape: &mut Tape<'_, T>, traj: &[Point]) -> Result<Var> {
        check_trajectory(traj)?;
        // Each point is read with its scaled step from the previous one, so
        // motion is as visible to the cell as position.
        let xs: Vec<Var> = traj
            .iter()
            .enumerate()
            .map(|(t, p)| {
                let q = if t == 0 { *p } else { traj[t - 1] };
                let step = [(p[0] - q[0]) * STEP_GAIN, (p[1] - q[1]) * STEP_GAIN];
                tape.input(&[T::lit(p[0]), T::lit(p[1]), T::lit(step[0]), T::lit(step[1])])
            })
            .collect();
        let last = self.cell.run(tape, &xs).expect("non-empty trajectory");
        Ok(self.head.forward(tape, last.h))
    }

    fn init<T: Scalar, R: Rng>(&self, params: &mut [T], rng: &mut R) {
        self.cell.init(params, rng);
        self.head.init(params, rng);
    }
}

fn check_trajectory(traj: &[Point]) -> Result<()> {
    if traj.len() != T_FULL {
        return Err(Error::Shape(format!("trajectory has {} points, expected {T_FULL}", traj.len())));
    }
    if traj.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::NumericInput);
    }
    Ok(())
}

/// Real-versus-generated classifier with a single sigmoid output.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorNet<T> {
    pub arch: CriticArch,
    pub params: Vec<T>,
}

impl<T: Scalar> DiscriminatorNet<T> {
    pub fn new<R: Rng>(config: CriticConfig, rng: &mut R) -> Self {
        let arch = CriticArch::new(config.hidden, 1);
        let mut params = vec![T::zero(); arch.layout.len()];
        arch.init(&mut params, rng);
        Self { arch, params }
    }

    pub fn zeros(config: CriticConfig) -> Self {
        let arch = CriticArch::new(config.hidden, 1);
        let params = vec![T::zero(); arch.layout.len()];
        Self { arch, params }
    }

    pub fn config(&self) -> CriticConfig {
        CriticConfig { hidden: self.arch.hidden() }
    }

    fn logit(&self, traj: &[Point]) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let z = self.arch.logits(&mut tape, traj)?;
        Ok(tape.value(z)[0].f64())
    }
}

/// Code posterior with a normalized-exponential output over `K` codes.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorNet<T> {
    pub arch: CriticArch,
    pub params: Vec<T>,
}

impl<T: Scalar> PosteriorNet<T> {
    pub fn new<R: Rng>(config: CriticConfig, codes: usize, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(config, codes)?;
        net.arch.init(&mut net.params, rng);
        Ok(net)
    }

    pub fn zeros(config: CriticConfig, codes: usize) -> Result<Self> {
        if codes < 2 {
            return Err(Error::Config(format!("posterior needs at least 2 codes, got {codes}")));
        }
        let arch = CriticArch::new(config.hidden, codes);
        let params = vec![T::zero(); arch.layout.len()];
        Ok(Self { arch, params })
    }

    pub fn codes(&self) -> usize {
        self.arch.outputs()
    }

    pub fn config(&self) -> CriticConfig {
        CriticConfig { hidden: self.arch.hidden() }
    }

    /// Zeroes the output head so the posterior is uniform.
    pub fn zero_head(&mut self) {
        self.arch.head.zero(&mut self.params);
    }

    fn logits(&self, traj: &[Point]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let z = self.arch.logits(&mut tape, traj)?;
        Ok(tape.value(z).iter().map(|v| v.f64()).collect())
    }
}

/// Probability that `traj` is real.
pub fn discriminate<T: Scalar>(d: &DiscriminatorNet<T>, traj: &[Point]) -> Result<f64> {
    Ok(sigmoid(d.logit(traj)?))
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// Log-probabilities of every code given `traj`.
pub fn posterior_log_dist<T: Scalar>(q: &PosteriorNet<T>, traj: &[Point]) -> Result<Vec<f64>> {
    Ok(log_softmax(&q.logits(traj)?))
}

pub fn posterior_dist<T: Scalar>(q: &PosteriorNet<T>, traj: &[Point]) -> Result<Vec<f64>> {
    Ok(posterior_log_dist(q, traj)?.into_iter().map(f64::exp).collect())
}

fn clamped_ln(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS).ln()
}

fn clamped_log(log_p: f64) -> f64 {
    log_p.clamp(PROB_EPS.ln(), (1.0 - PROB_EPS).ln())
}

fn inside_clamp(p: f64) -> bool {
    p > PROB_EPS && p < 1.0 - PROB_EPS
}

/// Loss value and parameter gradient.
pub type LossGrad<T> = (f64, Vec<T>);

/// `−mean log D(real) − mean log(1 − D(fake))`; D is the real-class
/// probability.
pub fn d_loss<T: Scalar>(d: &DiscriminatorNet<T>, real: &[Vec<Point>], fake: &[Vec<Point>]) -> Result<f64> {
    Ok(d_loss_impl(d, real, fake, false)?.0)
}

pub fn d_loss_grad<T: Scalar>(d: &DiscriminatorNet<T>, real: &[Vec<Point>], fake: &[Vec<Point>]) -> Result<LossGrad<T>> {
    d_loss_impl(d, real, fake, true)
}

fn d_loss_impl<T: Scalar>(d: &DiscriminatorNet<T>, real: &[Vec<Point>], fake: &[Vec<Point>], grad: bool) -> Result<LossGrad<T>> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Argument("discriminator loss needs non-empty real and fake batches".into()));
    }
    let mut g = vec![T::zero(); if grad { d.params.len() } else { 0 }];
    let mut loss = 0.0;
    for (traj, is_real) in real.iter().map(|t| (t, true)).chain(fake.iter().map(|t| (t, false))) {
        let mut tape = Tape::new(&d.params);
        let z = d.arch.logits(&mut tape, traj)?;
        let p = sigmoid(tape.value(z)[0].f64());
        // d/dz of -ln σ(z) is σ-1; of -ln(1-σ(z)) is σ.
        let (term, dz) = if is_real { (-clamped_ln(p), p - 1.0) } else { (-clamped_ln(1.0 - p), p) };
        let n = if is_real { real.len() } else { fake.len() } as f64;
        loss += term / n;
        if grad && inside_clamp(p) {
            tape.backward(&[(z, &[T::lit(dz / n)])], &mut g);
        }
    }
    Ok((loss, g))
}

/// `−λ · mean log Q(c | traj)` over generated trajectories.
pub fn q_loss<T: Scalar>(q: &PosteriorNet<T>, fake: &[Vec<Point>], codes: &[Option<LatentCode>], lambda: f64) -> Result<f64> {
    Ok(q_loss_impl(q, fake, codes, lambda, false)?.0)
}

pub fn q_loss_grad<T: Scalar>(q: &PosteriorNet<T>, fake: &[Vec<Point>], codes: &[Option<LatentCode>], lambda: f64) -> Result<LossGrad<T>> {
    q_loss_impl(q, fake, codes, lambda, true)
}

fn q_loss_impl<T: Scalar>(
    q: &PosteriorNet<T>,
    fake: &[Vec<Point>],
    codes: &[Option<LatentCode>],
    lambda: f64,
    grad: bool,
) -> Result<LossGrad<T>> {
    if fake.is_empty() {
        return Err(Error::Argument("posterior loss needs a non-empty batch".into()));
    }
    if codes.len() != fake.len() {
        return Err(Error::Argument(format!("{} codes for {} trajectories", codes.len(), fake.len())));
    }
    let n = fake.len() as f64;
    let k = q.codes();
    let mut g = vec![T::zero(); if grad { q.params.len() } else { 0 }];
    let mut loss = 0.0;
    for (traj, code) in fake.iter().zip(codes) {
        let code = code.ok_or_else(|| Error::Argument("generated trajectory without its code".into()))?;
        if code.dim != k {
            return Err(Error::Config(format!("code dimension {} does not match posterior ({k})", code.dim)));
        }
        let mut tape = Tape::new(&q.params);
        let z = q.arch.logits(&mut tape, traj)?;
        let zs: Vec<f64> = tape.value(z).iter().map(|v| v.f64()).collect();
        let logp = log_softmax(&zs);
        let lc = logp[code.index];
        loss -= lambda * clamped_log(lc) / n;
        if grad && lambda != 0.0 && inside_clamp(lc.exp()) {
            let dz: Vec<T> = logp
                .iter()
                .enumerate()
                .map(|(j, lp)| {
                    let onehot = if j == code.index { 1.0 } else { 0.0 };
                    T::lit(lambda * (lp.exp() - onehot) / n)
                })
                .collect();
            tape.backward(&[(z, &dz)], &mut g);
        }
    }
    Ok((loss, g))
}

/// Episodic reward `log D(traj) + λ log Q(c | traj)`, both terms clamped.
pub fn reward_signal<T: Scalar>(
    d: &DiscriminatorNet<T>,
    posterior: Option<(&PosteriorNet<T>, LatentCode)>,
    traj: &[Point],
    lambda: f64,
) -> Result<f64> {
    let mut r = clamped_ln(discriminate(d, traj)?);
    if let Some((q, code)) = posterior {
        if code.dim != q.codes() {
            return Err(Error::Config(format!("code dimension {} does not match posterior ({})", code.dim, q.codes())));
        }
        r += lambda * clamped_log(posterior_log_dist(q, traj)?[code.index]);
    }
    Ok(r)
}

/// Clamped `log Q(c | traj)` of the generating code.
pub fn code_log_likelihood<T: Scalar>(q: &PosteriorNet<T>, traj: &[Point], code: LatentCode) -> Result<f64> {
    Ok(clamped_log(posterior_log_dist(q, traj)?[code.index]))
}

/// Variational lower bound on the code/trajectory mutual information under a
/// uniform prior over `k` codes: `mean log Q(c|traj) + ln k`.
pub fn mi_lower_bound(log_q: &[f64], k: usize) -> f64 {
    if log_q.is_empty() {
        return 0.0;
    }
    log_q.iter().sum::<f64>() / log_q.len() as f64 + (k as f64).ln()
}
