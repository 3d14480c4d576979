//! The generator: an encoder-decoder recurrent Gaussian policy with latent
//! code injection, a social vicinity layer and a collision gate.

mod gate;
mod gaussian;
mod rollout;
mod vicinity;

pub use gate::collision_gate;
pub use gaussian::{gaussian_log_prob, sample_action};
pub use rollout::{forward_batch, rollout, BatchForward, Feed, Rollout, RolloutOptions, SocialFlags};
pub use vicinity::{vicinity_cell, vicinity_groups, vicinity_tensor};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamLayout, Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{CellState, Linear, LstmCell};
use crate::scalar::Scalar;
use crate::trajdata::Point;

/// Network sizes and the fixed action noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub fc_hidden: usize,
    /// Latent code dimension; 0 disables intention inference.
    pub code_dim: usize,
    /// Cells per side of the vicinity grid.
    pub vicinity_cells: usize,
    /// Log std of the Gaussian action noise, normalized units.
    pub log_std: [f64; 2],
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { hidden: 128, fc_hidden: 64, code_dim: 0, vicinity_cells: 4, log_std: [-4.0, -4.0] }
    }
}

/// One-hot latent intention code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatentCode {
    pub dim: usize,
    pub index: usize,
}

impl LatentCode {
    pub fn new(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::Config(format!("code index {index} out of range for dimension {dim}")));
        }
        Ok(Self { dim, index })
    }

    /// Draw from the uniform categorical prior.
    pub fn sample<R: Rng>(dim: usize, rng: &mut R) -> Self {
        Self { dim, index: rng.gen_range(0..dim) }
    }

    pub fn onehot<T: Scalar>(&self) -> Vec<T> {
        (0..self.dim).map(|k| if k == self.index { T::one() } else { T::zero() }).collect()
    }

    pub fn all(dim: usize) -> impl Iterator<Item = LatentCode> {
        (0..dim).map(move |index| LatentCode { dim, index })
    }
}

/// Parameter handles of the policy; independent of the scalar type.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArch {
    pub config: PolicyConfig,
    pub layout: ParamLayout,
    pub encoder: LstmCell,
    pub decoder: LstmCell,
    pub fc_hidden: Linear,
    pub fc_out: Linear,
    pub code_embed: Option<Linear>,
    pub vicinity_embed: Linear,
}

impl PolicyArch {
    pub fn new(config: PolicyConfig) -> Self {
        let mut layout = ParamLayout::new();
        let h = config.hidden;
        let encoder = LstmCell::new(&mut layout, "encoder", 2, h);
        let decoder = LstmCell::new(&mut layout, "decoder", 2, h);
        let fc_hidden = Linear::new(&mut layout, "fc_hidden", h, config.fc_hidden);
        let fc_out = Linear::new(&mut layout, "fc_out", config.fc_hidden, 2);
        let code_embed = (config.code_dim > 0).then(|| Linear::new(&mut layout, "code_embed", config.code_dim, config.fc_hidden));
        let cells = config.vicinity_cells * config.vicinity_cells;
        let vicinity_embed = Linear::new(&mut layout, "vicinity_embed", cells * h, h);
        Self { config, layout, encoder, decoder, fc_hidden, fc_out, code_embed, vicinity_embed }
    }

    /// Runs the encoder over the observed window from the zero state and
    /// returns the state after every observation.
    pub fn encode_states<T: Scalar>(&self, tape: &mut Tape<'_, T>, observed: &[Point]) -> Result<Vec<CellState>> {
        if observed.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::NumericInput);
        }
        let mut state = None;
        let mut out = Vec::with_capacity(observed.len());
        for p in observed {
            let x = tape.input(&[T::lit(p[0]), T::lit(p[1])]);
            let s = self.encoder.step(tape, x, state);
            out.push(s);
            state = Some(s);
        }
        Ok(out)
    }

    /// Final encoder state after the observed window.
    pub fn encode<T: Scalar>(&self, tape: &mut Tape<'_, T>, observed: &[Point]) -> Result<CellState> {
        self.encode_states(tape, observed)?.last().copied().ok_or(Error::Shape("empty observed window".into()))
    }

    /// Adds the embedded code to the fully-connected hidden activation.
    pub fn inject_code<T: Scalar>(&self, tape: &mut Tape<'_, T>, code: &LatentCode, activation: Var) -> Result<Var> {
        let embed = self
            .code_embed
            .ok_or_else(|| Error::Config("policy has no code embedding".into()))?;
        if code.dim != embed.inputs() {
            return Err(Error::Config(format!("code dimension {} does not match policy ({})", code.dim, embed.inputs())));
        }
        let onehot = tape.input(&code.onehot::<T>());
        let e = embed.forward(tape, onehot);
        Ok(tape.add(activation, e))
    }

    /// One decoder step: recurrent update, optional vicinity embedding added
    /// to the hidden state, then the output head. The mean is the previous
    /// position plus the head output.
    ///
    /// `vicinity` lists `(cell, neighbor hidden states)` groups.
    pub fn decode_step<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        prev_action: Var,
        state: CellState,
        code: Option<&LatentCode>,
        vicinity: Option<&[(usize, Vec<Var>)]>,
    ) -> Result<(Var, CellState)> {
        let mut next = self.decoder.step(tape, prev_action, Some(state));
        if let Some(groups) = vicinity {
            let h = self.config.hidden;
            let mut blocks = Vec::with_capacity(groups.len());
            for (cell, members) in groups {
                let v = if members.len() == 1 { members[0] } else { tape.sum(members) };
                blocks.push((cell * h, v));
            }
            let e = tape.affine(self.vicinity_embed.w, Some(self.vicinity_embed.b), &blocks);
            next.h = tape.add(next.h, e);
        }
        let a = self.fc_hidden.forward(tape, next.h);
        let mut a = tape.relu(a);
        if let Some(code) = code {
            a = self.inject_code(tape, code, a)?;
        }
        let delta = self.fc_out.forward(tape, a);
        Ok((tape.add(prev_action, delta), next))
    }
}

/// Policy parameters over scalar type `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T> {
    pub arch: PolicyArch,
    pub params: Vec<T>,
}

impl<T: Scalar> PolicyNet<T> {
    /// Uniform weights and zero biases; the vicinity embedding starts at zero
    /// so an empty or untrained social layer leaves the decoder unchanged.
    pub fn new<R: Rng>(config: PolicyConfig, rng: &mut R) -> Self {
        let arch = PolicyArch::new(config);
        let mut params = vec![T::zero(); arch.layout.len()];
        arch.encoder.init(&mut params, rng);
        arch.decoder.init(&mut params, rng);
        arch.fc_hidden.init(&mut params, rng);
        arch.fc_out.init(&mut params, rng);
        if let Some(c) = arch.code_embed {
            c.init(&mut params, rng);
        }
        arch.vicinity_embed.zero(&mut params);
        Self { arch, params }
    }

    pub fn zeros(config: PolicyConfig) -> Self {
        let arch = PolicyArch::new(config);
        let params = vec![T::zero(); arch.layout.len()];
        Self { arch, params }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.arch.config
    }

    pub fn log_std(&self) -> [f64; 2] {
        self.arch.config.log_std
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}
