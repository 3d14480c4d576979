//! Pedestrian trajectory generation by adversarial imitation.
//!
//! A recurrent encoder/decoder policy observes a few seconds of a walker's
//! path and rolls out the rest, optionally conditioned on a latent intention
//! code and on its neighbours' hidden states. Policies are fitted by
//! supervised regression or by GAIL-style training against a recurrent
//! discriminator with TRPO updates; the coded variant adds a posterior
//! network that rewards recoverable codes.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`), with
//! concrete aliases below. The `crowdim` binary wraps the pipeline.

pub mod adversary;
pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod eval;
pub mod nn;
pub mod optim;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod trajdata;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use checkpoint::Checkpoint;
pub use cli::RunManifest;

pub type PolicyNetF32 = policy::PolicyNet<f32>;
pub type PolicyNetF64 = policy::PolicyNet<f64>;
pub type DiscriminatorNetF32 = adversary::DiscriminatorNet<f32>;
pub type DiscriminatorNetF64 = adversary::DiscriminatorNet<f64>;
pub type PosteriorNetF32 = adversary::PosteriorNet<f32>;
pub type PosteriorNetF64 = adversary::PosteriorNet<f64>;
pub type CheckpointF32 = checkpoint::Checkpoint<f32>;
pub type CheckpointF64 = checkpoint::Checkpoint<f64>;
