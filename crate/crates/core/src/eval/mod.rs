//! Displacement and collision metrics, the intention sweep and rendering.

mod render;
mod sweep;

pub use render::{render_scene, write_render, Palette};
pub use sweep::{intention_sweep, mode_alignment, ray_deviation, write_sweep_csv, IntentSweep, SweepRow};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{rollout, PolicyNet, RolloutOptions, SocialFlags};
use crate::scalar::Scalar;
use crate::trajdata::{dist, Episode, FrameBatch, Point, SceneSpec};

/// Aggregate prediction quality over a set of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    /// Fraction of the image extent; multiply by 100 for percent.
    pub norm_ade: f64,
    pub ade_px: f64,
    pub fde_px: f64,
    pub collision_rate: f64,
    pub n_episodes: usize,
}

impl MetricReport {
    /// JSON object with six decimals per value.
    pub fn to_json(&self) -> String {
        format!(
            "{{\"norm_ade\": {:.6}, \"ade_px\": {:.6}, \"fde_px\": {:.6}, \"collision_rate\": {:.6}, \"n_episodes\": {}}}",
            self.norm_ade, self.ade_px, self.fde_px, self.collision_rate, self.n_episodes
        )
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", self.to_json())?;
        Ok(())
    }
}

fn check_lengths(pred: &[Point], gt: &[Point]) -> Result<()> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Shape(format!("prediction has {} points, ground truth {}", pred.len(), gt.len())));
    }
    Ok(())
}

/// Mean Euclidean error in normalized coordinates.
pub fn norm_ade(pred: &[Point], gt: &[Point]) -> Result<f64> {
    check_lengths(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(&p, &g)| dist(p, g)).sum::<f64>() / pred.len() as f64)
}

/// Mean and final Euclidean error in pixels.
pub fn ade_fde(pred: &[Point], gt: &[Point], scene: &SceneSpec) -> Result<(f64, f64)> {
    check_lengths(pred, gt)?;
    let errs: Vec<f64> = pred
        .iter()
        .zip(gt)
        .map(|(&p, &g)| dist(scene.denormalize(p), scene.denormalize(g)))
        .collect();
    Ok((errs.iter().sum::<f64>() / errs.len() as f64, errs[errs.len() - 1]))
}

/// Pixel track of one agent starting at absolute time `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedTrack {
    pub start: i64,
    pub points_px: Vec<Point>,
}

impl TimedTrack {
    fn at(&self, t: i64) -> Option<Point> {
        let k = t - self.start;
        (k >= 0).then(|| self.points_px.get(k as usize).copied()).flatten()
    }
}

/// `(violating pair-steps, co-present pair-steps)` over all time steps.
pub fn collision_counts(tracks: &[TimedTrack], thresh_px: f64) -> (usize, usize) {
    let Some(start) = tracks.iter().map(|t| t.start).min() else {
        return (0, 0);
    };
    let end = tracks.iter().map(|t| t.start + t.points_px.len() as i64).max().unwrap_or(start);
    let (mut hits, mut pairs) = (0, 0);
    for t in start..end {
        let here: Vec<Point> = tracks.iter().filter_map(|tr| tr.at(t)).collect();
        for i in 0..here.len() {
            for j in i + 1..here.len() {
                pairs += 1;
                if dist(here[i], here[j]) < thresh_px {
                    hits += 1;
                }
            }
        }
    }
    (hits, pairs)
}

/// Fraction of co-present pair-steps closer than `thresh_px`.
pub fn collision_rate(tracks: &[TimedTrack], thresh_px: f64) -> f64 {
    match collision_counts(tracks, thresh_px) {
        (_, 0) => 0.0,
        (h, p) => h as f64 / p as f64,
    }
}

/// Predictions of one frame batch, index-aligned with its episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction<'a> {
    pub batch: &'a FrameBatch,
    pub futures: Vec<Vec<Point>>,
}

/// Per-episode metrics averaged over episodes; collisions pooled over all
/// pair-steps of the generated futures within each batch.
pub fn report(predictions: &[BatchPrediction<'_>], scene: &SceneSpec) -> Result<MetricReport> {
    let (mut n, mut norm, mut ade, mut fde) = (0usize, 0.0, 0.0, 0.0);
    let (mut hits, mut pairs) = (0, 0);
    for bp in predictions {
        if bp.futures.len() != bp.batch.len() {
            return Err(Error::Shape("one future per episode expected".into()));
        }
        let mut tracks = Vec::with_capacity(bp.futures.len());
        for (ep, fut) in bp.batch.episodes.iter().zip(&bp.futures) {
            norm += norm_ade(fut, &ep.future)?;
            let (a, f) = ade_fde(fut, &ep.future, scene)?;
            ade += a;
            fde += f;
            n += 1;
            tracks.push(TimedTrack {
                start: ep.t0 + ep.observed.len() as i64,
                points_px: fut.iter().map(|&p| scene.denormalize(p)).collect(),
            });
        }
        let (h, p) = collision_counts(&tracks, scene.collision_thresh_px);
        hits += h;
        pairs += p;
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let n_f = n as f64;
    Ok(MetricReport {
        norm_ade: norm / n_f,
        ade_px: ade / n_f,
        fde_px: fde / n_f,
        collision_rate: if pairs == 0 { 0.0 } else { hits as f64 / pairs as f64 },
        n_episodes: n,
    })
}

/// Deterministic predictions of the policy for every batch.
pub fn predict<T: Scalar>(
    net: &PolicyNet<T>,
    batches: &[FrameBatch],
    social: SocialFlags,
    scene: &SceneSpec,
) -> Result<Vec<Vec<Vec<Point>>>> {
    let opts = RolloutOptions { stochastic: false, social };
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    batches
        .iter()
        .map(|b| {
            let codes = default_codes(net, b.len());
            Ok(rollout(net, b, &codes, opts, scene, &mut rng)?.into_iter().map(|r| r.actions).collect())
        })
        .collect()
}

/// Code 0 for every episode of a coded policy, none otherwise.
pub fn default_codes<T: Scalar>(net: &PolicyNet<T>, n: usize) -> Vec<Option<crate::policy::LatentCode>> {
    let k = net.config().code_dim;
    vec![(k > 0).then_some(crate::policy::LatentCode { dim: k, index: 0 }); n]
}

/// Deterministic-rollout metrics of the policy on `batches`.
pub fn evaluate<T: Scalar>(net: &PolicyNet<T>, batches: &[FrameBatch], social: SocialFlags, scene: &SceneSpec) -> Result<MetricReport> {
    let futures = predict(net, batches, social, scene)?;
    let preds: Vec<BatchPrediction<'_>> = batches.iter().zip(futures).map(|(batch, futures)| BatchPrediction { batch, futures }).collect();
    report(&preds, scene)
}

/// Metrics of any per-episode predictor, e.g. the constant-velocity baseline.
pub fn evaluate_with<F: Fn(&Episode) -> Vec<Point>>(batches: &[FrameBatch], scene: &SceneSpec, predictor: F) -> Result<MetricReport> {
    let preds: Vec<BatchPrediction<'_>> = batches
        .iter()
        .map(|batch| BatchPrediction { batch, futures: batch.episodes.iter().map(&predictor).collect() })
        .collect();
    report(&preds, scene)
}
