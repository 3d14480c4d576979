//! Tracklet ingestion, windowing, splits, synthetic demonstrations and
//! frame-coherent batching.

mod batch;
mod episode;
mod scene;
mod synth;
mod tracklet;

pub use batch::{make_frame_batches, FrameBatch, Neighbor};
pub use episode::{assign_splits, split_windows, Episode, Split, T_FULL, T_OBS, T_PRED};
pub use scene::{ExitRegion, SceneSpec};
pub use synth::{synth_generate, Preset, SynthParams};
pub use tracklet::{load_tracklets, read_tracklets, resample, save_tracklets, write_tracklets, Tracklet, BOUNDS_SLACK_PX};

use crate::error::Result;

/// 2-D coordinate; normalized or pixels depending on context.
pub type Point = [f64; 2];

pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Windowing and split options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowOptions {
    pub stride: usize,
    pub fractions: (f64, f64, f64),
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self { stride: T_FULL, fractions: (0.8, 0.1, 0.1) }
    }
}

/// Windows every tracklet and tags splits by tracklet order.
pub fn build_episodes(tracklets: &[Tracklet], opts: WindowOptions) -> Result<Vec<Episode>> {
    let eps: Vec<Episode> = tracklets.iter().flat_map(|t| split_windows(t, T_OBS, T_PRED, opts.stride)).collect();
    assign_splits(eps, opts.fractions)
}

pub fn of_split(episodes: &[Episode], split: Split) -> Vec<Episode> {
    episodes.iter().filter(|e| e.split == split).cloned().collect()
}
