use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajdata::{Point, Tracklet};

/// Observed window length used throughout.
pub const T_OBS: usize = 9;
/// Predicted window length used throughout.
pub const T_PRED: usize = 8;
pub const T_FULL: usize = T_OBS + T_PRED;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub tracklet_id: u64,
    /// Window start on the resampled clock.
    pub t0: i64,
    pub observed: Vec<Point>,
    pub future: Vec<Point>,
    pub split: Split,
    pub goal_exit: Option<usize>,
    pub mode: Option<usize>,
}

impl Episode {
    /// Ground-truth position at window-local step `k` (observed then future).
    pub fn point(&self, k: usize) -> Point {
        if k < self.observed.len() {
            self.observed[k]
        } else {
            self.future[k - self.observed.len()]
        }
    }

    pub fn len(&self) -> usize {
        self.observed.len() + self.future.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn end(&self) -> i64 {
        self.t0 + self.len() as i64
    }

    pub fn full(&self) -> Vec<Point> {
        self.observed.iter().chain(&self.future).copied().collect()
    }

    pub fn last_observed(&self) -> Point {
        *self.observed.last().expect("non-empty observed window")
    }
}

/// Cuts a tracklet into windows starting at 0, stride, 2·stride, …
pub fn split_windows(t: &Tracklet, t1: usize, t2: usize, stride: usize) -> Vec<Episode> {
    assert!(t1 >= 1 && t2 >= 1 && stride >= 1, "window lengths and stride must be positive");
    let total = t1 + t2;
    if t.points.len() < total {
        return Vec::new();
    }
    (0..=t.points.len() - total)
        .step_by(stride)
        .map(|s| Episode {
            tracklet_id: t.id,
            t0: t.start_frame + s as i64,
            observed: t.points[s..s + t1].to_vec(),
            future: t.points[s + t1..s + total].to_vec(),
            split: Split::Train,
            goal_exit: t.goal_exit,
            mode: t.mode,
        })
        .collect()
}

/// Tags episodes by source tracklet: the first `train` fraction of
/// tracklets (in order of appearance) are train, then val, then test.
pub fn assign_splits(mut episodes: Vec<Episode>, fractions: (f64, f64, f64)) -> Result<Vec<Episode>> {
    let (tr, va, te) = fractions;
    if !(tr > 0.0 && va > 0.0 && te > 0.0) || ((tr + va + te) - 1.0).abs() > 1e-9 {
        return Err(Error::Split(format!("fractions {fractions:?} must be positive and sum to 1")));
    }
    let mut ids: Vec<u64> = Vec::new();
    for e in &episodes {
        if ids.last() != Some(&e.tracklet_id) && !ids.contains(&e.tracklet_id) {
            ids.push(e.tracklet_id);
        }
    }
    if ids.len() < 3 {
        return Err(Error::Split(format!("need at least 3 tracklets, found {}", ids.len())));
    }
    let n = ids.len() as f64;
    let tag_of = |rank: usize| {
        let cum = (rank + 1) as f64 / n;
        if cum <= tr + 1e-9 {
            Split::Train
        } else if cum <= tr + va + 1e-9 {
            Split::Val
        } else {
            Split::Test
        }
    };
    let tags: std::collections::HashMap<u64, Split> =
        ids.iter().enumerate().map(|(rank, &id)| (id, tag_of(rank))).collect();
    for e in &mut episodes {
        e.split = tags[&e.tracklet_id];
    }
    Ok(episodes)
}
