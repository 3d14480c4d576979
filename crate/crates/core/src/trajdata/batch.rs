use crate::trajdata::{Episode, Point, SceneSpec};

/// A co-present agent at one window-local step.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    /// Index of the other episode within the batch.
    pub index: usize,
    /// Ground-truth pixel offset of the neighbor relative to this agent.
    pub offset_px: Point,
}

/// Episodes with pairwise-overlapping windows, decoded together.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBatch {
    pub episodes: Vec<Episode>,
    /// `neighbor_index[i][k]`: agents co-present with episode `i` at its
    /// window-local step `k` (absolute time `t0_i + k`).
    pub neighbor_index: Vec<Vec<Vec<Neighbor>>>,
}

impl FrameBatch {
    pub fn new(episodes: Vec<Episode>, scene: &SceneSpec) -> Self {
        let neighbor_index = build_neighbor_index(&episodes, scene);
        Self { episodes, neighbor_index }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// First absolute time covered by any member.
    pub fn start(&self) -> i64 {
        self.episodes.iter().map(|e| e.t0).min().unwrap_or(0)
    }

    pub fn end(&self) -> i64 {
        self.episodes.iter().map(|e| e.end()).max().unwrap_or(0)
    }
}

fn build_neighbor_index(episodes: &[Episode], scene: &SceneSpec) -> Vec<Vec<Vec<Neighbor>>> {
    episodes
        .iter()
        .enumerate()
        .map(|(i, ei)| {
            (0..ei.len())
                .map(|k| {
                    let tau = ei.t0 + k as i64;
                    let pi = scene.denormalize(ei.point(k));
                    episodes
                        .iter()
                        .enumerate()
                        .filter(|&(j, ej)| j != i && ej.t0 <= tau && tau < ej.end())
                        .map(|(j, ej)| {
                            let pj = scene.denormalize(ej.point((tau - ej.t0) as usize));
                            Neighbor { index: j, offset_px: [pj[0] - pi[0], pj[1] - pi[1]] }
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Greedy grouping: episodes are visited by window start and placed in the
/// first open batch whose common time interval they still intersect.
/// Batches are returned in order of their first member's input position.
pub fn make_frame_batches(episodes: &[Episode], scene: &SceneSpec, max_batch: usize) -> Vec<FrameBatch> {
    let max_batch = max_batch.max(1);
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    order.sort_by_key(|&i| (episodes[i].t0, i));
    // (members, common interval lo, hi)
    let mut groups: Vec<(Vec<usize>, i64, i64)> = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    for &i in &order {
        let e = &episodes[i];
        open.retain(|&g| groups[g].2 > e.t0 && groups[g].0.len() < max_batch);
        let slot = open.iter().copied().find(|&g| {
            let (_, lo, hi) = groups[g];
            lo.max(e.t0) < hi.min(e.end())
        });
        match slot {
            Some(g) => {
                let grp = &mut groups[g];
                grp.0.push(i);
                grp.1 = grp.1.max(e.t0);
                grp.2 = grp.2.min(e.end());
            }
            None => {
                groups.push((vec![i], e.t0, e.end()));
                open.push(groups.len() - 1);
            }
        }
    }
    for g in &mut groups {
        g.0.sort_unstable();
    }
    groups.sort_by_key(|g| g.0[0]);
    groups
        .into_iter()
        .map(|(members, _, _)| FrameBatch::new(members.into_iter().map(|i| episodes[i].clone()).collect(), scene))
        .collect()
}
