use crate::scalar::Scalar;
use crate::trajdata::{Point, SceneSpec};

/// Grid cell of a neighbor at pixel offset `offset` from the agent, or
/// `None` outside the square. Cells are half-open: `[-e, e)` on each axis
/// with `e` half the vicinity extent. Index is `row * N + col`.
pub fn vicinity_cell(offset: Point, scene: &SceneSpec) -> Option<usize> {
    let n = scene.vicinity_cells;
    let half = scene.vicinity_extent_px / 2.0;
    let side = scene.vicinity_extent_px / n as f64;
    if offset[0] < -half || offset[0] >= half || offset[1] < -half || offset[1] >= half {
        return None;
    }
    let col = (((offset[0] + half) / side).floor() as usize).min(n - 1);
    let row = (((offset[1] + half) / side).floor() as usize).min(n - 1);
    Some(row * n + col)
}

/// Neighbors of agent `i` grouped by cell, in ascending cell order.
/// `present` restricts which agents are considered.
pub fn vicinity_groups(i: usize, positions: &[Point], present: &[usize], scene: &SceneSpec) -> Vec<(usize, Vec<usize>)> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &j in present {
        if j == i {
            continue;
        }
        let off = [positions[j][0] - positions[i][0], positions[j][1] - positions[i][1]];
        if let Some(cell) = vicinity_cell(off, scene) {
            match groups.iter_mut().find(|(c, _)| *c == cell) {
                Some((_, m)) => m.push(j),
                None => groups.push((cell, vec![j])),
            }
        }
    }
    groups.sort_by_key(|(c, _)| *c);
    groups
}

/// Dense `N × N × H` tensor (cell-major) of summed neighbor hidden states.
pub fn vicinity_tensor<T: Scalar>(i: usize, positions: &[Point], hiddens: &[Vec<T>], scene: &SceneSpec) -> Vec<T> {
    let h = hiddens.first().map_or(0, |v| v.len());
    let n = scene.vicinity_cells;
    let mut out = vec![T::zero(); n * n * h];
    let all: Vec<usize> = (0..positions.len()).collect();
    for (cell, members) in vicinity_groups(i, positions, &all, scene) {
        for j in members {
            for (o, &v) in out[cell * h..(cell + 1) * h].iter_mut().zip(&hiddens[j]) {
                *o += v;
            }
        }
    }
    out
}
