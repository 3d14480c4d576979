use crate::trajdata::{dist, Point};

/// Holds both members of every candidate pair closer than `thresh` at their
/// previous positions; everyone else moves to their candidate. One pass over
/// candidates, no iteration to a fixed point.
pub fn collision_gate(candidates: &[Point], previous: &[Point], thresh: f64) -> (Vec<Point>, Vec<bool>) {
    assert_eq!(candidates.len(), previous.len(), "candidates and previous must align");
    let n = candidates.len();
    let mut hits = vec![false; n];
    for i in 0..n {
        for j in i + 1..n {
            if dist(candidates[i], candidates[j]) < thresh {
                hits[i] = true;
                hits[j] = true;
            }
        }
    }
    let out = (0..n).map(|i| if hits[i] { previous[i] } else { candidates[i] }).collect();
    (out, hits)
}
