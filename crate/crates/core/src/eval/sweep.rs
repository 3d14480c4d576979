use std::path::Path;

use crate::error::{Error, Result};
use crate::policy::{rollout, LatentCode, PolicyNet, RolloutOptions, SocialFlags};
use crate::scalar::Scalar;
use crate::trajdata::{dist, Episode, FrameBatch, Point, SceneSpec};

/// One (episode, code) line of the sweep export.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub episode_id: usize,
    pub code: usize,
    pub dev_px: f64,
    pub endpoint_px: Point,
}

/// Futures of every episode under every code configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct IntentSweep {
    pub codes: usize,
    pub rows: Vec<SweepRow>,
    /// `futures[episode][code]`, normalized coordinates.
    pub futures: Vec<Vec<Vec<Point>>>,
    /// Mean ray deviation per code, pixels.
    pub mean_dev_px: Vec<f64>,
    /// Largest, over code pairs, of the episode-averaged endpoint distance.
    pub separation_px: f64,
    /// Fraction of episodes whose least-deviating code is the majority one.
    pub alignment: f64,
    /// With generator mode labels on every episode: accuracy of the best
    /// code-to-mode assignment, each episode's code being the one whose
    /// future lies closest to the ground truth.
    pub mode_alignment: Option<f64>,
}

/// Distance in pixels from `p` to the ray starting at `origin` through `toward`.
pub fn ray_deviation(origin: Point, toward: Point, p: Point) -> f64 {
    let d = [toward[0] - origin[0], toward[1] - origin[1]];
    let v = [p[0] - origin[0], p[1] - origin[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    if len2 == 0.0 {
        return dist(origin, p);
    }
    let t = ((v[0] * d[0] + v[1] * d[1]) / len2).max(0.0);
    dist([origin[0] + t * d[0], origin[1] + t * d[1]], p)
}

/// Exit the ray points at: the labeled goal when known, else the exit nearest
/// to the ground-truth final position.
fn target_exit(ep: &Episode, scene: &SceneSpec) -> Option<Point> {
    ep.goal_exit
        .and_then(|id| scene.exit(id))
        .or_else(|| scene.nearest_exit(scene.denormalize(*ep.future.last()?)))
        .map(|e| e.center())
}

pub fn intention_sweep<T: Scalar>(
    net: &PolicyNet<T>,
    batches: &[FrameBatch],
    codes: usize,
    social: SocialFlags,
    scene: &SceneSpec,
) -> Result<IntentSweep> {
    if codes == 0 || net.config().code_dim != codes {
        return Err(Error::Config(format!("sweep over {codes} codes but policy has code dimension {}", net.config().code_dim)));
    }
    let opts = RolloutOptions { stochastic: false, social };
    let mut rng = rand::rngs::mock::StepRng::new(0, 0);
    let mut futures: Vec<Vec<Vec<Point>>> = Vec::new();
    let mut episodes: Vec<&Episode> = Vec::new();
    for b in batches {
        let base = futures.len();
        futures.extend((0..b.len()).map(|_| Vec::with_capacity(codes)));
        episodes.extend(b.episodes.iter());
        for code in LatentCode::all(codes) {
            let rs = rollout(net, b, &vec![Some(code); b.len()], opts, scene, &mut rng)?;
            for (i, r) in rs.into_iter().enumerate() {
                futures[base + i].push(r.actions);
            }
        }
    }

    let mut rows = Vec::with_capacity(futures.len() * codes);
    let mut dev_sum = vec![0.0; codes];
    let mut best_votes = vec![0usize; codes];
    let mut best_of = Vec::with_capacity(futures.len());
    let mut pair_sum = vec![vec![0.0; codes]; codes];
    for (id, (ep, fut)) in episodes.iter().zip(&futures).enumerate() {
        let origin = scene.denormalize(ep.last_observed());
        let toward = target_exit(ep, scene).ok_or_else(|| Error::Config("scene has no exits".into()))?;
        let ends: Vec<Point> = fut.iter().map(|f| scene.denormalize(*f.last().expect("non-empty future"))).collect();
        let mut best = (0, f64::INFINITY);
        for (c, &e) in ends.iter().enumerate() {
            let dev = ray_deviation(origin, toward, e);
            dev_sum[c] += dev;
            if dev < best.1 {
                best = (c, dev);
            }
            rows.push(SweepRow { episode_id: id, code: c, dev_px: dev, endpoint_px: e });
            for c2 in c + 1..codes {
                pair_sum[c][c2] += dist(e, ends[c2]);
            }
        }
        best_votes[best.0] += 1;
        best_of.push(best.0);
    }
    let n = futures.len().max(1) as f64;
    let majority = (0..codes).max_by_key(|&c| (best_votes[c], std::cmp::Reverse(c))).unwrap_or(0);
    let alignment = if futures.is_empty() { 0.0 } else { best_of.iter().filter(|&&c| c == majority).count() as f64 / n };
    let separation_px = pair_sum.iter().flatten().fold(0.0f64, |m, &s| m.max(s / n));
    let mode_alignment = mode_alignment(&episodes, &futures);
    Ok(IntentSweep {
        codes,
        rows,
        futures,
        mean_dev_px: dev_sum.into_iter().map(|s| s / n).collect(),
        separation_px,
        alignment,
        mode_alignment,
    })
}

/// Code whose future is closest, in mean displacement, to the ground truth.
fn nearest_code(ep: &Episode, futures: &[Vec<Point>]) -> usize {
    let ade = |f: &Vec<Point>| f.iter().zip(&ep.future).map(|(a, b)| dist(*a, *b)).sum::<f64>();
    (0..futures.len()).min_by(|&a, &b| ade(&futures[a]).total_cmp(&ade(&futures[b]))).unwrap_or(0)
}

/// Best balanced accuracy (mean per-mode recall) over code-to-mode maps that
/// use every observed mode, one to one when there are as many codes as
/// modes. A code-blind policy scores `1/m` whatever the mode shares.
pub fn mode_alignment(episodes: &[&Episode], futures: &[Vec<Vec<Point>>]) -> Option<f64> {
    let modes: Vec<usize> = episodes.iter().map(|e| e.mode).collect::<Option<_>>()?;
    let k = futures.first()?.len();
    let mut labels = modes.clone();
    labels.sort_unstable();
    labels.dedup();
    let m = labels.len();
    if k == 0 || m > k {
        return None;
    }
    let mut counts = vec![vec![0usize; m]; k];
    for ((ep, fut), mode) in episodes.iter().zip(futures).zip(&modes) {
        let j = labels.binary_search(mode).expect("label present");
        counts[nearest_code(ep, fut)][j] += 1;
    }
    let totals: Vec<usize> = (0..m).map(|j| counts.iter().map(|row| row[j]).sum()).collect();
    let mut best = 0.0f64;
    let mut map = vec![0usize; k];
    // Enumerate the m^k maps as base-m numbers.
    for _ in 0..m.pow(k as u32) {
        let mut used = vec![false; m];
        map.iter().for_each(|&j| used[j] = true);
        if used.iter().all(|&u| u) {
            let recall = (0..m).map(|j| (0..k).filter(|&c| map[c] == j).map(|c| counts[c][j]).sum::<usize>() as f64 / totals[j] as f64);
            best = best.max(recall.sum::<f64>() / m as f64);
        }
        for d in map.iter_mut() {
            *d += 1;
            if *d < m {
                break;
            }
            *d = 0;
        }
    }
    Some(best)
}

/// CSV with header `episode_id,code,dev_px,endpoint_x,endpoint_y`.
pub fn write_sweep_csv(sweep: &IntentSweep, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["episode_id", "code", "dev_px", "endpoint_x", "endpoint_y"]).map_err(io)?;
    for r in &sweep.rows {
        w.write_record([
            r.episode_id.to_string(),
            r.code.to_string(),
            format!("{:.6}", r.dev_px),
            format!("{:.6}", r.endpoint_px[0]),
            format!("{:.6}", r.endpoint_px[1]),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::uniform;
    use crate::policy::PolicyConfig;
    use crate::trajdata::{make_frame_batches, Preset, Split};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ray_distance_cases() {
        assert_abs_diff_eq!(ray_deviation([0.0, 0.0], [10.0, 0.0], [5.0, 3.0]), 3.0);
        assert_abs_diff_eq!(ray_deviation([0.0, 0.0], [10.0, 0.0], [20.0, -4.0]), 4.0);
        // Behind the origin the distance is to the origin itself.
        assert_abs_diff_eq!(ray_deviation([0.0, 0.0], [10.0, 0.0], [-3.0, 4.0]), 5.0);
    }

    fn batches(n: usize) -> (SceneSpec, Vec<FrameBatch>) {
        let (scene, ts) = Preset::Corridor.generate(n, 3).unwrap();
        let eps: Vec<Episode> = ts.iter().flat_map(|t| crate::trajdata::split_windows(t, 9, 8, 17)).map(|mut e| {
            e.split = Split::Test;
            e
        }).collect();
        let b = make_frame_batches(&eps, &scene, 8);
        (scene, b)
    }

    fn coded(k: usize, seed: u64) -> PolicyNet<f64> {
        let cfg = PolicyConfig { hidden: 8, fc_hidden: 8, code_dim: k, ..PolicyConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = PolicyNet::new(cfg, &mut rng);
        uniform(&mut net.params, &mut rng);
        net
    }

    #[test]
    fn single_code_is_trivially_aligned() {
        let (scene, b) = batches(10);
        let s = intention_sweep(&coded(1, 0), &b, 1, SocialFlags { gate: true, vicinity: true }, &scene).unwrap();
        assert_eq!(s.alignment, 1.0);
        assert_eq!(s.rows.len(), s.futures.len());
        assert!(s.mean_dev_px[0].is_finite());
    }

    #[test]
    fn code_blind_policy_has_equal_deviations() {
        let (scene, b) = batches(10);
        let mut net = coded(2, 1);
        net.arch.code_embed.unwrap().zero(&mut net.params);
        let s = intention_sweep(&net, &b, 2, SocialFlags { gate: true, vicinity: true }, &scene).unwrap();
        assert_eq!(s.mean_dev_px[0], s.mean_dev_px[1]);
        assert_eq!(s.separation_px, 0.0);
        assert_eq!(s.rows.len(), 2 * s.futures.len());
    }

    fn labeled(mode: usize, dy: f64) -> Episode {
        Episode {
            tracklet_id: 0,
            t0: 0,
            observed: vec![[0.5, 0.5]; 9],
            future: vec![[0.5, 0.5 + dy]; 8],
            split: Split::Test,
            goal_exit: None,
            mode: Some(mode),
        }
    }

    #[test]
    fn mode_alignment_cases() {
        let up = vec![[0.5, 0.6]; 8];
        let down = vec![[0.5, 0.4]; 8];
        let eps = [labeled(0, 0.1), labeled(1, -0.1), labeled(0, 0.1), labeled(1, -0.1)];
        let refs: Vec<&Episode> = eps.iter().collect();
        // Code 1 tracks mode 0 and code 0 tracks mode 1: a perfect swap.
        let fut = vec![vec![down.clone(), up.clone()]; 4];
        assert_eq!(mode_alignment(&refs, &fut), Some(1.0));
        // A code-blind policy scores chance even when one mode dominates.
        let blind = vec![vec![up.clone(), up.clone()]; 4];
        assert_eq!(mode_alignment(&refs, &blind), Some(0.5));
        let skewed = [labeled(0, 0.1), labeled(0, 0.1), labeled(0, 0.1), labeled(1, -0.1)];
        let skewed_refs: Vec<&Episode> = skewed.iter().collect();
        assert_eq!(mode_alignment(&skewed_refs, &blind), Some(0.5));
        // One of three mode-0 episodes wrong: recalls 2/3 and 1.
        let mixed = vec![vec![down.clone(), up.clone()], vec![down.clone(), up.clone()], vec![up.clone(), down.clone()], vec![down.clone(), up.clone()]];
        assert_abs_diff_eq!(mode_alignment(&skewed_refs, &mixed).unwrap(), 0.5 * (2.0 / 3.0 + 1.0), epsilon = 1e-12);
        let mut unlabeled = eps.clone();
        unlabeled[2].mode = None;
        let refs2: Vec<&Episode> = unlabeled.iter().collect();
        assert_eq!(mode_alignment(&refs2, &fut), None);
    }

    #[test]
    fn mode_alignment_matches_brute_force_on_random_labels() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let k = rng.gen_range(2..=3);
            let n = rng.gen_range(1..20);
            let eps: Vec<Episode> = (0..n).map(|_| labeled(rng.gen_range(0..2), rng.gen_range(-0.2..0.2))).collect();
            let fut: Vec<Vec<Vec<Point>>> = (0..n).map(|_| (0..k).map(|_| vec![[0.5, rng.gen_range(0.3..0.7)]; 8]).collect()).collect();
            let refs: Vec<&Episode> = eps.iter().collect();
            let got = mode_alignment(&refs, &fut);
            // Oracle: try every assignment of codes to modes by direct counting.
            let chosen: Vec<usize> = eps.iter().zip(&fut).map(|(e, f)| {
                let err = |c: usize| f[c].iter().zip(&e.future).map(|(a, b)| dist(*a, *b)).sum::<f64>();
                (0..k).min_by(|&a, &b| err(a).total_cmp(&err(b))).unwrap()
            }).collect();
            let mut labels: Vec<usize> = eps.iter().map(|e| e.mode.unwrap()).collect();
            labels.sort();
            labels.dedup();
            let mut best = 0.0f64;
            for code_map in 0..(1usize << k) {
                let assign: Vec<usize> = (0..k).map(|c| labels[((code_map >> c) & 1) % labels.len()]).collect();
                if labels.iter().all(|l| assign.contains(l)) {
                    let recall = |l: usize| {
                        let of: Vec<usize> = eps.iter().zip(&chosen).filter(|(e, _)| e.mode == Some(l)).map(|(_, &c)| c).collect();
                        of.iter().filter(|&&c| assign[c] == l).count() as f64 / of.len() as f64
                    };
                    best = best.max(labels.iter().map(|&l| recall(l)).sum::<f64>() / labels.len() as f64);
                }
            }
            assert_abs_diff_eq!(got.unwrap(), best, epsilon = 1e-12);
        }
    }

    #[test]
    fn mismatched_code_count_is_a_config_error() {
        let (scene, b) = batches(5);
        assert!(matches!(intention_sweep(&coded(2, 0), &b, 3, SocialFlags::default(), &scene), Err(Error::Config(_))));
    }

    #[test]
    fn csv_has_one_row_per_pair() {
        let (scene, b) = batches(5);
        let s = intention_sweep(&coded(3, 2), &b, 3, SocialFlags::default(), &scene).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sweep.csv");
        write_sweep_csv(&s, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("episode_id,code,dev_px,endpoint_x,endpoint_y"));
        assert_eq!(lines.count(), 3 * s.futures.len());
    }
}
