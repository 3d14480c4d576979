//! Synthetic expert demonstrations with known goals.
//!
//! Agents walk from a spawn exit toward a goal exit center at a fixed
//! preferred speed. When two agents' constant-velocity extrapolations come
//! within the collision threshold inside one step, both turn right in 15°
//! increments; a final hold pass stops any pair whose next positions would
//! still be too close.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};
use crate::trajdata::{dist, Point, SceneSpec, Tracklet};

const TURN_STEP_DEG: f64 = 15.0;
const MAX_TURNS: usize = 6;
const GOAL_TRIES: usize = 10;
/// Consecutive motionless steps after which a walker is dropped.
const MAX_HELD: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthParams {
    /// Preferred speed range, pixels per 0.5 s step.
    pub speed_min_px: f64,
    pub speed_max_px: f64,
    /// Mean spacing of Poisson spawn times, in steps.
    pub spawn_mean_steps: f64,
    /// Std of Gaussian noise added to recorded positions (tracker jitter).
    pub jitter_px: f64,
    /// Allowed `(spawn exit, goal exit)` pairs; empty means any distinct pair.
    pub routes: Vec<(usize, usize)>,
    /// Probability that an agent detours through a waypoint.
    pub detour_prob: f64,
    /// Waypoint offset to the walker's right of the straight path.
    pub detour_lateral_px: f64,
    /// Share of the straight path at which the waypoint sits.
    pub detour_at: f64,
    /// Share of the straight path a detouring walker covers before turning
    /// toward its waypoint; 0 turns at once.
    pub detour_onset: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            speed_min_px: 8.0,
            speed_max_px: 16.0,
            spawn_mean_steps: 2.0,
            jitter_px: 0.0,
            routes: Vec::new(),
            detour_prob: 0.0,
            detour_lateral_px: 120.0,
            detour_at: 0.5,
            detour_onset: 0.0,
        }
    }
}

struct Plan {
    id: u64,
    spawn_step: i64,
    spawn: Point,
    goal: usize,
    speed: f64,
    waypoint: Option<Point>,
}

struct Walker {
    plan: usize,
    pos: Point,
    start_frame: i64,
    points: Vec<Point>,
    at_waypoint: bool,
    held_steps: usize,
}

fn rotate(v: Point, deg: f64) -> Point {
    let (s, c) = deg.to_radians().sin_cos();
    [v[0] * c - v[1] * s, v[0] * s + v[1] * c]
}

fn sample_in<R: Rng>(rng: &mut R, rect: [f64; 4]) -> Point {
    let x = if rect[2] > rect[0] { rng.gen_range(rect[0]..rect[2]) } else { rect[0] };
    let y = if rect[3] > rect[1] { rng.gen_range(rect[1]..rect[3]) } else { rect[1] };
    [x, y]
}

/// Share of the way from `from` to `to` covered by `p`, along that line.
fn progress(from: Point, to: Point, p: Point) -> f64 {
    let d = [to[0] - from[0], to[1] - from[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    if dd <= 0.0 {
        return 1.0;
    }
    ((p[0] - from[0]) * d[0] + (p[1] - from[1]) * d[1]) / dd
}

/// Closest approach of two constant-velocity walkers within one step.
fn conflict(pa: Point, va: Point, pb: Point, vb: Point, thresh: f64) -> bool {
    let d = [pb[0] - pa[0], pb[1] - pa[1]];
    let w = [vb[0] - va[0], vb[1] - va[1]];
    let ww = w[0] * w[0] + w[1] * w[1];
    let t = if ww > 0.0 { (-(d[0] * w[0] + d[1] * w[1]) / ww).clamp(0.0, 1.0) } else { 0.0 };
    let c = [d[0] + w[0] * t, d[1] + w[1] * t];
    (c[0] * c[0] + c[1] * c[1]).sqrt() < thresh
}

fn plan_agents<R: Rng>(scene: &SceneSpec, n_agents: usize, params: &SynthParams, rng: &mut R) -> Vec<Plan> {
    let gaps = Exp::new(1.0 / params.spawn_mean_steps.max(1e-9)).expect("positive rate");
    let mut clock = 0.0;
    let mut plans = Vec::with_capacity(n_agents);
    let n_exits = scene.exits.len();
    for a in 0..n_agents {
        clock += gaps.sample(rng);
        let mut chosen = None;
        for _ in 0..GOAL_TRIES {
            let (from, to) = if params.routes.is_empty() {
                (rng.gen_range(1..=n_exits), rng.gen_range(1..=n_exits))
            } else {
                params.routes[rng.gen_range(0..params.routes.len())]
            };
            let spawn = sample_in(rng, scene.exits[from - 1].rect);
            if from != to && !scene.exits[to - 1].contains(spawn) {
                chosen = Some((spawn, to));
                break;
            }
        }
        let speed = rng.gen_range(params.speed_min_px..=params.speed_max_px);
        let detour = rng.gen_bool(params.detour_prob.clamp(0.0, 1.0));
        let Some((spawn, goal)) = chosen else { continue };
        let waypoint = detour.then(|| {
            let g = scene.exits[goal - 1].center();
            let f = params.detour_at;
            let mid = [spawn[0] + (g[0] - spawn[0]) * f, spawn[1] + (g[1] - spawn[1]) * f];
            let d = [g[0] - spawn[0], g[1] - spawn[1]];
            let n = (d[0] * d[0] + d[1] * d[1]).sqrt().max(1e-9);
            // Right-hand normal in image coordinates (y down).
            let right = [-d[1] / n, d[0] / n];
            let w = [mid[0] + right[0] * params.detour_lateral_px, mid[1] + right[1] * params.detour_lateral_px];
            [w[0].clamp(0.0, scene.width_px as f64), w[1].clamp(0.0, scene.height_px as f64)]
        });
        plans.push(Plan { id: a as u64 + 1, spawn_step: clock.floor() as i64, spawn, goal, speed, waypoint });
    }
    plans
}

/// Generates tracklets; a pure function of its arguments.
pub fn synth_generate(
    scene: &SceneSpec,
    n_agents: usize,
    duration_steps: usize,
    seed: u64,
    params: &SynthParams,
) -> Result<Vec<Tracklet>> {
    if n_agents == 0 {
        return Err(Error::Argument("n_agents must be at least 1".into()));
    }
    if scene.exits.len() < 2 {
        return Err(Error::Config("synthetic generation needs at least two exits".into()));
    }
    if !(params.speed_min_px > 0.0 && params.speed_min_px <= params.speed_max_px) {
        return Err(Error::Config("speed range must be positive and ordered".into()));
    }
    for &(a, b) in &params.routes {
        if scene.exit(a).is_none() || scene.exit(b).is_none() || a == b {
            return Err(Error::Config(format!("invalid route ({a}, {b})")));
        }
    }
    let mut rng = stream(seed, Stream::Synth);
    let plans = plan_agents(scene, n_agents, params, &mut rng);
    let jitter = Normal::new(0.0, params.jitter_px.max(0.0)).expect("finite jitter");
    let thresh = scene.collision_thresh_px;
    let (w, h) = (scene.width_px as f64, scene.height_px as f64);

    let mut pending = 0usize;
    let mut active: Vec<Walker> = Vec::new();
    let mut done: Vec<Walker> = Vec::new();
    let record = |walker: &mut Walker, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut p = walker.pos;
        if params.jitter_px > 0.0 {
            p[0] += jitter.sample(rng);
            p[1] += jitter.sample(rng);
        }
        walker.points.push([p[0].clamp(0.0, w), p[1].clamp(0.0, h)]);
    };

    for step in 0..duration_steps as i64 {
        // Spawn in plan order; a blocked spawn waits for the next step.
        while pending < plans.len() && plans[pending].spawn_step <= step {
            let p = &plans[pending];
            if active.iter().any(|a| dist(a.pos, p.spawn) < thresh) {
                break;
            }
            active.push(Walker { plan: pending, pos: p.spawn, start_frame: step, points: Vec::new(), at_waypoint: false, held_steps: 0 });
            pending += 1;
        }
        for a in active.iter_mut() {
            record(a, &mut rng);
        }

        let mut vel: Vec<Point> = active
            .iter_mut()
            .map(|a| {
                let plan = &plans[a.plan];
                let goal = scene.exits[plan.goal - 1].center();
                let target = match plan.waypoint {
                    Some(_) if !a.at_waypoint && progress(plan.spawn, goal, a.pos) < params.detour_onset => goal,
                    Some(wp) if !a.at_waypoint => {
                        if dist(a.pos, wp) <= plan.speed {
                            a.at_waypoint = true;
                        }
                        wp
                    }
                    _ => goal,
                };
                let d = [target[0] - a.pos[0], target[1] - a.pos[1]];
                let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if n <= 1e-12 {
                    [0.0, 0.0]
                } else {
                    let s = plan.speed.min(n) / n;
                    [d[0] * s, d[1] * s]
                }
            })
            .collect();

        // Sequential choice: each walker takes the first heading, alternating
        // sides around its preferred one, that is clear of walkers already
        // placed and of the preferred motion of those still to come.
        let preferred = vel.clone();
        for i in 0..active.len() {
            let clear = |v: Point| {
                (0..active.len()).filter(|&j| j != i).all(|j| {
                    let vj = if j < i { vel[j] } else { preferred[j] };
                    !conflict(active[i].pos, v, active[j].pos, vj, thresh)
                })
            };
            let candidates = (0..=MAX_TURNS).flat_map(|t| {
                let deg = TURN_STEP_DEG * t as f64;
                [deg, -deg].into_iter().take(if t == 0 { 1 } else { 2 })
            });
            vel[i] = candidates.map(|deg| rotate(preferred[i], deg)).find(|&v| clear(v)).unwrap_or([0.0, 0.0]);
        }

        let mut next: Vec<Point> = active
            .iter()
            .zip(&vel)
            .map(|(a, v)| [(a.pos[0] + v[0]).clamp(0.0, w), (a.pos[1] + v[1]).clamp(0.0, h)])
            .collect();
        let mut held = vec![false; active.len()];
        loop {
            let mut changed = false;
            for i in 0..active.len() {
                for j in i + 1..active.len() {
                    if dist(next[i], next[j]) < thresh {
                        for k in [i, j] {
                            if !held[k] {
                                held[k] = true;
                                next[k] = active[k].pos;
                                changed = true;
                            }
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let mut k = 0;
        let mut idx = 0;
        while k < active.len() {
            let moved = next[idx] != active[k].pos;
            active[k].pos = next[idx];
            active[k].held_steps = if moved { 0 } else { active[k].held_steps + 1 };
            idx += 1;
            let plan = &plans[active[k].plan];
            let arrived = (plan.waypoint.is_none() || active[k].at_waypoint)
                && scene.exits[plan.goal - 1].contains(active[k].pos);
            if arrived {
                let mut a = active.remove(k);
                record(&mut a, &mut rng);
                done.push(a);
            } else if active[k].held_steps >= MAX_HELD {
                // A walker boxed in for this long leaves the tracked area.
                done.push(active.remove(k));
            } else {
                k += 1;
            }
        }
    }
    done.extend(active);
    done.sort_by_key(|a| a.plan);

    let out: Vec<Tracklet> = done
        .into_iter()
        .filter(|a| a.points.len() >= 2)
        .map(|a| {
            let plan = &plans[a.plan];
            Tracklet {
                id: plan.id,
                start_frame: a.start_frame,
                points: a.points.iter().map(|&p| scene.normalize(p)).collect(),
                goal_exit: Some(plan.goal),
                mode: Some(usize::from(plan.waypoint.is_some())),
            }
        })
        .collect();
    debug_assert!(out.iter().flat_map(|t| &t.points).all(|p| (0.0..=1.0).contains(&p[0]) && (0.0..=1.0).contains(&p[1])));
    Ok(out)
}

/// Ready-made synthetic datasets used by the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Two opposing flows through a corridor with tracker jitter.
    Corridor,
    /// Two orthogonal one-way flows crossing at the center.
    Crossing,
    /// Corridor flows where a labeled share of walkers detours.
    TwoMode,
}

impl Preset {
    pub fn scene(self) -> SceneSpec {
        match self {
            Preset::Corridor | Preset::TwoMode => SceneSpec::corridor(),
            Preset::Crossing => SceneSpec::crossing(),
        }
    }

    pub fn params(self) -> SynthParams {
        match self {
            Preset::Corridor => SynthParams { jitter_px: 2.0, ..SynthParams::default() },
            Preset::Crossing => SynthParams { routes: vec![(1, 2), (3, 4)], spawn_mean_steps: 1.0, ..SynthParams::default() },
            Preset::TwoMode => SynthParams { routes: vec![(1, 2)], detour_prob: 0.5, detour_lateral_px: 120.0, detour_onset: 0.2, detour_at: 0.75, ..SynthParams::default() },
        }
    }

    /// Generates `n` tracklets (agents that spawn too late are not emitted).
    pub fn generate(self, n: usize, seed: u64) -> Result<(SceneSpec, Vec<Tracklet>)> {
        let scene = self.scene();
        let params = self.params();
        let steps = (params.spawn_mean_steps * n as f64 * 1.5) as usize + 400;
        let ts = synth_generate(&scene, n, steps, seed, &params)?;
        Ok((scene, ts))
    }
}
