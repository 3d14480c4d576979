use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::trajdata::{Point, SceneSpec};

/// Tolerated overshoot of raw pixel coordinates beyond the scene bounds.
pub const BOUNDS_SLACK_PX: f64 = 2.0;

/// A tracked pedestrian path in normalized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    pub id: u64,
    pub start_frame: i64,
    pub points: Vec<Point>,
    /// Known only for synthetic data.
    pub goal_exit: Option<usize>,
    /// Behavior mode label of synthetic agents (0 straight, 1 detour).
    pub mode: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct Row {
    id: u64,
    frame: i64,
    x: f64,
    y: f64,
    #[serde(default)]
    goal_exit: Option<usize>,
    #[serde(default)]
    mode: Option<usize>,
}

pub fn load_tracklets(path: &Path, scene: &SceneSpec) -> Result<Vec<Tracklet>> {
    let file = std::fs::File::open(path)?;
    read_tracklets(file, scene)
}

/// Parses the `id,frame,x,y[,goal_exit][,mode]` CSV, grouping rows by id in order
/// of first appearance.
pub fn read_tracklets<R: Read>(reader: R, scene: &SceneSpec) -> Result<Vec<Tracklet>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?.clone();
    for required in ["id", "frame", "x", "y"] {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Parse { line: 1, msg: format!("missing column `{required}`") });
        }
    }
    let (w, h) = (scene.width_px as f64, scene.height_px as f64);
    let mut order: Vec<Tracklet> = Vec::new();
    let mut slot: HashMap<u64, (usize, i64)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: Row = rec.deserialize(Some(&headers)).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        if !row.x.is_finite() || !row.y.is_finite() {
            return Err(Error::Parse { line, msg: "non-finite coordinate".into() });
        }
        if row.x < -BOUNDS_SLACK_PX
            || row.y < -BOUNDS_SLACK_PX
            || row.x > w + BOUNDS_SLACK_PX
            || row.y > h + BOUNDS_SLACK_PX
        {
            return Err(Error::Parse { line, msg: format!("point ({}, {}) outside the scene", row.x, row.y) });
        }
        let p = [(row.x / w).clamp(0.0, 1.0), (row.y / h).clamp(0.0, 1.0)];
        match slot.get_mut(&row.id) {
            Some((idx, last)) => {
                if row.frame != *last + 1 {
                    return Err(Error::Parse {
                        line,
                        msg: format!("id {} frame {} does not follow frame {}", row.id, row.frame, last),
                    });
                }
                *last = row.frame;
                order[*idx].points.push(p);
            }
            None => {
                slot.insert(row.id, (order.len(), row.frame));
                order.push(Tracklet {
                    id: row.id,
                    start_frame: row.frame,
                    points: vec![p],
                    goal_exit: row.goal_exit,
                    mode: row.mode,
                });
            }
        }
    }
    if order.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(order)
}

/// Writes pixel-space rows; the `goal_exit` and `mode` columns are emitted
/// when any tracklet carries the label.
pub fn write_tracklets<W: Write>(out: W, tracklets: &[Tracklet], scene: &SceneSpec) -> Result<()> {
    let with_goal = tracklets.iter().any(|t| t.goal_exit.is_some());
    let with_mode = tracklets.iter().any(|t| t.mode.is_some());
    let label = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
    let mut out = std::io::BufWriter::new(out);
    write!(out, "id,frame,x,y")?;
    if with_goal {
        write!(out, ",goal_exit")?;
    }
    if with_mode {
        write!(out, ",mode")?;
    }
    writeln!(out)?;
    for t in tracklets {
        for (k, p) in t.points.iter().enumerate() {
            let q = scene.denormalize(*p);
            write!(out, "{},{},{},{}", t.id, t.start_frame + k as i64, q[0], q[1])?;
            if with_goal {
                write!(out, ",{}", label(t.goal_exit))?;
            }
            if with_mode {
                write!(out, ",{}", label(t.mode))?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_tracklets(path: &Path, tracklets: &[Tracklet], scene: &SceneSpec) -> Result<()> {
    write_tracklets(std::fs::File::create(path)?, tracklets, scene)
}

/// Keeps every `round(src/dst)`-th point, starting with the first.
pub fn resample(t: &Tracklet, src_fps: f64, dst_fps: f64) -> Result<Tracklet> {
    if !(dst_fps > 0.0) || src_fps < dst_fps {
        return Err(Error::Argument(format!("cannot resample {src_fps} fps to {dst_fps} fps")));
    }
    // Ties round to even: 25 → 2 fps uses stride 12.
    let stride = (src_fps / dst_fps).round_ties_even() as usize;
    let points: Vec<Point> = t.points.iter().step_by(stride).copied().collect();
    if points.len() < 2 {
        return Err(Error::DegenerateTracklet { id: t.id, len: points.len() });
    }
    Ok(Tracklet {
        points,
        start_frame: (t.start_frame as f64 / stride as f64).round_ties_even() as i64,
        ..t.clone()
    })
}
