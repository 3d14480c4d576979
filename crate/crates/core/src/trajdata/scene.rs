use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajdata::Point;

/// Labeled entrance/exit rectangle, pixel coordinates `[x0, y0, x1, y1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitRegion {
    pub id: usize,
    pub rect: [f64; 4],
}

impl ExitRegion {
    pub fn center(&self) -> Point {
        [(self.rect[0] + self.rect[2]) / 2.0, (self.rect[1] + self.rect[3]) / 2.0]
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.rect[0] && p[0] <= self.rect[2] && p[1] >= self.rect[1] && p[1] <= self.rect[3]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width_px: u32,
    pub height_px: u32,
    pub exits: Vec<ExitRegion>,
    pub collision_thresh_px: f64,
    pub vicinity_cells: usize,
    pub vicinity_extent_px: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    width_px: u32,
    height_px: u32,
    collision_thresh_px: f64,
    #[serde(default = "default_cells")]
    vicinity_cells: usize,
    #[serde(default = "default_extent")]
    vicinity_extent_px: f64,
    #[serde(default)]
    exit: BTreeMap<String, [f64; 4]>,
}

fn default_cells() -> usize {
    4
}

fn default_extent() -> f64 {
    32.0
}

impl SceneSpec {
    pub fn new(width_px: u32, height_px: u32, exits: Vec<[f64; 4]>) -> Result<Self> {
        let scene = Self {
            width_px,
            height_px,
            exits: exits.into_iter().enumerate().map(|(i, rect)| ExitRegion { id: i + 1, rect }).collect(),
            collision_thresh_px: 5.0,
            vicinity_cells: default_cells(),
            vicinity_extent_px: default_extent(),
        };
        scene.validate()?;
        Ok(scene)
    }

    /// 720×480 scene with one exit at each short end.
    pub fn corridor() -> Self {
        Self::new(720, 480, vec![[0.0, 140.0, 24.0, 340.0], [696.0, 140.0, 720.0, 340.0]]).unwrap()
    }

    /// 720×480 scene with exits on all four sides.
    pub fn crossing() -> Self {
        Self::new(
            720,
            480,
            vec![
                [0.0, 180.0, 24.0, 300.0],
                [696.0, 180.0, 720.0, 300.0],
                [300.0, 0.0, 420.0, 24.0],
                [300.0, 456.0, 420.0, 480.0],
            ],
        )
        .unwrap()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width_px == 0 || self.height_px == 0 {
            return bad("scene dimensions must be positive".into());
        }
        if !(self.collision_thresh_px > 0.0) || !(self.vicinity_extent_px > 0.0) || self.vicinity_cells == 0 {
            return bad("collision threshold, vicinity extent and cell count must be positive".into());
        }
        if self.collision_thresh_px >= self.vicinity_extent_px {
            return bad("collision threshold must be below the vicinity extent".into());
        }
        let (w, h) = (self.width_px as f64, self.height_px as f64);
        for (k, e) in self.exits.iter().enumerate() {
            let [x0, y0, x1, y1] = e.rect;
            if e.id != k + 1 {
                return bad(format!("exit ids must run 1..E, found {}", e.id));
            }
            if !(x0 <= x1 && y0 <= y1 && x0 >= 0.0 && y0 >= 0.0 && x1 <= w && y1 <= h) {
                return bad(format!("exit {} lies outside the scene", e.id));
            }
            if self.exits[..k].iter().any(|o| o.rect == e.rect) {
                return bad(format!("exit {} duplicates another exit", e.id));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: SceneFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut exits = Vec::with_capacity(file.exit.len());
        for (key, rect) in file.exit {
            let id: usize = key.parse().map_err(|_| Error::Config(format!("exit key `{key}` is not an integer")))?;
            exits.push(ExitRegion { id, rect });
        }
        exits.sort_by_key(|e| e.id);
        let scene = Self {
            width_px: file.width_px,
            height_px: file.height_px,
            exits,
            collision_thresh_px: file.collision_thresh_px,
            vicinity_cells: file.vicinity_cells,
            vicinity_extent_px: file.vicinity_extent_px,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml(&self) -> String {
        let file = SceneFile {
            width_px: self.width_px,
            height_px: self.height_px,
            collision_thresh_px: self.collision_thresh_px,
            vicinity_cells: self.vicinity_cells,
            vicinity_extent_px: self.vicinity_extent_px,
            exit: self.exits.iter().map(|e| (e.id.to_string(), e.rect)).collect(),
        };
        toml::to_string(&file).expect("scene serializes")
    }

    pub fn exit(&self, id: usize) -> Option<&ExitRegion> {
        self.exits.get(id.checked_sub(1)?)
    }

    pub fn normalize(&self, p: Point) -> Point {
        [p[0] / self.width_px as f64, p[1] / self.height_px as f64]
    }

    pub fn denormalize(&self, p: Point) -> Point {
        [p[0] * self.width_px as f64, p[1] * self.height_px as f64]
    }

    pub fn nearest_exit(&self, p_px: Point) -> Option<&ExitRegion> {
        self.exits.iter().min_by(|a, b| {
            let da = super::dist(a.center(), p_px);
            let db = super::dist(b.center(), p_px);
            da.total_cmp(&db)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let scene = SceneSpec::crossing();
        let back = SceneSpec::from_toml(&scene.to_toml()).unwrap();
        assert_eq!(scene, back);
    }

    #[test]
    fn parses_dotted_exit_keys() {
        let text = "width_px = 720\nheight_px = 480\ncollision_thresh_px = 5.0\nexit.1 = [0, 0, 10, 10]\nexit.2 = [700, 0, 720, 10]\n";
        let scene = SceneSpec::from_toml(text).unwrap();
        assert_eq!(scene.exits.len(), 2);
        assert_eq!(scene.exits[1].rect, [700.0, 0.0, 720.0, 10.0]);
        assert_eq!(scene.vicinity_cells, 4);
    }

    #[test]
    fn rejects_bad_scenes() {
        let base = "width_px = 720\nheight_px = 480\n";
        assert!(SceneSpec::from_toml(&format!("{base}collision_thresh_px = 40.0\n")).is_err());
        assert!(SceneSpec::from_toml(&format!("{base}collision_thresh_px = 5.0\nexit.1 = [0,0,800,10]\n")).is_err());
        assert!(SceneSpec::from_toml(&format!(
            "{base}collision_thresh_px = 5.0\nexit.1 = [0,0,8,10]\nexit.2 = [0,0,8,10]\n"
        ))
        .is_err());
        assert!(SceneSpec::from_toml(&format!("{base}collision_thresh_px = 5.0\nbogus = 1\n")).is_err());
    }

    #[test]
    fn normalization_round_trip() {
        let scene = SceneSpec::corridor();
        for p in [[0.0, 0.0], [720.0, 480.0], [123.456, 78.9]] {
            let q = scene.denormalize(scene.normalize(p));
            assert!((q[0] - p[0]).abs() < 1e-9 && (q[1] - p[1]).abs() < 1e-9);
        }
    }
}
