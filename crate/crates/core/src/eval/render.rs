use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trajdata::{Episode, Point, SceneSpec};

/// Fixed colors of the rendered overlay.
pub struct Palette;

impl Palette {
    pub const CODES: [&'static str; 3] = ["#ff0000", "#00ff00", "#0000ff"];
    pub const OBSERVED: &'static str = "#ffff00";
    pub const GROUND_TRUTH: &'static str = "#ffffff";
    pub const BACKGROUND: &'static str = "#1a1a1a";
    pub const EXIT: &'static str = "#808080";
}

fn polyline(out: &mut String, scene: &SceneSpec, pts: &[Point], color: &str) {
    let coords: Vec<String> = pts
        .iter()
        .map(|&p| {
            let q = scene.denormalize(p);
            format!("{:.2},{:.2}", q[0], q[1])
        })
        .collect();
    let _ = writeln!(
        out,
        "  <polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
        coords.join(" ")
    );
}

/// SVG of the scene, its exits, and per episode the observed path, the ground
/// truth and one generated future per code (`futures[episode][code]`).
pub fn render_scene(scene: &SceneSpec, episodes: &[Episode], futures: &[Vec<Vec<Point>>]) -> Result<String> {
    if futures.len() != episodes.len() {
        return Err(Error::Shape(format!("{} future sets for {} episodes", futures.len(), episodes.len())));
    }
    if futures.iter().any(|f| f.len() > Palette::CODES.len()) {
        return Err(Error::Config("at most 3 codes can be rendered".into()));
    }
    let (w, h) = (scene.width_px, scene.height_px);
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">"
    );
    let _ = writeln!(out, "  <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"{}\"/>", Palette::BACKGROUND);
    for e in &scene.exits {
        let [x0, y0, x1, y1] = e.rect;
        let _ = writeln!(
            out,
            "  <rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
            x1 - x0,
            y1 - y0,
            Palette::EXIT
        );
    }
    for (ep, fut) in episodes.iter().zip(futures) {
        polyline(&mut out, scene, &ep.observed, Palette::OBSERVED);
        let anchor = ep.last_observed();
        let with_anchor = |f: &[Point]| std::iter::once(anchor).chain(f.iter().copied()).collect::<Vec<_>>();
        polyline(&mut out, scene, &with_anchor(&ep.future), Palette::GROUND_TRUTH);
        for (c, f) in fut.iter().enumerate() {
            polyline(&mut out, scene, &with_anchor(f), Palette::CODES[c]);
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn write_render(scene: &SceneSpec, episodes: &[Episode], futures: &[Vec<Vec<Point>>], path: &Path) -> Result<()> {
    std::fs::write(path, render_scene(scene, episodes, futures)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajdata::Split;

    fn ep() -> Episode {
        let pts: Vec<Point> = (0..17).map(|k| [0.1 + 0.02 * k as f64, 0.5]).collect();
        Episode {
            tracklet_id: 0,
            t0: 0,
            observed: pts[..9].to_vec(),
            future: pts[9..].to_vec(),
            split: Split::Test,
            goal_exit: Some(1),
            mode: None,
        }
    }

    #[test]
    fn empty_overlay_has_no_polylines() {
        let svg = render_scene(&SceneSpec::corridor(), &[], &[]).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 0);
        assert_eq!(svg.matches("<rect").count(), 3);
    }

    #[test]
    fn one_episode_two_codes_gives_four_polylines() {
        let e = ep();
        let futs = vec![vec![e.future.clone(), e.future.iter().map(|p| [p[0], p[1] + 0.05]).collect()]];
        let svg = render_scene(&SceneSpec::corridor(), &[e], &futs).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 4);
        for color in [Palette::OBSERVED, Palette::GROUND_TRUTH, Palette::CODES[0], Palette::CODES[1]] {
            assert!(svg.contains(color));
        }
    }

    #[test]
    fn byte_identical_output() {
        let e = ep();
        let futs = vec![vec![e.future.clone()]];
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
        write_render(&SceneSpec::corridor(), std::slice::from_ref(&e), &futs, &a).unwrap();
        write_render(&SceneSpec::corridor(), &[e], &futs, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        assert!(matches!(
            write_render(&SceneSpec::corridor(), &[], &[], Path::new("/nonexistent/dir/x.svg")),
            Err(Error::Io(_))
        ));
    }
}
