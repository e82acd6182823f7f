//! Image and CSV dumps: uncertainty and saliency strips, top-down maps and
//! trajectories.

use std::fmt::Write as _;

use crate::eval::{EpisodeResult, StepDump};
use crate::world::{AgentPose, Scene, StepRecord};

/// An 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Self {
        Image { width, height, pixels: vec![fill; width * height] }
    }

    pub fn set(&mut self, x: usize, y: usize, c: [u8; 3]) {
        if x < self.width && y < self.height {
            self.pixels[y * self.width + x] = c;
        }
    }

    /// Binary portable pixmap.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Maps [0, 1] onto a dark-blue to yellow ramp.
pub fn heat(v: f64) -> [u8; 3] {
    let t = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    [to_byte(t), to_byte(0.15 + 0.7 * t), to_byte(0.5 * (1.0 - t))]
}

fn normalized(rows: &[Vec<f64>]) -> impl Fn(f64) -> f64 {
    let (lo, hi) = rows
        .iter()
        .flatten()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    move |v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }
}

/// One image row per entry of `rows`, colored by a heat ramp normalized
/// over all values; each row is repeated `row_height` times.
pub fn heat_rows(rows: &[Vec<f64>], row_height: usize) -> Image {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let rh = row_height.max(1);
    let mut img = Image::new(width, rows.len() * rh, [0, 0, 0]);
    let norm = normalized(rows);
    for (r, row) in rows.iter().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            for dy in 0..rh {
                img.set(x, r * rh + dy, heat(norm(v)));
            }
        }
    }
    img
}

pub fn rgb_strip(rgb: &[[f64; 3]], height: usize) -> Image {
    let mut img = Image::new(rgb.len(), height.max(1), [0, 0, 0]);
    for (x, c) in rgb.iter().enumerate() {
        for y in 0..img.height {
            img.set(x, y, [to_byte(c[0]), to_byte(c[1]), to_byte(c[2])]);
        }
    }
    img
}

/// Uncertainty and saliency over an episode, one row per step.
pub fn dump_images(dumps: &[StepDump], row_height: usize) -> (Image, Image) {
    let unc: Vec<Vec<f64>> = dumps.iter().map(|d| d.uncertainty.clone()).collect();
    let sal: Vec<Vec<f64>> = dumps.iter().map(|d| d.saliency.clone()).collect();
    (heat_rows(&unc, row_height), heat_rows(&sal, row_height))
}

/// Top-down view: walls dark, free cells light, the path in red, the start
/// green and `target` blue.
pub fn scene_map(scene: &Scene, poses: &[AgentPose], target: Option<crate::world::Vec2>, scale: usize) -> Image {
    let s = scale.max(2);
    let (w, h) = (scene.width(), scene.height());
    let mut img = Image::new(w * s, h * s, [30, 30, 30]);
    for r in 0..h {
        for c in 0..w {
            if !scene.is_wall(c as i64, r as i64) {
                for dy in 0..s {
                    for dx in 0..s {
                        // row 0 at the bottom of the image
                        img.set(c * s + dx, (h - 1 - r) * s + dy, [235, 235, 235]);
                    }
                }
            }
        }
    }
    let mut mark = |x: f64, y: f64, c: [u8; 3]| {
        let px = (x * s as f64).floor();
        let py = ((h as f64 - y) * s as f64).floor();
        if px >= 0.0 && py >= 0.0 {
            img.set(px as usize, py as usize, c);
        }
    };
    for p in poses {
        mark(p.position.x, p.position.y, [200, 30, 30]);
    }
    if let Some(first) = poses.first() {
        mark(first.position.x, first.position.y, [20, 170, 20]);
    }
    if let Some(t) = target {
        mark(t.x, t.y, [30, 60, 220]);
    }
    img
}

pub fn trajectory_csv(records: &[StepRecord], final_pose: Option<&AgentPose>) -> String {
    let mut s = String::from("step,x,y,theta,action\n");
    for r in records {
        let _ = writeln!(s, "{},{:.6},{:.6},{:.6},{}", r.step, r.pose.position.x, r.pose.position.y, r.pose.theta, r.action.name());
    }
    if let Some(p) = final_pose {
        let _ = writeln!(s, "{},{:.6},{:.6},{:.6},", records.len(), p.position.x, p.position.y, p.theta);
    }
    s
}

/// Per-step field loss as `step,loss`; steps without field updates are
/// skipped.
pub fn field_loss_csv(dumps: &[StepDump]) -> String {
    let mut s = String::from("step,loss\n");
    for d in dumps {
        if let Some(l) = d.field_loss {
            let _ = writeln!(s, "{},{:.9}", d.step, l);
        }
    }
    s
}

pub fn episode_trajectory_csv(result: &EpisodeResult) -> String {
    trajectory_csv(&result.trajectory, Some(&result.final_pose))
}
