use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::{AgentPose, Scene, Vec2};
use crate::error::{Error, Result};

/// Side of a wall cell struck by a ray, named by the outward normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Face {
    West = 0,
    East = 1,
    South = 2,
    North = 3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub distance: f64,
    pub color: [f64; 3],
    /// `None` when the ray reached the far clip without hitting a wall.
    pub cell: Option<(i64, i64)>,
    pub face: Option<Face>,
}

/// Strip geometry shared by the renderer and the learned field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub fov: f64,
    pub far: f64,
}

impl Camera {
    pub fn new(width: usize, fov: f64, far: f64) -> Self {
        Camera { width, fov, far }
    }

    /// Default 90 degree strip with the far clip at the scene diagonal.
    pub fn for_scene(scene: &Scene, width: usize) -> Self {
        Camera { width, fov: FRAC_PI_2, far: scene.diagonal() }
    }

    pub fn angles(&self, theta: f64) -> Vec<f64> {
        ray_angles(theta, self.width, self.fov)
    }
}

/// One row of a panoramic RGB-D image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationStrip {
    pub fov: f64,
    pub far: f64,
    pub rgb: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

impl ObservationStrip {
    pub fn width(&self) -> usize {
        self.depth.len()
    }

    /// Channel-major `[3, W]` color values.
    pub fn rgb_channels(&self) -> Vec<f64> {
        let w = self.width();
        let mut out = vec![0.0; 3 * w];
        for (i, px) in self.rgb.iter().enumerate() {
            for ch in 0..3 {
                out[ch * w + i] = px[ch];
            }
        }
        out
    }
}

/// Ray headings spread evenly over `[theta - fov/2, theta + fov/2]`,
/// column 0 at the low end. A single column looks straight ahead.
pub fn ray_angles(theta: f64, width: usize, fov: f64) -> Vec<f64> {
    if width == 1 {
        return vec![theta];
    }
    let start = theta - fov / 2.0;
    (0..width).map(|i| start + fov * i as f64 / (width - 1) as f64).collect()
}

/// Exact first wall intersection by grid traversal.
pub fn cast_ray(scene: &Scene, origin: Vec2, direction: Vec2, far: f64) -> Result<RayHit> {
    if !scene.is_free_point(origin) {
        return Err(Error::Contract(format!("ray origin ({}, {}) is not in free space", origin.x, origin.y)));
    }
    let norm = direction.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::Contract("ray direction must be a non-zero finite vector".into()));
    }
    let d = direction * (1.0 / norm);
    let (mut cx, mut cy) = scene.cell_of(origin);
    let step_x: i64 = if d.x > 0.0 { 1 } else { -1 };
    let step_y: i64 = if d.y > 0.0 { 1 } else { -1 };
    let axis = |p: f64, cell: i64, dir: f64| -> (f64, f64) {
        if dir == 0.0 {
            (f64::INFINITY, f64::INFINITY)
        } else if dir > 0.0 {
            ((cell as f64 + 1.0 - p) / dir, 1.0 / dir)
        } else {
            ((cell as f64 - p) / dir, -1.0 / dir)
        }
    };
    let (mut t_max_x, dt_x) = axis(origin.x, cx, d.x);
    let (mut t_max_y, dt_y) = axis(origin.y, cy, d.y);
    loop {
        let (t, face) = if t_max_x < t_max_y {
            cx += step_x;
            let t = t_max_x;
            t_max_x += dt_x;
            (t, if step_x > 0 { Face::West } else { Face::East })
        } else {
            cy += step_y;
            let t = t_max_y;
            t_max_y += dt_y;
            (t, if step_y > 0 { Face::South } else { Face::North })
        };
        if t > far {
            return Ok(RayHit { distance: far, color: [0.0; 3], cell: None, face: None });
        }
        if scene.is_wall(cx, cy) {
            return Ok(RayHit {
                distance: t.max(1e-12),
                color: scene.wall_color(cx, cy, face),
                cell: Some((cx, cy)),
                face: Some(face),
            });
        }
    }
}

pub fn render_observation(scene: &Scene, pose: &AgentPose, camera: &Camera) -> Result<ObservationStrip> {
    if camera.width == 0 {
        return Err(Error::Contract("observation width must be at least 1".into()));
    }
    let mut rgb = Vec::with_capacity(camera.width);
    let mut depth = Vec::with_capacity(camera.width);
    for angle in camera.angles(pose.theta) {
        let hit = cast_ray(scene, pose.position, Vec2::from_angle(angle), camera.far)?;
        rgb.push(hit.color);
        depth.push(hit.distance);
    }
    Ok(ObservationStrip { fov: camera.fov, far: camera.far, rgb, depth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor() -> Scene {
        Scene::parse("3 6 0\n######\n#....#\n######\n").unwrap()
    }

    #[test]
    fn distance_to_facing_wall() {
        let s = Scene::parse("5 5 0\n#####\n#...#\n#...#\n#...#\n#####\n").unwrap();
        let hit = cast_ray(&s, Vec2::new(1.5, 1.5), Vec2::new(1.0, 0.0), 100.0).unwrap();
        assert!((hit.distance - 2.5).abs() < 1e-12);
        assert_eq!(hit.face, Some(Face::West));
        assert_eq!(hit.cell, Some((4, 1)));
        let s = Scene::parse("3 5 0\n#####\n#...#\n#####\n").unwrap();
        let hit = cast_ray(&s, Vec2::new(1.5, 1.5), Vec2::new(1.0, 0.0), 100.0).unwrap();
        assert!((hit.distance - 2.5).abs() < 1e-12);
    }

    #[test]
    fn symmetric_corridor() {
        let s = corridor();
        let o = Vec2::new(3.0, 1.5);
        let a = cast_ray(&s, o, Vec2::new(1.0, 0.0), 100.0).unwrap();
        let b = cast_ray(&s, o, Vec2::new(-1.0, 0.0), 100.0).unwrap();
        assert!((a.distance - b.distance).abs() < 1e-12);
        assert!((a.distance - 2.0).abs() < 1e-12);
    }

    #[test]
    fn origin_in_wall_is_rejected() {
        let s = corridor();
        assert!(cast_ray(&s, Vec2::new(0.5, 0.5), Vec2::new(1.0, 0.0), 10.0).is_err());
    }

    #[test]
    fn far_clip_returns_background() {
        let s = corridor();
        let hit = cast_ray(&s, Vec2::new(1.5, 1.5), Vec2::new(1.0, 0.0), 1.0).unwrap();
        assert_eq!(hit.distance, 1.0);
        assert_eq!(hit.color, [0.0; 3]);
    }

    #[test]
    fn strip_shape_and_center_ray() {
        let s = Scene::generate(4, &Default::default()).unwrap();
        let (c, r) = s.free_cells()[0];
        let pose = AgentPose::new(c as f64 + 0.5, r as f64 + 0.5, 0.7);
        let cam = Camera::for_scene(&s, 64);
        let strip = render_observation(&s, &pose, &cam).unwrap();
        assert_eq!(strip.rgb.len(), 64);
        assert_eq!(strip.depth.len(), 64);
        let cam = Camera::for_scene(&s, 9);
        let strip = render_observation(&s, &pose, &cam).unwrap();
        let center = cast_ray(&s, pose.position, Vec2::from_angle(pose.theta), cam.far).unwrap();
        assert_eq!(strip.depth[4], center.distance);
        assert_eq!(strip.rgb[4], center.color);
        assert!(strip.depth.iter().all(|&d| d > 0.0 && d <= cam.far));
        assert!(strip.rgb.iter().flatten().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn uniform_room_renders_one_color() {
        let s = Scene::parse("5 5 0\n#####\n#...#\n#...#\n#...#\n#####\n")
            .unwrap()
            .with_uniform_color([0.2, 0.4, 0.6]);
        let strip = render_observation(&s, &AgentPose::new(2.5, 2.5, 1.0), &Camera::for_scene(&s, 32)).unwrap();
        assert!(strip.rgb.iter().all(|&c| c == [0.2, 0.4, 0.6]));
    }

    #[test]
    fn angles_span_fov() {
        let a = ray_angles(1.0, 5, 2.0);
        assert_eq!(a.len(), 5);
        assert!((a[0] - 0.0).abs() < 1e-12 && (a[4] - 2.0).abs() < 1e-12 && (a[2] - 1.0).abs() < 1e-12);
    }
}
