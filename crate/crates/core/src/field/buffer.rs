use std::collections::VecDeque;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::world::{AgentPose, Camera, ObservationStrip, Vec2};

/// One observed ray with its ground-truth color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayRecord {
    pub origin: Vec2,
    /// Unit direction.
    pub direction: Vec2,
    pub color: [f64; 3],
}

impl RayRecord {
    pub fn angle(&self) -> f64 {
        self.direction.angle()
    }
}

/// Bounded ray store; the oldest rays are evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    rays: VecDeque<RayRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity: capacity.max(1), rays: VecDeque::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }

    pub fn push(&mut self, ray: RayRecord) {
        if self.rays.len() == self.capacity {
            self.rays.pop_front();
        }
        self.rays.push_back(ray);
    }

    pub fn get(&self, i: usize) -> Option<&RayRecord> {
        self.rays.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &RayRecord> {
        self.rays.iter()
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, count: usize, rng: &mut Rng) -> Result<Vec<RayRecord>> {
        if self.rays.is_empty() {
            return Err(Error::Contract("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..count).map(|_| self.rays[rng.gen_range(0..self.rays.len())]).collect())
    }
}

/// Stores one ray per strip column, cast from the pose.
pub fn add_observation(
    buffer: &mut ReplayBuffer,
    pose: &AgentPose,
    strip: &ObservationStrip,
    camera: &Camera,
) -> Result<()> {
    if strip.width() != camera.width {
        return Err(Error::Contract(format!(
            "strip has {} columns, camera expects {}",
            strip.width(),
            camera.width
        )));
    }
    for (angle, &color) in camera.angles(pose.theta).into_iter().zip(&strip.rgb) {
        buffer.push(RayRecord { origin: pose.position, direction: Vec2::from_angle(angle), color });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::world::{render_observation, Scene};

    #[test]
    fn one_ray_per_column_with_eviction() {
        let scene = Scene::parse("5 5 0\n#####\n#...#\n#...#\n#...#\n#####\n").unwrap();
        let cam = Camera::for_scene(&scene, 64);
        let pose = AgentPose::new(2.5, 2.5, 1.0);
        let strip = render_observation(&scene, &pose, &cam).unwrap();
        let mut buf = ReplayBuffer::new(100);
        add_observation(&mut buf, &pose, &strip, &cam).unwrap();
        assert_eq!(buf.len(), 64);
        let first = *buf.get(0).unwrap();
        for r in buf.iter() {
            let off = crate::world::wrap_pi(r.angle() - pose.theta);
            assert!(off.abs() <= cam.fov / 2.0 + 1e-9);
            assert!((r.direction.norm() - 1.0).abs() < 1e-9);
        }
        let pose2 = AgentPose::new(1.5, 1.5, 0.0);
        let strip2 = render_observation(&scene, &pose2, &cam).unwrap();
        add_observation(&mut buf, &pose2, &strip2, &cam).unwrap();
        assert_eq!(buf.len(), 100);
        assert_eq!(buf.get(0).unwrap().origin, first.origin);
        let mut reference = ReplayBuffer::new(64);
        add_observation(&mut reference, &pose, &strip, &cam).unwrap();
        assert_eq!(buf.get(0), reference.get(28));

        // a full buffer drops exactly the oldest strip
        let mut full = ReplayBuffer::new(128);
        add_observation(&mut full, &pose, &strip, &cam).unwrap();
        add_observation(&mut full, &pose2, &strip2, &cam).unwrap();
        add_observation(&mut full, &pose, &strip, &cam).unwrap();
        assert_eq!(full.len(), 128);
        assert!(full.iter().take(64).all(|r| r.origin == pose2.position));
        assert!(full.iter().skip(64).all(|r| r.origin == pose.position));
        assert!(ReplayBuffer::new(4).sample(1, &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let scene = Scene::parse("3 3 0\n###\n#.#\n###\n").unwrap();
        let pose = AgentPose::new(1.5, 1.5, 0.0);
        let strip = render_observation(&scene, &pose, &Camera::for_scene(&scene, 8)).unwrap();
        let mut buf = ReplayBuffer::new(10);
        assert!(add_observation(&mut buf, &pose, &strip, &Camera::for_scene(&scene, 4)).is_err());
    }
}
