use std::collections::VecDeque;

use rand::Rng as _;

use super::ray::Face;
use super::Vec2;
use crate::error::{Error, Result};
use crate::rng;

/// Wall colors; each wall face draws one entry keyed by seed, cell and face.
pub const PALETTE: [[f64; 3]; 8] = [
    [0.90, 0.12, 0.12],
    [0.12, 0.78, 0.22],
    [0.15, 0.30, 0.90],
    [0.95, 0.85, 0.10],
    [0.80, 0.20, 0.80],
    [0.10, 0.80, 0.85],
    [0.95, 0.50, 0.10],
    [0.55, 0.55, 0.55],
];

const MAX_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Probability that an interior cell is a wall.
    pub wall_density: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig { height: 12, width: 12, wall_density: 0.2 }
    }
}

/// Immutable occupancy grid. Cell `(col, row)` covers
/// `[col, col + 1) x [row, row + 1)` in world units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    height: usize,
    width: usize,
    walls: Vec<bool>,
    seed: u64,
    flat_color: Option<[f64; 3]>,
}

impl Scene {
    /// Builds a scene from a wall mask, checking every scene invariant.
    pub fn from_walls(height: usize, width: usize, walls: Vec<bool>, seed: u64) -> Result<Self> {
        if height < 3 || width < 3 {
            return Err(Error::Parse(format!("scene {height}x{width} is smaller than 3x3")));
        }
        if walls.len() != height * width {
            return Err(Error::Parse(format!("expected {} cells, got {}", height * width, walls.len())));
        }
        let scene = Scene { height, width, walls, seed, flat_color: None };
        for r in 0..height {
            for c in 0..width {
                let border = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
                if border && !scene.is_wall(c as i64, r as i64) {
                    return Err(Error::Parse(format!("boundary cell ({c}, {r}) is not a wall")));
                }
            }
        }
        if scene.free_cells().is_empty() {
            return Err(Error::Parse("scene has no free cells".into()));
        }
        if !scene.is_connected() {
            return Err(Error::Parse("free cells are not connected".into()));
        }
        Ok(scene)
    }

    /// Random interior walls, regenerated until the free space is connected.
    pub fn generate(seed: u64, cfg: &SceneConfig) -> Result<Self> {
        if cfg.height < 8 || cfg.width < 8 {
            return Err(Error::Config(format!("grid {}x{} is smaller than 8x8", cfg.height, cfg.width)));
        }
        if !(0.0..=1.0).contains(&cfg.wall_density) {
            return Err(Error::Config(format!("wall density {} outside [0, 1]", cfg.wall_density)));
        }
        let mut rng = rng::stream(seed, "scene-layout", 0);
        for _ in 0..MAX_ATTEMPTS {
            let mut walls = vec![true; cfg.height * cfg.width];
            for r in 1..cfg.height - 1 {
                for c in 1..cfg.width - 1 {
                    walls[r * cfg.width + c] = rng.gen::<f64>() < cfg.wall_density;
                }
            }
            let scene = Scene { height: cfg.height, width: cfg.width, walls, seed, flat_color: None };
            if scene.free_cells().len() >= 2 && scene.is_connected() {
                return Ok(scene);
            }
        }
        Err(Error::GenerationFailed { attempts: MAX_ATTEMPTS })
    }

    /// Two rooms split by a wall with one doorway; `room_width` interior
    /// columns on each side.
    pub fn two_rooms(seed: u64, room_width: usize, height: usize) -> Result<Self> {
        let width = 2 * room_width + 3;
        let mut walls = vec![false; height * width];
        for r in 0..height {
            for c in 0..width {
                let border = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
                walls[r * width + c] = border || (c == room_width + 1 && r != height / 2);
            }
        }
        Scene::from_walls(height, width, walls, seed)
    }

    /// Paints every wall face one color. Not preserved by [`Scene::to_text`].
    pub fn with_uniform_color(mut self, color: [f64; 3]) -> Self {
        self.flat_color = Some(color);
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    /// Out-of-grid cells count as walls.
    pub fn is_wall(&self, col: i64, row: i64) -> bool {
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            return true;
        }
        self.walls[row as usize * self.width + col as usize]
    }

    pub fn cell_of(&self, p: Vec2) -> (i64, i64) {
        (p.x.floor() as i64, p.y.floor() as i64)
    }

    pub fn is_free_point(&self, p: Vec2) -> bool {
        let (c, r) = self.cell_of(p);
        p.x.is_finite() && p.y.is_finite() && !self.is_wall(c, r)
    }

    pub fn cell_center(col: i64, row: i64) -> Vec2 {
        Vec2::new(col as f64 + 0.5, row as f64 + 0.5)
    }

    pub fn cell_index(&self, col: i64, row: i64) -> usize {
        row as usize * self.width + col as usize
    }

    pub fn free_cells(&self) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for r in 0..self.height as i64 {
            for c in 0..self.width as i64 {
                if !self.is_wall(c, r) {
                    out.push((c, r));
                }
            }
        }
        out
    }

    /// 4-connected flood fill from the first free cell reaches every free cell.
    pub fn is_connected(&self) -> bool {
        let free = self.free_cells();
        let Some(&start) = free.first() else { return false };
        let mut seen = vec![false; self.walls.len()];
        let mut queue = VecDeque::from([start]);
        seen[self.cell_index(start.0, start.1)] = true;
        let mut count = 1;
        while let Some((c, r)) = queue.pop_front() {
            for (dc, dr) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (nc, nr) = (c + dc, r + dr);
                if !self.is_wall(nc, nr) && !seen[self.cell_index(nc, nr)] {
                    seen[self.cell_index(nc, nr)] = true;
                    count += 1;
                    queue.push_back((nc, nr));
                }
            }
        }
        count == free.len()
    }

    /// Deterministic color of one face of a wall cell.
    pub fn wall_color(&self, col: i64, row: i64, face: Face) -> [f64; 3] {
        if let Some(c) = self.flat_color {
            return c;
        }
        let key = (col as u64 & 0xffff) << 24 | (row as u64 & 0xffff) << 4 | face as u64;
        let h = rng::derive_seed(self.seed, "wall-color", key);
        PALETTE[(h % PALETTE.len() as u64) as usize]
    }

    /// Plain-text form: `H W seed` then one row of `#`/`.` per grid row.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {}\n", self.height, self.width, self.seed);
        for r in 0..self.height {
            for c in 0..self.width {
                s.push(if self.walls[r * self.width + c] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`Scene::to_text`] output and re-validates every invariant.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty scene file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!("header `{header}` must be `H W seed`")));
        }
        let num = |s: &str, what: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::Parse(format!("bad {what} `{s}`")))
        };
        let height = num(fields[0], "height")? as usize;
        let width = num(fields[1], "width")? as usize;
        let seed = num(fields[2], "seed")?;
        if height > 4096 || width > 4096 {
            return Err(Error::Parse(format!("scene {height}x{width} too large")));
        }
        let mut walls = Vec::with_capacity(height * width);
        for r in 0..height {
            let row = lines.next().ok_or_else(|| Error::Parse(format!("missing row {r}")))?;
            let row = row.trim_end_matches('\r');
            if row.chars().count() != width {
                return Err(Error::Parse(format!("row {r} has {} cells, expected {width}", row.chars().count())));
            }
            for ch in row.chars() {
                walls.push(match ch {
                    '#' => true,
                    '.' => false,
                    other => return Err(Error::Parse(format!("unexpected cell character `{other}` in row {r}"))),
                });
            }
        }
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Parse("trailing content after grid rows".into()));
        }
        Scene::from_walls(height, width, walls, seed)
    }
}
