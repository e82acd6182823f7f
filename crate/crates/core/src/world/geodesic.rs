use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use super::{Scene, Vec2};
use crate::error::{Error, Result};

const NEIGHBORS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

/// Free neighbors of a cell with step costs. Diagonal moves need both
/// adjacent orthogonal cells free, so paths never cut wall corners.
pub(crate) fn neighbors(scene: &Scene, c: i64, r: i64) -> impl Iterator<Item = ((i64, i64), f64)> + '_ {
    NEIGHBORS.iter().filter_map(move |&(dc, dr)| {
        let (nc, nr) = (c + dc, r + dr);
        if scene.is_wall(nc, nr) {
            return None;
        }
        if dc != 0 && dr != 0 {
            if scene.is_wall(c + dc, r) || scene.is_wall(c, r + dr) {
                return None;
            }
            return Some(((nc, nr), SQRT_2));
        }
        Some(((nc, nr), 1.0))
    })
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Cell-graph distances from one source cell to every cell.
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    source: (i64, i64),
    dist: Vec<f64>,
}

impl DistanceField {
    pub fn from_cell(scene: &Scene, source: (i64, i64)) -> Result<Self> {
        if scene.is_wall(source.0, source.1) {
            return Err(Error::Contract(format!("distance source {source:?} is a wall")));
        }
        let width = scene.width();
        let mut dist = vec![f64::INFINITY; width * scene.height()];
        let mut heap = BinaryHeap::new();
        let si = scene.cell_index(source.0, source.1);
        dist[si] = 0.0;
        heap.push(Entry(0.0, si));
        while let Some(Entry(d, i)) = heap.pop() {
            if d > dist[i] {
                continue;
            }
            let (c, r) = ((i % width) as i64, (i / width) as i64);
            for ((nc, nr), w) in neighbors(scene, c, r) {
                let ni = scene.cell_index(nc, nr);
                let nd = d + w;
                if nd < dist[ni] {
                    dist[ni] = nd;
                    heap.push(Entry(nd, ni));
                }
            }
        }
        Ok(DistanceField { width, source, dist })
    }

    pub fn source(&self) -> (i64, i64) {
        self.source
    }

    /// Infinite for walls and unreachable cells.
    pub fn cell_distance(&self, cell: (i64, i64)) -> f64 {
        if cell.0 < 0 || cell.1 < 0 || cell.0 as usize >= self.width {
            return f64::INFINITY;
        }
        self.dist.get(cell.1 as usize * self.width + cell.0 as usize).copied().unwrap_or(f64::INFINITY)
    }

    /// Shortest cell path from `from` to the source, both ends included.
    pub fn path_to_source(&self, scene: &Scene, from: (i64, i64)) -> Result<Vec<(i64, i64)>> {
        if !self.cell_distance(from).is_finite() {
            return Err(Error::Unreachable);
        }
        let mut path = vec![from];
        let mut cur = from;
        while cur != self.source {
            let here = self.cell_distance(cur);
            let mut best: Option<((i64, i64), f64)> = None;
            for (n, w) in neighbors(scene, cur.0, cur.1) {
                let total = self.cell_distance(n) + w;
                if (total - here).abs() < 1e-9 && best.map_or(true, |(_, bd)| self.cell_distance(n) < bd) {
                    best = Some((n, self.cell_distance(n)));
                }
            }
            let (next, _) = best.ok_or(Error::Unreachable)?;
            path.push(next);
            cur = next;
        }
        Ok(path)
    }

    /// Point-to-point distance where the source cell holds `target`.
    pub fn distance_from(&self, scene: &Scene, p: Vec2, target: Vec2) -> Result<f64> {
        let cell = scene.cell_of(p);
        if cell == self.source {
            return Ok(p.distance(target));
        }
        let d = self.cell_distance(cell);
        if !d.is_finite() {
            return Err(Error::Unreachable);
        }
        let (sc, sr) = self.source;
        Ok(p.distance(Scene::cell_center(cell.0, cell.1)) + d + Scene::cell_center(sc, sr).distance(target))
    }
}

/// Shortest obstacle-respecting distance between two free points: straight
/// line inside one cell, otherwise the cell-graph distance between the two
/// cells plus the offsets of each point from its cell center.
pub fn geodesic_distance(scene: &Scene, a: Vec2, b: Vec2) -> Result<f64> {
    if !scene.is_free_point(a) || !scene.is_free_point(b) {
        return Err(Error::Contract("geodesic endpoints must lie in free cells".into()));
    }
    DistanceField::from_cell(scene, scene.cell_of(b))?.distance_from(scene, a, b)
}
