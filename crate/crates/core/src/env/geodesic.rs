use super::FloorPlan;
use crate::geom::Point;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

/// Shortest-path lengths from one source cell over the 8-connected free grid.
///
/// Path cost is tracked as integer counts of straight and diagonal moves, so
/// the same optimal path always yields bit-identical lengths whichever end
/// the search starts from. Diagonal moves may not cut occupied corners.
#[derive(Clone, Debug)]
pub struct DistanceField {
    width: usize,
    height: usize,
    cell_size: f64,
    source: Option<(usize, usize)>,
    cost: Vec<Option<(u32, u32)>>,
}

#[derive(Clone, Copy, PartialEq)]
struct Entry {
    len: f64,
    straight: u32,
    diagonal: u32,
    cell: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on length; cell index breaks ties deterministically.
        other.len.total_cmp(&self.len).then_with(|| other.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn length(straight: u32, diagonal: u32) -> f64 {
    straight as f64 + diagonal as f64 * SQRT_2
}

impl DistanceField {
    /// Runs Dijkstra from the cell containing `source`. A source outside the
    /// free space yields a field where everything is unreachable.
    pub fn from_source(plan: &FloorPlan, source: Point) -> Self {
        let (width, height) = (plan.width(), plan.height());
        let mut cost: Vec<Option<(u32, u32)>> = vec![None; width * height];
        let src = plan.cell_of(source).filter(|&(x, y)| plan.is_free_cell(x, y));
        if let Some((sx, sy)) = src {
            let mut heap = BinaryHeap::new();
            let start = sy * width + sx;
            cost[start] = Some((0, 0));
            heap.push(Entry { len: 0.0, straight: 0, diagonal: 0, cell: start });
            while let Some(Entry { len, straight, diagonal, cell }) = heap.pop() {
                match cost[cell] {
                    Some((s, d)) if length(s, d) < len => continue,
                    _ => {}
                }
                let (x, y) = ((cell % width) as i64, (cell / width) as i64);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let (nx, ny) = (x + dx, y + dy);
                        if plan.is_occupied(nx, ny) {
                            continue;
                        }
                        let diag = dx != 0 && dy != 0;
                        if diag && (plan.is_occupied(x + dx, y) || plan.is_occupied(x, y + dy)) {
                            continue;
                        }
                        let (ns, nd) = if diag { (straight, diagonal + 1) } else { (straight + 1, diagonal) };
                        let nlen = length(ns, nd);
                        let j = ny as usize * width + nx as usize;
                        let better = match cost[j] {
                            None => true,
                            Some((s, d)) => nlen < length(s, d),
                        };
                        if better {
                            cost[j] = Some((ns, nd));
                            heap.push(Entry { len: nlen, straight: ns, diagonal: nd, cell: j });
                        }
                    }
                }
            }
        }
        DistanceField { width, height, cell_size: plan.cell_size(), source: src, cost }
    }

    pub fn source_cell(&self) -> Option<(usize, usize)> {
        self.source
    }

    /// Geodesic distance in meters to the cell containing `p`, `None` when
    /// unreachable or outside the grid.
    pub fn distance_at(&self, p: Point) -> Option<f64> {
        if !p.is_finite() || p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let x = (p.x / self.cell_size).floor() as usize;
        let y = (p.y / self.cell_size).floor() as usize;
        self.distance_cell(x, y)
    }

    pub fn distance_cell(&self, x: usize, y: usize) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        self.cost[y * self.width + x].map(|(s, d)| length(s, d) * self.cell_size)
    }

    /// Iterates `(x, y, meters)` over every reachable cell.
    pub fn reachable(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.cost
            .iter()
            .enumerate()
            .filter_map(move |(i, c)| c.map(|(s, d)| (i % self.width, i / self.width, length(s, d) * self.cell_size)))
    }
}

/// Geodesic distance between two positions, `None` when disconnected.
pub fn geodesic_distance(plan: &FloorPlan, a: Point, b: Point) -> Option<f64> {
    DistanceField::from_source(plan, a).distance_at(b)
}
