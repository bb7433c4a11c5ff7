use crate::geom::Point;
use crate::seed;
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

pub const DEFAULT_CELL_SIZE: f64 = 0.1;
const MIN_SIDE_M: f64 = 5.0;
const MIN_COMPONENT_CELLS: usize = 100;

/// Axis-aligned room rectangle in cell coordinates, `[x, x + w) × [y, y + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Room {
    pub fn center_cell(&self) -> (usize, usize) {
        (self.x + self.w / 2, self.y + self.h / 2)
    }

    fn overlaps(&self, other: &Room, gap: usize) -> bool {
        self.x < other.x + other.w + gap
            && other.x < self.x + self.w + gap
            && self.y < other.y + other.h + gap
            && other.y < self.y + self.h + gap
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub width_m: f64,
    pub height_m: f64,
    pub room_count: usize,
    pub corridor_width_m: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { width_m: 20.0, height_m: 20.0, room_count: 5, corridor_width_m: 1.0 }
    }
}

/// Occupancy grid with metric cells. Row-major, `y` selects the row.
#[derive(Clone, Debug, PartialEq)]
pub struct FloorPlan {
    width: usize,
    height: usize,
    cell_size: f64,
    occupied: Vec<bool>,
    pub seed: u64,
    pub rooms: Vec<Room>,
}

impl FloorPlan {
    /// A fully occupied grid.
    pub fn closed(width: usize, height: usize, cell_size: f64) -> Self {
        FloorPlan { width, height, cell_size, occupied: vec![true; width * height], seed: 0, rooms: Vec::new() }
    }

    /// Builds a plan from raw occupancy. The border must be occupied.
    pub fn from_occupancy(width: usize, height: usize, cell_size: f64, occupied: Vec<bool>) -> Result<Self> {
        if width < 3 || height < 3 || occupied.len() != width * height {
            return Err(Error::Malformed(format!(
                "occupancy of length {} does not match {width}x{height}",
                occupied.len()
            )));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::Malformed(format!("invalid cell size {cell_size}")));
        }
        let plan = FloorPlan { width, height, cell_size, occupied, seed: 0, rooms: Vec::new() };
        let border_open = (0..width).any(|x| !plan.occ(x, 0) || !plan.occ(x, height - 1))
            || (0..height).any(|y| !plan.occ(0, y) || !plan.occ(width - 1, y));
        if border_open {
            return Err(Error::Malformed("border cells must be occupied".into()));
        }
        Ok(plan)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    pub fn width_m(&self) -> f64 {
        self.width as f64 * self.cell_size
    }

    pub fn height_m(&self) -> f64 {
        self.height as f64 * self.cell_size
    }

    fn occ(&self, x: usize, y: usize) -> bool {
        self.occupied[y * self.width + x]
    }

    /// Occupancy lookup; out-of-range cells count as occupied.
    pub fn is_occupied(&self, x: i64, y: i64) -> bool {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return true;
        }
        self.occ(x as usize, y as usize)
    }

    pub fn set_occupied(&mut self, x: usize, y: usize, value: bool) {
        let border = x == 0 || y == 0 || x + 1 == self.width || y + 1 == self.height;
        if border && !value {
            return;
        }
        self.occupied[y * self.width + x] = value;
    }

    /// Frees the interior cells of `[x0, x1) × [y0, y1)`; the border is never carved.
    pub fn carve_cells(&mut self, x0: usize, y0: usize, x1: usize, y1: usize) {
        let x0 = x0.max(1);
        let y0 = y0.max(1);
        let x1 = x1.min(self.width - 1);
        let y1 = y1.min(self.height - 1);
        for y in y0..y1 {
            for x in x0..x1 {
                self.occupied[y * self.width + x] = false;
            }
        }
    }

    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        if !p.is_finite() || p.x < 0.0 || p.y < 0.0 {
            return None;
        }
        let x = (p.x / self.cell_size).floor() as usize;
        let y = (p.y / self.cell_size).floor() as usize;
        (x < self.width && y < self.height).then_some((x, y))
    }

    pub fn cell_center(&self, x: usize, y: usize) -> Point {
        Point::new((x as f64 + 0.5) * self.cell_size, (y as f64 + 0.5) * self.cell_size)
    }

    pub fn is_free(&self, p: Point) -> bool {
        matches!(self.cell_of(p), Some((x, y)) if !self.occ(x, y))
    }

    pub fn is_free_cell(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height && !self.occ(x, y)
    }

    /// True when every sample along the segment (quarter-cell spacing) is free.
    pub fn segment_free(&self, a: Point, b: Point) -> bool {
        let len = a.distance(b);
        let n = ((len / (self.cell_size * 0.25)).ceil() as usize).max(1);
        (0..=n).all(|i| {
            let t = i as f64 / n as f64;
            self.is_free(Point::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t))
        })
    }

    /// Component labels over free cells (4-connected); `usize::MAX` for occupied.
    pub fn free_components(&self) -> (Vec<usize>, Vec<usize>) {
        let mut label = vec![usize::MAX; self.occupied.len()];
        let mut sizes = Vec::new();
        let mut queue = VecDeque::new();
        for start in 0..self.occupied.len() {
            if self.occupied[start] || label[start] != usize::MAX {
                continue;
            }
            let id = sizes.len();
            let mut size = 0;
            label[start] = id;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                size += 1;
                let (x, y) = (i % self.width, i / self.width);
                let neighbours = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
                for (nx, ny) in neighbours {
                    if self.is_free_cell(nx, ny) {
                        let j = ny * self.width + nx;
                        if label[j] == usize::MAX {
                            label[j] = id;
                            queue.push_back(j);
                        }
                    }
                }
            }
            sizes.push(size);
        }
        (label, sizes)
    }

    /// Distance in meters from the cell to the nearest occupied cell, capped at `cap` cells.
    pub(crate) fn clearance_cells(&self, x: usize, y: usize, cap: i64) -> i64 {
        for r in 0..=cap {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx.abs().max(dy.abs()) == r && self.is_occupied(x as i64 + dx, y as i64 + dy) {
                        return r;
                    }
                }
            }
        }
        cap + 1
    }
}

/// Procedural rooms-and-corridors floor plan. Deterministic in `(seed, params)`.
pub fn generate_floorplan(seed: u64, params: &GenParams) -> Result<FloorPlan> {
    if !(params.width_m >= MIN_SIDE_M && params.height_m >= MIN_SIDE_M) {
        return Err(Error::ParameterOutOfRange(format!(
            "plan must be at least {MIN_SIDE_M} m on each side, got {}x{}",
            params.width_m, params.height_m
        )));
    }
    if params.room_count == 0 {
        return Err(Error::ParameterOutOfRange("room_count must be >= 1".into()));
    }
    if !(params.corridor_width_m > 0.0) {
        return Err(Error::ParameterOutOfRange("corridor width must be positive".into()));
    }
    let cs = DEFAULT_CELL_SIZE;
    let width = (params.width_m / cs).round() as usize;
    let height = (params.height_m / cs).round() as usize;
    let mut plan = FloorPlan::closed(width, height, cs);
    plan.seed = seed;
    let mut rng = seed::rng(seed, &[0x666c6f6f72]);

    let cells = |m: f64| (m / cs).round() as usize;
    let inner_w = width - 2;
    let inner_h = height - 2;
    let max_w = cells(6.0).min(inner_w);
    let max_h = cells(6.0).min(inner_h);
    let min_w = cells(2.5).min(max_w);
    let min_h = cells(2.5).min(max_h);

    let mut rooms: Vec<Room> = Vec::with_capacity(params.room_count);
    for _ in 0..params.room_count {
        let mut candidate = None;
        for attempt in 0..60 {
            let w = rng.random_range(min_w..=max_w);
            let h = rng.random_range(min_h..=max_h);
            let x = 1 + rng.random_range(0..=inner_w - w);
            let y = 1 + rng.random_range(0..=inner_h - h);
            let room = Room { x, y, w, h };
            let clear = rooms.iter().all(|r| !room.overlaps(r, 3));
            // Crowded plans fall back to overlapping rooms.
            if clear || attempt == 59 {
                candidate = Some(room);
                break;
            }
        }
        let room = candidate.expect("attempt loop always yields a room");
        plan.carve_cells(room.x, room.y, room.x + room.w, room.y + room.h);
        rooms.push(room);
    }

    let corridor = cells(params.corridor_width_m).max(1);
    for i in 1..rooms.len() {
        let (cx, cy) = rooms[i].center_cell();
        let nearest = (0..i)
            .min_by_key(|&j| {
                let (ox, oy) = rooms[j].center_cell();
                let dx = ox as i64 - cx as i64;
                let dy = oy as i64 - cy as i64;
                (dx * dx + dy * dy, j)
            })
            .expect("i >= 1");
        let (tx, ty) = rooms[nearest].center_cell();
        let horizontal_first: bool = rng.random();
        let corner = if horizontal_first { (tx, cy) } else { (cx, ty) };
        carve_corridor(&mut plan, (cx, cy), corner, corridor);
        carve_corridor(&mut plan, corner, (tx, ty), corridor);
    }
    plan.rooms = rooms;

    let (_, sizes) = plan.free_components();
    if sizes.iter().copied().max().unwrap_or(0) < MIN_COMPONENT_CELLS {
        return Err(Error::ParameterOutOfRange("parameters produce no free component of at least 100 cells".into()));
    }
    Ok(plan)
}

fn carve_corridor(plan: &mut FloorPlan, a: (usize, usize), b: (usize, usize), width: usize) {
    let lo = width / 2;
    let hi = width - lo;
    let (x0, x1) = (a.0.min(b.0), a.0.max(b.0));
    let (y0, y1) = (a.1.min(b.1), a.1.max(b.1));
    plan.carve_cells(x0.saturating_sub(lo), y0.saturating_sub(lo), x1 + hi, y1 + hi);
}
