//! Grid-constrained STEP mobility.
//!
//! Each frame every UE moves to one of its 4-neighbours. With probability
//! `attraction_prob` it takes the move that brings it closest to its nearest
//! attraction point, otherwise a uniformly random in-bounds move. UEs move
//! sequentially in index order; a move into an occupied cell is resampled
//! among the free neighbours, and a UE with no free neighbour stays put.

use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub x: i32,
    pub y: i32,
}

impl GridPos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, other: GridPos) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }

    pub fn offset(self, m: Move) -> GridPos {
        let (dx, dy) = m.delta();
        GridPos::new(self.x + dx, self.y + dy)
    }
}

/// A unit step. Declaration order is the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::PosX, Move::NegX, Move::PosY, Move::NegY];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Move::PosX => (1, 0),
            Move::NegX => (-1, 0),
            Move::PosY => (0, 1),
            Move::NegY => (0, -1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWorld {
    pub width: i32,
    pub height: i32,
    /// Physical side length of one cell, meters.
    pub cell_size_m: f64,
    pub attraction_points: Vec<GridPos>,
    pub attraction_prob: f64,
    pub frames: usize,
}

impl GridWorld {
    pub fn validate(&self) -> Result<()> {
        if self.width <= 0 || self.height <= 0 {
            return Err(Error::InvalidParameter {
                name: "grid size",
                reason: format!("{}x{} is empty", self.width, self.height),
            });
        }
        if !(self.cell_size_m > 0.0 && self.cell_size_m.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "cell_size_m",
                reason: "must be positive".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.attraction_prob) {
            return Err(Error::InvalidParameter {
                name: "attraction_prob",
                reason: format!("{} not in [0, 1]", self.attraction_prob),
            });
        }
        if self.attraction_points.is_empty() {
            return Err(Error::Empty("attraction points"));
        }
        if let Some(p) = self.attraction_points.iter().find(|p| !self.contains(**p)) {
            return Err(Error::InvalidParameter {
                name: "attraction_points",
                reason: format!("({}, {}) lies outside the grid", p.x, p.y),
            });
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn contains(&self, p: GridPos) -> bool {
        (0..self.width).contains(&p.x) && (0..self.height).contains(&p.y)
    }

    fn index(&self, p: GridPos) -> usize {
        p.y as usize * self.width as usize + p.x as usize
    }

    fn in_bounds_moves(&self, pos: GridPos) -> impl Iterator<Item = Move> + '_ {
        Move::ALL.into_iter().filter(move |m| self.contains(pos.offset(*m)))
    }

    /// `count` attraction points drawn uniformly over the grid (distinct).
    pub fn random_attractions<R: Rng + ?Sized>(width: i32, height: i32, count: usize, rng: &mut R) -> Vec<GridPos> {
        let cells = (width as usize * height as usize).max(1);
        sample(rng, cells, count.min(cells))
            .into_iter()
            .map(|c| GridPos::new((c % width as usize) as i32, (c / width as usize) as i32))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UeState {
    pub positions: Vec<GridPos>,
}

impl UeState {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn physical(&self, cell_size_m: f64) -> Vec<[f64; 2]> {
        self.positions.iter().map(|p| to_physical(*p, cell_size_m)).collect()
    }
}

/// `n` distinct cells sampled uniformly without replacement.
pub fn init_positions<R: Rng + ?Sized>(n: usize, grid: &GridWorld, rng: &mut R) -> Result<UeState> {
    let cells = grid.cells();
    if n > cells {
        return Err(Error::GridOverflow { requested: n, cells });
    }
    let w = grid.width as usize;
    let positions = sample(rng, cells, n)
        .into_iter()
        .map(|c| GridPos::new((c % w) as i32, (c / w) as i32))
        .collect();
    Ok(UeState { positions })
}

/// Closest attraction point by squared distance; ties go to the lower index.
pub fn nearest_attraction(pos: GridPos, grid: &GridWorld) -> Result<GridPos> {
    let mut best: Option<(i64, GridPos)> = None;
    for &a in &grid.attraction_points {
        let d = pos.dist2(a);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, a));
        }
    }
    best.map(|(_, a)| a).ok_or(Error::Empty("attraction points"))
}

/// In-bounds move minimizing the squared distance to `target`.
///
/// Ties resolve in [`Move::ALL`] order. Returns `None` only on a 1x1 grid.
pub fn preferred_move(pos: GridPos, target: GridPos, grid: &GridWorld) -> Option<Move> {
    let mut best: Option<(i64, Move)> = None;
    for m in grid.in_bounds_moves(pos) {
        let d = pos.offset(m).dist2(target);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, m));
        }
    }
    best.map(|(_, m)| m)
}

/// Advance every UE by one frame.
pub fn step_frame<R: Rng + ?Sized>(state: &UeState, grid: &GridWorld, rng: &mut R) -> Result<UeState> {
    let mut occupied = vec![false; grid.cells()];
    for &p in &state.positions {
        if !grid.contains(p) {
            return Err(Error::InvalidParameter {
                name: "ue position",
                reason: format!("({}, {}) lies outside the grid", p.x, p.y),
            });
        }
        occupied[grid.index(p)] = true;
    }

    let mut next = state.positions.clone();
    for pos in next.iter_mut() {
        let here = *pos;
        let moves: Vec<Move> = grid.in_bounds_moves(here).collect();
        if moves.is_empty() {
            continue;
        }
        let chosen = if rng.random::<f64>() < grid.attraction_prob {
            let target = nearest_attraction(here, grid)?;
            preferred_move(here, target, grid).unwrap_or(moves[0])
        } else {
            moves[rng.random_range(0..moves.len())]
        };

        let mut dest = here.offset(chosen);
        if occupied[grid.index(dest)] {
            let free: Vec<GridPos> = moves
                .iter()
                .map(|m| here.offset(*m))
                .filter(|p| !occupied[grid.index(*p)])
                .collect();
            if free.is_empty() {
                continue;
            }
            dest = free[rng.random_range(0..free.len())];
        }
        occupied[grid.index(here)] = false;
        occupied[grid.index(dest)] = true;
        *pos = dest;
    }
    Ok(UeState { positions: next })
}

pub fn to_physical(pos: GridPos, cell_size_m: f64) -> [f64; 2] {
    [pos.x as f64 * cell_size_m, pos.y as f64 * cell_size_m]
}

/// One row of the trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub frame: usize,
    pub ue_id: usize,
    pub grid_x: i32,
    pub grid_y: i32,
    pub x_m: f64,
    pub y_m: f64,
}

pub const TRAJECTORY_HEADER: &str = "frame,ue_id,grid_x,grid_y,x_m,y_m";

pub fn trajectory_rows(frame: usize, state: &UeState, cell_size_m: f64) -> Vec<TrajectoryRow> {
    state
        .positions
        .iter()
        .enumerate()
        .map(|(ue_id, p)| {
            let [x_m, y_m] = to_physical(*p, cell_size_m);
            TrajectoryRow {
                frame,
                ue_id,
                grid_x: p.x,
                grid_y: p.y,
                x_m,
                y_m,
            }
        })
        .collect()
}

pub fn write_trajectory_row<W: Write>(w: &mut W, row: &TrajectoryRow) -> std::io::Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{}",
        row.frame, row.ue_id, row.grid_x, row.grid_y, row.x_m, row.y_m
    )
}
