//! Planar robot on a walled occupancy grid.
//!
//! World coordinates are meters with the origin at the arena center: the
//! cell containing `(x, y)` is `col = floor(x / cell_size) + 32`,
//! `row = floor(y / cell_size) + 32`. Row 0 of the text grid is the
//! smallest `y`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command_map::{RobotCommand, Verb};
use crate::scalar::Scalar;

pub const GRID_SIDE: usize = 64;
pub const VIEW_SIDE: usize = 9;
const VIEW_RADIUS: isize = (VIEW_SIDE / 2) as isize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid robot state: {0}")]
    InvalidState(&'static str),
    #[error("world grid: {0}")]
    BadWorld(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct World<T> {
    cells: Vec<bool>,
    cell_size: T,
}

impl<T: Scalar> World<T> {
    /// Empty arena with obstacle border, 0.5 m cells.
    pub fn walled_arena() -> Self {
        Self::walled_arena_with(T::of(0.5))
    }

    pub fn walled_arena_with(cell_size: T) -> Self {
        let cells = (0..GRID_SIDE * GRID_SIDE)
            .map(|i| {
                let (r, c) = (i / GRID_SIDE, i % GRID_SIDE);
                r == 0 || c == 0 || r == GRID_SIDE - 1 || c == GRID_SIDE - 1
            })
            .collect();
        Self { cells, cell_size }
    }

    /// Parses 64 lines of 64 characters, `#` obstacle and `.` free.
    pub fn from_text(text: &str) -> Result<Self, SimError> {
        Self::from_text_with(text, T::of(0.5))
    }

    pub fn from_text_with(text: &str, cell_size: T) -> Result<Self, SimError> {
        let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
        let lines: Vec<&str> = match lines.iter().rposition(|l| !l.is_empty()) {
            Some(last) => lines[..=last].to_vec(),
            None => Vec::new(),
        };
        if lines.len() != GRID_SIDE {
            return Err(SimError::BadWorld(format!("expected {GRID_SIDE} lines, got {}", lines.len())));
        }
        let mut cells = Vec::with_capacity(GRID_SIDE * GRID_SIDE);
        for (r, line) in lines.iter().enumerate() {
            if line.chars().count() != GRID_SIDE {
                return Err(SimError::BadWorld(format!("line {r} is not {GRID_SIDE} characters")));
            }
            for ch in line.chars() {
                cells.push(match ch {
                    '#' => true,
                    '.' => false,
                    other => return Err(SimError::BadWorld(format!("unexpected {other:?} on line {r}"))),
                });
            }
        }
        let world = Self { cells, cell_size };
        for i in 0..GRID_SIDE {
            for (r, c) in [(0, i), (GRID_SIDE - 1, i), (i, 0), (i, GRID_SIDE - 1)] {
                if !world.occupied(r, c) {
                    return Err(SimError::BadWorld(format!("border cell ({r}, {c}) is not an obstacle")));
                }
            }
        }
        Ok(world)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(GRID_SIDE * (GRID_SIDE + 1));
        for row in self.cells.chunks(GRID_SIDE) {
            s.extend(row.iter().map(|&o| if o { '#' } else { '.' }));
            s.push('\n');
        }
        s
    }

    pub fn cell_size(&self) -> T {
        self.cell_size
    }

    pub fn occupied(&self, row: usize, col: usize) -> bool {
        self.cells[row * GRID_SIDE + col]
    }

    /// Marks an interior cell as obstacle or free. Border cells stay walls.
    pub fn set_cell(&mut self, row: usize, col: usize, obstacle: bool) {
        if row == 0 || col == 0 || row >= GRID_SIDE - 1 || col >= GRID_SIDE - 1 {
            return;
        }
        self.cells[row * GRID_SIDE + col] = obstacle;
    }

    /// Cell containing a point, `None` outside the grid.
    pub fn cell_of(&self, x: T, y: T) -> Option<(usize, usize)> {
        let half = T::of((GRID_SIDE / 2) as f64);
        let c = (x / self.cell_size).floor() + half;
        let r = (y / self.cell_size).floor() + half;
        let side = T::of(GRID_SIDE as f64);
        if !(c >= T::zero() && c < side && r >= T::zero() && r < side) {
            return None;
        }
        Some((r.to_usize()?, c.to_usize()?))
    }

    pub fn is_free(&self, x: T, y: T) -> bool {
        self.cell_of(x, y).is_some_and(|(r, c)| !self.occupied(r, c))
    }

    /// Center of a cell in world coordinates.
    pub fn cell_center(&self, row: usize, col: usize) -> (T, T) {
        let half = (GRID_SIDE / 2) as f64;
        let cs = self.cell_size;
        (T::of(col as f64 - half + 0.5) * cs, T::of(row as f64 - half + 0.5) * cs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState<T> {
    pub x: T,
    pub y: T,
    /// Heading in `[0, 2π)`, counter-clockwise from +x.
    pub theta: T,
    pub grip: bool,
    pub tick: u64,
}

impl<T: Scalar> RobotState<T> {
    pub fn origin() -> Self {
        Self { x: T::zero(), y: T::zero(), theta: T::zero(), grip: false, tick: 0 }
    }

    pub fn at(x: T, y: T, theta: T) -> Self {
        Self { x, y, theta: normalize_angle(theta), grip: false, tick: 0 }
    }

    pub fn validate(&self, world: &World<T>) -> Result<(), SimError> {
        if !(self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()) {
            return Err(SimError::InvalidState("non-finite pose"));
        }
        if self.theta < T::zero() || self.theta >= T::TAU() {
            return Err(SimError::InvalidState("heading outside [0, 2π)"));
        }
        if !world.is_free(self.x, self.y) {
            return Err(SimError::InvalidState("position not on a free cell"));
        }
        Ok(())
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle<T: Scalar>(theta: T) -> T {
    let tau = T::TAU();
    let mut a = theta % tau;
    if a < T::zero() {
        a = a + tau;
    }
    if a >= tau {
        a = T::zero();
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Blocked,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Ok => "ok",
            Outcome::Blocked => "blocked",
        }
    }
}

/// True when no point of the segment lies on an obstacle or off the grid.
/// Walks every cell the segment passes through; where it crosses a cell
/// corner exactly, both side cells count as touched.
pub fn segment_is_free<T: Scalar>(world: &World<T>, from: (T, T), to: (T, T)) -> bool {
    if !world.is_free(from.0, from.1) || !world.is_free(to.0, to.1) {
        return false;
    }
    let half = (GRID_SIDE / 2) as i64;
    let (a0, b0) = (from.0 / world.cell_size, from.1 / world.cell_size);
    let (a1, b1) = (to.0 / world.cell_size, to.1 / world.cell_size);
    let index = |v: T| v.floor().to_i64().map(|i| i + half);
    let (Some(mut col), Some(mut row), Some(end_col), Some(end_row)) = (index(a0), index(b0), index(a1), index(b1))
    else {
        return false;
    };
    let blocked = |r: i64, c: i64| {
        !(0..GRID_SIDE as i64).contains(&r)
            || !(0..GRID_SIDE as i64).contains(&c)
            || world.occupied(r as usize, c as usize)
    };
    let axis = |p0: T, p1: T, cell: i64| -> (i64, T, T) {
        let d = p1 - p0;
        let edge = T::of((cell - half) as f64);
        if d > T::zero() {
            (1, (edge + T::one() - p0) / d, T::one() / d)
        } else if d < T::zero() {
            (-1, (p0 - edge) / -d, T::one() / -d)
        } else {
            (0, T::infinity(), T::infinity())
        }
    };
    let (step_c, mut next_c, delta_c) = axis(a0, a1, col);
    let (step_r, mut next_r, delta_r) = axis(b0, b1, row);
    let budget = (end_col - col).abs() + (end_row - row).abs() + 2;
    for _ in 0..budget {
        if blocked(row, col) {
            return false;
        }
        if (row, col) == (end_row, end_col) || next_c.min(next_r) > T::one() {
            return true;
        }
        if next_c < next_r {
            col += step_c;
            next_c = next_c + delta_c;
        } else if next_r < next_c {
            row += step_r;
            next_r = next_r + delta_r;
        } else {
            if blocked(row, col + step_c) || blocked(row + step_r, col) {
                return false;
            }
            col += step_c;
            row += step_r;
            next_c = next_c + delta_c;
            next_r = next_r + delta_r;
        }
    }
    !blocked(row, col)
}

/// Executes one command. Translations that would cross an obstacle leave the
/// pose unchanged and report `Blocked`; the tick advances on every call.
pub fn apply_command<T: Scalar>(
    world: &World<T>,
    state: &RobotState<T>,
    cmd: &RobotCommand<T>,
) -> Result<(RobotState<T>, Outcome), SimError> {
    state.validate(world)?;
    let mut next = *state;
    next.tick = state.tick.wrapping_add(1);
    let m = cmd.magnitude;
    let outcome = match cmd.verb {
        Verb::Stop | Verb::NoOp => Outcome::Ok,
        Verb::GripToggle => {
            next.grip = !state.grip;
            Outcome::Ok
        }
        Verb::TurnLeft => {
            next.theta = normalize_angle(state.theta + m);
            Outcome::Ok
        }
        Verb::TurnRight => {
            next.theta = normalize_angle(state.theta - m);
            Outcome::Ok
        }
        Verb::Forward | Verb::Backward => {
            let sign = if cmd.verb == Verb::Forward { T::one() } else { -T::one() };
            let to = (state.x + sign * m * state.theta.cos(), state.y + sign * m * state.theta.sin());
            if segment_is_free(world, (state.x, state.y), to) {
                next.x = to.0;
                next.y = to.1;
                Outcome::Ok
            } else {
                Outcome::Blocked
            }
        }
    };
    Ok((next, outcome))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewCell {
    Free,
    Obstacle,
    RobotHere,
}

/// 9x9 window of cells around the robot; row 0 is the lowest grid row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewRaster {
    pub cells: [[ViewCell; VIEW_SIDE]; VIEW_SIDE],
}

impl ViewRaster {
    /// One string per row: `.` free, `#` obstacle, `R` robot.
    pub fn to_rows(&self) -> Vec<String> {
        self.cells
            .iter()
            .map(|row| {
                row.iter()
                    .map(|c| match c {
                        ViewCell::Free => '.',
                        ViewCell::Obstacle => '#',
                        ViewCell::RobotHere => 'R',
                    })
                    .collect()
            })
            .collect()
    }
}

pub fn render_view<T: Scalar>(world: &World<T>, state: &RobotState<T>) -> ViewRaster {
    let mut cells = [[ViewCell::Obstacle; VIEW_SIDE]; VIEW_SIDE];
    let center = world.cell_of(state.x, state.y);
    if let Some((cr, cc)) = center {
        for (vr, row) in cells.iter_mut().enumerate() {
            for (vc, cell) in row.iter_mut().enumerate() {
                let r = cr as isize + vr as isize - VIEW_RADIUS;
                let c = cc as isize + vc as isize - VIEW_RADIUS;
                let inside = (0..GRID_SIDE as isize).contains(&r) && (0..GRID_SIDE as isize).contains(&c);
                *cell =
                    if inside && !world.occupied(r as usize, c as usize) { ViewCell::Free } else { ViewCell::Obstacle };
            }
        }
    }
    cells[VIEW_SIDE / 2][VIEW_SIDE / 2] = ViewCell::RobotHere;
    ViewRaster { cells }
}
