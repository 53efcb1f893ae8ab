//! Classical empowerment over the cells of a small grid world, computed
//! with the same capacity solver as the library channel.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::empowerment::{report, ChannelMatrix, EmpowermentError, EmpowermentReport, Estimator};

pub type Cell = (usize, usize);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid must be at least 1x1")]
    Empty,
    #[error("cell ({0}, {1}) is outside the grid or a wall")]
    BadCell(usize, usize),
    #[error("slip probability {0} is outside [0, 1]")]
    BadSlip(f64),
    #[error("enumeration cap exceeded: {count} action sequences > cap {cap}")]
    CapExceeded { count: u128, cap: u64 },
    #[error(transparent)]
    Capacity(#[from] EmpowermentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
    Stay,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::Up, Move::Down, Move::Left, Move::Right, Move::Stay];
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Move::Up => "up",
            Move::Down => "down",
            Move::Left => "left",
            Move::Right => "right",
            Move::Stay => "stay",
        })
    }
}

/// A rectangular grid; `(x, y)` with `y` growing downwards. Moves into a
/// wall or off the grid leave the agent where it is. With probability
/// `slip` any action acts as `stay`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMDP {
    width: usize,
    height: usize,
    walls: BTreeSet<Cell>,
    slip: f64,
}

impl GridMDP {
    pub fn new(width: usize, height: usize, walls: BTreeSet<Cell>, slip: f64) -> Result<GridMDP, GridError> {
        if width == 0 || height == 0 {
            return Err(GridError::Empty);
        }
        if !(0.0..=1.0).contains(&slip) {
            return Err(GridError::BadSlip(slip));
        }
        if let Some(&(x, y)) = walls.iter().find(|(x, y)| *x >= width || *y >= height) {
            return Err(GridError::BadCell(x, y));
        }
        Ok(GridMDP { width, height, walls, slip })
    }

    pub fn open(width: usize, height: usize) -> Result<GridMDP, GridError> {
        GridMDP::new(width, height, BTreeSet::new(), 0.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn walls(&self) -> &BTreeSet<Cell> {
        &self.walls
    }

    pub fn slip(&self) -> f64 {
        self.slip
    }

    pub fn is_deterministic(&self) -> bool {
        self.slip == 0.0
    }

    pub fn is_floor(&self, (x, y): Cell) -> bool {
        x < self.width && y < self.height && !self.walls.contains(&(x, y))
    }

    /// The intended successor, ignoring slip.
    pub fn step(&self, (x, y): Cell, m: Move) -> Cell {
        let to = match m {
            Move::Up if y > 0 => (x, y - 1),
            Move::Down => (x, y + 1),
            Move::Left if x > 0 => (x - 1, y),
            Move::Right => (x + 1, y),
            _ => (x, y),
        };
        if self.is_floor(to) {
            to
        } else {
            (x, y)
        }
    }

    fn transition(&self, from: Cell, m: Move) -> Vec<(Cell, f64)> {
        let to = self.step(from, m);
        if self.slip == 0.0 || to == from {
            alloc::vec![(to, 1.0)]
        } else {
            alloc::vec![(to, 1.0 - self.slip), (from, self.slip)]
        }
    }
}

/// The channel from `T`-step action sequences to final cells; columns are
/// cells in first-reached order.
pub fn action_channel(mdp: &GridMDP, start: Cell, horizon: u32, cap: u64) -> Result<(Vec<Cell>, ChannelMatrix), GridError> {
    if !mdp.is_floor(start) {
        return Err(GridError::BadCell(start.0, start.1));
    }
    let count = 5u128.checked_pow(horizon).unwrap_or(u128::MAX);
    if count > u128::from(cap) {
        return Err(GridError::CapExceeded { count, cap });
    }
    let mut cells: Vec<Cell> = Vec::new();
    let mut column: BTreeMap<Cell, usize> = BTreeMap::new();
    let mut sparse = Vec::with_capacity(count as usize);
    let t = horizon as usize;
    let mut idx = alloc::vec![0usize; t];
    for _ in 0..count {
        let mut dist: BTreeMap<Cell, f64> = BTreeMap::new();
        dist.insert(start, 1.0);
        for &a in &idx {
            let mut next = BTreeMap::new();
            for (&c, &p) in &dist {
                for (to, q) in mdp.transition(c, Move::ALL[a]) {
                    *next.entry(to).or_insert(0.0) += p * q;
                }
            }
            dist = next;
        }
        let row: Vec<(usize, f64)> = dist
            .into_iter()
            .map(|(c, p)| {
                let j = *column.entry(c).or_insert_with(|| {
                    cells.push(c);
                    cells.len() - 1
                });
                (j, p)
            })
            .collect();
        sparse.push(row);
        for k in (0..t).rev() {
            idx[k] += 1;
            if idx[k] < Move::ALL.len() {
                break;
            }
            idx[k] = 0;
        }
    }
    let rows = sparse
        .into_iter()
        .map(|entries| {
            let mut row = alloc::vec![0.0; cells.len()];
            for (j, p) in entries {
                row[j] += p;
            }
            row
        })
        .collect();
    Ok((cells, ChannelMatrix::new(rows)?))
}

/// `max_π I(a_{1:T}; s_T | s_0 = start)` in bits.
pub fn env_empowerment(mdp: &GridMDP, start: Cell, horizon: u32, tol: f64, cap: u64) -> Result<EmpowermentReport, GridError> {
    let (_, matrix) = action_channel(mdp, start, horizon, cap)?;
    Ok(report(&matrix, Estimator::Capacity, tol, 0)?)
}
