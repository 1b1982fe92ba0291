//! Rasterizes a simulator state into the fixed-size grid fed to the Q-network.
//!
//! Channel plan:
//! - 0: traffic occupancy, 1 where a traffic vehicle's center falls in the cell
//! - 1: that vehicle's speed divided by 20 m/s (max over vehicles sharing a cell)
//! - 2: ego marker, 1 at the ego center cell

use serde::{Deserialize, Serialize};

use crate::geometry::Point;
use crate::sim::SimState;

pub const GRID_ROWS: usize = 18;
pub const GRID_COLS: usize = 26;
pub const GRID_CHANNELS: usize = 3;
pub const GRID_LEN: usize = GRID_ROWS * GRID_COLS * GRID_CHANNELS;

pub const OCCUPANCY_CHANNEL: usize = 0;
pub const SPEED_CHANNEL: usize = 1;
pub const EGO_CHANNEL: usize = 2;

/// Speed normalization constant (the lane speed limit).
pub const SPEED_SCALE: f64 = 20.0;

/// Placement of the grid in world coordinates. Rows follow the world x axis,
/// columns the world y axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub origin: Point,
    pub cell_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl GridFrame {
    pub fn new(origin: Point, cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell_size must be positive");
        Self { origin, cell_size }
    }

    /// Floor-quantizes a world point; `None` when it falls outside the grid.
    pub fn world_to_cell(&self, p: Point) -> Option<CellIndex> {
        let r = ((p.x - self.origin.x) / self.cell_size).floor();
        let c = ((p.y - self.origin.y) / self.cell_size).floor();
        if r >= 0.0 && r < GRID_ROWS as f64 && c >= 0.0 && c < GRID_COLS as f64 {
            Some(CellIndex {
                row: r as usize,
                col: c as usize,
            })
        } else {
            None
        }
    }
}

/// Row-major (row, col, channel) tensor with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    data: Vec<f64>,
}

impl Default for OccupancyGrid {
    fn default() -> Self {
        Self::zeros()
    }
}

impl OccupancyGrid {
    pub fn zeros() -> Self {
        Self {
            data: vec![0.0; GRID_LEN],
        }
    }

    /// Wraps raw data; `None` if the length is wrong or any value leaves [0, 1].
    pub fn from_vec(data: Vec<f64>) -> Option<Self> {
        (data.len() == GRID_LEN && data.iter().all(|v| (0.0..=1.0).contains(v)))
            .then_some(Self { data })
    }

    #[inline]
    pub fn offset(row: usize, col: usize, channel: usize) -> usize {
        (row * GRID_COLS + col) * GRID_CHANNELS + channel
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[Self::offset(row, col, channel)]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: f64) {
        debug_assert!((0.0..=1.0).contains(&value));
        self.data[Self::offset(row, col, channel)] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Number of cells whose value in `channel` is nonzero.
    pub fn count_nonzero(&self, channel: usize) -> usize {
        self.data
            .iter()
            .skip(channel)
            .step_by(GRID_CHANNELS)
            .filter(|v| **v != 0.0)
            .count()
    }
}

/// Encodes the scene using vehicle reference points (centers).
pub fn encode(state: &SimState, frame: &GridFrame) -> OccupancyGrid {
    let mut grid = OccupancyGrid::zeros();
    for v in state.traffic() {
        let Some(cell) = frame.world_to_cell(state.vehicle_center(v)) else {
            continue;
        };
        grid.set(cell.row, cell.col, OCCUPANCY_CHANNEL, 1.0);
        let speed = (v.speed / SPEED_SCALE).clamp(0.0, 1.0);
        if speed > grid.get(cell.row, cell.col, SPEED_CHANNEL) {
            grid.set(cell.row, cell.col, SPEED_CHANNEL, speed);
        }
    }
    if let Some(cell) = frame.world_to_cell(state.ego_pose().0) {
        grid.set(cell.row, cell.col, EGO_CHANNEL, 1.0);
    }
    grid
}
