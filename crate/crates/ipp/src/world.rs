use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{IppError, Result};
use crate::map::{Grid, Measurement};
use crate::sensor::SensorModel;

/// An empty cell that fools the detector more often than the base rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoy {
    pub cell: (usize, usize),
    pub false_positive_rate: f64,
    /// fuse one spurious lowest-level detection here before the mission
    pub initial_detection: bool,
}

/// World layout; targets are placed per seed.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub targets: usize,
    /// minimum Chebyshev distance between targets, in cells
    pub target_spacing: usize,
    /// (x, y, w, h) in cells; excluded from flight and from target placement
    pub no_fly: Option<(usize, usize, usize, usize)>,
    pub decoys: Vec<Decoy>,
}

impl Default for Scenario {
    /// 40 x 40 m at 1 m cells, seven targets around a central 8 x 8 block.
    fn default() -> Self {
        Self {
            width: 40,
            height: 40,
            cell_size: 1.0,
            targets: 7,
            target_spacing: 3,
            no_fly: Some((16, 16, 8, 8)),
            decoys: Vec::new(),
        }
    }
}

impl Scenario {
    /// Default world with one decoy that starts out as a spurious detection.
    pub fn false_positive() -> Self {
        Self {
            decoys: vec![Decoy {
                cell: (8, 31),
                false_positive_rate: 0.1,
                initial_detection: true,
            }],
            ..Self::default()
        }
    }

    pub fn grid(&self) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            cell_size: self.cell_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || !(self.cell_size > 0.0) {
            return Err(IppError::InvalidParameter("world needs positive size".into()));
        }
        if let Some((x, y, w, h)) = self.no_fly {
            if x + w > self.width || y + h > self.height {
                return Err(IppError::InvalidParameter("no-fly block exceeds the world".into()));
            }
        }
        for d in &self.decoys {
            if d.cell.0 >= self.width || d.cell.1 >= self.height {
                return Err(IppError::InvalidParameter(format!("decoy {:?} outside the world", d.cell)));
            }
            if !(0.0..=1.0).contains(&d.false_positive_rate) {
                return Err(IppError::InvalidParameter("decoy rate must be a probability".into()));
            }
        }
        Ok(())
    }

    /// Mask of cells inside the no-fly block.
    pub fn no_fly_mask(&self) -> Vec<bool> {
        let g = self.grid();
        (0..g.len())
            .map(|c| {
                let (cx, cy) = g.coords(c);
                self.no_fly
                    .is_some_and(|(x, y, w, h)| cx >= x && cx < x + w && cy >= y && cy < y + h)
            })
            .collect()
    }

    /// Places the targets with a seeded rejection sampler.
    pub fn generate(&self, seed: u64) -> Result<GroundTruth> {
        self.validate()?;
        let grid = self.grid();
        let blocked = self.no_fly_mask();
        let decoy_cells: Vec<usize> = self.decoys.iter().map(|d| grid.index(d.cell.0, d.cell.1)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut placed: Vec<(usize, usize)> = Vec::new();
        let mut attempts = 0;
        while placed.len() < self.targets {
            attempts += 1;
            if attempts > 100_000 {
                return Err(IppError::InvalidParameter("cannot place the requested targets".into()));
            }
            let cx = rng.random_range(0..self.width);
            let cy = rng.random_range(0..self.height);
            let cell = grid.index(cx, cy);
            let spaced = placed
                .iter()
                .all(|&(px, py)| px.abs_diff(cx).max(py.abs_diff(cy)) >= self.target_spacing);
            if !blocked[cell] && !decoy_cells.contains(&cell) && spaced {
                placed.push((cx, cy));
            }
        }
        let mut occupied = vec![false; grid.len()];
        for (cx, cy) in placed {
            occupied[grid.index(cx, cy)] = true;
        }
        Ok(GroundTruth {
            grid,
            occupied,
            no_fly: blocked,
            decoys: self
                .decoys
                .iter()
                .map(|d| (grid.index(d.cell.0, d.cell.1), d.false_positive_rate))
                .collect(),
        })
    }

    /// Spurious detections to fuse before the mission starts.
    pub fn initial_measurements(&self, sensor: &SensorModel) -> Vec<Measurement> {
        let grid = self.grid();
        self.decoys
            .iter()
            .filter(|d| d.initial_detection)
            .map(|d| Measurement {
                cell: grid.index(d.cell.0, d.cell.1),
                d: 1.0,
                r: sensor.variance[0],
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub grid: Grid,
    pub occupied: Vec<bool>,
    pub no_fly: Vec<bool>,
    /// (cell, false-positive rate)
    pub decoys: Vec<(usize, f64)>,
}

impl GroundTruth {
    pub fn false_positive_rate(&self, cell: usize, sensor: &SensorModel) -> f64 {
        self.decoys
            .iter()
            .find(|(c, _)| *c == cell)
            .map_or(sensor.false_positive_rate, |(_, p)| *p)
    }

    /// Cells that count toward stopping and scoring.
    pub fn scored(&self) -> Vec<bool> {
        self.no_fly.iter().map(|b| !b).collect()
    }

    pub fn target_count(&self) -> usize {
        self.occupied.iter().filter(|o| **o).count()
    }
}
