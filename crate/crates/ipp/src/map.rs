use std::fmt::Write as _;

use crate::error::{IppError, Result};

/// One detector outcome for one cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub cell: usize,
    /// detection value in [0, 1]
    pub d: f64,
    /// measurement variance
    pub r: f64,
}

/// Cell geometry shared by the map and the ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.width + cx
    }

    pub fn coords(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    /// Center of a cell in meters.
    pub fn center(&self, cell: usize) -> (f64, f64) {
        let (cx, cy) = self.coords(cell);
        ((cx as f64 + 0.5) * self.cell_size, (cy as f64 + 0.5) * self.cell_size)
    }

    pub fn extent(&self) -> (f64, f64) {
        (self.width as f64 * self.cell_size, self.height as f64 * self.cell_size)
    }
}

/// Occupancy means and their variances, row-major with `y` as the row.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    /// meters per cell
    pub cell_size: f64,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GridMap {
    pub fn new(width: usize, height: usize, cell_size: f64, prior_mean: f64, prior_variance: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(IppError::InvalidParameter("map must have at least one cell".into()));
        }
        if !(cell_size > 0.0) {
            return Err(IppError::InvalidParameter(format!("cell size must be positive, got {cell_size}")));
        }
        if !(prior_variance > 0.0) || !prior_variance.is_finite() {
            return Err(IppError::InvalidParameter(format!("prior variance must be positive, got {prior_variance}")));
        }
        let n = width * height;
        Ok(Self {
            width,
            height,
            cell_size,
            mean: vec![prior_mean.clamp(0.0, 1.0); n],
            variance: vec![prior_variance; n],
        })
    }

    pub fn grid(&self) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            cell_size: self.cell_size,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn trace_variance(&self) -> f64 {
        self.variance.iter().sum()
    }

    /// Mean variance over the cells where `mask` is true.
    pub fn mean_variance(&self, mask: &[bool]) -> f64 {
        let (sum, count) = self
            .variance
            .iter()
            .zip(mask)
            .filter(|(_, m)| **m)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Occupied iff the mean exceeds `threshold`.
    pub fn classify(&self, threshold: f64) -> Vec<bool> {
        self.mean.iter().map(|m| *m > threshold).collect()
    }

    /// In-place Kalman update; see [`fuse_measurement`].
    pub fn fuse(&mut self, measurements: &[Measurement]) -> Result<()> {
        for m in measurements {
            if m.cell >= self.len() {
                return Err(IppError::CellOutOfRange(m.cell));
            }
            if !(m.r > 0.0) {
                return Err(IppError::InvalidParameter(format!("measurement variance must be positive, got {}", m.r)));
            }
        }
        for m in measurements {
            let var = self.variance[m.cell];
            if m.r.is_infinite() {
                continue;
            }
            let k = var / (var + m.r);
            let mean = self.mean[m.cell] + k * (m.d - self.mean[m.cell]);
            self.mean[m.cell] = mean.clamp(0.0, 1.0);
            self.variance[m.cell] = (1.0 - k) * var;
        }
        Ok(())
    }

    /// Space-separated rows of `values`, one line per map row.
    pub fn grid_text(&self, values: &[f64]) -> String {
        let mut out = String::new();
        for row in values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

/// Scalar Kalman update of every observed cell:
/// K = σ²/(σ²+r), mean += K(d - mean), σ² = (1-K)σ².
/// Measurements are applied in order; cells not listed are untouched.
pub fn fuse_measurement(map: &GridMap, measurements: &[Measurement]) -> Result<GridMap> {
    let mut out = map.clone();
    out.fuse(measurements)?;
    Ok(out)
}
