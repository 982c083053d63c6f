use rand::Rng;

use crate::error::{IppError, Result};
use crate::map::{Grid, Measurement};
use crate::planner::Waypoint;
use crate::world::GroundTruth;

/// Synthetic detector. Level `k` flies at `altitudes[k]` meters, sees the
/// cells whose centers lie within `footprint_radius[k]` meters of the pose
/// and reports with variance `variance[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorModel {
    pub altitudes: Vec<f64>,
    pub footprint_radius: Vec<f64>,
    pub variance: Vec<f64>,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            altitudes: vec![4.0, 8.0, 12.0],
            footprint_radius: vec![1.0, 2.0, 3.0],
            variance: vec![0.1, 0.2, 0.3],
            false_positive_rate: 0.05,
            false_negative_rate: 0.05,
        }
    }
}

impl SensorModel {
    pub fn levels(&self) -> usize {
        self.altitudes.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.altitudes.len();
        if k == 0 || self.footprint_radius.len() != k || self.variance.len() != k {
            return Err(IppError::InvalidParameter(
                "altitudes, footprint radii and variances need one entry per level".into(),
            ));
        }
        for rate in [self.false_positive_rate, self.false_negative_rate] {
            if !(0.0..0.5).contains(&rate) {
                return Err(IppError::InvalidParameter(format!("detector error rates must lie in [0, 0.5), got {rate}")));
            }
        }
        if self.variance.iter().any(|r| !(*r > 0.0)) {
            return Err(IppError::InvalidParameter("measurement variances must be positive".into()));
        }
        if self.footprint_radius.iter().any(|r| !(*r >= 0.0)) {
            return Err(IppError::InvalidParameter("footprint radii must be non-negative".into()));
        }
        if self.variance.windows(2).any(|w| w[1] < w[0]) || self.altitudes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(IppError::InvalidParameter("altitudes must increase and variances must not decrease with level".into()));
        }
        Ok(())
    }

    /// Cells seen from `pose`, in row-major order.
    pub fn footprint(&self, map: Grid, pose: &Waypoint) -> Vec<usize> {
        let radius = self.footprint_radius[pose.level];
        let cs = map.cell_size;
        let reach = (radius / cs).ceil() as i64 + 1;
        let cx = (pose.x / cs).floor() as i64;
        let cy = (pose.y / cs).floor() as i64;
        let mut cells = Vec::new();
        for y in (cy - reach).max(0)..=(cy + reach).min(map.height as i64 - 1) {
            for x in (cx - reach).max(0)..=(cx + reach).min(map.width as i64 - 1) {
                let dx = (x as f64 + 0.5) * cs - pose.x;
                let dy = (y as f64 + 0.5) * cs - pose.y;
                if (dx * dx + dy * dy).sqrt() <= radius + 1e-9 {
                    cells.push(map.index(x as usize, y as usize));
                }
            }
        }
        cells
    }
}

pub(crate) fn check_pose(map: Grid, pose: &Waypoint, sensor: &SensorModel) -> Result<()> {
    let (w, h) = map.extent();
    if !(0.0..=w).contains(&pose.x) || !(0.0..=h).contains(&pose.y) || pose.level >= sensor.levels() {
        return Err(IppError::OutOfBounds {
            x: pose.x,
            y: pose.y,
            width: w,
            height: h,
        });
    }
    Ok(())
}

/// One detector frame: a Bernoulli detection per footprint cell, with
/// probability 1 - FN on occupied cells and the false-positive rate (or a
/// decoy's own rate) on empty ones.
pub fn observe<R: Rng + ?Sized>(
    truth: &GroundTruth,
    pose: &Waypoint,
    sensor: &SensorModel,
    rng: &mut R,
) -> Result<Vec<Measurement>> {
    check_pose(truth.grid, pose, sensor)?;
    let r = sensor.variance[pose.level];
    Ok(sensor
        .footprint(truth.grid, pose)
        .into_iter()
        .map(|cell| {
            let p = if truth.occupied[cell] {
                1.0 - sensor.false_negative_rate
            } else {
                truth.false_positive_rate(cell, sensor)
            };
            let d = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
            Measurement { cell, d, r }
        })
        .collect())
}
