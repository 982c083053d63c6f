use crate::error::{IppError, Result};
use crate::map::{Grid, GridMap};
use crate::sensor::{check_pose, SensorModel};

/// Pose in meters plus an altitude level index into the sensor tables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub level: usize,
}

impl Waypoint {
    pub fn new(x: f64, y: f64, level: usize) -> Self {
        Self { x, y, level }
    }
}

/// Straight-line distance in meters, altitude included.
pub fn travel_cost(a: &Waypoint, b: &Waypoint, sensor: &SensorModel) -> f64 {
    let dz = sensor.altitudes[a.level] - sensor.altitudes[b.level];
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + dz * dz).sqrt()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Path {
    pub waypoints: Vec<Waypoint>,
    /// total length from the starting pose, meters
    pub cost: f64,
}

/// Candidate waypoints with their footprints precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    pub points: Vec<Waypoint>,
    footprints: Vec<Vec<usize>>,
}

impl Lattice {
    pub fn new(grid: Grid, sensor: &SensorModel, points: Vec<Waypoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(IppError::InvalidParameter("lattice is empty".into()));
        }
        for p in &points {
            check_pose(grid, p, sensor)?;
        }
        let footprints = points.iter().map(|p| sensor.footprint(grid, p)).collect();
        Ok(Self { points, footprints })
    }

    /// Cell centers every `stride` cells at every altitude level, skipping
    /// cells flagged in `blocked`.
    pub fn regular(grid: Grid, sensor: &SensorModel, stride: usize, blocked: &[bool]) -> Result<Self> {
        if stride == 0 {
            return Err(IppError::InvalidParameter("lattice stride must be positive".into()));
        }
        let mut points = Vec::new();
        for level in 0..sensor.levels() {
            for cy in (0..grid.height).step_by(stride) {
                for cx in (0..grid.width).step_by(stride) {
                    let cell = grid.index(cx, cy);
                    if blocked.get(cell).copied().unwrap_or(false) {
                        continue;
                    }
                    let (x, y) = grid.center(cell);
                    points.push(Waypoint::new(x, y, level));
                }
            }
        }
        Self::new(grid, sensor, points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn footprint(&self, i: usize) -> &[usize] {
        &self.footprints[i]
    }
}

/// Variance reduction from fusing one frame over `cells` into `variance`.
fn frame_gain(variance: &[f64], cells: &[usize], r: f64) -> f64 {
    cells.iter().map(|&c| variance[c] - variance[c] * r / (variance[c] + r)).sum()
}

fn apply_frame(variance: &mut [f64], cells: &[usize], r: f64) {
    for &c in cells {
        variance[c] = variance[c] * r / (variance[c] + r);
    }
}

/// trace(Σ_prior) - trace(Σ_post) after fusing one frame at every waypoint.
/// Only variances enter, so no measurement values are needed.
pub fn expected_precision_gain(map: &GridMap, path: &[Waypoint], sensor: &SensorModel) -> f64 {
    let mut var = map.variance.clone();
    for w in path {
        let cells = sensor.footprint(map.grid(), w);
        apply_frame(&mut var, &cells, sensor.variance[w.level]);
    }
    map.trace_variance() - var.iter().sum::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlannerConfig {
    /// waypoints per plan
    pub horizon: usize,
    /// longest single leg, meters
    pub max_leg: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 3,
            max_leg: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanStatus {
    /// all `horizon` waypoints chosen
    Complete,
    /// ran out of reachable waypoints part way
    Truncated,
    /// no waypoint reachable within the budget
    Exhausted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOutcome {
    pub path: Path,
    /// lattice index of each chosen waypoint
    pub indices: Vec<usize>,
    pub status: PlanStatus,
}

/// Greedy receding-horizon plan: each step takes the reachable lattice
/// point with the largest precision gain per meter, then updates a virtual
/// variance map. Ties go to the shorter leg, then to the lower index.
/// Zero-length legs are not candidates.
pub fn plan_path(
    map: &GridMap,
    pose: &Waypoint,
    sensor: &SensorModel,
    budget: f64,
    config: &PlannerConfig,
    lattice: &Lattice,
) -> Result<PlanOutcome> {
    if config.horizon == 0 {
        return Err(IppError::InvalidParameter("horizon must be at least 1".into()));
    }
    check_pose(map.grid(), pose, sensor)?;
    let mut var = map.variance.clone();
    let mut pos = *pose;
    let mut path = Path::default();
    let mut indices = Vec::new();
    for _ in 0..config.horizon {
        let mut best: Option<(usize, f64, f64)> = None;
        for (i, cand) in lattice.points.iter().enumerate() {
            let cost = travel_cost(&pos, cand, sensor);
            if cost <= 1e-12 || cost > config.max_leg || path.cost + cost > budget {
                continue;
            }
            let score = frame_gain(&var, lattice.footprint(i), sensor.variance[cand.level]) / cost;
            let better = match best {
                None => true,
                Some((_, s, c)) => score > s || (score == s && cost < c),
            };
            if better {
                best = Some((i, score, cost));
            }
        }
        let Some((i, _, cost)) = best else { break };
        let wp = lattice.points[i];
        apply_frame(&mut var, lattice.footprint(i), sensor.variance[wp.level]);
        path.waypoints.push(wp);
        path.cost += cost;
        indices.push(i);
        pos = wp;
    }
    let status = match indices.len() {
        0 => PlanStatus::Exhausted,
        k if k < config.horizon => PlanStatus::Truncated,
        _ => PlanStatus::Complete,
    };
    Ok(PlanOutcome { path, indices, status })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensor() -> SensorModel {
        SensorModel {
            altitudes: vec![1.0],
            footprint_radius: vec![0.0],
            variance: vec![1.0],
            false_positive_rate: 0.0,
            false_negative_rate: 0.0,
        }
    }

    #[test]
    fn single_cell_gain_halves_variance() {
        let map = GridMap::new(3, 1, 1.0, 0.5, 1.0).unwrap();
        let s = sensor();
        assert_eq!(expected_precision_gain(&map, &[Waypoint::new(0.5, 0.5, 0)], &s), 0.5);
        let two = [Waypoint::new(0.5, 0.5, 0), Waypoint::new(2.5, 0.5, 0)];
        assert_eq!(expected_precision_gain(&map, &two, &s), 1.0);
        // a corner pose with zero radius sees no cell center
        assert_eq!(expected_precision_gain(&map, &[Waypoint::new(1.0, 1.0, 0)], &s), 0.0);
        assert_eq!(expected_precision_gain(&map, &[], &s), 0.0);
    }

    #[test]
    fn equal_gain_prefers_nearer() {
        let map = GridMap::new(5, 1, 1.0, 0.5, 1.0).unwrap();
        let s = sensor();
        let lattice = Lattice::new(
            map.grid(),
            &s,
            vec![Waypoint::new(4.5, 0.5, 0), Waypoint::new(0.5, 0.5, 0), Waypoint::new(3.5, 0.5, 0)],
        )
        .unwrap();
        // from x = 2.5 both neighbors score gain/cost = 0.5; 4.5 scores 0.25
        let out = plan_path(&map, &Waypoint::new(2.5, 0.5, 0), &s, 10.0, &PlannerConfig { horizon: 1, max_leg: 10.0 }, &lattice).unwrap();
        assert_eq!(out.indices, vec![2]);
    }

    #[test]
    fn exhausted_budget_gives_empty_path() {
        let map = GridMap::new(5, 1, 1.0, 0.5, 1.0).unwrap();
        let s = sensor();
        let lattice = Lattice::new(map.grid(), &s, vec![Waypoint::new(4.5, 0.5, 0)]).unwrap();
        let out = plan_path(&map, &Waypoint::new(0.5, 0.5, 0), &s, 1.0, &PlannerConfig::default(), &lattice).unwrap();
        assert_eq!(out.status, PlanStatus::Exhausted);
        assert!(out.path.waypoints.is_empty());
        assert!(plan_path(&map, &Waypoint::new(9.0, 0.5, 0), &s, 1.0, &PlannerConfig::default(), &lattice).is_err());
    }
}
