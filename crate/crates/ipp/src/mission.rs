use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{IppError, Result};
use crate::map::{GridMap, Measurement};
use crate::planner::{plan_path, travel_cost, Lattice, PlanStatus, PlannerConfig, Waypoint};
use crate::scheduler::{precision_scheduler, precision_signal, Phase, SchedulerMode};
use crate::sensor::{observe, SensorModel};
use crate::world::GroundTruth;

#[derive(Clone, Debug, PartialEq)]
pub struct MissionConfig {
    pub planner: PlannerConfig,
    /// lattice spacing in cells
    pub lattice_stride: usize,
    /// flight budget, meters
    pub budget: f64,
    /// stop once the mean variance over scored cells drops below this
    pub variance_threshold: f64,
    /// m/s
    pub speed: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub classification_threshold: f64,
    pub scheduler: SchedulerMode,
    /// starting pose; defaults to the first cell at the top level
    pub start: Option<Waypoint>,
    /// keep a map snapshot every this many fusion cycles (0 keeps none)
    pub snapshot_every: usize,
    pub seed: u64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            lattice_stride: 2,
            budget: 8000.0,
            variance_threshold: 0.01,
            speed: 5.0,
            prior_mean: 0.5,
            prior_variance: 1.0,
            classification_threshold: 0.5,
            scheduler: SchedulerMode::Budget,
            start: None,
            snapshot_every: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventKind {
    Plan { waypoints: usize },
    /// position change, meters (x, y, altitude)
    Move { from: [f64; 3], to: [f64; 3] },
    Capture { pose: Waypoint, cells: usize },
    /// `measurements` fused; trace of the variance map afterwards
    Fusion { measurements: usize, trace_after: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub phase: Phase,
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MissionState {
    pub map: GridMap,
    pub truth: GroundTruth,
    /// last waypoint reached
    pub pose: Waypoint,
    /// current position including altitude, meters
    pub position: [f64; 3],
    pub budget_remaining: f64,
    pub log: Vec<Event>,
    pub phase: Phase,
    pub precision_signal: f64,
    pub time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    Resolved,
    BudgetExhausted,
    TimeLimit,
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            StopReason::Resolved => "resolved",
            StopReason::BudgetExhausted => "budget_exhausted",
            StopReason::TimeLimit => "time_limit",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleRecord {
    pub cycle: usize,
    pub t: f64,
    pub trace_variance: f64,
    pub mean_variance: f64,
    pub budget_remaining: f64,
    pub fused: usize,
}

/// Counts over scored cells at the classification threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
}

impl Confusion {
    pub fn recall(&self) -> f64 {
        let pos = self.true_positive + self.false_negative;
        if pos == 0 {
            1.0
        } else {
            self.true_positive as f64 / pos as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MissionOutcome {
    pub state: MissionState,
    pub stop: StopReason,
    pub cycles: Vec<CycleRecord>,
    pub confusion: Confusion,
    pub path_length: f64,
    pub fusion_events: usize,
    pub snapshots: Vec<(usize, GridMap)>,
    /// oscillatory mode only
    pub perception_ticks: usize,
    pub total_ticks: usize,
}

fn position_of(w: &Waypoint, sensor: &SensorModel) -> [f64; 3] {
    [w.x, w.y, sensor.altitudes[w.level]]
}

struct Runner<'a> {
    sensor: &'a SensorModel,
    config: &'a MissionConfig,
    lattice: Lattice,
    scored: Vec<bool>,
    rng: ChaCha8Rng,
    state: MissionState,
    cycles: Vec<CycleRecord>,
    snapshots: Vec<(usize, GridMap)>,
    buffer: Vec<Measurement>,
    path_length: f64,
}

impl Runner<'_> {
    fn resolved(&self) -> bool {
        self.state.map.mean_variance(&self.scored) < self.config.variance_threshold
    }

    fn log(&mut self, kind: EventKind) {
        self.state.log.push(Event {
            t: self.state.time,
            phase: self.state.phase,
            kind,
        });
    }

    fn capture(&mut self) -> Result<()> {
        let frame = observe(&self.state.truth, &self.state.pose, self.sensor, &mut self.rng)?;
        let pose = self.state.pose;
        self.log(EventKind::Capture { pose, cells: frame.len() });
        self.buffer.extend(frame);
        Ok(())
    }

    fn fuse(&mut self) -> Result<()> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        let batch = std::mem::take(&mut self.buffer);
        self.state.map.fuse(&batch)?;
        let trace = self.state.map.trace_variance();
        self.log(EventKind::Fusion {
            measurements: batch.len(),
            trace_after: trace,
        });
        let cycle = self.cycles.len() + 1;
        self.cycles.push(CycleRecord {
            cycle,
            t: self.state.time,
            trace_variance: trace,
            mean_variance: self.state.map.mean_variance(&self.scored),
            budget_remaining: self.state.budget_remaining,
            fused: batch.len(),
        });
        let every = self.config.snapshot_every;
        if every > 0 && cycle % every == 0 {
            self.snapshots.push((cycle, self.state.map.clone()));
        }
        Ok(())
    }

    fn plan(&mut self) -> Result<Option<Vec<Waypoint>>> {
        let out = plan_path(
            &self.state.map,
            &self.state.pose,
            self.sensor,
            self.state.budget_remaining,
            &self.config.planner,
            &self.lattice,
        )?;
        if out.status == PlanStatus::Exhausted {
            return Ok(None);
        }
        self.log(EventKind::Plan {
            waypoints: out.path.waypoints.len(),
        });
        Ok(Some(out.path.waypoints))
    }

    fn run_budget(&mut self) -> Result<(StopReason, usize, usize)> {
        loop {
            if self.resolved() {
                return Ok((StopReason::Resolved, 0, 0));
            }
            self.state.phase = Phase::Action;
            let Some(path) = self.plan()? else {
                return Ok((StopReason::BudgetExhausted, 0, 0));
            };
            for wp in path {
                let leg = travel_cost(&self.state.pose, &wp, self.sensor);
                let from = self.state.position;
                self.state.time += leg / self.config.speed;
                self.state.budget_remaining -= leg;
                self.path_length += leg;
                self.state.pose = wp;
                self.state.position = position_of(&wp, self.sensor);
                self.log(EventKind::Move {
                    from,
                    to: self.state.position,
                });
                self.capture()?;
            }
            self.state.phase = Phase::Perception;
            self.fuse()?;
        }
    }

    fn run_oscillatory(
        &mut self,
        osc: &crate::scheduler::OscillatorConfig,
        ticks_per_period: usize,
        max_time: f64,
    ) -> Result<(StopReason, usize, usize)> {
        osc.validate()?;
        if ticks_per_period == 0 {
            return Err(IppError::InvalidParameter("ticks per period must be positive".into()));
        }
        let dt = osc.period() / ticks_per_period as f64;
        let mut queue: VecDeque<Waypoint> = VecDeque::new();
        let mut exhausted = false;
        let (mut perception, mut total) = (0usize, 0usize);
        let mut k = 0usize;
        loop {
            let t = (k as f64 + 0.5) * dt;
            if t > max_time {
                return Ok((StopReason::TimeLimit, perception, total));
            }
            k += 1;
            total += 1;
            self.state.time = t;
            self.state.precision_signal = precision_signal(t, osc);
            self.state.phase = precision_scheduler(t, osc);
            match self.state.phase {
                Phase::Perception => {
                    perception += 1;
                    self.fuse()?;
                    if self.resolved() {
                        return Ok((StopReason::Resolved, perception, total));
                    }
                    if exhausted && self.buffer.is_empty() {
                        return Ok((StopReason::BudgetExhausted, perception, total));
                    }
                }
                Phase::Action => {
                    if queue.is_empty() && !exhausted {
                        match self.plan()? {
                            Some(path) => queue.extend(path),
                            None => exhausted = true,
                        }
                    }
                    let Some(target) = queue.front().copied() else { continue };
                    let goal = position_of(&target, self.sensor);
                    let from = self.state.position;
                    let gap: f64 = (0..3).map(|i| (goal[i] - from[i]).powi(2)).sum::<f64>().sqrt();
                    let step = self.config.speed * dt;
                    let (to, moved, arrived) = if gap <= step {
                        (goal, gap, true)
                    } else {
                        let f = step / gap;
                        ([0, 1, 2].map(|i| from[i] + f * (goal[i] - from[i])), step, false)
                    };
                    self.state.position = to;
                    self.state.budget_remaining -= moved;
                    self.path_length += moved;
                    self.log(EventKind::Move { from, to });
                    if arrived {
                        queue.pop_front();
                        self.state.pose = target;
                        self.capture()?;
                    }
                }
            }
        }
    }
}

/// Plan, fly and fuse until the map is resolved, the budget runs out or
/// (oscillatory mode) the time limit is reached. `initial` is fused into
/// the prior map before the first plan.
pub fn run_mission(
    truth: &GroundTruth,
    sensor: &SensorModel,
    config: &MissionConfig,
    initial: &[Measurement],
) -> Result<MissionOutcome> {
    sensor.validate()?;
    if !(config.speed > 0.0) {
        return Err(IppError::InvalidParameter("speed must be positive".into()));
    }
    if !(config.budget >= 0.0) {
        return Err(IppError::InvalidParameter("budget must be non-negative".into()));
    }
    let grid = truth.grid;
    let mut map = GridMap::new(grid.width, grid.height, grid.cell_size, config.prior_mean, config.prior_variance)?;
    map.fuse(initial)?;
    let lattice = Lattice::regular(grid, sensor, config.lattice_stride, &truth.no_fly)?;
    let start = config.start.unwrap_or_else(|| {
        let (x, y) = grid.center(0);
        Waypoint::new(x, y, sensor.levels() - 1)
    });
    crate::sensor::check_pose(grid, &start, sensor)?;
    let state = MissionState {
        map,
        truth: truth.clone(),
        pose: start,
        position: position_of(&start, sensor),
        budget_remaining: config.budget,
        log: Vec::new(),
        phase: Phase::Action,
        precision_signal: 0.0,
        time: 0.0,
    };
    let mut runner = Runner {
        sensor,
        config,
        lattice,
        scored: truth.scored(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        state,
        cycles: Vec::new(),
        snapshots: Vec::new(),
        buffer: Vec::new(),
        path_length: 0.0,
    };
    let (stop, perception_ticks, total_ticks) = match config.scheduler {
        SchedulerMode::Budget => runner.run_budget()?,
        SchedulerMode::Oscillatory {
            oscillator,
            ticks_per_period,
            max_time,
        } => runner.run_oscillatory(&oscillator, ticks_per_period, max_time)?,
    };
    let predicted = runner.state.map.classify(config.classification_threshold);
    let mut confusion = Confusion::default();
    for c in (0..grid.len()).filter(|&c| runner.scored[c]) {
        match (truth.occupied[c], predicted[c]) {
            (true, true) => confusion.true_positive += 1,
            (false, true) => confusion.false_positive += 1,
            (true, false) => confusion.false_negative += 1,
            (false, false) => confusion.true_negative += 1,
        }
    }
    let fusion_events = runner.cycles.len();
    if runner.snapshots.last().map(|s| s.0) != Some(fusion_events) {
        runner.snapshots.push((fusion_events, runner.state.map.clone()));
    }
    Ok(MissionOutcome {
        state: runner.state,
        stop,
        cycles: runner.cycles,
        confusion,
        path_length: runner.path_length,
        fusion_events,
        snapshots: runner.snapshots,
        perception_ticks,
        total_ticks,
    })
}
