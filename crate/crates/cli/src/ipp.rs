use precis_ipp::{
    run_mission, Decoy, EventKind, MissionConfig, MissionOutcome, OscillatorConfig, PlannerConfig, Scenario, SchedulerMode,
    SensorModel,
};
use rayon::prelude::*;

use crate::config::IppParams;
use crate::error::CliError;
use crate::output::{num, Sink, Table};

pub struct IppSetup {
    pub scenario: Scenario,
    pub sensor: SensorModel,
    pub mission: MissionConfig,
}

pub fn ipp_setup(p: &IppParams) -> Result<IppSetup, CliError> {
    let no_fly = match p.no_fly.as_slice() {
        [] => None,
        &[x, y, w, h] => Some((x, y, w, h)),
        _ => return Err(CliError::Config("no_fly must be [x, y, w, h] or empty".into())),
    };
    let scenario = Scenario {
        width: p.width,
        height: p.height,
        cell_size: p.cell_size,
        targets: p.targets,
        target_spacing: p.target_spacing,
        no_fly,
        decoys: p
            .decoys
            .iter()
            .map(|d| Decoy {
                cell: (d.cell[0], d.cell[1]),
                false_positive_rate: d.false_positive_rate,
                initial_detection: d.initial_detection,
            })
            .collect(),
    };
    let sensor = SensorModel {
        altitudes: p.altitudes.clone(),
        footprint_radius: p.footprint_radius.clone(),
        variance: p.measurement_variance.clone(),
        false_positive_rate: p.false_positive_rate,
        false_negative_rate: p.false_negative_rate,
    };
    let config_err = |e: precis_ipp::IppError| CliError::Config(e.to_string());
    scenario.validate().map_err(config_err)?;
    sensor.validate().map_err(config_err)?;
    let oscillator = OscillatorConfig {
        base: p.base,
        amplitude: p.amplitude,
        frequency: p.frequency,
        threshold: p.threshold,
    };
    let scheduler = match p.scheduler.as_str() {
        "budget" => SchedulerMode::Budget,
        "oscillatory" => {
            oscillator.validate().map_err(config_err)?;
            SchedulerMode::Oscillatory {
                oscillator,
                ticks_per_period: p.ticks_per_period,
                max_time: p.max_time,
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "scheduler must be \"budget\" or \"oscillatory\", got {other:?}"
            )))
        }
    };
    if p.horizon == 0 || p.lattice_stride == 0 || !(p.max_leg > 0.0) || !(p.speed > 0.0) || !(p.budget >= 0.0) {
        return Err(CliError::Config("horizon, lattice_stride, max_leg and speed must be positive; budget non-negative".into()));
    }
    let mission = MissionConfig {
        planner: PlannerConfig {
            horizon: p.horizon,
            max_leg: p.max_leg,
        },
        lattice_stride: p.lattice_stride,
        budget: p.budget,
        variance_threshold: p.variance_threshold,
        speed: p.speed,
        prior_mean: p.prior_mean,
        prior_variance: p.prior_variance,
        classification_threshold: p.classification_threshold,
        scheduler,
        start: None,
        snapshot_every: p.snapshot_every,
        seed: 0,
    };
    Ok(IppSetup { scenario, sensor, mission })
}

#[derive(Clone, Debug)]
pub struct DecoyResult {
    pub cell: usize,
    pub final_mean: f64,
    pub classified_occupied: bool,
    /// frames whose footprint covered the decoy
    pub visits: usize,
}

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub outcome: MissionOutcome,
    pub decoys: Vec<DecoyResult>,
}

#[derive(Clone, Debug)]
pub struct IppReport {
    pub runs: Vec<SeedOutcome>,
}

pub fn run_seed(setup: &IppSetup, seed: u64) -> Result<SeedOutcome, CliError> {
    let truth = setup.scenario.generate(seed)?;
    let config = MissionConfig {
        seed,
        ..setup.mission.clone()
    };
    let initial = setup.scenario.initial_measurements(&setup.sensor);
    let outcome = run_mission(&truth, &setup.sensor, &config, &initial)?;
    let decoys = truth
        .decoys
        .iter()
        .map(|&(cell, _)| {
            let visits = outcome
                .state
                .log
                .iter()
                .filter(|e| match &e.kind {
                    EventKind::Capture { pose, .. } => setup.sensor.footprint(truth.grid, pose).contains(&cell),
                    _ => false,
                })
                .count();
            DecoyResult {
                cell,
                final_mean: outcome.state.map.mean[cell],
                classified_occupied: outcome.state.map.mean[cell] > config.classification_threshold,
                visits,
            }
        })
        .collect();
    Ok(SeedOutcome { seed, outcome, decoys })
}

pub fn run_ipp(id: &str, p: &IppParams, seeds: &[u64], sink: &mut Sink) -> Result<IppReport, CliError> {
    let setup = ipp_setup(p)?;
    let runs = seeds
        .par_iter()
        .map(|&seed| run_seed(&setup, seed))
        .collect::<Result<Vec<_>, _>>()?;

    let mut table = Table::new(&[
        "seed",
        "stop",
        "fusion_events",
        "path_length",
        "budget_remaining",
        "final_trace_variance",
        "final_mean_variance",
        "true_positive",
        "false_positive",
        "false_negative",
        "true_negative",
        "recall",
        "decoy_final_mean",
        "decoy_visits",
    ]);
    for r in &runs {
        let o = &r.outcome;
        let c = o.confusion;
        let scored = o.state.truth.scored();
        let decoy = r.decoys.first();
        table.row([
            r.seed.to_string(),
            o.stop.name().to_string(),
            o.fusion_events.to_string(),
            num(o.path_length),
            num(o.state.budget_remaining),
            num(o.state.map.trace_variance()),
            num(o.state.map.mean_variance(&scored)),
            c.true_positive.to_string(),
            c.false_positive.to_string(),
            c.false_negative.to_string(),
            c.true_negative.to_string(),
            num(c.recall()),
            decoy.map(|d| num(d.final_mean)).unwrap_or_default(),
            decoy.map(|d| d.visits.to_string()).unwrap_or_default(),
        ]);
    }
    sink.table(&format!("{id}_summary.csv"), table)?;

    let mut table = Table::new(&["seed", "cycle", "t", "trace_variance", "mean_variance", "budget_remaining", "fused"]);
    for r in &runs {
        for c in &r.outcome.cycles {
            table.row([
                r.seed.to_string(),
                c.cycle.to_string(),
                num(c.t),
                num(c.trace_variance),
                num(c.mean_variance),
                num(c.budget_remaining),
                c.fused.to_string(),
            ]);
        }
    }
    sink.table(&format!("{id}_trace.csv"), table)?;

    let mut table = Table::new(&["seed", "t", "phase", "x", "y", "level", "altitude", "cells"]);
    for r in &runs {
        for e in &r.outcome.state.log {
            if let EventKind::Capture { pose, cells } = &e.kind {
                table.row([
                    r.seed.to_string(),
                    num(e.t),
                    e.phase.name().to_string(),
                    num(pose.x),
                    num(pose.y),
                    pose.level.to_string(),
                    num(setup.sensor.altitudes[pose.level]),
                    cells.to_string(),
                ]);
            }
        }
    }
    sink.table(&format!("{id}_path.csv"), table)?;

    for r in &runs {
        for (cycle, map) in &r.outcome.snapshots {
            let stem = format!("snapshots/{id}_seed{}_cycle{cycle:05}", r.seed);
            sink.write(&format!("{stem}_mean.txt"), map.grid_text(&map.mean).as_bytes())?;
            sink.write(&format!("{stem}_variance.txt"), map.grid_text(&map.variance).as_bytes())?;
        }
    }
    Ok(IppReport { runs })
}
