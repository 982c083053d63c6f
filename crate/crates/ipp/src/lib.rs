//! Grid occupancy mapping with per-cell Kalman fusion, greedy planning on
//! expected map precision, and an oscillatory perception/action gate.

pub mod error;
pub mod map;
pub mod mission;
pub mod planner;
pub mod scheduler;
pub mod sensor;
pub mod world;

pub use error::{IppError, Result};
pub use map::{fuse_measurement, Grid, GridMap, Measurement};
pub use mission::{run_mission, Confusion, CycleRecord, Event, EventKind, MissionConfig, MissionOutcome, MissionState, StopReason};
pub use planner::{expected_precision_gain, plan_path, travel_cost, Lattice, Path, PlanOutcome, PlanStatus, PlannerConfig, Waypoint};
pub use scheduler::{precision_scheduler, precision_signal, OscillatorConfig, Phase, SchedulerMode};
pub use sensor::{observe, SensorModel};
pub use world::{Decoy, GroundTruth, Scenario};
