use std::f64::consts::PI;

use crate::error::{IppError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Perception,
    Action,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Perception => "perception",
            Phase::Action => "action",
        }
    }
}

/// π(t) = π₀ + a·sin(2πft), perception while π(t) ≥ threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorConfig {
    pub base: f64,
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
    pub threshold: f64,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        Self {
            base: 1.0,
            amplitude: 1.0,
            frequency: 4.0,
            threshold: 1.0,
        }
    }
}

impl OscillatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) {
            return Err(IppError::InvalidParameter(format!("amplitude must be non-negative, got {}", self.amplitude)));
        }
        if !(self.frequency > 0.0) {
            return Err(IppError::InvalidParameter(format!("frequency must be positive, got {}", self.frequency)));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }
}

pub fn precision_signal(t: f64, config: &OscillatorConfig) -> f64 {
    config.base + config.amplitude * (2.0 * PI * config.frequency * t).sin()
}

pub fn precision_scheduler(t: f64, config: &OscillatorConfig) -> Phase {
    if precision_signal(t, config) >= config.threshold {
        Phase::Perception
    } else {
        Phase::Action
    }
}

/// How a mission alternates flying and fusing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SchedulerMode {
    /// fly a whole planned path, then fuse everything it captured
    Budget,
    /// gate each tick by the precision oscillator
    Oscillatory {
        oscillator: OscillatorConfig,
        /// ticks per oscillator period
        ticks_per_period: usize,
        /// simulated seconds before the mission is cut off
        max_time: f64,
    },
}
