use std::fmt;
use std::path::Path;

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    Fig2Embedding,
    Fig3Sysid,
    Fig4Explore,
    Fig5Noise,
    IppMission,
    IppFp,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Fig2Embedding,
        Experiment::Fig3Sysid,
        Experiment::Fig4Explore,
        Experiment::Fig5Noise,
        Experiment::IppMission,
        Experiment::IppFp,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Experiment::Fig2Embedding => "fig2_embedding",
            Experiment::Fig3Sysid => "fig3_sysid",
            Experiment::Fig4Explore => "fig4_explore",
            Experiment::Fig5Noise => "fig5_noise",
            Experiment::IppMission => "ipp_mission",
            Experiment::IppFp => "ipp_fp",
        }
    }

    /// Config section read by this experiment.
    pub fn section(&self) -> &'static str {
        match self {
            Experiment::IppMission | Experiment::IppFp => "ipp",
            _ => "dem",
        }
    }

    pub fn default_seeds(&self) -> Vec<u64> {
        let n = match self {
            Experiment::Fig2Embedding | Experiment::Fig3Sysid => 20,
            Experiment::Fig4Explore | Experiment::Fig5Noise => 10,
            Experiment::IppMission | Experiment::IppFp => 50,
        };
        (0..n).collect()
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Raw config file. Sections are merged key by key over the experiment's
/// defaults; keys absent from the defaults are rejected.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seeds: Option<Vec<u64>>,
    pub dem: Option<toml::Table>,
    pub ipp: Option<toml::Table>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn section(&self, name: &str) -> Option<&toml::Table> {
        match name {
            "dem" => self.dem.as_ref(),
            _ => self.ipp.as_ref(),
        }
    }

    /// Overrides for `experiment`; a section meant for another experiment
    /// family is an error.
    pub fn overrides(&self, experiment: Experiment) -> Result<Option<&toml::Table>, CliError> {
        let own = experiment.section();
        let other = if own == "dem" { "ipp" } else { "dem" };
        if self.section(other).is_some() {
            return Err(CliError::Config(format!("section [{other}] does not apply to {experiment}")));
        }
        Ok(self.section(own))
    }
}

/// Integer literals are accepted where the default is a float.
fn coerce(default: &toml::Value, value: toml::Value) -> toml::Value {
    match (default, value) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (toml::Value::Array(d), toml::Value::Array(v)) if d.first().is_some_and(|x| x.is_float()) => {
            toml::Value::Array(v.into_iter().map(|x| coerce(&d[0], x)).collect())
        }
        (_, v) => v,
    }
}

/// Applies `overrides` to `defaults`, key by key.
pub fn resolve<T: Serialize + DeserializeOwned>(defaults: &T, overrides: Option<&toml::Table>, section: &str) -> Result<T, CliError> {
    let mut table = toml::Table::try_from(defaults).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(over) = overrides {
        for (key, value) in over {
            let Some(old) = table.get(key) else {
                return Err(CliError::Config(format!("unknown key `{key}` in [{section}]")));
            };
            let value = coerce(old, value.clone());
            table.insert(key.clone(), value);
        }
    }
    table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("[{section}]: {}", e.message())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalParams {
    /// sample period, seconds
    pub dt: f64,
    /// seconds
    pub duration: f64,
    /// noise kernel width s, shared by the embedding
    pub kernel_width: f64,
    pub sigma_z: f64,
    pub sigma_w: f64,
    /// "acceleration" or "all"
    pub process_noise: String,
}

impl SignalParams {
    fn new(sigma_z: f64, sigma_w: f64) -> Self {
        Self {
            dt: 0.1,
            duration: 32.0,
            kernel_width: 0.5,
            sigma_z,
            sigma_w,
            process_noise: "acceleration".into(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.dt > 0.0) || !(self.duration > self.dt) {
            return Err(CliError::Config("need dt > 0 and duration > dt".into()));
        }
        if !(self.kernel_width > 0.0) {
            return Err(CliError::Config("kernel_width must be positive".into()));
        }
        if !(self.sigma_z >= 0.0) || !(self.sigma_w >= 0.0) {
            return Err(CliError::Config("noise levels must be non-negative".into()));
        }
        if !matches!(self.process_noise.as_str(), "acceleration" | "all") {
            return Err(CliError::Config(format!(
                "process_noise must be \"acceleration\" or \"all\", got {:?}",
                self.process_noise
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig2Params {
    #[serde(flatten)]
    pub signal: SignalParams,
    /// embedding orders p to compare
    pub orders: Vec<usize>,
    pub input_order: usize,
    pub input_prior_precision: f64,
    /// samples dropped at each end before scoring
    pub score_margin: usize,
}

impl Default for Fig2Params {
    fn default() -> Self {
        Self {
            signal: SignalParams::new(0.01, 0.005),
            orders: (1..=6).collect(),
            input_order: 6,
            input_prior_precision: 1e-3,
            score_margin: 6,
        }
    }
}

impl Fig2Params {
    pub fn validate(&self) -> Result<(), CliError> {
        self.signal.validate()?;
        if self.orders.is_empty() || self.orders.iter().any(|p| !(1..=6).contains(p)) {
            return Err(CliError::Config(format!("orders must be a non-empty subset of 1..=6, got {:?}", self.orders)));
        }
        if !(1..=6).contains(&self.input_order) {
            return Err(CliError::Config("input_order must lie in 1..=6".into()));
        }
        if !(self.input_prior_precision > 0.0) {
            return Err(CliError::Config("input_prior_precision must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SysIdParams {
    #[serde(flatten)]
    pub signal: SignalParams,
    pub state_order: usize,
    pub input_order: usize,
    pub known_prior_precision: f64,
    pub unknown_prior_precision: f64,
    /// unknown prior means drawn uniformly in ±prior_range
    pub prior_range: f64,
    /// hold the process-noise log-precision at its true value
    pub pin_lambda_w: bool,
    pub max_iterations: usize,
}

impl SysIdParams {
    fn new(sigma_z: f64, sigma_w: f64, pin_lambda_w: bool) -> Self {
        Self {
            signal: SignalParams::new(sigma_z, sigma_w),
            state_order: 6,
            input_order: 6,
            known_prior_precision: 3.3e6,
            unknown_prior_precision: 1.0,
            prior_range: 2.0,
            pin_lambda_w,
            max_iterations: 200,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.signal.validate()?;
        if !(1..=6).contains(&self.state_order) || !(1..=6).contains(&self.input_order) {
            return Err(CliError::Config("embedding orders must lie in 1..=6".into()));
        }
        if !(self.known_prior_precision > 0.0) || !(self.unknown_prior_precision > 0.0) {
            return Err(CliError::Config("prior precisions must be positive".into()));
        }
        if !(self.prior_range >= 0.0) || self.max_iterations == 0 {
            return Err(CliError::Config("need prior_range >= 0 and max_iterations >= 1".into()));
        }
        Ok(())
    }
}

impl Default for SysIdParams {
    fn default() -> Self {
        Self::new(0.01, 0.005, false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig4Params {
    #[serde(flatten)]
    pub sysid: SysIdParams,
    pub prior_precision_grid: Vec<f64>,
}

impl Default for Fig4Params {
    fn default() -> Self {
        Self {
            sysid: SysIdParams::new(0.1, 0.05, true),
            prior_precision_grid: (-1..=6).map(|k| 10f64.powi(k)).collect(),
        }
    }
}

fn decades(grid: &[f64]) -> f64 {
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi / lo).log10()
}

impl Fig4Params {
    pub fn validate(&self) -> Result<(), CliError> {
        self.sysid.validate()?;
        if self.prior_precision_grid.iter().any(|p| !(*p > 0.0)) || !(decades(&self.prior_precision_grid) >= 6.0 - 1e-9) {
            return Err(CliError::Config("prior_precision_grid must be positive and span at least 6 decades".into()));
        }
        Ok(())
    }
}

/// The over-exposed mode uses the base prior settings; the biased mode
/// draws its prior near the truth with a high precision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fig5Params {
    #[serde(flatten)]
    pub sysid: SysIdParams,
    /// replaces sigma_z
    pub sigma_z_grid: Vec<f64>,
    pub biased_prior_precision: f64,
    /// biased prior means drawn uniformly within ±biased_offset of the truth
    pub biased_offset: f64,
}

impl Default for Fig5Params {
    fn default() -> Self {
        Self {
            sysid: SysIdParams::new(0.1, 0.005, true),
            sigma_z_grid: vec![0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0],
            biased_prior_precision: 1e6,
            biased_offset: 0.1,
        }
    }
}

impl Fig5Params {
    pub fn validate(&self) -> Result<(), CliError> {
        self.sysid.validate()?;
        if self.sigma_z_grid.iter().any(|s| !(*s > 0.0)) || !(decades(&self.sigma_z_grid) >= 3.0 - 1e-9) {
            return Err(CliError::Config("sigma_z_grid must be positive and span at least 3 decades".into()));
        }
        if !(self.biased_prior_precision > 0.0) || !(self.biased_offset >= 0.0) {
            return Err(CliError::Config("biased prior settings must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoyParams {
    /// (x, y) in cells
    pub cell: [usize; 2],
    pub false_positive_rate: f64,
    pub initial_detection: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IppParams {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub targets: usize,
    pub target_spacing: usize,
    /// [x, y, w, h] in cells, or empty
    pub no_fly: Vec<usize>,
    /// meters per altitude level
    pub altitudes: Vec<f64>,
    pub footprint_radius: Vec<f64>,
    pub measurement_variance: Vec<f64>,
    pub false_positive_rate: f64,
    pub false_negative_rate: f64,
    /// meters
    pub budget: f64,
    pub variance_threshold: f64,
    pub horizon: usize,
    pub max_leg: f64,
    pub lattice_stride: usize,
    pub speed: f64,
    pub prior_mean: f64,
    pub prior_variance: f64,
    pub classification_threshold: f64,
    pub snapshot_every: usize,
    /// "budget" or "oscillatory"
    pub scheduler: String,
    pub base: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub threshold: f64,
    pub ticks_per_period: usize,
    /// seconds, oscillatory mode
    pub max_time: f64,
    pub decoys: Vec<DecoyParams>,
}

impl IppParams {
    pub fn for_experiment(experiment: Experiment) -> Self {
        use precis_ipp::{MissionConfig, OscillatorConfig, Scenario, SensorModel};
        let scenario = if experiment == Experiment::IppFp {
            Scenario::false_positive()
        } else {
            Scenario::default()
        };
        let sensor = SensorModel::default();
        let mission = MissionConfig::default();
        let osc = OscillatorConfig::default();
        Self {
            width: scenario.width,
            height: scenario.height,
            cell_size: scenario.cell_size,
            targets: scenario.targets,
            target_spacing: scenario.target_spacing,
            no_fly: scenario.no_fly.map(|(x, y, w, h)| vec![x, y, w, h]).unwrap_or_default(),
            altitudes: sensor.altitudes,
            footprint_radius: sensor.footprint_radius,
            measurement_variance: sensor.variance,
            false_positive_rate: sensor.false_positive_rate,
            false_negative_rate: sensor.false_negative_rate,
            budget: mission.budget,
            variance_threshold: mission.variance_threshold,
            horizon: mission.planner.horizon,
            max_leg: mission.planner.max_leg,
            lattice_stride: mission.lattice_stride,
            speed: mission.speed,
            prior_mean: mission.prior_mean,
            prior_variance: mission.prior_variance,
            classification_threshold: mission.classification_threshold,
            snapshot_every: mission.snapshot_every,
            scheduler: "budget".into(),
            base: osc.base,
            amplitude: osc.amplitude,
            frequency: osc.frequency,
            threshold: osc.threshold,
            ticks_per_period: 100,
            max_time: 1000.0,
            decoys: scenario
                .decoys
                .iter()
                .map(|d| DecoyParams {
                    cell: [d.cell.0, d.cell.1],
                    false_positive_rate: d.false_positive_rate,
                    initial_detection: d.initial_detection,
                })
                .collect(),
        }
    }
}

/// Settings echoed at the top of every output file, one `# ` line each.
/// Stripping the prefix gives a config file that reproduces the run.
pub fn header<T: Serialize>(experiment: Experiment, seeds: &[u64], section: &str, params: &T) -> String {
    let mut table = toml::Table::new();
    table.insert("seeds".into(), toml::Value::try_from(seeds).expect("seeds serialize"));
    table.insert(section.into(), toml::Value::try_from(params).expect("parameters serialize"));
    let body = toml::to_string(&table).expect("parameters serialize");
    let mut out = format!("# # precis run {experiment}\n");
    for line in body.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}
