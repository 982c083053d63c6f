//! Spring-damper benchmark runs: input estimation, system identification,
//! prior-precision sweeps and the noise robustness study.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dem::{
    estimate_states, learn_parameters, EmbeddedData, GenerativeModel, InputMode, LearnResult, LearnSchedule,
    ThetaLayout,
};
use crate::error::{Error, Result};
use crate::ltisim::{benchmark_plant, gaussian_bump_input, scalar_input, simulate, NoiseSpec, StateSpaceModel, Trajectory};

/// θ indices of -k/m, -b/m and 1/m in the benchmark vectorization.
pub const BENCHMARK_UNKNOWN: [usize; 3] = [2, 3, 5];

/// Stream offset separating prior draws from the simulation noise.
const PRIOR_STREAM: u64 = 0x5EED_0F_9A17;

pub fn simulate_benchmark(plant: &StateSpaceModel, noise: &NoiseSpec, dt: f64, duration: f64, seed: u64) -> Result<Trajectory> {
    simulate(plant, scalar_input(gaussian_bump_input), dt, duration, noise, seed)
}

/// Median of a non-empty slice; NaN for an empty one.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Median absolute deviation around the median.
pub fn median_abs_dev(values: &[f64]) -> f64 {
    let med = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    median(&dev)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationSetup {
    pub plant: StateSpaceModel,
    pub noise: NoiseSpec,
    pub dt: f64,
    pub duration: f64,
    pub kernel_width: f64,
    pub input_order: usize,
    /// P^u for the zero-mean input prior
    pub input_prior_prec: f64,
    /// samples dropped at each end before scoring
    pub score_margin: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimationRun {
    pub seed: u64,
    pub order: usize,
    pub state_sse: f64,
    pub input_sse: f64,
    pub trajectory: Trajectory,
    pub state_estimate: DMatrix<f64>,
    pub input_estimate: DMatrix<f64>,
}

/// log-precision of a noise source with standard deviation σ.
pub fn log_precision(sigma: f64) -> f64 {
    -2.0 * sigma.ln() + 0.0
}

/// Estimates states and the unknown input at embedding order p with the
/// noise precisions set from the simulated noise levels.
pub fn run_estimation(setup: &EstimationSetup, seed: u64, order: usize) -> Result<EstimationRun> {
    let tr = simulate_benchmark(&setup.plant, &setup.noise, setup.dt, setup.duration, seed)?;
    estimate_on(setup, tr, seed, order)
}

pub fn estimate_on(setup: &EstimationSetup, tr: Trajectory, seed: u64, order: usize) -> Result<EstimationRun> {
    let mut model = GenerativeModel::from_plant(&setup.plant, order, setup.input_order, setup.kernel_width, InputMode::Estimated);
    model.input_prior_prec = DMatrix::from_element(1, 1, setup.input_prior_prec);
    let prior = DMatrix::zeros(tr.len(), setup.plant.n_inputs());
    let data = EmbeddedData::from_series(&tr.outputs, &prior, setup.dt, order, setup.input_order)?;
    let lambda = Vector2::new(noise_log_precision(setup.noise.sigma_z), noise_log_precision(setup.noise.sigma_w));
    let est = estimate_states(&model, &data, &model.theta_prior, &lambda)?;
    let xs = est.states();
    let us = est.inputs().expect("inputs are estimated");
    let nt = tr.len();
    if nt <= 2 * setup.score_margin {
        return Err(Error::InvalidParameter("score margin leaves no samples".into()));
    }
    let range = setup.score_margin..nt - setup.score_margin;
    let state_sse = range
        .clone()
        .map(|t| (xs.row(t) - tr.states.row(t)).norm_squared())
        .sum();
    let input_sse = range.map(|t| (us.row(t) - tr.inputs.row(t)).norm_squared()).sum();
    Ok(EstimationRun {
        seed,
        order,
        state_sse,
        input_sse,
        trajectory: tr,
        state_estimate: xs,
        input_estimate: us,
    })
}

/// Log-precision for a configured noise level; a zero level maps to a
/// large finite precision.
pub fn noise_log_precision(sigma: f64) -> f64 {
    if sigma > 0.0 {
        log_precision(sigma)
    } else {
        log_precision(1e-6)
    }
}

/// How the prior means of the unknown entries are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PriorDraw {
    /// uniform in [-range, range]
    Uniform { range: f64 },
    /// truth plus a uniform offset in [-offset, offset]
    TruthAdjacent { offset: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SysIdSetup {
    pub plant: StateSpaceModel,
    pub noise: NoiseSpec,
    pub dt: f64,
    pub duration: f64,
    pub kernel_width: f64,
    pub state_order: usize,
    pub input_order: usize,
    pub unknown: Vec<usize>,
    pub known_prior_prec: f64,
    pub unknown_prior_prec: f64,
    pub prior_draw: PriorDraw,
    pub lambda_prior: Vector2<f64>,
    pub lambda_prior_prec: Vector2<f64>,
    pub schedule: LearnSchedule,
}

impl SysIdSetup {
    /// The three-unknown benchmark with the given noise.
    pub fn benchmark(noise: NoiseSpec) -> Self {
        Self {
            plant: benchmark_plant(),
            noise,
            dt: 0.1,
            duration: 32.0,
            kernel_width: 0.5,
            state_order: 6,
            input_order: 6,
            unknown: BENCHMARK_UNKNOWN.to_vec(),
            known_prior_prec: 3.3e6,
            unknown_prior_prec: 1.0,
            prior_draw: PriorDraw::Uniform { range: 2.0 },
            lambda_prior: Vector2::zeros(),
            lambda_prior_prec: Vector2::new(1.0, 1.0),
            schedule: LearnSchedule::default(),
        }
    }

    pub fn true_theta(&self) -> DVector<f64> {
        ThetaLayout::of_plant(&self.plant).vectorize(&self.plant.a, &self.plant.b, &self.plant.c)
    }

    /// True log-precisions of the simulated sensor and process noise.
    pub fn true_lambda(&self) -> Vector2<f64> {
        Vector2::new(noise_log_precision(self.noise.sigma_z), noise_log_precision(self.noise.sigma_w))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SysIdRun {
    pub seed: u64,
    pub theta_true: DVector<f64>,
    pub theta_prior: DVector<f64>,
    pub result: LearnResult,
    /// squared error over the unknown entries
    pub sse: f64,
}

impl SysIdRun {
    pub fn unknown_errors(&self, unknown: &[usize]) -> Vec<f64> {
        unknown
            .iter()
            .map(|&i| self.result.posterior.theta[i] - self.theta_true[i])
            .collect()
    }
}

pub fn draw_prior(setup: &SysIdSetup, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PRIOR_STREAM);
    let mut eta = setup.true_theta();
    for &i in &setup.unknown {
        eta[i] = match setup.prior_draw {
            PriorDraw::Uniform { range } => rng.random_range(-range..=range),
            PriorDraw::TruthAdjacent { offset } => eta[i] + rng.random_range(-offset..=offset),
        };
    }
    eta
}

pub fn sysid_model(setup: &SysIdSetup, theta_prior: DVector<f64>) -> GenerativeModel {
    let mut model = GenerativeModel::from_plant(&setup.plant, setup.state_order, setup.input_order, setup.kernel_width, InputMode::Known);
    let k = model.layout.len();
    model.theta_prior = theta_prior;
    model.theta_prior_prec = DVector::from_element(k, setup.known_prior_prec);
    model.theta_unknown = vec![false; k];
    for &i in &setup.unknown {
        model.theta_prior_prec[i] = setup.unknown_prior_prec;
        model.theta_unknown[i] = true;
    }
    model.lambda_prior = setup.lambda_prior;
    model.lambda_prior_prec = setup.lambda_prior_prec;
    model
}

/// Simulates one seed and learns θ and λ starting from the drawn prior.
pub fn run_sysid(setup: &SysIdSetup, seed: u64) -> Result<SysIdRun> {
    let tr = simulate_benchmark(&setup.plant, &setup.noise, setup.dt, setup.duration, seed)?;
    let data = EmbeddedData::from_series(&tr.outputs, &tr.inputs, setup.dt, setup.state_order, setup.input_order)?;
    let eta = draw_prior(setup, seed);
    let model = sysid_model(setup, eta.clone());
    let result = learn_parameters(&model, &data, &setup.schedule, None)?;
    let theta_true = setup.true_theta();
    let sse = setup
        .unknown
        .iter()
        .map(|&i| (result.posterior.theta[i] - theta_true[i]).powi(2))
        .sum();
    Ok(SysIdRun {
        seed,
        theta_true,
        theta_prior: eta,
        result,
        sse,
    })
}

/// Runs every seed in parallel; output is ordered by seed.
pub fn run_sysid_seeds(setup: &SysIdSetup, seeds: &[u64]) -> Vec<Result<SysIdRun>> {
    seeds.par_iter().map(|&s| run_sysid(setup, s)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub prior_prec: f64,
    pub median_sse: f64,
    pub sse: Vec<f64>,
}

/// Median parameter SSE per prior precision of the unknown entries.
pub fn sweep_prior_precision(setup: &SysIdSetup, grid: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    grid.iter()
        .map(|&p| {
            let mut s = setup.clone();
            s.unknown_prior_prec = p;
            let sse = run_sysid_seeds(&s, seeds)
                .into_iter()
                .map(|r| r.map(|r| r.sse))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow {
                prior_prec: p,
                median_sse: median(&sse),
                sse,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StudyMode {
    OverExposed,
    Biased,
}

impl StudyMode {
    pub fn name(&self) -> &'static str {
        match self {
            StudyMode::OverExposed => "over_exposed",
            StudyMode::Biased => "biased",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeSettings {
    pub prior_prec: f64,
    pub prior_draw: PriorDraw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseRow {
    pub sigma_z: f64,
    pub mode: StudyMode,
    pub median_sse: f64,
    pub median_lambda_z: f64,
    pub true_lambda_z: f64,
    pub sse: Vec<f64>,
    pub lambda_z: Vec<f64>,
}

/// Parameter SSE and estimated sensor log-precision per noise level and
/// mode.
pub fn noise_robustness_study(
    setup: &SysIdSetup,
    sigma_grid: &[f64],
    modes: &[(StudyMode, ModeSettings)],
    seeds: &[u64],
) -> Result<Vec<NoiseRow>> {
    let mut rows = Vec::new();
    for &sz in sigma_grid {
        for (mode, settings) in modes {
            let mut s = setup.clone();
            s.noise.sigma_z = sz;
            s.unknown_prior_prec = settings.prior_prec;
            s.prior_draw = settings.prior_draw;
            let runs = run_sysid_seeds(&s, seeds).into_iter().collect::<Result<Vec<_>>>()?;
            let sse: Vec<f64> = runs.iter().map(|r| r.sse).collect();
            let lambda_z: Vec<f64> = runs.iter().map(|r| r.result.posterior.lambda[0]).collect();
            rows.push(NoiseRow {
                sigma_z: sz,
                mode: *mode,
                median_sse: median(&sse),
                median_lambda_z: median(&lambda_z),
                true_lambda_z: noise_log_precision(sz),
                sse,
                lambda_z,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of y on x.
pub fn regression_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}
