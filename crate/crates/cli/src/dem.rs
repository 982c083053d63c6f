use nalgebra::Vector2;
use precis_core::benchmark::{
    log_precision, median, median_abs_dev, noise_robustness_study, regression_slope, run_sysid_seeds, simulate_benchmark,
    estimate_on, sweep_prior_precision, EstimationRun, EstimationSetup, ModeSettings, NoiseRow, PriorDraw, StudyMode,
    SweepRow, SysIdRun, SysIdSetup, BENCHMARK_UNKNOWN,
};
use precis_core::ltisim::{benchmark_plant, NoiseSpec, ProcessNoiseRows};
use rayon::prelude::*;

use crate::config::{Fig2Params, Fig4Params, Fig5Params, SignalParams, SysIdParams};
use crate::error::CliError;
use crate::output::{num, Sink, Table};

const THETA_NAMES: [&str; 3] = ["neg_k_over_m", "neg_b_over_m", "inv_m"];

fn noise(signal: &SignalParams) -> NoiseSpec {
    NoiseSpec {
        kernel_width: signal.kernel_width,
        sigma_w: signal.sigma_w,
        sigma_z: signal.sigma_z,
        process_rows: match signal.process_noise.as_str() {
            "all" => ProcessNoiseRows::All,
            _ => ProcessNoiseRows::Rows(vec![1]),
        },
    }
}

pub fn sysid_setup(p: &SysIdParams) -> SysIdSetup {
    let mut s = SysIdSetup::benchmark(noise(&p.signal));
    s.dt = p.signal.dt;
    s.duration = p.signal.duration;
    s.kernel_width = p.signal.kernel_width;
    s.state_order = p.state_order;
    s.input_order = p.input_order;
    s.known_prior_prec = p.known_prior_precision;
    s.unknown_prior_prec = p.unknown_prior_precision;
    s.prior_draw = PriorDraw::Uniform { range: p.prior_range };
    s.schedule.max_iterations = p.max_iterations;
    if p.pin_lambda_w {
        s.lambda_prior = Vector2::new(0.0, log_precision(p.signal.sigma_w));
        s.lambda_prior_prec = Vector2::new(1.0, 1e6);
    }
    s
}

#[derive(Clone, Debug)]
pub struct Fig2Row {
    pub seed: u64,
    pub order: usize,
    pub state_sse: f64,
    pub input_sse: f64,
}

#[derive(Clone, Debug)]
pub struct Fig2Summary {
    pub order: usize,
    pub median_input_sse: f64,
    pub mad_input_sse: f64,
    pub median_state_sse: f64,
    pub mad_state_sse: f64,
}

#[derive(Clone, Debug)]
pub struct Fig2Report {
    pub rows: Vec<Fig2Row>,
    pub summary: Vec<Fig2Summary>,
}

pub fn run_fig2(p: &Fig2Params, seeds: &[u64], sink: &mut Sink) -> Result<Fig2Report, CliError> {
    let setup = EstimationSetup {
        plant: benchmark_plant(),
        noise: noise(&p.signal),
        dt: p.signal.dt,
        duration: p.signal.duration,
        kernel_width: p.signal.kernel_width,
        input_order: p.input_order,
        input_prior_prec: p.input_prior_precision,
        score_margin: p.score_margin,
    };
    let per_seed: Vec<Vec<EstimationRun>> = seeds
        .par_iter()
        .map(|&seed| {
            let tr = simulate_benchmark(&setup.plant, &setup.noise, setup.dt, setup.duration, seed)?;
            p.orders.iter().map(|&k| estimate_on(&setup, tr.clone(), seed, k)).collect()
        })
        .collect::<precis_core::Result<_>>()?;

    let mut table = Table::new(&["seed", "order", "state_sse", "input_sse", "joint_sse"]);
    let mut rows = Vec::new();
    for run in per_seed.iter().flatten() {
        table.row([
            run.seed.to_string(),
            run.order.to_string(),
            num(run.state_sse),
            num(run.input_sse),
            num(run.state_sse + run.input_sse),
        ]);
        rows.push(Fig2Row {
            seed: run.seed,
            order: run.order,
            state_sse: run.state_sse,
            input_sse: run.input_sse,
        });
    }
    sink.table("fig2_embedding.csv", table)?;

    let mut table = Table::new(&["order", "median_input_sse", "mad_input_sse", "median_state_sse", "mad_state_sse"]);
    let mut summary = Vec::new();
    for &order in &p.orders {
        let pick = |f: fn(&Fig2Row) -> f64| -> Vec<f64> { rows.iter().filter(|r| r.order == order).map(f).collect() };
        let (input, state) = (pick(|r| r.input_sse), pick(|r| r.state_sse));
        let s = Fig2Summary {
            order,
            median_input_sse: median(&input),
            mad_input_sse: median_abs_dev(&input),
            median_state_sse: median(&state),
            mad_state_sse: median_abs_dev(&state),
        };
        table.row([
            order.to_string(),
            num(s.median_input_sse),
            num(s.mad_input_sse),
            num(s.median_state_sse),
            num(s.mad_state_sse),
        ]);
        summary.push(s);
    }
    sink.table("fig2_summary.csv", table)?;

    // input estimates of the first seed at every order
    if let Some(runs) = per_seed.first() {
        let mut cols = vec!["t".to_string(), "u_true".to_string()];
        cols.extend(runs.iter().map(|r| format!("u_hat_p{}", r.order)));
        let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut table = Table::new(&cols);
        let tr = &runs[0].trajectory;
        for (t, time) in tr.times.iter().enumerate() {
            let mut row = vec![num(*time), num(tr.inputs[(t, 0)])];
            row.extend(runs.iter().map(|r| num(r.input_estimate[(t, 0)])));
            table.row(row);
        }
        sink.table("fig2_inputs.csv", table)?;
    }
    Ok(Fig2Report { rows, summary })
}

#[derive(Clone, Debug)]
pub struct Fig3Report {
    /// per seed, in seed order; failed runs keep their message
    pub runs: Vec<(u64, Result<SysIdRun, String>)>,
}

pub fn run_fig3(p: &SysIdParams, seeds: &[u64], sink: &mut Sink) -> Result<Fig3Report, CliError> {
    let setup = sysid_setup(p);
    let runs: Vec<(u64, Result<SysIdRun, String>)> = seeds
        .iter()
        .copied()
        .zip(run_sysid_seeds(&setup, seeds).into_iter().map(|r| r.map_err(|e| e.to_string())))
        .collect();
    let truth = setup.true_theta();

    let mut cols = vec!["seed", "iteration"];
    cols.extend(THETA_NAMES);
    cols.extend(["lambda_z", "lambda_w"]);
    let prec: Vec<String> = THETA_NAMES.iter().map(|n| format!("precision_{n}")).collect();
    cols.extend(prec.iter().map(String::as_str));
    cols.push("free_energy");
    let mut table = Table::new(&cols);
    for (seed, run) in &runs {
        let Ok(run) = run else { continue };
        for rec in &run.result.history {
            let mut row = vec![seed.to_string(), rec.iteration.to_string()];
            row.extend(BENCHMARK_UNKNOWN.iter().map(|&i| num(rec.theta[i])));
            row.extend([num(rec.lambda[0]), num(rec.lambda[1])]);
            row.extend(BENCHMARK_UNKNOWN.iter().map(|&i| num(rec.theta_prec_diag[i])));
            row.push(num(rec.fe.total));
            table.row(row);
        }
    }
    sink.table("fig3_iterations.csv", table)?;

    let mut cols = vec!["seed", "status", "converged", "iterations"];
    let prior: Vec<String> = THETA_NAMES.iter().map(|n| format!("prior_{n}")).collect();
    cols.extend(prior.iter().map(String::as_str));
    cols.extend(THETA_NAMES);
    cols.extend(["max_abs_error", "lambda_z", "lambda_w", "free_energy"]);
    let mut table = Table::new(&cols);
    for (seed, run) in &runs {
        let mut row = vec![seed.to_string()];
        match run {
            Ok(run) => {
                let post = &run.result.posterior;
                let err = BENCHMARK_UNKNOWN
                    .iter()
                    .map(|&i| (post.theta[i] - truth[i]).abs())
                    .fold(0.0, f64::max);
                row.extend(["ok".to_string(), run.result.converged.to_string(), run.result.iterations().to_string()]);
                row.extend(BENCHMARK_UNKNOWN.iter().map(|&i| num(run.theta_prior[i])));
                row.extend(BENCHMARK_UNKNOWN.iter().map(|&i| num(post.theta[i])));
                row.extend([
                    num(err),
                    num(post.lambda[0]),
                    num(post.lambda[1]),
                    num(*post.fe_trace.last().unwrap_or(&f64::NAN)),
                ]);
            }
            Err(msg) => {
                row.push(format!("failed: {msg}"));
                row.extend(std::iter::repeat_n(String::new(), cols.len() - 2));
            }
        }
        table.row(row);
    }
    sink.table("fig3_summary.csv", table)?;
    Ok(Fig3Report { runs })
}

#[derive(Clone, Debug)]
pub struct Fig4Report {
    pub rows: Vec<SweepRow>,
}

pub fn run_fig4(p: &Fig4Params, seeds: &[u64], sink: &mut Sink) -> Result<Fig4Report, CliError> {
    let rows = sweep_prior_precision(&sysid_setup(&p.sysid), &p.prior_precision_grid, seeds)?;
    let mut table = Table::new(&["prior_precision", "seed", "sse"]);
    for row in &rows {
        for (seed, sse) in seeds.iter().zip(&row.sse) {
            table.row([num(row.prior_prec), seed.to_string(), num(*sse)]);
        }
    }
    sink.table("fig4_explore.csv", table)?;
    let mut table = Table::new(&["prior_precision", "median_sse", "mad_sse"]);
    for row in &rows {
        table.row([num(row.prior_prec), num(row.median_sse), num(median_abs_dev(&row.sse))]);
    }
    sink.table("fig4_summary.csv", table)?;
    Ok(Fig4Report { rows })
}

#[derive(Clone, Debug)]
pub struct Fig5Report {
    pub rows: Vec<NoiseRow>,
    /// estimated vs true sensor log-precision, over-exposed mode, every seed
    pub slope: f64,
    /// smallest noise level where the biased mode wins after losing at a
    /// lower level
    pub crossover: Option<f64>,
}

/// Smallest σ at which the biased median SSE falls below the over-exposed
/// one while some lower σ has it the other way round.
pub fn crossover(rows: &[NoiseRow]) -> Option<f64> {
    let mut sigmas: Vec<f64> = rows.iter().map(|r| r.sigma_z).collect();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let med = |s: f64, m: StudyMode| rows.iter().find(|r| r.sigma_z == s && r.mode == m).map(|r| r.median_sse);
    let mut over_exposed_won = false;
    for s in sigmas {
        let (Some(o), Some(b)) = (med(s, StudyMode::OverExposed), med(s, StudyMode::Biased)) else { continue };
        if b < o && over_exposed_won {
            return Some(s);
        }
        over_exposed_won |= b >= o;
    }
    None
}

pub fn run_fig5(p: &Fig5Params, seeds: &[u64], sink: &mut Sink) -> Result<Fig5Report, CliError> {
    let setup = sysid_setup(&p.sysid);
    let modes = [
        (
            StudyMode::OverExposed,
            ModeSettings {
                prior_prec: p.sysid.unknown_prior_precision,
                prior_draw: PriorDraw::Uniform { range: p.sysid.prior_range },
            },
        ),
        (
            StudyMode::Biased,
            ModeSettings {
                prior_prec: p.biased_prior_precision,
                prior_draw: PriorDraw::TruthAdjacent { offset: p.biased_offset },
            },
        ),
    ];
    let rows = noise_robustness_study(&setup, &p.sigma_z_grid, &modes, seeds)?;
    let mut table = Table::new(&["sigma_z", "mode", "seed", "sse", "lambda_z", "true_lambda_z"]);
    for row in &rows {
        for ((seed, sse), lz) in seeds.iter().zip(&row.sse).zip(&row.lambda_z) {
            table.row([
                num(row.sigma_z),
                row.mode.name().to_string(),
                seed.to_string(),
                num(*sse),
                num(*lz),
                num(row.true_lambda_z),
            ]);
        }
    }
    sink.table("fig5_noise.csv", table)?;

    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.mode == StudyMode::OverExposed)
        .flat_map(|r| r.lambda_z.iter().map(move |l| (r.true_lambda_z, *l)))
        .unzip();
    let slope = regression_slope(&x, &y);
    let cross = crossover(&rows);
    let mut table = Table::new(&["sigma_z", "mode", "median_sse", "median_lambda_z", "true_lambda_z"]);
    for row in &rows {
        table.row([
            num(row.sigma_z),
            row.mode.name().to_string(),
            num(row.median_sse),
            num(row.median_lambda_z),
            num(row.true_lambda_z),
        ]);
    }
    sink.table("fig5_summary.csv", table)?;
    let mut table = Table::new(&["lambda_z_slope", "crossover_sigma_z"]);
    table.row([num(slope), cross.map(num).unwrap_or_default()]);
    sink.table("fig5_regression.csv", table)?;
    Ok(Fig5Report { rows, slope, crossover: cross })
}
