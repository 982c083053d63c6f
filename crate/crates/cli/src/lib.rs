//! Experiment runner: resolves a config, runs one experiment and writes its
//! CSV tables and map snapshots.

pub mod config;
pub mod dem;
pub mod error;
pub mod ipp;
pub mod output;

use std::path::{Path, PathBuf};

pub use config::{ConfigFile, Experiment};
pub use error::CliError;

use config::{header, resolve, Fig2Params, Fig4Params, Fig5Params, IppParams, SysIdParams};
use output::Sink;

#[derive(Clone, Debug)]
pub enum Report {
    Fig2(dem::Fig2Report),
    Fig3(dem::Fig3Report),
    Fig4(dem::Fig4Report),
    Fig5(dem::Fig5Report),
    Ipp(ipp::IppReport),
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub experiment: Experiment,
    pub seeds: Vec<u64>,
    pub report: Report,
    pub files: Vec<PathBuf>,
    pub wall_seconds: f64,
}

/// Seeds in effect: `--seed` beats the config file, which beats the default.
pub fn effective_seeds(experiment: Experiment, config: &ConfigFile, seed: Option<u64>) -> Vec<u64> {
    match (seed, &config.seeds) {
        (Some(s), _) => vec![s],
        (None, Some(list)) => {
            let mut list = list.clone();
            list.sort_unstable();
            list.dedup();
            list
        }
        (None, None) => experiment.default_seeds(),
    }
}

pub fn run_experiment(experiment: Experiment, config: &ConfigFile, seed: Option<u64>, out: &Path) -> Result<RunSummary, CliError> {
    let start = std::time::Instant::now();
    let seeds = effective_seeds(experiment, config, seed);
    if seeds.is_empty() {
        return Err(CliError::Config("seed list is empty".into()));
    }
    let over = config.overrides(experiment)?;
    let section = experiment.section();
    let (report, files) = match experiment {
        Experiment::Fig2Embedding => {
            let p = resolve(&Fig2Params::default(), over, section)?;
            p.validate()?;
            let mut sink = Sink::new(out, header(experiment, &seeds, section, &p))?;
            (Report::Fig2(dem::run_fig2(&p, &seeds, &mut sink)?), sink.into_files())
        }
        Experiment::Fig3Sysid => {
            let p = resolve(&SysIdParams::default(), over, section)?;
            p.validate()?;
            let mut sink = Sink::new(out, header(experiment, &seeds, section, &p))?;
            (Report::Fig3(dem::run_fig3(&p, &seeds, &mut sink)?), sink.into_files())
        }
        Experiment::Fig4Explore => {
            let p = resolve(&Fig4Params::default(), over, section)?;
            p.validate()?;
            let mut sink = Sink::new(out, header(experiment, &seeds, section, &p))?;
            (Report::Fig4(dem::run_fig4(&p, &seeds, &mut sink)?), sink.into_files())
        }
        Experiment::Fig5Noise => {
            let p = resolve(&Fig5Params::default(), over, section)?;
            p.validate()?;
            let mut sink = Sink::new(out, header(experiment, &seeds, section, &p))?;
            (Report::Fig5(dem::run_fig5(&p, &seeds, &mut sink)?), sink.into_files())
        }
        Experiment::IppMission | Experiment::IppFp => {
            let p = resolve(&IppParams::for_experiment(experiment), over, section)?;
            ipp::ipp_setup(&p)?;
            let mut sink = Sink::new(out, header(experiment, &seeds, section, &p))?;
            (Report::Ipp(ipp::run_ipp(experiment.id(), &p, &seeds, &mut sink)?), sink.into_files())
        }
    };
    Ok(RunSummary {
        experiment,
        seeds,
        report,
        files,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
