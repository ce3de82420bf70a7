//! Runs a configured scenario through the adaptive loop and writes outputs.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use log::info;

use crackfield_core::adapt::{algorithm1, AdaptiveRun, CycleReport, Termination};
use crackfield_core::solver::{ConstraintReport, NewtonOptions};
use crackfield_core::Error;

use crate::config::{ConfigError, RunConfig};
use crate::output::{write_loads_csv, write_stats_csv, write_vtu};
use crate::scenario::Scenario;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Solver(Error),
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Solver(_) => 3,
            RunError::Io { .. } => 4,
        }
    }

    /// Machine-readable error name.
    pub fn code(&self) -> &'static str {
        match self {
            RunError::Config(e) => e.code(),
            RunError::Solver(e) => match e.root() {
                Error::NoConvergence { .. } => "NO_CONVERGENCE",
                Error::LineSearchStall { .. } => "LINE_SEARCH_STALL",
                Error::ActiveSetCycle { .. } => "ACTIVE_SET_CYCLE",
                Error::Singular { .. } => "SINGULAR",
                Error::InvalidParameter(_) => "BAD_VALUE",
                _ => "INTERNAL",
            },
            RunError::Io { .. } => "IO",
        }
    }

    /// `(cycle, step)` where a solver failure happened.
    pub fn location(&self) -> (Option<usize>, Option<usize>) {
        let mut cycle = None;
        let mut step = None;
        let mut e = match self {
            RunError::Solver(e) => e,
            _ => return (None, None),
        };
        loop {
            match e {
                Error::Cycle { cycle: c, source } => {
                    cycle = Some(*c);
                    e = source;
                }
                Error::Step { step: s, source } => {
                    step = Some(*s);
                    e = source;
                }
                _ => return (cycle, step),
            }
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Solver(e) => write!(f, "{e}"),
            RunError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(m) => RunError::Config(ConfigError::BadValue {
                line: 0,
                key: "parameters".into(),
                message: m,
            }),
            e => RunError::Solver(e),
        }
    }
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Per-cycle figures kept after the states are released.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleSummary {
    pub cycle: usize,
    pub peak_force: f64,
    pub min_dofs: usize,
    pub max_dofs: usize,
    pub eta_squared_sum: f64,
    pub max_interpolation_error: f64,
    /// Merged over all converged increments of the cycle.
    pub constraints: ConstraintReport,
    pub max_level: u8,
    pub min_cell_size: f64,
}

impl CycleSummary {
    fn of(report: &CycleReport) -> Self {
        let states = &report.states;
        let constraints = states[1..]
            .iter()
            .map(|s| s.constraint_report())
            .reduce(|a, b| a.merge(&b))
            .unwrap_or_else(|| states[0].constraint_report());
        let totals = report.field_dofs.iter().map(|(u, p, f)| u + p + f);
        Self {
            cycle: report.cycle,
            peak_force: report.record.peak_force().unwrap_or(0.0),
            min_dofs: totals.clone().min().unwrap_or(0),
            max_dofs: totals.max().unwrap_or(0),
            eta_squared_sum: report.eta_squared_sum,
            max_interpolation_error: report
                .interpolation_errors
                .iter()
                .cloned()
                .fold(0.0, f64::max),
            constraints,
            max_level: states
                .iter()
                .map(|s| s.disc.mesh.max_level())
                .max()
                .unwrap_or(0),
            min_cell_size: states
                .iter()
                .map(|s| s.disc.mesh.min_cell_size())
                .fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub cycles: Vec<CycleSummary>,
    /// Reports of all cycles; only the last one keeps its states.
    pub run: AdaptiveRun,
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    pub fn stopped_by_budget(&self) -> bool {
        self.run.termination == Termination::StoppedByBudget
    }
}

/// Writes `loads_cycle<k>.csv`, `stats_cycle<k>.csv` and the VTU snapshots
/// of one cycle.
fn write_cycle(
    cfg: &RunConfig,
    report: &CycleReport,
    files: &mut Vec<PathBuf>,
) -> Result<(), RunError> {
    let dir = &cfg.output_dir;
    let k = report.cycle;
    let loads = dir.join(format!("loads_cycle{k}.csv"));
    write_loads_csv(&report.record, &loads).map_err(io_at(&loads))?;
    files.push(loads);
    let stats = dir.join(format!("stats_cycle{k}.csv"));
    write_stats_csv(report, &stats).map_err(io_at(&stats))?;
    files.push(stats);
    let last = report.states.len() - 1;
    for (n, state) in report.states.iter().enumerate().skip(1) {
        let due = cfg.snapshot_stride > 0 && n % cfg.snapshot_stride == 0;
        if !(due || n == last) {
            continue;
        }
        let path = dir.join(format!("state_c{k}_s{n}.vtu"));
        let eta = report.indicators.get(n - 1).map(|i| i.cells.as_slice());
        write_vtu(state, eta, &path).map_err(io_at(&path))?;
        files.push(path);
    }
    Ok(())
}

pub fn run(cfg: &RunConfig) -> Result<RunSummary, RunError> {
    cfg.validate().map_err(|message| {
        RunError::Config(ConfigError::BadValue {
            line: 0,
            key: "parameters".into(),
            message,
        })
    })?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(io_at(&cfg.output_dir))?;
    let scenario = Scenario::build(cfg.scenario, cfg.adapt.initial_refinements);
    info!(
        "{}: nu = {}, {} steps, {} cycles, {:?} refinement",
        scenario.name,
        cfg.params.nu,
        cfg.params.num_steps(),
        cfg.adapt.max_cycles,
        cfg.adapt.mode
    );
    let mut files = Vec::new();
    let mut cycles = Vec::new();
    let run = algorithm1(
        &cfg.adapt,
        &scenario.initial_mesh,
        &scenario.case,
        &cfg.params,
        &NewtonOptions::default(),
        |report: &CycleReport| -> Result<(), RunError> {
            cycles.push(CycleSummary::of(report));
            write_cycle(cfg, report, &mut files)
        },
    )?;
    Ok(RunSummary { cycles, run, files })
}
