use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::error;

use crackfield::config::{read_config, ConfigError};
use crackfield::run::{run, RunError};
use crackfield_core::adapt::RefinementMode;

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Adaptive,
    Uniform,
}

/// Quasi-static phase-field fracture of nearly incompressible solids on
/// adaptive quadtree meshes.
#[derive(Parser, Debug)]
#[command(name = "crackfield", version)]
struct Cli {
    /// `key = value` run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Poisson's ratio; the second Lamé parameter follows.
    #[arg(long)]
    nu: Option<f64>,
    /// Refinement cycles after the first loading loop.
    #[arg(long)]
    cycles: Option<usize>,
    /// Write a VTU snapshot every this many steps (0: last step only).
    #[arg(long)]
    snapshot_stride: Option<usize>,
}

fn write_error_file(dir: &std::path::Path, e: &RunError) {
    let (cycle, step) = e.location();
    let body = serde_json::json!({
        "code": e.code(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
        "cycle": cycle,
        "step": step,
    });
    let _ = std::fs::create_dir_all(dir);
    if let Err(io) = std::fs::write(dir.join("error.json"), format!("{body:#}\n")) {
        error!("could not write error.json: {io}");
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut dir = cli
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("output"));
    let result = read_config(&cli.config)
        .map_err(RunError::Config)
        .and_then(|mut cfg| {
            match cli.output_dir {
                Some(d) => cfg.output_dir = d,
                None => dir = cfg.output_dir.clone(),
            }
            if let Some(m) = cli.mode {
                cfg.adapt.mode = match m {
                    Mode::Adaptive => RefinementMode::Adaptive,
                    Mode::Uniform => RefinementMode::Uniform,
                };
            }
            if let Some(nu) = cli.nu {
                cfg.set_poisson(nu).map_err(|message| {
                    RunError::Config(ConfigError::BadValue {
                        line: 0,
                        key: "--nu".into(),
                        message,
                    })
                })?;
            }
            if let Some(c) = cli.cycles {
                cfg.adapt.max_cycles = c;
            }
            if let Some(s) = cli.snapshot_stride {
                cfg.snapshot_stride = s;
            }
            run(&cfg)
        });
    match result {
        Ok(summary) => {
            for c in &summary.cycles {
                println!(
                    "cycle {}: peak F_y = {:.3} N, max dofs = {}, sum eta^2 = {:.4e}",
                    c.cycle, c.peak_force, c.max_dofs, c.eta_squared_sum
                );
            }
            if summary.stopped_by_budget() {
                println!("STOPPED_BY_BUDGET");
            }
            println!("outputs in {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            error!("{e}");
            write_error_file(&dir, &e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
