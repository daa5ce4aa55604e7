use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vefem::config::{load_config, parse_config, RunConfig};
use vefem::model::InitialData;
use vefem::{checks, driver, presets};

#[derive(Parser)]
#[command(name = "vefem", version, about = "Viscoelastic phase-field tumour growth simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a preset, optionally overridden by a config file.
    Run {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (overrides VEFEM_OUT_DIR and the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Reduced resolution and horizon, model constants unchanged.
        #[arg(long)]
        desk: bool,
        /// Final time used with --desk.
        #[arg(long, default_value_t = 2.0, requires = "desk")]
        desk_t_end: f64,
    },
    /// Run the randomized property suites.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print statistics of the initial mesh of a configuration.
    Meshinfo {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
    },
}

fn load(preset: Option<&str>, config: Option<&PathBuf>) -> vefem::Result<RunConfig> {
    match config {
        Some(p) => load_config(p, preset),
        None => parse_config("", preset),
    }
}

fn run(cli: Cli) -> vefem::Result<bool> {
    match cli.command {
        Command::Run { preset, config, out, threads, desk, desk_t_end } => {
            let mut cfg = load(Some(&preset), config.as_ref())?;
            if desk {
                cfg = presets::desk_scale(cfg, desk_t_end);
            }
            let out_dir = out.unwrap_or_else(|| cfg.resolved_out_dir());
            let threads = threads.unwrap_or(cfg.threads);
            let report = driver::with_threads(threads, || driver::run(&cfg, &out_dir))??;
            println!(
                "{}: {} steps, {} remeshes, {} snapshots in {}",
                cfg.preset,
                report.diagnostics.len(),
                report.remesh_count,
                report.snapshots.len(),
                report.out_dir.display()
            );
            match report.error {
                Some(e) => {
                    eprintln!("error: {e}");
                    Ok(false)
                }
                None => Ok(true),
            }
        }
        Command::Check { seed } => {
            let results = checks::run_all(seed)?;
            for r in &results {
                println!("{} {:<20} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            Ok(results.iter().all(|r| r.passed))
        }
        Command::Meshinfo { config, preset } => {
            let cfg = load(preset.as_deref(), config.as_ref())?;
            let settings = cfg.mesh_settings()?;
            let mesh = settings.initial_mesh(&InitialData::tumour(cfg.model.eps), cfg.model.eps)?;
            let dirichlet = mesh.dirichlet_vertices().iter().filter(|&&d| d).count();
            println!("domain         {:?} x {:?}", settings.domain.min, settings.domain.max);
            println!("n_coarse       {}", settings.n_coarse);
            println!("h_fine         {:?}", settings.h_fine);
            println!("vertices       {}", mesh.num_vertices());
            println!("elements       {}", mesh.num_elements());
            println!("h_min          {:.6}", mesh.h_min());
            println!("h_max          {:.6}", mesh.h_max());
            println!("max angle      {:.2} deg", mesh.max_angle().to_degrees());
            println!("area           {:.6}", mesh.total_area());
            println!("dirichlet vtx  {dirichlet}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
