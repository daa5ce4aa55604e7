//! Running a configured experiment: snapshots, diagnostics file, summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::diagnostics::{StepDiagnostics, CSV_HEADER};
use crate::error::{Error, Result};
use crate::model::InitialData;
use crate::solver::Engine;
use crate::vtk::write_vtk;

pub const CSV_NAME: &str = "diagnostics.csv";

/// Outcome of a run. `error` is set when the solver stopped early; the
/// diagnostics of every accepted step are kept either way.
#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub diagnostics: Vec<StepDiagnostics>,
    pub snapshots: Vec<PathBuf>,
    pub remesh_count: usize,
    pub error: Option<Error>,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

fn snapshot(engine: &Engine, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(format!("state_{:06}.vtk", engine.state.step));
    write_vtk(&engine.disc, &engine.state, &path)?;
    out.push(path);
    Ok(())
}

/// Run `cfg` writing into `out_dir`. Setup and I/O failures are returned as
/// errors; solver failures end up in [`RunReport::error`] after the
/// diagnostics written so far have been flushed.
pub fn run(cfg: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let data = InitialData::tumour(cfg.model.eps);
    let mut engine = Engine::new(cfg.model.clone(), data, cfg.mesh_settings()?)?;
    let n_steps = cfg.model.num_steps()?;
    let stride = cfg.output.stride;

    let mut csv = BufWriter::new(File::create(out_dir.join(CSV_NAME))?);
    writeln!(csv, "{CSV_HEADER}")?;
    let mut snapshots = Vec::new();
    snapshot(&engine, out_dir, &mut snapshots)?;

    let mut diagnostics = Vec::with_capacity(n_steps);
    let mut error = None;
    while engine.state.step < n_steps {
        match engine.step() {
            Ok(d) => {
                writeln!(csv, "{}", d.csv_row())?;
                let k = engine.state.step;
                if k == n_steps || (stride > 0 && k % stride == 0) {
                    snapshot(&engine, out_dir, &mut snapshots)?;
                }
                log::info!("step {k}/{n_steps} t={:.4} iters={} volume={:.6}", d.time, d.iters, d.tumour_volume);
                diagnostics.push(d);
            }
            Err(e) => {
                log::error!("step {} failed: {e}", engine.state.step + 1);
                error = Some(e);
                break;
            }
        }
    }
    csv.flush()?;
    Ok(RunReport { out_dir: out_dir.to_path_buf(), diagnostics, snapshots, remesh_count: engine.remesh_count, error })
}

/// Run `f` on a pool of `threads` workers (0: rayon's default).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
