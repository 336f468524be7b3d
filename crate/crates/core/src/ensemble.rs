//! Ensemble runs: one trajectory per realization, each writing into its own
//! directory, and a JSON manifest written once at the end.
//!
//! ```text
//! out/
//!   manifest.json
//!   config.toml
//!   real_0000/diagnostics.csv
//!   real_0000/snap_000000.stqg
//! ```

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Setup};
use crate::diagnostics::{CsvWriter, DiagnosticsRecord};
use crate::error::{Result, StqgError};
use crate::model::{ModelData, State};
use crate::noise::sample_path;
use crate::snapshot::Snapshot;
use crate::stepper::{run, RunStatus, TrajectorySink};

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "STQG_THREADS";

pub const BUILD_ID: &str = concat!("stqg-core ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationEntry {
    pub id: usize,
    pub dir: String,
    #[serde(flatten)]
    pub status: RunStatus,
    pub steps_taken: usize,
    pub final_time: f64,
    pub bkm_integral: f64,
    pub cfl_warnings: usize,
}

/// Enough to rerun bit-identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub build: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub n_realizations: usize,
    pub realizations: Vec<RealizationEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| StqgError::Snapshot(format!("manifest: {e}")))
    }
}

/// Writes snapshots and the diagnostics CSV of one trajectory.
struct FileSink<'a> {
    dir: PathBuf,
    data: &'a ModelData,
    csv: Option<CsvWriter<BufWriter<File>>>,
    snapshots: bool,
    cfl_warnings: usize,
}

impl TrajectorySink for FileSink<'_> {
    fn snapshot(&mut self, step: usize, state: &State) -> Result<()> {
        if self.snapshots {
            Snapshot::of(state, self.data).save(&self.dir.join(format!("snap_{step:06}.stqg")))?;
        }
        Ok(())
    }

    fn record(&mut self, record: &DiagnosticsRecord) -> Result<()> {
        if let Some(csv) = &mut self.csv {
            csv.write(record)?;
        }
        Ok(())
    }

    fn cfl_warning(&mut self, _step: usize, _cfl: f64) -> Result<()> {
        self.cfl_warnings += 1;
        Ok(())
    }
}

/// Worker count from `STQG_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_VAR).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

fn run_one(cfg: &RunConfig, setup: &Setup, hash: &str, out: &Path, id: usize) -> Result<RealizationEntry> {
    let rel = format!("real_{id:04}");
    let dir = out.join(&rel);
    fs::create_dir_all(&dir)?;
    let path = sample_path(
        cfg.seed.unwrap_or(0),
        id as u64,
        cfg.time.n_steps,
        cfg.time.dt,
        setup.data.noise.len(),
        0,
    )?;
    let csv = if cfg.diagnostics.csv {
        let f = BufWriter::new(File::create(dir.join("diagnostics.csv"))?);
        Some(CsvWriter::new(f, hash)?)
    } else {
        None
    };
    let mut sink = FileSink {
        dir,
        data: &setup.data,
        csv,
        snapshots: cfg.diagnostics.snapshots,
        cfl_warnings: 0,
    };
    let summary = run(&setup.initial, &path, &setup.stepper, &setup.data, &setup.options, &mut sink)?;
    if let Some(csv) = &mut sink.csv {
        csv.flush()?;
    }
    Ok(RealizationEntry {
        id,
        dir: rel,
        status: summary.status,
        steps_taken: summary.steps_taken,
        final_time: summary.final_state.t,
        bkm_integral: summary.last_record.bkm_integral,
        cfl_warnings: sink.cfl_warnings,
    })
}

/// Runs every realization of `cfg` into `out` on a pool of `threads`
/// workers (all cores when `None`).
///
/// Blow-ups are recorded in the manifest, not returned as errors.
pub fn run_ensemble(cfg: &RunConfig, out: &Path, threads: Option<usize>) -> Result<Manifest> {
    let setup = cfg.setup()?;
    let hash = cfg.hash()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| StqgError::InvalidArgument(format!("thread pool: {e}")))?;
    let realizations: Vec<RealizationEntry> = pool.install(|| {
        (0..cfg.n_realizations)
            .into_par_iter()
            .map(|id| run_one(cfg, &setup, &hash, out, id))
            .collect::<Result<_>>()
    })?;
    let manifest = Manifest {
        build: BUILD_ID.into(),
        config_hash: hash,
        seed: cfg.seed,
        n_realizations: cfg.n_realizations,
        realizations,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| StqgError::InvalidArgument(e.to_string()))?;
    fs::write(out.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}
