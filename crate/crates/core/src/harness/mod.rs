//! Experiment orchestration and persistence.

pub mod config;
pub mod experiments;
pub mod record;
pub mod walks;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use config::{config_schema, Experiment, ExperimentConfig, PsiSpec, RMode};
pub use record::{read_jsonl, summarize, Header, Row, SummaryRow};
pub use walks::{mc_exit, transience_probe, McExit, TransienceRow};

/// Tasks evaluated in parallel before their rows are written in order.
const CHUNK: usize = 16;

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub jsonl: PathBuf,
    pub csv: PathBuf,
    pub n_rows: usize,
    pub n_errors: usize,
    pub warnings: Vec<String>,
    pub summary: Vec<SummaryRow>,
}

/// Runs `config`, writing `<experiment>.jsonl` and `<experiment>.csv` under
/// `out_dir` (default: the config's `output_path`, else the current directory).
pub fn run(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    if let Some(c) = config.capacity {
        crate::lattice::set_capacity_limit(c);
    }
    let dir = out_dir.map(Path::to_path_buf).or_else(|| config.output_path.clone()).unwrap_or_else(|| ".".into());
    let (jsonl, csv) = record::output_paths(&dir, config.experiment.name());
    let warnings = config.warnings();
    let mut w = record::JsonlWriter::create(&jsonl)?;
    w.write(&Header::new(config, warnings.clone()))?;
    let tasks = experiments::tasks(config)?;
    let mut rows = Vec::new();
    let mut index = 0u64;
    for chunk in tasks.chunks(CHUNK) {
        let out: Vec<Vec<Row>> = chunk.par_iter().map(|t| t.run()).collect();
        for task_rows in out {
            for mut r in task_rows {
                r.task = index;
                w.write(&r)?;
                rows.push(r);
            }
            index += 1;
        }
    }
    let summary = summarize(config.experiment, &rows);
    record::write_summary(&csv, &summary)?;
    Ok(RunOutcome {
        jsonl,
        csv,
        n_errors: rows.iter().filter(|r| r.error.is_some()).count(),
        n_rows: rows.len(),
        warnings,
        summary,
    })
}

/// [`run`] on a dedicated pool of `threads` workers.
pub fn run_with_threads(config: &ExperimentConfig, out_dir: Option<&Path>, threads: usize) -> Result<RunOutcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run(config, out_dir))
}
