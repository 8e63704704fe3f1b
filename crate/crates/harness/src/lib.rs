//! Experiment runner for `massart-core`: loads a config, runs the requested
//! command over seeded trials and writes a results CSV, plot data and a JSON
//! summary.
//!
//! ```no_run
//! use massart_harness::{config::{CommandName, ExperimentConfig}, run};
//!
//! let config = ExperimentConfig::load("fixtures/c06_learn_massart.toml".as_ref(), CommandName::Learn)?;
//! let outcome = run(&config, None)?;
//! println!("{} of {} rows passed", outcome.summary.passes, outcome.summary.rows);
//! # Ok::<(), massart_harness::error::HarnessError>(())
//! ```

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

pub mod commands;
pub mod config;
pub mod error;
pub mod measure;
pub mod output;

use commands::build_command;
use config::ExperimentConfig;
use error::{HarnessError, Result};
use output::{Metadata, Summary, RESULTS_FILE};

/// Environment variable consulted for the thread budget when `--threads` is
/// not given.
pub const THREADS_ENV: &str = "MASSART_THREADS";

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    /// 0 when enough rows passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.summary.passed() {
            0
        } else {
            2
        }
    }
}

/// Runs `config` on a pool of `threads` workers (falling back to the config's
/// `threads`, then to the machine's parallelism) and writes the artifacts.
pub fn run(config: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutcome> {
    let threads = threads
        .or(config.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(HarnessError::config("threads", "must be >= 1"));
    }
    let dir = config.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::io(&dir, std::io::Error::other(e)))?;
    let command = build_command(config.command().name())?;
    let start = Instant::now();
    let out = pool.install(|| command.execute(config))?;
    let wall = start.elapsed().as_secs_f64();

    let meta = Metadata {
        command: command.name().to_string(),
        config_hash: config.hash(),
    };
    let mut files = Vec::new();
    let results = dir.join(RESULTS_FILE);
    out.table.write_csv(&results, &meta)?;
    files.push(results);
    if config.output.plots {
        for p in &out.plots {
            files.push(p.write_csv(&dir, &meta)?);
        }
    }
    let summary = Summary::build(&meta, &out.table, &out.summarised, out.min_passes, out.extra, wall);
    files.push(summary.write(&dir)?);
    Ok(RunOutcome {
        summary,
        out_dir: dir,
        files,
    })
}
