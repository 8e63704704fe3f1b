//! Subcommands, registered by name behind the [`Command`] trait.

use std::time::Instant;

use massart_core::registry::Registry;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{PlotData, ResultsTable};

pub mod bench;
pub mod gradcheck;
pub mod learn;
pub mod verify;

/// What a command hands back for writing.
#[derive(Debug)]
pub struct CommandOutput {
    pub table: ResultsTable,
    pub plots: Vec<PlotData>,
    /// Numeric columns to summarise (median, min, max).
    pub summarised: Vec<&'static str>,
    pub min_passes: Option<u64>,
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl CommandOutput {
    pub fn new(table: ResultsTable) -> Self {
        Self {
            table,
            plots: Vec::new(),
            summarised: Vec::new(),
            min_passes: None,
            extra: serde_json::Map::new(),
        }
    }
}

pub trait Command: Send + Sync {
    fn name(&self) -> &'static str;

    /// Runs every trial. Trial-level failures become aborted rows; an `Err`
    /// means the run could not start.
    fn execute(&self, config: &ExperimentConfig) -> Result<CommandOutput>;
}

pub type CommandCtor = fn() -> Box<dyn Command>;

pub fn command_registry() -> Registry<CommandCtor> {
    let mut r: Registry<CommandCtor> = Registry::new("command");
    r.register("learn", || Box::new(learn::Learn))
        .register("verify", || Box::new(verify::Verify))
        .register("gradcheck", || Box::new(gradcheck::Gradcheck))
        .register("bench", || Box::new(bench::Bench));
    r
}

pub fn build_command(name: &str) -> Result<Box<dyn Command>> {
    Ok((command_registry().get(name)?)())
}

/// Result of one trial together with its wall time.
pub struct Timed<T> {
    pub trial: u64,
    pub value: T,
    pub wall: f64,
}

/// Runs `f` for every trial on the current rayon pool. The output is in
/// trial order whatever the scheduling.
pub fn run_trials<T, F>(trials: u64, f: F) -> Vec<Timed<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let start = Instant::now();
            let value = f(trial);
            Timed {
                trial,
                value,
                wall: start.elapsed().as_secs_f64(),
            }
        })
        .collect()
}
