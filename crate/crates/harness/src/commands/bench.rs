//! PSGD throughput on the sigmoid surrogate, per dimension.

use std::time::Instant;

use massart_core::distributions::{MarginalKind, MarginalSpec};
use massart_core::learner::OracleGradient;
use massart_core::noise::MassartOracle;
use massart_core::psgd::{psgd_run, PsgdConfig};
use massart_core::surrogate::SurrogateSpec;

use super::{Command, CommandOutput};
use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::output::{fmt_f64, ResultsTable};

pub const COLUMNS: [&str; 4] = ["marginal", "dim", "steps", "wall_steps_per_s"];

pub struct Bench;

impl Command for Bench {
    fn name(&self) -> &'static str {
        "bench"
    }

    /// Dimensions run one after another so timings do not compete.
    fn execute(&self, config: &ExperimentConfig) -> Result<CommandOutput> {
        let b = &config.bench;
        let kind = config.marginal.map_or(MarginalKind::StandardGaussian, |m| m.kind);
        let config_id = config.config_id();
        let surrogate = SurrogateSpec::sigmoid(b.sigma).build()?;
        let mut table = ResultsTable::new(&COLUMNS);
        for trial in 0..config.trials {
            for &dim in &b.dims {
                let seed = config.trial_seed(trial).child(dim as u64);
                let start = Instant::now();
                let run = || -> Result<()> {
                    let spec = MarginalSpec { kind, dim };
                    let target = config.target_for(seed, dim)?;
                    let mut oracle = MassartOracle::new(target, config.noise.build()?, spec.build()?, seed.named("oracle"))?;
                    let w0 = crate::config::random_direction(dim, seed.named("start"))?;
                    let mut grad = OracleGradient::new(&mut oracle, surrogate.as_ref());
                    let pc = PsgdConfig::new(b.steps, b.step_size, seed.named("psgd").key()).with_record_every(b.steps);
                    psgd_run(&mut grad, &pc, &w0)?;
                    Ok(())
                };
                let outcome = run();
                let wall = start.elapsed().as_secs_f64();
                match outcome {
                    Ok(()) => table.push(
                        trial,
                        &config_id,
                        vec![
                            kind.name().to_string(),
                            dim.to_string(),
                            b.steps.to_string(),
                            fmt_f64(b.steps as f64 / wall),
                        ],
                        true,
                        wall,
                    ),
                    Err(e) => table.push_aborted(trial, &config_id, &e.to_string(), wall),
                }
            }
        }
        let mut out = CommandOutput::new(table);
        out.summarised = vec!["wall_steps_per_s"];
        Ok(out)
    }
}
