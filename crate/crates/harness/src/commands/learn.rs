use massart_core::distributions::MarginalSampler;
use massart_core::geometry::angle_between;
use massart_core::learner::{learn, LearnParams};
use massart_core::noise::MassartOracle;

use super::{run_trials, Command, CommandOutput};
use crate::config::{ExperimentConfig, Metric};
use crate::error::Result;
use crate::measure::{measure_disagreement, measure_error};
use crate::output::{fmt_f64, PlotData, ResultsTable};

pub const COLUMNS: [&str; 17] = [
    "T",
    "beta",
    "sigma",
    "N",
    "samples_used",
    "candidate_count",
    "chosen_index",
    "selection_error",
    "angle",
    "disagreement",
    "disagreement_stderr",
    "err",
    "err_stderr",
    "opt",
    "opt_stderr",
    "excess",
    "excess_stderr",
];

pub struct Learn;

struct TrialResult {
    values: Vec<String>,
    pass: bool,
    /// `(step, angle to target)` along the recorded trajectory.
    path: Vec<(f64, f64)>,
}

impl Command for Learn {
    fn name(&self) -> &'static str {
        "learn"
    }

    fn execute(&self, config: &ExperimentConfig) -> Result<CommandOutput> {
        let params = config.learn_params()?;
        let config_id = config.config_id();
        let results = run_trials(config.trials, |t| run_trial(config, &params, t));

        let mut table = ResultsTable::new(&COLUMNS);
        let mut plot = PlotData::new("trajectory_angle", "step", "angle");
        for r in results {
            match r.value {
                Ok(v) => {
                    table.push(r.trial, &config_id, v.values, v.pass, r.wall);
                    let curve = format!("trial_{}", r.trial);
                    plot.points.extend(v.path.into_iter().map(|(x, y)| (curve.clone(), x, y)));
                }
                Err(e) => table.push_aborted(r.trial, &config_id, &e.to_string(), r.wall),
            }
        }
        let mut out = CommandOutput::new(table);
        out.plots.push(plot);
        out.summarised = vec!["disagreement", "excess", "angle", "samples_used", "T", "N"];
        out.min_passes = config.evaluation.min_passes;
        Ok(out)
    }
}

fn run_trial(config: &ExperimentConfig, params: &LearnParams, trial: u64) -> Result<TrialResult> {
    let spec = config.require_marginal()?;
    let seed = config.trial_seed(trial);
    let marginal = spec.build()?;
    let target = config.target_for(seed, spec.dim)?;
    let mut oracle = MassartOracle::new(target.clone(), config.noise.build()?, marginal.clone(), seed.named("oracle"))?;
    let report = learn(&mut oracle, params)?;

    let ev = &config.evaluation;
    let n = ev.samples as usize;
    let mut sampler = MarginalSampler::new(marginal, seed.named("disagreement"));
    let dis = measure_disagreement(&report.chosen, &target, &mut sampler, n)?;
    let err = measure_error(&report.chosen, &mut oracle.fork("evaluation"), n)?;
    let opt = oracle.opt_error(n)?;
    let excess = err.value - opt.value;
    let excess_stderr = err.stderr.hypot(opt.stderr);

    let (value, stderr) = match ev.metric {
        Metric::Disagreement => (dis.value, dis.stderr),
        Metric::Excess => (excess, excess_stderr),
    };
    let threshold = ev.threshold.unwrap_or(params.eps);
    let pass = value - ev.slack_sigmas * stderr <= threshold;

    let s = &report.schedule;
    let path = report
        .trajectory
        .steps
        .iter()
        .zip(&report.trajectory.iterates)
        .map(|(step, w)| Ok((*step as f64, angle_between(w, &target)?)))
        .collect::<Result<Vec<_>>>()?;
    let values = vec![
        fmt_f64(s.steps),
        fmt_f64(s.step_size),
        fmt_f64(s.sigma),
        fmt_f64(s.selection_samples),
        report.samples_used.to_string(),
        report.candidate_count.to_string(),
        report.chosen_index.to_string(),
        fmt_f64(report.empirical_errors[report.chosen_index]),
        fmt_f64(angle_between(&report.chosen, &target)?),
        fmt_f64(dis.value),
        fmt_f64(dis.stderr),
        fmt_f64(err.value),
        fmt_f64(err.stderr),
        fmt_f64(opt.value),
        fmt_f64(opt.stderr),
        fmt_f64(excess),
        fmt_f64(excess_stderr),
    ];
    Ok(TrialResult { values, pass, path })
}
