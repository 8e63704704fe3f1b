//! Analytic surrogate gradients against central differences, plus the
//! scale-invariance and orthogonality properties of the normalised loss.

use massart_core::geometry::{dot, norm};
use massart_core::noise::LabeledExample;
use massart_core::rng::StreamSeed;
use massart_core::surrogate::{per_sample_gradient, per_sample_loss, SurrogateSpec};
use rand::Rng;

use super::{run_trials, Command, CommandOutput};
use crate::config::{ExperimentConfig, GradcheckKind, GradcheckSection};
use crate::error::Result;
use crate::output::{fmt_f64, ResultsTable};

pub const COLUMNS: [&str; 6] = ["check", "surrogates", "cases", "failures", "max_error", "tolerance"];

pub struct Gradcheck;

/// One random input.
struct Case {
    w: Vec<f64>,
    ex: LabeledExample,
    sigma: f64,
}

fn draw_case(g: &GradcheckSection, seed: StreamSeed) -> Case {
    let mut rng = seed.rng();
    let d = rng.random_range(g.dim_min..=g.dim_max);
    let w = loop {
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        if norm(&w) > 0.1 {
            break w;
        }
    };
    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let sigma = rng.random_range(g.sigma_min..=g.sigma_max);
    Case {
        w,
        ex: LabeledExample::new(x, y),
        sigma,
    }
}

/// Tally of one check.
#[derive(Default)]
struct Tally {
    cases: u64,
    failures: u64,
    max_error: f64,
}

impl Tally {
    fn record(&mut self, error: f64, tolerance: f64) {
        self.cases += 1;
        self.max_error = self.max_error.max(error);
        if !(error <= tolerance) {
            self.failures += 1;
        }
    }
}

/// Returns `(relative tally over large gradients, absolute tally over small
/// ones)`.
fn finite_difference(g: &GradcheckSection, seed: StreamSeed) -> Result<(Tally, Tally)> {
    let (mut rel, mut abs) = (Tally::default(), Tally::default());
    for i in 0..g.cases {
        let c = draw_case(g, seed.child(i));
        let s = SurrogateSpec::sigmoid(c.sigma).build()?;
        let grad = per_sample_gradient(&c.w, &c.ex, s.as_ref())?;
        let mut diff = Vec::with_capacity(c.w.len());
        for (j, gj) in grad.iter().enumerate() {
            let (mut a, mut b) = (c.w.clone(), c.w.clone());
            a[j] += g.step;
            b[j] -= g.step;
            let fd = (per_sample_loss(&a, &c.ex, s.as_ref())? - per_sample_loss(&b, &c.ex, s.as_ref())?) / (2.0 * g.step);
            diff.push(gj - fd);
        }
        let gn = norm(&grad);
        if gn < g.small_norm {
            abs.record(norm(&diff), g.abs_tol);
        } else {
            rel.record(norm(&diff) / gn, g.rel_tol);
        }
    }
    Ok((rel, abs))
}

/// Alternates sigmoid and ramp across cases.
fn surrogate_for(i: u64, sigma: f64) -> SurrogateSpec {
    if i.is_multiple_of(2) {
        SurrogateSpec::sigmoid(sigma)
    } else {
        SurrogateSpec::ramp(sigma)
    }
}

fn homogeneity(g: &GradcheckSection, seed: StreamSeed) -> Result<Tally> {
    let mut t = Tally::default();
    for i in 0..g.invariance_cases {
        let c = draw_case(g, seed.child(i));
        let s = surrogate_for(i, c.sigma).build()?;
        let base = per_sample_loss(&c.w, &c.ex, s.as_ref())?;
        let worst = g
            .scales
            .iter()
            .map(|k| {
                let scaled: Vec<f64> = c.w.iter().map(|v| k * v).collect();
                Ok((per_sample_loss(&scaled, &c.ex, s.as_ref())? - base).abs())
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        t.record(worst, g.scale_tol);
    }
    Ok(t)
}

fn orthogonality(g: &GradcheckSection, seed: StreamSeed) -> Result<Tally> {
    let mut t = Tally::default();
    for i in 0..g.invariance_cases {
        let c = draw_case(g, seed.child(i));
        let s = surrogate_for(i, c.sigma).build()?;
        let grad = per_sample_gradient(&c.w, &c.ex, s.as_ref())?;
        let gn = norm(&grad);
        let err = if gn > 0.0 { dot(&grad, &c.w).abs() / gn } else { 0.0 };
        t.record(err, g.orthogonality_tol);
    }
    Ok(t)
}

impl Command for Gradcheck {
    fn name(&self) -> &'static str {
        "gradcheck"
    }

    fn execute(&self, config: &ExperimentConfig) -> Result<CommandOutput> {
        let g = &config.gradcheck;
        let config_id = config.config_id();
        let results = run_trials(config.trials, |trial| {
            let seed = config.trial_seed(trial);
            let mut rows = Vec::new();
            for kind in &g.checks {
                let s = seed.named(kind.name());
                match kind {
                    GradcheckKind::FiniteDifference => {
                        let (rel, abs) = finite_difference(g, s)?;
                        rows.push(("finite_difference_relative", "sigmoid", rel, g.rel_tol));
                        rows.push(("finite_difference_absolute", "sigmoid", abs, g.abs_tol));
                    }
                    GradcheckKind::Homogeneity => rows.push(("homogeneity", "sigmoid+ramp", homogeneity(g, s)?, g.scale_tol)),
                    GradcheckKind::Orthogonality => {
                        rows.push(("orthogonality", "sigmoid+ramp", orthogonality(g, s)?, g.orthogonality_tol))
                    }
                }
            }
            Ok::<_, crate::error::HarnessError>(rows)
        });

        let mut table = ResultsTable::new(&COLUMNS);
        let mut max_rel = 0.0f64;
        for r in results {
            match r.value {
                Ok(rows) => {
                    for (name, surrogates, t, tol) in rows {
                        if name == "finite_difference_relative" {
                            max_rel = max_rel.max(t.max_error);
                        }
                        let values = vec![
                            name.to_string(),
                            surrogates.to_string(),
                            t.cases.to_string(),
                            t.failures.to_string(),
                            fmt_f64(t.max_error),
                            fmt_f64(tol),
                        ];
                        table.push(r.trial, &config_id, values, t.failures == 0, r.wall);
                    }
                }
                Err(e) => table.push_aborted(r.trial, &config_id, &e.to_string(), r.wall),
            }
        }
        let mut out = CommandOutput::new(table);
        out.summarised = vec!["max_error"];
        out.min_passes = config.evaluation.min_passes;
        if g.checks.contains(&GradcheckKind::FiniteDifference) {
            out.extra.insert("max_relative_error".into(), max_rel.into());
        }
        Ok(out)
    }
}
