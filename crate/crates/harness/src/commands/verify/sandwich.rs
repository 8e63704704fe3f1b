//! Disagreement of two halfspaces at a known angle, against the profile's
//! lower and upper bounds and against `theta / pi`.

use std::f64::consts::PI;

use massart_core::distributions::{empirical_density_check, MarginalSampler};
use massart_core::geometry::{error_lower_bound_from_angle, error_upper_bound_from_angle, orthonormal_basis_of_span};
use massart_core::verification::vector_at_angle;
use serde::Deserialize;

use super::{parse_params, Check, CheckRow};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::measure::measure_disagreement;
use crate::output::{fmt_f64, PlotData};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    thetas: Vec<f64>,
    eps: Vec<f64>,
    #[serde(default = "default_samples")]
    samples: u64,
    /// Draws for the histogram certificate of the profile.
    #[serde(default = "default_density_samples")]
    density_samples: u64,
    #[serde(default = "default_sigmas")]
    confidence_sigmas: f64,
}

fn default_samples() -> u64 {
    1_000_000
}

fn default_density_samples() -> u64 {
    4_000_000
}

fn default_sigmas() -> f64 {
    3.0
}

pub struct AngleSandwich {
    params: Params,
}

impl AngleSandwich {
    pub fn from_params(v: serde_json::Value) -> Result<Box<dyn Check>> {
        Ok(Box::new(Self { params: parse_params(v)? }))
    }
}

impl Check for AngleSandwich {
    fn name(&self) -> &'static str {
        "angle_sandwich"
    }

    fn columns(&self) -> &'static [&'static str] {
        &[
            "theta",
            "eps",
            "profile_certified",
            "lower",
            "upper",
            "disagreement",
            "disagreement_stderr",
            "theta_over_pi",
        ]
    }

    fn validate(&self, config: &ExperimentConfig) -> Result<()> {
        let p = &self.params;
        let profile = config.certified_profile()?.profile;
        if p.thetas.is_empty() || p.eps.is_empty() {
            return Err(HarnessError::config("verify.thetas", "thetas and eps must be non-empty"));
        }
        for &t in &p.thetas {
            for &e in &p.eps {
                error_upper_bound_from_angle(t, e, &profile)
                    .map_err(|err| HarnessError::config("verify.eps", err.to_string()))?;
            }
            if !(t > 0.0 && t < PI) {
                return Err(HarnessError::config("verify.thetas", format!("{t} not in (0, pi)")));
            }
        }
        if p.samples < 1000 || p.density_samples < 1000 {
            return Err(HarnessError::config("verify.samples", "sample counts must be >= 1000"));
        }
        if config.require_marginal()?.dim < 2 {
            return Err(HarnessError::config("marginal.dim", "must be >= 2"));
        }
        Ok(())
    }

    fn run_trial(&self, config: &ExperimentConfig, trial: u64) -> Result<Vec<CheckRow>> {
        let p = &self.params;
        let spec = config.require_marginal()?;
        let profile = config.certified_profile()?.profile;
        let seed = config.trial_seed(trial);
        let target = config.target_for(seed, spec.dim)?;
        let marginal = spec.build()?;

        // certify the profile on a random plane through the target
        let other = vector_at_angle(&target, PI / 2.0, &mut seed.named("density_plane").rng())?;
        let (b1, b2) = orthonormal_basis_of_span(&target, &other)?;
        let mut sampler = MarginalSampler::new(marginal.clone(), seed.named("density"));
        let density = empirical_density_check(&mut sampler, (&b1, &b2), &profile, p.density_samples as usize)?;

        let mut rows = Vec::new();
        for (i, &theta) in p.thetas.iter().enumerate() {
            let s = seed.child(i as u64);
            let h = vector_at_angle(&target, theta, &mut s.named("plane").rng())?;
            let mut sampler = MarginalSampler::new(marginal.clone(), s.named("samples"));
            let d = measure_disagreement(&h, &target, &mut sampler, p.samples as usize)?;
            let slack = p.confidence_sigmas * d.stderr;
            let lower = error_lower_bound_from_angle(theta, &profile)?;
            let exact = theta / PI;
            for &eps in &p.eps {
                let upper = error_upper_bound_from_angle(theta, eps, &profile)?;
                let pass = density.passed
                    && lower <= d.value + slack
                    && d.value - slack <= upper
                    && (d.value - exact).abs() <= slack;
                rows.push(CheckRow {
                    values: vec![
                        fmt_f64(theta),
                        fmt_f64(eps),
                        density.passed.to_string(),
                        fmt_f64(lower),
                        fmt_f64(upper),
                        fmt_f64(d.value),
                        fmt_f64(d.stderr),
                        fmt_f64(exact),
                    ],
                    pass,
                    point: Some((format!("trial_{trial}/eps_{eps}"), theta, d.value)),
                });
            }
        }
        Ok(rows)
    }

    fn plot(&self) -> Option<PlotData> {
        Some(PlotData::new("disagreement_vs_angle", "theta", "disagreement"))
    }
}
