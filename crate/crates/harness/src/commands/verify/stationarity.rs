//! PSGD on a synthetic objective with known constants: does the theoretical
//! iteration count reach an `eps`-stationary point?

use std::cell::Cell;

use massart_core::geometry::{dot, norm};
use massart_core::psgd::{psgd_run, theoretical_iteration_count, theoretical_step_size, FnGradient, PsgdConfig};
use massart_core::rng::StreamRng;
use massart_core::UnitVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use super::{parse_params, Check, CheckRow};
use crate::config::{random_direction, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, ResultsTable};

/// `f(w) = 1 - <a, w/|w|>^2` observed through `g(z, w) = f(w) + <z, w/|w|>`
/// with `z ~ N(0, s^2 I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereQuadratic {
    pub axis: UnitVector,
    pub noise_scale: f64,
}

impl SphereQuadratic {
    pub fn dim(&self) -> usize {
        self.axis.dim()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let c = dot(&self.axis, w) / norm(w);
        1.0 - c * c
    }

    /// `-2 c (a - c u) / |w|` with `u = w/|w|`, `c = <a, u>`.
    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let r = norm(w);
        let c = dot(&self.axis, w) / r;
        self.axis
            .iter()
            .zip(w)
            .map(|(a, wi)| -2.0 * c * (a - c * wi / r) / r)
            .collect()
    }

    /// Gradient of `g(z, w)` at a unit `w` for a fresh `z`.
    pub fn sample_gradient(&self, w: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        let c = dot(&self.axis, w);
        let mut zw = 0.0;
        for (o, wi) in out.iter_mut().zip(w) {
            let z: f64 = rng.sample(StandardNormal);
            *o = self.noise_scale * z;
            zw += *o * wi;
        }
        for ((o, a), wi) in out.iter_mut().zip(self.axis.iter()).zip(w) {
            *o += -2.0 * c * (a - c * wi) - zw * wi;
        }
    }

    /// Lipschitz constant of the gradient on `|w| >= 1`.
    pub fn lipschitz(&self) -> f64 {
        2.0
    }

    /// `E |grad g|^2 <= max |grad f|^2 + (d - 1) s^2`.
    pub fn second_moment(&self) -> f64 {
        1.0 + (self.dim() as f64 - 1.0) * self.noise_scale * self.noise_scale
    }

    /// `|f| <= 1`.
    pub fn value_bound(&self) -> f64 {
        1.0
    }

    /// `|grad f|^2 = 4 c^2 (1 - c^2) <= 1`.
    pub fn mean_gradient_bound(&self) -> f64 {
        1.0
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    #[serde(default = "default_dim")]
    dim: usize,
    #[serde(default = "default_noise")]
    noise_scale: f64,
    eps: f64,
    delta: f64,
}

fn default_dim() -> usize {
    3
}

fn default_noise() -> f64 {
    0.5
}

pub struct PsgdStationarity {
    params: Params,
}

impl PsgdStationarity {
    pub fn from_params(v: serde_json::Value) -> Result<Box<dyn Check>> {
        let params: Params = parse_params(v)?;
        if params.dim < 2 {
            return Err(HarnessError::config("verify.dim", "must be >= 2"));
        }
        if !(params.noise_scale >= 0.0 && params.noise_scale.is_finite()) {
            return Err(HarnessError::config("verify.noise_scale", "must be finite and >= 0"));
        }
        Ok(Box::new(Self { params }))
    }

    fn schedule(&self, f: &SphereQuadratic) -> Result<(u64, f64)> {
        let p = &self.params;
        let (l, b, r) = (f.lipschitz(), f.second_moment(), f.value_bound());
        let t = theoretical_iteration_count(l, b, r, f.mean_gradient_bound(), p.eps, p.delta)?;
        Ok((t, theoretical_step_size(l, b, r, t)?))
    }
}

impl Check for PsgdStationarity {
    fn name(&self) -> &'static str {
        "psgd_stationarity"
    }

    fn columns(&self) -> &'static [&'static str] {
        &[
            "T",
            "beta",
            "L",
            "B",
            "min_gradient_norm",
            "argmin_step",
            "final_gradient_norm",
            "mean_sq_gradient_norm",
            "mean_sq_bound",
        ]
    }

    fn validate(&self, _config: &ExperimentConfig) -> Result<()> {
        let f = SphereQuadratic {
            axis: UnitVector::basis(self.params.dim, 0)?,
            noise_scale: self.params.noise_scale,
        };
        self.schedule(&f)
            .map_err(|e| HarnessError::config("verify", e.to_string()))?;
        Ok(())
    }

    fn run_trial(&self, config: &ExperimentConfig, trial: u64) -> Result<Vec<CheckRow>> {
        let d = self.params.dim;
        let seed = config.trial_seed(trial);
        let f = SphereQuadratic {
            axis: random_direction(d, seed.named("axis"))?,
            noise_scale: self.params.noise_scale,
        };
        let (t, beta) = self.schedule(&f)?;
        let w0 = random_direction(d, seed.named("start"))?;

        // the oracle sees w^(0..T-1); w^(0) is not part of the guarantee
        let calls = Cell::new(0u64);
        let best = Cell::new((f64::INFINITY, 0u64));
        let sum_sq = Cell::new(0.0f64);
        let mut oracle = FnGradient::new(d, |w: &[f64], rng: &mut StreamRng, out: &mut [f64]| {
            let step = calls.get();
            calls.set(step + 1);
            if step > 0 {
                let g = norm(&f.gradient(w));
                sum_sq.set(sum_sq.get() + g * g);
                if g < best.get().0 {
                    best.set((g, step));
                }
            }
            f.sample_gradient(w, rng, out);
        });
        let config = PsgdConfig::new(t, beta, seed.named("psgd").key()).with_record_every(t);
        let traj = psgd_run(&mut oracle, &config, &w0)?;
        let last = norm(&f.gradient(traj.last()));
        let (mut min, mut argmin) = best.get();
        if last < min {
            (min, argmin) = (last, t);
        }
        let mean_sq = (sum_sq.get() + last * last) / t as f64;
        let bound = (f.lipschitz() * f.second_moment() * f.value_bound() / (2.0 * t as f64)).sqrt();
        Ok(vec![CheckRow {
            values: vec![
                t.to_string(),
                fmt_f64(beta),
                fmt_f64(f.lipschitz()),
                fmt_f64(f.second_moment()),
                fmt_f64(min),
                argmin.to_string(),
                fmt_f64(last),
                fmt_f64(mean_sq),
                fmt_f64(bound),
            ],
            pass: min <= self.params.eps,
            point: None,
        }])
    }

    fn summarised(&self) -> Vec<&'static str> {
        vec!["min_gradient_norm", "final_gradient_norm", "mean_sq_gradient_norm"]
    }

    /// The in-expectation mean bound is reported, not enforced: a single run
    /// may exceed it.
    fn extra(&self, table: &ResultsTable) -> serde_json::Map<String, serde_json::Value> {
        let mut m = serde_json::Map::new();
        let v = table.numeric_column("mean_sq_gradient_norm");
        let b = table.numeric_column("mean_sq_bound");
        if !v.is_empty() && !b.is_empty() {
            let avg = v.iter().sum::<f64>() / v.len() as f64;
            m.insert("average_mean_sq_gradient_norm".into(), avg.into());
            m.insert("mean_sq_bound".into(), b[0].into());
            m.insert("mean_bound_holds_on_average".into(), (avg <= b[0]).into());
        }
        m
    }
}
