//! `err(h) - OPT >= (1 - 2 eta) Pr[h != f]` on small discrete distributions,
//! evaluated exactly in integer arithmetic.

use massart_core::geometry::dot;
use massart_core::learner::excess_to_target_error;
use rand::Rng;
use serde::Deserialize;

use super::{parse_params, Check, CheckRow};
use crate::config::{random_direction, ExperimentConfig};
use crate::error::{HarnessError, Result};
use crate::output::fmt_f64;

/// Flip rates are multiples of `1 / RATE_DENOM`.
const RATE_DENOM: i128 = 1000;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    #[serde(default = "default_points")]
    points: usize,
    #[serde(default = "default_dim")]
    dim: usize,
    eta_bound: f64,
    #[serde(default = "default_max_weight")]
    max_weight: u64,
}

fn default_points() -> usize {
    20
}

fn default_dim() -> usize {
    3
}

fn default_max_weight() -> u64 {
    100
}

/// A finite distribution: point `i` has mass `weights[i] / sum(weights)` and
/// flip rate `rates[i] / 1000`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteInstance {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<u64>,
    pub rates: Vec<u64>,
}

/// Exact totals, all scaled by `1000 * sum(weights)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactErrors {
    pub err_h: i128,
    pub opt: i128,
    pub disagreement: i128,
    pub scale: i128,
}

impl DiscreteInstance {
    /// Errors of `h` when clean labels come from `f`.
    pub fn exact_errors(&self, h: &[f64], f: &[f64]) -> ExactErrors {
        let side = |v: &[f64], x: &[f64]| dot(v, x) >= 0.0;
        let mut e = ExactErrors {
            err_h: 0,
            opt: 0,
            disagreement: 0,
            scale: 0,
        };
        for ((x, &w), &k) in self.points.iter().zip(&self.weights).zip(&self.rates) {
            let (w, k) = (w as i128, k as i128);
            e.scale += RATE_DENOM * w;
            e.opt += w * k;
            if side(h, x) == side(f, x) {
                e.err_h += w * k;
            } else {
                e.err_h += w * (RATE_DENOM - k);
                e.disagreement += RATE_DENOM * w;
            }
        }
        e
    }
}

pub struct ExcessTranslation {
    params: Params,
    eta_milli: u64,
}

impl ExcessTranslation {
    pub fn from_params(v: serde_json::Value) -> Result<Box<dyn Check>> {
        let params: Params = parse_params(v)?;
        if !(0.0..0.5).contains(&params.eta_bound) {
            return Err(HarnessError::config("verify.eta_bound", "must lie in [0, 1/2)"));
        }
        let eta_milli = (params.eta_bound * RATE_DENOM as f64).floor() as u64;
        if (eta_milli as f64 - params.eta_bound * RATE_DENOM as f64).abs() > 1e-9 {
            return Err(HarnessError::config("verify.eta_bound", "must be a multiple of 0.001"));
        }
        if params.points == 0 || params.dim == 0 || params.max_weight == 0 {
            return Err(HarnessError::config("verify.points", "points, dim and max_weight must be >= 1"));
        }
        Ok(Box::new(Self { params, eta_milli }))
    }
}

impl Check for ExcessTranslation {
    fn name(&self) -> &'static str {
        "excess_translation"
    }

    fn columns(&self) -> &'static [&'static str] {
        &["eta_bound", "err_h", "opt", "excess", "disagreement", "lower_bound", "recovered_bound"]
    }

    fn validate(&self, _config: &ExperimentConfig) -> Result<()> {
        Ok(())
    }

    fn run_trial(&self, config: &ExperimentConfig, trial: u64) -> Result<Vec<CheckRow>> {
        let p = &self.params;
        let seed = config.trial_seed(trial);
        let mut rng = seed.named("instance").rng();
        let mut points = Vec::with_capacity(p.points);
        for i in 0..p.points {
            points.push(random_direction(p.dim, seed.named("point").child(i as u64))?.into_inner());
        }
        let inst = DiscreteInstance {
            points,
            weights: (0..p.points).map(|_| rng.random_range(1..=p.max_weight)).collect(),
            rates: (0..p.points).map(|_| rng.random_range(0..=self.eta_milli)).collect(),
        };
        let f = random_direction(p.dim, seed.named("f"))?;
        let h = random_direction(p.dim, seed.named("h"))?;
        let e = inst.exact_errors(&h, &f);

        // (err - opt) * 1000 >= (1000 - 2 eta_milli) * disagreement, all scaled
        let lhs = (e.err_h - e.opt) * RATE_DENOM;
        let rhs = (RATE_DENOM - 2 * self.eta_milli as i128) * e.disagreement;
        let scale = e.scale as f64;
        let excess = (e.err_h - e.opt) as f64 / scale;
        let disagreement = e.disagreement as f64 / scale;
        let recovered = excess_to_target_error(excess, p.eta_bound)?;
        Ok(vec![CheckRow {
            values: vec![
                fmt_f64(p.eta_bound),
                fmt_f64(e.err_h as f64 / scale),
                fmt_f64(e.opt as f64 / scale),
                fmt_f64(excess),
                fmt_f64(disagreement),
                fmt_f64(rhs as f64 / (scale * RATE_DENOM as f64)),
                fmt_f64(recovered),
            ],
            pass: lhs >= rhs,
            point: None,
        }])
    }
}
