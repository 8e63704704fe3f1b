//! Gradient-norm floors of the structural lemmas, swept over a menu of
//! noise adversaries.

use massart_core::noise::{NoiseKind, NoiseStrategy};
use massart_core::verification::{verify_stationary_gap, SampleBudget, StructuralCheckConfig, StructuralLemma};
use serde::Deserialize;

use super::{parse_params, Check, CheckRow};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, PlotData, ResultsTable};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Params {
    lemma: StructuralLemma,
    /// `eta` for the Massart lemmas, `c` for the strong one.
    noise_param: f64,
    /// Defaults to every adversary the lemma covers.
    #[serde(default)]
    strategies: Option<Vec<NoiseStrategy>>,
    window: f64,
    angles: Vec<f64>,
    #[serde(default)]
    sigma: Option<f64>,
    #[serde(default = "default_estimator")]
    estimator: String,
    #[serde(default)]
    budget: SampleBudget,
    #[serde(default = "default_sigmas")]
    confidence_sigmas: f64,
}

fn default_estimator() -> String {
    "margin_importance".into()
}

fn default_sigmas() -> f64 {
    3.0
}

pub struct StructuralFloor {
    params: Params,
    strategies: Vec<NoiseStrategy>,
}

/// Adversaries covered by a lemma at parameter `p`.
pub fn default_menu(lemma: StructuralLemma, p: f64) -> Vec<NoiseStrategy> {
    match lemma {
        StructuralLemma::Ramp | StructuralLemma::Sigmoid => vec![
            NoiseStrategy::none(),
            NoiseStrategy::constant(p),
            NoiseStrategy::boundary(p, 0.1),
            NoiseStrategy::random_measurable(p, 0),
        ],
        StructuralLemma::Strong => vec![NoiseStrategy::none(), NoiseStrategy::strong(p)],
    }
}

fn strategy_label(s: &NoiseStrategy) -> String {
    match s.kind {
        NoiseKind::None => "none".into(),
        NoiseKind::Constant => format!("constant(eta={})", s.eta_bound),
        NoiseKind::BoundaryConcentrated => format!("boundary_concentrated(eta={},band={})", s.eta_bound, s.band),
        NoiseKind::RandomMeasurable => format!("random_measurable(eta={},key={})", s.eta_bound, s.hash_key),
        NoiseKind::StrongMassartMax => format!("strong_massart_max(c={})", s.c_strong),
    }
}

impl StructuralFloor {
    pub fn from_params(v: serde_json::Value) -> Result<Box<dyn Check>> {
        let params: Params = parse_params(v)?;
        let strategies = params
            .strategies
            .clone()
            .unwrap_or_else(|| default_menu(params.lemma, params.noise_param));
        if strategies.is_empty() {
            return Err(HarnessError::config("verify.strategies", "must not be empty"));
        }
        Ok(Box::new(Self { params, strategies }))
    }

    fn check_config(&self, config: &ExperimentConfig, noise: NoiseStrategy, trial: u64) -> Result<StructuralCheckConfig> {
        let p = &self.params;
        Ok(StructuralCheckConfig {
            lemma: p.lemma,
            noise_param: p.noise_param,
            noise,
            marginal: config.require_marginal()?.build()?,
            profile: config.certified_profile()?.profile,
            window: p.window,
            angles: p.angles.clone(),
            sigma: p.sigma,
            estimator: p.estimator.clone(),
            budget: p.budget,
            confidence_sigmas: p.confidence_sigmas,
            seed: config.trial_seed(trial),
        })
    }
}

impl Check for StructuralFloor {
    fn name(&self) -> &'static str {
        "structural_floor"
    }

    fn columns(&self) -> &'static [&'static str] {
        &["lemma", "strategy", "theta", "sigma", "floor", "estimate", "stderr", "samples"]
    }

    fn validate(&self, config: &ExperimentConfig) -> Result<()> {
        massart_core::verification::build_estimator(&self.params.estimator)
            .map_err(|e| HarnessError::config("verify.estimator", e.to_string()))?;
        for s in &self.strategies {
            self.check_config(config, *s, 0)?
                .validate()
                .map_err(|e| HarnessError::config("verify", format!("{}: {e}", strategy_label(s))))?;
        }
        Ok(())
    }

    fn run_trial(&self, config: &ExperimentConfig, trial: u64) -> Result<Vec<CheckRow>> {
        let dim = config.require_marginal()?.dim;
        let target = config.target_for(config.trial_seed(trial), dim)?;
        let mut rows = Vec::new();
        for (i, s) in self.strategies.iter().enumerate() {
            let mut c = self.check_config(config, *s, trial)?;
            c.seed = c.seed.named("strategy").child(i as u64);
            let label = strategy_label(s);
            for a in verify_stationary_gap(&c, &target)? {
                rows.push(CheckRow {
                    values: vec![
                        self.params.lemma.name().to_string(),
                        label.clone(),
                        fmt_f64(a.theta),
                        fmt_f64(a.sigma),
                        fmt_f64(a.floor),
                        fmt_f64(a.estimate),
                        fmt_f64(a.stderr),
                        a.samples.to_string(),
                    ],
                    pass: a.pass,
                    point: Some((format!("trial_{trial}/{label}"), a.theta, a.estimate)),
                });
            }
        }
        Ok(rows)
    }

    fn plot(&self) -> Option<PlotData> {
        Some(PlotData::new("gradient_norm", "theta", "gradient_norm"))
    }

    fn summarised(&self) -> Vec<&'static str> {
        vec!["estimate", "stderr", "samples"]
    }

    fn extra(&self, table: &ResultsTable) -> serde_json::Map<String, serde_json::Value> {
        let mut m = serde_json::Map::new();
        let est = table.numeric_column("estimate");
        let floor = table.numeric_column("floor");
        let ratio = est
            .iter()
            .zip(&floor)
            .map(|(e, f)| e / f)
            .fold(f64::INFINITY, f64::min);
        if ratio.is_finite() {
            m.insert("min_estimate_over_floor".into(), ratio.into());
        }
        m
    }
}
