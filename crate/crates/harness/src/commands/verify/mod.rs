//! The `verify` command and its checks. The `[verify]` section names a check
//! with its `check` key; the remaining keys are that check's parameters.

use massart_core::registry::Registry;

use super::{run_trials, Command, CommandOutput};
use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::output::{PlotData, ResultsTable};

pub mod sandwich;
pub mod stationarity;
pub mod structural;
pub mod translation;

/// One output row of a check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub values: Vec<String>,
    pub pass: bool,
    /// `(curve, x, y)` for the check's plot, if it has one.
    pub point: Option<(String, f64, f64)>,
}

pub trait Check: Send + Sync {
    fn name(&self) -> &'static str;

    fn columns(&self) -> &'static [&'static str];

    /// Config-time validation against the rest of the experiment.
    fn validate(&self, config: &ExperimentConfig) -> Result<()>;

    fn run_trial(&self, config: &ExperimentConfig, trial: u64) -> Result<Vec<CheckRow>>;

    /// Empty plot carrying the name and axis labels, for checks that emit one.
    fn plot(&self) -> Option<PlotData> {
        None
    }

    fn summarised(&self) -> Vec<&'static str> {
        Vec::new()
    }

    /// Figures for the summary's `extra` block, computed from the finished
    /// table.
    fn extra(&self, _table: &ResultsTable) -> serde_json::Map<String, serde_json::Value> {
        serde_json::Map::new()
    }
}

pub type CheckCtor = fn(serde_json::Value) -> Result<Box<dyn Check>>;

pub fn check_registry() -> Registry<CheckCtor> {
    let mut r: Registry<CheckCtor> = Registry::new("check");
    r.register("structural_floor", structural::StructuralFloor::from_params)
        .register("angle_sandwich", sandwich::AngleSandwich::from_params)
        .register("psgd_stationarity", stationarity::PsgdStationarity::from_params)
        .register("excess_translation", translation::ExcessTranslation::from_params);
    r
}

/// Builds the check described by a raw `[verify]` section.
pub fn build_check(raw: &serde_json::Value) -> Result<Box<dyn Check>> {
    let mut params = raw
        .as_object()
        .cloned()
        .ok_or_else(|| HarnessError::config("verify", "must be a table"))?;
    let name = match params.remove("check") {
        Some(serde_json::Value::String(s)) => s,
        Some(_) => return Err(HarnessError::config("verify.check", "must be a string")),
        None => return Err(HarnessError::config("verify.check", "missing check name")),
    };
    let registry = check_registry();
    let ctor = *registry
        .get(&name)
        .map_err(|e| HarnessError::config("verify.check", e.to_string()))?;
    ctor(serde_json::Value::Object(params))
}

/// Deserialises check parameters, reporting errors against `verify`.
pub(crate) fn parse_params<T: serde::de::DeserializeOwned>(v: serde_json::Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| HarnessError::config("verify", e.to_string()))
}

pub struct Verify;

impl Command for Verify {
    fn name(&self) -> &'static str {
        "verify"
    }

    fn execute(&self, config: &ExperimentConfig) -> Result<CommandOutput> {
        let raw = config
            .verify
            .as_ref()
            .ok_or_else(|| HarnessError::config("verify", "section is required"))?;
        let check = build_check(raw)?;
        check.validate(config)?;
        let config_id = config.config_id();
        let results = run_trials(config.trials, |t| check.run_trial(config, t));

        let mut table = ResultsTable::new(check.columns());
        let mut plot = check.plot();
        for r in results {
            match r.value {
                Ok(rows) => {
                    for row in rows {
                        if let (Some(p), Some(pt)) = (plot.as_mut(), row.point) {
                            p.points.push(pt);
                        }
                        table.push(r.trial, &config_id, row.values, row.pass, r.wall);
                    }
                }
                Err(e) => table.push_aborted(r.trial, &config_id, &e.to_string(), r.wall),
            }
        }
        let extra = check.extra(&table);
        let mut out = CommandOutput::new(table);
        out.plots.extend(plot);
        out.summarised = check.summarised();
        out.min_passes = config.evaluation.min_passes;
        out.extra = extra;
        out.extra.insert("check".into(), check.name().into());
        Ok(out)
    }
}
