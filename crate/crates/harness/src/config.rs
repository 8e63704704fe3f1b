//! Experiment configuration: TOML (`key = value` with `[section]` headers),
//! or the same structure as JSON when the file name ends in `.json`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use massart_core::distributions::{certified_profile, CertifiedProfile, MarginalSpec, ProfileSource};
use massart_core::learner::{LearnParams, NoiseModelKind, ScheduleMode, ScheduleOverrides};
use massart_core::noise::{NoiseKind, NoiseStrategy};
use massart_core::rng::{GeneratorKind, StreamSeed};
use massart_core::UnitVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::verify::build_check;
use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandName {
    Learn,
    Verify,
    Gradcheck,
    Bench,
}

impl CommandName {
    pub const ALL: [CommandName; 4] = [
        CommandName::Learn,
        CommandName::Verify,
        CommandName::Gradcheck,
        CommandName::Bench,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommandName::Learn => "learn",
            CommandName::Verify => "verify",
            CommandName::Gradcheck => "gradcheck",
            CommandName::Bench => "bench",
        }
    }
}

impl fmt::Display for CommandName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must agree with the subcommand when present.
    #[serde(default)]
    pub command: Option<CommandName>,
    #[serde(default = "one")]
    pub trials: u64,
    #[serde(default)]
    pub base_seed: u64,
    /// Worker threads; excluded from the config hash.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub rng: GeneratorKind,
    /// Fixed target direction; a fresh random one per trial when absent.
    #[serde(default)]
    pub target: Option<Vec<f64>>,
    #[serde(default)]
    pub marginal: Option<MarginalSpec>,
    #[serde(default)]
    pub profile: ProfileSource,
    #[serde(default = "NoiseStrategy::none")]
    pub noise: NoiseStrategy,
    #[serde(default)]
    pub learner: Option<LearnerSection>,
    #[serde(default)]
    pub evaluation: EvaluationSection,
    /// Raw check parameters, dispatched on the `check` key.
    #[serde(default)]
    pub verify: Option<serde_json::Value>,
    #[serde(default)]
    pub gradcheck: GradcheckSection,
    #[serde(default)]
    pub bench: BenchSection,
    /// Excluded from the config hash.
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerSection {
    /// Inferred from the noise kind when absent.
    #[serde(default)]
    pub model: Option<NoiseModelKind>,
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// `eta` or `c`; taken from the noise section when absent.
    #[serde(default)]
    pub noise_param: Option<f64>,
    #[serde(default)]
    pub mode: ScheduleMode,
    #[serde(default)]
    pub overrides: ScheduleOverrides,
    #[serde(default)]
    pub record_every: Option<u64>,
    #[serde(default)]
    pub step_budget: Option<f64>,
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Disagreement with the target under the clean marginal.
    #[default]
    Disagreement,
    /// Misclassification error minus OPT.
    Excess,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub metric: Metric,
    /// Pass threshold; `learner.eps` when absent.
    pub threshold: Option<f64>,
    /// A trial passes when `value - slack_sigmas * stderr <= threshold`.
    pub slack_sigmas: f64,
    pub samples: u64,
    /// Rows that must pass for exit status 0; all rows when absent.
    pub min_passes: Option<u64>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            metric: Metric::Disagreement,
            threshold: None,
            slack_sigmas: 3.0,
            samples: 100_000,
            min_passes: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradcheckKind {
    FiniteDifference,
    Homogeneity,
    Orthogonality,
}

impl GradcheckKind {
    pub fn name(self) -> &'static str {
        match self {
            GradcheckKind::FiniteDifference => "finite_difference",
            GradcheckKind::Homogeneity => "homogeneity",
            GradcheckKind::Orthogonality => "orthogonality",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSection {
    pub checks: Vec<GradcheckKind>,
    /// Random inputs for the finite-difference check.
    pub cases: u64,
    /// Random inputs for the homogeneity and orthogonality checks.
    pub invariance_cases: u64,
    pub dim_min: usize,
    pub dim_max: usize,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub step: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Below this gradient norm the absolute tolerance applies.
    pub small_norm: f64,
    pub scales: Vec<f64>,
    pub scale_tol: f64,
    pub orthogonality_tol: f64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            checks: vec![
                GradcheckKind::FiniteDifference,
                GradcheckKind::Homogeneity,
                GradcheckKind::Orthogonality,
            ],
            cases: 1000,
            invariance_cases: 10_000,
            dim_min: 2,
            dim_max: 20,
            sigma_min: 0.05,
            sigma_max: 1.0,
            step: 1e-6,
            rel_tol: 1e-5,
            abs_tol: 1e-8,
            small_norm: 1e-3,
            scales: vec![0.5, 2.0, 10.0],
            scale_tol: 1e-12,
            orthogonality_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub dims: Vec<usize>,
    pub steps: u64,
    pub sigma: f64,
    pub step_size: f64,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            dims: vec![2, 10, 100],
            steps: 20_000,
            sigma: 0.25,
            step_size: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Write `plot_*.csv` files.
    pub plots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            plots: true,
        }
    }
}

impl ExperimentConfig {
    /// Reads and validates a config file for `command`.
    pub fn load(path: &Path, command: CommandName) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text, is_json(path), command).map_err(|e| locate(e, path, &text))
    }

    pub fn parse(text: &str, json: bool, command: CommandName) -> Result<Self> {
        let mut config: Self = if json {
            serde_json::from_str(text).map_err(|e| HarnessError::Config {
                path: PathBuf::new(),
                line: Some(e.line()),
                field: None,
                message: e.to_string(),
            })?
        } else {
            toml::from_str(text).map_err(|e| HarnessError::Config {
                path: PathBuf::new(),
                line: e.span().map(|s| line_of_offset(text, s.start)),
                field: None,
                message: e.message().trim().to_string(),
            })?
        };
        match config.command {
            Some(c) if c != command => {
                return Err(HarnessError::config(
                    "command",
                    format!("config is for `{c}` but the `{command}` subcommand was run"),
                ))
            }
            _ => config.command = Some(command),
        }
        config.validate()?;
        Ok(config)
    }

    pub fn command(&self) -> CommandName {
        self.command.unwrap_or(CommandName::Learn)
    }

    pub fn root_seed(&self) -> StreamSeed {
        StreamSeed::new(self.rng, self.base_seed)
    }

    /// Seed of trial `i`: the root seed split by the trial index.
    pub fn trial_seed(&self, trial: u64) -> StreamSeed {
        self.root_seed().child(trial)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.trials > 1_000_000 {
            return Err(HarnessError::config("trials", format!("{} not in [1, 1000000]", self.trials)));
        }
        if self.threads == Some(0) {
            return Err(HarnessError::config("threads", "must be >= 1"));
        }
        self.noise
            .validate()
            .map_err(|e| HarnessError::config("noise", e.to_string()))?;
        if let Some(m) = &self.marginal {
            m.build().map_err(|e| HarnessError::config("marginal", e.to_string()))?;
        }
        if let Some(t) = &self.target {
            let dim = self.marginal.map(|m| m.dim);
            if dim.is_some_and(|d| d != t.len()) {
                return Err(HarnessError::config(
                    "target",
                    format!("has {} coordinates, marginal.dim is {}", t.len(), dim.unwrap_or(0)),
                ));
            }
            UnitVector::new(t.clone()).map_err(|e| HarnessError::config("target", e.to_string()))?;
        }
        let ev = &self.evaluation;
        if ev.samples < 1000 {
            return Err(HarnessError::config("evaluation.samples", "must be >= 1000"));
        }
        if !(ev.slack_sigmas >= 0.0 && ev.slack_sigmas.is_finite()) {
            return Err(HarnessError::config("evaluation.slack_sigmas", "must be finite and >= 0"));
        }
        if let Some(t) = ev.threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(HarnessError::config("evaluation.threshold", format!("{t} not in (0, 1]")));
            }
        }
        match self.command() {
            CommandName::Learn => {
                self.require_marginal()?;
                self.learn_params()?;
                if let Some(m) = ev.min_passes {
                    if m > self.trials {
                        return Err(HarnessError::config(
                            "evaluation.min_passes",
                            format!("{m} exceeds trials = {}", self.trials),
                        ));
                    }
                }
            }
            CommandName::Verify => {
                let raw = self
                    .verify
                    .as_ref()
                    .ok_or_else(|| HarnessError::config("verify", "section is required for the verify command"))?;
                build_check(raw)?.validate(self)?;
            }
            CommandName::Gradcheck => self.validate_gradcheck()?,
            CommandName::Bench => {
                let b = &self.bench;
                if b.dims.is_empty() || b.dims.contains(&0) || b.steps == 0 {
                    return Err(HarnessError::config("bench", "dims must be non-empty and positive, steps >= 1"));
                }
            }
        }
        Ok(())
    }

    fn validate_gradcheck(&self) -> Result<()> {
        let g = &self.gradcheck;
        if g.checks.is_empty() {
            return Err(HarnessError::config("gradcheck.checks", "must list at least one check"));
        }
        if g.dim_min < 1 || g.dim_min > g.dim_max {
            return Err(HarnessError::config("gradcheck.dim_min", "need 1 <= dim_min <= dim_max"));
        }
        if !(g.sigma_min > 0.0 && g.sigma_min <= g.sigma_max && g.sigma_max <= massart_core::surrogate::MAX_SIGMA) {
            return Err(HarnessError::config("gradcheck.sigma_min", "need 0 < sigma_min <= sigma_max <= 10"));
        }
        for (name, v) in [
            ("gradcheck.step", g.step),
            ("gradcheck.rel_tol", g.rel_tol),
            ("gradcheck.abs_tol", g.abs_tol),
            ("gradcheck.small_norm", g.small_norm),
            ("gradcheck.scale_tol", g.scale_tol),
            ("gradcheck.orthogonality_tol", g.orthogonality_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::config(name, format!("{v} must be positive")));
            }
        }
        if g.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(HarnessError::config("gradcheck.scales", "scales must be positive"));
        }
        if g.cases == 0 || g.invariance_cases == 0 {
            return Err(HarnessError::config("gradcheck.cases", "case counts must be >= 1"));
        }
        Ok(())
    }

    pub fn require_marginal(&self) -> Result<MarginalSpec> {
        self.marginal
            .ok_or_else(|| HarnessError::config("marginal", "section is required for this command"))
    }

    pub fn certified_profile(&self) -> Result<CertifiedProfile> {
        certified_profile(&self.require_marginal()?, self.profile)
            .map_err(|e| HarnessError::config("profile", e.to_string()))
    }

    /// Learner parameters, filling the model and noise parameter in from the
    /// noise section when they are not given.
    pub fn learn_params(&self) -> Result<LearnParams> {
        let l = self
            .learner
            .as_ref()
            .ok_or_else(|| HarnessError::config("learner", "section is required for the learn command"))?;
        for (field, v) in [("learner.eps", l.eps), ("learner.delta", l.delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(HarnessError::config(field, format!("{v} must lie in (0, 1)")));
            }
        }
        let model = l.model.unwrap_or(match self.noise.kind {
            NoiseKind::StrongMassartMax => NoiseModelKind::StrongMassart,
            _ => NoiseModelKind::Massart,
        });
        let noise_param = l.noise_param.unwrap_or(match (model, self.noise.kind) {
            (NoiseModelKind::StrongMassart, _) => self.noise.c_strong,
            (NoiseModelKind::Massart, NoiseKind::None) => 0.0,
            (NoiseModelKind::Massart, _) => self.noise.eta_bound,
        });
        let mut p = LearnParams::new(model, l.eps, l.delta, noise_param, self.certified_profile()?.profile)
            .with_mode(l.mode);
        p.overrides = l.overrides;
        p.record_every = l.record_every;
        if let Some(b) = l.step_budget {
            p = p.with_step_budget(b);
        }
        p.validate().map_err(|e| HarnessError::config("learner", e.to_string()))?;
        Ok(p)
    }

    /// Target for a trial: the configured one, or uniform on the sphere.
    pub fn target_for(&self, seed: StreamSeed, dim: usize) -> Result<UnitVector> {
        if let Some(t) = &self.target {
            return Ok(UnitVector::new(t.clone())?);
        }
        random_direction(dim, seed.named("target"))
    }

    /// `sha256` of the canonical JSON form (sorted keys, no whitespace),
    /// leaving out `threads` and `output`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Some(map) = v.as_object_mut() {
            map.remove("threads");
            map.remove("output");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        hex::encode(digest)
    }

    /// Short identifier used in the `config_id` column.
    pub fn config_id(&self) -> String {
        self.hash()[..12].to_string()
    }
}

pub fn random_direction(dim: usize, seed: StreamSeed) -> Result<UnitVector> {
    use rand::Rng;
    let mut rng = seed.rng();
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
        if massart_core::geometry::norm(&v) > 1e-6 {
            return Ok(UnitVector::new(v)?);
        }
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Attaches the file path and, for field errors without a line, the line
/// where the field's key appears.
fn locate(err: HarnessError, path: &Path, text: &str) -> HarnessError {
    match err {
        HarnessError::Config {
            line, field, message, ..
        } => {
            let line = line.or_else(|| field.as_deref().and_then(|f| find_key_line(text, f, is_json(path))));
            HarnessError::Config {
                path: path.to_path_buf(),
                line,
                field,
                message,
            }
        }
        other => other,
    }
}

fn find_key_line(text: &str, field: &str, json: bool) -> Option<usize> {
    let (section, key) = match field.rsplit_once('.') {
        Some((s, k)) => (Some(s), k),
        None => (None, field),
    };
    if json {
        let needle = format!("\"{key}\"");
        return text.lines().position(|l| l.contains(&needle)).map(|i| i + 1);
    }
    let is_key = |l: &str| {
        l.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    };
    let header = |l: &str| l.trim_start().starts_with('[');
    let lines: Vec<&str> = text.lines().collect();
    let start = match section {
        None => 0,
        Some(s) => {
            let want = format!("[{s}]");
            match lines.iter().position(|l| l.trim() == want) {
                Some(i) => i + 1,
                // an inline or missing section: point at its header key
                None => return find_key_line(text, s, false),
            }
        }
    };
    for (i, l) in lines.iter().enumerate().skip(start) {
        if header(l) {
            break;
        }
        if is_key(l) {
            return Some(i + 1);
        }
    }
    if section.is_none() {
        let want = format!("[{key}]");
        return lines.iter().position(|l| l.trim() == want).map(|i| i + 1);
    }
    None
}
