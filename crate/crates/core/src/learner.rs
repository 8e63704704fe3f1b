//! Learning a halfspace under Massart or strong Massart noise: run PSGD on
//! the sigmoid surrogate, keep both signs of every recorded iterate, and
//! return the candidate with the smallest 0-1 error on a fresh sample.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, sign_unchecked, BoundedProfile, UnitVector};
use crate::noise::{LabeledExample, MassartOracle};
use crate::psgd::{psgd_run, PsgdConfig, StochasticGradient, Trajectory};
use crate::rng::StreamRng;
use crate::surrogate::{gradient_unit_into, Surrogate, SurrogateSpec};
use crate::verification::{lemma_sigma_cap, StructuralLemma};

/// Step count multiplier of the practical schedule.
pub const PRACTICAL_STEP_SCALE: f64 = 2e5;

/// Largest practical step count.
pub const PRACTICAL_MAX_STEPS: u64 = 1_000_000;

/// Default smoothing of the practical schedule.
pub const PRACTICAL_SIGMA: f64 = 0.25;

/// Hoeffding constant of the practical selection sample size.
pub const PRACTICAL_SELECTION_SCALE: f64 = 50.0;

/// Recorded iterates per run when `record_every` is not given.
pub const DEFAULT_RECORDED: u64 = 64;

/// Examples drawn per selection chunk.
const SELECTION_CHUNK: usize = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModelKind {
    /// Flip rates bounded by `eta < 1/2`.
    Massart,
    /// Flip rates bounded by `1/2 - c |<w*, x>|`.
    StrongMassart,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Formulas with every hidden constant set to one.
    Theoretical,
    /// Calibrated desk-scale defaults.
    #[default]
    Practical,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverrides {
    pub steps: Option<u64>,
    pub step_size: Option<f64>,
    pub sigma: Option<f64>,
    pub selection_samples: Option<u64>,
}

impl ScheduleOverrides {
    fn validate(&self) -> Result<()> {
        if self.steps == Some(0) || self.selection_samples == Some(0) {
            return Err(Error::config("overridden counts must be positive"));
        }
        for (name, v) in [("step_size", self.step_size), ("sigma", self.sigma)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("overridden {name} = {v} must be positive")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LearnParams {
    pub model: NoiseModelKind,
    pub eps: f64,
    pub delta: f64,
    /// `eta` for Massart, `c` for strong Massart.
    pub noise_param: f64,
    pub profile: BoundedProfile,
    pub mode: ScheduleMode,
    pub overrides: ScheduleOverrides,
    pub record_every: Option<u64>,
    /// Largest acceptable `T`.
    pub step_budget: f64,
}

impl LearnParams {
    pub fn new(model: NoiseModelKind, eps: f64, delta: f64, noise_param: f64, profile: BoundedProfile) -> Self {
        Self {
            model,
            eps,
            delta,
            noise_param,
            profile,
            mode: ScheduleMode::Practical,
            overrides: ScheduleOverrides::default(),
            record_every: None,
            step_budget: PRACTICAL_MAX_STEPS as f64,
        }
    }

    pub fn with_mode(mut self, mode: ScheduleMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_step_budget(mut self, budget: f64) -> Self {
        self.step_budget = budget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::config(format!("eps = {} must lie in (0, 1)", self.eps)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(format!("delta = {} must lie in (0, 1)", self.delta)));
        }
        match self.model {
            NoiseModelKind::Massart if !(0.0..0.5).contains(&self.noise_param) => {
                return Err(Error::config(format!("eta = {} must lie in [0, 1/2)", self.noise_param)))
            }
            NoiseModelKind::StrongMassart if !(self.noise_param > 0.0 && self.noise_param <= 1.0) => {
                return Err(Error::config(format!("c = {} must lie in (0, 1]", self.noise_param)))
            }
            _ => {}
        }
        if self.record_every == Some(0) {
            return Err(Error::config("record_every must be >= 1"));
        }
        if !(self.step_budget > 0.0) {
            return Err(Error::config("step budget must be positive"));
        }
        self.profile.validate()?;
        self.overrides.validate()
    }

    /// `(1 - 2 eta)` for Massart, `c` for strong Massart.
    fn margin_factor(&self) -> f64 {
        match self.model {
            NoiseModelKind::Massart => 1.0 - 2.0 * self.noise_param,
            NoiseModelKind::StrongMassart => self.noise_param,
        }
    }

    fn lemma(&self) -> StructuralLemma {
        match self.model {
            NoiseModelKind::Massart => StructuralLemma::Sigmoid,
            NoiseModelKind::StrongMassart => StructuralLemma::Strong,
        }
    }
}

/// `(T, beta, sigma, N)` plus the values they were derived from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Schedule {
    /// `T` as a real number; may exceed any integer type in theoretical mode.
    pub steps: f64,
    pub step_size: f64,
    pub sigma: f64,
    pub selection_samples: f64,
    /// The lemma's cap on `sigma` at the target angle.
    pub sigma_cap: f64,
    pub theta_target: f64,
    pub record_every: u64,
}

impl Schedule {
    pub fn steps_u64(&self) -> Result<u64> {
        to_count("T", self.steps)
    }

    pub fn selection_samples_u64(&self) -> Result<u64> {
        to_count("N", self.selection_samples)
    }

    /// `2 * (number of recorded iterates)`.
    pub fn candidate_count(&self) -> Result<u64> {
        let t = self.steps_u64()?;
        Ok(2 * (t / self.record_every + 1 + u64::from(t % self.record_every != 0)))
    }
}

fn to_count(name: &'static str, v: f64) -> Result<u64> {
    if !(v >= 1.0) || v > u64::MAX as f64 {
        return Err(Error::BudgetExceeded {
            name,
            value: v,
            budget: u64::MAX as f64,
        });
    }
    Ok(v.ceil() as u64)
}

pub fn schedule_massart(params: &LearnParams, dim: usize) -> Result<Schedule> {
    if params.model != NoiseModelKind::Massart {
        return Err(Error::config("schedule_massart needs the Massart model"));
    }
    schedule(params, dim)
}

pub fn schedule_strong_massart(params: &LearnParams, dim: usize) -> Result<Schedule> {
    if params.model != NoiseModelKind::StrongMassart {
        return Err(Error::config("schedule_strong_massart needs the strong Massart model"));
    }
    schedule(params, dim)
}

/// Schedule for either model; see [`schedule_massart`] and
/// [`schedule_strong_massart`].
pub fn schedule(params: &LearnParams, dim: usize) -> Result<Schedule> {
    params.validate()?;
    if dim == 0 {
        return Err(Error::input("dimension must be >= 1"));
    }
    let d = dim as f64;
    let (u, r) = (params.profile.density_bound, params.profile.radius);
    let m = params.margin_factor();
    let strong = params.model == NoiseModelKind::StrongMassart;

    // The algorithms guarantee error 2 eps' for parameter eps'; theoretical
    // mode runs them with eps' = eps / 2.
    let eps_alg = match params.mode {
        ScheduleMode::Theoretical => params.eps / 2.0,
        ScheduleMode::Practical => params.eps,
    };
    let t = params.profile.tail_radius(eps_alg / 2.0);
    let theta_target = match params.model {
        NoiseModelKind::Massart => eps_alg * m / (u * t * t),
        NoiseModelKind::StrongMassart => eps_alg / (u * t * t),
    }
    .min(std::f64::consts::FRAC_PI_2);
    let sigma_cap = lemma_sigma_cap(params.lemma(), &params.profile, params.noise_param, theta_target)?;

    let (mut steps, mut step_size, mut sigma) = match params.mode {
        ScheduleMode::Theoretical => {
            let (c1, c2) = if strong {
                (u.powi(12) / r.powi(18), r.powf(1.5) / (u * u))
            } else {
                (u.powi(12) / r.powi(12), r / (u * u))
            };
            let (t_exp, b_exp) = if strong { (6, 3) } else { (10, 3) };
            let steps = (c1 * d * t.powi(8) / (eps_alg.powi(4) * m.powi(t_exp)) * (1.0 / params.delta).ln()).ceil();
            let step_size = c2 * c2 * d * m.powi(b_exp) * eps_alg * eps_alg / (t.powi(4) * steps.sqrt());
            let sigma = (c2 * m.sqrt() * eps_alg / (t * t)).min(sigma_cap);
            (steps, step_size, sigma)
        }
        ScheduleMode::Practical => {
            let steps = (PRACTICAL_STEP_SCALE * d / (eps_alg * eps_alg * m * m))
                .ceil()
                .min(PRACTICAL_MAX_STEPS as f64);
            (steps, 1.0 / steps.sqrt(), PRACTICAL_SIGMA)
        }
    };
    if let Some(v) = params.overrides.steps {
        steps = v as f64;
        if params.overrides.step_size.is_none() && params.mode == ScheduleMode::Practical {
            step_size = 1.0 / steps.sqrt();
        }
    }
    if let Some(v) = params.overrides.step_size {
        step_size = v;
    }
    if let Some(v) = params.overrides.sigma {
        sigma = v;
    }
    if steps > params.step_budget {
        return Err(Error::BudgetExceeded {
            name: "T",
            value: steps,
            budget: params.step_budget,
        });
    }

    let record_every = match params.record_every {
        Some(k) => k,
        None if steps <= u64::MAX as f64 => ((steps / DEFAULT_RECORDED as f64).ceil() as u64).max(1),
        None => u64::MAX,
    };
    let hoeffding = match params.model {
        NoiseModelKind::Massart => eps_alg * eps_alg * m * m,
        NoiseModelKind::StrongMassart => eps_alg * eps_alg,
    };
    let selection_samples = match (params.overrides.selection_samples, params.mode) {
        (Some(n), _) => n as f64,
        (None, ScheduleMode::Theoretical) => ((steps / params.delta).ln() / hoeffding).ceil(),
        (None, ScheduleMode::Practical) => {
            let k = 2.0 * (steps / record_every as f64).ceil() + 2.0;
            (PRACTICAL_SELECTION_SCALE * (k / params.delta).ln() / hoeffding).ceil()
        }
    };
    Ok(Schedule {
        steps,
        step_size,
        sigma,
        selection_samples,
        sigma_cap,
        theta_target,
        record_every,
    })
}

/// Index and empirical 0-1 error of the best candidate; ties go to the
/// smaller index.
pub fn select_hypothesis(candidates: &[UnitVector], data: &[LabeledExample]) -> Result<(usize, f64)> {
    let errors = empirical_errors(candidates, data)?;
    Ok(argmin_first(&errors))
}

/// Empirical 0-1 error of every candidate, using `sign(0) = +1`.
pub fn empirical_errors(candidates: &[UnitVector], data: &[LabeledExample]) -> Result<Vec<f64>> {
    if candidates.is_empty() || data.is_empty() {
        return Err(Error::input("selection needs at least one candidate and one example"));
    }
    let d = candidates[0].dim();
    if candidates.iter().any(|c| c.dim() != d) || data.iter().any(|e| e.x.len() != d) {
        return Err(Error::input("candidate and example dimensions differ"));
    }
    let n = data.len() as f64;
    Ok(candidates
        .par_iter()
        .map(|w| data.iter().filter(|e| sign_unchecked(dot(w, &e.x)) != e.y).count() as f64 / n)
        .collect())
}

fn argmin_first(v: &[f64]) -> (usize, f64) {
    v.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &e)| if e < best.1 { (i, e) } else { best })
}

/// Misclassification excess translated into disagreement with the target:
/// `excess / (1 - 2 eta)`.
pub fn excess_to_target_error(excess: f64, eta_bound: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&eta_bound) {
        return Err(Error::input(format!("eta = {eta_bound} must lie in [0, 1/2)")));
    }
    if !(excess >= 0.0 && excess.is_finite()) {
        return Err(Error::input(format!("excess = {excess} must be finite and >= 0")));
    }
    Ok(excess / (1.0 - 2.0 * eta_bound))
}

/// One oracle draw per PSGD step, turned into a surrogate gradient.
pub struct OracleGradient<'a> {
    oracle: &'a mut MassartOracle,
    surrogate: &'a dyn Surrogate,
    x: Vec<f64>,
    draws: u64,
}

impl<'a> OracleGradient<'a> {
    pub fn new(oracle: &'a mut MassartOracle, surrogate: &'a dyn Surrogate) -> Self {
        let d = oracle.dim();
        Self {
            oracle,
            surrogate,
            x: vec![0.0; d],
            draws: 0,
        }
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl StochasticGradient for OracleGradient<'_> {
    fn dim(&self) -> usize {
        self.oracle.dim()
    }

    fn sample_gradient(&mut self, w: &[f64], _rng: &mut StreamRng, out: &mut [f64]) {
        let (y, _) = self.oracle.draw_into(&mut self.x);
        self.draws += 1;
        gradient_unit_into(w, &self.x, y, self.surrogate, out);
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LearnReport {
    pub chosen: UnitVector,
    /// Position in the candidate list `+w0, -w0, +w1, -w1, ...`.
    pub chosen_index: usize,
    pub candidate_count: usize,
    pub empirical_errors: Vec<f64>,
    pub samples_used: u64,
    pub schedule: Schedule,
    pub trajectory: Trajectory,
    pub wall_time: f64,
}

impl LearnReport {
    /// Candidate list in selection order.
    pub fn candidates(&self) -> Vec<UnitVector> {
        candidate_list(&self.trajectory)
    }
}

fn candidate_list(trajectory: &Trajectory) -> Vec<UnitVector> {
    trajectory
        .iterates
        .iter()
        .flat_map(|w| [w.clone(), w.negated()])
        .collect()
}

/// Streams `n` fresh examples from `oracle` and counts the mistakes of
/// `+w` and `-w` for every iterate, in candidate order.
fn streamed_errors(oracle: &mut MassartOracle, iterates: &[UnitVector], n: u64) -> Vec<f64> {
    let d = oracle.dim();
    let mut counts = vec![0u64; 2 * iterates.len()];
    let mut xs = vec![0.0; SELECTION_CHUNK * d];
    let mut ys = vec![0.0; SELECTION_CHUNK];
    let mut left = n;
    while left > 0 {
        let m = (left as usize).min(SELECTION_CHUNK);
        for j in 0..m {
            ys[j] = oracle.draw_into(&mut xs[j * d..(j + 1) * d]).0;
        }
        let (xs, ys) = (&xs[..m * d], &ys[..m]);
        let chunk: Vec<(u64, u64)> = iterates
            .par_iter()
            .map(|w| {
                let (mut plus, mut minus) = (0u64, 0u64);
                for (x, &y) in xs.chunks_exact(d).zip(ys) {
                    let s = dot(w, x);
                    plus += u64::from(sign_unchecked(s) != y);
                    minus += u64::from(sign_unchecked(-s) != y);
                }
                (plus, minus)
            })
            .collect();
        for (i, (p, q)) in chunk.into_iter().enumerate() {
            counts[2 * i] += p;
            counts[2 * i + 1] += q;
        }
        left -= m as u64;
    }
    counts.into_iter().map(|c| c as f64 / n as f64).collect()
}

/// Runs the learner against `oracle`, starting PSGD at `e1`.
pub fn learn(oracle: &mut MassartOracle, params: &LearnParams) -> Result<LearnReport> {
    let w0 = UnitVector::basis(oracle.dim(), 0)?;
    learn_from(oracle, params, &w0)
}

pub fn learn_from(oracle: &mut MassartOracle, params: &LearnParams, w0: &UnitVector) -> Result<LearnReport> {
    let start = Instant::now();
    let noise = oracle.noise().name();
    let compatible = match params.model {
        NoiseModelKind::Massart => oracle
            .noise()
            .massart_bound()
            .is_some_and(|b| b <= params.noise_param),
        NoiseModelKind::StrongMassart => matches!(noise, "none" | "strong_massart_max"),
    };
    if !compatible {
        return Err(Error::config(format!(
            "oracle noise '{noise}' does not match the {:?} learner parameters",
            params.model
        )));
    }
    let schedule = schedule(params, oracle.dim())?;
    let steps = schedule.steps_u64()?;
    let n = schedule.selection_samples_u64()?;
    let surrogate = SurrogateSpec::sigmoid(schedule.sigma).build()?;

    let mut selection_oracle = oracle.fork("selection");
    let config = PsgdConfig {
        steps,
        step_size: schedule.step_size,
        seed: oracle.seed().key(),
        record_every: schedule.record_every,
        diagnostics: false,
    };
    let mut grad = OracleGradient::new(oracle, surrogate.as_ref());
    let trajectory = psgd_run(&mut grad, &config, w0)?;
    let psgd_draws = grad.draws();

    let errors = streamed_errors(&mut selection_oracle, &trajectory.iterates, n);
    let (chosen_index, _) = argmin_first(&errors);
    let candidates = candidate_list(&trajectory);
    Ok(LearnReport {
        chosen: candidates[chosen_index].clone(),
        chosen_index,
        candidate_count: candidates.len(),
        empirical_errors: errors,
        samples_used: psgd_draws + n,
        schedule,
        trajectory,
        wall_time: start.elapsed().as_secs_f64(),
    })
}
