//! Monte-Carlo checks of the gradient-norm floors at non-stationary angles.
//!
//! The floors bound the *population* gradient of the surrogate, so the only
//! way a correct implementation fails a check is sampling error. Three
//! estimators of the population gradient are available:
//!
//! * `plain`: draws `(x, y)` from the oracle and averages per-sample
//!   gradients.
//! * `conditional`: replaces `y` by its conditional mean
//!   `(1 - 2 eta(x)) sign(<w*, x>)`. Both surrogates have an even derivative,
//!   so the per-sample gradient is linear in `y` and this is unbiased.
//! * `margin_importance`: additionally draws the margin `s = <w, x>` from the
//!   normalised surrogate derivative and reweights by the margin density.
//!   For small `sigma` almost all of the gradient comes from a band of width
//!   `O(sigma)` around the boundary, and this puts every sample there.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{MarginSlicer, Marginal};
use crate::error::{Error, Result};
use crate::geometry::{dot, norm, sign_unchecked, BoundedProfile, UnitVector};
use crate::noise::{NoiseKind, NoiseModel, NoiseStrategy};
use crate::registry::Registry;
use crate::rng::{StreamRng, StreamSeed};
use crate::stats::{ScalarMoments, VectorMoments};
use crate::surrogate::{gradient_unit_into, Surrogate, SurrogateKind, SurrogateSpec};

/// Samples per independently seeded chunk of an estimate.
pub const CHUNK_SAMPLES: u64 = 1 << 14;

/// Largest sample count the auto-sizer will try.
pub const MAX_AUTO_SAMPLES: u64 = 10_000_000;

/// Required ratio `floor / stderr`.
pub const STDERR_FRACTION: f64 = 0.1;

/// Which structural lemma a check targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralLemma {
    /// Ramp surrogate under Massart noise.
    Ramp,
    /// Sigmoid surrogate under Massart noise.
    Sigmoid,
    /// Sigmoid surrogate under strong Massart noise.
    Strong,
}

impl StructuralLemma {
    pub fn name(self) -> &'static str {
        match self {
            StructuralLemma::Ramp => "ramp",
            StructuralLemma::Sigmoid => "sigmoid",
            StructuralLemma::Strong => "strong",
        }
    }

    pub fn surrogate_kind(self) -> SurrogateKind {
        match self {
            StructuralLemma::Ramp => SurrogateKind::Ramp,
            StructuralLemma::Sigmoid | StructuralLemma::Strong => SurrogateKind::Sigmoid,
        }
    }

    fn check_noise_param(self, p: f64) -> Result<()> {
        let ok = match self {
            StructuralLemma::Ramp | StructuralLemma::Sigmoid => (0.0..0.5).contains(&p),
            StructuralLemma::Strong => p > 0.0 && p <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input(format!("noise parameter {p} out of range for the {} lemma", self.name())))
        }
    }
}

/// Largest `sigma` for which the lemma's floor is guaranteed at angle
/// `theta`. `noise_param` is `eta` for the Massart lemmas and `c` for the
/// strong one.
pub fn lemma_sigma_cap(
    lemma: StructuralLemma,
    profile: &BoundedProfile,
    noise_param: f64,
    theta: f64,
) -> Result<f64> {
    profile.validate()?;
    lemma.check_noise_param(noise_param)?;
    if !(theta > 0.0 && theta <= PI / 2.0) {
        return Err(Error::input(format!("theta = {theta} must lie in (0, pi/2]")));
    }
    let (u, r) = (profile.density_bound, profile.radius);
    let s = theta.sin();
    Ok(match lemma {
        StructuralLemma::Ramp => r / (2.0 * u) * (1.0 - 2.0 * noise_param).sqrt() * s,
        StructuralLemma::Sigmoid => r / (8.0 * u) * (1.0 - 2.0 * noise_param).sqrt() * s,
        StructuralLemma::Strong => r / (24.0 * u) * (noise_param * r).sqrt() * s,
    })
}

/// Lower bound on the population gradient norm inside the angle window.
pub fn lemma_gradient_floor(lemma: StructuralLemma, profile: &BoundedProfile, noise_param: f64) -> Result<f64> {
    profile.validate()?;
    lemma.check_noise_param(noise_param)?;
    let (u, r) = (profile.density_bound, profile.radius);
    Ok(match lemma {
        StructuralLemma::Ramp => r * r * (1.0 - 2.0 * noise_param) / (8.0 * u),
        StructuralLemma::Sigmoid => r * r * (1.0 - 2.0 * noise_param) / (32.0 * u),
        StructuralLemma::Strong => noise_param * r.powi(3) / (288.0 * u),
    })
}

/// Distribution, adversary and loss whose population gradient is estimated.
#[derive(Clone, Copy, Debug)]
pub struct GradientProblem<'a> {
    pub target: &'a UnitVector,
    pub noise: &'a dyn NoiseModel,
    pub marginal: &'a dyn Marginal,
    pub surrogate: &'a dyn Surrogate,
}

impl GradientProblem<'_> {
    fn check(&self, w: &UnitVector) -> Result<()> {
        let d = self.marginal.dim();
        if self.target.dim() != d || w.dim() != d {
            return Err(Error::input("target, iterate and marginal dimensions differ"));
        }
        Ok(())
    }

    #[inline]
    fn expected_label(&self, x: &[f64]) -> f64 {
        (1.0 - 2.0 * self.noise.rate(self.target, x)) * sign_unchecked(dot(self.target, x))
    }
}

/// Unbiased Monte-Carlo estimator of the population surrogate gradient.
pub trait GradientEstimator: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// Pushes `n` i.i.d. per-sample contributions at unit `w` into `acc`.
    fn accumulate(
        &self,
        problem: &GradientProblem<'_>,
        w: &UnitVector,
        rng: &mut StreamRng,
        n: u64,
        acc: &mut VectorMoments,
    ) -> Result<()>;
}

#[derive(Debug, Default)]
pub struct PlainEstimator;

impl GradientEstimator for PlainEstimator {
    fn name(&self) -> &'static str {
        "plain"
    }

    fn accumulate(
        &self,
        p: &GradientProblem<'_>,
        w: &UnitVector,
        rng: &mut StreamRng,
        n: u64,
        acc: &mut VectorMoments,
    ) -> Result<()> {
        let d = w.dim();
        let (mut x, mut g) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..n {
            p.marginal.sample_into(rng, &mut x);
            let clean = sign_unchecked(dot(p.target, &x));
            let y = if rng.random::<f64>() < p.noise.rate(p.target, &x) {
                -clean
            } else {
                clean
            };
            gradient_unit_into(w, &x, y, p.surrogate, &mut g);
            acc.push(&g);
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct ConditionalEstimator;

impl GradientEstimator for ConditionalEstimator {
    fn name(&self) -> &'static str {
        "conditional"
    }

    fn accumulate(
        &self,
        p: &GradientProblem<'_>,
        w: &UnitVector,
        rng: &mut StreamRng,
        n: u64,
        acc: &mut VectorMoments,
    ) -> Result<()> {
        let d = w.dim();
        let (mut x, mut g) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..n {
            p.marginal.sample_into(rng, &mut x);
            let ey = p.expected_label(&x);
            // linear in y because the surrogate derivative is even
            gradient_unit_into(w, &x, 1.0, p.surrogate, &mut g);
            acc.push_scaled(ey, &g);
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
pub struct MarginImportanceEstimator;

/// Uniform draw from the open interval `(0, 1)`.
#[inline]
fn open_unit(rng: &mut StreamRng) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// One importance draw: returns `x`, its margin and the per-sample weight
/// `-E[y|x] p(s) Z` that multiplies `x - s w`.
struct MarginDraw {
    lo: f64,
    hi: f64,
    cdf_lo: f64,
    mass: f64,
}

impl MarginDraw {
    fn new<'a>(p: &GradientProblem<'a>) -> Result<(Self, &'a dyn MarginSlicer)> {
        let slicer = p.marginal.margin_slicer().ok_or_else(|| {
            Error::config(format!(
                "marginal '{}' has no margin slicer; use the plain or conditional estimator",
                p.marginal.name()
            ))
        })?;
        let (lo, hi) = slicer.margin_support();
        let cdf_lo = p.surrogate.derivative_cdf(lo);
        let mass = p.surrogate.derivative_cdf(hi) - cdf_lo;
        if !(mass > 0.0) {
            return Err(Error::input("surrogate derivative has no mass on the margin support"));
        }
        Ok((Self { lo, hi, cdf_lo, mass }, slicer))
    }

    #[inline]
    fn margin(&self, p: &GradientProblem<'_>, rng: &mut StreamRng) -> f64 {
        let u = self.cdf_lo + self.mass * open_unit(rng);
        p.surrogate.derivative_quantile(u).clamp(self.lo, self.hi)
    }
}

impl GradientEstimator for MarginImportanceEstimator {
    fn name(&self) -> &'static str {
        "margin_importance"
    }

    fn accumulate(
        &self,
        p: &GradientProblem<'_>,
        w: &UnitVector,
        rng: &mut StreamRng,
        n: u64,
        acc: &mut VectorMoments,
    ) -> Result<()> {
        let (draw, slicer) = MarginDraw::new(p)?;
        let d = w.dim();
        let (mut x, mut g) = (vec![0.0; d], vec![0.0; d]);
        for _ in 0..n {
            let s = draw.margin(p, rng);
            slicer.sample_given_margin(w, s, rng, &mut x);
            let scale = -p.expected_label(&x) * slicer.margin_density(s) * draw.mass;
            g.iter_mut().zip(x.iter().zip(w.iter())).for_each(|(gi, (xi, wi))| *gi = xi - s * wi);
            acc.push_scaled(scale, &g);
        }
        Ok(())
    }
}

pub type EstimatorCtor = fn() -> Arc<dyn GradientEstimator>;

pub fn estimator_registry() -> Registry<EstimatorCtor> {
    let mut r: Registry<EstimatorCtor> = Registry::new("gradient estimator");
    r.register("plain", || Arc::new(PlainEstimator))
        .register("conditional", || Arc::new(ConditionalEstimator))
        .register("margin_importance", || Arc::new(MarginImportanceEstimator));
    r
}

pub fn build_estimator(name: &str) -> Result<Arc<dyn GradientEstimator>> {
    Ok((estimator_registry().get(name)?)())
}

/// How many samples an estimate may use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum SampleBudget {
    /// Exactly `samples` draws (rounded up to whole chunks).
    Fixed { samples: u64 },
    /// Double from `initial` until the stderr target is met or `max` is hit.
    Auto { initial: u64, max: u64 },
}

impl Default for SampleBudget {
    fn default() -> Self {
        SampleBudget::Auto {
            initial: CHUNK_SAMPLES,
            max: MAX_AUTO_SAMPLES,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientEstimate {
    pub gradient: Vec<f64>,
    pub norm: f64,
    pub stderr: f64,
    pub samples: u64,
}

fn chunk_counts(from: u64, to: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut start = from;
    while start < to {
        let n = CHUNK_SAMPLES.min(to - start);
        out.push((start / CHUNK_SAMPLES, n));
        start += n;
    }
    out
}

fn run_chunks(
    estimator: &dyn GradientEstimator,
    problem: &GradientProblem<'_>,
    w: &UnitVector,
    seed: StreamSeed,
    from: u64,
    to: u64,
    acc: &mut VectorMoments,
) -> Result<()> {
    let parts: Vec<Result<VectorMoments>> = chunk_counts(from, to)
        .into_par_iter()
        .map(|(index, n)| {
            let mut m = VectorMoments::new(w.dim());
            let mut rng = seed.child(index).rng();
            estimator.accumulate(problem, w, &mut rng, n, &mut m)?;
            Ok(m)
        })
        .collect();
    for p in parts {
        acc.merge(&p?);
    }
    Ok(())
}

/// Estimates the population gradient at unit `w`. With an automatic budget
/// the sample count doubles (reusing earlier draws) until the norm stderr
/// is at most `max_stderr`; the result does not depend on the thread count.
pub fn estimate_gradient(
    problem: &GradientProblem<'_>,
    w: &UnitVector,
    estimator: &dyn GradientEstimator,
    budget: SampleBudget,
    max_stderr: f64,
    seed: StreamSeed,
) -> Result<GradientEstimate> {
    problem.check(w)?;
    let mut acc = VectorMoments::new(w.dim());
    let done = |acc: &VectorMoments| GradientEstimate {
        gradient: acc.mean(),
        norm: norm(&acc.mean()),
        stderr: acc.norm_stderr(),
        samples: acc.n,
    };
    match budget {
        SampleBudget::Fixed { samples } => {
            if samples < 2 {
                return Err(Error::input("fixed sample budget must be >= 2"));
            }
            run_chunks(estimator, problem, w, seed, 0, samples, &mut acc)?;
            Ok(done(&acc))
        }
        SampleBudget::Auto { initial, max } => {
            if initial < 2 || max < initial {
                return Err(Error::input(format!("auto budget needs 2 <= initial <= max (got {initial}, {max})")));
            }
            let mut target = initial;
            loop {
                run_chunks(estimator, problem, w, seed, acc.n, target, &mut acc)?;
                let est = done(&acc);
                if est.stderr <= max_stderr {
                    return Ok(est);
                }
                if target >= max {
                    return Err(Error::Underpowered(format!(
                        "gradient stderr {:.3e} above {:.3e} after {} samples ({} estimator)",
                        est.stderr,
                        max_stderr,
                        est.samples,
                        estimator.name()
                    )));
                }
                target = (2 * target).min(max);
            }
        }
    }
}

/// A unit vector at angle `theta` from `target` inside a uniformly random
/// plane through `target`.
pub fn vector_at_angle(target: &UnitVector, theta: f64, rng: &mut StreamRng) -> Result<UnitVector> {
    let d = target.dim();
    if d < 2 {
        return Err(Error::input("need dimension >= 2 to rotate"));
    }
    loop {
        let mut b: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let c = dot(&b, target);
        b.iter_mut().zip(target.iter()).for_each(|(bi, ti)| *bi -= c * ti);
        let n = norm(&b);
        if n > 1e-8 {
            let (ct, st) = (theta.cos(), theta.sin());
            let v = target.iter().zip(&b).map(|(t, bi)| ct * t + st * bi / n).collect();
            return UnitVector::new(v);
        }
    }
}

/// Region of the plane spanned by `w` and the target, in the frame where
/// `w = e2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    /// `x1 sign(<w*, x>) > 0`
    Good,
    Bad,
}

pub fn good_bad_decomposition(x2d: [f64; 2], target2d: [f64; 2]) -> Region {
    let s = sign_unchecked(target2d[0] * x2d[0] + target2d[1] * x2d[1]);
    if x2d[0] * s > 0.0 {
        Region::Good
    } else {
        Region::Bad
    }
}

/// Contributions of the good and bad regions to the in-plane gradient
/// component along `e1 = (w* - cos(theta) w) / sin(theta)`, the frame in
/// which `w* = sin(theta) e1 + cos(theta) e2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RegionSplit {
    pub good: f64,
    pub good_stderr: f64,
    pub bad: f64,
    pub bad_stderr: f64,
}

/// Estimates [`RegionSplit`] with margin importance sampling. Both entries
/// are reported as magnitudes.
pub fn region_split(problem: &GradientProblem<'_>, w: &UnitVector, samples: u64, seed: StreamSeed) -> Result<RegionSplit> {
    problem.check(w)?;
    if samples < 2 {
        return Err(Error::input("region split needs at least two samples"));
    }
    let c = dot(w, problem.target);
    let s_theta = (1.0 - c * c).max(0.0).sqrt();
    if s_theta < 1e-12 {
        return Err(Error::DegenerateSpan(c.abs()));
    }
    let e1: Vec<f64> = w
        .iter()
        .zip(problem.target.iter())
        .map(|(wi, ti)| (ti - c * wi) / s_theta)
        .collect();
    let target2d = [dot(problem.target, &e1), c];
    let (draw, slicer) = MarginDraw::new(problem)?;
    let parts: Vec<(ScalarMoments, ScalarMoments)> = chunk_counts(0, samples)
        .into_par_iter()
        .map(|(index, n)| {
            let mut rng = seed.child(index).rng();
            let mut x = vec![0.0; w.dim()];
            let (mut good, mut bad) = (ScalarMoments::default(), ScalarMoments::default());
            for _ in 0..n {
                let s = draw.margin(problem, &mut rng);
                slicer.sample_given_margin(w, s, &mut rng, &mut x);
                let x1 = dot(&x, &e1);
                let v = -problem.expected_label(&x) * slicer.margin_density(s) * draw.mass * x1;
                match good_bad_decomposition([x1, s], target2d) {
                    Region::Good => {
                        good.push(v);
                        bad.push(0.0);
                    }
                    Region::Bad => {
                        good.push(0.0);
                        bad.push(v);
                    }
                }
            }
            (good, bad)
        })
        .collect();
    let (mut good, mut bad) = (ScalarMoments::default(), ScalarMoments::default());
    for (g, b) in &parts {
        good.merge(g);
        bad.merge(b);
    }
    let (g, b) = (good.estimate(), bad.estimate());
    Ok(RegionSplit {
        good: g.value.abs(),
        good_stderr: g.stderr,
        bad: b.value.abs(),
        bad_stderr: b.stderr,
    })
}

/// One floor check over a grid of angles.
#[derive(Clone, Debug)]
pub struct StructuralCheckConfig {
    pub lemma: StructuralLemma,
    /// `eta` bound (Massart lemmas) or `c` (strong lemma) used for the floor
    /// and the cap.
    pub noise_param: f64,
    pub noise: NoiseStrategy,
    pub marginal: Arc<dyn Marginal>,
    pub profile: BoundedProfile,
    /// Window edge: angles must lie in `[window, pi - window]`.
    pub window: f64,
    pub angles: Vec<f64>,
    /// Defaults to the lemma's cap at the window edge.
    pub sigma: Option<f64>,
    pub estimator: String,
    pub budget: SampleBudget,
    pub confidence_sigmas: f64,
    pub seed: StreamSeed,
}

impl StructuralCheckConfig {
    pub fn sigma_cap(&self) -> Result<f64> {
        lemma_sigma_cap(self.lemma, &self.profile, self.noise_param, self.window)
    }

    pub fn floor(&self) -> Result<f64> {
        lemma_gradient_floor(self.lemma, &self.profile, self.noise_param)
    }

    pub fn effective_sigma(&self) -> Result<f64> {
        match self.sigma {
            Some(s) => Ok(s),
            None => self.sigma_cap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        let cap = self.sigma_cap()?;
        let sigma = self.effective_sigma()?;
        SurrogateSpec {
            kind: self.lemma.surrogate_kind(),
            sigma,
        }
        .validate()?;
        if sigma > cap {
            return Err(Error::config(format!("sigma {sigma} exceeds the lemma cap {cap}")));
        }
        if self.angles.is_empty() {
            return Err(Error::config("at least one angle is required"));
        }
        for &a in &self.angles {
            if !(a >= self.window && a <= PI - self.window) {
                return Err(Error::config(format!(
                    "angle {a} lies outside the window [{}, pi - {}]",
                    self.window, self.window
                )));
            }
        }
        if !(self.confidence_sigmas >= 0.0 && self.confidence_sigmas.is_finite()) {
            return Err(Error::config("confidence_sigmas must be finite and >= 0"));
        }
        let admissible = match self.lemma {
            StructuralLemma::Ramp | StructuralLemma::Sigmoid => match self.noise.kind {
                NoiseKind::None => true,
                NoiseKind::StrongMassartMax => false,
                _ => self.noise.eta_bound <= self.noise_param,
            },
            StructuralLemma::Strong => match self.noise.kind {
                NoiseKind::None => true,
                NoiseKind::StrongMassartMax => self.noise.c_strong >= self.noise_param,
                _ => false,
            },
        };
        if !admissible {
            return Err(Error::config(format!(
                "noise '{}' is not covered by the {} lemma with parameter {}",
                self.noise.kind.name(),
                self.lemma.name(),
                self.noise_param
            )));
        }
        if self.marginal.dim() < 2 {
            return Err(Error::config("structural checks need dimension >= 2"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AngleReport {
    pub theta: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub floor: f64,
    pub sigma: f64,
    pub samples: u64,
    pub pass: bool,
}

/// Runs the floor check at every configured angle. Each angle uses its own
/// random plane and sample stream, so angles are checked in parallel.
pub fn verify_stationary_gap(config: &StructuralCheckConfig, target: &UnitVector) -> Result<Vec<AngleReport>> {
    config.validate()?;
    let floor = config.floor()?;
    let sigma = config.effective_sigma()?;
    let surrogate = SurrogateSpec {
        kind: config.lemma.surrogate_kind(),
        sigma,
    }
    .build()?;
    let noise = config.noise.build()?;
    let estimator = build_estimator(&config.estimator)?;
    let problem = GradientProblem {
        target,
        noise: noise.as_ref(),
        marginal: config.marginal.as_ref(),
        surrogate: surrogate.as_ref(),
    };
    let max_stderr = STDERR_FRACTION * floor;
    config
        .angles
        .par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            let seed = config.seed.child(i as u64);
            let w = vector_at_angle(target, theta, &mut seed.named("plane").rng())?;
            let est = estimate_gradient(&problem, &w, estimator.as_ref(), config.budget, max_stderr, seed.named("samples"))?;
            if est.stderr > max_stderr {
                return Err(Error::Underpowered(format!(
                    "stderr {:.3e} above floor/10 = {:.3e} at theta {theta} with {} samples",
                    est.stderr, max_stderr, est.samples
                )));
            }
            Ok(AngleReport {
                theta,
                estimate: est.norm,
                stderr: est.stderr,
                floor,
                sigma,
                samples: est.samples,
                pass: est.norm >= floor - config.confidence_sigmas * est.stderr,
            })
        })
        .collect()
}
