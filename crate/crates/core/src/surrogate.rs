//! Ramp and sigmoid surrogates of the 0-1 loss and their gradients in `w`.
//!
//! The per-sample loss is `phi(-y <w, x> / |w|)` with `phi` the ramp or the
//! logistic function of slope `1/sigma`. It is homogeneous of degree zero in
//! `w`, so its gradient is always orthogonal to `w`.

use std::fmt::Debug;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, norm, UnitVector};
use crate::noise::LabeledExample;
use crate::registry::Registry;
use crate::stats::{ScalarMoments, VectorMoments};

/// Largest accepted smoothing parameter.
pub const MAX_SIGMA: f64 = 10.0;

/// Chunk length of the deterministic parallel reduction in
/// [`population_estimates`].
const REDUCTION_CHUNK: usize = 4096;

pub fn ramp_value(t: f64, sigma: f64) -> f64 {
    if t < -sigma / 2.0 {
        0.0
    } else if t > sigma / 2.0 {
        1.0
    } else {
        t / sigma + 0.5
    }
}

/// `1/sigma` on the closed band `|t| <= sigma/2`, zero outside.
pub fn ramp_derivative(t: f64, sigma: f64) -> f64 {
    if t.abs() <= sigma / 2.0 {
        1.0 / sigma
    } else {
        0.0
    }
}

/// Logistic function `1 / (1 + exp(-t/sigma))`, evaluated without overflow.
pub fn sigmoid_value(t: f64, sigma: f64) -> f64 {
    let z = t / sigma;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `S(t)^2 exp(-t/sigma) / sigma`, computed as `S(|t|) S(-|t|) / sigma`.
pub fn sigmoid_derivative(t: f64, sigma: f64) -> f64 {
    let a = t.abs();
    sigmoid_value(a, sigma) * sigmoid_value(-a, sigma) / sigma
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateKind {
    Ramp,
    Sigmoid,
}

impl SurrogateKind {
    pub fn name(self) -> &'static str {
        match self {
            SurrogateKind::Ramp => "ramp",
            SurrogateKind::Sigmoid => "sigmoid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    pub sigma: f64,
}

impl SurrogateSpec {
    pub fn sigmoid(sigma: f64) -> Self {
        Self {
            kind: SurrogateKind::Sigmoid,
            sigma,
        }
    }

    pub fn ramp(sigma: f64) -> Self {
        Self {
            kind: SurrogateKind::Ramp,
            sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= MAX_SIGMA) {
            return Err(Error::config(format!(
                "surrogate sigma = {} must lie in (0, {MAX_SIGMA}]",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn Surrogate>> {
        self.validate()?;
        let ctor = *surrogate_registry().get(self.kind.name())?;
        Ok(ctor(self.sigma))
    }
}

/// A smoothed step function `phi`. Its derivative is a probability density,
/// which the importance-sampling gradient estimator uses as a proposal.
pub trait Surrogate: Send + Sync + Debug {
    fn kind(&self) -> SurrogateKind;

    fn sigma(&self) -> f64;

    fn value(&self, t: f64) -> f64;

    fn derivative(&self, t: f64) -> f64;

    /// `int_{-inf}^t phi'`; for both surrogates this is `phi` itself.
    fn derivative_cdf(&self, t: f64) -> f64 {
        self.value(t)
    }

    /// Inverse of [`derivative_cdf`](Self::derivative_cdf) on `(0, 1)`.
    fn derivative_quantile(&self, p: f64) -> f64;
}

pub type SurrogateCtor = fn(f64) -> Arc<dyn Surrogate>;

pub fn surrogate_registry() -> Registry<SurrogateCtor> {
    let mut r: Registry<SurrogateCtor> = Registry::new("surrogate");
    r.register(SurrogateKind::Ramp.name(), |sigma| Arc::new(Ramp { sigma }));
    r.register(SurrogateKind::Sigmoid.name(), |sigma| Arc::new(Sigmoid { sigma }));
    r
}

#[derive(Clone, Copy, Debug)]
pub struct Ramp {
    sigma: f64,
}

impl Surrogate for Ramp {
    fn kind(&self) -> SurrogateKind {
        SurrogateKind::Ramp
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn value(&self, t: f64) -> f64 {
        ramp_value(t, self.sigma)
    }

    fn derivative(&self, t: f64) -> f64 {
        ramp_derivative(t, self.sigma)
    }

    fn derivative_quantile(&self, p: f64) -> f64 {
        self.sigma * (p - 0.5)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Sigmoid {
    sigma: f64,
}

impl Surrogate for Sigmoid {
    fn kind(&self) -> SurrogateKind {
        SurrogateKind::Sigmoid
    }

    fn sigma(&self) -> f64 {
        self.sigma
    }

    fn value(&self, t: f64) -> f64 {
        sigmoid_value(t, self.sigma)
    }

    fn derivative(&self, t: f64) -> f64 {
        sigmoid_derivative(t, self.sigma)
    }

    fn derivative_quantile(&self, p: f64) -> f64 {
        self.sigma * (p.ln() - (-p).ln_1p())
    }
}

fn nonzero_norm(w: &[f64]) -> Result<f64> {
    let n = norm(w);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::input(format!("weight vector must have finite nonzero norm (got {n})")));
    }
    Ok(n)
}

/// Normalised margin `<w, x> / |w|`.
pub fn margin(w: &[f64], x: &[f64]) -> Result<f64> {
    if w.len() != x.len() {
        return Err(Error::input("weight and point dimensions differ"));
    }
    Ok(dot(w, x) / nonzero_norm(w)?)
}

pub fn per_sample_loss(w: &[f64], ex: &LabeledExample, surrogate: &dyn Surrogate) -> Result<f64> {
    Ok(surrogate.value(-ex.y * margin(w, &ex.x)?))
}

/// `-y phi'(-y l) grad_w l` with `grad_w l = x/|w| - <w,x> w/|w|^3`.
pub fn per_sample_gradient(
    w: &[f64],
    ex: &LabeledExample,
    surrogate: &dyn Surrogate,
) -> Result<Vec<f64>> {
    if w.len() != ex.x.len() {
        return Err(Error::input("weight and point dimensions differ"));
    }
    let wn = nonzero_norm(w)?;
    let unit: Vec<f64> = w.iter().map(|c| c / wn).collect();
    let mut out = vec![0.0; w.len()];
    let coef = gradient_unit_into(&unit, &ex.x, ex.y, surrogate, &mut out);
    if coef != 0.0 {
        out.iter_mut().for_each(|g| *g /= wn);
    }
    Ok(out)
}

/// Per-sample gradient at a unit `w`, written into `out`; returns the scalar
/// factor `-y phi'(-y l)` so callers can skip zero contributions.
#[inline]
pub fn gradient_unit_into(
    w: &[f64],
    x: &[f64],
    y: f64,
    surrogate: &dyn Surrogate,
    out: &mut [f64],
) -> f64 {
    let m = dot(w, x);
    let coef = -y * surrogate.derivative(-y * m);
    if coef == 0.0 {
        out.iter_mut().for_each(|g| *g = 0.0);
        return 0.0;
    }
    out.iter_mut()
        .zip(x.iter().zip(w))
        .for_each(|(g, (xi, wi))| *g = xi - m * wi);
    // one more projection removes the rounding left along w
    let r = dot(out, w);
    out.iter_mut()
        .zip(w)
        .for_each(|(g, wi)| *g = coef * (*g - r * wi));
    coef
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PopulationEstimate {
    pub loss: f64,
    pub gradient: Vec<f64>,
    pub gradient_norm: f64,
    /// `sqrt(sum_j Var(g_j) / n)` from per-coordinate sample variances.
    pub gradient_norm_stderr: f64,
    pub samples: u64,
}

/// Sample means of the loss and gradient at unit `w`.
///
/// The data is reduced in fixed-size chunks whose partial sums are combined
/// in order, so the result does not depend on the thread count.
pub fn population_estimates(
    w: &UnitVector,
    data: &[LabeledExample],
    surrogate: &dyn Surrogate,
) -> Result<PopulationEstimate> {
    if data.is_empty() {
        return Err(Error::input("population estimate needs at least one example"));
    }
    let d = w.dim();
    if data.iter().any(|ex| ex.x.len() != d) {
        return Err(Error::input("example dimension differs from w"));
    }
    let partials: Vec<(ScalarMoments, VectorMoments)> = data
        .par_chunks(REDUCTION_CHUNK)
        .map(|chunk| {
            let mut loss = ScalarMoments::default();
            let mut grad = VectorMoments::new(d);
            let mut g = vec![0.0; d];
            for ex in chunk {
                loss.push(surrogate.value(-ex.y * dot(w, &ex.x)));
                gradient_unit_into(w, &ex.x, ex.y, surrogate, &mut g);
                grad.push(&g);
            }
            (loss, grad)
        })
        .collect();
    let mut loss = ScalarMoments::default();
    let mut grad = VectorMoments::new(d);
    for (l, g) in &partials {
        loss.merge(l);
        grad.merge(g);
    }
    let gradient = grad.mean();
    Ok(PopulationEstimate {
        loss: loss.mean(),
        gradient_norm: norm(&gradient),
        gradient,
        gradient_norm_stderr: grad.norm_stderr(),
        samples: loss.n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(s: f64) -> Arc<dyn Surrogate> {
        SurrogateSpec::sigmoid(s).build().unwrap()
    }

    fn ramp(s: f64) -> Arc<dyn Surrogate> {
        SurrogateSpec::ramp(s).build().unwrap()
    }

    #[test]
    fn ramp_values() {
        let s = 0.7;
        assert_eq!(ramp_value(0.0, s), 0.5);
        assert_eq!(ramp_value(s, s), 1.0);
        assert_eq!(ramp_value(-s, s), 0.0);
        assert_eq!(ramp_value(s / 2.0, s), 1.0);
        assert_eq!(ramp_value(-s / 2.0, s), 0.0);
    }

    #[test]
    fn ramp_derivatives() {
        assert_eq!(ramp_derivative(0.0, 0.4), 2.5);
        assert_eq!(ramp_derivative(0.4, 0.4), 0.0);
        assert_eq!(ramp_derivative(0.2, 0.4), 2.5);
        assert_eq!(ramp_derivative(-0.2, 0.4), 2.5);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_value(0.0, 0.3), 0.5);
        assert!((sigmoid_value(1.0, 1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((sigmoid_value(-1.0, 1.0) - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert_eq!(sigmoid_value(-800.0, 1.0), 0.0);
        assert_eq!(sigmoid_value(800.0, 1.0), 1.0);
        for t in [-3.0, -0.1, 0.4, 2.0] {
            assert!((sigmoid_value(t, 0.5) + sigmoid_value(-t, 0.5) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_derivatives() {
        assert_eq!(sigmoid_derivative(0.0, 1.0), 0.25);
        assert_eq!(sigmoid_derivative(0.0, 0.5), 0.5);
        assert_eq!(sigmoid_derivative(0.7, 0.3), sigmoid_derivative(-0.7, 0.3));
        assert_eq!(sigmoid_derivative(-900.0, 1.0), 0.0);
        // the S^2 e^{-t/s} / s form agrees where it does not overflow
        for t in [-5.0, -0.3, 0.0, 0.8, 4.0] {
            let s = sigmoid_value(t, 0.6);
            let direct = s * s * (-t / 0.6f64).exp() / 0.6;
            assert!((sigmoid_derivative(t, 0.6) - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_quantiles_invert_cdf() {
        for s in [sig(0.3), ramp(0.3)] {
            for p in [0.01, 0.2, 0.5, 0.77, 0.99] {
                let t = s.derivative_quantile(p);
                assert!((s.derivative_cdf(t) - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sigma_guard_rail() {
        assert!(SurrogateSpec::sigmoid(0.0).build().is_err());
        assert!(SurrogateSpec::sigmoid(10.5).build().is_err());
        assert!(SurrogateSpec::ramp(10.0).build().is_ok());
    }

    #[test]
    fn margin_examples() {
        assert_eq!(margin(&[1.0, 0.0], &[3.0, 4.0]).unwrap(), 3.0);
        assert_eq!(margin(&[2.0, 0.0], &[3.0, 4.0]).unwrap(), 3.0);
        assert!((margin(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(margin(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn loss_examples() {
        let w = [1.0, 0.0];
        let orth = LabeledExample::new(vec![0.0, 1.0], -1.0);
        assert_eq!(per_sample_loss(&w, &orth, sig(0.4).as_ref()).unwrap(), 0.5);
        let along = LabeledExample::new(vec![1.0, 0.0], 1.0);
        let v = per_sample_loss(&w, &along, sig(1.0).as_ref()).unwrap();
        assert!((v - 0.268_941_421_369_995_1).abs() < 1e-15);
        assert_eq!(per_sample_loss(&w, &along, ramp(1.0).as_ref()).unwrap(), 0.0);
        assert!(per_sample_loss(&[0.0, 0.0], &along, ramp(1.0).as_ref()).is_err());
    }

    #[test]
    fn gradient_examples() {
        let w = [1.0, 0.0];
        let along = LabeledExample::new(vec![1.0, 0.0], 1.0);
        let g = per_sample_gradient(&w, &along, sig(0.5).as_ref()).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);

        let orth = LabeledExample::new(vec![0.0, 1.0], 1.0);
        let g = per_sample_gradient(&w, &orth, sig(0.5).as_ref()).unwrap();
        assert!((g[0]).abs() < 1e-15 && (g[1] + 0.5).abs() < 1e-15);

        let g2 = per_sample_gradient(&[2.0, 0.0], &orth, sig(0.5).as_ref()).unwrap();
        assert!((g2[1] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn ramp_gradient_uses_closed_band() {
        // margin exactly -sigma/2 for y = +1 puts -y l = sigma/2 on the kink
        let w = [1.0, 0.0];
        let ex = LabeledExample::new(vec![-0.25, 1.0], 1.0);
        let g = per_sample_gradient(&w, &ex, ramp(0.5).as_ref()).unwrap();
        assert!((g[1] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn population_estimates_of_duplicates() {
        let w = UnitVector::new(vec![0.6, 0.8]).unwrap();
        let ex = LabeledExample::new(vec![0.3, -1.2], -1.0);
        let s = sig(0.3);
        let data = vec![ex.clone(); 10_000];
        let est = population_estimates(&w, &data, s.as_ref()).unwrap();
        assert!((est.loss - per_sample_loss(&w, &ex, s.as_ref()).unwrap()).abs() < 1e-12);
        let g = per_sample_gradient(&w, &ex, s.as_ref()).unwrap();
        for (a, b) in est.gradient.iter().zip(&g) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(est.gradient_norm_stderr < 1e-6);
        assert!(population_estimates(&w, &[], s.as_ref()).is_err());
    }

    #[test]
    fn population_loss_vanishes_on_separable_wide_margin() {
        let w = UnitVector::new(vec![1.0, 0.0]).unwrap();
        let data: Vec<LabeledExample> = (0..100)
            .map(|i| {
                let m = 0.1 + i as f64 * 0.01;
                let sgn = if i % 2 == 0 { 1.0 } else { -1.0 };
                LabeledExample::new(vec![sgn * m, (i as f64).sin()], sgn)
            })
            .collect();
        let est = population_estimates(&w, &data, sig(1e-3).as_ref()).unwrap();
        assert!(est.loss <= 1e-40);
        let est = population_estimates(&w, &data, ramp(1e-3).as_ref()).unwrap();
        assert_eq!(est.loss, 0.0);
    }
}
