//! Projected stochastic gradient descent on the unit sphere.
//!
//! Each step takes one stochastic gradient `g` at the current unit iterate,
//! moves to `v = w - beta g` and renormalises. For degree-zero homogeneous
//! objectives `g` is orthogonal to `w`, so `|v| >= 1` and the projection
//! never divides by a small number.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm, UnitVector};
use crate::rng::{StreamRng, StreamSeed};

/// Source of one stochastic gradient per call.
pub trait StochasticGradient {
    fn dim(&self) -> usize;

    /// Writes a stochastic gradient at unit `w` into `out`. Oracles that own
    /// their sample streams may ignore `rng`.
    fn sample_gradient(&mut self, w: &[f64], rng: &mut StreamRng, out: &mut [f64]);
}

/// Adapts a closure into a [`StochasticGradient`].
pub struct FnGradient<F> {
    dim: usize,
    f: F,
}

impl<F> FnGradient<F>
where
    F: FnMut(&[f64], &mut StreamRng, &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F> StochasticGradient for FnGradient<F>
where
    F: FnMut(&[f64], &mut StreamRng, &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_gradient(&mut self, w: &[f64], rng: &mut StreamRng, out: &mut [f64]) {
        (self.f)(w, rng, out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsgdConfig {
    pub steps: u64,
    pub step_size: f64,
    pub seed: u64,
    /// Keep every `record_every`-th iterate (plus the start and the last).
    pub record_every: u64,
    /// Also keep the norm of every stochastic gradient.
    #[serde(default)]
    pub diagnostics: bool,
}

impl PsgdConfig {
    pub fn new(steps: u64, step_size: f64, seed: u64) -> Self {
        Self {
            steps,
            step_size,
            seed,
            record_every: 1,
            diagnostics: false,
        }
    }

    pub fn with_record_every(mut self, every: u64) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::config("psgd steps must be >= 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config(format!("psgd step size {} must be > 0", self.step_size)));
        }
        if self.record_every == 0 {
            return Err(Error::config("psgd record_every must be >= 1"));
        }
        Ok(())
    }

    /// Step indices that [`psgd_run`] records: 0, every multiple of
    /// `record_every`, and `steps`.
    pub fn recorded_steps(&self) -> Vec<u64> {
        let mut v: Vec<u64> = (0..=self.steps).step_by(self.record_every as usize).collect();
        if v.last() != Some(&self.steps) {
            v.push(self.steps);
        }
        v
    }

    pub fn recorded_count(&self) -> u64 {
        self.steps / self.record_every + 1 + u64::from(!self.steps.is_multiple_of(self.record_every))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    /// Step index of each recorded iterate, starting with 0.
    pub steps: Vec<u64>,
    pub iterates: Vec<UnitVector>,
    /// Norm of the stochastic gradient used at each step `1..=T`, when
    /// diagnostics are on.
    pub gradient_norms: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn last(&self) -> &UnitVector {
        self.iterates.last().expect("trajectory always holds the start point")
    }
}

/// Runs projected SGD from `w0` and returns the recorded iterates
/// `w^(0..=T)`.
pub fn psgd_run(
    oracle: &mut dyn StochasticGradient,
    config: &PsgdConfig,
    w0: &UnitVector,
) -> Result<Trajectory> {
    config.validate()?;
    let d = w0.dim();
    if oracle.dim() != d {
        return Err(Error::input(format!(
            "oracle dimension {} differs from start point dimension {d}",
            oracle.dim()
        )));
    }
    let mut rng = StreamSeed::from_u64(config.seed).named("psgd").rng();
    let capacity = config.recorded_count() as usize;
    let mut steps = Vec::with_capacity(capacity);
    let mut iterates = Vec::with_capacity(capacity);
    let mut gradient_norms = config
        .diagnostics
        .then(|| Vec::with_capacity(config.steps as usize));

    let mut w = w0.as_slice().to_vec();
    let mut g = vec![0.0; d];
    steps.push(0);
    iterates.push(w0.clone());

    for step in 1..=config.steps {
        oracle.sample_gradient(&w, &mut rng, &mut g);
        let gn = norm(&g);
        if !gn.is_finite() {
            return Err(Error::NonFiniteGradient { step, norm: gn });
        }
        if let Some(norms) = gradient_norms.as_mut() {
            norms.push(gn);
        }
        if gn != 0.0 {
            w.iter_mut()
                .zip(&g)
                .for_each(|(wi, gi)| *wi -= config.step_size * gi);
            let vn = norm(&w);
            if vn == 0.0 || !vn.is_finite() {
                return Err(Error::ZeroNormUpdate { step });
            }
            w.iter_mut().for_each(|wi| *wi /= vn);
        }
        if step % config.record_every == 0 || step == config.steps {
            steps.push(step);
            iterates.push(UnitVector::new(w.clone())?);
        }
    }

    Ok(Trajectory {
        steps,
        iterates,
        gradient_norms,
    })
}

/// `beta = sqrt(2R / (L B T))`.
pub fn theoretical_step_size(lipschitz: f64, second_moment: f64, value_bound: f64, steps: u64) -> Result<f64> {
    for (name, v) in [("L", lipschitz), ("B", second_moment), ("R", value_bound)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::input(format!("{name} = {v} must be positive")));
        }
    }
    if steps == 0 {
        return Err(Error::input("T must be >= 1"));
    }
    Ok((2.0 * value_bound / (lipschitz * second_moment * steps as f64)).sqrt())
}

/// `T = ceil((2 L B R + 8 C^2 ln(1/delta)) / eps^4)`.
pub fn theoretical_iteration_count(
    lipschitz: f64,
    second_moment: f64,
    value_bound: f64,
    mean_gradient_bound: f64,
    eps: f64,
    delta: f64,
) -> Result<u64> {
    for (name, v) in [("L", lipschitz), ("B", second_moment), ("R", value_bound)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::input(format!("{name} = {v} must be positive")));
        }
    }
    if !(mean_gradient_bound >= 0.0 && mean_gradient_bound.is_finite()) {
        return Err(Error::input("C must be finite and non-negative"));
    }
    if !(eps > 0.0 && eps <= 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("eps = {eps}, delta = {delta} out of range")));
    }
    let t = (2.0 * lipschitz * second_moment * value_bound
        + 8.0 * mean_gradient_bound.powi(2) * (1.0 / delta).ln())
        / eps.powi(4);
    if t > u64::MAX as f64 {
        return Err(Error::BudgetExceeded {
            name: "T",
            value: t,
            budget: u64::MAX as f64,
        });
    }
    Ok(t.ceil() as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Certificate {
    /// Position in the trajectory (0 is the start point).
    pub position: usize,
    pub step: u64,
    pub gradient_norm: f64,
    pub stderr: f64,
}

/// Evaluates `estimator` (returning a gradient estimate and its stderr) at
/// every recorded iterate and returns the smallest norm; ties go to the
/// earliest iterate.
pub fn stationarity_certificate<F>(trajectory: &Trajectory, mut estimator: F) -> Result<Certificate>
where
    F: FnMut(&UnitVector) -> Result<(Vec<f64>, f64)>,
{
    if trajectory.is_empty() {
        return Err(Error::input("empty trajectory"));
    }
    let mut best: Option<Certificate> = None;
    for (position, (w, &step)) in trajectory.iterates.iter().zip(&trajectory.steps).enumerate() {
        let (g, stderr) = estimator(w)?;
        let gradient_norm = norm(&g);
        if best.is_none_or(|b| gradient_norm < b.gradient_norm) {
            best = Some(Certificate {
                position,
                step,
                gradient_norm,
                stderr,
            });
        }
    }
    Ok(best.expect("non-empty trajectory"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e1(d: usize) -> UnitVector {
        UnitVector::basis(d, 0).unwrap()
    }

    #[test]
    fn zero_gradient_keeps_start() {
        let mut o = FnGradient::new(3, |_: &[f64], _: &mut StreamRng, g: &mut [f64]| g.fill(0.0));
        let t = psgd_run(&mut o, &PsgdConfig::new(10, 0.5, 1), &e1(3)).unwrap();
        assert_eq!(t.len(), 11);
        assert!(t.iterates.iter().all(|w| *w == e1(3)));
    }

    #[test]
    fn one_step_by_hand() {
        let mut o = FnGradient::new(2, |_: &[f64], _: &mut StreamRng, g: &mut [f64]| {
            g.copy_from_slice(&[0.0, 1.0])
        });
        let t = psgd_run(&mut o, &PsgdConfig::new(1, 1.0, 0), &e1(2)).unwrap();
        let h = 0.5f64.sqrt();
        assert!((t.iterates[1][0] - h).abs() < 1e-15);
        assert!((t.iterates[1][1] + h).abs() < 1e-15);
    }

    #[test]
    fn recording_schedule() {
        let c = PsgdConfig::new(10, 0.1, 0).with_record_every(4);
        assert_eq!(c.recorded_steps(), vec![0, 4, 8, 10]);
        assert_eq!(c.recorded_count(), 4);
        let c = PsgdConfig::new(8, 0.1, 0).with_record_every(4);
        assert_eq!(c.recorded_steps(), vec![0, 4, 8]);
        assert_eq!(c.recorded_count(), 3);

        let mut o = FnGradient::new(2, |_: &[f64], r: &mut StreamRng, g: &mut [f64]| {
            use rand::Rng;
            g[0] = 0.0;
            g[1] = r.random::<f64>() - 0.5;
        });
        let t = psgd_run(&mut o, &PsgdConfig::new(10, 0.1, 0).with_record_every(4), &e1(2)).unwrap();
        assert_eq!(t.steps, vec![0, 4, 8, 10]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut o = FnGradient::new(2, |_: &[f64], _: &mut StreamRng, g: &mut [f64]| {
            g.copy_from_slice(&[f64::NAN, 0.0])
        });
        let r = psgd_run(&mut o, &PsgdConfig::new(5, 0.1, 0), &e1(2));
        assert!(matches!(r, Err(Error::NonFiniteGradient { step: 1, .. })));
    }

    #[test]
    fn zero_update_aborts() {
        // gradient equal to w with beta = 1 sends v to the origin
        let mut o = FnGradient::new(2, |w: &[f64], _: &mut StreamRng, g: &mut [f64]| {
            g.copy_from_slice(w)
        });
        let r = psgd_run(&mut o, &PsgdConfig::new(5, 1.0, 0), &e1(2));
        assert!(matches!(r, Err(Error::ZeroNormUpdate { step: 1 })));
    }

    #[test]
    fn diagnostics_record_every_step() {
        let mut o = FnGradient::new(2, |_: &[f64], _: &mut StreamRng, g: &mut [f64]| {
            g.copy_from_slice(&[0.0, 0.1])
        });
        let mut c = PsgdConfig::new(7, 0.1, 0).with_record_every(3);
        c.diagnostics = true;
        let t = psgd_run(&mut o, &c, &e1(2)).unwrap();
        assert_eq!(t.gradient_norms.as_ref().unwrap().len(), 7);
    }

    #[test]
    fn step_size_examples() {
        assert_eq!(theoretical_step_size(1.0, 2.0, 1.0, 1).unwrap(), 1.0);
        assert!((theoretical_step_size(1.0, 1.0, 1.0, 4).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let a = theoretical_step_size(3.0, 5.0, 1.0, 100).unwrap();
        let b = theoretical_step_size(3.0, 5.0, 1.0, 400).unwrap();
        assert!((b - a / 2.0).abs() < 1e-15);
        assert!(theoretical_step_size(0.0, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn iteration_count_examples() {
        assert_eq!(theoretical_iteration_count(1.0, 1.0, 1.0, 0.0, 1.0, 0.5).unwrap(), 2);
        let a = theoretical_iteration_count(1.0, 1.0, 1.0, 0.0, 0.5, 0.5).unwrap();
        assert_eq!(a, 32);
        let t = theoretical_iteration_count(1.0, 1.0, 1.0, 1.0, 0.5, (-1f64).exp()).unwrap();
        assert_eq!(t, 160);
    }

    #[test]
    fn certificate_tie_breaks_to_first() {
        let w = e1(2);
        let t = Trajectory {
            steps: vec![0, 1, 2],
            iterates: vec![w.clone(), w.clone(), w.clone()],
            gradient_norms: None,
        };
        let c = stationarity_certificate(&t, |_| Ok((vec![0.3, 0.4], 0.01))).unwrap();
        assert_eq!(c.position, 0);
        assert_eq!(c.gradient_norm, 0.5);

        let single = Trajectory {
            steps: vec![0],
            iterates: vec![w],
            gradient_norms: None,
        };
        assert_eq!(stationarity_certificate(&single, |_| Ok((vec![1.0], 0.0))).unwrap().position, 0);
    }
}
