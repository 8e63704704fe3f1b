//! Massart and strong-Massart noisy example oracles.
//!
//! A [`NoiseModel`] is a deterministic rate function `eta(x)`; the oracle
//! draws `x` from the marginal, labels it with the target halfspace and flips
//! the label with probability `eta(x)`. Points and flip decisions come from
//! separate streams, so swapping the adversary leaves the points untouched.

use std::fmt::Debug;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::Marginal;
use crate::error::{Error, Result};
use crate::geometry::{dot, sign_unchecked, UnitVector};
use crate::registry::Registry;
use crate::rng::{mix64, StreamRng, StreamSeed};
use crate::stats::{Estimate, ScalarMoments};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Constant,
    BoundaryConcentrated,
    RandomMeasurable,
    StrongMassartMax,
}

impl NoiseKind {
    /// The kinds whose rate never exceeds `eta_bound`.
    pub const MASSART: [NoiseKind; 4] = [
        NoiseKind::None,
        NoiseKind::Constant,
        NoiseKind::BoundaryConcentrated,
        NoiseKind::RandomMeasurable,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Constant => "constant",
            NoiseKind::BoundaryConcentrated => "boundary_concentrated",
            NoiseKind::RandomMeasurable => "random_measurable",
            NoiseKind::StrongMassartMax => "strong_massart_max",
        }
    }
}

/// Adversary selection and parameters, as read from configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseStrategy {
    pub kind: NoiseKind,
    /// Massart bound `eta < 1/2`.
    #[serde(default)]
    pub eta_bound: f64,
    /// Strong-Massart slope `c` in `(0, 1]`.
    #[serde(default = "one")]
    pub c_strong: f64,
    /// Half-width of the noisy slab for `boundary_concentrated`.
    #[serde(default = "default_band")]
    pub band: f64,
    /// Key of the hash behind `random_measurable`.
    #[serde(default)]
    pub hash_key: u64,
}

fn one() -> f64 {
    1.0
}

fn default_band() -> f64 {
    0.1
}

impl NoiseStrategy {
    pub fn new(kind: NoiseKind) -> Self {
        Self {
            kind,
            eta_bound: 0.0,
            c_strong: 1.0,
            band: default_band(),
            hash_key: 0,
        }
    }

    pub fn none() -> Self {
        Self::new(NoiseKind::None)
    }

    pub fn constant(eta: f64) -> Self {
        Self {
            eta_bound: eta,
            ..Self::new(NoiseKind::Constant)
        }
    }

    pub fn boundary(eta: f64, band: f64) -> Self {
        Self {
            eta_bound: eta,
            band,
            ..Self::new(NoiseKind::BoundaryConcentrated)
        }
    }

    pub fn random_measurable(eta: f64, hash_key: u64) -> Self {
        Self {
            eta_bound: eta,
            hash_key,
            ..Self::new(NoiseKind::RandomMeasurable)
        }
    }

    pub fn strong(c: f64) -> Self {
        Self {
            c_strong: c,
            ..Self::new(NoiseKind::StrongMassartMax)
        }
    }

    /// Same parameters, different adversary.
    pub fn with_kind(&self, kind: NoiseKind) -> Self {
        Self { kind, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.eta_bound) {
            return Err(Error::config(format!(
                "noise.eta_bound = {} must lie in [0, 1/2)",
                self.eta_bound
            )));
        }
        if !(self.c_strong > 0.0 && self.c_strong <= 1.0) {
            return Err(Error::config(format!(
                "noise.c_strong = {} must lie in (0, 1]",
                self.c_strong
            )));
        }
        if !(self.band > 0.0 && self.band.is_finite()) {
            return Err(Error::config(format!("noise.band = {} must be positive", self.band)));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Arc<dyn NoiseModel>> {
        self.validate()?;
        let ctor = *noise_registry().get(self.kind.name())?;
        Ok(ctor(self))
    }
}

/// Label-flip probability as a function of the point.
pub trait NoiseModel: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    /// `eta(x)` in `[0, 1/2]`; `target` is the unit normal `w*`.
    fn rate(&self, target: &[f64], x: &[f64]) -> f64;

    /// Upper bound `eta` on the rate for Massart adversaries; `None` for the
    /// strong model, whose rate reaches `1/2` on the boundary.
    fn massart_bound(&self) -> Option<f64>;
}

pub type NoiseCtor = fn(&NoiseStrategy) -> Arc<dyn NoiseModel>;

pub fn noise_registry() -> Registry<NoiseCtor> {
    let mut r: Registry<NoiseCtor> = Registry::new("noise strategy");
    r.register(NoiseKind::None.name(), |_| Arc::new(NoNoise));
    r.register(NoiseKind::Constant.name(), |s| {
        Arc::new(ConstantNoise { eta: s.eta_bound })
    });
    r.register(NoiseKind::BoundaryConcentrated.name(), |s| {
        Arc::new(BoundaryNoise {
            eta: s.eta_bound,
            band: s.band,
        })
    });
    r.register(NoiseKind::RandomMeasurable.name(), |s| {
        Arc::new(HashedNoise {
            eta: s.eta_bound,
            key: s.hash_key,
        })
    });
    r.register(NoiseKind::StrongMassartMax.name(), |s| {
        Arc::new(StrongMassartNoise { c: s.c_strong })
    });
    r
}

#[derive(Debug, Clone, Copy)]
pub struct NoNoise;

impl NoiseModel for NoNoise {
    fn name(&self) -> &'static str {
        NoiseKind::None.name()
    }

    fn rate(&self, _: &[f64], _: &[f64]) -> f64 {
        0.0
    }

    fn massart_bound(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Random classification noise: `eta(x) = eta`.
#[derive(Debug, Clone, Copy)]
pub struct ConstantNoise {
    eta: f64,
}

impl NoiseModel for ConstantNoise {
    fn name(&self) -> &'static str {
        NoiseKind::Constant.name()
    }

    fn rate(&self, _: &[f64], _: &[f64]) -> f64 {
        self.eta
    }

    fn massart_bound(&self) -> Option<f64> {
        Some(self.eta)
    }
}

/// Full noise on the slab `|<w*, x>| <= band`, none elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryNoise {
    eta: f64,
    band: f64,
}

impl NoiseModel for BoundaryNoise {
    fn name(&self) -> &'static str {
        NoiseKind::BoundaryConcentrated.name()
    }

    fn rate(&self, target: &[f64], x: &[f64]) -> f64 {
        if dot(target, x).abs() <= self.band {
            self.eta
        } else {
            0.0
        }
    }

    fn massart_bound(&self) -> Option<f64> {
        Some(self.eta)
    }
}

/// Rate drawn from a keyed hash of the point's bit pattern: arbitrary looking
/// but a fixed function of `x`.
#[derive(Debug, Clone, Copy)]
pub struct HashedNoise {
    eta: f64,
    key: u64,
}

impl NoiseModel for HashedNoise {
    fn name(&self) -> &'static str {
        NoiseKind::RandomMeasurable.name()
    }

    fn rate(&self, _: &[f64], x: &[f64]) -> f64 {
        let h = x
            .iter()
            .fold(mix64(self.key), |h, v| mix64(h ^ v.to_bits()));
        // 53 high bits -> [0, 1]
        let unit = (h >> 11) as f64 / ((1u64 << 53) - 1) as f64;
        unit * self.eta
    }

    fn massart_bound(&self) -> Option<f64> {
        Some(self.eta)
    }
}

/// `eta(x) = max(1/2 - c |<w*, x>|, 0)`.
#[derive(Debug, Clone, Copy)]
pub struct StrongMassartNoise {
    c: f64,
}

impl NoiseModel for StrongMassartNoise {
    fn name(&self) -> &'static str {
        NoiseKind::StrongMassartMax.name()
    }

    fn rate(&self, target: &[f64], x: &[f64]) -> f64 {
        (0.5 - self.c * dot(target, x).abs()).max(0.0)
    }

    fn massart_bound(&self) -> Option<f64> {
        None
    }
}

/// Convenience wrapper over [`NoiseModel::rate`].
pub fn noise_rate(model: &dyn NoiseModel, target: &UnitVector, x: &[f64]) -> f64 {
    model.rate(target, x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f64>,
    /// `+1.0` or `-1.0`.
    pub y: f64,
}

impl LabeledExample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

/// Example oracle for a fixed target, adversary and marginal.
#[derive(Clone, Debug)]
pub struct MassartOracle {
    target: UnitVector,
    noise: Arc<dyn NoiseModel>,
    marginal: Arc<dyn Marginal>,
    seed: StreamSeed,
    points: StreamRng,
    flips: StreamRng,
}

impl MassartOracle {
    pub fn new(
        target: UnitVector,
        noise: Arc<dyn NoiseModel>,
        marginal: Arc<dyn Marginal>,
        seed: StreamSeed,
    ) -> Result<Self> {
        if target.dim() != marginal.dim() {
            return Err(Error::config(format!(
                "target dimension {} differs from marginal dimension {}",
                target.dim(),
                marginal.dim()
            )));
        }
        Ok(Self {
            target,
            noise,
            marginal,
            seed,
            points: seed.named("points").rng(),
            flips: seed.named("flips").rng(),
        })
    }

    pub fn target(&self) -> &UnitVector {
        &self.target
    }

    pub fn noise(&self) -> &Arc<dyn NoiseModel> {
        &self.noise
    }

    pub fn marginal(&self) -> &Arc<dyn Marginal> {
        &self.marginal
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn seed(&self) -> StreamSeed {
        self.seed
    }

    /// Independent oracle over the same distribution, on the substream named
    /// `purpose`.
    pub fn fork(&self, purpose: &str) -> Self {
        let seed = self.seed.named(purpose);
        Self {
            target: self.target.clone(),
            noise: self.noise.clone(),
            marginal: self.marginal.clone(),
            seed,
            points: seed.named("points").rng(),
            flips: seed.named("flips").rng(),
        }
    }

    /// Clean label `sign(<w*, x>)`.
    #[inline]
    pub fn clean_label(&self, x: &[f64]) -> f64 {
        sign_unchecked(dot(&self.target, x))
    }

    /// Draws one example into `x`; returns `(label, flipped)`. Exactly one
    /// uniform is taken from the flip stream per call.
    #[inline]
    pub fn draw_into(&mut self, x: &mut [f64]) -> (f64, bool) {
        self.marginal.sample_into(&mut self.points, x);
        let u: f64 = self.flips.random();
        let flipped = u < self.noise.rate(&self.target, x);
        let clean = self.clean_label(x);
        (if flipped { -clean } else { clean }, flipped)
    }

    pub fn draw(&mut self, n: usize) -> Result<Vec<LabeledExample>> {
        Ok(self.draw_flagged(n)?.into_iter().map(|(e, _)| e).collect())
    }

    /// Like [`draw`](Self::draw) but also reports which labels were flipped.
    pub fn draw_flagged(&mut self, n: usize) -> Result<Vec<(LabeledExample, bool)>> {
        if n == 0 {
            return Err(Error::input("draw count must be >= 1"));
        }
        let d = self.dim();
        Ok((0..n)
            .map(|_| {
                let mut x = vec![0.0; d];
                let (y, flipped) = self.draw_into(&mut x);
                (LabeledExample::new(x, y), flipped)
            })
            .collect())
    }

    /// Monte-Carlo estimate of `OPT = E[eta(x)]` from the rate function on a
    /// dedicated stream; the oracle's own streams are not advanced.
    pub fn opt_error(&self, n: usize) -> Result<Estimate> {
        if n == 0 {
            return Err(Error::input("sample count must be >= 1"));
        }
        let mut rng = self.seed.named("opt").rng();
        let mut x = vec![0.0; self.dim()];
        let mut m = ScalarMoments::default();
        for _ in 0..n {
            self.marginal.sample_into(&mut rng, &mut x);
            m.push(self.noise.rate(&self.target, &x));
        }
        Ok(m.estimate())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{MarginalKind, MarginalSpec};

    fn oracle(strategy: NoiseStrategy, d: usize, seed: u64) -> MassartOracle {
        let marginal = MarginalSpec {
            kind: MarginalKind::StandardGaussian,
            dim: d,
        }
        .build()
        .unwrap();
        MassartOracle::new(
            UnitVector::basis(d, 0).unwrap(),
            strategy.build().unwrap(),
            marginal,
            StreamSeed::from_u64(seed),
        )
        .unwrap()
    }

    #[test]
    fn strong_rate_examples() {
        let m = NoiseStrategy::strong(1.0).build().unwrap();
        let t = [1.0, 0.0];
        assert_eq!(m.rate(&t, &[0.0, 5.0]), 0.5);
        assert!((m.rate(&t, &[0.3, 1.0]) - 0.2).abs() < 1e-15);
        assert!((m.rate(&t, &[-0.3, 1.0]) - 0.2).abs() < 1e-15);
        let m = NoiseStrategy::strong(0.5).build().unwrap();
        assert_eq!(m.rate(&t, &[2.0, 0.0]), 0.0);
        assert_eq!(m.massart_bound(), None);
    }

    #[test]
    fn rate_menu() {
        let t = [1.0, 0.0];
        assert_eq!(NoiseStrategy::none().build().unwrap().rate(&t, &[0.0, 1.0]), 0.0);
        assert_eq!(NoiseStrategy::constant(0.3).build().unwrap().rate(&t, &[9.0, 1.0]), 0.3);
        let b = NoiseStrategy::boundary(0.49, 0.1).build().unwrap();
        assert_eq!(b.rate(&t, &[0.1, 3.0]), 0.49);
        assert_eq!(b.rate(&t, &[0.11, 3.0]), 0.0);
        let h = NoiseStrategy::random_measurable(0.3, 9).build().unwrap();
        let r1 = h.rate(&t, &[0.25, -1.0]);
        assert_eq!(r1, h.rate(&t, &[0.25, -1.0]));
        assert!((0.0..=0.3).contains(&r1));
    }

    #[test]
    fn validation() {
        assert!(NoiseStrategy::constant(0.5).build().is_err());
        assert!(NoiseStrategy::constant(-0.1).build().is_err());
        assert!(NoiseStrategy::strong(0.0).build().is_err());
        assert!(NoiseStrategy::strong(1.5).build().is_err());
        assert!(NoiseStrategy::boundary(0.2, 0.0).build().is_err());
    }

    #[test]
    fn noiseless_labels_are_clean() {
        let mut o = oracle(NoiseStrategy::none(), 3, 1);
        for (ex, flipped) in o.draw_flagged(1000).unwrap() {
            assert!(!flipped);
            assert_eq!(ex.y, sign_unchecked(ex.x[0]));
        }
    }

    #[test]
    fn boundary_flips_only_inside_band() {
        let mut o = oracle(NoiseStrategy::boundary(0.49, 0.1), 3, 2);
        let draws = o.draw_flagged(20_000).unwrap();
        assert!(draws.iter().any(|(_, f)| *f));
        for (ex, flipped) in draws {
            if flipped {
                assert!(ex.x[0].abs() <= 0.1);
                assert_eq!(ex.y, -sign_unchecked(ex.x[0]));
            }
        }
    }

    #[test]
    fn points_do_not_depend_on_strategy() {
        let a = oracle(NoiseStrategy::none(), 4, 3).draw(500).unwrap();
        let b = oracle(NoiseStrategy::constant(0.4), 4, 3).draw(500).unwrap();
        let c = oracle(NoiseStrategy::strong(0.2), 4, 3).draw(500).unwrap();
        for ((ea, eb), ec) in a.iter().zip(&b).zip(&c) {
            assert_eq!(ea.x, eb.x);
            assert_eq!(ea.x, ec.x);
        }
    }

    #[test]
    fn opt_error_of_deterministic_rates() {
        assert_eq!(oracle(NoiseStrategy::none(), 2, 0).opt_error(1000).unwrap().value, 0.0);
        let e = oracle(NoiseStrategy::constant(0.3), 2, 0).opt_error(1000).unwrap();
        assert!((e.value - 0.3).abs() < 1e-12);
        assert!(e.stderr < 1e-9);
    }

    #[test]
    fn fork_is_independent_and_reproducible() {
        let base = oracle(NoiseStrategy::constant(0.1), 3, 4);
        let mut a = base.fork("selection");
        let mut b = base.fork("selection");
        let mut c = base.fork("psgd");
        let (xa, xb, xc) = (a.draw(3).unwrap(), b.draw(3).unwrap(), c.draw(3).unwrap());
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let marginal = MarginalSpec {
            kind: MarginalKind::StandardGaussian,
            dim: 3,
        }
        .build()
        .unwrap();
        let r = MassartOracle::new(
            UnitVector::basis(2, 0).unwrap(),
            NoiseStrategy::none().build().unwrap(),
            marginal,
            StreamSeed::from_u64(0),
        );
        assert!(r.is_err());
    }
}
