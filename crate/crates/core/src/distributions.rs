//! Seeded isotropic marginals and their certified `(U, R, t)` profiles.

use std::f64::consts::{E, PI};
use std::fmt::Debug;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{check_orthonormal, dot, BoundedProfile, TailRadius};
use crate::registry::Registry;
use crate::rng::{StreamRng, StreamSeed};

/// Slack applied to both density bounds in [`empirical_density_check`].
pub const DENSITY_SLACK: f64 = 0.5;

/// Minimum expected count per histogram cell in [`empirical_density_check`].
pub const MIN_CELL_COUNT: f64 = 50.0;

/// Default Paouris constant used for log-concave tail radii.
pub const DEFAULT_PAOURIS_C: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    StandardGaussian,
    UniformBallIsotropic,
    UniformSphereScaled,
    #[serde(rename = "uniform_disk_2d")]
    UniformDisk2d,
}

impl MarginalKind {
    pub const ALL: [MarginalKind; 4] = [
        MarginalKind::StandardGaussian,
        MarginalKind::UniformBallIsotropic,
        MarginalKind::UniformSphereScaled,
        MarginalKind::UniformDisk2d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MarginalKind::StandardGaussian => "standard_gaussian",
            MarginalKind::UniformBallIsotropic => "uniform_ball_isotropic",
            MarginalKind::UniformSphereScaled => "uniform_sphere_scaled",
            MarginalKind::UniformDisk2d => "uniform_disk_2d",
        }
    }
}

/// Marginal kind plus dimension, as it appears in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalSpec {
    pub kind: MarginalKind,
    pub dim: usize,
}

impl MarginalSpec {
    pub fn build(&self) -> Result<Arc<dyn Marginal>> {
        let ctor = *marginal_registry().get(self.kind.name())?;
        ctor(self.dim)
    }
}

/// An isotropic distribution on `R^d`.
pub trait Marginal: Send + Sync + Debug {
    fn name(&self) -> &'static str;

    fn dim(&self) -> usize;

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]);

    fn rotationally_symmetric(&self) -> bool {
        true
    }

    /// Decomposition along a direction, when the marginal has one in closed
    /// form.
    fn margin_slicer(&self) -> Option<&dyn MarginSlicer> {
        None
    }
}

/// Law of `<u, x>` for unit `u` together with a sampler for `x` conditioned
/// on it. Rotationally symmetric marginals make both independent of `u`.
pub trait MarginSlicer: Send + Sync {
    fn margin_density(&self, s: f64) -> f64;

    /// Open interval outside which the margin density vanishes.
    fn margin_support(&self) -> (f64, f64);

    /// Writes a draw of `x` given `<u, x> = s` into `out`.
    fn sample_given_margin(&self, u: &[f64], s: f64, rng: &mut StreamRng, out: &mut [f64]);
}

pub type MarginalCtor = fn(usize) -> Result<Arc<dyn Marginal>>;

pub fn marginal_registry() -> Registry<MarginalCtor> {
    let mut r: Registry<MarginalCtor> = Registry::new("marginal");
    r.register(MarginalKind::StandardGaussian.name(), |d| {
        Ok(Arc::new(StandardGaussian::new(d)?) as Arc<dyn Marginal>)
    });
    r.register(MarginalKind::UniformBallIsotropic.name(), |d| {
        Ok(Arc::new(UniformBall::isotropic(d)?) as Arc<dyn Marginal>)
    });
    r.register(MarginalKind::UniformSphereScaled.name(), |d| {
        Ok(Arc::new(UniformSphere::scaled(d)?) as Arc<dyn Marginal>)
    });
    r.register(MarginalKind::UniformDisk2d.name(), |d| {
        Ok(Arc::new(UniformDisk::new(d)?) as Arc<dyn Marginal>)
    });
    r
}

fn check_dim(d: usize) -> Result<()> {
    if d == 0 {
        return Err(Error::config("marginal dimension must be >= 1"));
    }
    Ok(())
}

fn fill_gaussian(rng: &mut StreamRng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

/// Isotropic Gaussian draw projected onto the complement of `u`, returned
/// with its norm.
fn gaussian_perp(u: &[f64], rng: &mut StreamRng, out: &mut [f64]) -> f64 {
    fill_gaussian(rng, out);
    let c = dot(out, u);
    out.iter_mut().zip(u).for_each(|(o, ui)| *o -= c * ui);
    dot(out, out).sqrt()
}

/// `int_{-1}^{1} (1 - v^2)^{k/2} dv` for integer `k >= -1`.
fn half_power_integral(k: i64) -> f64 {
    match k {
        -1 => PI,
        0 => 2.0,
        _ => k as f64 / (k + 1) as f64 * half_power_integral(k - 2),
    }
}

#[derive(Clone, Debug)]
pub struct StandardGaussian {
    dim: usize,
}

impl StandardGaussian {
    pub fn new(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self { dim })
    }
}

impl Marginal for StandardGaussian {
    fn name(&self) -> &'static str {
        MarginalKind::StandardGaussian.name()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        fill_gaussian(rng, out);
    }

    fn margin_slicer(&self) -> Option<&dyn MarginSlicer> {
        Some(self)
    }
}

impl MarginSlicer for StandardGaussian {
    fn margin_density(&self, s: f64) -> f64 {
        (-0.5 * s * s).exp() / (2.0 * PI).sqrt()
    }

    fn margin_support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn sample_given_margin(&self, u: &[f64], s: f64, rng: &mut StreamRng, out: &mut [f64]) {
        gaussian_perp(u, rng, out);
        out.iter_mut().zip(u).for_each(|(o, ui)| *o += s * ui);
    }
}

/// Uniform distribution on a ball; radius `sqrt(d + 2)` makes it isotropic.
#[derive(Clone, Debug)]
pub struct UniformBall {
    dim: usize,
    radius: f64,
}

impl UniformBall {
    pub fn isotropic(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            radius: ((dim + 2) as f64).sqrt(),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl Marginal for UniformBall {
    fn name(&self) -> &'static str {
        MarginalKind::UniformBallIsotropic.name()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        loop {
            fill_gaussian(rng, out);
            let n = dot(out, out).sqrt();
            if n > 0.0 {
                let r = self.radius * rng.random::<f64>().powf(1.0 / self.dim as f64) / n;
                out.iter_mut().for_each(|v| *v *= r);
                return;
            }
        }
    }

    fn margin_slicer(&self) -> Option<&dyn MarginSlicer> {
        Some(self)
    }
}

impl MarginSlicer for UniformBall {
    fn margin_density(&self, s: f64) -> f64 {
        let r = self.radius;
        if s.abs() >= r {
            return 0.0;
        }
        let k = self.dim as i64 - 1;
        (1.0 - (s / r).powi(2)).powf(k as f64 / 2.0) / (r * half_power_integral(k))
    }

    fn margin_support(&self) -> (f64, f64) {
        (-self.radius, self.radius)
    }

    fn sample_given_margin(&self, u: &[f64], s: f64, rng: &mut StreamRng, out: &mut [f64]) {
        let rest = (self.radius * self.radius - s * s).max(0.0).sqrt();
        if self.dim == 1 {
            out[0] = s * u[0];
            return;
        }
        let n = gaussian_perp(u, rng, out);
        let scale = if n > 0.0 {
            rest * rng.random::<f64>().powf(1.0 / (self.dim - 1) as f64) / n
        } else {
            0.0
        };
        out.iter_mut()
            .zip(u)
            .for_each(|(o, ui)| *o = *o * scale + s * ui);
    }
}

/// Uniform distribution on the sphere of radius `sqrt(d)` (isotropic).
#[derive(Clone, Debug)]
pub struct UniformSphere {
    dim: usize,
    radius: f64,
}

impl UniformSphere {
    pub fn scaled(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self {
            dim,
            radius: (dim as f64).sqrt(),
        })
    }
}

impl Marginal for UniformSphere {
    fn name(&self) -> &'static str {
        MarginalKind::UniformSphereScaled.name()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        loop {
            fill_gaussian(rng, out);
            let n = dot(out, out).sqrt();
            if n > 0.0 {
                let r = self.radius / n;
                out.iter_mut().for_each(|v| *v *= r);
                return;
            }
        }
    }

    fn margin_slicer(&self) -> Option<&dyn MarginSlicer> {
        if self.dim >= 2 {
            Some(self)
        } else {
            None
        }
    }
}

impl MarginSlicer for UniformSphere {
    fn margin_density(&self, s: f64) -> f64 {
        let r = self.radius;
        if s.abs() >= r {
            return 0.0;
        }
        let k = self.dim as i64 - 3;
        (1.0 - (s / r).powi(2)).powf(k as f64 / 2.0) / (r * half_power_integral(k))
    }

    fn margin_support(&self) -> (f64, f64) {
        (-self.radius, self.radius)
    }

    fn sample_given_margin(&self, u: &[f64], s: f64, rng: &mut StreamRng, out: &mut [f64]) {
        let rest = (self.radius * self.radius - s * s).max(0.0).sqrt();
        let n = gaussian_perp(u, rng, out);
        let scale = if n > 0.0 { rest / n } else { 0.0 };
        out.iter_mut()
            .zip(u)
            .for_each(|(o, ui)| *o = *o * scale + s * ui);
    }
}

/// Uniform distribution on the radius-2 disk in `R^2` (isotropic). Its
/// density `1/(4 pi)` makes the profile `(4 pi, 2, 2)` exact.
#[derive(Clone, Debug)]
pub struct UniformDisk {
    ball: UniformBall,
}

impl UniformDisk {
    pub const RADIUS: f64 = 2.0;

    pub fn new(dim: usize) -> Result<Self> {
        if dim != 2 {
            return Err(Error::config(format!("uniform_disk_2d requires dim = 2 (got {dim})")));
        }
        Ok(Self {
            ball: UniformBall {
                dim: 2,
                radius: Self::RADIUS,
            },
        })
    }
}

impl Marginal for UniformDisk {
    fn name(&self) -> &'static str {
        MarginalKind::UniformDisk2d.name()
    }

    fn dim(&self) -> usize {
        2
    }

    fn sample_into(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let r = Self::RADIUS * rng.random::<f64>().sqrt();
        let phi = 2.0 * PI * rng.random::<f64>();
        out[0] = r * phi.cos();
        out[1] = r * phi.sin();
    }

    fn margin_slicer(&self) -> Option<&dyn MarginSlicer> {
        Some(&self.ball)
    }
}

/// A marginal together with the stream it draws from.
#[derive(Clone, Debug)]
pub struct MarginalSampler {
    marginal: Arc<dyn Marginal>,
    rng: StreamRng,
}

impl MarginalSampler {
    pub fn new(marginal: Arc<dyn Marginal>, seed: StreamSeed) -> Self {
        Self {
            marginal,
            rng: seed.rng(),
        }
    }

    pub fn from_spec(spec: &MarginalSpec, seed: StreamSeed) -> Result<Self> {
        Ok(Self::new(spec.build()?, seed))
    }

    pub fn marginal(&self) -> &Arc<dyn Marginal> {
        &self.marginal
    }

    pub fn dim(&self) -> usize {
        self.marginal.dim()
    }

    pub fn sample_into(&mut self, out: &mut [f64]) {
        self.marginal.sample_into(&mut self.rng, out);
    }

    pub fn sample(&mut self, n: usize) -> Result<Vec<Vec<f64>>> {
        if n == 0 {
            return Err(Error::input("sample size must be >= 1"));
        }
        let d = self.dim();
        Ok((0..n)
            .map(|_| {
                let mut x = vec![0.0; d];
                self.sample_into(&mut x);
                x
            })
            .collect())
    }
}

/// Where a profile's constants come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Computed from the marginal's own density.
    Analytic,
    /// Generic isotropic log-concave constants.
    PaperConstant,
}

/// Which family of constants to attach to a marginal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ProfileSource {
    #[default]
    Analytic,
    LogConcave {
        #[serde(default = "default_paouris")]
        c_paouris: f64,
    },
}

fn default_paouris() -> f64 {
    DEFAULT_PAOURIS_C
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CertifiedProfile {
    pub marginal: MarginalSpec,
    pub profile: BoundedProfile,
    pub provenance: Provenance,
}

/// Isotropic log-concave constants `(e 2^17, 1/9, c ln(1/eps) + 2c)`.
pub fn logconcave_profile(c_paouris: f64) -> Result<BoundedProfile> {
    if !(c_paouris > 0.0 && c_paouris.is_finite()) {
        return Err(Error::input(format!("Paouris constant must be positive (got {c_paouris})")));
    }
    BoundedProfile::new(
        E * 131072.0,
        1.0 / 9.0,
        TailRadius::Paouris { c: c_paouris },
    )
}

/// Profile for a marginal. Analytic constants exist for the Gaussian
/// (`U = 2 pi sqrt(e)`, `R = 1`, `t(eps) = sqrt(2 ln 1/eps)`) and the disk
/// (`U = 4 pi`, `R = 2`, `t = 2`); log-concave constants apply to the
/// Gaussian, the ball and the disk.
pub fn certified_profile(spec: &MarginalSpec, source: ProfileSource) -> Result<CertifiedProfile> {
    spec.build()?;
    let (profile, provenance) = match (spec.kind, source) {
        (MarginalKind::StandardGaussian, ProfileSource::Analytic) => (
            BoundedProfile::new(2.0 * PI * 0.5f64.exp(), 1.0, TailRadius::GaussianNorm)?,
            Provenance::Analytic,
        ),
        (MarginalKind::UniformDisk2d, ProfileSource::Analytic) => (
            BoundedProfile::new(
                4.0 * PI,
                UniformDisk::RADIUS,
                TailRadius::Constant {
                    radius: UniformDisk::RADIUS,
                },
            )?,
            Provenance::Analytic,
        ),
        (
            MarginalKind::StandardGaussian
            | MarginalKind::UniformBallIsotropic
            | MarginalKind::UniformDisk2d,
            ProfileSource::LogConcave { c_paouris },
        ) => (logconcave_profile(c_paouris)?, Provenance::PaperConstant),
        (kind, source) => {
            return Err(Error::config(format!(
                "no certified profile for {} with source {source:?}",
                kind.name()
            )))
        }
    };
    Ok(CertifiedProfile {
        marginal: *spec,
        profile,
        provenance,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailCheck {
    pub eps: f64,
    pub radius: f64,
    pub empirical: f64,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityReport {
    pub passed: bool,
    pub cells_checked: usize,
    pub expected_per_cell: f64,
    pub min_cell_density: f64,
    pub max_cell_density: f64,
    pub lower_limit: f64,
    pub upper_limit: f64,
    pub tails: Vec<TailCheck>,
}

/// Histogram check of a profile against the 2D projection of `n` draws.
///
/// The square `[-R, R]^2` is cut into an 8x8 grid; cells lying entirely in
/// the radius-`R` disk must show density within `[1/(U(1+tau)), U(1+tau)]`,
/// and the tail beyond `t(eps)` must carry at most `eps + 3 sqrt(eps/n)` for
/// `eps` in `{0.1, 0.01}`.
pub fn empirical_density_check(
    sampler: &mut MarginalSampler,
    basis: (&[f64], &[f64]),
    profile: &BoundedProfile,
    n: usize,
) -> Result<DensityReport> {
    const GRID: usize = 8;
    const TAIL_EPS: [f64; 2] = [0.1, 0.01];

    let (b1, b2) = basis;
    check_orthonormal(b1, b2)?;
    if b1.len() != sampler.dim() {
        return Err(Error::input("basis dimension differs from the marginal"));
    }
    if n == 0 {
        return Err(Error::Underpowered("no samples".into()));
    }
    profile.validate()?;

    let r = profile.radius;
    let cell = 2.0 * r / GRID as f64;
    let inside: Vec<bool> = (0..GRID * GRID)
        .map(|idx| {
            let (i, j) = ((idx / GRID) as f64, (idx % GRID) as f64);
            let (x0, x1) = (-r + i * cell, -r + (i + 1.0) * cell);
            let (y0, y1) = (-r + j * cell, -r + (j + 1.0) * cell);
            let fx = x0.abs().max(x1.abs());
            let fy = y0.abs().max(y1.abs());
            fx * fx + fy * fy <= r * r
        })
        .collect();
    let cells_checked = inside.iter().filter(|&&b| b).count();
    if cells_checked == 0 {
        return Err(Error::input("no histogram cell lies inside the radius-R disk"));
    }

    let tail_radii: Vec<f64> = TAIL_EPS.iter().map(|&e| profile.tail_radius(e)).collect();
    let mut counts = vec![0u64; GRID * GRID];
    let mut in_disk = 0u64;
    let mut tail_hits = [0u64; 2];
    let mut x = vec![0.0; sampler.dim()];
    for _ in 0..n {
        sampler.sample_into(&mut x);
        let p = [dot(&x, b1), dot(&x, b2)];
        let rad = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if rad <= r {
            in_disk += 1;
        }
        for (hit, &t) in tail_hits.iter_mut().zip(&tail_radii) {
            if rad >= t {
                *hit += 1;
            }
        }
        let i = ((p[0] + r) / cell).floor();
        let j = ((p[1] + r) / cell).floor();
        if (0.0..GRID as f64).contains(&i) && (0.0..GRID as f64).contains(&j) {
            counts[i as usize * GRID + j as usize] += 1;
        }
    }

    let expected_per_cell = in_disk as f64 * cell * cell / (PI * r * r);
    if expected_per_cell < MIN_CELL_COUNT {
        return Err(Error::Underpowered(format!(
            "expected {expected_per_cell:.1} samples per histogram cell, need {MIN_CELL_COUNT}"
        )));
    }

    let u = profile.density_bound;
    let lower_limit = 1.0 / (u * (1.0 + DENSITY_SLACK));
    let upper_limit = u * (1.0 + DENSITY_SLACK);
    let densities: Vec<f64> = counts
        .iter()
        .zip(&inside)
        .filter(|(_, &ins)| ins)
        .map(|(&c, _)| c as f64 / (n as f64 * cell * cell))
        .collect();
    let min_cell_density = densities.iter().copied().fold(f64::INFINITY, f64::min);
    let max_cell_density = densities.iter().copied().fold(0.0, f64::max);
    let density_ok = min_cell_density >= lower_limit && max_cell_density <= upper_limit;

    let tails: Vec<TailCheck> = TAIL_EPS
        .iter()
        .zip(&tail_radii)
        .zip(&tail_hits)
        .map(|((&eps, &radius), &hits)| {
            let empirical = hits as f64 / n as f64;
            let limit = eps + 3.0 * (eps / n as f64).sqrt();
            TailCheck {
                eps,
                radius,
                empirical,
                limit,
                passed: empirical <= limit,
            }
        })
        .collect();

    Ok(DensityReport {
        passed: density_ok && tails.iter().all(|t| t.passed),
        cells_checked,
        expected_per_cell,
        min_cell_density,
        max_cell_density,
        lower_limit,
        upper_limit,
        tails,
    })
}
