//! Vectors, angles and the angle/disagreement conversions for bounded
//! marginals.

use std::f64::consts::PI;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance below which two unit vectors count as parallel.
pub const PARALLEL_TOLERANCE: f64 = 1e-12;

/// Tolerance on orthonormality of a supplied 2D basis.
pub const BASIS_TOLERANCE: f64 = 1e-10;

/// Sign with `sign(0) = +1`. Every label and every error count in the crate
/// goes through this.
pub fn sign_of(t: f64) -> Result<f64> {
    if !t.is_finite() {
        return Err(Error::input(format!("sign of non-finite value {t}")));
    }
    Ok(sign_unchecked(t))
}

/// [`sign_of`] for values already known to be finite.
#[inline]
pub fn sign_unchecked(t: f64) -> f64 {
    if t >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Direction of Euclidean norm one in `R^d`, `d >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Normalises `coords`. Rejects empty, zero and non-finite input.
    pub fn new(mut coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::input("unit vector needs dimension >= 1"));
        }
        let n = norm(&coords);
        if !n.is_finite() || n == 0.0 {
            return Err(Error::input(format!("cannot normalise vector of norm {n}")));
        }
        coords.iter_mut().for_each(|c| *c /= n);
        Ok(Self(coords))
    }

    /// Standard basis vector `e_{axis}` (zero based).
    pub fn basis(dim: usize, axis: usize) -> Result<Self> {
        if axis >= dim {
            return Err(Error::input(format!("axis {axis} out of range for dimension {dim}")));
        }
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Ok(Self(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|c| -c).collect())
    }

    /// Halfspace prediction `sign(<w, x>)`.
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        sign_unchecked(dot(&self.0, x))
    }
}

impl Deref for UnitVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for UnitVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        UnitVector::new(v)
    }
}

impl From<UnitVector> for Vec<f64> {
    fn from(v: UnitVector) -> Vec<f64> {
        v.0
    }
}

/// Angle in `[0, pi]` between two nonzero vectors.
pub fn angle_between(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::input(format!("dimension mismatch {} vs {}", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::input("angle with the zero vector is undefined"));
    }
    let c = (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(c.acos())
}

/// Coordinates of `x` in the orthonormal pair `(b1, b2)`.
pub fn project_to_2d(x: &[f64], b1: &[f64], b2: &[f64]) -> Result<[f64; 2]> {
    check_orthonormal(b1, b2)?;
    if x.len() != b1.len() {
        return Err(Error::input("point and basis dimensions differ"));
    }
    Ok([dot(x, b1), dot(x, b2)])
}

pub(crate) fn check_orthonormal(b1: &[f64], b2: &[f64]) -> Result<()> {
    if b1.len() != b2.len() {
        return Err(Error::input("basis vectors differ in dimension"));
    }
    let (n1, n2, c) = (norm(b1), norm(b2), dot(b1, b2));
    if (n1 - 1.0).abs() > BASIS_TOLERANCE
        || (n2 - 1.0).abs() > BASIS_TOLERANCE
        || c.abs() > BASIS_TOLERANCE
    {
        return Err(Error::input(format!(
            "basis not orthonormal (norms {n1}, {n2}; inner product {c})"
        )));
    }
    Ok(())
}

/// Gram-Schmidt on `(u, v)`: returns `(u, v_perp / |v_perp|)`.
pub fn orthonormal_basis_of_span(u: &UnitVector, v: &UnitVector) -> Result<(UnitVector, UnitVector)> {
    if u.dim() != v.dim() {
        return Err(Error::input("dimension mismatch"));
    }
    let c = dot(u, v);
    if c.abs() >= 1.0 - PARALLEL_TOLERANCE {
        return Err(Error::DegenerateSpan(c.abs()));
    }
    let mut perp: Vec<f64> = v.iter().zip(u.iter()).map(|(vi, ui)| vi - c * ui).collect();
    // second pass keeps the pair orthogonal to rounding
    let c2 = dot(&perp, u);
    perp.iter_mut().zip(u.iter()).for_each(|(p, ui)| *p -= c2 * ui);
    Ok((u.clone(), UnitVector::new(perp)?))
}

/// Concentration radius `t(eps)` of a bounded profile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailRadius {
    /// `t(eps) = r` for every `eps` (compactly supported marginals).
    Constant { radius: f64 },
    /// `t(eps) = c ln(1/eps) + 2c`, the isotropic log-concave bound.
    Paouris { c: f64 },
    /// `t(eps) = sqrt(2 ln(1/eps))`, exact for the norm of a 2D standard
    /// Gaussian.
    GaussianNorm,
}

impl TailRadius {
    pub fn eval(&self, eps: f64) -> f64 {
        match *self {
            TailRadius::Constant { radius } => radius,
            TailRadius::Paouris { c } => c * (1.0 / eps).ln() + 2.0 * c,
            TailRadius::GaussianNorm => (2.0 * (1.0 / eps).ln()).max(0.0).sqrt(),
        }
    }
}

/// `(U, R, t)` bounds on every 2D projection of an isotropic marginal:
/// density at most `U` everywhere, at least `1/U` on the radius-`R` disk,
/// and tail mass at most `eps` beyond radius `t(eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundedProfile {
    pub density_bound: f64,
    pub radius: f64,
    pub tail: TailRadius,
}

impl BoundedProfile {
    pub fn new(density_bound: f64, radius: f64, tail: TailRadius) -> Result<Self> {
        let p = Self {
            density_bound,
            radius,
            tail,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (u, r) = (self.density_bound, self.radius);
        if !(u.is_finite() && r.is_finite() && r > 0.0) {
            return Err(Error::input(format!("profile needs finite U and R > 0 (U={u}, R={r})")));
        }
        if u < 1.0 {
            return Err(Error::input(format!("profile density bound U={u} must be >= 1")));
        }
        match self.tail {
            TailRadius::Constant { radius } if !(radius > 0.0) => {
                Err(Error::input("constant tail radius must be positive"))
            }
            TailRadius::Paouris { c } if !(c > 0.0) => {
                Err(Error::input("Paouris constant must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Whether some probability density can meet the bounds: a density of at
    /// least `1/U` on the radius-`R` disk already puts mass `pi R^2 / U`
    /// there.
    pub fn is_realisable(&self) -> bool {
        PI * self.radius * self.radius <= self.density_bound * (1.0 + 1e-12)
    }

    pub fn tail_radius(&self, eps: f64) -> f64 {
        self.tail.eval(eps)
    }
}

/// Lower bound `(R^2/U) theta` on the disagreement of two halfspaces at
/// angle `theta`.
pub fn error_lower_bound_from_angle(theta: f64, profile: &BoundedProfile) -> Result<f64> {
    check_angle(theta)?;
    Ok(profile.radius * profile.radius / profile.density_bound * theta)
}

/// Upper bound `U t(eps)^2 theta + eps` on the disagreement of two
/// halfspaces at angle `theta`.
pub fn error_upper_bound_from_angle(theta: f64, eps: f64, profile: &BoundedProfile) -> Result<f64> {
    check_angle(theta)?;
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::input(format!("eps = {eps} outside (0, 1]")));
    }
    let t = profile.tail_radius(eps);
    Ok(profile.density_bound * t * t * theta + eps)
}

fn check_angle(theta: f64) -> Result<()> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::input(format!("angle {theta} outside [0, pi]")));
    }
    Ok(())
}

/// Unit vector at angle `theta` from `from`, rotating towards `towards`
/// (which must be orthogonal to `from`).
pub fn rotate_towards(from: &UnitVector, towards: &UnitVector, theta: f64) -> Result<UnitVector> {
    let (c, s) = (theta.cos(), theta.sin());
    UnitVector::new(from.iter().zip(towards.iter()).map(|(a, b)| c * a + s * b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(d: usize, i: usize) -> UnitVector {
        UnitVector::basis(d, i).unwrap()
    }

    #[test]
    fn sign_convention() {
        assert_eq!(sign_of(0.0).unwrap(), 1.0);
        assert_eq!(sign_of(-0.0).unwrap(), 1.0);
        assert_eq!(sign_of(-3.2).unwrap(), -1.0);
        assert_eq!(sign_of(2.5).unwrap(), 1.0);
        assert!(sign_of(f64::NAN).is_err());
        assert!(sign_of(f64::INFINITY).is_err());
    }

    #[test]
    fn angles_of_axes() {
        assert_eq!(angle_between(&e(3, 0), &e(3, 0)).unwrap(), 0.0);
        assert!((angle_between(&e(3, 0), &e(3, 1)).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((angle_between(&e(3, 0), &e(3, 0).negated()).unwrap() - PI).abs() < 1e-15);
        assert!(angle_between(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn near_parallel_angle_is_clipped() {
        let u = [1.0, 1e-9];
        let v = [1.0, 1e-9 + 1e-17];
        let a = angle_between(&u, &v).unwrap();
        assert!(a.is_finite() && a >= 0.0);
    }

    #[test]
    fn projection_examples() {
        let (b1, b2) = (e(3, 0), e(3, 1));
        assert_eq!(project_to_2d(&e(3, 0), &b1, &b2).unwrap(), [1.0, 0.0]);
        assert_eq!(project_to_2d(&e(3, 2), &b1, &b2).unwrap(), [0.0, 0.0]);
        assert_eq!(project_to_2d(&[1.0, 1.0, 1.0], &b1, &b2).unwrap(), [1.0, 1.0]);
        assert!(project_to_2d(&[1.0, 0.0, 0.0], &b1, &[1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn gram_schmidt_examples() {
        let (b1, b2) = orthonormal_basis_of_span(&e(2, 0), &e(2, 1)).unwrap();
        assert_eq!((b1, b2), (e(2, 0), e(2, 1)));

        let diag = UnitVector::new(vec![1.0, 1.0]).unwrap();
        let (b1, b2) = orthonormal_basis_of_span(&e(2, 0), &diag).unwrap();
        assert_eq!(b1, e(2, 0));
        assert!(b2[0].abs() < 1e-15 && (b2[1] - 1.0).abs() < 1e-15);

        assert!(matches!(
            orthonormal_basis_of_span(&e(2, 0), &e(2, 0)),
            Err(Error::DegenerateSpan(_))
        ));
    }

    fn disk_profile() -> BoundedProfile {
        BoundedProfile::new(4.0 * PI, 2.0, TailRadius::Constant { radius: 2.0 }).unwrap()
    }

    #[test]
    fn lower_bound_examples() {
        let unit = BoundedProfile::new(1.0, 1.0, TailRadius::Constant { radius: 1.0 }).unwrap();
        assert_eq!(error_lower_bound_from_angle(0.0, &disk_profile()).unwrap(), 0.0);
        // R^2/U = 4 / (4 pi); times pi/2
        let v = error_lower_bound_from_angle(PI / 2.0, &disk_profile()).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        let v = error_lower_bound_from_angle(0.1, &unit).unwrap();
        assert!((v - 0.1).abs() < 1e-15);
        assert!(error_lower_bound_from_angle(4.0, &unit).is_err());
    }

    #[test]
    fn upper_bound_examples() {
        let p = BoundedProfile::new(1.0, 0.5, TailRadius::Constant { radius: 2.0 }).unwrap();
        assert_eq!(error_upper_bound_from_angle(0.0, 0.3, &p).unwrap(), 0.3);
        let v = error_upper_bound_from_angle(0.01, 0.1, &p).unwrap();
        assert!((v - 0.14).abs() < 1e-15);

        let lc = BoundedProfile::new(
            std::f64::consts::E * 131072.0,
            1.0 / 9.0,
            TailRadius::Paouris { c: 16.0 },
        )
        .unwrap();
        let t = 16.0 * 20f64.ln() + 32.0;
        let expected = lc.density_bound * t * t * 0.05 + 0.05;
        let v = error_upper_bound_from_angle(0.05, 0.05, &lc).unwrap();
        assert!((v - expected).abs() <= 1e-9 * expected);
        assert!(error_upper_bound_from_angle(0.1, 0.0, &p).is_err());
    }

    #[test]
    fn profile_validation() {
        assert!(BoundedProfile::new(0.5, 0.1, TailRadius::GaussianNorm).is_err());
        assert!(BoundedProfile::new(2.0, 0.0, TailRadius::GaussianNorm).is_err());
        // disk radius 2 with U = 4 pi is exactly realisable
        assert!(disk_profile().is_realisable());
        let p = BoundedProfile::new(4.0 * PI, 2.1, TailRadius::GaussianNorm).unwrap();
        assert!(!p.is_realisable());
    }

    #[test]
    fn tail_radius_is_non_increasing() {
        for tail in [TailRadius::Paouris { c: 3.0 }, TailRadius::GaussianNorm] {
            let mut prev = f64::INFINITY;
            for k in 1..100 {
                let t = tail.eval(k as f64 / 100.0);
                assert!(t <= prev);
                prev = t;
            }
        }
        assert!((TailRadius::Paouris { c: 1.0 }.eval((-1f64).exp()) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn unit_vector_rejects_zero() {
        assert!(UnitVector::new(vec![0.0, 0.0]).is_err());
        assert!(UnitVector::new(vec![]).is_err());
        let v = UnitVector::new(vec![3.0, 4.0]).unwrap();
        assert!((norm(&v) - 1.0).abs() < 1e-15);
    }
}
