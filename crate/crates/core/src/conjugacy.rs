//! L-conjugate directions with respect to an attached tangent sphere
//! congruence.
//!
//! Tangent directions are given as coordinates in the orthonormal principal
//! basis `(t1, t2)`. With `rho_i = 1 / kappa_i`, two directions `a`, `b` are
//! L-conjugate when `(rho2 - r) a1 b1 + (rho1 - r) a2 b2 = 0`; the contact
//! curve (pseudo) variant uses `(kappa1 - r kappa1^2)` and
//! `(kappa2 - r kappa2^2)` instead.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Vector2, Vector4};

use crate::error::{Error, Result};
use crate::geom::minkowski_inner;
use crate::surface::PrincipalFrame;

/// Relative tolerance for umbilic, parabolic and flat classification.
pub const EPS_CLASS: f64 = 1e-8;

/// Sphere radius as a function of the surface parameters.
#[derive(Clone)]
pub struct RadiusFn {
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    constant: Option<f64>,
}

impl RadiusFn {
    pub fn constant(r: f64) -> Self {
        Self {
            f: Arc::new(move |_, _| r),
            constant: Some(r),
        }
    }

    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            constant: None,
        }
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        (self.f)(u, v)
    }

    pub fn as_constant(&self) -> Option<f64> {
        self.constant
    }
}

impl fmt::Debug for RadiusFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.constant {
            Some(r) => write!(f, "RadiusFn::constant({r})"),
            None => f.write_str("RadiusFn(<fn>)"),
        }
    }
}

/// How the attached congruence assigns a radius to each contact element.
#[derive(Clone, Debug)]
pub enum CongruenceSpec {
    /// `r = tau * min(rho1, rho2)` with `0 < tau < 1`.
    TauMin { tau: f64 },
    /// Prescribed radii, required to stay in `(0, min(rho1, rho2))`.
    Explicit(RadiusFn),
}

impl CongruenceSpec {
    pub fn tau(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Self::TauMin { tau })
        } else {
            Err(Error::config("tau", format!("{tau} is outside (0, 1)")))
        }
    }

    pub fn constant(r: f64) -> Self {
        Self::Explicit(RadiusFn::constant(r))
    }

    /// Fixed radius shared by every element, if any.
    pub fn constant_radius(&self) -> Option<f64> {
        match self {
            Self::TauMin { .. } => None,
            Self::Explicit(f) => f.as_constant(),
        }
    }

    /// Radius at `(u, v)` where the principal frame is `frame`.
    pub fn radius(&self, frame: &PrincipalFrame, u: f64, v: f64) -> Result<f64> {
        let limit = 1.0 / frame.kappa1;
        match self {
            Self::TauMin { tau } => Ok(tau * limit),
            Self::Explicit(f) => {
                let radius = f.eval(u, v);
                if radius > 0.0 && radius < limit {
                    Ok(radius)
                } else {
                    Err(Error::SingularRadius { u, v, radius, limit })
                }
            }
        }
    }
}

/// Second fundamental form of a lifted net relative to its attached
/// isotropic hyperplanes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftedFormCoeffs {
    pub l: f64,
    pub m: f64,
    pub n: f64,
}

impl LiftedFormCoeffs {
    /// The symmetric bilinear form on parameter-space coordinates.
    pub fn form(&self, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
        self.l * a.x * b.x + self.m * (a.x * b.y + a.y * b.x) + self.n * a.y * b.y
    }
}

/// Second-order jet of a lifted sphere net `S(u, v)` in R^{3,1} together
/// with the isotropic normal of the attached hyperplane at the point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftedJet {
    pub s_uu: Vector4<f64>,
    pub s_uv: Vector4<f64>,
    pub s_vv: Vector4<f64>,
    pub normal: Vector4<f64>,
}

/// Coefficients in an orthonormal principal parameterization.
pub fn lifted_form(frame: &PrincipalFrame, r: f64) -> LiftedFormCoeffs {
    let (k1, k2) = (frame.kappa1, frame.kappa2);
    LiftedFormCoeffs {
        l: k1 - r * k1 * k1,
        m: 0.0,
        n: k2 - r * k2 * k2,
    }
}

/// Coefficients `<<S_uu, N>>`, `<<S_uv, N>>`, `<<S_vv, N>>` for an arbitrary
/// parameterization.
pub fn lifted_form_general(jet: &LiftedJet) -> LiftedFormCoeffs {
    LiftedFormCoeffs {
        l: minkowski_inner(&jet.s_uu, &jet.normal),
        m: minkowski_inner(&jet.s_uv, &jet.normal),
        n: minkowski_inner(&jet.s_vv, &jet.normal),
    }
}

fn radius_coeffs(frame: &PrincipalFrame, r: f64) -> (f64, f64, f64) {
    let (rho1, rho2) = (frame.rho1(), frame.rho2());
    (rho2 - r, rho1 - r, rho1.abs().max(rho2.abs()))
}

fn pseudo_coeffs(frame: &PrincipalFrame, r: f64) -> (f64, f64, f64) {
    let (k1, k2) = (frame.kappa1, frame.kappa2);
    (k1 - r * k1 * k1, k2 - r * k2 * k2, k1.abs().max(k2.abs()))
}

/// `(rho2 - r) a1 b1 + (rho1 - r) a2 b2`.
pub fn lconj_form(frame: &PrincipalFrame, r: f64, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let (p, q, _) = radius_coeffs(frame, r);
    p * a.x * b.x + q * a.y * b.y
}

/// `(kappa1 - r kappa1^2) a1 b1 + (kappa2 - r kappa2^2) a2 b2`.
pub fn pseudo_form(frame: &PrincipalFrame, r: f64, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let (p, q, _) = pseudo_coeffs(frame, r);
    p * a.x * b.x + q * a.y * b.y
}

/// Unit direction `b` with `(rho2 - r) a1 b1 + (rho1 - r) a2 b2 = 0`.
pub fn lconj_partner(frame: &PrincipalFrame, r: f64, a: &Vector2<f64>) -> Result<Vector2<f64>> {
    let (p, q, scale) = radius_coeffs(frame, r);
    partner(p, q, scale, a)
}

/// Unit direction `b` conjugate to `a` under the contact-curve condition.
pub fn pseudo_lconj_partner(
    frame: &PrincipalFrame,
    r: f64,
    a: &Vector2<f64>,
) -> Result<Vector2<f64>> {
    let (p, q, scale) = pseudo_coeffs(frame, r);
    partner(p, q, scale, a)
}

/// Solves `p a1 b1 + q a2 b2 = 0` for a unit `b`. When `a` is the
/// asymptotic direction of a parabolic element every `b` qualifies, and the
/// principal direction of the vanishing coefficient is returned.
fn partner(p: f64, q: f64, scale: f64, a: &Vector2<f64>) -> Result<Vector2<f64>> {
    let na = a.norm();
    if !(na > 0.0) || !na.is_finite() {
        return Err(Error::InvalidInput("partner of a zero direction".into()));
    }
    let tol = EPS_CLASS * scale;
    if p.abs() <= tol && q.abs() <= tol {
        return Err(Error::Flat);
    }
    let a = a / na;
    let b = Vector2::new(q * a.y, -p * a.x);
    if b.norm() <= tol {
        return Ok(if p.abs() <= q.abs() {
            Vector2::x()
        } else {
            Vector2::y()
        });
    }
    Ok(canonical(b.normalize()))
}

/// Flips `b` so that its first nonzero component is positive.
pub fn canonical(b: Vector2<f64>) -> Vector2<f64> {
    let lead = if b.x.abs() > 1e-14 * b.norm() { b.x } else { b.y };
    if lead < 0.0 {
        -b
    } else {
        b
    }
}

/// Blaschke's dual curvature radius `rho2 cos^2 phi + rho1 sin^2 phi` for
/// the ruling conjugate to `cos(phi) t1 + sin(phi) t2`.
pub fn dual_radius(frame: &PrincipalFrame, phi: f64) -> f64 {
    frame.rho2() * phi.cos().powi(2) + frame.rho1() * phi.sin().powi(2)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContactClass {
    LHyperbolic,
    LParabolic,
    LElliptic,
    LFlat,
}

/// Dual curvature radii relative to the congruence radius `r`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualCurvature {
    pub rho_s1: f64,
    pub rho_s2: f64,
    pub lambda: f64,
    /// Local length scale for classification tolerances.
    pub scale: f64,
}

impl DualCurvature {
    pub fn new(rho_s1: f64, rho_s2: f64, scale: f64) -> Self {
        Self {
            rho_s1,
            rho_s2,
            lambda: rho_s1 * rho_s2,
            scale,
        }
    }

    pub fn from_frame(frame: &PrincipalFrame, r: f64) -> Self {
        let (p, q, scale) = radius_coeffs(frame, r);
        Self::new(p, q, scale)
    }

    /// `rho_s1 cos^2 phi + rho_s2 sin^2 phi`.
    pub fn radius_at(&self, phi: f64) -> f64 {
        self.rho_s1 * phi.cos().powi(2) + self.rho_s2 * phi.sin().powi(2)
    }

    pub fn classify(&self) -> ContactClass {
        classify_contact(self, self.scale)
    }
}

pub fn classify_contact(dc: &DualCurvature, scale: f64) -> ContactClass {
    let tol = EPS_CLASS * scale;
    let zero1 = dc.rho_s1.abs() <= tol;
    let zero2 = dc.rho_s2.abs() <= tol;
    match (zero1, zero2) {
        (true, true) => ContactClass::LFlat,
        (true, false) | (false, true) => ContactClass::LParabolic,
        _ if dc.lambda > 0.0 => ContactClass::LElliptic,
        _ => ContactClass::LHyperbolic,
    }
}

/// Angles from `t1`, in `[0, pi/2]`; the mirrored `-phi` is implied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpecialAngles {
    pub asymptotic: Option<f64>,
    pub characteristic: Option<f64>,
}

pub fn special_angles(dc: &DualCurvature) -> Result<SpecialAngles> {
    let none = SpecialAngles {
        asymptotic: None,
        characteristic: None,
    };
    match dc.classify() {
        ContactClass::LFlat => Err(Error::Flat),
        ContactClass::LParabolic => {
            let phi = if dc.rho_s2.abs() <= dc.rho_s1.abs() {
                FRAC_PI_2
            } else {
                0.0
            };
            Ok(SpecialAngles {
                asymptotic: Some(phi),
                ..none
            })
        }
        ContactClass::LHyperbolic => Ok(SpecialAngles {
            asymptotic: Some((-dc.rho_s1 / dc.rho_s2).sqrt().atan()),
            ..none
        }),
        ContactClass::LElliptic => Ok(SpecialAngles {
            characteristic: Some((dc.rho_s1 / dc.rho_s2).sqrt().atan()),
            ..none
        }),
    }
}

/// Radius `(rho1 + rho2) / 2` of the mid-sphere congruence.
pub fn midsphere_radius(frame: &PrincipalFrame) -> f64 {
    0.5 * (frame.rho1() + frame.rho2())
}
