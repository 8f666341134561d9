//! Oriented spheres, planes and cones, and their lifts to Minkowski space.
//!
//! An or-sphere is a center with a signed radius (positive when the normals
//! point toward the center); points are spheres of radius zero. An or-plane is
//! stored in Hesse normal form `<n, x> + h = 0`. Oriented contact between the
//! two is the linear relation `<n, c> + h = r`.
//!
//! In the cyclographic model a sphere `(c, r)` becomes the point `(c, r)` of
//! R^{3,1} with signature `(+,+,+,-)` and a plane becomes the isotropic
//! hyperplane `<<N, X>> + h = 0` with `N = (n, 1)`.

use std::f64::consts::TAU;

use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|n| = 1` for plane consumers outside the optimizer.
pub const EPS_UNIT: f64 = 1e-9;
/// Tolerance on `<<g, g>> = 0`, relative to the Euclidean norm of `g`.
pub const EPS_ISO: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrSphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrPlane {
    pub normal: Vector3<f64>,
    pub intercept: f64,
}

/// A point of R^{3,1}; the lift of an or-sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinkowskiPoint(pub Vector4<f64>);

/// Hyperplane `<<N, X>> + h = 0` with isotropic normal `N = (n, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsotropicHyperplane {
    pub normal: Vector4<f64>,
    pub offset: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LineKind {
    SpaceLike,
    LightLike,
    TimeLike,
}

impl OrSphere {
    pub fn new(center: Vector3<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn point(p: Vector3<f64>) -> Self {
        Self::new(p, 0.0)
    }

    pub fn lift(&self) -> MinkowskiPoint {
        MinkowskiPoint(Vector4::new(
            self.center.x,
            self.center.y,
            self.center.z,
            self.radius,
        ))
    }

    /// Point where this sphere touches a plane with unit normal `n`.
    pub fn contact_point(&self, n: &Vector3<f64>) -> Vector3<f64> {
        self.center - n * self.radius
    }
}

impl OrPlane {
    pub fn new(normal: Vector3<f64>, intercept: f64) -> Self {
        Self { normal, intercept }
    }

    /// The or-plane through `p` with unit normal `n`.
    pub fn through(p: &Vector3<f64>, n: Vector3<f64>) -> Self {
        Self::new(n, -n.dot(p))
    }

    pub fn signed_distance(&self, x: &Vector3<f64>) -> f64 {
        self.normal.dot(x) + self.intercept
    }

    pub fn is_unit(&self) -> bool {
        (self.normal.norm() - 1.0).abs() <= EPS_UNIT
    }

    pub fn lift(&self) -> IsotropicHyperplane {
        let n = self.normal;
        IsotropicHyperplane {
            normal: Vector4::new(n.x, n.y, n.z, 1.0),
            offset: self.intercept,
        }
    }
}

impl IsotropicHyperplane {
    /// `<<N, X>> + h`; zero exactly when the cyclographic image of `x` is in
    /// oriented contact with the plane.
    pub fn evaluate(&self, x: &MinkowskiPoint) -> f64 {
        minkowski_inner(&self.normal, &x.0) + self.offset
    }
}

/// Inner product of signature `(+,+,+,-)`.
pub fn minkowski_inner(a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
    a.x * b.x + a.y * b.y + a.z * b.z - a.w * b.w
}

pub fn classify_direction(g: &Vector4<f64>) -> Result<LineKind> {
    let euclid = g.norm_squared();
    if euclid == 0.0 {
        return Err(Error::InvalidInput("zero direction vector".into()));
    }
    let q = minkowski_inner(g, g);
    Ok(if q.abs() <= EPS_ISO * euclid {
        LineKind::LightLike
    } else if q > 0.0 {
        LineKind::SpaceLike
    } else {
        LineKind::TimeLike
    })
}

/// `<n, c> + h - r`; vanishes iff sphere and plane are in oriented contact.
pub fn contact_residual(s: &OrSphere, p: &OrPlane) -> f64 {
    p.normal.dot(&s.center) + p.intercept - s.radius
}

/// Laguerre d-offsetting: adds `d` to sphere radii and plane intercepts.
pub trait Offset {
    fn offset(&self, d: f64) -> Self;
}

impl Offset for OrSphere {
    fn offset(&self, d: f64) -> Self {
        Self::new(self.center, self.radius + d)
    }
}

impl Offset for OrPlane {
    fn offset(&self, d: f64) -> Self {
        Self::new(self.normal, self.intercept + d)
    }
}

/// The linear family `s(t) = (1-t) s0 + t s1` spanned by two or-spheres, whose
/// common tangent planes envelope an or-cone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SphereFamily {
    s0: OrSphere,
    s1: OrSphere,
}

impl SphereFamily {
    /// Fails unless `|c0 - c1|^2 > (r0 - r1)^2`.
    pub fn new(s0: OrSphere, s1: OrSphere) -> Result<Self> {
        let dist_sq = (s1.center - s0.center).norm_squared();
        let radius_diff_sq = (s1.radius - s0.radius).powi(2);
        if dist_sq > radius_diff_sq {
            Ok(Self { s0, s1 })
        } else {
            Err(Error::Admissibility {
                dist_sq,
                radius_diff_sq,
            })
        }
    }

    pub fn s0(&self) -> &OrSphere {
        &self.s0
    }

    pub fn s1(&self) -> &OrSphere {
        &self.s1
    }

    pub fn at(&self, t: f64) -> OrSphere {
        OrSphere::new(
            self.s0.center * (1.0 - t) + self.s1.center * t,
            self.s0.radius * (1.0 - t) + self.s1.radius * t,
        )
    }

    pub fn normal_circle(&self) -> NormalCircle {
        NormalCircle::new(
            self.s1.center - self.s0.center,
            self.s1.radius - self.s0.radius,
        )
    }

    /// Tangent or-plane whose normal sits at angle `phi` on the normal circle.
    pub fn tangent_plane(&self, phi: f64) -> OrPlane {
        let n = self.normal_circle().normal(phi);
        OrPlane::new(n, self.s0.radius - n.dot(&self.s0.center))
    }
}

/// The circle `{n : |n| = 1, <n, axis> = rise}` of unit normals of the common
/// tangent planes of a sphere pair, with a deterministic angular parameter.
///
/// The in-plane basis starts from the coordinate axis on which the unit axis
/// has its smallest absolute component (first such axis on ties):
/// `b1 = normalize(e_k - <e_k, a> a)`, `b2 = a x b1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalCircle {
    axis: Vector3<f64>,
    height: f64,
    radius: f64,
    b1: Vector3<f64>,
    b2: Vector3<f64>,
}

impl NormalCircle {
    /// `delta_c = c1 - c0`, `delta_r = r1 - r0`; requires `|delta_c| > |delta_r|`.
    pub fn new(delta_c: Vector3<f64>, delta_r: f64) -> Self {
        let d = delta_c.norm();
        let axis = delta_c / d;
        let height = delta_r / d;
        let radius = (1.0 - height * height).max(0.0).sqrt();
        let mut k = 0;
        for i in 1..3 {
            if axis[i].abs() < axis[k].abs() {
                k = i;
            }
        }
        let mut e = Vector3::zeros();
        e[k] = 1.0;
        let b1 = (e - axis * axis[k]).normalize();
        let b2 = axis.cross(&b1);
        Self {
            axis,
            height,
            radius,
            b1,
            b2,
        }
    }

    pub fn normal(&self, phi: f64) -> Vector3<f64> {
        self.axis * self.height + (self.b1 * phi.cos() + self.b2 * phi.sin()) * self.radius
    }

    /// Angle of the projection of `n` onto the circle plane, in `(-pi, pi]`.
    pub fn angle_of(&self, n: &Vector3<f64>) -> f64 {
        n.dot(&self.b2).atan2(n.dot(&self.b1))
    }
}

/// `k` common tangent planes with normals sampled uniformly on the normal
/// circle, starting at angle 0.
pub fn common_tangent_normals(fam: &SphereFamily, k: usize) -> Vec<OrPlane> {
    (0..k)
        .map(|i| fam.tangent_plane(TAU * i as f64 / k as f64))
        .collect()
}

/// Vertex of the or-cone; `None` for cylinders and lines (`r0 == r1`).
pub fn cone_vertex(fam: &SphereFamily) -> Option<Vector3<f64>> {
    cone_vertex_of(&fam.s0, &fam.s1)
}

/// Center of the radius-zero member of the linear family through `s0`, `s1`,
/// without the admissibility check.
pub fn cone_vertex_of(s0: &OrSphere, s1: &OrSphere) -> Option<Vector3<f64>> {
    let (r0, r1) = (s0.radius, s1.radius);
    if r0 == r1 {
        return None;
    }
    let t = r0 / (r0 - r1);
    Some(s0.center * (1.0 - t) + s1.center * t)
}
