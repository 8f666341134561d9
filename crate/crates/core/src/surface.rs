//! Tensor-product B-spline reference surfaces.
//!
//! Evaluation returns the full second-order jet; principal frames come from
//! the shape operator of the first and second fundamental forms, with the
//! normal oriented so that `kappa1 + kappa2 > 0`.

use std::path::Path;

use log::warn;
use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::conjugacy::EPS_CLASS;
use crate::error::{Error, Result};

/// Regularity threshold on `|f_u x f_v| / (|f_u| |f_v|)`.
pub const EPS_REG: f64 = 1e-10;

const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BSplineSurface {
    degree_u: usize,
    degree_v: usize,
    knots_u: Vec<f64>,
    knots_v: Vec<f64>,
    n_u: usize,
    n_v: usize,
    /// Row-major `n_u x n_v`.
    control: Vec<Vector3<f64>>,
}

/// On-disk schema. `control_points[i][j]` is the control point of row `i`
/// (u index) and column `j` (v index).
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceFile {
    #[serde(default = "default_format_version")]
    pub format_version: u32,
    pub degree_u: usize,
    pub degree_v: usize,
    pub knots_u: Vec<f64>,
    pub knots_v: Vec<f64>,
    pub control_points: Vec<Vec<[f64; 3]>>,
}

fn default_format_version() -> u32 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceJet2 {
    pub f: Vector3<f64>,
    pub f_u: Vector3<f64>,
    pub f_v: Vector3<f64>,
    pub f_uu: Vector3<f64>,
    pub f_uv: Vector3<f64>,
    pub f_vv: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrincipalFrame {
    pub t1: Vector3<f64>,
    pub t2: Vector3<f64>,
    pub n: Vector3<f64>,
    pub kappa1: f64,
    pub kappa2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub foot: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// Newton failed to converge and the sampled seed was returned.
    pub fallback: bool,
}

impl BSplineSurface {
    pub fn new(
        degree_u: usize,
        degree_v: usize,
        knots_u: Vec<f64>,
        knots_v: Vec<f64>,
        control: Vec<Vec<Vector3<f64>>>,
    ) -> Result<Self> {
        let n_u = check_knots("knots_u", degree_u, &knots_u)?;
        let n_v = check_knots("knots_v", degree_v, &knots_v)?;
        if control.len() != n_u || control.iter().any(|row| row.len() != n_v) {
            return Err(Error::InvalidInput(format!(
                "control grid must be {n_u} x {n_v} for the given knots and degrees"
            )));
        }
        let control: Vec<_> = control.into_iter().flatten().collect();
        if control.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidInput("non-finite control point".into()));
        }
        Ok(Self {
            degree_u,
            degree_v,
            knots_u,
            knots_v,
            n_u,
            n_v,
            control,
        })
    }

    pub fn from_file_data(data: SurfaceFile) -> Result<Self> {
        if data.format_version != 1 {
            return Err(Error::InvalidInput(format!(
                "unsupported surface format_version {}",
                data.format_version
            )));
        }
        let control = data
            .control_points
            .into_iter()
            .map(|row| row.into_iter().map(Vector3::from).collect())
            .collect();
        Self::new(data.degree_u, data.degree_v, data.knots_u, data.knots_v, control)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_data(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file_data(&self) -> SurfaceFile {
        SurfaceFile {
            format_version: 1,
            degree_u: self.degree_u,
            degree_v: self.degree_v,
            knots_u: self.knots_u.clone(),
            knots_v: self.knots_v.clone(),
            control_points: self
                .control
                .chunks(self.n_v)
                .map(|row| row.iter().map(|p| [p.x, p.y, p.z]).collect())
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file_data()).expect("surface serializes")
    }

    /// Bicubic patch reproducing the elliptic paraboloid
    /// `z = a x^2 + b y^2` exactly over `[-hx, hx] x [-hy, hy]`, with `u = x`
    /// and `v = y`. Control points are the polar forms of the quadratic.
    pub fn elliptic_cap(a: f64, b: f64, hx: f64, hy: f64, spans: usize) -> Self {
        let degree = 3;
        let knots = |h: f64| {
            let mut k = vec![-h; degree];
            k.extend((0..=spans).map(|i| -h + 2.0 * h * i as f64 / spans as f64));
            k.extend(vec![h; degree]);
            k
        };
        let (ku, kv) = (knots(hx), knots(hy));
        let count = spans + degree;
        // polar forms of t and t^2 for a cubic: averages over knot triples
        let blossom = |k: &[f64], i: usize| {
            let (t1, t2, t3) = (k[i + 1], k[i + 2], k[i + 3]);
            ((t1 + t2 + t3) / 3.0, (t1 * t2 + t1 * t3 + t2 * t3) / 3.0)
        };
        let control = (0..count)
            .map(|i| {
                let (x, xx) = blossom(&ku, i);
                (0..count)
                    .map(|j| {
                        let (y, yy) = blossom(&kv, j);
                        Vector3::new(x, y, a * xx + b * yy)
                    })
                    .collect()
            })
            .collect();
        Self::new(degree, degree, ku, kv, control).expect("valid construction")
    }

    /// The surface used by the default pipeline run and the acceptance suite.
    pub fn builtin_cap() -> Self {
        Self::elliptic_cap(0.6, 0.2, 1.0, 1.0, 4)
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.degree_u, self.degree_v)
    }

    pub fn control_point(&self, i: usize, j: usize) -> Vector3<f64> {
        self.control[i * self.n_v + j]
    }

    pub fn grid_size(&self) -> (usize, usize) {
        (self.n_u, self.n_v)
    }

    pub fn domain(&self) -> Domain {
        Domain {
            u_min: self.knots_u[self.degree_u],
            u_max: self.knots_u[self.n_u],
            v_min: self.knots_v[self.degree_v],
            v_max: self.knots_v[self.n_v],
        }
    }

    pub fn point(&self, u: f64, v: f64) -> Result<Vector3<f64>> {
        Ok(self.evaluate_jet(u, v)?.f)
    }

    pub fn evaluate_jet(&self, u: f64, v: f64) -> Result<SurfaceJet2> {
        let dom = self.domain();
        let (u, v) = dom.admit(u, v).ok_or(Error::OutOfDomain { u, v })?;
        let (span_u, bu) = basis_derivs(self.degree_u, &self.knots_u, self.n_u, u);
        let (span_v, bv) = basis_derivs(self.degree_v, &self.knots_v, self.n_v, v);
        let mut d = [[Vector3::zeros(); 3]; 3];
        for a in 0..=self.degree_u {
            let row = span_u - self.degree_u + a;
            for b in 0..=self.degree_v {
                let col = span_v - self.degree_v + b;
                let p = self.control[row * self.n_v + col];
                for (k, dk) in d.iter_mut().enumerate() {
                    for (l, dkl) in dk.iter_mut().enumerate().take(3 - k) {
                        *dkl += p * (bu[k][a] * bv[l][b]);
                    }
                }
            }
        }
        Ok(SurfaceJet2 {
            f: d[0][0],
            f_u: d[1][0],
            f_v: d[0][1],
            f_uu: d[2][0],
            f_uv: d[1][1],
            f_vv: d[0][2],
        })
    }

    pub fn frame_at(&self, u: f64, v: f64) -> Result<PrincipalFrame> {
        principal_frame(&self.evaluate_jet(u, v)?).map_err(|e| e.located(u, v))
    }

    /// Closest point with a fresh `24 x 24` seed grid; see [`Projector`] to
    /// reuse the samples across many queries.
    pub fn closest_point(&self, x: &Vector3<f64>) -> Projection {
        Projector::new(self, Projector::DEFAULT_SAMPLES).project(x)
    }
}

/// Rectangular parameter domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl Domain {
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u_min && u <= self.u_max && v >= self.v_min && v <= self.v_max
    }

    pub fn clamp(&self, u: f64, v: f64) -> (f64, f64) {
        (u.clamp(self.u_min, self.u_max), v.clamp(self.v_min, self.v_max))
    }

    /// Clamps values within rounding distance of the boundary; `None` when
    /// the point is genuinely outside.
    fn admit(&self, u: f64, v: f64) -> Option<(f64, f64)> {
        let su = DOMAIN_SLACK * (self.u_max - self.u_min).max(1.0);
        let sv = DOMAIN_SLACK * (self.v_max - self.v_min).max(1.0);
        let inside = u >= self.u_min - su
            && u <= self.u_max + su
            && v >= self.v_min - sv
            && v <= self.v_max + sv;
        inside.then(|| self.clamp(u, v))
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(
            0.5 * (self.u_min + self.u_max),
            0.5 * (self.v_min + self.v_max),
        )
    }

    pub fn diagonal(&self) -> f64 {
        (self.u_max - self.u_min).hypot(self.v_max - self.v_min)
    }

    /// Maps `(u, v)` to `[0, 1]^2`.
    pub fn normalize(&self, u: f64, v: f64) -> (f64, f64) {
        (
            (u - self.u_min) / (self.u_max - self.u_min),
            (v - self.v_min) / (self.v_max - self.v_min),
        )
    }
}

fn check_knots(name: &str, degree: usize, knots: &[f64]) -> Result<usize> {
    let bad = |why: &str| Error::InvalidInput(format!("{name}: {why}"));
    if degree < 1 {
        return Err(bad("degree must be at least 1"));
    }
    if knots.len() < 2 * (degree + 1) {
        return Err(bad("too few knots"));
    }
    if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(bad("knots must be finite and nondecreasing"));
    }
    let m = knots.len();
    let (lo, hi) = (knots[0], knots[m - 1]);
    if knots[..=degree].iter().any(|&k| k != lo) || knots[m - degree - 1..].iter().any(|&k| k != hi)
    {
        return Err(bad("knot vector must be clamped"));
    }
    if hi <= lo {
        return Err(bad("empty parameter range"));
    }
    Ok(m - degree - 1)
}

/// Knot span index and the nonzero basis functions with their first two
/// derivatives at `t` (`ders[k][a]` is the k-th derivative of `N_{span-p+a}`).
fn basis_derivs(p: usize, knots: &[f64], n: usize, t: f64) -> (usize, [Vec<f64>; 3]) {
    let span = if t >= knots[n] {
        // last non-empty span
        let mut s = n - 1;
        while knots[s] == knots[s + 1] {
            s -= 1;
        }
        s
    } else {
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    };

    // triangular table of basis values and knot differences
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let nd = 2.min(p);
    let mut ders = [vec![0.0; p + 1], vec![0.0; p + 1], vec![0.0; p + 1]];
    for (j, d) in ders[0].iter_mut().enumerate() {
        *d = ndu[j][p];
    }
    let mut a = [vec![0.0; p + 1], vec![0.0; p + 1]];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for k in 1..=nd {
            let mut d = 0.0;
            let rk = r as isize - k as isize;
            let pk = p - k;
            if rk >= 0 {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk as isize { k - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                d += a[s2][k] * ndu[r][pk];
            }
            ders[k][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for k in 1..=nd {
        for d in ders[k].iter_mut() {
            *d *= factor;
        }
        factor *= (p - k) as f64;
    }
    (span, ders)
}

/// First and second fundamental form coefficients with the unit normal
/// `f_u x f_v / |f_u x f_v|`.
fn fundamental_forms(j: &SurfaceJet2) -> Result<(Matrix2<f64>, Matrix2<f64>, Vector3<f64>)> {
    let cross = j.f_u.cross(&j.f_v);
    let scale = j.f_u.norm() * j.f_v.norm();
    if !(cross.norm() > EPS_REG * scale) {
        return Err(Error::Irregular { u: f64::NAN, v: f64::NAN });
    }
    let n = cross.normalize();
    let first = Matrix2::new(
        j.f_u.dot(&j.f_u),
        j.f_u.dot(&j.f_v),
        j.f_u.dot(&j.f_v),
        j.f_v.dot(&j.f_v),
    );
    let second = Matrix2::new(
        j.f_uu.dot(&n),
        j.f_uv.dot(&n),
        j.f_uv.dot(&n),
        j.f_vv.dot(&n),
    );
    Ok((first, second, n))
}

/// Unit normal on the side where the mean curvature is nonnegative.
pub fn oriented_normal(j: &SurfaceJet2) -> Result<Vector3<f64>> {
    let (first, second, n) = fundamental_forms(j)?;
    Ok(if mean_curvature(&first, &second) < 0.0 { -n } else { n })
}

fn mean_curvature(first: &Matrix2<f64>, second: &Matrix2<f64>) -> f64 {
    let (e, f, g) = (first[(0, 0)], first[(0, 1)], first[(1, 1)]);
    let (l, m, n) = (second[(0, 0)], second[(0, 1)], second[(1, 1)]);
    (e * n - 2.0 * f * m + g * l) / (2.0 * (e * g - f * f))
}

/// Principal frame `(t1, t2, n)` with `kappa1 >= kappa2 > 0`, `t1 x t2 = n`,
/// and the first nonzero component of `t1` positive.
pub fn principal_frame(j: &SurfaceJet2) -> Result<PrincipalFrame> {
    let (first, mut second, mut n) = fundamental_forms(j)?;
    let mut h = mean_curvature(&first, &second);
    if h < 0.0 {
        n = -n;
        second = -second;
        h = -h;
    }
    let (e, f, g) = (first[(0, 0)], first[(0, 1)], first[(1, 1)]);
    let (l, m, nn) = (second[(0, 0)], second[(0, 1)], second[(1, 1)]);
    let k = (l * nn - m * m) / (e * g - f * f);
    let disc = (h * h - k).max(0.0).sqrt();
    let (kappa1, kappa2) = (h + disc, h - disc);
    let scale = kappa1.abs().max(kappa2.abs());
    let nan = f64::NAN;
    if !(kappa2 > EPS_CLASS * scale) {
        return Err(Error::CurvatureSign { u: nan, v: nan, kappa1, kappa2 });
    }
    if kappa1 - kappa2 <= EPS_CLASS * scale {
        return Err(Error::Umbilic { u: nan, v: nan, kappa1, kappa2 });
    }

    // (II - kappa1 I) x = 0; take the better conditioned row
    let r0 = Vector2::new(-(m - kappa1 * f), l - kappa1 * e);
    let r1 = Vector2::new(nn - kappa1 * g, -(m - kappa1 * f));
    let dir = if r0.norm_squared() >= r1.norm_squared() { r0 } else { r1 };
    let mut t1 = (j.f_u * dir.x + j.f_v * dir.y).normalize();
    // remove any normal component left by rounding
    t1 = (t1 - n * t1.dot(&n)).normalize();
    if first_nonzero_negative(&t1) {
        t1 = -t1;
    }
    let t2 = n.cross(&t1);
    Ok(PrincipalFrame { t1, t2, n, kappa1, kappa2 })
}

fn first_nonzero_negative(x: &Vector3<f64>) -> bool {
    x.iter().find(|c| c.abs() > 1e-14).is_some_and(|&c| c < 0.0)
}

impl PrincipalFrame {
    /// Normal curvature in direction `cos(phi) t1 + sin(phi) t2`.
    pub fn normal_curvature(&self, phi: f64) -> f64 {
        self.kappa1 * phi.cos().powi(2) + self.kappa2 * phi.sin().powi(2)
    }

    pub fn rho1(&self) -> f64 {
        1.0 / self.kappa1
    }

    pub fn rho2(&self) -> f64 {
        1.0 / self.kappa2
    }

    /// 3D tangent with coordinates `a` in the `(t1, t2)` basis.
    pub fn tangent(&self, a: &Vector2<f64>) -> Vector3<f64> {
        self.t1 * a.x + self.t2 * a.y
    }
}

/// Closest-point projection with a cached seed grid.
#[derive(Clone, Debug)]
pub struct Projector<'a> {
    surface: &'a BSplineSurface,
    samples: Vec<(f64, f64, Vector3<f64>)>,
}

impl<'a> Projector<'a> {
    pub const DEFAULT_SAMPLES: usize = 24;
    const MAX_NEWTON: usize = 50;

    pub fn new(surface: &'a BSplineSurface, m: usize) -> Self {
        let dom = surface.domain();
        let m = m.max(2);
        let mut samples = Vec::with_capacity(m * m);
        for a in 0..m {
            let u = dom.u_min + (dom.u_max - dom.u_min) * a as f64 / (m - 1) as f64;
            for b in 0..m {
                let v = dom.v_min + (dom.v_max - dom.v_min) * b as f64 / (m - 1) as f64;
                let p = surface.point(u, v).expect("sample inside domain");
                samples.push((u, v, p));
            }
        }
        Self { surface, samples }
    }

    pub fn surface(&self) -> &BSplineSurface {
        self.surface
    }

    /// Best sample by distance; ties go to the smaller `u`, then `v`.
    fn seed(&self, x: &Vector3<f64>) -> (f64, f64) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for &(u, v, p) in &self.samples {
            let d = (p - x).norm_squared();
            if d < best.0 {
                best = (d, u, v);
            }
        }
        (best.1, best.2)
    }

    pub fn project(&self, x: &Vector3<f64>) -> Projection {
        let (u0, v0) = self.seed(x);
        self.project_from(x, u0, v0)
    }

    /// Newton iteration on `|f(u,v) - x|^2 / 2` from `(u0, v0)`, clamped to
    /// the domain. Falls back to the seed after `MAX_NEWTON` iterations.
    pub fn project_from(&self, x: &Vector3<f64>, u0: f64, v0: f64) -> Projection {
        let dom = self.surface.domain();
        let (mut u, mut v) = dom.clamp(u0, v0);
        let scale = dom.diagonal();
        for _ in 0..Self::MAX_NEWTON {
            let j = self.surface.evaluate_jet(u, v).expect("clamped parameter");
            let d = j.f - x;
            let g = Vector2::new(d.dot(&j.f_u), d.dot(&j.f_v));
            let gn = Matrix2::new(
                j.f_u.dot(&j.f_u),
                j.f_u.dot(&j.f_v),
                j.f_u.dot(&j.f_v),
                j.f_v.dot(&j.f_v),
            );
            let full = gn + Matrix2::new(
                d.dot(&j.f_uu),
                d.dot(&j.f_uv),
                d.dot(&j.f_uv),
                d.dot(&j.f_vv),
            );
            let hess = if full.determinant() > 0.0 && full[(0, 0)] > 0.0 { full } else { gn };
            let Some(step) = hess.lu().solve(&-g) else { break };
            let (un, vn) = dom.clamp(u + step.x, v + step.y);
            let moved = (un - u).hypot(vn - v);
            u = un;
            v = vn;
            if moved <= 1e-15 * scale {
                return self.finish(x, u, v, false);
            }
        }
        let j = self.surface.evaluate_jet(u, v).expect("clamped parameter");
        let d = j.f - x;
        let g = Vector2::new(d.dot(&j.f_u), d.dot(&j.f_v));
        if g.norm() <= 1e-10 {
            return self.finish(x, u, v, false);
        }
        warn!("closest-point projection did not converge; using sampled seed");
        let (u0, v0) = dom.clamp(u0, v0);
        self.finish(x, u0, v0, true)
    }

    fn finish(&self, _x: &Vector3<f64>, u: f64, v: f64, fallback: bool) -> Projection {
        let j = self.surface.evaluate_jet(u, v).expect("clamped parameter");
        let normal = oriented_normal(&j).unwrap_or_else(|_| j.f_u.cross(&j.f_v).normalize());
        Projection { u, v, foot: j.f, normal, fallback }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bilinear() -> BSplineSurface {
        BSplineSurface::new(
            1,
            1,
            vec![0.0, 0.0, 1.0, 1.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![
                vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)],
                vec![Vector3::new(1.0, 0.0, 0.0), Vector3::new(1.0, 1.0, 0.0)],
            ],
        )
        .unwrap()
    }

    fn random_biquadratic(rng: &mut ChaCha8Rng) -> BSplineSurface {
        let knots = vec![0.0, 0.0, 0.0, 0.4, 1.0, 1.0, 1.0];
        let control = (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| {
                        Vector3::new(
                            i as f64 + rng.gen_range(-0.3..0.3),
                            j as f64 + rng.gen_range(-0.3..0.3),
                            rng.gen_range(-1.0..1.0),
                        )
                    })
                    .collect()
            })
            .collect();
        BSplineSurface::new(2, 2, knots.clone(), knots, control).unwrap()
    }

    #[test]
    fn flat_patch_jet() {
        let j = bilinear().evaluate_jet(0.5, 0.5).unwrap();
        assert_eq!(j.f, Vector3::new(0.5, 0.5, 0.0));
        assert_eq!(j.f_u, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(j.f_v, Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(j.f_uu, Vector3::zeros());
        assert_eq!(j.f_uv, Vector3::zeros());
        assert_eq!(j.f_vv, Vector3::zeros());
    }

    #[test]
    fn corners_interpolate_control_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_biquadratic(&mut rng);
        let (nu, nv) = s.grid_size();
        for (u, v, i, j) in [(0.0, 0.0, 0, 0), (1.0, 0.0, nu - 1, 0), (0.0, 1.0, 0, nv - 1), (1.0, 1.0, nu - 1, nv - 1)] {
            assert_abs_diff_eq!(s.point(u, v).unwrap(), s.control_point(i, j), epsilon = 1e-15);
        }
    }

    #[test]
    fn out_of_domain_is_rejected() {
        assert!(matches!(
            bilinear().evaluate_jet(1.5, 0.5),
            Err(Error::OutOfDomain { .. })
        ));
    }

    #[test]
    fn jet_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..5 {
            let s = random_biquadratic(&mut rng);
            for _ in 0..20 {
                let (u, v) = (rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95));
                let p = |du: f64, dv: f64| s.point(u + du, v + dv).unwrap();
                let j = s.evaluate_jet(u, v).unwrap();
                let fd_u = (p(h, 0.0) - p(-h, 0.0)) / (2.0 * h);
                let fd_v = (p(0.0, h) - p(0.0, -h)) / (2.0 * h);
                let fd_uu = (p(h, 0.0) - 2.0 * p(0.0, 0.0) + p(-h, 0.0)) / (h * h);
                let fd_vv = (p(0.0, h) - 2.0 * p(0.0, 0.0) + p(0.0, -h)) / (h * h);
                let fd_uv = (p(h, h) - p(h, -h) - p(-h, h) + p(-h, -h)) / (4.0 * h * h);
                // knot 0.4 is a C1 break for the second derivatives
                let smooth = (u - 0.4).abs() > 2.0 * h;
                let checks: Vec<(Vector3<f64>, Vector3<f64>, f64)> = vec![
                    (j.f_u, fd_u, 1e-6),
                    (j.f_v, fd_v, 1e-6),
                    (j.f_uv, fd_uv, 1e-4),
                    (j.f_vv, fd_vv, 1e-4),
                ];
                for (a, b, tol) in checks {
                    assert!((a - b).norm() <= tol * a.norm().max(1.0), "{a} vs {b}");
                }
                if smooth {
                    assert!((j.f_uu - fd_uu).norm() <= 1e-4 * j.f_uu.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn graph_frame_diagonal_case() {
        let jet = SurfaceJet2 {
            f: Vector3::zeros(),
            f_u: Vector3::x(),
            f_v: Vector3::y(),
            f_uu: Vector3::new(0.0, 0.0, 2.0),
            f_uv: Vector3::zeros(),
            f_vv: Vector3::new(0.0, 0.0, 1.0),
        };
        let fr = principal_frame(&jet).unwrap();
        assert_abs_diff_eq!(fr.n, Vector3::z(), epsilon = 1e-15);
        assert_abs_diff_eq!(fr.kappa1, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fr.kappa2, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fr.t1, Vector3::x(), epsilon = 1e-15);
        assert_abs_diff_eq!(fr.t2, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn frame_errors() {
        let mut jet = SurfaceJet2 {
            f: Vector3::zeros(),
            f_u: Vector3::x(),
            f_v: Vector3::y(),
            f_uu: Vector3::z(),
            f_uv: Vector3::zeros(),
            f_vv: Vector3::z(),
        };
        assert!(matches!(principal_frame(&jet), Err(Error::Umbilic { .. })));
        jet.f_uu = Vector3::zeros();
        jet.f_vv = Vector3::zeros();
        assert!(matches!(principal_frame(&jet), Err(Error::CurvatureSign { .. })));
        jet.f_vv = -Vector3::z();
        jet.f_uu = Vector3::z();
        assert!(matches!(principal_frame(&jet), Err(Error::CurvatureSign { .. })));
    }

    #[test]
    fn inward_normal_on_cap() {
        let s = BSplineSurface::builtin_cap();
        let fr = s.frame_at(0.0, 0.0).unwrap();
        assert_abs_diff_eq!(fr.n, Vector3::z(), epsilon = 1e-14);
        assert_abs_diff_eq!(fr.kappa1, 1.2, epsilon = 1e-12);
        assert_abs_diff_eq!(fr.kappa2, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn cap_reproduces_paraboloid() {
        let s = BSplineSurface::builtin_cap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (x, y) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let p = s.point(x, y).unwrap();
            assert_abs_diff_eq!(p, Vector3::new(x, y, 0.6 * x * x + 0.2 * y * y), epsilon = 1e-13);
        }
    }

    #[test]
    fn frame_invariants_on_cap() {
        let s = BSplineSurface::builtin_cap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for _ in 0..50 {
            let (u, v) = (rng.gen_range(-0.9..0.9), rng.gen_range(-0.9..0.9));
            let jet = s.evaluate_jet(u, v).unwrap();
            let fr = principal_frame(&jet).unwrap();
            assert!((fr.n - fr.t1.cross(&fr.t2)).norm() <= 1e-9);
            assert!(fr.kappa1 >= fr.kappa2 && fr.kappa2 > 0.0);

            // Weingarten: derivative of the normal along t_i, by finite
            // differences through the parameter-space preimage of t_i
            let first = Matrix2::new(
                jet.f_u.dot(&jet.f_u),
                jet.f_u.dot(&jet.f_v),
                jet.f_u.dot(&jet.f_v),
                jet.f_v.dot(&jet.f_v),
            );
            for (t, kappa) in [(fr.t1, fr.kappa1), (fr.t2, fr.kappa2)] {
                let a = first.lu().solve(&Vector2::new(jet.f_u.dot(&t), jet.f_v.dot(&t))).unwrap();
                let nrm = |e: f64| s.frame_at(u + e * a.x, v + e * a.y).unwrap().n;
                let dn = (nrm(h) - nrm(-h)) / (2.0 * h);
                assert!((dn.dot(&t) + kappa).abs() <= 1e-6, "{} vs {}", dn.dot(&t), -kappa);
            }

            // Euler's formula against the second form along sampled directions
            let (first, second, n0) = fundamental_forms(&jet).unwrap();
            let sign = n0.dot(&fr.n).signum();
            for k in 0..12 {
                let phi = k as f64 * std::f64::consts::PI / 12.0;
                let t = fr.t1 * phi.cos() + fr.t2 * phi.sin();
                let a = first.lu().solve(&Vector2::new(jet.f_u.dot(&t), jet.f_v.dot(&t))).unwrap();
                let kn = sign * (a.transpose() * second * a)[0] / (a.transpose() * first * a)[0];
                assert!((kn - fr.normal_curvature(phi)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn projection_of_surface_point_is_fixed() {
        let s = BSplineSurface::builtin_cap();
        let proj = Projector::new(&s, 24);
        let x = s.point(0.31, -0.47).unwrap();
        let p = proj.project(&x);
        assert!((p.foot - x).norm() <= 1e-10);
        assert!(!p.fallback);
    }

    #[test]
    fn projection_along_normal_offset() {
        // on the paraboloid the normal line through f(u0, v0) hits the
        // surface there first when the offset is small against the radius
        let s = BSplineSurface::builtin_cap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let (u0, v0) = (rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
            let fr = s.frame_at(u0, v0).unwrap();
            let delta = 0.01 / fr.kappa1;
            for side in [1.0, -1.0] {
                let x = s.point(u0, v0).unwrap() + fr.n * (side * delta);
                let p = s.closest_point(&x);
                assert!((p.foot - s.point(u0, v0).unwrap()).norm() <= 1e-8);
                let j = s.evaluate_jet(p.u, p.v).unwrap();
                let g = Vector2::new((p.foot - x).dot(&j.f_u), (p.foot - x).dot(&j.f_v));
                assert!(g.norm() <= 1e-10);
                assert_abs_diff_eq!(p.normal, fr.n, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn projection_seed_tie_break() {
        // the point above the center is equidistant from the four corner
        // samples; the smaller (u, v) seed must win
        let s = BSplineSurface::elliptic_cap(0.5, 0.5, 1.0, 1.0, 2);
        let proj = Projector::new(&s, 2);
        let x = Vector3::new(0.0, 0.0, 5.0);
        let d: Vec<f64> = proj.samples.iter().map(|(_, _, p)| (p - x).norm_squared()).collect();
        assert!(d.iter().all(|&e| e == d[0]));
        assert_eq!(proj.seed(&x), (-1.0, -1.0));
    }

    #[test]
    fn projection_clamps_outside_points() {
        let s = BSplineSurface::builtin_cap();
        let p = s.closest_point(&Vector3::new(3.0, 0.0, 0.0));
        assert_eq!(p.u, 1.0);
        assert!(!p.fallback);
    }

    #[test]
    fn surface_json_is_strict() {
        let s = BSplineSurface::builtin_cap();
        let back = BSplineSurface::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
        let mut value: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        value["weights"] = serde_json::json!([1.0]);
        assert!(BSplineSurface::from_json(&value.to_string()).is_err());
        let mut value: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        value["knots_u"] = serde_json::json!([0.0, 0.5, 1.0]);
        assert!(BSplineSurface::from_json(&value.to_string()).is_err());
    }
}
