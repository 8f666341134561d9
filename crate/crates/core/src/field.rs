//! Angle fields, pseudo L-conjugate frame fields and streamline extraction
//! of a field-aligned quad grid.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::conjugacy::{pseudo_lconj_partner, CongruenceSpec};
use crate::error::{Error, Result};
use crate::surface::{principal_frame, BSplineSurface, Domain, SurfaceJet2};

/// Angle of the first direction against the first principal direction, as
/// a function of the normalized parameters `(u, v)` in `[0, 1]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum AngleField {
    Constant { theta: f64 },
    LinearU { theta_min: f64, theta_max: f64 },
    LinearV { theta_min: f64, theta_max: f64 },
    CosineU { theta_min: f64, theta_max: f64 },
    CosineV { theta_min: f64, theta_max: f64 },
}

impl AngleField {
    pub fn eval(&self, u: f64, v: f64) -> f64 {
        theta_eval(self, u, v)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, x: f64| {
            if (0.0..=FRAC_PI_2).contains(&x) {
                Ok(())
            } else {
                Err(Error::config(
                    format!("theta.{name}"),
                    format!("{x} is outside [0, pi/2]"),
                ))
            }
        };
        match *self {
            Self::Constant { theta } => check("theta", theta),
            Self::LinearU { theta_min, theta_max }
            | Self::LinearV { theta_min, theta_max }
            | Self::CosineU { theta_min, theta_max }
            | Self::CosineV { theta_min, theta_max } => {
                check("theta_min", theta_min)?;
                check("theta_max", theta_max)
            }
        }
    }
}

pub fn theta_eval(field: &AngleField, u: f64, v: f64) -> f64 {
    let linear = |lo: f64, hi: f64, t: f64| (1.0 - t) * lo + t * hi;
    let cosine = |lo: f64, hi: f64, t: f64| {
        let t = t - t.floor();
        0.5 * (lo + hi) + 0.5 * (hi - lo) * (TAU * t).cos()
    };
    match *field {
        AngleField::Constant { theta } => theta,
        AngleField::LinearU { theta_min, theta_max } => linear(theta_min, theta_max, u),
        AngleField::LinearV { theta_min, theta_max } => linear(theta_min, theta_max, v),
        AngleField::CosineU { theta_min, theta_max } => cosine(theta_min, theta_max, u),
        AngleField::CosineV { theta_min, theta_max } => cosine(theta_min, theta_max, v),
    }
}

/// A pair of transversal tangent directions at a parameter point, both in
/// parameter coordinates and pushed forward to R^3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameSample {
    pub uv: Vector2<f64>,
    pub d1_uv: Vector2<f64>,
    pub d2_uv: Vector2<f64>,
    pub d1_3d: Vector3<f64>,
    pub d2_3d: Vector3<f64>,
}

/// Parameter coordinates of the tangent vector `d`.
pub fn tangent_to_uv(jet: &SurfaceJet2, d: &Vector3<f64>) -> Vector2<f64> {
    let first = Matrix2::new(
        jet.f_u.dot(&jet.f_u),
        jet.f_u.dot(&jet.f_v),
        jet.f_u.dot(&jet.f_v),
        jet.f_v.dot(&jet.f_v),
    );
    let rhs = Vector2::new(jet.f_u.dot(d), jet.f_v.dot(d));
    first
        .lu()
        .solve(&rhs)
        .expect("regular jet has an invertible first form")
}

pub fn uv_to_tangent(jet: &SurfaceJet2, d: &Vector2<f64>) -> Vector3<f64> {
    jet.f_u * d.x + jet.f_v * d.y
}

/// Samples the pseudo L-conjugate frame field: `d1` at angle `theta` from
/// `t1`, `d2` its partner.
pub fn frame_at(
    surface: &BSplineSurface,
    spec: &CongruenceSpec,
    field: &AngleField,
    u: f64,
    v: f64,
) -> Result<FrameSample> {
    let jet = surface.evaluate_jet(u, v)?;
    let frame = principal_frame(&jet).map_err(|e| e.located(u, v))?;
    let r = spec.radius(&frame, u, v)?;
    let (un, vn) = surface.domain().normalize(u, v);
    let theta = field.eval(un, vn);
    let a = Vector2::new(theta.cos(), theta.sin());
    let b = pseudo_lconj_partner(&frame, r, &a)?;
    let d1_3d = frame.tangent(&a);
    let d2_3d = frame.tangent(&b);
    Ok(FrameSample {
        uv: Vector2::new(u, v),
        d1_uv: tangent_to_uv(&jet, &d1_3d),
        d2_uv: tangent_to_uv(&jet, &d2_3d),
        d1_3d,
        d2_3d,
    })
}

/// A field of direction pairs over a rectangular parameter domain.
pub trait DirectionField {
    fn domain(&self) -> Domain;
    fn sample(&self, u: f64, v: f64) -> Result<FrameSample>;
    fn point(&self, u: f64, v: f64) -> Vector3<f64>;
}

/// The frame field of a surface with an attached congruence.
#[derive(Clone, Debug)]
pub struct SurfaceField<'a> {
    pub surface: &'a BSplineSurface,
    pub spec: &'a CongruenceSpec,
    pub angles: AngleField,
}

impl DirectionField for SurfaceField<'_> {
    fn domain(&self) -> Domain {
        self.surface.domain()
    }

    fn sample(&self, u: f64, v: f64) -> Result<FrameSample> {
        frame_at(self.surface, self.spec, &self.angles, u, v)
    }

    fn point(&self, u: f64, v: f64) -> Vector3<f64> {
        self.surface.point(u, v).expect("point inside domain")
    }
}

/// Requested grid shape. `rows` and `cols` count grid vertices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Target edge length in model units.
    pub edge_length: f64,
    /// Fixed RK4 step in parameter units; defaults to the domain diagonal / 400.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::config("grid", "rows and cols must be at least 2"));
        }
        if !(self.edge_length > 0.0 && self.edge_length.is_finite()) {
            return Err(Error::config("grid.edge_length", "must be positive"));
        }
        if let Some(h) = self.step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::config("grid.step", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Regular grid of parameter points; row `i` follows the first direction
/// field and column `j` the second.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadGrid {
    rows: usize,
    cols: usize,
    points: Vec<Vector2<f64>>,
}

impl QuadGrid {
    pub fn new(rows: usize, cols: usize, points: Vec<Vector2<f64>>) -> Result<Self> {
        if rows < 2 || cols < 2 || points.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "quad grid needs at least 2 x 2 points, got {} for {rows} x {cols}",
                points.len()
            )));
        }
        Ok(Self { rows, cols, points })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> Vector2<f64> {
        self.points[i * self.cols + j]
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    /// Signed area of cell `(i, j)` with corners taken in the order
    /// `(i,j), (i,j+1), (i+1,j+1), (i+1,j)`.
    pub fn cell_area(&self, i: usize, j: usize) -> f64 {
        let q = [
            self.at(i, j),
            self.at(i, j + 1),
            self.at(i + 1, j + 1),
            self.at(i + 1, j),
        ];
        0.5 * (0..4)
            .map(|k| q[k].perp(&q[(k + 1) % 4]))
            .sum::<f64>()
    }
}

const MIN_ANGLE_DEG: f64 = 5.0;
const EPS_CELL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    First,
    Second,
}

struct Tracer<'a, F: DirectionField> {
    field: &'a F,
    domain: Domain,
    h: f64,
    max_steps: usize,
}

impl<F: DirectionField> Tracer<'_, F> {
    /// Unit parameter-space direction of `family` at `p`, oriented along
    /// `reference`.
    fn direction(&self, family: Family, p: &Vector2<f64>, reference: &Vector2<f64>) -> Result<Vector2<f64>> {
        let s = self.field.sample(p.x, p.y)?;
        let cos = s.d1_3d.dot(&s.d2_3d).abs() / (s.d1_3d.norm() * s.d2_3d.norm());
        if cos > MIN_ANGLE_DEG.to_radians().cos() {
            return Err(Error::Tracing {
                u: p.x,
                v: p.y,
                reason: format!(
                    "frame directions are {:.3} degrees apart",
                    cos.clamp(-1.0, 1.0).acos().to_degrees()
                ),
            });
        }
        let d = match family {
            Family::First => s.d1_uv,
            Family::Second => s.d2_uv,
        }
        .normalize();
        Ok(if d.dot(reference) < 0.0 { -d } else { d })
    }

    /// Largest `t` in `[0, h]` with `p + t d` inside the domain.
    fn exit_time(&self, p: &Vector2<f64>, d: &Vector2<f64>) -> f64 {
        let dom = &self.domain;
        let mut t = self.h;
        for (x, dx, lo, hi) in [
            (p.x, d.x, dom.u_min, dom.u_max),
            (p.y, d.y, dom.v_min, dom.v_max),
        ] {
            if dx > 0.0 {
                t = t.min((hi - x) / dx);
            } else if dx < 0.0 {
                t = t.min((lo - x) / dx);
            }
        }
        t.max(0.0)
    }

    /// Integrates from `start` (excluded) in direction `initial` until the
    /// boundary is reached.
    fn trace(&self, family: Family, start: Vector2<f64>, initial: Vector2<f64>) -> Result<Vec<Vector2<f64>>> {
        let mut out = Vec::new();
        let mut p = start;
        let mut prev = initial;
        let h = self.h;
        for _ in 0..self.max_steps {
            let k1 = self.direction(family, &p, &prev)?;
            let stage = |q: Vector2<f64>, r: &Vector2<f64>| -> Result<Option<Vector2<f64>>> {
                if self.domain.contains(q.x, q.y) {
                    self.direction(family, &q, r).map(Some)
                } else {
                    Ok(None)
                }
            };
            let rk = (|| -> Result<Option<Vector2<f64>>> {
                let Some(k2) = stage(p + k1 * (0.5 * h), &k1)? else { return Ok(None) };
                let Some(k3) = stage(p + k2 * (0.5 * h), &k2)? else { return Ok(None) };
                let Some(k4) = stage(p + k3 * h, &k3)? else { return Ok(None) };
                let next = p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                Ok(self.domain.contains(next.x, next.y).then_some(next))
            })()?;
            match rk {
                Some(next) => {
                    prev = (next - p).normalize();
                    p = next;
                    out.push(p);
                }
                None => {
                    let t = self.exit_time(&p, &k1);
                    if t > 1e-12 * h {
                        let (u, v) = self.domain.clamp(p.x + t * k1.x, p.y + t * k1.y);
                        out.push(Vector2::new(u, v));
                    }
                    return Ok(out);
                }
            }
        }
        Ok(out)
    }

    /// Full streamline through `seed`, ordered along `orientation`.
    fn streamline(&self, family: Family, seed: Vector2<f64>, orientation: Vector2<f64>) -> Result<Polyline> {
        let forward_dir = self.direction(family, &seed, &orientation)?;
        let forward = self.trace(family, seed, forward_dir)?;
        let backward = self.trace(family, seed, -forward_dir)?;
        let center = backward.len();
        let mut points: Vec<_> = backward.into_iter().rev().collect();
        points.push(seed);
        points.extend(forward);
        Ok(Polyline { points, center })
    }
}

struct Polyline {
    points: Vec<Vector2<f64>>,
    /// Index of the seed point.
    center: usize,
}

impl Polyline {
    /// Parameter point at signed 3D arclength `s` from the seed, by linear
    /// interpolation along the chords.
    fn at_arclength<F: DirectionField>(&self, field: &F, s: f64) -> Option<Vector2<f64>> {
        if s == 0.0 {
            return Some(self.points[self.center]);
        }
        let step: isize = if s > 0.0 { 1 } else { -1 };
        let target = s.abs();
        let mut acc = 0.0;
        let mut k = self.center as isize;
        let mut x0 = field.point(self.points[k as usize].x, self.points[k as usize].y);
        loop {
            let next = k + step;
            if next < 0 || next as usize >= self.points.len() {
                return None;
            }
            let (a, b) = (self.points[k as usize], self.points[next as usize]);
            let x1 = field.point(b.x, b.y);
            let len = (x1 - x0).norm();
            if acc + len >= target {
                let t = if len > 0.0 { (target - acc) / len } else { 0.0 };
                return Some(a + (b - a) * t);
            }
            acc += len;
            k = next;
            x0 = x1;
        }
    }
}

/// Extracts a regular grid whose rows follow `d1` and columns follow `d2`.
///
/// Seeds sit on the two streamlines through the domain center at 3D
/// arclength spacing `edge_length`; grid point `(i, j)` is the intersection
/// of the `d1` line through row seed `i` with the `d2` line through column
/// seed `j`. Rows and columns that do not fit are trimmed to the largest
/// complete rectangle.
pub fn trace_grid<F: DirectionField>(field: &F, spec: &GridSpec) -> Result<QuadGrid> {
    spec.validate()?;
    let domain = field.domain();
    let h = spec.step.unwrap_or(domain.diagonal() / 400.0);
    let tracer = Tracer {
        field,
        domain,
        h,
        max_steps: (8.0 * domain.diagonal() / h).ceil() as usize + 8,
    };
    let center = domain.center();
    let c = field.sample(center.x, center.y)?;
    let d1 = if c.d1_uv.x.abs() > 1e-12 * c.d1_uv.norm() {
        c.d1_uv * c.d1_uv.x.signum()
    } else {
        c.d1_uv * c.d1_uv.y.signum()
    };
    let d2 = if d1.perp(&c.d2_uv) > 0.0 { c.d2_uv } else { -c.d2_uv };

    let spine1 = tracer.streamline(Family::First, center, d1)?;
    let spine2 = tracer.streamline(Family::Second, center, d2)?;
    let offset = |k: usize, n: usize| (k as f64 - (n as f64 - 1.0) / 2.0) * spec.edge_length;
    let row_seeds: Vec<_> = (0..spec.rows)
        .map(|i| spine2.at_arclength(field, offset(i, spec.rows)))
        .collect();
    let col_seeds: Vec<_> = (0..spec.cols)
        .map(|j| spine1.at_arclength(field, offset(j, spec.cols)))
        .collect();

    let rows: Vec<Option<Polyline>> = row_seeds
        .iter()
        .map(|s| s.map(|s| tracer.streamline(Family::First, s, d1)).transpose())
        .collect::<Result<_>>()?;
    let cols: Vec<Option<Polyline>> = col_seeds
        .iter()
        .map(|s| s.map(|s| tracer.streamline(Family::Second, s, d2)).transpose())
        .collect::<Result<_>>()?;

    let cell = 2.0 * h;
    let key = |p: &Vector2<f64>| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut hash: HashMap<(i64, i64), Vec<(usize, usize)>> = HashMap::new();
    for (j, line) in cols.iter().enumerate() {
        let Some(line) = line else { continue };
        for k in 0..line.points.len().saturating_sub(1) {
            let (a, b) = (line.points[k], line.points[k + 1]);
            let (ka, kb) = (key(&a), key(&b));
            for x in ka.0.min(kb.0)..=ka.0.max(kb.0) {
                for y in ka.1.min(kb.1)..=ka.1.max(kb.1) {
                    hash.entry((x, y)).or_default().push((j, k));
                }
            }
        }
    }

    let mut found: Vec<Option<Vector2<f64>>> = vec![None; spec.rows * spec.cols];
    for (i, row) in rows.iter().enumerate() {
        let Some(row) = row else { continue };
        let mut best: Vec<Option<(f64, Vector2<f64>)>> = vec![None; spec.cols];
        for k in 0..row.points.len().saturating_sub(1) {
            let (a, b) = (row.points[k], row.points[k + 1]);
            let (ka, kb) = (key(&a), key(&b));
            for x in ka.0.min(kb.0)..=ka.0.max(kb.0) {
                for y in ka.1.min(kb.1)..=ka.1.max(kb.1) {
                    let Some(candidates) = hash.get(&(x, y)) else { continue };
                    for &(j, s) in candidates {
                        let col = cols[j].as_ref().expect("hashed column exists");
                        let Some(p) = segment_intersection(a, b, col.points[s], col.points[s + 1]) else {
                            continue;
                        };
                        let predicted = row_seeds[i].unwrap() + col_seeds[j].unwrap() - center;
                        let d = (p - predicted).norm_squared();
                        if best[j].map_or(true, |(bd, _)| d < bd) {
                            best[j] = Some((d, p));
                        }
                    }
                }
            }
        }
        for (j, b) in best.into_iter().enumerate() {
            found[i * spec.cols + j] = b.map(|(_, p)| p);
        }
    }

    let (r0, c0, nr, nc) = largest_rectangle(spec.rows, spec.cols, |i, j| found[i * spec.cols + j].is_some())
        .ok_or_else(|| Error::Tracing {
            u: center.x,
            v: center.y,
            reason: "no complete 2 x 2 block of grid intersections".into(),
        })?;
    let points = (r0..r0 + nr)
        .flat_map(|i| (c0..c0 + nc).map(move |j| (i, j)))
        .map(|(i, j)| found[i * spec.cols + j].expect("inside complete block"))
        .collect();
    let grid = QuadGrid::new(nr, nc, points)?;
    validate_cells(&grid)?;
    Ok(grid)
}

fn segment_intersection(
    a: Vector2<f64>,
    b: Vector2<f64>,
    c: Vector2<f64>,
    d: Vector2<f64>,
) -> Option<Vector2<f64>> {
    let (r, s) = (b - a, d - c);
    let denom = r.perp(&s);
    if denom == 0.0 {
        return None;
    }
    let t = (c - a).perp(&s) / denom;
    let w = (c - a).perp(&r) / denom;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&w)).then(|| a + r * t)
}

/// Largest all-present sub-rectangle with at least two rows and columns;
/// ties go to the first in row-major order of its top-left corner.
fn largest_rectangle(
    rows: usize,
    cols: usize,
    present: impl Fn(usize, usize) -> bool,
) -> Option<(usize, usize, usize, usize)> {
    let mut sum = vec![0usize; (rows + 1) * (cols + 1)];
    let idx = |i: usize, j: usize| i * (cols + 1) + j;
    for i in 0..rows {
        for j in 0..cols {
            sum[idx(i + 1, j + 1)] =
                usize::from(present(i, j)) + sum[idx(i, j + 1)] + sum[idx(i + 1, j)] - sum[idx(i, j)];
        }
    }
    let mut best: Option<(usize, usize, usize, usize)> = None;
    for r0 in 0..rows {
        for c0 in 0..cols {
            for nr in 2..=rows - r0 {
                for nc in 2..=cols - c0 {
                    let count = sum[idx(r0 + nr, c0 + nc)] + sum[idx(r0, c0)]
                        - sum[idx(r0, c0 + nc)]
                        - sum[idx(r0 + nr, c0)];
                    if count == nr * nc && best.map_or(true, |b| nr * nc > b.2 * b.3) {
                        best = Some((r0, c0, nr, nc));
                    }
                }
            }
        }
    }
    best
}

fn validate_cells(grid: &QuadGrid) -> Result<()> {
    let (m, n) = (grid.rows() - 1, grid.cols() - 1);
    let areas: Vec<f64> = (0..m)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| grid.cell_area(i, j))
        .collect();
    let mean = areas.iter().sum::<f64>() / areas.len() as f64;
    for (k, &a) in areas.iter().enumerate() {
        if !(a > EPS_CELL * mean.abs()) || mean <= 0.0 {
            let p = grid.at(k / n, k % n);
            return Err(Error::Tracing {
                u: p.x,
                v: p.y,
                reason: format!("degenerate grid cell ({}, {}) with area {a:e}", k / n, k % n),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    /// Flat unit-speed chart with constant directions.
    struct Constant {
        d1: Vector2<f64>,
        d2: Vector2<f64>,
    }

    impl DirectionField for Constant {
        fn domain(&self) -> Domain {
            Domain { u_min: 0.0, u_max: 1.0, v_min: 0.0, v_max: 1.0 }
        }

        fn sample(&self, u: f64, v: f64) -> Result<FrameSample> {
            let lift = |d: Vector2<f64>| Vector3::new(d.x, d.y, 0.0);
            Ok(FrameSample {
                uv: Vector2::new(u, v),
                d1_uv: self.d1,
                d2_uv: self.d2,
                d1_3d: lift(self.d1),
                d2_3d: lift(self.d2),
            })
        }

        fn point(&self, u: f64, v: f64) -> Vector3<f64> {
            Vector3::new(u, v, 0.0)
        }
    }

    #[test]
    fn theta_examples() {
        let c = AngleField::Constant { theta: FRAC_PI_4 };
        assert_eq!(c.eval(0.3, 0.9), FRAC_PI_4);
        let l = AngleField::LinearU { theta_min: 0.0, theta_max: FRAC_PI_3 };
        assert_abs_diff_eq!(l.eval(0.5, 0.0), FRAC_PI_6, epsilon = 1e-15);
        let cs = AngleField::CosineU { theta_min: 0.0, theta_max: FRAC_PI_2 };
        assert_eq!(cs.eval(0.0, 0.7), FRAC_PI_2);
        assert_abs_diff_eq!(cs.eval(0.25, 0.7), FRAC_PI_4, epsilon = 1e-15);
        let lv = AngleField::LinearV { theta_min: 0.2, theta_max: 0.4 };
        assert_abs_diff_eq!(lv.eval(0.9, 0.5), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn theta_validation() {
        assert!(AngleField::Constant { theta: 2.0 }.validate().is_err());
        assert!(AngleField::CosineV { theta_min: -0.1, theta_max: 1.0 }.validate().is_err());
        assert!(AngleField::LinearU { theta_min: 0.0, theta_max: FRAC_PI_2 }.validate().is_ok());
    }

    #[test]
    fn angle_field_json() {
        let f: AngleField =
            serde_json::from_str(r#"{"family":"cosine_u","theta_min":0.1,"theta_max":1.2}"#).unwrap();
        assert_eq!(f, AngleField::CosineU { theta_min: 0.1, theta_max: 1.2 });
        assert!(serde_json::from_str::<AngleField>(r#"{"family":"constant","theta":0.1,"x":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn cosine_is_periodic(k in 0u32..(1 << 20), v in 0.0..1.0f64, lo in 0.0..FRAC_PI_2, hi in 0.0..FRAC_PI_2) {
            let u = k as f64 / (1u32 << 20) as f64;
            let f = AngleField::CosineU { theta_min: lo, theta_max: hi };
            prop_assert_eq!(f.eval(u, v), f.eval(u + 1.0, v));
            let g = AngleField::CosineV { theta_min: lo, theta_max: hi };
            prop_assert_eq!(g.eval(v, u), g.eval(v, u + 1.0));
        }
    }

    #[test]
    fn principal_field_for_zero_angle() {
        let s = BSplineSurface::builtin_cap();
        let spec = CongruenceSpec::tau(0.5).unwrap();
        let f = AngleField::Constant { theta: 0.0 };
        for (u, v) in [(0.0, 0.0), (0.3, -0.6), (-0.8, 0.2)] {
            let fs = frame_at(&s, &spec, &f, u, v).unwrap();
            let fr = s.frame_at(u, v).unwrap();
            assert_abs_diff_eq!(fs.d1_3d, fr.t1, epsilon = 1e-15);
            assert_abs_diff_eq!(fs.d2_3d, fr.t2, epsilon = 1e-15);
        }
    }

    #[test]
    fn pseudo_partner_on_graph() {
        // z = x^2 + y^2 / 2 has kappa = (2, 1) at the origin
        let s = BSplineSurface::elliptic_cap(1.0, 0.5, 1.0, 1.0, 2);
        let spec = CongruenceSpec::constant(0.25);
        let f = AngleField::Constant { theta: FRAC_PI_4 };
        let fs = frame_at(&s, &spec, &f, 0.0, 0.0).unwrap();
        let expected = Vector3::new(3.0, -4.0, 0.0) / 5.0;
        assert_abs_diff_eq!(fs.d2_3d, expected, epsilon = 1e-14);
        assert_abs_diff_eq!(fs.d2_uv, Vector2::new(0.6, -0.8), epsilon = 1e-14);
    }

    #[test]
    fn umbilic_error_is_located() {
        let s = BSplineSurface::elliptic_cap(0.5, 0.5, 1.0, 1.0, 2);
        let spec = CongruenceSpec::tau(0.5).unwrap();
        let err = frame_at(&s, &spec, &AngleField::Constant { theta: 0.0 }, 0.0, 0.0).unwrap_err();
        assert!(matches!(err, Error::Umbilic { u, v, .. } if u == 0.0 && v == 0.0));
    }

    #[test]
    fn pushforward_round_trip() {
        let s = BSplineSurface::builtin_cap();
        let spec = CongruenceSpec::tau(0.75).unwrap();
        let f = AngleField::CosineV { theta_min: 0.2, theta_max: 1.2 };
        for (u, v) in [(0.1, 0.2), (-0.7, 0.9), (0.95, -0.4)] {
            let fs = frame_at(&s, &spec, &f, u, v).unwrap();
            let jet = s.evaluate_jet(u, v).unwrap();
            assert!((uv_to_tangent(&jet, &fs.d1_uv) - fs.d1_3d).norm() <= 1e-9);
            assert!((uv_to_tangent(&jet, &fs.d2_uv) - fs.d2_3d).norm() <= 1e-9);
            let back = tangent_to_uv(&jet, &uv_to_tangent(&jet, &fs.d1_uv));
            assert!((back - fs.d1_uv).norm() <= 1e-9);
        }
    }

    #[test]
    fn axis_aligned_constant_field() {
        let field = Constant { d1: Vector2::x(), d2: Vector2::y() };
        let spec = GridSpec { rows: 5, cols: 7, edge_length: 0.125, step: Some(1.0 / 64.0) };
        let grid = trace_grid(&field, &spec).unwrap();
        assert_eq!((grid.rows(), grid.cols()), (5, 7));
        for i in 0..5 {
            for j in 0..7 {
                let expected = Vector2::new(0.5 + (j as f64 - 3.0) * 0.125, 0.5 + (i as f64 - 2.0) * 0.125);
                assert_abs_diff_eq!(grid.at(i, j), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rotated_constant_field() {
        let t = 0.4f64;
        let field = Constant {
            d1: Vector2::new(t.cos(), t.sin()),
            d2: Vector2::new(-t.sin(), t.cos()),
        };
        let spec = GridSpec { rows: 4, cols: 4, edge_length: 0.1, step: None };
        let grid = trace_grid(&field, &spec).unwrap();
        assert_eq!((grid.rows(), grid.cols()), (4, 4));
        for i in 0..4 {
            for j in 0..3 {
                let e = grid.at(i, j + 1) - grid.at(i, j);
                assert!((e.norm() - 0.1).abs() <= 1e-9);
                assert!(e.perp(&field.d1).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn oversized_request_is_trimmed() {
        let field = Constant { d1: Vector2::x(), d2: Vector2::y() };
        let spec = GridSpec { rows: 40, cols: 3, edge_length: 0.1, step: None };
        let grid = trace_grid(&field, &spec).unwrap();
        assert!(grid.rows() <= 40 && grid.rows() >= 10);
        assert_eq!(grid.cols(), 3);
        for p in grid.points() {
            assert!(field.domain().contains(p.x, p.y));
        }
    }

    #[test]
    fn near_parallel_field_fails() {
        let field = Constant {
            d1: Vector2::x(),
            d2: Vector2::new(1.0, 0.05),
        };
        let spec = GridSpec { rows: 3, cols: 3, edge_length: 0.1, step: None };
        assert!(matches!(trace_grid(&field, &spec), Err(Error::Tracing { .. })));
    }

    #[test]
    fn cap_grid_is_aligned() {
        let s = BSplineSurface::builtin_cap();
        let spec = CongruenceSpec::tau(0.75).unwrap();
        let field = SurfaceField { surface: &s, spec: &spec, angles: AngleField::Constant { theta: FRAC_PI_4 } };
        let gs = GridSpec { rows: 9, cols: 9, edge_length: 0.1, step: None };
        let grid = trace_grid(&field, &gs).unwrap();
        assert_eq!((grid.rows(), grid.cols()), (9, 9));
        let angle = |e: Vector3<f64>, d: Vector3<f64>| (e.dot(&d).abs() / (e.norm() * d.norm())).min(1.0).acos();
        for i in 0..9 {
            for j in 0..9 {
                if j + 1 < 9 {
                    let (a, b) = (grid.at(i, j), grid.at(i, j + 1));
                    let m = (a + b) / 2.0;
                    let e = s.point(b.x, b.y).unwrap() - s.point(a.x, a.y).unwrap();
                    let fs = field.sample(m.x, m.y).unwrap();
                    assert!(angle(e, fs.d1_3d) <= 10f64.to_radians());
                }
                if i + 1 < 9 {
                    let (a, b) = (grid.at(i, j), grid.at(i + 1, j));
                    let m = (a + b) / 2.0;
                    let e = s.point(b.x, b.y).unwrap() - s.point(a.x, a.y).unwrap();
                    let fs = field.sample(m.x, m.y).unwrap();
                    assert!(angle(e, fs.d2_3d) <= 10f64.to_radians());
                }
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                assert!(grid.cell_area(i, j) > 0.0);
            }
        }
    }

    #[test]
    fn rectangle_search() {
        let present = |i: usize, j: usize| !(i == 0 && j == 0) && i < 4;
        assert_eq!(largest_rectangle(5, 3, present), Some((1, 0, 3, 3)));
        assert_eq!(largest_rectangle(2, 2, |_, _| false), None);
    }
}
