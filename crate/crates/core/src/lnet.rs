//! Discrete L-nets: an or-plane per grid vertex, an or-sphere per face, and
//! implicitly an or-cone per interior edge.
//!
//! A net with `m x n` faces has `(m + 1) x (n + 1)` planes. Face `(i, j)`
//! touches the planes at vertices `(i, j)`, `(i, j + 1)`, `(i + 1, j)` and
//! `(i + 1, j + 1)`. Both grids are stored row-major.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::conjugacy::CongruenceSpec;
use crate::error::{Error, Result};
use crate::field::QuadGrid;
use crate::geom::{contact_residual, OrPlane, OrSphere, SphereFamily};
use crate::surface::{BSplineSurface, Projector};

/// Default contact tolerance, absolute in model units.
pub const TOL_OC: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LNet {
    rows: usize,
    cols: usize,
    planes: Vec<OrPlane>,
    spheres: Vec<OrSphere>,
}

impl LNet {
    /// A net of `rows x cols` faces.
    pub fn new(rows: usize, cols: usize, planes: Vec<OrPlane>, spheres: Vec<OrSphere>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput("an L-net needs at least one face".into()));
        }
        if planes.len() != (rows + 1) * (cols + 1) || spheres.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{rows} x {cols} faces need {} planes and {} spheres, got {} and {}",
                (rows + 1) * (cols + 1),
                rows * cols,
                planes.len(),
                spheres.len()
            )));
        }
        Ok(Self { rows, cols, planes, spheres })
    }

    /// Face counts `(rows, cols)`.
    pub fn faces(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn plane(&self, i: usize, j: usize) -> &OrPlane {
        &self.planes[i * (self.cols + 1) + j]
    }

    pub fn sphere(&self, i: usize, j: usize) -> &OrSphere {
        &self.spheres[i * self.cols + j]
    }

    pub fn plane_mut(&mut self, i: usize, j: usize) -> &mut OrPlane {
        &mut self.planes[i * (self.cols + 1) + j]
    }

    pub fn sphere_mut(&mut self, i: usize, j: usize) -> &mut OrSphere {
        &mut self.spheres[i * self.cols + j]
    }

    pub fn planes(&self) -> &[OrPlane] {
        &self.planes
    }

    pub fn spheres(&self) -> &[OrSphere] {
        &self.spheres
    }

    pub fn planes_mut(&mut self) -> &mut [OrPlane] {
        &mut self.planes
    }

    pub fn spheres_mut(&mut self) -> &mut [OrSphere] {
        &mut self.spheres
    }

    /// Contact point of face `(i, j)` with the plane at vertex `(vi, vj)`.
    pub fn contact_point(&self, face: (usize, usize), vertex: (usize, usize)) -> Vector3<f64> {
        let s = self.sphere(face.0, face.1);
        s.contact_point(&self.plane(vertex.0, vertex.1).normal)
    }

    /// The four corner vertices of face `(i, j)` in the order
    /// `(i,j), (i,j+1), (i+1,j), (i+1,j+1)`.
    pub fn corners(i: usize, j: usize) -> [(usize, usize); 4] {
        [(i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1)]
    }

    /// Adjacent face pairs, see [`adjacent_face_pairs`].
    pub fn adjacent_faces(&self) -> Vec<((usize, usize), (usize, usize))> {
        adjacent_face_pairs(self.rows, self.cols)
    }

    pub fn to_json(&self) -> String {
        let grid = |n: usize, per_row: usize, f: &dyn Fn(usize) -> ([f64; 3], f64)| {
            (0..n).map(|i| (0..per_row).map(|j| f(i * per_row + j)).collect()).collect()
        };
        let file = LNetFile {
            format_version: 1,
            rows: self.rows,
            cols: self.cols,
            planes: grid(self.rows + 1, self.cols + 1, &|k| {
                let p = &self.planes[k];
                (p.normal.into(), p.intercept)
            }),
            spheres: grid(self.rows, self.cols, &|k| {
                let s = &self.spheres[k];
                (s.center.into(), s.radius)
            }),
        };
        serde_json::to_string_pretty(&file).expect("net serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LNetFile = serde_json::from_str(text)?;
        if file.format_version != 1 {
            return Err(Error::InvalidInput(format!(
                "unsupported L-net format_version {}",
                file.format_version
            )));
        }
        let shape_ok = file.planes.len() == file.rows + 1
            && file.planes.iter().all(|r| r.len() == file.cols + 1)
            && file.spheres.len() == file.rows
            && file.spheres.iter().all(|r| r.len() == file.cols);
        if !shape_ok {
            return Err(Error::InvalidInput("L-net grids do not match rows and cols".into()));
        }
        let planes = file
            .planes
            .into_iter()
            .flatten()
            .map(|(n, h)| OrPlane::new(n.into(), h))
            .collect();
        let spheres = file
            .spheres
            .into_iter()
            .flatten()
            .map(|(c, r)| OrSphere::new(c.into(), r))
            .collect();
        Self::new(file.rows, file.cols, planes, spheres)
    }
}

/// Adjacent face pairs: first along rows, then along columns, row-major.
pub fn adjacent_face_pairs(rows: usize, cols: usize) -> Vec<((usize, usize), (usize, usize))> {
    let mut out = Vec::new();
    for i in 0..rows {
        for j in 0..cols.saturating_sub(1) {
            out.push(((i, j), (i, j + 1)));
        }
    }
    for i in 0..rows.saturating_sub(1) {
        for j in 0..cols {
            out.push(((i, j), (i + 1, j)));
        }
    }
    out
}

/// On-disk layout: `planes[i][j] = [[nx, ny, nz], h]` and
/// `spheres[i][j] = [[cx, cy, cz], r]`; `rows` and `cols` count faces.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LNetFile {
    format_version: u32,
    rows: usize,
    cols: usize,
    planes: Vec<Vec<([f64; 3], f64)>>,
    spheres: Vec<Vec<([f64; 3], f64)>>,
}

/// Initial net from a quad grid: tangent planes at the grid vertices and
/// congruence spheres touching the surface at the projected face
/// barycenters. The result is generally not in exact contact.
pub fn initialize(grid: &QuadGrid, surface: &BSplineSurface, spec: &CongruenceSpec) -> Result<LNet> {
    let (m, n) = (grid.rows() - 1, grid.cols() - 1);
    let mut vertices = Vec::with_capacity(grid.rows() * grid.cols());
    let mut planes = Vec::with_capacity(vertices.capacity());
    for p in grid.points() {
        let frame = surface.frame_at(p.x, p.y)?;
        let v = surface.point(p.x, p.y)?;
        vertices.push(v);
        planes.push(OrPlane::through(&v, frame.n));
    }
    let projector = Projector::new(surface, Projector::DEFAULT_SAMPLES);
    let mut spheres = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            let b = LNet::corners(i, j)
                .iter()
                .map(|&(a, c)| vertices[a * grid.cols() + c])
                .sum::<Vector3<f64>>()
                / 4.0;
            let foot = projector.project(&b);
            let frame = surface.frame_at(foot.u, foot.v)?;
            let r = spec.radius(&frame, foot.u, foot.v)?;
            spheres.push(OrSphere::new(foot.foot + frame.n * r, r));
        }
    }
    LNet::new(m, n, planes, spheres)
}

/// Three consecutive faces and the four planes shared between them.
/// `planes[0]`, `planes[3]` touch the first two faces; `planes[1]`,
/// `planes[2]` the last two.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FaceTriple {
    pub spheres: [(usize, usize); 3],
    pub planes: [(usize, usize); 4],
}

/// Three consecutive vertex planes and the four faces around them.
/// `spheres[0]`, `spheres[3]` touch the first two planes; `spheres[1]`,
/// `spheres[2]` the last two.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlaneTriple {
    pub planes: [(usize, usize); 3],
    pub spheres: [(usize, usize); 4],
}

/// Face triples centered on each face, along rows then along columns.
pub fn face_triples(rows: usize, cols: usize) -> Vec<FaceTriple> {
    let mut out = Vec::new();
    for i in 0..rows {
        for j in 1..cols.saturating_sub(1) {
            out.push(FaceTriple {
                spheres: [(i, j - 1), (i, j), (i, j + 1)],
                planes: [(i, j), (i, j + 1), (i + 1, j + 1), (i + 1, j)],
            });
        }
    }
    for i in 1..rows.saturating_sub(1) {
        for j in 0..cols {
            out.push(FaceTriple {
                spheres: [(i - 1, j), (i, j), (i + 1, j)],
                planes: [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)],
            });
        }
    }
    out
}

/// Plane triples centered on each interior vertex, along rows then columns.
pub fn plane_triples(rows: usize, cols: usize) -> Vec<PlaneTriple> {
    let mut out = Vec::new();
    for i in 1..rows {
        for j in 1..cols {
            out.push(PlaneTriple {
                planes: [(i, j - 1), (i, j), (i, j + 1)],
                spheres: [(i - 1, j - 1), (i - 1, j), (i, j), (i, j - 1)],
            });
        }
    }
    for i in 1..rows {
        for j in 1..cols {
            out.push(PlaneTriple {
                planes: [(i - 1, j), (i, j), (i + 1, j)],
                spheres: [(i - 1, j - 1), (i, j - 1), (i, j), (i - 1, j)],
            });
        }
    }
    out
}

/// Endpoints of two pairs of consecutive straight segments on the vertex
/// quads along a face triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentPoints {
    pub a: [Vector3<f64>; 4],
    pub b: [Vector3<f64>; 4],
}

/// Endpoints of two pairs of consecutive circular arcs on the spherical
/// faces along a plane triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcPoints {
    pub alpha: [Vector3<f64>; 4],
    pub beta: [Vector3<f64>; 4],
}

impl LNet {
    fn check_face(&self, (i, j): (usize, usize)) -> Result<()> {
        if i < self.rows && j < self.cols {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { i, j })
        }
    }

    fn check_vertex(&self, (i, j): (usize, usize)) -> Result<()> {
        if i <= self.rows && j <= self.cols {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { i, j })
        }
    }

    pub fn segment_points(&self, t: &FaceTriple) -> Result<SegmentPoints> {
        t.spheres.iter().try_for_each(|&f| self.check_face(f))?;
        t.planes.iter().try_for_each(|&v| self.check_vertex(v))?;
        let [si, sj, sk] = t.spheres;
        let [p0, p1, p2, p3] = t.planes;
        let x = |f, v| self.contact_point(f, v);
        Ok(SegmentPoints {
            a: [x(si, p0), x(sj, p0), x(sj, p1), x(sk, p1)],
            b: [x(si, p3), x(sj, p3), x(sj, p2), x(sk, p2)],
        })
    }

    pub fn arc_points(&self, t: &PlaneTriple) -> Result<ArcPoints> {
        t.planes.iter().try_for_each(|&v| self.check_vertex(v))?;
        t.spheres.iter().try_for_each(|&f| self.check_face(f))?;
        let [pi, pj, pk] = t.planes;
        let [s0, s1, s2, s3] = t.spheres;
        let x = |f, v| self.contact_point(f, v);
        Ok(ArcPoints {
            alpha: [x(s0, pi), x(s0, pj), x(s1, pj), x(s1, pk)],
            beta: [x(s3, pi), x(s3, pj), x(s2, pj), x(s2, pk)],
        })
    }
}

/// Length of a common tangent segment of two spheres.
pub fn tangential_distance(si: &OrSphere, sj: &OrSphere) -> Result<f64> {
    let dist_sq = (si.center - sj.center).norm_squared();
    let radius_diff_sq = (si.radius - sj.radius).powi(2);
    if dist_sq > radius_diff_sq {
        Ok((dist_sq - radius_diff_sq).sqrt())
    } else {
        Err(Error::Admissibility { dist_sq, radius_diff_sq })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub max_contact_residual: f64,
    pub num_inadmissible_edges: usize,
    pub is_lnet: bool,
}

pub fn verify(net: &LNet, tol_oc: f64) -> VerifyReport {
    let (m, n) = net.faces();
    let mut max_res = 0.0f64;
    for i in 0..m {
        for j in 0..n {
            for (vi, vj) in LNet::corners(i, j) {
                let r = contact_residual(net.sphere(i, j), net.plane(vi, vj)).abs();
                max_res = if r.is_nan() { f64::NAN } else { max_res.max(r) };
            }
        }
    }
    let bad = net
        .adjacent_faces()
        .iter()
        .filter(|(a, b)| tangential_distance(net.sphere(a.0, a.1), net.sphere(b.0, b.1)).is_err())
        .count();
    VerifyReport {
        max_contact_residual: max_res,
        num_inadmissible_edges: bad,
        is_lnet: max_res <= tol_oc && bad == 0,
    }
}

/// Largest `|<n, c> + h - r|` over interior vertex planes and the centers
/// of their four faces: zero when the centers lie on the plane offset by `r`.
pub fn center_offset_residual(net: &LNet, r: f64) -> f64 {
    let (m, n) = net.faces();
    let mut worst = 0.0f64;
    for i in 1..m {
        for j in 1..n {
            let p = net.plane(i, j);
            for (a, b) in [(i - 1, j - 1), (i - 1, j), (i, j - 1), (i, j)] {
                let c = net.sphere(a, b).center;
                worst = worst.max((p.normal.dot(&c) + p.intercept - r).abs());
            }
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TessellationParams {
    /// Samples along spherical face borders not shared with a cone.
    pub arc_samples: usize,
    /// Samples along each cone strip, endpoints included.
    pub ruling_samples: usize,
}

impl Default for TessellationParams {
    fn default() -> Self {
        Self { arc_samples: 8, ruling_samples: 8 }
    }
}

impl TessellationParams {
    pub fn validate(&self) -> Result<()> {
        if self.arc_samples < 2 || self.ruling_samples < 2 {
            return Err(Error::config("tessellation", "sample counts must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatchKind {
    Planar,
    Conical,
    Spherical,
}

impl PatchKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Planar => "planar",
            Self::Conical => "conical",
            Self::Spherical => "spherical",
        }
    }
}

/// Indexed triangle mesh with a patch label per triangle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[usize; 3]>,
    pub labels: Vec<PatchKind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeReport {
    pub interior_edges: usize,
    pub border_edges: usize,
    /// Edges used by more than two triangles.
    pub nonmanifold_edges: usize,
    /// Vertices with an odd number of border edges.
    pub open_border_vertices: usize,
}

impl EdgeReport {
    pub fn is_watertight(&self) -> bool {
        self.nonmanifold_edges == 0 && self.open_border_vertices == 0
    }
}

impl TriMesh {
    pub fn edge_report(&self) -> EdgeReport {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut degree = vec![0usize; self.vertices.len()];
        let mut report = EdgeReport {
            interior_edges: 0,
            border_edges: 0,
            nonmanifold_edges: 0,
            open_border_vertices: 0,
        };
        for (&(a, b), &c) in &count {
            match c {
                1 => {
                    report.border_edges += 1;
                    degree[a] += 1;
                    degree[b] += 1;
                }
                2 => report.interior_edges += 1,
                _ => report.nonmanifold_edges += 1,
            }
        }
        report.open_border_vertices = degree.iter().filter(|&&d| d % 2 == 1).count();
        report
    }
}

/// Structural identity of a tessellation sample, so that patches sharing a
/// boundary share vertex indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Key {
    /// Contact of face with vertex plane.
    Contact { face: (usize, usize), vertex: (usize, usize) },
    /// Interior sample `k` of the contact arc of `face` with the cone on the
    /// edge starting at `vertex` and running along rows (`along_j`) or columns.
    ConeArc { vertex: (usize, usize), along_j: bool, face: (usize, usize), k: usize },
    /// Interior sample of a border arc of `face`.
    BorderArc { face: (usize, usize), side: u8, k: usize },
    /// Interior grid sample of a spherical face.
    Inner { face: (usize, usize), a: usize, b: usize },
}

struct Builder {
    mesh: TriMesh,
    index: HashMap<Key, usize>,
}

impl Builder {
    fn vertex(&mut self, key: Key, p: Vector3<f64>) -> usize {
        *self.index.entry(key).or_insert_with(|| {
            self.mesh.vertices.push(p);
            self.mesh.vertices.len() - 1
        })
    }

    /// Triangulates a grid of vertex indices `g[row][col]`.
    fn grid(&mut self, g: &[Vec<usize>], kind: PatchKind) {
        for a in 0..g.len() - 1 {
            for b in 0..g[a].len() - 1 {
                let (p00, p01, p10, p11) = (g[a][b], g[a][b + 1], g[a + 1][b], g[a + 1][b + 1]);
                self.mesh.triangles.push([p00, p01, p11]);
                self.mesh.triangles.push([p00, p11, p10]);
                self.mesh.labels.push(kind);
                self.mesh.labels.push(kind);
            }
        }
    }
}

/// Unit normals from `n0` to `n1` along the shorter arc of the normal circle
/// of `fam`, `count` samples with both ends included.
fn cone_normals(fam: &SphereFamily, n0: &Vector3<f64>, n1: &Vector3<f64>, count: usize) -> Vec<Vector3<f64>> {
    let circle = fam.normal_circle();
    let (phi0, phi1) = (circle.angle_of(n0), circle.angle_of(n1));
    let mut delta = phi1 - phi0;
    if delta > PI {
        delta -= 2.0 * PI;
    } else if delta < -PI {
        delta += 2.0 * PI;
    }
    (0..count)
        .map(|k| circle.normal(phi0 + delta * k as f64 / (count - 1) as f64))
        .collect()
}

fn on_sphere(s: &OrSphere, p: &Vector3<f64>) -> Vector3<f64> {
    let d = p - s.center;
    let len = d.norm();
    if len == 0.0 {
        s.center
    } else {
        s.center + d * (s.radius.abs() / len)
    }
}

fn great_arc(s: &OrSphere, x0: &Vector3<f64>, x1: &Vector3<f64>, count: usize) -> Vec<Vector3<f64>> {
    let (d0, d1) = (x0 - s.center, x1 - s.center);
    let omega = d0.angle(&d1);
    (0..count)
        .map(|k| {
            let t = k as f64 / (count - 1) as f64;
            let d = if omega > 1e-12 {
                (d0 * ((1.0 - t) * omega).sin() + d1 * (t * omega).sin()) / omega.sin()
            } else {
                d0 * (1.0 - t) + d1 * t
            };
            s.center + d
        })
        .collect()
}

/// Triangulates a verified net into planar vertex quads, cone strips and
/// spherical faces. Shared patch borders reuse the same vertices.
pub fn tessellate(net: &LNet, params: &TessellationParams) -> Result<TriMesh> {
    params.validate()?;
    let report = verify(net, TOL_OC);
    if !report.is_lnet {
        return Err(Error::NotVerified {
            max_residual: report.max_contact_residual,
            inadmissible: report.num_inadmissible_edges,
        });
    }
    let (m, n) = net.faces();
    let mut bld = Builder { mesh: TriMesh::default(), index: HashMap::new() };
    let contact = |bld: &mut Builder, face: (usize, usize), vertex: (usize, usize)| {
        bld.vertex(Key::Contact { face, vertex }, net.contact_point(face, vertex))
    };
    let k_cone = params.ruling_samples;

    // samples of the contact arc of `face` with the cone on the edge from
    // `vertex` along j (or i), from that vertex to the next one
    let cone_arc = |bld: &mut Builder, vertex: (usize, usize), along_j: bool, face: (usize, usize), other: (usize, usize)| {
        let end = if along_j { (vertex.0, vertex.1 + 1) } else { (vertex.0 + 1, vertex.1) };
        let s = *net.sphere(face.0, face.1);
        let fam = SphereFamily::new(s, *net.sphere(other.0, other.1)).expect("verified net is admissible");
        let normals = cone_normals(&fam, &net.plane(vertex.0, vertex.1).normal, &net.plane(end.0, end.1).normal, k_cone);
        (0..k_cone)
            .map(|k| {
                if k == 0 {
                    contact(bld, face, vertex)
                } else if k + 1 == k_cone {
                    contact(bld, face, end)
                } else {
                    bld.vertex(Key::ConeArc { vertex, along_j, face, k }, s.contact_point(&normals[k]))
                }
            })
            .collect::<Vec<_>>()
    };

    // planar quads at interior vertices
    for i in 1..m {
        for j in 1..n {
            let g = vec![
                vec![contact(&mut bld, (i - 1, j - 1), (i, j)), contact(&mut bld, (i - 1, j), (i, j))],
                vec![contact(&mut bld, (i, j - 1), (i, j)), contact(&mut bld, (i, j), (i, j))],
            ];
            bld.grid(&g, PatchKind::Planar);
        }
    }

    // cone strips on interior edges along j (between faces (i-1, j) and (i, j))
    for i in 1..m {
        for j in 0..n {
            let top = cone_arc(&mut bld, (i, j), true, (i - 1, j), (i, j));
            let bottom = cone_arc(&mut bld, (i, j), true, (i, j), (i - 1, j));
            bld.grid(&[top, bottom], PatchKind::Conical);
        }
    }
    // cone strips on interior edges along i (between faces (i, j-1) and (i, j))
    for i in 0..m {
        for j in 1..n {
            let left = cone_arc(&mut bld, (i, j), false, (i, j - 1), (i, j));
            let right = cone_arc(&mut bld, (i, j), false, (i, j), (i, j - 1));
            let g: Vec<Vec<usize>> = left.into_iter().zip(right).map(|(a, b)| vec![a, b]).collect();
            bld.grid(&g, PatchKind::Conical);
        }
    }

    // spherical faces
    for i in 0..m {
        for j in 0..n {
            let s = *net.sphere(i, j);
            let face = (i, j);
            let count_j = if m > 1 { k_cone } else { params.arc_samples };
            let count_i = if n > 1 { k_cone } else { params.arc_samples };
            let border = |bld: &mut Builder, side: u8, from: (usize, usize), to: (usize, usize), count: usize| {
                let pts = great_arc(&s, &net.contact_point(face, from), &net.contact_point(face, to), count);
                (0..count)
                    .map(|k| {
                        if k == 0 {
                            contact(bld, face, from)
                        } else if k + 1 == count {
                            contact(bld, face, to)
                        } else {
                            bld.vertex(Key::BorderArc { face, side, k }, pts[k])
                        }
                    })
                    .collect::<Vec<_>>()
            };
            let top = if i > 0 {
                cone_arc(&mut bld, (i, j), true, face, (i - 1, j))
            } else {
                border(&mut bld, 0, (i, j), (i, j + 1), count_j)
            };
            let bottom = if i + 1 < m {
                cone_arc(&mut bld, (i + 1, j), true, face, (i + 1, j))
            } else {
                border(&mut bld, 1, (i + 1, j), (i + 1, j + 1), count_j)
            };
            let left = if j > 0 {
                cone_arc(&mut bld, (i, j), false, face, (i, j - 1))
            } else {
                border(&mut bld, 2, (i, j), (i + 1, j), count_i)
            };
            let right = if j + 1 < n {
                cone_arc(&mut bld, (i, j + 1), false, face, (i, j + 1))
            } else {
                border(&mut bld, 3, (i, j + 1), (i + 1, j + 1), count_i)
            };
            let (na, nb) = (left.len(), top.len());
            let pos = |idx: usize, bld: &Builder| bld.mesh.vertices[idx];
            let (p00, p01, p10, p11) = (pos(top[0], &bld), pos(top[nb - 1], &bld), pos(bottom[0], &bld), pos(bottom[nb - 1], &bld));
            let mut g = vec![vec![0usize; nb]; na];
            for a in 0..na {
                for b in 0..nb {
                    g[a][b] = if a == 0 {
                        top[b]
                    } else if a + 1 == na {
                        bottom[b]
                    } else if b == 0 {
                        left[a]
                    } else if b + 1 == nb {
                        right[a]
                    } else {
                        let (t, u) = (a as f64 / (na - 1) as f64, b as f64 / (nb - 1) as f64);
                        let coons = pos(top[b], &bld) * (1.0 - t)
                            + pos(bottom[b], &bld) * t
                            + pos(left[a], &bld) * (1.0 - u)
                            + pos(right[a], &bld) * u
                            - (p00 * ((1.0 - u) * (1.0 - t)) + p01 * (u * (1.0 - t)) + p10 * ((1.0 - u) * t) + p11 * (u * t));
                        bld.vertex(Key::Inner { face, a, b }, on_sphere(&s, &coons))
                    };
                }
            }
            bld.grid(&g, PatchKind::Spherical);
        }
    }
    Ok(bld.mesh)
}

/// Exact constant-radius net: sphere centers on a translational surface
/// form planar quads, vertex planes carry them, then everything is offset
/// by `r`.
#[cfg(test)]
pub(crate) fn exact_net(m: usize, n: usize, r: f64) -> LNet {
    let f = |t: f64| Vector3::new(0.3 * t, 0.0, 0.05 * t * t);
    let g = |t: f64| Vector3::new(0.02 * t * t, 0.3 * t, 0.08 * t * t);
    let center = |i: usize, j: usize| f(i as f64) + g(j as f64);
    let mut planes = Vec::new();
    for i in 0..=m {
        for j in 0..=n {
            let (s, t) = (i as f64, j as f64);
            let normal = (f(s) - f(s - 1.0)).cross(&(g(t) - g(t - 1.0))).normalize();
            let c = f(s) + g(t);
            planes.push(OrPlane::new(normal, -normal.dot(&c) + r));
        }
    }
    let spheres = (0..m)
        .flat_map(|i| (0..n).map(move |j| OrSphere::new(center(i, j), r)))
        .collect();
    LNet::new(m, n, planes, spheres).unwrap()
}
