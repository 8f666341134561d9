//! Sparse Levenberg-Marquardt refinement of an initialized L-net.
//!
//! Variables are laid out as `(cx, cy, cz, r)` per sphere in row-major face
//! order, followed by `(nx, ny, nz, h)` per plane in row-major vertex order.
//! Every residual block is scaled by the square root of its weight, so the
//! total energy is the plain sum of squared residuals.

use std::io::{Read, Write};
use std::ops::Range;
use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::{Mat, Par, Side};
use log::{debug, warn};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lnet::{face_triples, plane_triples, LNet};
use crate::surface::{BSplineSurface, Projector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Weights {
    pub w_oc: f64,
    pub w_lfair: f64,
    pub w_gfair: f64,
    pub w_prox: f64,
    pub w_tan: f64,
    pub w_td: f64,
    pub w_reg: f64,
    pub w_unit: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            w_oc: 1.0,
            w_lfair: 1e-3,
            w_gfair: 1e-3,
            w_prox: 1e-4,
            w_tan: 1e-4,
            w_td: 1e-5,
            w_reg: 1e-4,
            w_unit: 10.0,
        }
    }
}

impl Weights {
    /// All weights zero.
    pub fn zero() -> Self {
        Self {
            w_oc: 0.0,
            w_lfair: 0.0,
            w_gfair: 0.0,
            w_prox: 0.0,
            w_tan: 0.0,
            w_td: 0.0,
            w_reg: 0.0,
            w_unit: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("w_oc", self.w_oc),
            ("w_lfair", self.w_lfair),
            ("w_gfair", self.w_gfair),
            ("w_prox", self.w_prox),
            ("w_tan", self.w_tan),
            ("w_td", self.w_td),
            ("w_reg", self.w_reg),
            ("w_unit", self.w_unit),
        ];
        for (name, w) in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config(format!("weights.{name}"), "must be finite and nonnegative"));
            }
        }
        Ok(())
    }

    /// Weights at 1-based main iteration `iter`: fairness decays by
    /// `sched.fairness_decay` every `sched.decay_every` iterations.
    pub fn at_iteration(&self, sched: &Schedule, iter: usize) -> Self {
        let k = (iter.max(1) - 1) / sched.decay_every;
        let f = sched.fairness_decay.powi(k as i32);
        Self { w_lfair: self.w_lfair * f, w_gfair: self.w_gfair * f, ..*self }
    }

    /// Weights of the contact-only pass. The regularizer stays on as damping.
    pub fn contact_only(&self) -> Self {
        Self { w_oc: self.w_oc, w_unit: self.w_unit, w_reg: self.w_reg, ..Self::zero() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    pub max_iters: usize,
    pub fairness_decay: f64,
    pub decay_every: usize,
    pub final_pass_iters: usize,
    /// Stop when the relative change of the total energy stays below this
    /// for `stop_window` consecutive iterations.
    pub stop_rel_change: f64,
    pub stop_window: usize,
    /// Keep sphere radii at their initial values.
    pub freeze_radii: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            max_iters: 100,
            fairness_decay: 0.1,
            decay_every: 10,
            final_pass_iters: 20,
            stop_rel_change: 1e-14,
            stop_window: 3,
            freeze_radii: false,
        }
    }
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("schedule.max_iters", "must be positive"));
        }
        if self.decay_every == 0 || self.stop_window == 0 {
            return Err(Error::config("schedule", "decay_every and stop_window must be positive"));
        }
        if !(self.fairness_decay > 0.0 && self.fairness_decay <= 1.0) {
            return Err(Error::config("schedule.fairness_decay", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BlockKind {
    Unit,
    Oc,
    LFair,
    GFair,
    Prox,
    Tan,
    Td,
    Reg,
}

impl BlockKind {
    pub const ALL: [BlockKind; 8] = [
        Self::Unit,
        Self::Oc,
        Self::LFair,
        Self::GFair,
        Self::Prox,
        Self::Tan,
        Self::Td,
        Self::Reg,
    ];

    fn weight(self, w: &Weights) -> f64 {
        match self {
            Self::Unit => w.w_unit,
            Self::Oc => w.w_oc,
            Self::LFair => w.w_lfair,
            Self::GFair => w.w_gfair,
            Self::Prox => w.w_prox,
            Self::Tan => w.w_tan,
            Self::Td => w.w_td,
            Self::Reg => w.w_reg,
        }
    }
}

/// Row-compressed sparse matrix.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRows {
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRows {
    pub fn new(ncols: usize) -> Self {
        Self { ncols, row_ptr: vec![0], ..Default::default() }
    }

    pub fn nrows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    /// Appends a row; duplicate columns are summed and columns sorted.
    pub fn push_row(&mut self, entries: &mut Vec<(usize, f64)>) {
        entries.sort_by_key(|e| e.0);
        let start = self.cols.len();
        for &(c, v) in entries.iter() {
            if self.cols.len() > start && *self.cols.last().unwrap() == c {
                *self.vals.last_mut().unwrap() += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.row_ptr.push(self.cols.len());
        entries.clear();
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map(|k| v[k]).unwrap_or(0.0)
    }

    /// `J^T r`.
    pub fn transpose_mul(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.ncols];
        for i in 0..self.nrows() {
            let (c, v) = self.row(i);
            for (&j, &x) in c.iter().zip(v) {
                out[j] += x * r[i];
            }
        }
        out
    }
}

/// Residual vector, its block structure, and optionally the Jacobian.
#[derive(Clone, Debug, Default)]
pub struct ResidualSystem {
    pub residuals: Vec<f64>,
    pub blocks: Vec<(BlockKind, Range<usize>)>,
    pub jacobian: Option<SparseRows>,
}

impl ResidualSystem {
    pub fn energy(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }

    pub fn energy_of(&self, kind: BlockKind) -> f64 {
        self.blocks
            .iter()
            .filter(|(k, _)| *k == kind)
            .map(|(_, r)| self.residuals[r.clone()].iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn block(&self, kind: BlockKind) -> Option<Range<usize>> {
        self.blocks.iter().find(|(k, _)| *k == kind).map(|(_, r)| r.clone())
    }
}

/// A nonlinear least-squares problem with a sparse Jacobian.
pub trait LsqProblem {
    fn num_vars(&self) -> usize;
    fn residuals(&self, x: &[f64]) -> Vec<f64>;
    fn jacobian(&self, x: &[f64]) -> SparseRows;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JacobianMode {
    Analytic,
    FiniteDiff,
}

/// Jacobian by central differences with step `1e-6 (1 + |x_j|)`.
pub fn finite_diff_jacobian<P: LsqProblem + ?Sized>(p: &P, x: &[f64]) -> SparseRows {
    let n = p.num_vars();
    let m = p.residuals(x).len();
    let mut dense = vec![vec![0.0; n]; m];
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = 1e-6 * (1.0 + x[j].abs());
        xp[j] = x[j] + h;
        let rp = p.residuals(&xp);
        xp[j] = x[j] - h;
        let rm = p.residuals(&xp);
        xp[j] = x[j];
        for i in 0..m {
            dense[i][j] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    let mut out = SparseRows::new(n);
    let mut row = Vec::new();
    for d in dense {
        row.extend(d.into_iter().enumerate().filter(|e| e.1 != 0.0));
        out.push_row(&mut row);
    }
    out
}

pub fn jacobian<P: LsqProblem + ?Sized>(p: &P, x: &[f64], mode: JacobianMode) -> SparseRows {
    match mode {
        JacobianMode::Analytic => p.jacobian(x),
        JacobianMode::FiniteDiff => finite_diff_jacobian(p, x),
    }
}

/// Outcome of one damped Gauss-Newton step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub energy_before: f64,
    pub energy_after: f64,
    pub escalations: usize,
    pub accepted: bool,
}

struct NormalPattern {
    pairs: Vec<Pair<usize, usize>>,
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    llt: SymbolicLlt<usize>,
}

/// Levenberg-Marquardt driver with fixed damping supplied by the problem,
/// escalated by factors of ten on failure or energy increase.
pub struct LmSolver {
    /// Base of the escalation damping `base * 10^k`.
    pub escalation_base: f64,
    pub max_escalations: usize,
    /// Variables held constant.
    pub fixed: Vec<bool>,
    pattern: Option<NormalPattern>,
}

impl LmSolver {
    pub fn new(escalation_base: f64) -> Self {
        // sequential factorization keeps runs bit-reproducible
        faer::set_global_parallelism(Par::Seq);
        Self { escalation_base, max_escalations: 5, fixed: Vec::new(), pattern: None }
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.fixed.get(j).copied().unwrap_or(false)
    }

    fn solve(&mut self, jac: &SparseRows, rhs: &[f64], extra: f64) -> Result<Vec<f64>> {
        let n = jac.ncols;
        let mut pairs = Vec::new();
        let mut vals = Vec::new();
        for j in 0..n {
            pairs.push(Pair::new(j, j));
            vals.push(if self.is_fixed(j) { 1.0 } else { extra });
        }
        for i in 0..jac.nrows() {
            let (c, v) = jac.row(i);
            for q in 0..c.len() {
                if self.is_fixed(c[q]) {
                    continue;
                }
                for p in 0..=q {
                    if self.is_fixed(c[p]) {
                        continue;
                    }
                    pairs.push(Pair::new(c[q], c[p]));
                    vals.push(v[p] * v[q]);
                }
            }
        }
        let stale = self.pattern.as_ref().is_none_or(|p| p.pairs != pairs);
        if stale {
            let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(n, n, &pairs)
                .map_err(|e| Error::Factorization(format!("{e:?}")))?;
            let llt = SymbolicLlt::try_new(symbolic.as_ref(), Side::Lower)
                .map_err(|e| Error::Factorization(format!("{e:?}")))?;
            self.pattern = Some(NormalPattern { pairs, symbolic, argsort, llt });
        }
        let pat = self.pattern.as_ref().expect("pattern built");
        let h = SparseColMat::new_from_argsort(pat.symbolic.clone(), &pat.argsort, &vals)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let llt = Llt::try_new_with_symbolic(pat.llt.clone(), h.as_ref(), Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let mut b = Mat::<f64>::zeros(n, 1);
        for j in 0..n {
            b[(j, 0)] = if self.is_fixed(j) { 0.0 } else { rhs[j] };
        }
        llt.solve_in_place(&mut b);
        let delta: Vec<f64> = (0..n).map(|j| b[(j, 0)]).collect();
        if delta.iter().all(|d| d.is_finite()) {
            Ok(delta)
        } else {
            Err(Error::Factorization("non-finite step".into()))
        }
    }

    /// One step on `p` at `x`. The energy is compared with the problem as
    /// given, so a regularizer anchored at `x` acts as Levenberg damping.
    pub fn step<P: LsqProblem + ?Sized>(&mut self, p: &P, x: &mut [f64]) -> Result<StepInfo> {
        let r0 = p.residuals(x);
        let e0: f64 = r0.iter().map(|r| r * r).sum();
        let jac = p.jacobian(x);
        let g: Vec<f64> = jac.transpose_mul(&r0).into_iter().map(|v| -v).collect();
        let mut last_err = None;
        for k in 0..=self.max_escalations {
            let extra = if k == 0 { 0.0 } else { self.escalation_base * 10f64.powi(k as i32) };
            let delta = match self.solve(&jac, &g, extra) {
                Ok(d) => d,
                Err(e) => {
                    debug!("factorization failed with extra damping {extra:e}: {e}");
                    last_err = Some(e);
                    continue;
                }
            };
            let trial: Vec<f64> = x.iter().zip(&delta).map(|(a, d)| a + d).collect();
            let e1: f64 = p.residuals(&trial).iter().map(|r| r * r).sum();
            if e1 <= e0 {
                x.copy_from_slice(&trial);
                return Ok(StepInfo { energy_before: e0, energy_after: e1, escalations: k, accepted: true });
            }
            last_err = None;
        }
        match last_err {
            Some(e) => Err(e),
            None => Ok(StepInfo {
                energy_before: e0,
                energy_after: e0,
                escalations: self.max_escalations,
                accepted: false,
            }),
        }
    }
}

/// Variable offsets for a net with `rows x cols` faces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub rows: usize,
    pub cols: usize,
}

impl Layout {
    pub fn of(net: &LNet) -> Self {
        let (rows, cols) = net.faces();
        Self { rows, cols }
    }

    pub fn sphere(&self, i: usize, j: usize) -> usize {
        4 * (i * self.cols + j)
    }

    pub fn plane(&self, i: usize, j: usize) -> usize {
        4 * (self.rows * self.cols + i * (self.cols + 1) + j)
    }

    pub fn len(&self) -> usize {
        4 * (self.rows * self.cols + (self.rows + 1) * (self.cols + 1))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn to_vars(net: &LNet) -> Vec<f64> {
    let mut x = Vec::with_capacity(Layout::of(net).len());
    for s in net.spheres() {
        x.extend([s.center.x, s.center.y, s.center.z, s.radius]);
    }
    for p in net.planes() {
        x.extend([p.normal.x, p.normal.y, p.normal.z, p.intercept]);
    }
    x
}

pub fn apply_vars(net: &mut LNet, x: &[f64]) {
    let ns = net.spheres().len();
    for (k, s) in net.spheres_mut().iter_mut().enumerate() {
        s.center = Vector3::new(x[4 * k], x[4 * k + 1], x[4 * k + 2]);
        s.radius = x[4 * k + 3];
    }
    for (k, p) in net.planes_mut().iter_mut().enumerate() {
        let o = 4 * (ns + k);
        p.normal = Vector3::new(x[o], x[o + 1], x[o + 2]);
        p.intercept = x[o + 3];
    }
}

/// Closest-point data of one contact point, frozen during a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footpoint {
    pub u: f64,
    pub v: f64,
    pub foot: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub fallback: bool,
}

/// The face-corner incidences in canonical order.
fn incidences(l: &Layout) -> impl Iterator<Item = ((usize, usize), (usize, usize))> + '_ {
    (0..l.rows).flat_map(move |i| (0..l.cols).flat_map(move |j| LNet::corners(i, j).map(|v| ((i, j), v))))
}

/// Projects every contact point of `x` onto the surface, warm-started from
/// `previous` when given.
pub fn footpoints(
    layout: &Layout,
    x: &[f64],
    projector: &Projector,
    previous: Option<&[Footpoint]>,
) -> Vec<Footpoint> {
    incidences(layout)
        .enumerate()
        .map(|(k, (f, v))| {
            let p = contact(x, layout, f, v);
            let proj = match previous {
                Some(prev) => projector.project_from(&p, prev[k].u, prev[k].v),
                None => projector.project(&p),
            };
            Footpoint { u: proj.u, v: proj.v, foot: proj.foot, normal: proj.normal, fallback: proj.fallback }
        })
        .collect()
}

fn vec3(x: &[f64], o: usize) -> Vector3<f64> {
    Vector3::new(x[o], x[o + 1], x[o + 2])
}

fn contact(x: &[f64], l: &Layout, f: (usize, usize), v: (usize, usize)) -> Vector3<f64> {
    let s = l.sphere(f.0, f.1);
    let p = l.plane(v.0, v.1);
    vec3(x, s) - vec3(x, p) * x[s + 3]
}

/// The L-net energy with frozen footpoints and a fixed regularization anchor.
pub struct LNetProblem {
    pub layout: Layout,
    pub weights: Weights,
    pub footpoints: Vec<Footpoint>,
    pub x_prev: Vec<f64>,
}

/// Accumulates rows of one block.
struct Rows<'a> {
    res: &'a mut Vec<f64>,
    jac: Option<&'a mut SparseRows>,
    entries: Vec<(usize, f64)>,
    scale: f64,
}

impl Rows<'_> {
    fn push(&mut self, value: f64, entries: impl FnOnce(&mut Vec<(usize, f64)>)) {
        self.res.push(self.scale * value);
        if let Some(jac) = self.jac.as_deref_mut() {
            entries(&mut self.entries);
            for e in self.entries.iter_mut() {
                e.1 *= self.scale;
            }
            jac.push_row(&mut self.entries);
        }
    }
}

/// Signed sum of contact points `sigma_k (c_k - r_k n_k)` and its partials.
struct PointCombo {
    terms: [(f64, usize, usize); 4],
}

impl PointCombo {
    fn value(&self, x: &[f64]) -> Vector3<f64> {
        self.terms
            .iter()
            .map(|&(sg, s, p)| (vec3(x, s) - vec3(x, p) * x[s + 3]) * sg)
            .sum()
    }

    fn entries(&self, x: &[f64], axis: usize, out: &mut Vec<(usize, f64)>) {
        for &(sg, s, p) in &self.terms {
            out.push((s + axis, sg));
            out.push((s + 3, -sg * x[p + axis]));
            out.push((p + axis, -sg * x[s + 3]));
        }
    }
}

impl LNetProblem {
    pub fn new(layout: Layout, weights: Weights, footpoints: Vec<Footpoint>, x_prev: Vec<f64>) -> Self {
        Self { layout, weights, footpoints, x_prev }
    }

    pub fn assemble(&self, x: &[f64], with_jacobian: bool) -> ResidualSystem {
        let mut res = Vec::new();
        let mut jac = with_jacobian.then(|| SparseRows::new(self.layout.len()));
        let mut blocks = Vec::new();
        for kind in BlockKind::ALL {
            let w = kind.weight(&self.weights);
            if w == 0.0 {
                continue;
            }
            let start = res.len();
            let mut rows = Rows { res: &mut res, jac: jac.as_mut(), entries: Vec::new(), scale: w.sqrt() };
            self.block(kind, x, &mut rows);
            let end = res.len();
            if end > start {
                blocks.push((kind, start..end));
            }
        }
        ResidualSystem { residuals: res, blocks, jacobian: jac }
    }

    fn block(&self, kind: BlockKind, x: &[f64], rows: &mut Rows) {
        let l = &self.layout;
        match kind {
            BlockKind::Unit => {
                for i in 0..=l.rows {
                    for j in 0..=l.cols {
                        let p = l.plane(i, j);
                        let n = vec3(x, p);
                        rows.push(n.norm_squared() - 1.0, |e| {
                            e.extend((0..3).map(|a| (p + a, 2.0 * n[a])));
                        });
                    }
                }
            }
            BlockKind::Oc => {
                for (f, v) in incidences(l) {
                    let (s, p) = (l.sphere(f.0, f.1), l.plane(v.0, v.1));
                    let (c, n) = (vec3(x, s), vec3(x, p));
                    rows.push(c.dot(&n) + x[p + 3] - x[s + 3], |e| {
                        e.extend((0..3).map(|a| (s + a, n[a])));
                        e.push((s + 3, -1.0));
                        e.extend((0..3).map(|a| (p + a, c[a])));
                        e.push((p + 3, 1.0));
                    });
                }
            }
            BlockKind::LFair => {
                for t in face_triples(l.rows, l.cols) {
                    let s = t.spheres.map(|f| l.sphere(f.0, f.1));
                    let p = t.planes.map(|v| l.plane(v.0, v.1));
                    // a1 - a0 - a3 + a2 with a = (s0 p0, s1 p0, s1 p1, s2 p1)
                    let a = PointCombo { terms: [(-1.0, s[0], p[0]), (1.0, s[1], p[0]), (1.0, s[1], p[1]), (-1.0, s[2], p[1])] };
                    let b = PointCombo { terms: [(-1.0, s[0], p[3]), (1.0, s[1], p[3]), (1.0, s[1], p[2]), (-1.0, s[2], p[2])] };
                    combo_rows(&a, x, rows);
                    combo_rows(&b, x, rows);
                }
            }
            BlockKind::GFair => {
                for t in plane_triples(l.rows, l.cols) {
                    let p = t.planes.map(|v| l.plane(v.0, v.1));
                    let s = t.spheres.map(|f| l.sphere(f.0, f.1));
                    // alpha = (s0 pi, s0 pj, s1 pj, s1 pk), beta with s3, s2
                    let alpha = PointCombo { terms: [(-1.0, s[0], p[0]), (1.0, s[0], p[1]), (1.0, s[1], p[1]), (-1.0, s[1], p[2])] };
                    let beta = PointCombo { terms: [(-1.0, s[3], p[0]), (1.0, s[3], p[1]), (1.0, s[2], p[1]), (-1.0, s[2], p[2])] };
                    combo_rows(&alpha, x, rows);
                    combo_rows(&beta, x, rows);
                }
            }
            BlockKind::Prox => {
                for (k, (f, v)) in incidences(l).enumerate() {
                    let (s, p) = (l.sphere(f.0, f.1), l.plane(v.0, v.1));
                    let d = contact(x, l, f, v) - self.footpoints[k].foot;
                    for a in 0..3 {
                        rows.push(d[a], |e| {
                            e.push((s + a, 1.0));
                            e.push((s + 3, -x[p + a]));
                            e.push((p + a, -x[s + 3]));
                        });
                    }
                }
            }
            BlockKind::Tan => {
                for (k, (f, v)) in incidences(l).enumerate() {
                    let (s, p) = (l.sphere(f.0, f.1), l.plane(v.0, v.1));
                    let fp = &self.footpoints[k];
                    let nf = fp.normal;
                    let d = contact(x, l, f, v) - fp.foot;
                    rows.push(d.dot(&nf), |e| {
                        e.extend((0..3).map(|a| (s + a, nf[a])));
                        e.push((s + 3, -vec3(x, p).dot(&nf)));
                        e.extend((0..3).map(|a| (p + a, -x[s + 3] * nf[a])));
                    });
                }
            }
            BlockKind::Td => {
                let net_pairs = crate::lnet::adjacent_face_pairs(l.rows, l.cols);
                for (fa, fb) in net_pairs {
                    let (si, sj) = (l.sphere(fa.0, fa.1), l.sphere(fb.0, fb.1));
                    let dc = vec3(x, si) - vec3(x, sj);
                    let dr = x[si + 3] - x[sj + 3];
                    rows.push(dc.norm_squared() - dr * dr, |e| {
                        for a in 0..3 {
                            e.push((si + a, 2.0 * dc[a]));
                            e.push((sj + a, -2.0 * dc[a]));
                        }
                        e.push((si + 3, -2.0 * dr));
                        e.push((sj + 3, 2.0 * dr));
                    });
                }
            }
            BlockKind::Reg => {
                for k in 0..l.len() {
                    rows.push(x[k] - self.x_prev[k], |e| e.push((k, 1.0)));
                }
            }
        }
    }
}

fn combo_rows(c: &PointCombo, x: &[f64], rows: &mut Rows) {
    let v = c.value(x);
    for a in 0..3 {
        rows.push(v[a], |e| c.entries(x, a, e));
    }
}

impl LsqProblem for LNetProblem {
    fn num_vars(&self) -> usize {
        self.layout.len()
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.assemble(x, false).residuals
    }

    fn jacobian(&self, x: &[f64]) -> SparseRows {
        self.assemble(x, true).jacobian.expect("jacobian requested")
    }
}

/// Assembles the residual system of `net` with footpoints projected onto
/// `surface` and the regularizer anchored at `x_prev`.
pub fn assemble(net: &LNet, surface: &BSplineSurface, w: &Weights, x_prev: &[f64]) -> ResidualSystem {
    let layout = Layout::of(net);
    let x = to_vars(net);
    let projector = Projector::new(surface, Projector::DEFAULT_SAMPLES);
    let feet = footpoints(&layout, &x, &projector, None);
    LNetProblem::new(layout, *w, feet, x_prev.to_vec()).assemble(&x, true)
}

/// Unweighted energies of the individual terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TermEnergies {
    pub oc: f64,
    pub prox: f64,
    pub tan: f64,
    pub td: f64,
    pub lfair: f64,
    pub gfair: f64,
    pub unit: f64,
}

impl TermEnergies {
    pub fn of(layout: Layout, feet: &[Footpoint], x: &[f64]) -> Self {
        let unit = Weights { w_reg: 0.0, ..Weights::zero() };
        let w = Weights { w_oc: 1.0, w_lfair: 1.0, w_gfair: 1.0, w_prox: 1.0, w_tan: 1.0, w_td: 1.0, w_unit: 1.0, ..unit };
        let sys = LNetProblem::new(layout, w, feet.to_vec(), Vec::new()).assemble(x, false);
        Self {
            oc: sys.energy_of(BlockKind::Oc),
            prox: sys.energy_of(BlockKind::Prox),
            tan: sys.energy_of(BlockKind::Tan),
            td: sys.energy_of(BlockKind::Td),
            lfair: sys.energy_of(BlockKind::LFair),
            gfair: sys.energy_of(BlockKind::GFair),
            unit: sys.energy_of(BlockKind::Unit),
        }
    }

    /// Contact plus proximity residual.
    pub fn combined(&self) -> f64 {
        self.oc + self.prox + self.tan
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Main,
    Final,
}

/// One row of the iteration log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iter: usize,
    /// Weighted total at the end of the step.
    #[serde(rename = "E_total")]
    pub e_total: f64,
    #[serde(rename = "E_oc")]
    pub e_oc: f64,
    #[serde(rename = "E_prox")]
    pub e_prox: f64,
    #[serde(rename = "E_tan")]
    pub e_tan: f64,
    #[serde(rename = "E_td")]
    pub e_td: f64,
    #[serde(rename = "E_lfair")]
    pub e_lfair: f64,
    #[serde(rename = "E_gfair")]
    pub e_gfair: f64,
    #[serde(rename = "E_unit")]
    pub e_unit: f64,
    pub ms: f64,
    pub w_lfair: f64,
    pub w_gfair: f64,
    pub phase: Phase,
}

impl LogRow {
    pub fn new(iter: usize, phase: Phase, e_total: f64, t: TermEnergies, ms: f64, w: &Weights) -> Self {
        Self {
            iter,
            e_total,
            e_oc: t.oc,
            e_prox: t.prox,
            e_tan: t.tan,
            e_td: t.td,
            e_lfair: t.lfair,
            e_gfair: t.gfair,
            e_unit: t.unit,
            ms,
            w_lfair: w.w_lfair,
            w_gfair: w.w_gfair,
            phase,
        }
    }

    pub fn terms(&self) -> TermEnergies {
        TermEnergies {
            oc: self.e_oc,
            prox: self.e_prox,
            tan: self.e_tan,
            td: self.e_td,
            lfair: self.e_lfair,
            gfair: self.e_gfair,
            unit: self.e_unit,
        }
    }
}

pub const LOG_HEADER: [&str; 13] = [
    "iter", "E_total", "E_oc", "E_prox", "E_tan", "E_td", "E_lfair", "E_gfair", "E_unit", "ms", "w_lfair", "w_gfair",
    "phase",
];

pub fn write_log<W: Write>(out: W, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(LOG_HEADER).map_err(csv_error)?;
    }
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log<R: Read>(input: R) -> Result<Vec<LogRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_error)?;
    if !header.iter().eq(LOG_HEADER) {
        return Err(Error::MalformedLog(format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::MalformedLog(e.to_string())
}

#[derive(Clone, Debug)]
pub struct LmOutput {
    pub net: LNet,
    pub log: Vec<LogRow>,
    /// Iterations of the main phase actually run.
    pub main_iters: usize,
    pub fallback_footpoints: usize,
}

/// Runs the main phase with decaying fairness, then the contact-only pass.
pub fn lm_run(net: &LNet, surface: &BSplineSurface, weights: &Weights, sched: &Schedule) -> Result<LmOutput> {
    weights.validate()?;
    sched.validate()?;
    let layout = Layout::of(net);
    let projector = Projector::new(surface, Projector::DEFAULT_SAMPLES);
    let mut x = to_vars(net);
    let mut solver = LmSolver::new(weights.w_reg.max(1e-12));
    if sched.freeze_radii {
        solver.fixed = (0..layout.len()).map(|k| k < 4 * layout.rows * layout.cols && k % 4 == 3).collect();
    }
    let mut feet = footpoints(&layout, &x, &projector, None);
    let mut log = Vec::new();
    let mut fallback = 0;
    let mut quiet = 0;
    let mut main_iters = 0;
    let total = sched.max_iters + sched.final_pass_iters;
    for iter in 1..=total {
        let phase = if iter <= sched.max_iters { Phase::Main } else { Phase::Final };
        if phase == Phase::Main && quiet >= sched.stop_window {
            continue;
        }
        let t0 = Instant::now();
        feet = footpoints(&layout, &x, &projector, Some(&feet));
        fallback += feet.iter().filter(|f| f.fallback).count();
        let w = match phase {
            Phase::Main => weights.at_iteration(sched, iter),
            Phase::Final => weights.contact_only(),
        };
        let problem = LNetProblem::new(layout, w, feet.clone(), x.clone());
        let info = solver.step(&problem, &mut x)?;
        if !info.accepted {
            warn!("iteration {iter}: step rejected after {} escalations", info.escalations);
        }
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        let rel = (info.energy_before - info.energy_after).abs() / info.energy_before.max(f64::MIN_POSITIVE);
        if phase == Phase::Main {
            main_iters = iter;
            quiet = if rel < sched.stop_rel_change { quiet + 1 } else { 0 };
        }
        let terms = TermEnergies::of(layout, &feet, &x);
        log.push(LogRow::new(log.len() + 1, phase, info.energy_after, terms, ms, &w));
        debug!("iteration {iter}: E = {:e}, E_oc = {:e}", info.energy_after, terms.oc);
    }
    if fallback > 0 {
        warn!("{fallback} footpoint projections fell back to sampled seeds");
    }
    let mut out = net.clone();
    apply_vars(&mut out, &x);
    Ok(LmOutput { net: out, log, main_iters, fallback_footpoints: fallback })
}
