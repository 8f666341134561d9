//! End-to-end runs: config parsing, the staged pipeline, artifact writing
//! and log reports.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::conjugacy::CongruenceSpec;
use crate::error::{Error, Result};
use crate::field::{trace_grid, AngleField, GridSpec, SurfaceField};
use crate::lnet::{initialize, tessellate, verify, LNet, PatchKind, TessellationParams, TriMesh, TOL_OC};
use crate::optimize::{lm_run, read_log, write_log, LogRow, Phase, Schedule, Weights, LOG_HEADER};
use crate::surface::BSplineSurface;

pub const FORMAT_VERSION: u32 = 1;

fn format_version() -> u32 {
    FORMAT_VERSION
}

/// Radius assignment of the attached sphere congruence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Congruence {
    /// `r = tau * min(rho1, rho2)`.
    Tau(f64),
    /// Constant radius; radii stay fixed during optimization.
    Radius(f64),
}

impl Congruence {
    pub fn spec(&self) -> Result<CongruenceSpec> {
        match *self {
            Self::Tau(t) => CongruenceSpec::tau(t),
            Self::Radius(r) if r > 0.0 && r.is_finite() => Ok(CongruenceSpec::constant(r)),
            Self::Radius(_) => Err(Error::config("congruence.radius", "must be positive")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "format_version")]
    pub format_version: u32,
    /// Surface file; the built-in elliptic cap when absent. Relative paths
    /// resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<PathBuf>,
    pub congruence: Congruence,
    pub theta: AngleField,
    pub grid: GridSpec,
    #[serde(default)]
    pub weights: Weights,
    #[serde(default)]
    pub schedule: Schedule,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tessellation: TessellationParams,
    /// Recorded for reproducibility; the pipeline itself draws no random numbers.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config and resolves its relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_json(&fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(s) = &cfg.surface {
            if s.is_relative() {
                cfg.surface = Some(base.join(s));
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::config("format_version", format!("expected {FORMAT_VERSION}")));
        }
        self.congruence.spec()?;
        self.theta.validate()?;
        self.grid.validate()?;
        self.weights.validate()?;
        self.schedule.validate()?;
        self.tessellation.validate()?;
        Ok(())
    }

    /// The schedule actually run: constant-radius congruences freeze radii.
    pub fn effective_schedule(&self) -> Schedule {
        Schedule {
            freeze_radii: self.schedule.freeze_radii || matches!(self.congruence, Congruence::Radius(_)),
            ..self.schedule
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifacts {
    pub lnet: PathBuf,
    pub mesh: PathBuf,
    pub log: PathBuf,
    pub summary: PathBuf,
}

impl Artifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            lnet: dir.join("lnet.json"),
            mesh: dir.join("mesh.obj"),
            log: dir.join("log.csv"),
            summary: dir.join("summary.json"),
        }
    }

    fn all(&self) -> [&Path; 4] {
        [&self.lnet, &self.mesh, &self.log, &self.summary]
    }
}

/// Per-run record mirroring the parameter, weight and residual columns of
/// the iteration log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format_version: u32,
    pub config: RunConfig,
    pub surface: String,
    pub faces: [usize; 2],
    pub iterations: usize,
    pub final_pass_iters: usize,
    /// `E_oc + E_prox + E_tan` after the last iteration.
    pub residual: f64,
    pub e_oc: f64,
    pub e_prox: f64,
    pub e_tan: f64,
    pub max_contact_residual: f64,
    pub ms_per_iter: f64,
    pub fallback_footpoints: usize,
    pub mesh_vertices: usize,
    pub mesh_triangles: usize,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

/// Everything a run produces, before it is written to disk.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub net: LNet,
    pub mesh: TriMesh,
    pub log: Vec<LogRow>,
    pub summary: Summary,
}

/// Runs all stages in memory.
pub fn run_stages(cfg: &RunConfig) -> Result<RunResult> {
    stage("config", cfg.validate())?;
    let spec = stage("config", cfg.congruence.spec())?;
    let (surface, surface_name) = match &cfg.surface {
        Some(p) => (stage("surface", BSplineSurface::load(p))?, p.display().to_string()),
        None => (BSplineSurface::builtin_cap(), "builtin:elliptic_cap".to_string()),
    };
    let t0 = Instant::now();
    let field = SurfaceField { surface: &surface, spec: &spec, angles: cfg.theta };
    let grid = stage("grid", trace_grid(&field, &cfg.grid))?;
    info!("traced a {} x {} grid in {:.1?}", grid.rows(), grid.cols(), t0.elapsed());
    let init = stage("initialize", initialize(&grid, &surface, &spec))?;
    let sched = cfg.effective_schedule();
    let out = stage("optimize", lm_run(&init, &surface, &cfg.weights, &sched))?;
    let report = verify(&out.net, TOL_OC);
    info!("max contact residual {:e}", report.max_contact_residual);
    let mesh = stage("tessellate", tessellate(&out.net, &cfg.tessellation))?;
    let last = out.log.last().copied().expect("at least one iteration");
    let summary = Summary {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        surface: surface_name,
        faces: [out.net.faces().0, out.net.faces().1],
        iterations: out.main_iters,
        final_pass_iters: out.log.iter().filter(|r| r.phase == Phase::Final).count(),
        residual: last.terms().combined(),
        e_oc: last.e_oc,
        e_prox: last.e_prox,
        e_tan: last.e_tan,
        max_contact_residual: report.max_contact_residual,
        ms_per_iter: out.log.iter().map(|r| r.ms).sum::<f64>() / out.log.len() as f64,
        fallback_footpoints: out.fallback_footpoints,
        mesh_vertices: mesh.vertices.len(),
        mesh_triangles: mesh.triangles.len(),
    };
    Ok(RunResult { net: out.net, mesh, log: out.log, summary })
}

/// Runs the pipeline and writes its artifacts into the configured output
/// directory. On failure, artifacts written by this run are removed.
pub fn run_pipeline(cfg: &RunConfig) -> Result<(Artifacts, Summary)> {
    let result = run_stages(cfg)?;
    let artifacts = Artifacts::in_dir(&cfg.output_dir);
    let written = write_artifacts(&artifacts, &result);
    if let Err(e) = written {
        for p in artifacts.all() {
            let _ = fs::remove_file(p);
        }
        return Err(e.at_stage("write"));
    }
    Ok((artifacts, result.summary))
}

fn write_artifacts(a: &Artifacts, r: &RunResult) -> Result<()> {
    fs::create_dir_all(a.lnet.parent().unwrap_or(Path::new(".")))?;
    fs::write(&a.lnet, r.net.to_json())?;
    export_obj(&r.mesh, &a.mesh)?;
    write_log(BufWriter::new(fs::File::create(&a.log)?), &r.log)?;
    fs::write(&a.summary, serde_json::to_string_pretty(&r.summary)? + "\n")?;
    Ok(())
}

/// Writes `mesh` as OBJ with one group per patch kind.
pub fn write_obj<W: Write>(mesh: &TriMesh, out: &mut W) -> std::io::Result<()> {
    writeln!(out, "# lnet tessellation")?;
    writeln!(out, "# vertices {} triangles {}", mesh.vertices.len(), mesh.triangles.len())?;
    for v in &mesh.vertices {
        writeln!(out, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z)?;
    }
    for kind in [PatchKind::Planar, PatchKind::Conical, PatchKind::Spherical] {
        let mut tris = mesh.triangles.iter().zip(&mesh.labels).filter(|(_, &l)| l == kind).peekable();
        if tris.peek().is_none() {
            continue;
        }
        writeln!(out, "g {}", kind.name())?;
        for (t, _) in tris {
            writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
    }
    Ok(())
}

pub fn export_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_obj(mesh, &mut out)?;
    out.flush()?;
    Ok(())
}

/// One row of a run report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub run: usize,
    pub iterations: usize,
    pub final_pass_iters: usize,
    pub residual: f64,
    pub e_oc: f64,
    pub e_prox: f64,
    pub e_tan: f64,
    pub ms_per_iter: f64,
}

/// Splits a log into runs. A run starts at a header line or where the
/// iteration counter restarts at 1; runs keep their order in the file.
pub fn read_runs(text: &str) -> Result<Vec<Vec<LogRow>>> {
    let header = LOG_HEADER.join(",");
    let mut chunks: Vec<String> = Vec::new();
    for line in text.lines() {
        if line.trim() == header {
            chunks.push(String::new());
        }
        match chunks.last_mut() {
            Some(c) => {
                c.push_str(line);
                c.push('\n');
            }
            None => return Err(Error::MalformedLog(format!("expected header `{header}`"))),
        }
    }
    if chunks.is_empty() {
        return Err(Error::MalformedLog("empty log".into()));
    }
    let mut runs = Vec::new();
    for chunk in chunks {
        let mut current: Vec<LogRow> = Vec::new();
        for row in read_log(chunk.as_bytes())? {
            if row.iter == 1 && !current.is_empty() {
                runs.push(std::mem::take(&mut current));
            }
            current.push(row);
        }
        if !current.is_empty() {
            runs.push(current);
        }
    }
    Ok(runs)
}

pub fn report_rows(runs: &[Vec<LogRow>]) -> Vec<ReportRow> {
    runs.iter()
        .enumerate()
        .map(|(k, rows)| {
            let last = rows.last().expect("runs are nonempty");
            let t = last.terms();
            ReportRow {
                run: k + 1,
                iterations: rows.iter().filter(|r| r.phase == Phase::Main).count(),
                final_pass_iters: rows.iter().filter(|r| r.phase == Phase::Final).count(),
                residual: t.combined(),
                e_oc: t.oc,
                e_prox: t.prox,
                e_tan: t.tan,
                ms_per_iter: rows.iter().map(|r| r.ms).sum::<f64>() / rows.len() as f64,
            }
        })
        .collect()
}

pub fn render_report(rows: &[ReportRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>4} {:>6} {:>6} {:>12} {:>12} {:>12} {:>12} {:>10}",
        "run", "iter", "final", "residual", "E_oc", "E_prox", "E_tan", "ms/iter"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:>4} {:>6} {:>6} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e} {:>10.2}",
            r.run, r.iterations, r.final_pass_iters, r.residual, r.e_oc, r.e_prox, r.e_tan, r.ms_per_iter
        );
    }
    s
}

/// Reads a log file and renders one row per run.
pub fn report(log: &Path) -> Result<String> {
    let runs = read_runs(&fs::read_to_string(log)?)?;
    Ok(render_report(&report_rows(&runs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::TermEnergies;
    use nalgebra::Vector3;

    fn config_json(tau: f64) -> String {
        format!(
            r#"{{
  "congruence": {{"tau": {tau}}},
  "theta": {{"family": "constant", "theta": 0.7853981633974483}},
  "grid": {{"rows": 5, "cols": 5, "edge_length": 0.2}},
  "schedule": {{"max_iters": 10}},
  "output_dir": "out"
}}"#
        )
    }

    #[test]
    fn config_validation_names_the_field() {
        let cfg = RunConfig::from_json(&config_json(0.75)).unwrap();
        assert_eq!(cfg.weights, Weights::default());
        assert_eq!(cfg.tessellation, TessellationParams::default());
        match RunConfig::from_json(&config_json(1.2)) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "tau"),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::from_json(&config_json(0.5).replacen('{', "{\"bogus\": 1,", 1)).is_err());
    }

    #[test]
    fn constant_radius_freezes_radii() {
        let mut cfg = RunConfig::from_json(&config_json(0.5)).unwrap();
        assert!(!cfg.effective_schedule().freeze_radii);
        cfg.congruence = Congruence::Radius(0.3);
        assert!(cfg.effective_schedule().freeze_radii);
        cfg.congruence = Congruence::Radius(-1.0);
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }

    fn quad() -> TriMesh {
        TriMesh {
            vertices: vec![Vector3::zeros(), Vector3::x(), Vector3::new(1.0, 1.0, 0.0), Vector3::y()],
            triangles: vec![[0, 1, 2], [0, 2, 3]],
            labels: vec![PatchKind::Planar; 2],
        }
    }

    #[test]
    fn obj_planar_quad() {
        let mut buf = Vec::new();
        write_obj(&quad(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 2);
        assert_eq!(text.lines().filter(|l| l.starts_with("g ")).collect::<Vec<_>>(), ["g planar"]);
        assert!(text.contains("v 1.0000000000000000e0 1.0000000000000000e0 0.0000000000000000e0"));
        assert!(text.contains("f 1 2 3"));
    }

    #[test]
    fn obj_shared_vertices_once() {
        let mut mesh = quad();
        mesh.labels[1] = PatchKind::Spherical;
        let mut buf = Vec::new();
        write_obj(&mesh, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 4);
        let groups: Vec<_> = text.lines().filter(|l| l.starts_with("g ")).collect();
        assert_eq!(groups, ["g planar", "g spherical"]);
    }

    #[test]
    fn obj_empty_mesh() {
        let mut buf = Vec::new();
        write_obj(&TriMesh::default(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().all(|l| l.starts_with('#')));
        assert!(!text.is_empty());
    }

    fn rows(n: usize, final_pass: usize, oc: f64) -> Vec<LogRow> {
        let t = TermEnergies { oc, prox: 1e-14, tan: 2e-14, ..Default::default() };
        (1..=n + final_pass)
            .map(|i| {
                let phase = if i <= n { Phase::Main } else { Phase::Final };
                LogRow::new(i, phase, 1.0, t, 2.0, &Weights::default())
            })
            .collect()
    }

    #[test]
    fn report_counts_iterations() {
        let mut buf = Vec::new();
        write_log(&mut buf, &rows(100, 20, 1e-20)).unwrap();
        let runs = read_runs(std::str::from_utf8(&buf).unwrap()).unwrap();
        let table = report_rows(&runs);
        assert_eq!(table.len(), 1);
        assert_eq!(table[0].iterations, 100);
        assert_eq!(table[0].final_pass_iters, 20);
        assert!(table[0].residual <= 1e-12);
        assert!(render_report(&table).lines().nth(1).unwrap().contains(" 100 "));
    }

    #[test]
    fn report_two_appended_runs() {
        let mut a = Vec::new();
        write_log(&mut a, &rows(3, 1, 1.0)).unwrap();
        let mut b = Vec::new();
        write_log(&mut b, &rows(5, 2, 2.0)).unwrap();
        let text = String::from_utf8([a.clone(), b].concat()).unwrap();
        let table = report_rows(&read_runs(&text).unwrap());
        assert_eq!(table.iter().map(|r| (r.run, r.iterations, r.e_oc)).collect::<Vec<_>>(), [(1, 3, 1.0), (2, 5, 2.0)]);
        let mut c = String::from_utf8(a).unwrap();
        for line in String::from_utf8({
            let mut b = Vec::new();
            write_log(&mut b, &rows(2, 0, 3.0)).unwrap();
            b
        })
        .unwrap()
        .lines()
        .skip(1)
        {
            c.push_str(line);
            c.push('\n');
        }
        assert_eq!(report_rows(&read_runs(&c).unwrap()).len(), 2);
    }

    #[test]
    fn malformed_logs() {
        assert!(matches!(read_runs(""), Err(Error::MalformedLog(_))));
        assert!(matches!(read_runs("iter,x\n1,2\n"), Err(Error::MalformedLog(_))));
        let mut buf = Vec::new();
        write_log(&mut buf, &rows(1, 0, 1.0)).unwrap();
        let text = String::from_utf8(buf).unwrap() + "2,oops\n";
        assert!(matches!(read_runs(&text), Err(Error::MalformedLog(_))));
    }
}
