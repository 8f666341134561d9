//! C ABI for the lnet library.
//!
//! Objects cross the boundary as opaque handles created by constructor
//! functions and released by the matching `*_free`. Every fallible function
//! returns an `LNET_*` status code; the message of the last failure on the
//! calling thread is available from [`lnet_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use lnet::lnet::{tessellate, verify, LNet, TessellationParams};
use lnet::pipeline::{export_obj, run_stages, RunConfig};
use lnet::surface::BSplineSurface;
use lnet::Error;

pub const LNET_OK: i32 = 0;
pub const LNET_ERR_NULL: i32 = 1;
pub const LNET_ERR_INVALID_INPUT: i32 = 2;
pub const LNET_ERR_CONFIG: i32 = 3;
pub const LNET_ERR_GEOMETRY: i32 = 4;
pub const LNET_ERR_NOT_VERIFIED: i32 = 5;
pub const LNET_ERR_INDEX: i32 = 6;
pub const LNET_ERR_NUMERIC: i32 = 7;
pub const LNET_ERR_IO: i32 = 8;
pub const LNET_ERR_PARSE: i32 = 9;
pub const LNET_ERR_PANIC: i32 = 10;

/// A B-spline surface.
pub struct LnetSurface(BSplineSurface);

/// A discrete L-net.
pub struct LnetNet(LNet);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn code_of(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::Admissibility { .. } | Error::OutOfDomain { .. } => LNET_ERR_INVALID_INPUT,
        Error::Config { .. } => LNET_ERR_CONFIG,
        Error::Irregular { .. }
        | Error::Umbilic { .. }
        | Error::CurvatureSign { .. }
        | Error::SingularRadius { .. }
        | Error::Flat
        | Error::Tracing { .. } => LNET_ERR_GEOMETRY,
        Error::NotVerified { .. } => LNET_ERR_NOT_VERIFIED,
        Error::IndexOutOfRange { .. } => LNET_ERR_INDEX,
        Error::Factorization(_) => LNET_ERR_NUMERIC,
        Error::Io(_) => LNET_ERR_IO,
        Error::Json(_) | Error::MalformedLog(_) => LNET_ERR_PARSE,
        Error::Stage { source, .. } => code_of(source),
    }
}

/// Runs `f`, recording its error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (i32, String)>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            LNET_OK
        }
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            LNET_ERR_PANIC
        }
    }
}

fn fail(e: Error) -> (i32, String) {
    (code_of(&e), e.to_string())
}

fn null(what: &str) -> (i32, String) {
    (LNET_ERR_NULL, format!("`{what}` is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (i32, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (LNET_ERR_INVALID_INPUT, format!("`{what}` is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (i32, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn write3(p: *mut f64, v: &[f64], what: &str) -> Result<(), (i32, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    ptr::copy_nonoverlapping(v.as_ptr(), p, 3);
    Ok(())
}

/// Message of the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn lnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lnet_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates the built-in elliptic cap surface.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn lnet_surface_builtin(out: *mut *mut LnetSurface) -> i32 {
    guard(|| {
        *self::out(out, "out")? = Box::into_raw(Box::new(LnetSurface(BSplineSurface::builtin_cap())));
        Ok(())
    })
}

/// Parses a surface from its JSON file format.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn lnet_surface_from_json(json: *const c_char, out: *mut *mut LnetSurface) -> i32 {
    guard(|| {
        let text = str_arg(json, "json")?;
        let out = self::out(out, "out")?;
        let s = BSplineSurface::from_json(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(LnetSurface(s)));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lnet_surface_free(s: *mut LnetSurface) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Evaluates the surface point at `(u, v)` into `point[3]`.
///
/// # Safety
/// `s` must be a live handle; `point` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn lnet_surface_point(s: *const LnetSurface, u: f64, v: f64, point: *mut f64) -> i32 {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("surface"))?;
        let p = s.0.point(u, v).map_err(fail)?;
        write3(point, p.as_slice(), "point")
    })
}

/// Principal frame at `(u, v)`: unit principal directions `t1[3]`, `t2[3]`,
/// normal `n[3]` and curvatures `kappa[2]` with `kappa[0] >= kappa[1]`.
///
/// # Safety
/// `s` must be a live handle; output arrays must have the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn lnet_surface_frame(
    s: *const LnetSurface,
    u: f64,
    v: f64,
    t1: *mut f64,
    t2: *mut f64,
    n: *mut f64,
    kappa: *mut f64,
) -> i32 {
    guard(|| {
        let s = s.as_ref().ok_or_else(|| null("surface"))?;
        let f = s.0.frame_at(u, v).map_err(fail)?;
        write3(t1, f.t1.as_slice(), "t1")?;
        write3(t2, f.t2.as_slice(), "t2")?;
        write3(n, f.n.as_slice(), "n")?;
        if kappa.is_null() {
            return Err(null("kappa"));
        }
        *kappa = f.kappa1;
        *kappa.add(1) = f.kappa2;
        Ok(())
    })
}

/// Runs the pipeline in memory from a JSON run config and returns the
/// optimized net. Nothing is written to disk.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn lnet_run(config_json: *const c_char, out: *mut *mut LnetNet) -> i32 {
    guard(|| {
        let text = str_arg(config_json, "config_json")?;
        let out = self::out(out, "out")?;
        let cfg = RunConfig::from_json(text).map_err(fail)?;
        let result = run_stages(&cfg).map_err(fail)?;
        *out = Box::into_raw(Box::new(LnetNet(result.net)));
        Ok(())
    })
}

/// Parses a net from its JSON file format.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn lnet_net_from_json(json: *const c_char, out: *mut *mut LnetNet) -> i32 {
    guard(|| {
        let text = str_arg(json, "json")?;
        let out = self::out(out, "out")?;
        let net = LNet::from_json(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(LnetNet(net)));
        Ok(())
    })
}

/// Serializes a net to JSON. Release the string with [`lnet_string_free`].
///
/// # Safety
/// `net` must be a live handle; `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn lnet_net_to_json(net: *const LnetNet, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let out = self::out(out, "out")?;
        let text = CString::new(net.0.to_json()).map_err(|e| (LNET_ERR_INVALID_INPUT, e.to_string()))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lnet_net_free(net: *mut LnetNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Face counts of the net.
///
/// # Safety
/// `net` must be a live handle; `rows` and `cols` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lnet_net_faces(net: *const LnetNet, rows: *mut usize, cols: *mut usize) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let (m, n) = net.0.faces();
        *out(rows, "rows")? = m;
        *out(cols, "cols")? = n;
        Ok(())
    })
}

/// Sphere of face `(i, j)`: `center[3]` and signed `radius`.
///
/// # Safety
/// `net` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lnet_net_sphere(
    net: *const LnetNet,
    i: usize,
    j: usize,
    center: *mut f64,
    radius: *mut f64,
) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let (m, n) = net.0.faces();
        if i >= m || j >= n {
            return Err(fail(Error::IndexOutOfRange { i, j }));
        }
        let s = net.0.sphere(i, j);
        write3(center, s.center.as_slice(), "center")?;
        *out(radius, "radius")? = s.radius;
        Ok(())
    })
}

/// Plane of vertex `(i, j)`: `normal[3]` and `intercept`.
///
/// # Safety
/// `net` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lnet_net_plane(
    net: *const LnetNet,
    i: usize,
    j: usize,
    normal: *mut f64,
    intercept: *mut f64,
) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let (m, n) = net.0.faces();
        if i > m || j > n {
            return Err(fail(Error::IndexOutOfRange { i, j }));
        }
        let p = net.0.plane(i, j);
        write3(normal, p.normal.as_slice(), "normal")?;
        *out(intercept, "intercept")? = p.intercept;
        Ok(())
    })
}

/// Checks contact within `tol` and cone admissibility.
///
/// # Safety
/// `net` must be a live handle; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lnet_net_verify(
    net: *const LnetNet,
    tol: f64,
    max_contact_residual: *mut f64,
    inadmissible_edges: *mut usize,
    is_lnet: *mut bool,
) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let r = verify(&net.0, tol);
        *out(max_contact_residual, "max_contact_residual")? = r.max_contact_residual;
        *out(inadmissible_edges, "inadmissible_edges")? = r.num_inadmissible_edges;
        *out(is_lnet, "is_lnet")? = r.is_lnet;
        Ok(())
    })
}

/// Tessellates a verified net and writes it as OBJ to `path`.
///
/// # Safety
/// `net` must be a live handle; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lnet_net_write_obj(
    net: *const LnetNet,
    arc_samples: usize,
    ruling_samples: usize,
    path: *const c_char,
) -> i32 {
    guard(|| {
        let net = net.as_ref().ok_or_else(|| null("net"))?;
        let path = str_arg(path, "path")?;
        let mesh = tessellate(&net.0, &TessellationParams { arc_samples, ruling_samples }).map_err(fail)?;
        export_obj(&mesh, Path::new(path)).map_err(fail)
    })
}
