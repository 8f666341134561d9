use std::ffi::{CStr, CString};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::ptr;

use lnet_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(lnet_last_error()) }.to_string_lossy().into_owned()
}

const CONFIG: &str = r#"{
  "congruence": {"tau": 0.75},
  "theta": {"family": "constant", "theta": 0.7853981633974483},
  "grid": {"rows": 5, "cols": 5, "edge_length": 0.2},
  "schedule": {"max_iters": 20},
  "output_dir": "unused"
}"#;

#[test]
fn surface_handle_round_trip() {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { lnet_surface_builtin(&mut s) }, LNET_OK);
    let mut p = [0.0; 3];
    assert_eq!(unsafe { lnet_surface_point(s, 0.0, 0.0, p.as_mut_ptr()) }, LNET_OK);
    assert!(p.iter().all(|x| x.abs() < 1e-15));
    let (mut t1, mut t2, mut n, mut k) = ([0.0; 3], [0.0; 3], [0.0; 3], [0.0; 2]);
    let code = unsafe { lnet_surface_frame(s, 0.0, 0.0, t1.as_mut_ptr(), t2.as_mut_ptr(), n.as_mut_ptr(), k.as_mut_ptr()) };
    assert_eq!(code, LNET_OK);
    assert!((k[0] - 1.2).abs() < 1e-12 && (k[1] - 0.4).abs() < 1e-12);
    assert_eq!(unsafe { lnet_surface_point(s, 5.0, 0.0, p.as_mut_ptr()) }, LNET_ERR_INVALID_INPUT);
    assert!(last_error().contains("outside"));
    unsafe { lnet_surface_free(s) };
}

#[test]
fn null_arguments_are_reported() {
    assert_eq!(unsafe { lnet_surface_builtin(ptr::null_mut()) }, LNET_ERR_NULL);
    assert!(last_error().contains("out"));
    let mut p = [0.0; 3];
    assert_eq!(unsafe { lnet_surface_point(ptr::null(), 0.0, 0.0, p.as_mut_ptr()) }, LNET_ERR_NULL);
    unsafe {
        lnet_surface_free(ptr::null_mut());
        lnet_net_free(ptr::null_mut());
        lnet_string_free(ptr::null_mut());
    }
}

#[test]
fn bad_json_and_config_codes() {
    let mut s = ptr::null_mut();
    let bad = CString::new("{").unwrap();
    assert_eq!(unsafe { lnet_surface_from_json(bad.as_ptr(), &mut s) }, LNET_ERR_PARSE);
    assert!(s.is_null());
    let cfg = CString::new(CONFIG.replace("0.75", "1.2")).unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { lnet_run(cfg.as_ptr(), &mut net) }, LNET_ERR_CONFIG);
    assert!(last_error().contains("tau"));
}

#[test]
fn run_verify_and_export() {
    let cfg = CString::new(CONFIG).unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { lnet_run(cfg.as_ptr(), &mut net) }, LNET_OK, "{}", last_error());
    assert_eq!(last_error(), "");

    let (mut rows, mut cols) = (0usize, 0usize);
    assert_eq!(unsafe { lnet_net_faces(net, &mut rows, &mut cols) }, LNET_OK);
    assert_eq!((rows, cols), (4, 4));

    let (mut res, mut bad, mut ok) = (1.0, 7usize, false);
    assert_eq!(unsafe { lnet_net_verify(net, 1e-9, &mut res, &mut bad, &mut ok) }, LNET_OK);
    assert!(ok && bad == 0 && res <= 1e-9);

    let (mut c, mut r) = ([0.0; 3], 0.0);
    assert_eq!(unsafe { lnet_net_sphere(net, 3, 3, c.as_mut_ptr(), &mut r) }, LNET_OK);
    assert!(r > 0.0);
    assert_eq!(unsafe { lnet_net_sphere(net, 4, 0, c.as_mut_ptr(), &mut r) }, LNET_ERR_INDEX);
    let (mut n, mut h) = ([0.0; 3], 0.0);
    assert_eq!(unsafe { lnet_net_plane(net, 4, 4, n.as_mut_ptr(), &mut h) }, LNET_OK);
    assert!((n.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { lnet_net_to_json(net, &mut json) }, LNET_OK);
    let mut copy = ptr::null_mut();
    assert_eq!(unsafe { lnet_net_from_json(json, &mut copy) }, LNET_OK);
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { lnet_net_to_json(copy, &mut again) }, LNET_OK);
    assert_eq!(unsafe { CStr::from_ptr(json) }, unsafe { CStr::from_ptr(again) });

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("mesh.obj").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { lnet_net_write_obj(net, 4, 4, path.as_ptr()) }, LNET_OK);
    let obj = fs::read_to_string(dir.path().join("mesh.obj")).unwrap();
    assert!(obj.contains("g planar") && obj.contains("g conical") && obj.contains("g spherical"));
    assert_eq!(unsafe { lnet_net_write_obj(net, 1, 4, path.as_ptr()) }, LNET_ERR_CONFIG);

    unsafe {
        lnet_string_free(json);
        lnet_string_free(again);
        lnet_net_free(copy);
        lnet_net_free(net);
    }
}

#[test]
fn unverified_net_is_refused() {
    let cfg = CString::new(CONFIG).unwrap();
    let mut net = ptr::null_mut();
    assert_eq!(unsafe { lnet_run(cfg.as_ptr(), &mut net) }, LNET_OK);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { lnet_net_to_json(net, &mut json) }, LNET_OK);
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().replacen("0.", "0.5", 1);
    let text = CString::new(text).unwrap();
    let mut bent = ptr::null_mut();
    assert_eq!(unsafe { lnet_net_from_json(text.as_ptr(), &mut bent) }, LNET_OK);
    let path = CString::new("/nonexistent/mesh.obj").unwrap();
    assert_eq!(unsafe { lnet_net_write_obj(bent, 4, 4, path.as_ptr()) }, LNET_ERR_NOT_VERIFIED);
    unsafe {
        lnet_string_free(json);
        lnet_net_free(bent);
        lnet_net_free(net);
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(lnet_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = fs::read_to_string(dir.join("include/lnet.h")).unwrap();
    for name in [
        "lnet_last_error",
        "lnet_surface_builtin",
        "lnet_surface_frame",
        "lnet_run",
        "lnet_net_verify",
        "lnet_net_write_obj",
        "typedef struct LnetNet LnetNet",
        "#define LNET_ERR_PANIC 10",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

/// Compiles a C program against the header and, when the static library
/// sits next to the test binary, links and runs it.
#[test]
fn header_compiles_and_links_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("use.c");
    fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "lnet.h"

int main(void) {
  LnetSurface *s = NULL;
  double p[3];
  if (lnet_surface_builtin(&s) != LNET_OK) return 1;
  if (lnet_surface_point(s, 1.0, 1.0, p) != LNET_OK) return 2;
  if (lnet_surface_point(s, 9.0, 0.0, p) != LNET_ERR_INVALID_INPUT) return 3;
  if (strlen(lnet_last_error()) == 0) return 4;
  lnet_surface_free(s);
  printf("%.3f\n", p[2]);
  return 0;
}
"#,
    )
    .unwrap();
    let syntax = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .status();
    match syntax {
        Ok(s) => assert!(s.success()),
        Err(e) => {
            eprintln!("skipping C checks: {e}");
            return;
        }
    }
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(Path::parent).map(|d| d.join("liblnet_ffi.a"));
    let Some(lib) = lib.filter(|l| l.exists()) else {
        eprintln!("skipping C link check: static library not found");
        return;
    };
    let bin = tmp.path().join("use");
    let linked = Command::new("cc")
        .args(["-std=c99", "-I"])
        .arg(dir.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(linked.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0.800");
}
