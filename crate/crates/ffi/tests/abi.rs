use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use serde_json::Value;

use topocam::fixtures;
use topocam::mesh::write_stl_binary;
use topocam_ffi::*;

fn stl(soup: fixtures::Soup) -> Vec<u8> {
    let mut out = Vec::new();
    write_stl_binary(&soup.mesh(), &mut out).unwrap();
    out
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = topocam_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

unsafe fn take(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_string();
    topocam_string_free(p);
    s
}

unsafe fn open(id: &str, bytes: &[u8]) -> *mut TopocamSession {
    let mut s = ptr::null_mut();
    assert_eq!(topocam_session_from_stl(c(id).as_ptr(), bytes.as_ptr(), bytes.len(), &mut s), TopocamStatus::Ok);
    assert!(!s.is_null());
    s
}

unsafe fn json(f: unsafe extern "C" fn(*const TopocamSession, *mut *mut c_char) -> TopocamStatus, s: *const TopocamSession) -> String {
    let mut out = ptr::null_mut();
    assert_eq!(f(s, &mut out), TopocamStatus::Ok, "{}", last_error());
    take(out)
}

#[test]
fn pocket_runs_through_the_abi() {
    unsafe {
        let s = open("pocket", &stl(fixtures::pocket_plate().soup()));
        let state: Value = serde_json::from_str(&json(topocam_session_state_json, s)).unwrap();
        assert_eq!(state["phase"], "PrimaryGraph");

        let mut out = ptr::null_mut();
        assert_eq!(topocam_session_final_graph_json(s, &mut out), TopocamStatus::NotFinalized);
        assert!(out.is_null());
        assert!(last_error().contains("finalized"));

        let mut pending = 99;
        assert_eq!(topocam_session_advance(s, &mut pending), TopocamStatus::Ok);
        assert_eq!(pending, 0);
        assert!(topocam_last_error().is_null(), "success clears the error");
        let graph: Value = serde_json::from_str(&json(topocam_session_final_graph_json, s)).unwrap();
        let kinds: Vec<&str> = graph["nodes"].as_array().unwrap().iter().map(|n| n["kind"].as_str().unwrap()).collect();
        assert_eq!(kinds, ["PartingSurface", "Cavity"]);
        let mesh: Value = serde_json::from_str(&json(topocam_session_mesh_json, s)).unwrap();
        assert_eq!(mesh["faces"].as_array().unwrap().len(), mesh["face_features"].as_array().unwrap().len());
        let full: Value = serde_json::from_str(&json(topocam_session_graph_json, s)).unwrap();
        assert_eq!(full["stage"], "Finalized");
        topocam_session_free(s);
    }
}

#[test]
fn die_decision_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let dir_c = c(dir.path().to_str().unwrap());
    let bytes = stl(fixtures::die_soup());
    unsafe {
        let s = open("die", &bytes);
        let mut pending = 0;
        assert_eq!(topocam_session_advance(s, &mut pending), TopocamStatus::Ok);
        assert_eq!(pending, 1);

        assert_eq!(topocam_session_decide(s, c("{not json").as_ptr()), TopocamStatus::InvalidJson);
        let unknown = c(r#"{"query":"query-transition-9","transition_splits":{}}"#);
        assert_eq!(topocam_session_decide(s, unknown.as_ptr()), TopocamStatus::UnknownQuery);
        let empty = c(r#"{"query":"query-transition-2"}"#);
        assert_eq!(topocam_session_decide(s, empty.as_ptr()), TopocamStatus::InvalidDecision);

        assert_eq!(topocam_session_save(s, dir_c.as_ptr()), TopocamStatus::Ok);
        topocam_session_free(s);

        let mut back = ptr::null_mut();
        assert_eq!(topocam_session_load(dir_c.as_ptr(), c("die").as_ptr(), &mut back), TopocamStatus::Ok);
        let session = topocam::session::SessionStore::new(dir.path()).load("die").unwrap();
        let d = fixtures::die_decision(&session.graph, &session.identifier.mesh).unwrap();
        let text = c(&serde_json::to_string(&d).unwrap());
        assert_eq!(topocam_session_decide(back, text.as_ptr()), TopocamStatus::Ok, "{}", last_error());
        assert_eq!(topocam_session_advance(back, &mut pending), TopocamStatus::Ok);
        assert_eq!(pending, 0);
        let graph: Value = serde_json::from_str(&json(topocam_session_final_graph_json, back)).unwrap();
        let cavities = graph["nodes"].as_array().unwrap().iter().filter(|n| n["kind"] == "Cavity").count();
        assert_eq!(cavities, 5);
        topocam_session_free(back);
    }
}

#[test]
fn bad_arguments_report_status() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(topocam_session_from_stl(c("x").as_ptr(), ptr::null(), 0, &mut s), TopocamStatus::NullArgument);
        assert!(last_error().contains("bytes"));
        let junk = b"solid nothing\nendsolid\n";
        assert_eq!(topocam_session_from_stl(c("x").as_ptr(), junk.as_ptr(), junk.len(), &mut s), TopocamStatus::InvalidMesh);
        assert!(s.is_null());
        let bytes = stl(fixtures::pocket_plate().soup());
        let status = topocam_session_from_stl_with_setup(c("x").as_ptr(), bytes.as_ptr(), bytes.len(), 0.0, 0.0, 1.0, 70.0, 60.0, &mut s);
        assert_eq!(status, TopocamStatus::InvalidSetup);
        let bad_utf8 = [0xffu8, 0];
        let status = topocam_session_from_stl(bad_utf8.as_ptr().cast(), bytes.as_ptr(), bytes.len(), &mut s);
        assert_eq!(status, TopocamStatus::InvalidUtf8);
        assert_eq!(topocam_session_advance(ptr::null_mut(), ptr::null_mut()), TopocamStatus::NullArgument);
        let mut loaded = ptr::null_mut();
        assert_eq!(topocam_session_load(c("/nonexistent").as_ptr(), c("nope").as_ptr(), &mut loaded), TopocamStatus::NotFound);
        assert_eq!(topocam_session_load(c("/tmp").as_ptr(), c("../etc").as_ptr(), &mut loaded), TopocamStatus::NotFound);
        topocam_session_free(ptr::null_mut());
        topocam_string_free(ptr::null_mut());
        let v = CStr::from_ptr(topocam_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_declares_every_export_and_compiles() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/topocam.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "topocam_last_error",
        "topocam_version",
        "topocam_session_from_stl",
        "topocam_session_from_stl_with_setup",
        "topocam_session_advance",
        "topocam_session_decide",
        "topocam_session_state_json",
        "topocam_session_graph_json",
        "topocam_session_final_graph_json",
        "topocam_session_mesh_json",
        "topocam_session_save",
        "topocam_session_load",
        "topocam_session_free",
        "topocam_string_free",
        "TOPOCAM_STATUS_NOT_FINALIZED",
        "typedef struct TopocamSession TopocamSession",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; header syntax not checked");
        return;
    };
    let out = Command::new(cc).args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"]).arg(&header).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}

/// Builds `tests/smoke.c` against the static library and runs it on a pocket.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; C smoke test not run");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(Path::parent).unwrap();
    let lib = profile_dir.join("libtopocam_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let out = Command::new(cc)
        .arg("-std=c99")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let part = dir.path().join("pocket.stl");
    std::fs::write(&part, stl(fixtures::pocket_plate().soup())).unwrap();
    let run = Command::new(&bin).arg(&part).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let graph: Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(graph["nodes"].as_array().unwrap().len(), 2);
}
