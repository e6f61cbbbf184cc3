use std::ffi::{c_char, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use kroma::ontology::{parse_ontology, ConceptId, Format, Role, UnionGraph};
use kroma::oracle::Decision;
use kroma::refine::{Constraints, GraphDocument, RefinementState, SimilarityOracle};
use kroma_ffi::*;

/// x/y are uncertain leaves, p/q similar parents.
struct Reviewable;

impl SimilarityOracle for Reviewable {
    fn judge(&self, a: &ConceptId, b: &ConceptId) -> Decision {
        match (a.iri(), b.iri()) {
            ("x", "y") => Decision::uncertain(2.0),
            ("p", "q") => Decision::similar(),
            _ => Decision::dissimilar(),
        }
    }
}

fn document() -> String {
    let os = parse_ontology("x is_a p .\n", Format::NTriples, Role::Source).unwrap();
    let ot = parse_ontology("y is_a q .\n", Format::NTriples, Role::Target).unwrap();
    let g = UnionGraph::new(&os, &ot).unwrap();
    RefinementState::offline(g, &Reviewable, Constraints::default()).to_document().to_json()
}

fn load(json: &str) -> *mut KromaState {
    let c = CString::new(json).unwrap();
    let mut st = ptr::null_mut();
    assert_eq!(unsafe { kroma_state_from_json(c.as_ptr(), &mut st) }, KromaStatus::Ok);
    assert!(!st.is_null());
    st
}

fn last_error() -> String {
    let p = kroma_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take(p: *mut c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { kroma_string_free(p) };
    s
}

#[test]
fn state_round_trips_through_json() {
    let doc = document();
    let st = load(&doc);
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { kroma_state_to_json(st, &mut out) }, KromaStatus::Ok);
    assert_eq!(GraphDocument::from_json(&take(out)).unwrap(), GraphDocument::from_json(&doc).unwrap());
    let (mut classes, mut pending) = (0usize, 0usize);
    unsafe {
        assert_eq!(kroma_state_class_count(st, &mut classes), KromaStatus::Ok);
        assert_eq!(kroma_state_pending_count(st, &mut pending), KromaStatus::Ok);
        kroma_state_free(st);
    }
    assert_eq!((classes, pending), (4, 1));
}

#[test]
fn resolve_reports_status_codes() {
    let doc = document();
    let id = GraphDocument::from_json(&doc).unwrap().queue[0].id;
    let st = load(&doc);
    let mut merged = true;
    unsafe {
        assert_eq!(kroma_state_resolve(st, id, false, &mut merged), KromaStatus::Ok);
        assert!(!merged);
        assert_eq!(kroma_state_resolve(st, id, true, ptr::null_mut()), KromaStatus::NotPending);
        assert!(last_error().contains("not pending"));
        assert_eq!(kroma_state_resolve(st, 42, true, ptr::null_mut()), KromaStatus::UnknownItem);
        let mut v = 0u64;
        assert_eq!(kroma_state_version(st, &mut v), KromaStatus::Ok);
        assert_eq!(v, 1);
        kroma_state_free(st);
    }
}

#[test]
fn delta_batches_and_cycles() {
    let st = load(&document());
    let batch = CString::new(r#"{"concepts": [], "edges": [{"child": "src:p", "parent": "src:z"}]}"#).unwrap();
    let mut report = ptr::null_mut();
    unsafe {
        assert_eq!(kroma_state_apply_delta(st, batch.as_ptr(), &mut report), KromaStatus::Ok);
    }
    let report: serde_json::Value = serde_json::from_str(&take(report)).unwrap();
    assert_eq!(report["new_concepts"], serde_json::json!(["src:z"]));
    assert_eq!(report["deferred"], serde_json::json!([]));

    let cycle = CString::new(r#"{"concepts": [], "edges": [{"child": "src:z", "parent": "src:x"}]}"#).unwrap();
    unsafe {
        assert_eq!(kroma_state_apply_delta(st, cycle.as_ptr(), ptr::null_mut()), KromaStatus::Cycle);
        let (a, b) = (CString::new("src:z").unwrap(), CString::new("src:x").unwrap());
        let mut same = true;
        assert_eq!(kroma_state_same_class(st, a.as_ptr(), b.as_ptr(), &mut same), KromaStatus::Ok);
        assert!(!same);
        let unknown = CString::new("src:nowhere").unwrap();
        assert_eq!(kroma_state_same_class(st, a.as_ptr(), unknown.as_ptr(), &mut same), KromaStatus::InvalidInput);
        kroma_state_free(st);
    }
}

#[test]
fn bad_arguments_are_reported_not_crashed_on() {
    let mut st = ptr::null_mut();
    unsafe {
        assert_eq!(kroma_state_from_json(ptr::null(), &mut st), KromaStatus::NullPointer);
        let bad = CString::new("{}").unwrap();
        assert_eq!(kroma_state_from_json(bad.as_ptr(), &mut st), KromaStatus::InvalidInput);
        assert!(st.is_null());
        let invalid = [0xffu8, 0];
        assert_eq!(
            kroma_state_from_json(invalid.as_ptr() as *const c_char, &mut st),
            KromaStatus::InvalidUtf8
        );
        kroma_state_free(ptr::null_mut());
        kroma_string_free(ptr::null_mut());
    }
}

#[test]
fn pipeline_config_errors_use_the_config_code() {
    let toml = CString::new("source = \"/nonexistent.nt\"\ntarget = \"/nonexistent.nt\"\n").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { kroma_run_pipeline(toml.as_ptr(), &mut out) }, KromaStatus::Config);
    assert!(out.is_null());
    let garbage = CString::new("gamma = [").unwrap();
    assert_eq!(unsafe { kroma_run_pipeline(garbage.as_ptr(), &mut out) }, KromaStatus::Config);
}

#[test]
fn evaluate_through_the_abi() {
    let pred = CString::new("a\tb\nc\td\n").unwrap();
    let gold = CString::new("a\tb\n").unwrap();
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { kroma_evaluate(pred.as_ptr(), gold.as_ptr(), &mut p, &mut r, &mut f) }, KromaStatus::Ok);
    assert_eq!((p, r), (0.5, 1.0));
    assert!((f - 2.0 / 3.0).abs() < 1e-12);
}

/// Compiles a C program against the generated header and shared library.
#[test]
fn header_compiles_and_links_from_c() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/kroma.h");
    assert!(header.exists(), "build script did not write the header");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["kroma_state_from_json", "kroma_state_resolve", "kroma_state_apply_delta", "kroma_run_pipeline"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; header link check skipped");
        return;
    };
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    if !lib_dir.join("libkroma_ffi.so").exists() {
        eprintln!("shared library not found in {}; link check skipped", lib_dir.display());
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let status = Command::new(cc)
        .arg(crate_dir.join("tests/c_smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lkroma_ffi")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
