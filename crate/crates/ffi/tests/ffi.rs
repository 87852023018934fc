use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use nonamalg_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = nonamalg_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { nonamalg_string_free(p) };
    s
}

#[test]
fn construct_verify_decode_and_reparse() {
    let mut t = ptr::null_mut();
    let st = unsafe { nonamalg_construct(c("obstacle").as_ptr(), 30, c("bits:101100111000101101").as_ptr(), 3, &mut t) };
    assert_eq!(st, NonamalgStatus::Ok);
    assert_eq!(unsafe { nonamalg_trace_verify(t) }, NonamalgStatus::Ok);

    let mut bits = ptr::null_mut();
    assert_eq!(unsafe { nonamalg_trace_decode(t, c("0,1").as_ptr(), &mut bits) }, NonamalgStatus::Ok);
    let bits = take_string(bits);
    assert!("101100111000101101".starts_with(&bits) && !bits.is_empty(), "{bits}");

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { nonamalg_trace_to_json(t, &mut json) }, NonamalgStatus::Ok);
    let text = take_string(json);
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { nonamalg_trace_parse(c(&text).as_ptr(), &mut back) }, NonamalgStatus::Ok);
    let mut again = ptr::null_mut();
    assert_eq!(unsafe { nonamalg_trace_to_json(back, &mut again) }, NonamalgStatus::Ok);
    assert_eq!(take_string(again), text);
    unsafe {
        nonamalg_trace_free(t);
        nonamalg_trace_free(back);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut t = ptr::null_mut();
    let st = unsafe { nonamalg_construct(c("nope").as_ptr(), 3, ptr::null(), 0, &mut t) };
    assert_eq!(st, NonamalgStatus::Usage);
    assert!(last_error().contains("nope"));
    assert!(t.is_null());

    assert_eq!(unsafe { nonamalg_construct(ptr::null(), 3, ptr::null(), 0, &mut t) }, NonamalgStatus::NullArgument);
    assert_eq!(unsafe { nonamalg_construct(c("pair").as_ptr(), 3, ptr::null(), 0, ptr::null_mut()) }, NonamalgStatus::NullArgument);
    assert_eq!(unsafe { nonamalg_construct(c("pair").as_ptr(), 8, c("bits:01").as_ptr(), 0, &mut t) }, NonamalgStatus::Malformed);
    assert_eq!(unsafe { nonamalg_trace_parse(c("{}").as_ptr(), &mut t) }, NonamalgStatus::Malformed);
    assert_eq!(unsafe { nonamalg_trace_verify(ptr::null()) }, NonamalgStatus::NullArgument);

    assert_eq!(unsafe { nonamalg_construct(c("pair").as_ptr(), 4, ptr::null(), 0, &mut t) }, NonamalgStatus::Ok);
    assert!(nonamalg_last_error().is_null());
    unsafe { nonamalg_trace_free(t) };
}

#[test]
fn tampered_trace_fails_verification() {
    let mut t = ptr::null_mut();
    assert_eq!(unsafe { nonamalg_construct(c("oscillation").as_ptr(), 6, c("bits:010011").as_ptr(), 1, &mut t) }, NonamalgStatus::Ok);
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { nonamalg_trace_to_json(t, &mut json) }, NonamalgStatus::Ok);
    let text = take_string(json).replace("\"rounds\": 6", "\"rounds\": 5");
    unsafe { nonamalg_trace_free(t) };
    let mut back = ptr::null_mut();
    assert_eq!(unsafe { nonamalg_trace_parse(c(&text).as_ptr(), &mut back) }, NonamalgStatus::Ok);
    assert_eq!(unsafe { nonamalg_trace_verify(back) }, NonamalgStatus::VerifyFailed);
    assert!(!last_error().is_empty());
    unsafe { nonamalg_trace_free(back) };
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/nonamalg.h")
}

#[test]
fn header_declares_the_exports() {
    let h = std::fs::read_to_string(header()).unwrap();
    for name in [
        "nonamalg_construct",
        "nonamalg_trace_parse",
        "nonamalg_trace_to_json",
        "nonamalg_trace_verify",
        "nonamalg_trace_decode",
        "nonamalg_last_error",
        "nonamalg_trace_free",
        "nonamalg_string_free",
        "nonamalg_format_version",
        "typedef struct NonamalgTrace NonamalgTrace",
    ] {
        assert!(h.contains(name), "{name}");
    }
    assert_eq!(nonamalg_format_version(), 1);
}

#[test]
fn c_program_links_against_the_static_library() {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib_dir = deps.parent().unwrap().to_path_buf();
    let lib = lib_dir.join("libnonamalg_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "nonamalg.h"
int main(void) {
    NonamalgTrace *t = NULL;
    if (nonamalg_construct("pair", 6, "bits:110100", 2, &t) != NONAMALG_STATUS_OK) return 10;
    if (nonamalg_trace_verify(t) != NONAMALG_STATUS_OK) return 11;
    char *bits = NULL;
    if (nonamalg_trace_decode(t, NULL, &bits) != NONAMALG_STATUS_OK) return 12;
    printf("%s\n", bits);
    nonamalg_string_free(bits);
    nonamalg_trace_free(t);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("main");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler");
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "{:?}", out.status);
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "110100");
}
