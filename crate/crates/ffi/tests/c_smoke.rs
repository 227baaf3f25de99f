//! Compiles a small C program against the generated header and the shared library.
//! Skipped when no C compiler is on PATH.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "dpodyn.h"

int main(void) {
    double deltas[2] = {0.3, 0.1};
    DpodynDataset *ds = NULL;
    if (dpodyn_dataset_generate(8, deltas, 2, 2.0, 1.0, 20, 7, &ds) != DPODYN_STATUS_OK) return 1;
    DpodynTrace *t = NULL;
    if (dpodyn_train(ds, 0.3, 0.5, 5, 0, 0, &t) != DPODYN_STATUS_OK) return 2;
    DpodynRecord r;
    if (dpodyn_trace_record(t, dpodyn_trace_len(t) - 1, &r) != DPODYN_STATUS_OK) return 3;
    if (!(r.loss < log(2.0)) || r.step != 5) return 4;
    if (dpodyn_dataset_load(NULL, &ds) != DPODYN_STATUS_NULL_POINTER) return 5;
    if (dpodyn_last_error() == NULL) return 6;
    printf("%zu %.6f\n", r.step, r.loss);
    dpodyn_trace_free(t);
    dpodyn_dataset_free(ds);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler, skipping");
        return;
    }
    // tests run from target/<profile>/deps
    let lib_dir: PathBuf = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    if !lib_dir.join("libdpodyn_ffi.so").exists() {
        eprintln!("shared library not found in {}, skipping", lib_dir.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let out = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-ldpodyn_ffi")
        .arg("-lm")
        .arg("-o")
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("5 "));
}
