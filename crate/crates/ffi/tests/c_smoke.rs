//! Compiles and runs a small C program against the generated header and the
//! cdylib, exercising handles, buffers and error codes from the C side.

use std::path::PathBuf;
use std::process::Command;

const C_PROGRAM: &str = r#"
#include "flightlab.h"
#include <stdio.h>
#include <string.h>

int main(void) {
    if (strlen(fl_version()) == 0) return 10;

    FlRng *rng = fl_rng_new(42, 7);
    double arrivals[32];
    if (fl_sample_arrivals(rng, 32, arrivals, NULL) != FL_STATUS_OK) return 11;
    for (int k = 1; k < 32; k++) {
        if (arrivals[k] <= arrivals[k - 1]) return 12;
    }

    double moment = 0.0;
    if (fl_exact_gamma_moment(2, 2.0, &moment) != FL_STATUS_OK) return 13;
    if (moment < 5.999999 || moment > 6.000001) return 14;

    if (fl_exact_gamma_moment(1, -1.5, &moment) != FL_STATUS_DOMAIN_ERROR) return 15;
    char msg[128];
    if (fl_last_error_message(msg, sizeof msg) != FL_STATUS_OK) return 16;
    if (strlen(msg) == 0) return 17;

    FlPath *path = NULL;
    if (fl_sample_rescaled_flight(rng, FL_CLOCK_POWER, 1.0, 16, 2, 0, &path) != FL_STATUS_OK)
        return 18;
    if (fl_path_dim(path) != 2 || fl_path_knots(path) != 17) return 19;
    double point[2];
    if (fl_path_eval(path, 0.25, point) != FL_STATUS_OK) return 20;
    double sup = -1.0;
    if (fl_path_sup_distance(path, path, &sup) != FL_STATUS_OK || sup != 0.0) return 21;
    fl_path_free(path);
    fl_rng_free(rng);

    double bound, supdist;
    if (fl_exp_limit_coupled_draw(1, 2, 1.0, 2, 1e-15, 50, &bound, &supdist) != FL_STATUS_OK)
        return 22;
    if (supdist > bound + 2e-15) return 23;

    printf("c smoke ok\n");
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let cc = ["cc", "gcc", "clang"]
        .iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .copied();
    let Some(cc) = cc else {
        eprintln!("no C compiler found; skipping the C smoke test");
        return;
    };
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include = manifest.join("include");
    assert!(
        include.join("flightlab.h").exists(),
        "header is generated by build.rs"
    );
    // the cdylib lands in the workspace target dir next to this test binary
    let lib_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    assert!(
        lib_dir.join("libflightlab_ffi.so").exists() || lib_dir.join("libflightlab_ffi.a").exists(),
        "ffi library not found in {lib_dir:?}"
    );
    let work = std::env::temp_dir().join(format!("flightlab-c-smoke-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&work);
    std::fs::create_dir_all(&work).unwrap();
    let src = work.join("smoke.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = work.join("smoke");
    let compile = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg("-L")
        .arg(&lib_dir)
        .arg("-lflightlab_ffi")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-o")
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "compile failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "smoke exited with {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("c smoke ok"));
}
