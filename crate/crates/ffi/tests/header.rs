use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn crate_dir() -> &'static Path {
    Path::new(env!("CARGO_MANIFEST_DIR"))
}

fn header() -> String {
    fs::read_to_string(crate_dir().join("include/noisy_tomo.h")).expect("header generated by build.rs")
}

fn exported() -> Vec<String> {
    let src = fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    src.lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap().to_string())
        .collect()
}

#[test]
fn header_declares_every_export() {
    let h = header();
    let names = exported();
    assert!(names.len() >= 20, "{names:?}");
    for name in names {
        assert!(h.contains(&format!("{name}(")), "`{name}` missing from header");
    }
    for ty in [
        "typedef struct NtProtocol NtProtocol;",
        "typedef struct NtChannel NtChannel;",
        "NT_STATUS_BUFFER_TOO_SMALL = 5",
    ] {
        assert!(h.contains(ty), "`{ty}` missing");
    }
}

const PROGRAM: &str = r#"
#include <stdio.h>
#include <math.h>
#include "noisy_tomo.h"

int main(void) {
    NtProtocol *p = NULL;
    NtMeasurement *m = NULL;
    NtChannel *c = NULL;
    if (nt_protocol_new("tetrahedron", 4000.0, &p) != NT_STATUS_OK) return 10;
    if (nt_channel_parse("bit_flip:p=0.05", &c) != NT_STATUS_OK) return 11;
    if (nt_measurement_new(p, c, &m) != NT_STATUS_OK) return 12;

    const double zero[4] = {1.0, 0.0, 0.0, 0.0};
    uint64_t counts[4];
    if (nt_sample_counts(m, zero, 2, 42, NT_SAMPLING_MULTINOMIAL, counts, 4) != NT_STATUS_OK) return 13;

    double est[4];
    NtReconstructInfo info;
    if (nt_reconstruct(m, counts, 4, est, 2, &info) != NT_STATUS_OK) return 14;
    double fidelity = est[0] * est[0] + est[1] * est[1];
    if (!info.converged || fidelity < 0.99) return 15;

    NtProtocol *bad = NULL;
    if (nt_protocol_new("sideways", 1.0, &bad) != NT_STATUS_CONFIG) return 16;
    char *msg = nt_last_error_message();
    if (msg == NULL) return 17;
    printf("%s\n", msg);
    nt_string_free(msg);

    nt_measurement_free(m);
    nt_channel_free(c);
    nt_protocol_free(p);
    printf("fidelity %.6f\n", fidelity);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // target/<profile>/deps/header-<hash>
    std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("libnoisy_tomo_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping: no C compiler or {} not built", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    fs::write(&src, PROGRAM).unwrap();
    let build = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Wextra", "-Werror", "-I"])
        .arg(crate_dir().join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&exe).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(run.status.code(), Some(0), "{stdout}");
    assert!(stdout.contains("unknown protocol kind `sideways`"), "{stdout}");
}
