use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "sparse_ising.h"

int main(void) {
    SiCircuit *c = NULL;
    SiModel *m = NULL;
    SiChain *ch = NULL;
    if (si_circuit_factorizer(2, &c) != SI_STATUS_OK) return 1;
    if (si_circuit_clamp_product(c, 9, 0) != SI_STATUS_OK) return 2;
    if (si_circuit_compose(c, &m) != SI_STATUS_OK) return 3;
    if (si_chain_new(m, SI_RNG_COUNTER, 4, &ch) != SI_STATUS_OK) return 4;
    if (si_chain_sweep(ch, SI_MODE_CHROMATIC, 1.0, 10) != SI_STATUS_OK) return 5;
    if (si_circuit_factorizer(2, NULL) != SI_STATUS_NULL_POINTER) return 6;
    if (si_last_error() == NULL) return 7;
    printf("%zu %llu\n", si_model_num_nodes(m), (unsigned long long)si_chain_flips(ch));
    si_chain_free(ch);
    si_model_free(m);
    si_circuit_free(c);
    return 0;
}
"#;

// Compiles a C program against the generated header and the static library.
#[test]
fn header_compiles_and_links() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let tmp = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    let profile_dir = tmp.parent().unwrap().join(if cfg!(debug_assertions) { "debug" } else { "release" });
    let lib = profile_dir.join("libsparse_ising_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library");
        return;
    }
    let src = tmp.join("ffi_smoke.c");
    let exe = tmp.join("ffi_smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut parts = text.split_whitespace();
    assert_eq!(parts.next(), Some("14"));
    assert!(parts.next().unwrap().parse::<u64>().unwrap() > 0);
}
