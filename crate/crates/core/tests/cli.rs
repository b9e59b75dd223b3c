use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-ising"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cli(dir, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn is_prime(n: u64) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| n % d != 0)
}

/// CSV text with the named column removed.
fn drop_column(text: &str, name: &str) -> String {
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|&h| h == name).unwrap();
    text.lines()
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|&(i, _)| i != col)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn gen_semiprime_is_deterministic_and_prime() {
    let dir = tempfile::tempdir().unwrap();
    let first = ok(dir.path(), &["gen-semiprime", "--bits", "14", "--seed", "4"]);
    assert_eq!(first, ok(dir.path(), &["gen-semiprime", "--bits", "14", "--seed", "4"]));
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    let (p, a, b) = (v["p"].as_u64().unwrap(), v["a"].as_u64().unwrap(), v["b"].as_u64().unwrap());
    assert_eq!(a * b, p);
    assert!(is_prime(a) && is_prime(b));
    assert_eq!(64 - p.leading_zeros(), 14);
}

#[test]
fn build_and_color_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a.json", "b.json"] {
        ok(d, &["build-fact", "--m", "4", "--factors", "13,11", "--product", "143", "--k", "5", "--out", out]);
    }
    let a = fs::read(d.join("a.json")).unwrap();
    assert_eq!(a, fs::read(d.join("b.json")).unwrap());
    let circuit: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(circuit["n"], 116);

    ok(d, &["color", "--circuit", "a.json", "--out", "c1.csv"]);
    ok(d, &["color", "--circuit", "a.json", "--out", "c2.csv"]);
    assert_eq!(fs::read(d.join("c1.csv")).unwrap(), fs::read(d.join("c2.csv")).unwrap());
}

#[test]
fn anneal_runs_reproduce_modulo_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["build-fact", "--m", "3", "--factors", "5,7", "--product", "35", "--k", "5", "--out", "f.json"]);
    for run in ["r1", "r2"] {
        let out = cli(d, &["anneal", "--circuit", "f.json", "--seed", "9", "--beta-steps", "20", "--out-dir", run]);
        assert_eq!(out.status.code(), Some(0));
    }
    let csv = |run: &str| drop_column(&fs::read_to_string(d.join(run).join("run.csv")).unwrap(), "wall_ns");
    assert_eq!(csv("r1"), csv("r2"));
    let summary = |run: &str| {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join(run).join("summary.json")).unwrap()).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.retain(|k, _| !k.contains("fps") && !k.ends_with("_ns"));
        v
    };
    assert_eq!(summary("r1"), summary("r2"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["build-fact", "--m", "2", "--factors", "3,3", "--product", "9", "--out", "small.json"]);
    let reached = cli(d, &["anneal", "--circuit", "small.json", "--target", "100"]);
    assert_eq!(reached.status.code(), Some(0));

    ok(d, &["build-fact", "--m", "8", "--factors", "251,241", "--product", "60491", "--k", "5", "--out", "big.json"]);
    let missed = cli(
        d,
        &["anneal", "--circuit", "big.json", "--target", "100", "--beta-steps", "1", "--sweeps-per-beta", "1"],
    );
    assert_eq!(missed.status.code(), Some(2));

    let error = cli(d, &["anneal", "--circuit", "missing.json"]);
    assert_eq!(error.status.code(), Some(1));
    let bad = cli(d, &["build-fact", "--m", "2", "--factors", "3", "--out", "x.json"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn masks_and_fps_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["masks", "--gate", "AND", "--masks", "4", "--samples", "500", "--out", "kl.csv"]);
    let kl = fs::read_to_string(d.join("kl.csv")).unwrap();
    assert_eq!(kl.lines().next(), Some("Er,kind,mean_KL,std_KL,n_masks"));
    // Six directed entries give seven rates per kind.
    assert_eq!(kl.lines().count(), 1 + 2 * 7);
    for line in kl.lines().skip(1) {
        let mean: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(mean >= 0.0);
    }

    ok(d, &["fps", "--bits", "8", "--sweeps", "100", "--out", "fps.csv"]);
    let fps = fs::read_to_string(d.join("fps.csv")).unwrap();
    assert!(fps.lines().count() >= 2);
}

#[test]
fn tts_dry_run_builds_sat_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cnf = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/cnf/uf20-01.cnf");
    let out = cli(d, &["tts", "--cnf", cnf.to_str().unwrap(), "--dry-run", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(0));
    let progress = String::from_utf8(out.stderr).unwrap();
    assert!(progress.contains("nodes 410"), "{progress}");
    assert!(d.join("o").join("uf20-01.circuit.json").exists());
    assert!(d.join("o").join("uf20-01.colors.csv").exists());
}
