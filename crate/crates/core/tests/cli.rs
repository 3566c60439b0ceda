//! End-to-end runs of the binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cylfront::experiments::manifest::sha256_hex;
use cylfront::experiments::RunManifest;
use cylfront::wave::WaveSolution;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cylfront"))
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

/// Small converge run with a fittable trace. The short left end spoils the
/// Phi[u_bar] = 0 check, so only the files are inspected.
const SMALL_CONVERGE: &str = "[scenario]\nname = converge\n[grid]\nn_z = 681\nz_min = -16\nz_max = 18\n[model]\nname = cubic\na = 0.25\n[initial]\noffset = 2\nsandwich_shift = 3\n[run]\ndt = 0.05\nhorizon = 30\n";

fn verify_digests(out: &Path) -> Vec<String> {
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    let files = RunManifest::parse_files(&manifest);
    for (name, bytes, digest) in &files {
        let data = std::fs::read(out.join(name)).unwrap();
        assert_eq!(data.len() as u64, *bytes, "{name}");
        assert_eq!(&sha256_hex(&data), digest, "{name}");
    }
    files.into_iter().map(|f| f.0).collect()
}

#[test]
fn duplicate_key_is_rejected_with_both_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "dup.conf", "[model]\nname = cubic\na = 0.2\na = 0.3\n");
    let o = run(&["wave", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    let t = text(&o);
    assert!(t.contains("duplicate key `model.a`") && t.contains("line 3") && t.contains("line 4"), "{t}");
}

#[test]
fn oversized_step_reports_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "dt.conf", "[model]\nname = cubic\na = 0.25\n[run]\ndt = 5\n");
    let o = run(&["converge", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    let t = text(&o);
    assert!(t.contains("dt_max") && t.contains("line 5"), "{t}");
}

#[test]
fn unknown_scenario_and_key_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let cfg = write(dir.path(), "s.conf", "[scenario]\nname = shock\n");
    let o = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o).contains("unknown scenario `shock`"), "{}", text(&o));
    let cfg = write(dir.path(), "k.conf", "[run]\nthreads = 4\n");
    let o = run(&["wave", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o).contains("unknown key `threads`"), "{}", text(&o));
}

#[test]
fn verb_conflicting_with_config_scenario_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("gap_cubic.conf");
    let o = run(&["wave", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o).contains("conflicts"), "{}", text(&o));
}

#[test]
fn wave_run_writes_a_verifiable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("wave");
    let cfg = configs().join("wave_cubic.conf");
    let o = run(&["wave", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o));
    assert!(text(&o).contains("speed_closed_form PASS"), "{}", text(&o));
    let names = verify_digests(&out);
    assert_eq!(names, vec!["wave.txt".to_string()]);
    let ws = WaveSolution::from_text(&std::fs::read_to_string(out.join("wave.txt")).unwrap()).unwrap();
    assert!((ws.c_dag - 0.5 / 2f64.sqrt()).abs() < 1e-3);
    let manifest = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("all_passed = true") && manifest.contains("model.a = 0.25"), "{manifest}");
}

#[test]
fn converge_runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.conf", SMALL_CONVERGE);
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let o = run(&["converge", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(text(&o).contains("tracking_complete PASS"), "{}", text(&o));
        let names = verify_digests(&out);
        assert!(names.contains(&"trace.csv".to_string()));
        traces.push(std::fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    let csv = String::from_utf8(traces.remove(0)).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t,"), "{header}");
    assert!(csv.lines().count() > 20);
}

#[test]
fn precision_variable_controls_digits() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.conf", SMALL_CONVERGE);
    let out = dir.path().join("p");
    let o = bin()
        .env("CYLFRONT_PRECISION", "6")
        .args(["converge", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(text(&o).contains("tracking_complete PASS"), "{}", text(&o));
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let row = csv.lines().nth(2).unwrap();
    let first = row.split(',').nth(1).unwrap();
    let mantissa = first.trim_start_matches('-').split('e').next().unwrap();
    assert_eq!(mantissa.replace('.', "").len(), 6, "{row}");
}

#[test]
fn sweep_runs_configs_in_parallel_directories() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let a = configs().join("hypotheses_cubic.conf");
    let b = configs().join("compare_cubic.conf");
    let o = run(&["sweep", "--config", a.to_str().unwrap(), "--config", b.to_str().unwrap(), "--out", out.to_str().unwrap(), "--jobs", "2"]);
    assert!(o.status.success(), "{}", text(&o));
    for stem in ["hypotheses_cubic", "compare_cubic"] {
        let m = std::fs::read_to_string(out.join(stem).join("manifest.txt")).unwrap();
        assert!(m.contains("all_passed = true"), "{m}");
    }
    assert!(text(&o).contains("pairs_stay_ordered PASS"));
}

#[test]
fn failing_run_still_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    // a threshold at 1/2 is balanced: no positive speed exists
    let cfg = write(dir.path(), "bal.conf", "[grid]\nn_z = 401\nz_min = -20\nz_max = 20\n[model]\nname = cubic\na = 0.5\n[run]\nc_seed = 0.1\n");
    let out = dir.path().join("o");
    let o = run(&["wave", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    let m = std::fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(m.contains("all_passed = false"), "{m}");
}
