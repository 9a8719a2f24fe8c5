use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use phred_core::io::{read_numeric_csv, read_report_json, read_system, COMPARISON_HEADER, RESPONSE_HEADER};
use phred_core::linalg::C64;

fn phred(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phred"))
        .args(args)
        .env_remove("PHRED_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn generate(dir: &Path, masses: &str) {
    ok(&phred(&["generate", "--masses", masses, "--out", dir.to_str().unwrap()]));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate(&a, "50");
    generate(&b, "50");
    let sys = read_system(&a).unwrap();
    assert_eq!((sys.n(), sys.m()), (100, 2));
    for f in ["J.mtx", "R.mtx", "Q.mtx", "B.mtx", "system.meta"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn one_mass_has_oscillator_poles() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("one");
    ok(&phred(&["generate", "--masses", "1", "--inputs", "1", "--out", p(&dir)]));
    let sys = read_system(&dir).unwrap();
    // 4 s^2 + s + 4 = 0
    let disc = C64::new(1.0 - 64.0, 0.0).sqrt();
    let poles = sys.poles();
    for root in [(-1.0 + disc) / 8.0, (-1.0 - disc) / 8.0] {
        assert!(poles.iter().any(|q| (q - root).norm() < 1e-12));
    }
}

#[test]
fn reduce_writes_all_artifacts_and_reruns_from_settings() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = tmp.path().join("sys");
    generate(&sys, "6");
    let out = tmp.path().join("run");
    ok(&phred(&["reduce", "--system", p(&sys), "--r", "4", "--max-bisect", "4", "--response-points", "50", "--out", p(&out)]));
    for f in [
        "rom/J.mtx",
        "init/B.mtx",
        "report.json",
        "report.csv",
        "samples.csv",
        "response.csv",
        "error.csv",
        "fom_response.csv",
        "settings.txt",
        "levels/00_samples.csv",
        "levels/03_error.csv",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report = read_report_json(&out.join("report.json")).unwrap();
    assert_eq!(report.iterations.len(), 4);
    assert_eq!(read_system(&out.join("rom")).unwrap().n(), 4);
    let (header, rows) = read_numeric_csv(&out.join("error.csv")).unwrap();
    assert_eq!(header, RESPONSE_HEADER);
    assert_eq!(rows.len(), 50);

    // the recorded settings reproduce the run
    let again = tmp.path().join("again");
    ok(&phred(&["reduce", "--config", p(&out.join("settings.txt")), "--out", p(&again)]));
    let second = read_report_json(&again.join("report.json")).unwrap();
    assert_eq!(second.theta, report.theta);
    assert_eq!(fs::read(out.join("rom/Q.mtx")).unwrap(), fs::read(again.join("rom/Q.mtx")).unwrap());
}

#[test]
fn fixed_samples_switch_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = tmp.path().join("sys");
    generate(&sys, "6");
    let out = tmp.path().join("fixed");
    ok(&phred(&[
        "reduce", "--system", p(&sys), "--r", "4", "--fixed-samples", "60", "--max-bisect", "3", "--out", p(&out),
    ]));
    let (_, rows) = read_numeric_csv(&out.join("samples.csv")).unwrap();
    assert_eq!(rows.len(), 60);
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = tmp.path().join("sys");
    generate(&sys, "6");
    let out = p(tmp.path()).to_string() + "/x";
    for args in [
        vec!["reduce", "--system", p(&sys), "--r", "3", "--out", &out],
        vec!["reduce", "--system", p(&sys), "--r", "4", "--tau-b", "-1", "--out", &out],
        vec!["reduce", "--system", p(&sys), "--out", &out],
        vec!["compare", "--system", p(&sys), "--r", "4:7:1", "--out", &out],
        vec!["reduce", "--no-such-flag"],
    ] {
        let o = phred(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn malformed_system_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = tmp.path().join("sys");
    generate(&sys, "3");
    fs::write(sys.join("R.mtx"), "%%MatrixMarket matrix array real general\n2 2\n1\n").unwrap();
    let o = phred(&["eval", "--system", p(&sys), "--out", p(&tmp.path().join("h.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("R.mtx"));
}

#[test]
fn growth_cap_exits_with_two_and_keeps_partial_results() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = tmp.path().join("sys");
    generate(&sys, "6");
    let out = tmp.path().join("capped");
    let o = phred(&["reduce", "--system", p(&sys), "--r", "4", "--sample-cap", "16", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_report_json(&out.join("report.json")).unwrap();
    assert!(report.aborted.is_some());
}

#[test]
fn compare_is_reproducible_apart_from_timings() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = tmp.path().join("sys");
    generate(&sys, "6");
    let settings = tmp.path().join("cmp.conf");
    fs::write(&settings, "r = 2:4\nverify-points = 500\nrepeats = 1\nfixed-samples = 40\nmax-bisect = 3\n").unwrap();
    let mut tables = Vec::new();
    for name in ["one", "two"] {
        let out = tmp.path().join(name);
        ok(&phred(&["compare", "--config", p(&settings), "--system", p(&sys), "--out", p(&out)]));
        let (header, rows) = read_numeric_csv(&out.join("comparison.csv")).unwrap();
        assert_eq!(header, COMPARISON_HEADER);
        assert!(out.join("runs/4/adaptive/report.json").exists());
        assert!(out.join("runs/2/fixed/levels/00_error.csv").exists());
        tables.push(rows);
    }
    assert_eq!(tables[0].len(), 2);
    for (a, b) in tables[0].iter().zip(&tables[1]) {
        // r, n_samples_final, hinf_adaptive, hinf_fixed
        for c in [0, 4, 5, 6] {
            assert_eq!(a[c], b[c]);
        }
        assert!(a[3] > 0.0);
    }
}

#[test]
fn flags_override_config_and_threads_env_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let settings = tmp.path().join("gen.conf");
    fs::write(&settings, "masses = 5\ninputs = 1\n").unwrap();
    let out = tmp.path().join("sys");
    let o = Command::new(env!("CARGO_BIN_EXE_phred"))
        .args(["generate", "--config", p(&settings), "--masses", "4", "--out", p(&out)])
        .env("PHRED_THREADS", "1")
        .output()
        .unwrap();
    ok(&o);
    let sys = read_system(&out).unwrap();
    assert_eq!((sys.n(), sys.m()), (8, 1));
}

#[test]
fn eval_dumps_response() {
    let tmp = tempfile::tempdir().unwrap();
    let sys = tmp.path().join("sys");
    generate(&sys, "4");
    let out = tmp.path().join("h.csv");
    ok(&phred(&["eval", "--system", p(&sys), "--points", "25", "--out", p(&out)]));
    let (header, rows) = read_numeric_csv(&out).unwrap();
    assert_eq!(&header[..2], RESPONSE_HEADER);
    assert_eq!(header.len(), 2 + 2 * 4);
    assert_eq!(rows.len(), 25);
}
