use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stoclock(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stoclock"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_string_lossy().into_owned()
}

#[test]
fn success_writes_report_and_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = stoclock(&["fig1", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("experiment = fig1"));
    for f in ["report.txt", "fig1_populations.csv", "fig1_history.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let header = fs::read_to_string(dir.path().join("fig1_populations.csv")).unwrap();
    assert!(header.starts_with("slice,t,block,ground_pop,excited_pop,re_coherence,im_coherence\n"));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# fig2 run\ngamma = 0.3\nT = 0.5\n").unwrap();
    let out = stoclock(&[
        "fig2",
        "--config",
        &out_arg(&cfg),
        "--set",
        "dt=0.025",
        "--out",
        &out_arg(&dir.path().join("run")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let rows = fs::read_to_string(dir.path().join("run/fig2_spectrum.csv")).unwrap();
    // 21 slices of a two-level system
    assert_eq!(rows.lines().count(), 1 + 42);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    for args in [
        vec!["fig9", "--out", &out],
        vec!["fig1", "--set", "dt=0.3", "--out", &out],
        vec!["fig1", "--set", "colour=red", "--out", &out],
        vec!["fig1", "--config", "/nonexistent/run.cfg", "--out", &out],
        vec!["fig1"],
    ] {
        let o = stoclock(&args);
        assert_eq!(o.status.code(), Some(2), "args {args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = stoclock(&["fig5", "--set", "gamma=40", "--set", "psi0=0,1", "--out", &out_arg(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("time step too large"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = stoclock(&["fig5", "--set", "seed=1", "--out", &out_arg(d)]);
        assert_eq!(o.status.code(), Some(0));
    }
    let mut compared = 0;
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        if Path::new(&name).extension().is_some_and(|x| x == "csv") {
            assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
            compared += 1;
        }
    }
    assert!(compared >= 4);
}
