use std::path::Path;
use std::process::{Command, Output};

fn tiersim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tiersim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn lists_scenarios_and_engines() {
    let s = tiersim(&["list-scenarios"]);
    assert!(s.status.success());
    for name in ["multi_phase_5tb", "subtb_1g", "needle_5tb", "hotspot_2tb"] {
        assert!(stdout(&s).contains(name), "{name} missing");
    }
    let e = tiersim(&["list-engines"]);
    assert!(e.status.success());
    assert_eq!(stdout(&e).lines().count(), 10);
    assert!(stdout(&e).contains("telescope-flx"));
}

fn run_into(dir: &Path, seed: &str) {
    let out = dir.to_str().unwrap();
    let o = tiersim(&[
        "run", "--scenario", "subtb_1g", "--engines", "telescope-flx,damon-mod", "--duration-ms", "2000", "--seed", seed,
        "--out", out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("telescope-flx"));
}

#[test]
fn run_writes_reports_and_compare_reads_them() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_into(&a, "1");
    run_into(&b, "2");
    for f in ["summary.csv", "totals.csv", "run_meta.csv", "telescope-flx/pr.csv", "damon-mod/regions.csv"] {
        assert!(a.join("subtb_1g").join(f).is_file(), "{f} missing");
    }
    let c = tiersim(&["compare", a.join("subtb_1g").to_str().unwrap(), b.join("subtb_1g").to_str().unwrap()]);
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    assert!(stdout(&c).contains("damon-mod"));
}

#[test]
fn sequential_flag_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["run", "--scenario", "subtb_1g", "--engines", "pmu-agg,telescope-bnd", "--duration-ms", "1000"];
    let p = tmp.path().join("p");
    let s = tmp.path().join("s");
    assert!(tiersim(&[&args[..], &["--out", p.to_str().unwrap()]].concat()).status.success());
    assert!(tiersim(&[&args[..], &["--sequential", "--out", s.to_str().unwrap()]].concat()).status.success());
    let read = |d: &Path| std::fs::read(d.join("subtb_1g/telescope-bnd/pr.csv")).unwrap();
    assert_eq!(read(&p), read(&s));
}

#[test]
fn errors_exit_with_code_two() {
    let o = tiersim(&["repro", "no_such_script"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("available: all") && err.contains("geometry"), "{err}");

    let o = tiersim(&["run", "--scenario", "subtb_1g", "--engines", "bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("telescope-flx"));
}

#[test]
fn repro_geometry_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tiersim(&["repro", "geometry", "--out", tmp.path().to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("A8 PASS geometry"));
    assert!(std::fs::read_to_string(tmp.path().join("report.md")).unwrap().contains("A8"));
}
