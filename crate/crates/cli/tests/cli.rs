use std::path::Path;
use std::process::{Command, Output};

const FIG2: &str = r#"{"omega_main_MHz":3.75,"omega_mod_MHz":3.75,"eps_mod_MHz":2.08,"phase_rad":0.0,
"initial_state":{"theta_rad":0.0,"phi_s_rad":0.0}}"#;

fn mollow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mollow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    std::fs::write(d.path().join("fig2.json"), FIG2).unwrap();
    d
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_prints_quasienergies_and_writes_modes() {
    let d = setup();
    let o = mollow(d.path(), &["solve", "--config", "fig2.json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("lambda+") && s.contains("delta_lambda = 2.0586"));
    let csv = std::fs::read_to_string(d.path().join("out/modes_floquet.csv")).unwrap();
    assert!(csv.starts_with("i,n,freq_MHz,amp,phase_rad"));
    assert_eq!(csv.lines().count(), 1 + 2 + 3 * 5);
}

#[test]
fn repeated_runs_write_identical_files() {
    let d = setup();
    let args = ["solve", "--config", "fig2.json", "--models", "floquet,rwa", "--format", "json"];
    let a = mollow(d.path(), &args);
    let first = std::fs::read(d.path().join("out/modes_floquet.json")).unwrap();
    let b = mollow(d.path(), &args);
    let second = std::fs::read(d.path().join("out/modes_floquet.json")).unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(first, second);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn validation_failures_exit_with_one() {
    let d = setup();
    let o = mollow(d.path(), &["solve", "--config", "fig2.json", "--set", "omega_mod_MHz=-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("omega_mod"));
    let o = mollow(d.path(), &["solve", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mollow(d.path(), &["scenario", "fig9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_flags_are_errors() {
    let d = setup();
    let o = mollow(d.path(), &["solve", "--config", "fig2.json", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mollow(d.path(), &["compare", "--config", "fig2.json", "--models", "floquet,nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn solver_failures_exit_with_two() {
    let d = setup();
    let o = mollow(
        d.path(),
        &["solve", "--config", "fig2.json", "--set", "eps_mod_MHz=1e6", "--K", "auto"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn help_lists_every_shared_flag() {
    let d = setup();
    let o = mollow(d.path(), &["sweep", "--help"]);
    let s = stdout(&o);
    for flag in [
        "--spec", "--out", "--format", "--models", "--convention", "--nmax", "--K", "--jobs", "--decay",
        "--tau", "--set",
    ] {
        assert!(s.contains(flag), "missing {flag}");
    }
}

#[test]
fn scenario_writes_sweep_csv_independent_of_jobs() {
    let d = setup();
    let run = |jobs: &str, out: &str| {
        let o = mollow(
            d.path(),
            &["scenario", "fig4_phi0", "--out", out, "--jobs", jobs, "--set", "eps_mod_MHz=0.1"],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(d.path().join(out).join("fig4_phi0.csv")).unwrap()
    };
    let a = run("1", "a");
    let b = run("4", "b");
    assert_eq!(a, b);
    assert!(a.starts_with("sweep_value,model,i,n,freq_MHz,amp,phase_rad"));
    assert!(d.path().join("a/fig4_phi0_branches.csv").exists());
}

#[test]
fn spec_only_round_trips_through_sweep() {
    let d = setup();
    let o = mollow(d.path(), &["scenario", "fig1", "--spec-only", "--out", "spec"]);
    assert!(o.status.success());
    let o = mollow(d.path(), &["sweep", "--spec", "spec/fig1.json", "--out", "run", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.path().join("run/fig1.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 3);
}

#[test]
fn compare_reports_trotter_agreement() {
    let d = setup();
    let o = mollow(d.path(), &["compare", "--config", "fig2.json", "--out", "c", "--K", "16"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("c/compare.json")).unwrap()).unwrap();
    let dev = v["deviations"].as_array().unwrap();
    let trotter = dev.iter().find(|x| x["model"] == "trotter").unwrap();
    assert!(trotter["trace_sup_norm"].as_f64().unwrap() < 1e-2);
}

#[test]
fn evolve_then_fit_recovers_the_splitting() {
    let d = setup();
    let o = mollow(d.path(), &["evolve", "--config", "fig2.json", "--t-max", "8", "--dt", "0.01"]);
    assert!(o.status.success());
    let o = mollow(d.path(), &["fit", "--trace", "out/trace_floquet.csv", "--components", "4", "--format", "json"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.path().join("out/fit.json")).unwrap()).unwrap();
    let two_pi = std::f64::consts::TAU;
    let found = v["components"]
        .as_array()
        .unwrap()
        .iter()
        .any(|c| (c["omega"].as_f64().unwrap() / two_pi - 5.8087).abs() < 5e-3);
    assert!(found);
}

#[test]
fn decay_requires_tau() {
    let d = setup();
    let o = mollow(d.path(), &["evolve", "--config", "fig2.json", "--decay", "gauss"]);
    assert_eq!(o.status.code(), Some(1));
    let o = mollow(d.path(), &["evolve", "--config", "fig2.json", "--decay", "gauss", "--tau", "3"]);
    assert!(o.status.success());
}
