use std::path::Path;
use std::process::{Command, Output};

use mgshield::attacks::{Attack, AttackTarget, LinkInjection};
use mgshield::cases::{paper_scenario, PaperCase};
use mgshield::linalg::Matrix;
use mgshield::scenario_file::{emit_scenario, parse_scenario};
use mgshield::sim::Scenario;

fn mgshield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgshield"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, s: &Scenario) -> String {
    let path = dir.join(name);
    std::fs::write(&path, emit_scenario(s)).unwrap();
    path.display().to_string()
}

fn short(case: PaperCase, horizon: f64) -> Scenario {
    let mut s = paper_scenario(case);
    s.integration.horizon = horizon;
    s
}

#[test]
fn run_writes_selected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write(dir.path(), "s.ini", &short(PaperCase::AttackAux, 12.0));
    let out = dir.path().join("trace.csv");
    let res = mgshield(&[
        "run",
        "--scenario",
        &scn,
        "--out",
        out.to_str().unwrap(),
        "--columns",
        "t,omega_1,d_omega_1",
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "t,omega_1,d_omega_1");
    assert_eq!(lines.clone().count(), 12001);
    // the generator attack starts at 10 s with d_omega(10) = [4.5, 2.5, -4, -2]
    assert!(lines.any(|l| l == "10,314,4.5"));
}

#[test]
fn unknown_column_is_a_usage_error() {
    let res = mgshield(&["run", "--case", "no_attack", "--columns", "t,nope"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nope"));
}

#[test]
fn parse_errors_exit_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.ini");
    let text = emit_scenario(&paper_scenario(PaperCase::NoAttack)).replace("omega_ref = 314", "omega_ref = fast");
    std::fs::write(&path, &text).unwrap();
    let line = text.lines().position(|l| l.contains("fast")).unwrap() + 1;
    let res = mgshield(&["verify", "--scenario", path.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains(&format!("bad.ini:{line}: [control]")), "{err}");
}

#[test]
fn missing_arguments_exit_2() {
    assert_eq!(mgshield(&["verify"]).status.code(), Some(2));
    assert_eq!(mgshield(&["paper", "--case", "unknown"]).status.code(), Some(2));
    assert_eq!(mgshield(&["sweep", "--case", "attack_aux", "--beta", "2,1"]).status.code(), Some(2));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = short(PaperCase::AttackAux, 60.0);
    s.auxiliary = false;
    if let Attack::Lti(a) = &mut s.attacks[0] {
        a.f = Matrix::from_diag(&[-0.1; 4]);
        a.g = Matrix::from_diag(&[50.0; 4]);
    }
    let scn = write(dir.path(), "boom.ini", &s);
    let res = mgshield(&["run", "--scenario", &scn, "--out", dir.path().join("t.csv").to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("diverged"));
}

#[test]
fn verify_exit_codes() {
    let ok = mgshield(&["verify", "--case", "attack_aux"]);
    assert_eq!(ok.status.code(), Some(0));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("epsilon_omega: "));
    assert!(text.contains("result: pass"));

    // half a second in, the initial power mismatch has not died out while the
    // attack-free bound is zero
    let dir = tempfile::tempdir().unwrap();
    let scn = write(dir.path(), "early.ini", &short(PaperCase::NoAttack, 0.5));
    let early = mgshield(&["verify", "--scenario", &scn]);
    assert_eq!(early.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&early.stdout).contains("p_bound: fail"));
}

#[test]
fn detect_exit_codes() {
    let hit = mgshield(&["detect", "--case", "detect_isolate"]);
    assert_eq!(hit.status.code(), Some(0));
    let text = String::from_utf8_lossy(&hit.stdout);
    assert!(text.contains("flagged: 1<-4 (frequency)"));
    assert!(text.contains("isolation 1-4 at 10.1: isolated"));
    assert!(text.contains("post_isolation_edges: 1-2 2-3 3-4"));

    // an injection shorter than the dwell time is not flagged
    let dir = tempfile::tempdir().unwrap();
    let mut s = short(PaperCase::NoAttack, 3.0);
    s.attacks.push(Attack::Link(LinkInjection {
        receiver: 1,
        sender: 2,
        target: AttackTarget::Power,
        value: 1.0,
        start: 1.0,
        end: Some(1.05),
    }));
    let scn = write(dir.path(), "blip.ini", &s);
    let miss = mgshield(&["detect", "--scenario", &scn]);
    assert_eq!(miss.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&miss.stdout).contains("detection: fail"));
}

#[test]
fn paper_emits_round_trip_scenario() {
    let dir = tempfile::tempdir().unwrap();
    for case in PaperCase::ALL {
        let path = dir.path().join(format!("{case}.ini"));
        let res = mgshield(&["paper", "--case", case.as_str(), "--scenario", path.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0), "{case}");
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(parse_scenario(&text, "x").unwrap(), paper_scenario(case), "{case}");
    }
}

#[test]
fn sweep_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let scn = write(dir.path(), "s.ini", &short(PaperCase::AttackAux, 40.0));
    let res = mgshield(&["sweep", "--scenario", &scn, "--beta", "1,2,4,8"]);
    assert_eq!(res.status.code(), Some(0));
    let csv = String::from_utf8_lossy(&res.stdout);
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "beta,e_omega,epsilon_omega,e_p,epsilon_p");
    assert_eq!(rows.len(), 5);
    let eps: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!(eps.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn seed_flag_changes_auxiliary_draw() {
    let cols = "t,z_p_1";
    let a = mgshield(&["run", "--case", "no_attack", "--columns", cols, "--seed", "1"]);
    let b = mgshield(&["run", "--case", "no_attack", "--columns", cols, "--seed", "2"]);
    let c = mgshield(&["run", "--case", "no_attack", "--columns", cols, "--seed", "1"]);
    assert_eq!(a.status.code(), Some(0));
    assert_ne!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
}
