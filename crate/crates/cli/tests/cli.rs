use std::process::Command;

fn flowlab(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_flowlab")).args(args).output().expect("binary runs")
}

#[test]
fn run_emits_csv_series() {
    let out = flowlab(&["run", "--level", "2", "--example", "cone"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,t,l2_error,energy,kinetic_sum,dissipation_sum,stability_slack"));
    // tau = h/4 = 0.265 at level 2: steps k = 0..=3.
    assert_eq!(lines.count(), 4);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    let json_path = dir.path().join("out.json");
    std::fs::write(&cfg, "# coarse run\nlevel = 2\nscheme = implicit-admm\nformat = json\n").unwrap();
    let out = flowlab(&["run", "--config", cfg.to_str().unwrap(), "--output", json_path.to_str().unwrap(), "--t-end", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(doc["config"]["scheme"], "implicit-admm");
    assert_eq!(doc["config"]["t_end"], 0.5);
}

#[test]
fn table_lists_every_cell() {
    let out = flowlab(&["table", "--levels", "2..3", "--eps-powers", "0.5,1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("level,h,eps_mode,max_l2_error,rate,scheme,status"));
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",semi,ok")));
}

#[test]
fn stability_and_exact_checks_succeed() {
    let out = flowlab(&["check-stability", "--level", "3", "--eps", "0.01", "--taus", "0.1,1,10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = flowlab(&["verify-exact"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_configuration_exits_with_error() {
    let out = flowlab(&["run", "--scheme", "semi", "--eps", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}
