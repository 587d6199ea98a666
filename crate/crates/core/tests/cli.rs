use std::path::Path;
use std::process::Command;

fn cavsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cavsim"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const READOUT: &str = r#"{"kind":"readout","seed":1,"dt":0.001,"horizon":4.0,"output_dir":"out",
  "params":{"g":100,"kappa_sc":1000,"target":{"shape":"gaussian","center":2.0,"sigma":0.25}}}"#;

#[test]
fn readout_run_writes_pulse_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "readout.json", READOUT);
    let st = cavsim().arg("run").arg(&cfg).status().unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(dir.path().join("out/pulse.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("t[1/gamma],target,density"), "{header}");
    assert_eq!(csv.lines().count(), 4002);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/readout_report.json")).unwrap()).unwrap();
    assert!(report["reduced"]["l2_over_peak"].as_f64().unwrap() < 0.02);
}

#[test]
fn overrides_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "readout.json", READOUT);
    let out = dir.path().join("elsewhere");
    let st = cavsim().arg("run").arg(&cfg).args(["--seed", "42", "--out"]).arg(&out).status().unwrap();
    assert!(st.success());
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 42);
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["outputs"].as_array().unwrap().iter().any(|o| o == "pulse.csv"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_config_exits_nonzero_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &READOUT.replace(r#""seed":1,"#, r#""seed":1,"colour":"red","#));
    let out = cavsim().arg("run").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("colour"), "{err}");
    assert!(!dir.path().join("out").exists());

    let missing = cavsim().arg("run").arg(dir.path().join("missing.json")).output().unwrap();
    assert!(!missing.status.success());
}

#[test]
fn unnormalized_csv_target_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "xi.csv", "t,xi\n0,1\n0.001,1\n0.002,1\n");
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"kind":"readout","seed":1,"dt":0.001,"horizon":0.002,"output_dir":"out",
            "params":{"g":100,"kappa_sc":1000,"target":{"shape":"csv","path":"xi.csv"}}}"#,
    );
    let out = cavsim().arg("run").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("norm"));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let c = cavsim::runner::ExperimentConfig::load(&path).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 5);
}

fn run_small(name: &str, text: &str, expect: &[&str]) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), &format!("{name}.json"), text);
    let out = cavsim().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    for f in expect {
        assert!(dir.path().join("o").join(f).exists(), "{name}: missing {f}");
    }
}

#[test]
fn every_kind_runs() {
    run_small(
        "herald",
        r#"{"kind":"herald","seed":2,"dt":0.001,"horizon":3,"params":{"lambda":1,"g":10,"kappa_sc":100,"attempts":3,
            "truncations":{"n_e":4,"n_h":4,"n_b":3},"scan":{"kappas":[40,80],"truncations":{"n_e":10,"n_h":10,"n_b":4}}}}"#,
        &["herald_summary.json", "herald_clicks.csv", "overdamping_scan.csv"],
    );
    run_small(
        "css",
        r#"{"kind":"css","seed":2,"dt":0.001,"horizon":5,"params":{"lambda":1,"kappa_h":4,"n_target":2,"trajectories":20,
            "wigner_points":9,"search":{"target":"fock-span","levels":[0,4],"length":4}}}"#,
        &["postselect_stats.json", "survivors.csv", "search.json", "search_state_wigner.csv", "search_state_fock.csv"],
    );
    run_small(
        "nkf",
        r#"{"kind":"nkf","seed":2,"dt":0.001,"horizon":0.5,"params":{"lambda":1,"kappa_h":4,"dim":20,"trajectories":3,"sample_every":10}}"#,
        &["nkf_summary.json", "nkf_min_ratio.csv"],
    );
    run_small(
        "reduce",
        r#"{"kind":"reduce","seed":0,"dt":0.01,"horizon":0.05,"params":{"ladder":{"points":[{"lambda":1,"g":10,"kappa_sc":100}]},
            "truncations":{"n_e":5,"n_h":4,"n_b":3}}}"#,
        &["ladder.csv", "ladder.json"],
    );
}
