use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neurobs"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn neurobs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

const LTI: &str = r#"{ "A": [[0.0, 1.0], [-2.0, -0.5]], "C": [[1.0, 0.0]] }"#;

#[test]
fn synthesized_lti_observer_verifies() {
    let tmp = TempDir::new().unwrap();
    let sys = write(tmp.path(), "sys.json", LTI);
    let nn = tmp.path().join("nn.json");
    let o = run(bin().args(["synthesize", "--arch", "1,3,tanh", "--seed", "4", "--system"]).arg(&sys).arg("--out").arg(&nn));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("nn.json.manifest.json").is_file());
    let out = tmp.path().join("v");
    let o = run(bin().args(["verify", "--theorem", "1", "--system"]).arg(&sys).arg("--nn").arg(&nn).arg("--out").arg(&out));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["verified"], true);
    assert!(cert["certificate"]["margins"].as_array().unwrap().iter().all(|m| m.as_f64().unwrap() > 0.0));
    assert!(out.join("manifest-verify.json").is_file());
}

#[test]
fn pendulum_chain_certificate_exit_zero() {
    let tmp = TempDir::new().unwrap();
    let sys = configs().join("pendulum_chain_system.json");
    for (theorem, arch) in [("3", "2,3,2,tanh"), ("3c", "2,3,2,tanh")] {
        let nn = tmp.path().join(format!("chain_{theorem}.json"));
        let o = run(bin().args(["synthesize", "--theorem", theorem, "--arch", arch, "--system"]).arg(&sys).arg("--out").arg(&nn));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let o = run(bin()
            .args(["verify", "--theorem", theorem, "--system"])
            .arg(&sys)
            .arg("--nn")
            .arg(&nn)
            .arg("--out")
            .arg(tmp.path().join(format!("v{theorem}"))));
        assert_eq!(code(&o), 0, "theorem {theorem}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn unstable_blind_system_is_infeasible() {
    let tmp = TempDir::new().unwrap();
    let good = write(tmp.path(), "good.json", LTI);
    let nn = tmp.path().join("nn.json");
    assert_eq!(code(&run(bin().args(["synthesize", "--arch", "1,3,relu", "--system"]).arg(&good).arg("--out").arg(&nn))), 0);
    let o = run(bin()
        .args(["verify", "--theorem", "1", "--system"])
        .arg(configs().join("unstable_unobservable_system.json"))
        .arg("--nn")
        .arg(&nn)
        .arg("--out")
        .arg(tmp.path().join("v")));
    assert_eq!(code(&o), 2);
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("v/certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["verified"], false);
}

#[test]
fn malformed_json_exit_one_with_location() {
    let tmp = TempDir::new().unwrap();
    let bad = write(tmp.path(), "bad.json", "{\n  \"A\": [[1.0, 0.0],\n");
    let o = run(bin().args(["verify", "--theorem", "1", "--system"]).arg(&bad).arg("--nn").arg(&bad).arg("--out").arg(tmp.path()));
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
}

#[test]
fn unknown_field_and_bad_flags_exit_one() {
    let tmp = TempDir::new().unwrap();
    let sys = write(tmp.path(), "sys.json", r#"{ "A": [[0.0]], "C": [[1.0]], "Q": 1 }"#);
    let o = run(bin().args(["synthesize", "--arch", "1,2,tanh", "--system"]).arg(&sys).arg("--out").arg(tmp.path().join("nn.json")));
    assert_eq!(code(&o), 1);
    let o = run(bin().args(["synthesize", "--arch", "2,3,tanh", "--system"]).arg(&sys).arg("--out").arg(tmp.path().join("nn.json")));
    assert_eq!(code(&o), 1);
    assert_eq!(code(&run(bin().args(["verify", "--no-such-flag"]))), 1);
}

#[test]
fn unobservable_synthesis_exit_four_with_rank() {
    let tmp = TempDir::new().unwrap();
    let sys = write(tmp.path(), "sys.json", r#"{ "A": [[0.0, 1.0], [0.0, 0.0]], "C": [[0.0, 1.0]] }"#);
    let o = run(bin().args(["synthesize", "--arch", "1,3,tanh", "--system"]).arg(&sys).arg("--out").arg(tmp.path().join("nn.json")));
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("rank: 1 of 2"));
    assert!(!tmp.path().join("nn.json").exists());
}

#[test]
fn synthesis_is_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    let sys = write(tmp.path(), "sys.json", LTI);
    let mut files = Vec::new();
    for k in 0..2 {
        let nn = tmp.path().join(format!("nn{k}.json"));
        assert_eq!(code(&run(bin().args(["synthesize", "--arch", "2,3,2,tanh", "--seed", "11", "--system"]).arg(&sys).arg("--out").arg(&nn))), 0);
        files.push(std::fs::read(&nn).unwrap());
    }
    assert_eq!(files[0], files[1]);
    let nn = tmp.path().join("other.json");
    assert_eq!(code(&run(bin().args(["synthesize", "--arch", "2,3,2,tanh", "--seed", "12", "--system"]).arg(&sys).arg("--out").arg(&nn))), 0);
    assert_ne!(files[0], std::fs::read(&nn).unwrap());
}

#[test]
fn simulate_writes_trace_metrics_manifest_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let sc = configs().join("pendulum_scenario.json");
    let mut traces = Vec::new();
    for k in 0..2 {
        let out = tmp.path().join(format!("sim{k}"));
        let o = run(bin().args(["simulate", "--window", "3,10", "--scenario"]).arg(&sc).arg("--out").arg(&out));
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(out.join("manifest-simulate.json").is_file());
        traces.push(std::fs::read(out.join("trace.csv")).unwrap());
    }
    assert_eq!(traces[0], traces[1]);
    let text = String::from_utf8(traces.swap_remove(0)).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("t,x_1,x_2,"));
    assert!(header.contains("ext_truth_1") && header.contains("ext_hat_neural_1"));
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("sim0/metrics.json")).unwrap()).unwrap();
    let neural = &m["observers"][0];
    assert_eq!(neural["label"], "neural");
    assert!(neural["ext_rel_rmse"][0].as_f64().unwrap() < 0.1);
    let o = run(bin().args(["simulate", "--window", "3", "--scenario"]).arg(&sc).arg("--out").arg(tmp.path().join("w")));
    assert_eq!(code(&o), 1);
}

#[test]
fn sweep_and_report() {
    let tmp = TempDir::new().unwrap();
    let run_dir = tmp.path().join("run");
    let sc = configs().join("pendulum_scenario.json");
    let o = run(bin().args(["sweep", "--scenario"]).arg(&sc).arg("--out").arg(run_dir.join("sweep")));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(run_dir.join("sweep/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("eps,dt,"));
    let o = run(bin().args(["simulate", "--scenario"]).arg(&sc).arg("--out").arg(run_dir.join("sim")));
    assert_eq!(code(&o), 0);
    let sys = configs().join("pendulum_chain_system.json");
    let nn = tmp.path().join("chain.json");
    assert_eq!(code(&run(bin().args(["synthesize", "--theorem", "3", "--arch", "2,3,2,tanh", "--system"]).arg(&sys).arg("--out").arg(&nn))), 0);
    let o = run(bin().args(["verify", "--theorem", "3", "--system"]).arg(&sys).arg("--nn").arg(&nn).arg("--out").arg(run_dir.join("cert")));
    assert_eq!(code(&o), 0);

    let o = run(bin().arg("report").arg(&run_dir));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let md = std::fs::read_to_string(run_dir.join("summary.md")).unwrap();
    let json = std::fs::read(run_dir.join("summary.json")).unwrap();
    assert!(md.contains("κ̂") && md.contains("ratio to previous ε") && md.contains("margins"));
    assert!(md.contains("cert/certificate.json") && md.contains("sweep/sweep.json") && md.contains("sim/metrics.json"));

    let o = run(bin().arg("report").arg(&run_dir));
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read_to_string(run_dir.join("summary.md")).unwrap(), md);
    assert_eq!(std::fs::read(run_dir.join("summary.json")).unwrap(), json);
}

#[test]
fn report_on_empty_dir_exit_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&run(bin().arg("report").arg(tmp.path()))), 1);
    assert!(!tmp.path().join("summary.md").exists());
    assert_eq!(code(&run(bin().arg("report").arg(tmp.path().join("missing")))), 1);
}

#[test]
fn shipped_configs_load() {
    let tmp = TempDir::new().unwrap();
    for name in ["x29_representative.json", "vehicle_representative.json"] {
        let o = run(bin().args(["simulate", "--scenario"]).arg(configs().join(name)).arg("--out").arg(tmp.path().join(name)));
        assert_eq!(code(&o), 0, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
}
