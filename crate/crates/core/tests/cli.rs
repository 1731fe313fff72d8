use std::fs;
use std::process::Command;

fn opex(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_opex")).args(args).output().unwrap()
}

#[test]
fn validate_schedule_exit_codes() {
    let ok = opex(&["validate-schedule", "oe-gsmvi", "--L", "2", "--mu", "0.1", "--k", "1000"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    // the stochastic MVI extrapolation bound only holds once the tail window is long enough
    let short = opex(&["validate-schedule", "soe-mvi", "--L", "1", "--k", "32"]);
    assert_eq!(short.status.code(), Some(2));
    let unknown = opex(&["validate-schedule", "nope", "--L", "1", "--k", "5"]);
    assert_eq!(unknown.status.code(), Some(1));
}

#[test]
fn run_and_check_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(
        &cfg,
        r#"
k = 40
seeds = [1, 2]
output = "out"
cadence = 10

[problem]
type = "traffic"
n = 15
blocks = 3
d_minus = 0.1
seed = 4

[[policy]]
name = "OE-GSMVI"

[[policy]]
name = "SBOE-GSMVI"
"#,
    )
    .unwrap();
    let run = opex(&["run", cfg.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let out = dir.path().join("out");
    for f in ["OE-GSMVI_seed1.csv", "SBOE-GSMVI_seed2.csv", "OE-GSMVI_aggregate.csv"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let header = fs::read_to_string(out.join("OE-GSMVI_seed1.csv")).unwrap();
    assert!(header.starts_with("run_id,"));

    let check = opex(&["check", cfg.to_str().unwrap(), "--k", "300"]);
    assert_eq!(check.status.code(), Some(0), "{}", String::from_utf8_lossy(&check.stdout));
    assert!(String::from_utf8_lossy(&check.stdout).contains("oe_linear_rate"));
}

#[test]
fn missing_config_is_a_config_error() {
    assert_eq!(opex(&["run", "/nonexistent/exp.toml"]).status.code(), Some(1));
}

#[test]
fn shipped_configs_run() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["traffic", "glm_hinge"] {
        let cfg = format!("{}/../../configs/{name}.toml", env!("CARGO_MANIFEST_DIR"));
        let out = dir.path().join(name);
        let run = opex(&["run", &cfg, "--k", "10", "--seeds", "1", "--output", out.to_str().unwrap()]);
        assert!(run.status.success(), "{name}: {}", String::from_utf8_lossy(&run.stderr));
    }
}
