use std::fs;
use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
mode = "pqfl"
seed = 3

[dataset.synthetic]
n_normal_classes = 2
per_class = 10
n_anomaly = 4
dim = 4
separation = 6.0

[circuit]
n_qubits = 2
n_layers = 1
entangler = "linear-chain"

[federation]
n_clients = 2
global_rounds = 2

[training]
local_epochs = 1
batch_size = 4

[quantum]
shots = 0

[partition]
kind = "iid"

[sweep]
epsilon = [0.5, 0.001]
"#;

fn pqfl() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pqfl"));
    cmd.env_remove("PQFL_SEED").env_remove("PQFL_OUTPUT_DIR");
    cmd
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("exp.toml");
    fs::write(&path, CONFIG).unwrap();
    path
}

#[test]
fn run_writes_artifacts_and_honours_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("qfl");
    let status = pqfl()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--output-dir")
        .arg(&out)
        .args(["--seed", "9", "--mode", "qfl"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for f in ["config.toml", "history.csv", "summary.json", "params.bin", "partition.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let snapshot = fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(snapshot.contains("seed = 9"));
    assert!(snapshot.contains("mode = \"qfl\""));
}

#[test]
fn environment_overrides_seed_and_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("from-env");
    let status = pqfl()
        .args(["run", "--config"])
        .arg(&cfg)
        .env("PQFL_SEED", "42")
        .env("PQFL_OUTPUT_DIR", &out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"seed\": 42"));
}

#[test]
fn sweep_then_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let out = tmp.path().join("sweep");
    let status = pqfl().args(["sweep", "--config"]).arg(&cfg).arg("--output-dir").arg(&out).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(out.join("sweep_summary.csv").is_file());
    let a = out.join("epsilon=0.5");
    let b = out.join("epsilon=0.001");
    let cmp = pqfl().arg("compare").arg(&a).arg(&b).output().unwrap();
    assert!(cmp.status.success());
    let table = String::from_utf8(cmp.stdout).unwrap();
    assert!(table.contains("AUROC"));
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn bad_config_exits_nonzero_with_key() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, CONFIG.replace("n_clients = 2", "n_clients = 2\nclient_weights = [0.5, 0.4]")).unwrap();
    let out = pqfl().args(["run", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("client_weights"));

    let missing = pqfl().args(["compare"]).arg(tmp.path()).arg(tmp.path().join("nope")).output().unwrap();
    assert!(!missing.status.success());
}
