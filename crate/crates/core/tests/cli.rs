use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use onebit_precoder::cli::{execute, Experiment, ExperimentConfig, Overrides};
use tempfile::TempDir;

const BER_SWEEP: &str = r#"
experiment = "ber_sweep"
[system]
users = 2
antennas = 8
modulation = "qpsk"
[sweep]
snr_grid_db = [0.0, 10.0]
precoders = ["admm", "zf_q", "mrt_q", "zfi"]
trials = 4
symbol_vectors = 3
base_seed = 11
"#;

const CONVERGENCE: &str = r#"
experiment = "convergence"
[system]
users = 2
antennas = 4
modulation = "qpsk"
[sweep]
snr_grid_db = [-10.0, 10.0]
base_seed = 3
[admm]
max_iters = 40
"#;

const CSI_SWEEP: &str = r#"
experiment = "csi_sweep"
[system]
users = 2
antennas = 8
modulation = "qam16"
[sweep]
snr_grid_db = [5.0]
delta_grid = [0.0, 0.25]
error_models = ["gaussian", "uniform"]
precoders = ["admm", "zf_q"]
trials = 3
symbol_vectors = 2
base_seed = 5
"#;

const RUNTIME_SCALING: &str = r#"
experiment = "runtime_scaling"
[system]
users = 2
modulation = "qam16"
[sweep]
snr_grid_db = [10.0]
antennas = [4, 8]
trials = 2
base_seed = 9
"#;

const ORACLE_GAP: &str = r#"
experiment = "oracle_gap"
[system]
users = 2
antennas = 4
modulation = "qpsk"
[sweep]
snr_grid_db = [0.0]
trials = 3
base_seed = 2
"#;

const CONFIGS: [(&str, &str); 5] = [
    ("ber_sweep", BER_SWEEP),
    ("convergence", CONVERGENCE),
    ("csi_sweep", CSI_SWEEP),
    ("runtime_scaling", RUNTIME_SCALING),
    ("oracle_gap", ORACLE_GAP),
];

fn run_to(text: &str, dir: &Path, workers: usize) -> String {
    let cfg = ExperimentConfig::parse(text).unwrap();
    let overrides = Overrides {
        out: Some(dir.to_path_buf()),
        seed: None,
        workers: Some(workers),
    };
    let summary = execute(cfg, &overrides).unwrap();
    fs::read_to_string(summary.csv_path).unwrap()
}

/// CSV text with the named columns removed.
fn without_columns(csv: &str, drop: &[&str]) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !drop.contains(&header[i])).collect();
    let pick = |line: &str| {
        let cells: Vec<&str> = line.split(',').collect();
        keep.iter().map(|&i| cells[i]).collect::<Vec<_>>().join(",")
    };
    std::iter::once(pick(&header.join(",")))
        .chain(lines.map(pick))
        .map(|l| l + "\n")
        .collect()
}

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.csv"))
}

#[test]
fn golden_files_match() {
    for (name, text) in CONFIGS {
        let dir = TempDir::new().unwrap();
        let experiment = ExperimentConfig::parse(text).unwrap().experiment;
        let csv = without_columns(&run_to(text, dir.path(), 2), experiment.timing_columns());
        let path = golden_path(name);
        if std::env::var_os("ONEBIT_UPDATE_GOLDEN").is_some() {
            fs::write(&path, &csv).unwrap();
        }
        let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(csv, expected, "{name} differs from its golden file");
    }
}

#[test]
fn outputs_identical_across_worker_counts() {
    for (name, text) in CONFIGS {
        let experiment = ExperimentConfig::parse(text).unwrap().experiment;
        let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
        let one = without_columns(&run_to(text, a.path(), 1), experiment.timing_columns());
        let eight = without_columns(&run_to(text, b.path(), 8), experiment.timing_columns());
        assert_eq!(one, eight, "{name}");
    }
}

#[test]
fn column_headers_are_stable() {
    let headers = [
        (Experiment::BerSweep, BER_SWEEP, "snr_db,precoder,ber,ci_lo,ci_hi,trials,"),
        (Experiment::Convergence, CONVERGENCE, "snr_db,iter,delta_v,delta_u,lagrangian,"),
        (Experiment::CsiSweep, CSI_SWEEP, "error_model,delta,snr_db,precoder,ber,ci_lo,ci_hi,trials,"),
        (Experiment::RuntimeScaling, RUNTIME_SCALING, "snr_db,R,mean_solve_s,mean_iters,"),
        (Experiment::OracleGap, ORACLE_GAP, "snr_db,instance,oracle,admm,zf_q,mrt_q"),
    ];
    for (experiment, text, prefix) in headers {
        let dir = TempDir::new().unwrap();
        let csv = run_to(text, dir.path(), 1);
        assert!(csv.starts_with(prefix), "{}: {}", experiment.name(), csv.lines().next().unwrap());
        assert!(!csv.contains(';'));
    }
}

#[test]
fn manifest_echoes_config_and_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = ExperimentConfig::parse(BER_SWEEP).unwrap();
    let overrides = Overrides {
        out: Some(dir.path().to_path_buf()),
        seed: Some(77),
        workers: Some(1),
    };
    let summary = execute(cfg, &overrides).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(summary.manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "ber_sweep");
    assert_eq!(manifest["base_seed"], 77);
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config"]["sweep"]["trials"], 4);
    assert_eq!(manifest["config"]["sweep"]["base_seed"], 77);
    assert!(manifest["wall_time_s"].as_f64().unwrap() >= 0.0);
}

fn onebit(config: &str, dir: &Path, extra: &[&str]) -> (i32, String) {
    let path = dir.join("config.toml");
    fs::write(&path, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_onebit"))
        .arg("run")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .env("ONEBIT_WORKERS", "2")
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn binary_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let (code, stderr) = onebit(ORACLE_GAP, dir.path(), &["--seed", "4", "--workers", "1"]);
    assert_eq!(code, 0, "{stderr}");
    assert!(dir.path().join("out/oracle_gap.csv").exists());
    assert!(dir.path().join("out/manifest.json").exists());
}

#[test]
fn binary_exit_code_on_schema_violation() {
    let dir = TempDir::new().unwrap();
    let (code, stderr) = onebit(&BER_SWEEP.replace("trials = 4", "trials = 0"), dir.path(), &[]);
    assert_eq!(code, 2);
    assert!(stderr.contains("sweep.trials"), "{stderr}");
    let (code, stderr) = onebit(&BER_SWEEP.replace("base_seed = 11", "base_seed = 11\nsnr = 3"), dir.path(), &[]);
    assert_eq!(code, 2);
    assert!(stderr.contains("snr"), "{stderr}");
}

#[test]
fn binary_exit_code_on_precoder_failures() {
    let dir = TempDir::new().unwrap();
    let text = BER_SWEEP.replace("[\"admm\", \"zf_q\", \"mrt_q\", \"zfi\"]", "[\"admm\"]") + "[admm]\nmax_iters = 1\n";
    let (code, stderr) = onebit(&text, dir.path(), &[]);
    assert_eq!(code, 3, "{stderr}");
    assert!(dir.path().join("out/ber_sweep.csv").exists());
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}
