use std::path::Path;
use std::process::{Command, Output};

use hetnet::cli::sha256_hex;
use hetnet::cli::snapshot::Snapshot;

const TWO_UNIT: &str = r#"
experiment = "two_unit"
seed = 3

[kinetics]
items = 3
gamma_p = 0.6
gamma_d = 1.11
sigma = 1e-12

[topology]
delta = 0.8

[integrator]
t_end = 600
"#;

fn hetnet(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_hetnet"))
        .arg("--config")
        .arg(&cfg)
        .args(extra)
        .output()
        .unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hetnet(dir.path(), &TWO_UNIT.replace("seed = 3", ""), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`seed`"));
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hetnet(dir.path(), &TWO_UNIT.replace("delta = 0.8", "delta = 0.8\ncoupling = 1"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("coupling"));
}

#[test]
fn oversized_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hetnet(dir.path(), TWO_UNIT, &["--seed", "18446744073709551615"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_hetnet"))
        .args(["--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn blow_up_is_an_integration_fault_with_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    // Growth this fast overflows within one step.
    let text = TWO_UNIT.replace("items = 3", "items = 3\nrho = 1e200");
    let out = hetnet(dir.path(), &text, &["--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let fault: serde_json::Value = serde_json::from_str(&read(out_dir.join("fault.json"))).unwrap();
    assert!(fault["error"].as_str().unwrap().contains("integration fault"));
    assert_eq!(fault["unit"], 0);
    assert_eq!(fault["last_recorded_time"], 0.0);
    assert!(read(out_dir.join("manifest.json")).contains("integration_fault"));
    assert!(out_dir.join("snapshot.hksnap").exists());
}

#[test]
fn entrained_pair_run_writes_manifest_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = hetnet(dir.path(), TWO_UNIT, &["--out", d.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(a.join("manifest.json"))).unwrap();
    let files = manifest["files"].as_array().unwrap();
    for f in files {
        let bytes = std::fs::read(a.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    let names: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    for want in ["config.toml", "snapshot.hksnap", "summary.json", "symbols_unit1.csv", "units.csv"] {
        assert!(names.contains(&want), "{want} missing from {names:?}");
    }
    assert_eq!(read(a.join("manifest.json")), read(b.join("manifest.json")));

    // Re-running from the recorded configuration reproduces every checksum.
    let c = dir.path().join("c");
    let cfg = a.join("config.toml");
    let out = Command::new(env!("CARGO_BIN_EXE_hetnet"))
        .arg("--config")
        .arg(&cfg)
        .args(["--out", c.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(a.join("manifest.json")), read(c.join("manifest.json")));

    let summary: serde_json::Value = serde_json::from_str(&read(a.join("summary.json"))).unwrap();
    assert_eq!(summary["entrainment_length"], 1);
    let driven = read(a.join("symbols_unit1.csv"));
    let pace = read(a.join("symbols_unit0.csv"));
    let items = |csv: &str| csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().to_string()).collect::<Vec<_>>();
    assert!(items(&driven).len() >= 3);
    let mut seen = items(&driven);
    seen.sort();
    seen.dedup();
    assert_eq!(seen, ["1", "2", "3"]);
    assert!(items(&pace).len().abs_diff(items(&driven).len()) <= 2);

    let snap = Snapshot::read(std::fs::File::open(a.join("snapshot.hksnap")).unwrap()).unwrap();
    assert_eq!((snap.units, snap.items, snap.seed), (2, 3, 3));
    assert_eq!(snap.frames(), 6001);
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let out = hetnet(dir.path(), TWO_UNIT, &["--seed", "9", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_str(&read(out_dir.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert!(read(out_dir.join("config.toml")).contains("seed = 9"));
}

const CHAIN_SWEEP: &str = r#"
experiment = "sweep"
seed = 5

[kinetics]
items = 3
gamma_p = 1.05
gamma_d = 1.11
sigma = 1e-12

[topology]
units = 12
delta = 0.5

[integrator]
t_end = 800

[sweep]
base = "chain"
parameter = "topology.delta"
values = [0.5, 0.6, 0.75]
"#;

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines.next().unwrap().split(',').position(|h| h == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().to_string()).collect()
}

#[test]
fn chain_sweep_is_ordered_and_worker_independent() {
    let dir = tempfile::tempdir().unwrap();
    let (one, three) = (dir.path().join("w1"), dir.path().join("w3"));
    for (d, w) in [(&one, "1"), (&three, "3")] {
        let out = hetnet(dir.path(), CHAIN_SWEEP, &["--out", d.to_str().unwrap(), "--workers", w]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let csv = read(one.join("sweep.csv"));
    assert_eq!(csv, read(three.join("sweep.csv")));
    assert_eq!(column(&csv, "value"), ["0.5", "0.6", "0.75"]);
    assert!(column(&csv, "status").iter().all(|s| s == "ok"));
    let lengths: Vec<usize> = column(&csv, "entrainment_length").iter().map(|s| s.parse().unwrap()).collect();
    assert!(lengths.windows(2).all(|w| w[0] <= w[1]), "{lengths:?}");
    for i in 0..3 {
        let run = format!("run_{i:04}/manifest.json");
        assert_eq!(read(one.join(&run)), read(three.join(&run)));
    }
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let text = CHAIN_SWEEP.replace("values = [0.5, 0.6, 0.75]", "values = []");
    let out = hetnet(dir.path(), &text, &["--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let csv = read(out_dir.join("sweep.csv"));
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("index,value,seed,status"));
}

#[test]
fn grid_disc_exports_frames() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("o");
    let text = r#"
experiment = "grid_disc"
seed = 1
[kinetics]
items = 9
gamma_p = 0.8
sigma = 1e-12
[topology]
side = 8
delta = 0.2
radius = 2.0
[integrator]
t_end = 20
snapshot_every = 50
"#;
    let out = hetnet(dir.path(), text, &["--out", out_dir.to_str().unwrap(), "--export-frames", "true"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let snap = Snapshot::read(std::fs::File::open(out_dir.join("snapshot.hksnap")).unwrap()).unwrap();
    assert_eq!(snap.units, 64);
    let frames: Vec<_> = std::fs::read_dir(out_dir.join("frames")).unwrap().collect();
    assert_eq!(frames.len(), snap.frames());
    let first = std::fs::read(out_dir.join("frames/frame_00000.ppm")).unwrap();
    assert!(first.starts_with(b"P6\n8 8\n255\n"));
    assert_eq!(first.len(), 11 + 64 * 3);
    assert!(read(out_dir.join("profile.csv")).starts_with("r_lo,r_hi,count,mean_amplitude"));
}
