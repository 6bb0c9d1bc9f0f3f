use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otfs::harness::report::{parse_sweep_csv, SWEEP_CSV_HEADER};
use otfs::harness::ExperimentConfig;

const SMALL: &str = r#"
system = "otfs"
snr_db = [0, 10]
base_seed = 3
[grid]
m = 2
n = 2
delta_f_hz = 3750
[profile]
kind = "four-path"
[stopping]
min_bit_errors = 20
max_frames = 2000
min_frames = 10
"#;

fn otfs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otfs"))
        .args(args)
        .arg("--quiet")
        .output()
        .expect("run otfs")
}

fn otfs_with_workers(args: &[&str], workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otfs"))
        .args(args)
        .arg("--quiet")
        .env("OTFS_WORKERS", workers)
        .output()
        .expect("run otfs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn presets_parse_and_validate() {
    let dir: PathBuf = [env!("CARGO_MANIFEST_DIR"), "configs"].iter().collect();
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some("toml") {
            continue;
        }
        let cfg = ExperimentConfig::from_path(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg, "{}", path.display());
        count += 1;
    }
    assert!(count >= 17);
}

#[test]
fn sim_writes_csv_and_sidecar_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("runs/a.csv");
    let o = otfs_with_workers(
        &["sim", "--config", cfg, "--out", out.to_str().unwrap()],
        "1",
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with(SWEEP_CSV_HEADER));
    assert_eq!(parse_sweep_csv(&csv).unwrap().len(), 2);
    let side: toml::Value =
        toml::from_str(&fs::read_to_string(dir.path().join("runs/a.toml")).unwrap()).unwrap();
    assert_eq!(side["base_seed"].as_str(), Some("3"));
    assert_eq!(side["fingerprint"].as_str().unwrap().len(), 64);

    let again = otfs_with_workers(&["sim", "--config", cfg], "3");
    assert!(again.status.success());
    assert_eq!(stdout(&again), csv);

    let reseeded = otfs(&["sim", "--config", cfg, "--seed", "4"]);
    assert!(reseeded.status.success());
    assert_ne!(stdout(&reseeded), csv);

    let one_point = otfs(&["sim", "--config", cfg, "--snr", "-3"]);
    let rows = parse_sweep_csv(&stdout(&one_point)).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].snr_db, -3.0);
}

#[test]
fn rank_bounds_and_compare_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let cfg = cfg.to_str().unwrap();

    let rank = otfs(&["rank", "--config", cfg]);
    assert!(rank.status.success());
    let report: toml::Value = toml::from_str(&stdout(&rank)).unwrap();
    assert_eq!(report["kappa"].as_str(), Some("8"));

    let bounds = otfs(&["bounds", "--config", cfg]);
    assert!(bounds.status.success());
    let text = stdout(&bounds);
    assert!(text.starts_with("snr_db,lower,asymptotic_lower,union_upper\n"));
    assert_eq!(text.lines().count(), 3);

    let cmp_cfg = write_config(
        dir.path(),
        "cmp.toml",
        &format!("{SMALL}[compare]\nsystem = \"otfs-rotated\"\ntarget_ber = [0.05]\n"),
    );
    let out = dir.path().join("cmp.csv");
    let cmp = otfs(&[
        "compare",
        "--config",
        cmp_cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        cmp.status.success(),
        "{}",
        String::from_utf8_lossy(&cmp.stderr)
    );
    assert!(fs::read_to_string(&out)
        .unwrap()
        .starts_with("target_ber,snr_primary_db,snr_secondary_db,gain_db\n"));
    assert!(dir.path().join("cmp_primary.csv").exists());
    assert!(dir.path().join("cmp_secondary.toml").exists());
}

#[test]
fn chain_check_passes() {
    let o = otfs(&["chain-check", "--instances", "10", "--max-dim", "4"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("ideal chain vs H"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    assert_eq!(
        otfs(&["sim", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let unwritable = dir.path().join("file");
    fs::write(&unwritable, "").unwrap();
    let small = write_config(dir.path(), "small.toml", SMALL);
    let target = unwritable.join("out.csv");
    assert_eq!(
        otfs(&[
            "sim",
            "--config",
            small.to_str().unwrap(),
            "--out",
            target.to_str().unwrap()
        ])
        .status
        .code(),
        Some(1)
    );

    let bad = write_config(dir.path(), "bad.toml", &SMALL.replace("m = 2", "m = 0"));
    assert_eq!(
        otfs(&["sim", "--config", bad.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let unknown = write_config(
        dir.path(),
        "unknown.toml",
        &format!("{SMALL}\nsurprise = 1\n"),
    );
    assert_eq!(
        otfs(&["sim", "--config", unknown.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let big = SMALL.replace("m = 2\nn = 2", "m = 8\nn = 8");
    let capped = write_config(dir.path(), "capped.toml", &big);
    assert_eq!(
        otfs(&["sim", "--config", capped.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );

    assert_eq!(
        otfs(&["chain-check", "--max-dim", "0"]).status.code(),
        Some(2)
    );
}
