//! End-to-end behaviour of the batch commands: artifacts, exit codes and
//! manifest round trips.

use std::path::{Path, PathBuf};

use dobrushin_cli::{exit_code, run, CliError, Command};
use serde_json::{json, Value};

fn write_json(path: &Path, v: Value) -> PathBuf {
    std::fs::write(path, serde_json::to_vec_pretty(&v).unwrap()).unwrap();
    path.to_path_buf()
}

fn run_bin(command: &str, config: &Path, out: &Path) -> (i32, String) {
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_dobrushin"))
        .args([command, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stderr).into_owned())
}

/// Sample a frozen chain (β huge) so every snapshot is the flat interface.
fn frozen_snapshots(dir: &Path) -> PathBuf {
    let cfg = write_json(
        &dir.join("sample.json"),
        json!({ "chain": { "box": { "lambda": { "n": 3, "h_cap": 3 } }, "beta": 40.0, "sweeps": 30, "burn_in": 10, "thin": 10, "seed": 1 } }),
    );
    let out = dir.join("sample");
    run(Command::Sample, &cfg, &out).unwrap();
    out.join("snapshots.bin")
}

/// Records of an NDJSON artifact, after checking its provenance header.
fn ndjson(path: &Path) -> Vec<Value> {
    let mut lines: Vec<Value> = std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let header = lines.remove(0);
    assert!(header["schema"].as_str().unwrap().starts_with("dobrushin."), "{header}");
    assert_eq!(header["config_hash"].as_str().unwrap().len(), 64);
    lines
}

#[test]
fn flat_snapshot_decomposes_to_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let snap = frozen_snapshots(tmp.path());
    let cfg = write_json(&tmp.path().join("decompose.json"), json!({ "snapshot": snap, "faces": [[0, 0]] }));
    let out = tmp.path().join("decompose");
    let outcome = run(Command::Decompose, &cfg, &out).unwrap();
    assert_eq!(outcome.failed, 0);
    let records = ndjson(&out.join("decompose.ndjson"));
    assert_eq!(records.len(), 2);
    for r in &records {
        assert_eq!(r["walls"].as_array().unwrap().len(), 0);
        assert_eq!(r["wall_excess_total"], 0);
        assert_eq!(r["interface"]["excess"], 0);
        assert_eq!(r["interface"]["max_height"], 0);
    }
    assert!(out.join("manifest.json").exists());
}

#[test]
fn truncated_snapshot_is_a_checksum_error() {
    let tmp = tempfile::tempdir().unwrap();
    let snap = frozen_snapshots(tmp.path());
    let bytes = std::fs::read(&snap).unwrap();
    let cut = tmp.path().join("cut.bin");
    std::fs::write(&cut, &bytes[..bytes.len() - 5]).unwrap();
    let cfg = write_json(&tmp.path().join("decompose.json"), json!({ "snapshot": cut, "faces": [[0, 0]] }));
    let r = run(Command::Decompose, &cfg, &tmp.path().join("out"));
    assert!(matches!(r, Err(CliError::CorruptSnapshot { .. })), "{r:?}");
    assert_eq!(exit_code(&r), 4);
    let (code, _) = run_bin("decompose", &cfg, &tmp.path().join("out2"));
    assert_eq!(code, 4);
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(
        &tmp.path().join("bad.json"),
        json!({ "chain": { "box": { "lambda": { "n": 3 } }, "beta": "hot", "sweeps": 10, "seed": 1 } }),
    );
    let (code, stderr) = run_bin("sample", &cfg, &tmp.path().join("out"));
    assert_eq!(code, 2);
    assert!(stderr.contains("chain.beta"), "{stderr}");
    let unknown = write_json(
        &tmp.path().join("unknown.json"),
        json!({ "chain": { "box": { "lambda": { "n": 3 } }, "beta": 1.0, "sweeps": 10, "seed": 1, "colour": 1 } }),
    );
    assert_eq!(run_bin("sample", &unknown, &tmp.path().join("out")).0, 2);
    let burn = write_json(
        &tmp.path().join("burn.json"),
        json!({ "chain": { "box": { "lambda": { "n": 3 } }, "beta": 1.0, "sweeps": 10, "burn_in": 11, "seed": 1 } }),
    );
    assert_eq!(run_bin("sample", &burn, &tmp.path().join("out")).0, 2);
}

#[test]
fn missing_table_names_the_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(
        &tmp.path().join("report.json"),
        json!({ "inputs": tmp.path().join("nowhere"), "beta": 1.0, "n": 4, "checks": ["submult"] }),
    );
    let r = run(Command::Report, &cfg, &tmp.path().join("out"));
    match &r {
        Err(CliError::MissingArtifact(p)) => assert!(p.ends_with("submult.csv"), "{p:?}"),
        other => panic!("{other:?}"),
    }
    assert_eq!(exit_code(&r), 4);
    let (code, stderr) = run_bin("report", &cfg, &tmp.path().join("out"));
    assert_eq!(code, 4);
    assert!(stderr.contains("submult.csv"), "{stderr}");
}

#[test]
fn burn_in_equal_to_sweeps_gives_an_empty_snapshot_set() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(
        &tmp.path().join("sample.json"),
        json!({ "chain": { "box": { "lambda": { "n": 2, "h_cap": 2 } }, "beta": 1.0, "sweeps": 10, "burn_in": 10, "seed": 4 } }),
    );
    let out = tmp.path().join("sample");
    assert_eq!(run_bin("sample", &cfg, &out).0, 0);
    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sample");
    let dcfg = write_json(&tmp.path().join("d.json"), json!({ "snapshot": out.join("snapshots.bin"), "faces": [[0, 0]] }));
    let dout = tmp.path().join("d");
    run(Command::Decompose, &dcfg, &dout).unwrap();
    assert!(ndjson(&dout.join("decompose.ndjson")).is_empty());
}

#[test]
fn manifest_round_trip_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(
        &tmp.path().join("sample.json"),
        json!({ "chain": { "box": { "lambda": { "n": 3, "h_cap": 3 } }, "beta": 0.9, "sweeps": 120, "burn_in": 20, "thin": 10, "seed": 8, "replicas": 2 } }),
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(Command::Sample, &cfg, &a).unwrap();
    run(Command::Sample, &a.join("manifest.json"), &b).unwrap();
    for name in ["snapshots.bin", "sample_summary.txt", "manifest.json"] {
        assert_eq!(std::fs::read(a.join(name)).unwrap(), std::fs::read(b.join(name)).unwrap(), "{name}");
    }
    // A manifest from another command is rejected.
    let r = run(Command::Decompose, &a.join("manifest.json"), &tmp.path().join("c"));
    assert!(matches!(r, Err(CliError::Config { .. })));
}

#[test]
fn alpha_table_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_json(
        &tmp.path().join("estimate.json"),
        json!({ "chain": { "box": { "lambda": { "n": 3, "h_cap": 3 } }, "beta": 0.8, "sweeps": 400, "burn_in": 100, "seed": 2 },
                "tasks": [ { "task": "alpha_table", "h_max": 2 } ] }),
    );
    let out = tmp.path().join("est");
    run(Command::Estimate, &cfg, &out).unwrap();
    // The first line is a `#` provenance comment.
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(out.join("alpha_table.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(
        header,
        ["h", "alpha_hat", "stderr", "n_samples", "probability", "probability_stderr", "effective_n", "resolution_limited"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[1][0], "2");
}

#[test]
fn psi_skips_interfaces_without_a_pillar() {
    let tmp = tempfile::tempdir().unwrap();
    // Flat snapshots: every pillar at the origin is empty.
    let snap = frozen_snapshots(tmp.path());
    let cfg = write_json(&tmp.path().join("psi.json"), json!({ "snapshot": snap, "x": [0, 0], "t": 1 }));
    let out = tmp.path().join("psi");
    let outcome = run(Command::Psi, &cfg, &out).unwrap();
    assert_eq!(outcome.failed, 0);
    let records = ndjson(&out.join("psi.ndjson"));
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.to_string().contains("empty-pillar")), "{records:?}");
    assert!(!out.join("psi_interfaces.ndjson").exists());
}
