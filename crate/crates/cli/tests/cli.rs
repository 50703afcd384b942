use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SUBCOMMANDS: [&str; 9] = [
    "born-mc",
    "basis-mc",
    "exclusivity-scan",
    "sic-validate",
    "sic-search",
    "sic-distinguish",
    "stationary-solve",
    "pbr-geometric",
    "weak-value",
];

fn twostate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twostate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn every_subcommand_has_help() {
    for sub in SUBCOMMANDS {
        let out = twostate(&[sub, "--help"]);
        assert_eq!(code(&out), 0, "{sub}");
        let text = String::from_utf8(out.stdout).unwrap();
        for flag in [
            "--dim",
            "--samples",
            "--seed",
            "--tie-tol",
            "--dist",
            "--out",
            "--format",
            "--workers",
            "--config",
        ] {
            assert!(text.contains(flag), "{sub} help lacks {flag}");
        }
    }
}

#[test]
fn born_mc_writes_csv() {
    let out = twostate(&[
        "born-mc",
        "--seed",
        "3",
        "--samples",
        "2000",
        "--no-wall-time",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut reader = csv::Reader::from_reader(out.stdout.as_slice());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "schema_version");
    assert!(!headers.iter().any(|h| h == "wall_time_s"));
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 9);
    for row in &rows {
        assert_eq!(&row[0], "1");
        assert_eq!(&row[1], "born-mc");
        let config: Value = serde_json::from_str(&row[17]).unwrap();
        assert_eq!(config["seed"], 3);
    }
}

#[test]
fn missing_seed_is_a_config_error() {
    let out = twostate(&["born-mc", "--samples", "10"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("seed"));
}

#[test]
fn invalid_fields_are_config_errors() {
    assert_eq!(
        code(&twostate(&["born-mc", "--seed", "1", "--dim", "1"])),
        2
    );
    assert_eq!(
        code(&twostate(&["born-mc", "--seed", "1", "--samples", "0"])),
        2
    );
    assert_eq!(
        code(&twostate(&["born-mc", "--seed", "1", "--p-grid", "1.5"])),
        2
    );
    assert_eq!(
        code(&twostate(&["pbr-geometric", "--seed", "1", "--dim", "3"])),
        2
    );
    assert_eq!(
        code(&twostate(&["born-mc", "--seed", "1", "--dist", "fixed"])),
        2
    );
    assert_eq!(
        code(&twostate(&["born-mc", "--seed", "1", "--workers", "0"])),
        2
    );
    assert_eq!(code(&twostate(&["born-mc", "--seed", "x"])), 2);
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"dim": 3, "samples": 500, "seed": 11, "distribution": {"kind": "haar"}, "params": {"pGrid": [0.5]}}"#,
    );
    let out = twostate(&[
        "born-mc", "--config", &cfg, "--seed", "12", "--format", "json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let records: Value = serde_json::from_slice(&out.stdout).unwrap();
    let r = &records[0];
    assert_eq!(r["seed"], 12);
    assert_eq!(r["d"], 3);
    assert_eq!(r["dist"], "haar");
    assert_eq!(r["oracle"], 0.25);
    assert_eq!(r["config"]["samples"], 500);

    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"dim": 3, "seed": 1, "bogus": true}"#,
    );
    assert_eq!(code(&twostate(&["born-mc", "--config", &bad])), 2);
    let broken = write(dir.path(), "broken.json", "{");
    assert_eq!(code(&twostate(&["born-mc", "--config", &broken])), 2);
}

#[test]
fn fixed_distribution_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "fixed.json",
        r#"{"seed": 1, "samples": 50, "distribution": {"kind": "fixed", "state": [[1.0, 0.0], [0.0, 0.0]]}}"#,
    );
    let out = twostate(&[
        "born-mc", "--config", &cfg, "--dist", "fixed", "--format", "json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let records: Value = serde_json::from_slice(&out.stdout).unwrap();
    for r in records.as_array().unwrap() {
        assert_eq!(r["frequency"], r["oracle"]);
    }
}

#[test]
fn runtime_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = twostate(&[
        "stationary-solve",
        "--seed",
        "1",
        "--input",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);

    // diagonal entry of K in the eigenbasis of H = diag(1, 2)
    let infeasible = write(
        dir.path(),
        "k.json",
        r#"{"hamiltonian": [[[1,0],[0,0]],[[0,0],[2,0]]],
            "target": [[[0,1],[0,0]],[[0,0],[0,0]]],
            "diagonal": [0.5, 0.5]}"#,
    );
    let out = twostate(&["stationary-solve", "--seed", "1", "--input", &infeasible]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("infeasible"));

    let out_dir = dir.path().join("missing-dir").join("out.csv");
    let out = twostate(&[
        "sic-validate",
        "--seed",
        "1",
        "--samples",
        "2",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
}

#[test]
fn stationary_solve_from_file() {
    let dir = tempfile::tempdir().unwrap();
    // H = sigma_z, K = [|+><+|, sigma_z]
    let input = write(
        dir.path(),
        "k.json",
        r#"[{"hamiltonian": [[[1,0],[0,0]],[[0,0],[-1,0]]],
             "target": [[[0,0],[-1,0]],[[1,0],[0,0]]],
             "diagonal": [0.5, 0.5]}]"#,
    );
    let out = twostate(&[
        "stationary-solve",
        "--seed",
        "1",
        "--input",
        &input,
        "--format",
        "json",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let records: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(records.as_array().unwrap().len(), 1);
    let rho = &records[0]["detail"];
    for (i, j, want) in [(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)] {
        let re = rho[i][j][0].as_f64().unwrap();
        assert!((re - want).abs() < 1e-14, "rho[{i}][{j}] = {re}");
    }
}

#[test]
fn failed_checks_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "strict.json",
        r#"{"seed": 1, "samples": 2, "params": {"sicTol": 1e-30}}"#,
    );
    let out = twostate(&["sic-validate", "--config", &cfg, "--dim", "3"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("max_pair_deviation"));
}

#[test]
fn worker_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    for sub in SUBCOMMANDS {
        let dim = if sub == "pbr-geometric" { "2" } else { "3" };
        let mut payloads = Vec::new();
        for workers in ["1", "8"] {
            let path = dir.path().join(format!("{sub}-{workers}.csv"));
            let out = twostate(&[
                sub,
                "--seed",
                "5",
                "--dim",
                dim,
                "--samples",
                "300",
                "--workers",
                workers,
                "--no-wall-time",
                "--restarts",
                "4",
                "--out",
                path.to_str().unwrap(),
            ]);
            assert_eq!(code(&out), 0, "{sub}: {}", stderr(&out));
            payloads.push(std::fs::read(&path).unwrap());
        }
        assert_eq!(payloads[0], payloads[1], "{sub}");
    }
}

#[test]
fn json_output_matches_schema() {
    let schema_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/result.schema.json");
    let schema: Value =
        serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for sub in SUBCOMMANDS {
        let dim = if sub == "pbr-geometric" { "2" } else { "3" };
        let out = twostate(&[
            sub,
            "--seed",
            "9",
            "--dim",
            dim,
            "--samples",
            "200",
            "--restarts",
            "3",
            "--format",
            "json",
        ]);
        assert_eq!(code(&out), 0, "{sub}: {}", stderr(&out));
        let records: Value = serde_json::from_slice(&out.stdout).unwrap();
        let errors: Vec<String> = validator
            .iter_errors(&records)
            .map(|e| e.to_string())
            .collect();
        assert!(errors.is_empty(), "{sub}: {errors:?}");
    }
}
