use serde_json::Value;
use twostate::experiment::{
    emit_results, render, run_experiment, ExperimentConfig, ExperimentKind, OutputFormat, COLUMNS,
};
use twostate::Error;

fn config(kind: ExperimentKind) -> ExperimentConfig {
    let d = if kind == ExperimentKind::PbrGeometric {
        2
    } else {
        3
    };
    let mut cfg = ExperimentConfig::new(kind, d, 200, 17);
    cfg.params.restarts = Some(3);
    cfg
}

fn parse_opt(s: &str) -> Option<f64> {
    (!s.is_empty()).then(|| s.parse().unwrap())
}

#[test]
fn csv_round_trip_recovers_numbers_exactly() {
    for kind in ExperimentKind::ALL {
        let records = run_experiment(&config(kind)).unwrap();
        let bytes = render(&records, OutputFormat::Csv, true).unwrap();
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        assert_eq!(
            reader.headers().unwrap().iter().collect::<Vec<_>>(),
            COLUMNS
        );
        let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), records.len());
        for (row, r) in rows.iter().zip(&records) {
            let exact = |col: usize, want: Option<f64>| match (parse_opt(&row[col]), want) {
                (Some(a), Some(b)) if a.is_nan() => assert!(b.is_nan()),
                (a, b) => assert_eq!(
                    a.map(f64::to_bits),
                    b.map(f64::to_bits),
                    "{} column {}",
                    kind.name(),
                    COLUMNS[col]
                ),
            };
            exact(4, r.p_or_theta);
            exact(8, r.frequency);
            exact(9, r.stderr);
            exact(10, r.no_assign_rate);
            exact(11, r.conditional);
            exact(12, r.oracle);
            exact(14, r.value);
            exact(18, r.wall_time_s);
            assert_eq!(row[3].parse::<usize>().unwrap(), r.d);
            assert_eq!(row[5].parse::<u64>().unwrap(), r.samples);
            let echoed: ExperimentConfig = serde_json::from_str(&row[17]).unwrap();
            assert_eq!(echoed, config(kind));
        }
    }
}

#[test]
fn json_is_a_faithful_record_array() {
    let cfg = config(ExperimentKind::BasisMc);
    let records = run_experiment(&cfg).unwrap();
    let v: Value =
        serde_json::from_slice(&render(&records, OutputFormat::Json, false).unwrap()).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), records.len());
    for (row, r) in rows.iter().zip(&records) {
        assert_eq!(row["frequency"].as_f64(), r.frequency);
        assert_eq!(row["conditional"].as_f64(), r.conditional);
        assert_eq!(row["outcome"].as_u64(), r.outcome.map(|k| k as u64));
        let echoed: ExperimentConfig = serde_json::from_value(row["config"].clone()).unwrap();
        assert_eq!(echoed, cfg);
        assert!(row.get("wall_time_s").is_none());
    }
}

#[test]
fn rerun_gives_identical_payloads() {
    for kind in ExperimentKind::ALL {
        let a = render(
            &run_experiment(&config(kind)).unwrap(),
            OutputFormat::Csv,
            false,
        )
        .unwrap();
        let b = render(
            &run_experiment(&config(kind)).unwrap(),
            OutputFormat::Csv,
            false,
        )
        .unwrap();
        assert_eq!(a, b, "{}", kind.name());
    }
}

#[test]
fn different_seeds_differ() {
    let mut cfg = config(ExperimentKind::BornMc);
    let a = run_experiment(&cfg).unwrap();
    cfg.seed += 1;
    let b = run_experiment(&cfg).unwrap();
    assert!(a.iter().zip(&b).any(|(x, y)| x.frequency != y.frequency));
}

#[test]
fn emit_writes_files_and_reports_path_errors() {
    let dir = tempfile::tempdir().unwrap();
    let records = run_experiment(&config(ExperimentKind::WeakValue)).unwrap();
    let path = dir.path().join("out.json");
    emit_results(&records, OutputFormat::Json, Some(&path), false).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        render(&records, OutputFormat::Json, false).unwrap()
    );

    let bad = dir.path().join("no-such-dir").join("out.csv");
    match emit_results(&records, OutputFormat::Csv, Some(&bad), false) {
        Err(Error::Io { path, .. }) => assert!(path.contains("no-such-dir")),
        other => panic!("expected an I/O error, got {other:?}"),
    }
}

#[test]
fn harness_examples() {
    // born-mc at d = 2 over the default grid
    let records = run_experiment(&ExperimentConfig::new(
        ExperimentKind::BornMc,
        2,
        100_000,
        42,
    ))
    .unwrap();
    assert_eq!(records.len(), 9);
    for r in &records {
        assert!((r.frequency.unwrap() - r.oracle.unwrap()).abs() < 4.0 * r.stderr.unwrap());
    }

    let sic = run_experiment(&ExperimentConfig::new(
        ExperimentKind::SicValidate,
        3,
        10,
        1,
    ))
    .unwrap();
    let dev = sic
        .iter()
        .find(|r| r.metric.as_deref() == Some("max_pair_deviation"))
        .unwrap();
    assert!(dev.value.unwrap() < 1e-10);
    assert!(!dev.failed());

    let scan = run_experiment(&ExperimentConfig::new(
        ExperimentKind::ExclusivityScan,
        5,
        10_000,
        1,
    ))
    .unwrap();
    let v = scan
        .iter()
        .find(|r| r.metric.as_deref() == Some("multiple_outcomes_pure"))
        .unwrap();
    assert_eq!(v.value, Some(0.0));
}
