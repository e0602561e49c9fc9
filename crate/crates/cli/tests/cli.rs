use std::process::Command;

use interlacement_cli::config::{Experiment, ExperimentConfig};
use interlacement_cli::experiments;
use proptest::prelude::*;

fn interlace(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_interlace")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trips(
        n in 2usize..100,
        gamma in 0.0f64..1.0,
        u in 0.0f64..20.0,
        mut grid in prop::collection::vec(0.0f64..20.0, 1..6),
        mut eps in prop::collection::vec(1e-6f64..1.0, 1..4),
        seed in any::<u64>(),
        kill in prop::option::of(1.0f64..1e3),
    ) {
        grid.sort_by(f64::total_cmp);
        eps.sort_by(f64::total_cmp);
        let c = ExperimentConfig {
            experiment: Experiment::CouplingPipeline,
            n,
            gamma,
            u,
            u_grid: grid,
            epsilon: eps,
            seed,
            kill_radius: kill,
            ..Default::default()
        };
        prop_assert_eq!(ExperimentConfig::parse(&c.render()).unwrap(), c);
    }
}

#[test]
fn level_zero_sweep_is_one() {
    let cfg = ExperimentConfig { u_grid: vec![0.0], n: 8, replicas: 10, ..Default::default() };
    let r = experiments::run(&cfg).unwrap();
    assert_eq!(r.table.rows.len(), 1);
    assert_eq!(r.table.rows[0][2], "1");
    assert!(r.passed());
}

#[test]
fn csv_is_rfc4180() {
    let cfg = ExperimentConfig { u_grid: vec![0.0, 1.0], n: 6, replicas: 4, ..Default::default() };
    let csv = experiments::run(&cfg).unwrap().table.to_csv().unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("n,u,eta,stderr,mean_largest\r\n"));
    assert_eq!(text.matches("\r\n").count(), 3);
}

#[test]
fn report_json_is_sorted_and_echoes_config() {
    let cfg = ExperimentConfig { u_grid: vec![0.0], n: 6, replicas: 2, ..Default::default() };
    let json = experiments::run(&cfg).unwrap().to_json().unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let echoed = ExperimentConfig::parse(v["config_text"].as_str().unwrap()).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = dir.path().join("a.cfg");

    std::fs::write(&cfg, "sizes = 6\nu_grid = 0, 1\nreplicas = 4\n").unwrap();
    let (code, _) = interlace(&["phase-sweep", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 0);

    // no crossing of 1/2 between two sizes is an assertion failure
    std::fs::write(&cfg, "sizes = 6, 8\nu_grid = 0, 0.01\nreplicas = 4\n").unwrap();
    let (code, _) = interlace(&["phase-sweep", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 2);

    std::fs::write(&cfg, "u_grid = 3, 1\n").unwrap();
    let (code, err) = interlace(&["phase-sweep", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(code, 1);
    assert!(err.contains("ascending"));
}

#[test]
fn errors_carry_their_stage() {
    let cfg = ExperimentConfig { experiment: Experiment::CouplingPipeline, n: 20, regime_c: 1e-3, ..Default::default() };
    let e = experiments::run(&cfg).unwrap_err();
    let msg = format!("{e:#}");
    assert!(msg.starts_with("geometry:"), "{msg}");
    let root = e.downcast_ref::<interlacement::Error>().unwrap().root();
    assert!(matches!(root, interlacement::Error::GeometryInfeasible(_)));
}
