//! End-to-end tests of the scenario runner, the CSV artifacts, and the
//! compiled binary.

use mfpca_bench::{
    parse_config, records_csv, run_scenario, summarize, summary_csv, RunOptions, ScenarioConfig,
};
use std::path::Path;
use std::process::Command;
use tempfile::TempDir;

fn tiny_config() -> ScenarioConfig {
    parse_config(
        "n = 20\n\
         m1 = 7x7\n\
         m2 = 15\n\
         regime = dense\n\
         replications = 5\n\
         k_retain = 6\n\
         seed = 11\n",
    )
    .unwrap()
}

#[test]
fn dense_scenario_yields_one_record_per_pathway_and_replication() {
    let cfg = tiny_config();
    let records = run_scenario(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(records.len(), 15, "5 replications x 3 pathways");
    for r in &records {
        assert!(r.is_ok(), "replication {} {}: {}", r.replication, r.pathway, r.status);
        assert_eq!(r.k_selected, 6);
        assert_eq!(r.rse.len(), 6);
        assert_eq!(r.ise.len(), 6);
        assert_eq!(r.alphas.len(), 25);
        assert!(r.fit_seconds.is_finite() && r.fit_seconds >= 0.0);
        assert!(r.mrse.is_finite() && r.mrse >= 0.0);
    }
    // records are ordered by replication, then configured pathway order
    let tags: Vec<&str> = records.iter().take(3).map(|r| r.pathway.as_str()).collect();
    assert_eq!(tags, ["gram", "cov", "basis"]);
}

#[test]
fn identical_seeds_give_identical_metrics_regardless_of_scheduling() {
    let cfg = tiny_config();
    let parallel = run_scenario(&cfg, &RunOptions::default()).unwrap();
    let pinned = run_scenario(
        &cfg,
        &RunOptions {
            threads: 0,
            pin_timing: true,
        },
    )
    .unwrap();
    assert_eq!(parallel.len(), pinned.len());
    for (a, b) in parallel.iter().zip(&pinned) {
        assert_eq!(a.status, b.status);
        assert_eq!(a.k_selected, b.k_selected);
        assert_eq!(a.mrse.to_bits(), b.mrse.to_bits());
        assert_eq!(a.rse, b.rse);
        assert_eq!(a.ise, b.ise);
        assert_eq!(a.alphas, b.alphas);
    }
}

#[test]
fn infeasible_generation_is_recorded_not_crashed() {
    // 25 components need 5 tensor factors per axis; a 3x3 grid cannot carry
    // them, so every replication fails -- but the run itself must succeed
    let cfg = parse_config(
        "n = 10\n\
         m1 = 3x3\n\
         m2 = 15\n\
         replications = 2\n\
         k_retain = 4\n",
    )
    .unwrap();
    let records = run_scenario(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(records.len(), 6);
    for r in &records {
        assert!(!r.is_ok());
        assert!(r.fit_seconds.is_nan());
        assert!(r.rse.is_empty());
    }
    // failed rows render with empty metric cells and summarize to nothing
    let csv = records_csv(&records, cfg.k_retain, cfg.k_sim);
    let header_cols = csv.lines().next().unwrap().split(',').count();
    for line in csv.lines().skip(1) {
        assert_eq!(line.split(',').count(), header_cols);
    }
    assert!(summarize(&records).is_empty());
}

#[test]
fn sparse_and_noisy_regimes_fit_through_their_preprocessing() {
    for (regime, pathways) in [("sparse-medium", "gram,cov"), ("noisy", "gram,basis")] {
        let cfg = parse_config(&format!(
            "n = 12\n\
             m1 = 9x9\n\
             m2 = 17\n\
             regime = {regime}\n\
             pathways = {pathways}\n\
             replications = 2\n\
             k_retain = 3\n\
             k_univ = 8,8\n\
             nbasis1 = 5x5\n\
             nbasis2 = 6\n\
             seed = 3\n"
        ))
        .unwrap();
        let records = run_scenario(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(records.len(), 4);
        for r in &records {
            assert!(r.is_ok(), "{regime}/{}: {}", r.pathway, r.status);
            assert!(r.mrse.is_finite());
            assert!(r.ise.iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn records_csv_is_rectangular_and_round_numbered() {
    let cfg = tiny_config();
    let records = run_scenario(&cfg, &RunOptions::default()).unwrap();
    let csv = records_csv(&records, cfg.k_retain, cfg.k_sim);
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    let cols = header.split(',').count();
    assert_eq!(cols, 12 + 6 + 6 + 25);
    assert!(header.starts_with("scenario,n,m1,m2,regime,replication,pathway,seed,status"));
    let mut rows = 0;
    for line in lines {
        assert_eq!(line.split(',').count(), cols);
        rows += 1;
    }
    assert_eq!(rows, records.len());
    let rows = summarize(&records);
    let csv = summary_csv(&rows);
    assert!(csv.starts_with("scenario,pathway,metric,median,q1,q3\n"));
    // 3 pathways x (fit_seconds + mrse + 6 rse + 6 ise) + 6 ordered ratios
    assert_eq!(csv.lines().count() - 1, 3 * 14 + 6);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mfpca-bench"))
}

#[test]
fn binary_runs_the_full_pipeline() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("scenario.cfg");
    std::fs::write(
        &cfg_path,
        "n = 15\nm1 = 7x7\nm2 = 15\nreplications = 2\nk_retain = 4\nseed = 5\n",
    )
    .unwrap();

    let sim_dir = dir.path().join("sim");
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(&sim_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = mfpca::read_dataset(&sim_dir).unwrap();
    assert_eq!(ds.n_obs(), 15);
    assert!(sim_dir.join("kl_model.csv").exists());

    let bench_dir = dir.path().join("bench");
    let out = bin()
        .args(["bench", "--config"])
        .arg(&cfg_path)
        .args(["--replications", "2", "--pathways", "gram,basis", "--out"])
        .arg(&bench_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(bench_dir.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 4);
    assert!(bench_dir.join("summary.csv").exists());

    let fit_dir = dir.path().join("fit");
    let out = bin()
        .args(["fit", "--config"])
        .arg(&cfg_path)
        .args(["--pathways", "gram", "--data"])
        .arg(&sim_dir)
        .arg("--out")
        .arg(&fit_dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = mfpca::read_model(&fit_dir.join("gram")).unwrap();
    assert_eq!(model.n_components(), 4);

    let out = bin()
        .args(["diagnose", "--config"])
        .arg(&cfg_path)
        .args(["--data"])
        .arg(&sim_dir)
        .args(["--trials", "3"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("inertia (plain distance)"));
    assert!(text.contains("adjoint identity residual"));
}

#[test]
fn binary_rejects_bad_configs() {
    let dir = TempDir::new().unwrap();
    let cfg_path = dir.path().join("bad.cfg");
    std::fs::write(&cfg_path, "k_retain = 40\n").unwrap();
    let out = bin()
        .args(["bench", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("x"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!Path::new(&dir.path().join("x").join("records.csv")).exists());
}
