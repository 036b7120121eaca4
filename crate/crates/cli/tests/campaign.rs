use std::path::Path;
use std::process::Command;

use ringsens_cli::campaign::{run_campaign, RunManifest, StageStatus, MANIFEST_FILE};
use ringsens_cli::config::CampaignConfig;
use ringsens_cli::export::{read_scatter_csv, scatter_rows, Sensitivity};
use ringsens_cli::io::{read_jsonl, sha256_file, write_jsonl};
use ringsens_cli::stages::read_pool;
use ringsens_core::sampler::generate_pool;
use ringsens_core::sensitivity::SensitivityRecord;
use ringsens_core::synthesis::Controller;

const MINIMAL: &str = r#"{
    "schema_version": 1,
    "seed": 7,
    "transfers": [{"N": 3, "in": 1, "out": 2}],
    "objectives": [{"kind": "fidelity"}],
    "budget": {"restarts": 16, "max_iterations": 100},
    "selection": {"top": 10},
    "sampler": {"pool_target": 200, "draw": 100},
    "grid": {"points": 101, "heatmap_bins": 32}
}"#;

/// Two cells with non-zero nominal errors, so every export is produced.
const SMALL: &str = r#"{
    "schema_version": 1,
    "seed": 11,
    "transfers": [{"N": 3, "in": 1, "out": 2}],
    "objectives": [{"kind": "overlap", "alpha": 0.5}, {"kind": "dephasing", "count": 100}],
    "budget": {"restarts": 16, "max_iterations": 100},
    "selection": {"top": 10},
    "sampler": {"pool_target": 200, "draw": 100},
    "grid": {"points": 101, "heatmap_bins": 32}
}"#;

fn config(text: &str) -> CampaignConfig {
    let cfg: CampaignConfig = serde_json::from_str(text).unwrap();
    cfg.validate().unwrap();
    cfg
}

fn statuses(m: &RunManifest) -> Vec<StageStatus> {
    m.stages.iter().map(|s| s.status).collect()
}

fn status_of(m: &RunManifest, name: &str) -> StageStatus {
    m.stages.iter().find(|s| s.name == name).unwrap().status
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ringsens"))
}

#[test]
fn minimal_campaign_completes_with_a_full_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_campaign(&config(MINIMAL), dir.path()).unwrap();
    assert!(m.complete);
    assert!(statuses(&m).iter().all(|s| *s == StageStatus::Completed));
    assert_eq!(m.stages.len(), 5);
    for f in &m.files {
        assert_eq!(sha256_file(&dir.path().join(&f.path)).unwrap(), f.sha256, "{}", f.path);
    }
    let paths: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    for expected in [
        "config.json",
        "pools/N3.jsonl",
        "cells/N3_1to2/fidelity/controllers.jsonl",
        "cells/N3_1to2/fidelity/heatmap_best.svg",
        "cells/N3_1to2/fidelity/tests.json",
        "report/summary.md",
    ] {
        assert!(paths.contains(&expected), "{expected} missing");
    }
    assert!(!paths.contains(&MANIFEST_FILE));
    assert_eq!(RunManifest::load(dir.path()).unwrap(), m);

    let controllers: Vec<Controller> = read_jsonl(&dir.path().join("cells/N3_1to2/fidelity/controllers.jsonl")).unwrap();
    assert_eq!(controllers.len(), 10);
}

#[test]
fn identical_configs_give_identical_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config(SMALL);
    let ma = run_campaign(&cfg, a.path()).unwrap();
    let mb = run_campaign(&cfg, b.path()).unwrap();
    assert!(ma.complete);
    assert_eq!(ma.files, mb.files);
    assert_eq!(ma.config_hash, mb.config_hash);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let work = tempfile::tempdir().unwrap();
    let cfg_path = work.path().join("cfg.json");
    std::fs::write(&cfg_path, SMALL).unwrap();
    let mut manifests = Vec::new();
    for jobs in ["1", "3"] {
        let out = work.path().join(format!("jobs{jobs}"));
        let status = bin()
            .args(["campaign", "--jobs", jobs, "--config"])
            .arg(&cfg_path)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert_eq!(status.code(), Some(0));
        manifests.push(RunManifest::load(&out).unwrap());
    }
    assert_eq!(manifests[0].files, manifests[1].files);
}

#[test]
fn rerun_resumes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(SMALL);
    let first = run_campaign(&cfg, dir.path()).unwrap();
    let second = run_campaign(&cfg, dir.path()).unwrap();
    assert!(statuses(&second).iter().all(|s| *s == StageStatus::Resumed));
    assert_eq!(first.files, second.files);

    let mut reseeded = cfg.clone();
    reseeded.seed += 1;
    let third = run_campaign(&reseeded, dir.path()).unwrap();
    assert!(statuses(&third).iter().all(|s| *s == StageStatus::Completed));
}

#[test]
fn tampered_output_is_recomputed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(SMALL);
    let first = run_campaign(&cfg, dir.path()).unwrap();
    let target = dir.path().join("cells/N3_1to2/overlap/sensitivity.jsonl");
    std::fs::write(&target, "{}\n").unwrap();

    let second = run_campaign(&cfg, dir.path()).unwrap();
    assert_eq!(status_of(&second, "synthesize/N3_1to2/overlap"), StageStatus::Resumed);
    assert_eq!(status_of(&second, "scan/N3_1to2/overlap"), StageStatus::Completed);
    // Restored outputs have the same digest, so downstream stages resume.
    assert_eq!(status_of(&second, "test/N3_1to2/overlap"), StageStatus::Resumed);
    assert_eq!(status_of(&second, "scan/N3_1to2/dephasing"), StageStatus::Resumed);
    assert_eq!(first.files, second.files);
}

#[test]
fn failed_stage_gives_partial_manifest_and_exit_code_4() {
    let work = tempfile::tempdir().unwrap();
    let cfg_path = work.path().join("cfg.json");
    std::fs::write(
        &cfg_path,
        SMALL.replace("\"draw\": 100}", "\"draw\": 100, \"batch_size\": 1, \"min_acceptance_rate\": 1.0}"),
    )
    .unwrap();
    let out = work.path().join("out");
    let run = bin()
        .arg("campaign")
        .arg("--config")
        .arg(&cfg_path)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(4), "{}", String::from_utf8_lossy(&run.stderr));

    let m = RunManifest::load(&out).unwrap();
    assert!(!m.complete);
    assert_eq!(status_of(&m, "pool/N3"), StageStatus::Failed);
    assert!(m.stages.iter().find(|s| s.name == "pool/N3").unwrap().error.is_some());
    // The overlap synthesis does not need the pool; its scan does.
    assert_eq!(status_of(&m, "synthesize/N3_1to2/overlap"), StageStatus::Completed);
    assert_eq!(status_of(&m, "scan/N3_1to2/overlap"), StageStatus::Skipped);
    assert_eq!(status_of(&m, "synthesize/N3_1to2/dephasing"), StageStatus::Skipped);
    assert_eq!(status_of(&m, "report"), StageStatus::Completed);
    let summary = std::fs::read_to_string(out.join("report/summary.md")).unwrap();
    assert!(summary.contains("N3_1to2/dephasing"));
}

#[test]
fn config_errors_exit_with_code_2() {
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("out");
    let cases = [
        MINIMAL.replacen("\"seed\": 7,", "\"seed\": 7, \"typo\": 1,", 1),
        MINIMAL.replacen("\"seed\": 7,", "", 1),
        MINIMAL.replacen("\"schema_version\": 1", "\"schema_version\": 9", 1),
        MINIMAL.replacen("\"top\": 10", "\"top\": 99", 1),
    ];
    for (i, text) in cases.iter().enumerate() {
        let path = work.path().join(format!("bad{i}.json"));
        std::fs::write(&path, text).unwrap();
        let status = bin()
            .arg("campaign")
            .arg("--config")
            .arg(&path)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        assert_eq!(status.code(), Some(2), "case {i}");
    }
    let missing = bin()
        .args(["test", "--records", "does-not-exist.jsonl", "--out"])
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert_eq!(missing.code(), Some(2));
    let no_seed = bin()
        .args(["synthesize", "--N", "3", "--in", "1", "--out", "2"])
        .args(["--objective", "fidelity", "--restarts", "4", "--top", "2", "--out-dir"])
        .arg(&out)
        .output()
        .unwrap()
        .status;
    assert_eq!(no_seed.code(), Some(2));
}

#[test]
fn persisted_artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(SMALL);
    run_campaign(&cfg, dir.path()).unwrap();
    let cell = dir.path().join("cells/N3_1to2/overlap");

    let records: Vec<SensitivityRecord> = read_jsonl(&cell.join("sensitivity.jsonl")).unwrap();
    assert!(records.len() >= 10);
    for (file, axis) in [("scatter_sa.csv", Sensitivity::Analytic), ("scatter_sk.csv", Sensitivity::Kde)] {
        assert_eq!(read_scatter_csv(&cell.join(file)).unwrap(), scatter_rows(&records, axis), "{file}");
    }

    let controllers_path = cell.join("controllers.jsonl");
    let controllers: Vec<Controller> = read_jsonl(&controllers_path).unwrap();
    let copy = dir.path().join("copy.jsonl");
    write_jsonl(&copy, &controllers).unwrap();
    assert_eq!(sha256_file(&copy).unwrap(), sha256_file(&controllers_path).unwrap());

    let pool = read_pool(&dir.path().join("pools/N3.jsonl")).unwrap();
    assert_eq!(pool, generate_pool(&cfg.sampler.for_ring(3)).unwrap());
}

#[test]
fn heatmap_mean_starts_at_the_nominal_error() {
    let dir = tempfile::tempdir().unwrap();
    run_campaign(&config(SMALL), dir.path()).unwrap();
    let cell = dir.path().join("cells/N3_1to2/overlap");
    let controllers: Vec<Controller> = read_jsonl(&cell.join("controllers.jsonl")).unwrap();
    let mut reader = csv::Reader::from_path(cell.join("heatmap_best.csv")).unwrap();
    let first = reader.records().next().unwrap().unwrap();
    let delta: f64 = first[0].parse().unwrap();
    let mean: f64 = first[1].parse().unwrap();
    assert_eq!(delta, 0.0);
    assert!((mean - controllers[0].nominal_error).abs() < 1e-12);
}

#[test]
fn subcommands_chain_into_a_report() {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    let run = |args: &[&str], out: &Path| {
        let flag = if args[0] == "synthesize" { "--out-dir" } else { "--out" };
        let o = bin().args(args).arg(flag).arg(out).output().unwrap();
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    };
    let pool = w.join("pools/N3.jsonl");
    let pool_s = pool.to_str().unwrap();
    run(&["sample-dephasing", "-N", "3", "--target", "150"], &w.join("pools"));
    run(
        &[
            "synthesize", "--N", "3", "--in", "1", "--out", "2", "--objective", "dephasing", "--restarts",
            "16", "--iterations", "100", "--top", "10", "--pool", pool_s, "--draw", "50", "--seed", "5",
        ],
        &w.join("cell"),
    );
    let controllers = w.join("cell/controllers.jsonl");
    run(
        &["sensitivity", "--controllers", controllers.to_str().unwrap(), "--pool", pool_s, "--draw", "100"]
            .iter()
            .chain(&["--grid", "51", "--seed", "5"])
            .copied()
            .collect::<Vec<_>>(),
        &w.join("cell"),
    );
    let records = w.join("cell/sensitivity.jsonl");
    run(&["test", "--records", records.to_str().unwrap()], &w.join("cell"));
    run(&["report", "--records", records.to_str().unwrap()], &w.join("report"));
    let trend = std::fs::read_to_string(w.join("report/trend.csv")).unwrap();
    assert_eq!(trend.lines().count(), 4);
    assert!(w.join("cell/scatter_sk.svg").exists());
    assert!(w.join("report/pairs.csv").exists());
}
