mod common;

use std::path::Path;

use prognos::eval::adjusted_rand;
use prognos::jointmodel::Checkpoint;
use prognos::pipeline::{RunConfig, RunManifest, Runner, Stage, SummaryRow};
use prognos::trajectory::read_labels_csv;
use prognos::Error;

fn setup(dir: &Path) -> RunConfig {
    let data = dir.join("data");
    common::synthetic(12, 6, 40, 70, 3).write(&data, "FD003");
    RunConfig::from_toml(&common::small_config(&data, "FD003")).unwrap()
}

#[test]
fn full_chain_produces_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let run = tmp.path().join("run");
    let mut r = Runner::open(&run, config, false).unwrap();
    for s in [
        Stage::Preprocess,
        Stage::Embed,
        Stage::Cluster,
        Stage::Train,
        Stage::Evaluate,
    ] {
        let rep = r.run(s).unwrap();
        assert!(!rep.cached, "{s}");
        assert!(!rep.artifacts.is_empty(), "{s}");
        for a in &rep.artifacts {
            assert!(a.is_file(), "{}", a.display());
        }
    }
    assert!(run.join("cluster/centroids.csv").is_file());
    assert!(run.join("cluster/diagnostics.json").is_file());
    assert!(run.join("train/fold_0.json").is_file());
    assert!(run.join("train/fold_1.json").is_file());
    assert!(run.join("train/cv.json").is_file());
    assert!(run.join("evaluate/metrics.json").is_file());
    assert!(run.join("evaluate/intervals.csv").is_file());

    // each produced file belongs to exactly one stage record
    let m = RunManifest::load(&run).unwrap().unwrap();
    let mut paths: Vec<&str> = m
        .stages
        .values()
        .flat_map(|s| s.artifacts.iter().map(|a| a.path.as_str()))
        .collect();
    let n = paths.len();
    paths.sort();
    paths.dedup();
    assert_eq!(paths.len(), n);

    let ck = Checkpoint::load(&run.join("train/fold_0.json")).unwrap();
    assert_eq!(ck.model.arch.n_modes, 2);
    assert_eq!(ck.mode_map.len(), 12);
}

#[test]
fn discovered_modes_match_generating_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let syn = common::synthetic(12, 2, 40, 70, 3);
    syn.write(&data, "FD003");
    let config = RunConfig::from_toml(&common::small_config(&data, "FD003")).unwrap();
    let run = tmp.path().join("run");
    let mut r = Runner::open(&run, config, false).unwrap();
    for s in [Stage::Preprocess, Stage::Embed, Stage::Cluster] {
        r.run(s).unwrap();
    }
    let labels = read_labels_csv(&run.join("cluster/labels.csv")).unwrap();
    let found: Vec<usize> = labels.values().copied().collect();
    let ari = adjusted_rand(&found, &syn.train_modes);
    assert!(ari > 0.99, "ARI {ari}");
}

#[test]
fn repeat_is_a_cache_hit_and_config_change_invalidates_downstream() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let run = tmp.path().join("run");
    {
        let mut r = Runner::open(&run, config.clone(), false).unwrap();
        r.run(Stage::Preprocess).unwrap();
        r.run(Stage::Embed).unwrap();
        r.run(Stage::Cluster).unwrap();
        let again = r.run(Stage::Embed).unwrap();
        assert!(again.cached);
        assert_eq!(r.manifest().stages["embed"].cache_hits, 1);
    }
    let mut changed = config.clone();
    changed.umap.epochs += 1;
    let mut r = Runner::open(&run, changed, false).unwrap();
    // the cluster record was made under the old embedding
    assert!(matches!(r.run(Stage::Cluster), Err(Error::MissingStage { .. })));
    assert!(!r.run(Stage::Embed).unwrap().cached);
    assert!(!r.manifest().stages.contains_key("cluster"));
    assert!(!r.run(Stage::Cluster).unwrap().cached);

    // forcing recomputes even when current
    drop(r);
    let mut r = Runner::open(&run, config, true).unwrap();
    assert!(!r.run(Stage::Preprocess).unwrap().cached);
}

#[test]
fn missing_upstream_names_the_command() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let mut r = Runner::open(&tmp.path().join("run"), config, false).unwrap();
    let e = r.run(Stage::Evaluate).unwrap_err();
    assert_eq!(e.exit_code(), 10);
    assert!(e.to_string().contains("run `prognos train` first"), "{e}");
}

#[test]
fn tampered_artifact_forces_recompute() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let run = tmp.path().join("run");
    let mut r = Runner::open(&run, config, false).unwrap();
    r.run(Stage::Preprocess).unwrap();
    r.run(Stage::Embed).unwrap();
    std::fs::write(run.join("embed/embedding.csv"), "garbage").unwrap();
    assert!(!r.run(Stage::Embed).unwrap().cached);
}

#[test]
fn reproduce_reports_each_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let run = tmp.path().join("run");
    let mut r = Runner::open(&run, config, false).unwrap();
    let rep = r.run(Stage::Reproduce).unwrap();
    let table = rep.summary.unwrap();
    assert!(table.contains("RMSE") && table.contains("inf"), "{table}");
    let rows: Vec<SummaryRow> =
        serde_json::from_str(&std::fs::read_to_string(run.join("reproduce/summary.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().filter(|r| r.lambda.is_none()).count(), 1);
    // eta = 0 at lambda = 10 appears in both studies with identical numbers
    let same: Vec<&SummaryRow> = rows.iter().filter(|r| r.eta == 0.0 && r.lambda == Some(10.0)).collect();
    assert_eq!(same.len(), 2);
    assert_eq!(same[0].test, same[1].test);
    for row in &rows {
        assert!(row.test.stats.rmse.mean >= row.test.stats.mae.mean);
    }
    let csv = std::fs::read_to_string(run.join("reproduce/summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn second_runner_on_same_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let config = setup(tmp.path());
    let run = tmp.path().join("run");
    let _first = Runner::open(&run, config.clone(), false).unwrap();
    assert!(matches!(Runner::open(&run, config, false), Err(Error::Locked(_))));
}
