use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use socialrec::dataio::write_dataset;
use socialrec::synthetic::{planted_inconsistency, random_fixture, PlantedConfig};

fn socialrec(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socialrec"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn planted_dir(root: &Path) {
    let ds = planted_inconsistency(&PlantedConfig {
        users: 24,
        items: 12,
        ratings_per_user: 4,
        ..Default::default()
    })
    .unwrap();
    write_dataset(&ds, &root.join("data")).unwrap();
}

fn raw_files(root: &Path) {
    let mut ratings = String::from("# user\titem\trating\n");
    let mut trust = String::new();
    for u in 0..6 {
        for i in 0..3 {
            ratings += &format!("u{u}\ti{}\t{}\n", (u + i) % 5, i);
        }
        trust += &format!("u{u}\tu{}\n", (u + 1) % 6);
    }
    ratings += "ghost\ti0\t5\n";
    fs::write(root.join("r.tsv"), ratings).unwrap();
    fs::write(root.join("t.tsv"), trust).unwrap();
}

#[test]
fn ingest_reports_counts_and_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    raw_files(dir.path());
    let o = socialrec(
        &[
            "ingest",
            "--ratings",
            "r.tsv",
            "--trust",
            "t.tsv",
            "--out",
            "ds",
            "--seed",
            "3",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("users=6\n"), "{text}");
    assert!(text.contains("items=5\n"));
    assert!(text.contains("rating_levels=0,1,2\n"));
    assert!(text.contains("relations=5\n"));
    for f in [
        "manifest.json",
        "nodes.tsv",
        "ratings.tsv",
        "social.tsv",
        "meta.json",
    ] {
        assert!(dir.path().join("ds").join(f).exists(), "{f}");
    }
}

#[test]
fn six_levels_give_eight_relations() {
    let dir = tempfile::tempdir().unwrap();
    let ratings: String = (0..6).map(|r| format!("a\ti{r}\t{r}\n")).collect();
    fs::write(dir.path().join("r.tsv"), ratings).unwrap();
    fs::write(dir.path().join("t.tsv"), "a\tb\n").unwrap();
    let o = socialrec(
        &[
            "ingest",
            "--ratings",
            "r.tsv",
            "--trust",
            "t.tsv",
            "--out",
            "ds",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("relations=8\n"));
}

#[test]
fn missing_input_exits_2_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.tsv"), "a\tb\n").unwrap();
    let o = socialrec(
        &[
            "ingest",
            "--ratings",
            "absent.tsv",
            "--trust",
            "t.tsv",
            "--out",
            "ds",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.tsv"));
    assert!(!dir.path().join("ds").exists());
}

#[test]
fn bad_splits_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    raw_files(dir.path());
    let o = socialrec(
        &[
            "ingest",
            "--ratings",
            "r.tsv",
            "--trust",
            "t.tsv",
            "--out",
            "ds",
            "--splits",
            "0.5,0.5",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_gamma_fails_before_reading_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = socialrec(
        &[
            "train", "--data", "nowhere", "--out", "run", "--gamma", "1.2",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma must be in [0,1]"));
    assert!(!dir.path().join("run").exists());
}

#[test]
fn single_epoch_train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    planted_dir(dir.path());
    let o = socialrec(
        &[
            "train",
            "--data",
            "data",
            "--out",
            "run",
            "--max-epochs",
            "1",
            "--d",
            "4",
            "-q",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("test rmse="));
    let history = fs::read_to_string(dir.path().join("run/history.tsv")).unwrap();
    assert_eq!(history.lines().count(), 2);
    assert!(history.starts_with("epoch\ttrain_loss\tval_rmse\tval_mae\telapsed_seconds\n"));

    let o = socialrec(
        &[
            "evaluate",
            "--data",
            "data",
            "--checkpoint",
            "run/checkpoint",
            "--split",
            "val",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("val rmse="));
    let o = socialrec(
        &[
            "evaluate",
            "--data",
            "data",
            "--checkpoint",
            "run/checkpoint",
            "--split",
            "holdout",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn clipped_metrics_never_exceed_raw() {
    let dir = tempfile::tempdir().unwrap();
    planted_dir(dir.path());
    let o = socialrec(
        &[
            "train",
            "--data",
            "data",
            "--out",
            "run",
            "--max-epochs",
            "2",
            "--d",
            "4",
            "-q",
        ],
        dir.path(),
    );
    assert!(o.status.success());
    let rmse = |clip: bool| -> f64 {
        let mut args = vec![
            "evaluate",
            "--data",
            "data",
            "--checkpoint",
            "run/checkpoint",
        ];
        if clip {
            args.push("--clip-predictions");
        }
        let out = stdout(&socialrec(&args, dir.path()));
        out.split_whitespace()
            .find_map(|t| t.strip_prefix("rmse="))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(rmse(true) <= rmse(false));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    planted_dir(dir.path());
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"dim": 6, "max_epochs": 1, "gamma": 0.3}"#,
    )
    .unwrap();
    let o = socialrec(
        &[
            "train", "--data", "data", "--out", "run", "--config", "cfg.json", "--gamma", "0.5",
            "-q",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["config"]["model"]["dim"], 6);
    assert_eq!(manifest["config"]["model"]["gamma"], 0.5);
    assert_eq!(manifest["config"]["train"]["max_epochs"], 1);
    assert_eq!(
        manifest["dataset"]["fingerprint"].as_str().unwrap().len(),
        64
    );
}

#[test]
fn gridsearch_respects_budget() {
    let dir = tempfile::tempdir().unwrap();
    planted_dir(dir.path());
    let o = socialrec(
        &[
            "gridsearch",
            "--data",
            "data",
            "--out",
            "grid",
            "--budget",
            "10",
            "--max-epochs",
            "1",
            "--dims",
            "2,4",
            "--workers",
            "2",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(dir.path().join("grid/grid_results.tsv")).unwrap();
    assert!(rows.lines().count() - 1 <= 10);
    assert!(dir.path().join("grid/manifest.json").exists());
}

#[test]
fn ablate_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    planted_dir(dir.path());
    let o = socialrec(
        &[
            "ablate",
            "--data",
            "data",
            "--out",
            "abl",
            "--max-epochs",
            "1",
            "--d",
            "4",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(dir.path().join("abl/ablation.tsv")).unwrap();
    assert_eq!(rows.lines().count(), 5);
}

#[test]
fn sensitivity_file_per_axis() {
    let dir = tempfile::tempdir().unwrap();
    planted_dir(dir.path());
    let o = socialrec(
        &[
            "sensitivity",
            "--data",
            "data",
            "--out",
            "sens",
            "--axis",
            "gamma",
            "--values",
            "0.2,0.6",
            "--max-epochs",
            "1",
            "--d",
            "4",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = fs::read_to_string(dir.path().join("sens/sensitivity_gamma.tsv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
}

#[test]
fn gradcheck_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = socialrec(&["gradcheck"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = socialrec(&["gradcheck", "--d", "3", "--nodes", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let table = stdout(&o);
    assert!(table.contains("d=3 nodes=5"));
    for group in ["node_emb", "rel_emb", "w_query", "w_layer[1]", "w_att"] {
        assert!(table.contains(group), "{group}");
    }
    let o = socialrec(&["gradcheck", "--corrupt"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("w_layer[1]"));
}

#[test]
fn overfit_fixture_without_validation_needs_train_monitor() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(
        &random_fixture(8, 5, 16, 8, 0).unwrap(),
        &dir.path().join("data"),
    )
    .unwrap();
    let o = socialrec(
        &[
            "train",
            "--data",
            "data",
            "--out",
            "run",
            "--max-epochs",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = socialrec(
        &[
            "train",
            "--data",
            "data",
            "--out",
            "run",
            "--max-epochs",
            "1",
            "--monitor",
            "train",
            "-q",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("test: no ratings"));
}
