use std::path::Path;
use std::process::{Command, Output};

use hiwave::checkpoint::Checkpoint;
use hiwave::data::{write_synthetic_tree, NUM_CLASSES};
use hiwave::records::{read_jsonl, ExperimentSummary, PValues};

fn hiwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hiwave"))
        .args(args)
        .env_remove("HIWAVE_DATA_ROOT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("har");
    write_synthetic_tree(&root, 128, 60, 5).unwrap();
    (dir, root.to_str().unwrap().to_string())
}

#[test]
fn verify_data_reports_counts() {
    let (_d, root) = setup();
    let o = hiwave(&["verify-data", "--data-root", &root]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "OK, train=128, test=60");
}

#[test]
fn verify_data_names_missing_file() {
    let (_d, root) = setup();
    let gone = Path::new(&root).join("train/Inertial Signals/body_gyro_x_train.txt");
    std::fs::remove_file(&gone).unwrap();
    let o = hiwave(&["verify-data", "--data-root", &root]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("body_gyro_x_train.txt"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(hiwave(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(hiwave(&["train", "--epochs", "2"]).status.code(), Some(1));
    assert_eq!(hiwave(&["--help"]).status.code(), Some(0));
}

#[test]
fn train_then_eval_reproduces_accuracy() {
    let (dir, root) = setup();
    let out = dir.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = hiwave(&[
        "train",
        "--data-root",
        &root,
        "--seeds",
        "3",
        "--epochs",
        "1",
        "--variant",
        "baseline",
        "--out",
        out_s,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("baseline seed 3 epoch 1/1 loss"));
    assert!(text.contains("params 159814"));

    let records = read_jsonl(&out.join("runs.jsonl")).unwrap();
    assert_eq!(records.len(), 1);
    let r = &records[0];
    assert!((0.0..=1.0).contains(&r.metrics.test_accuracy));
    assert!(r.metrics.learned_p.is_empty());
    assert!(!out.join("pvalues").exists());

    let ckpt = out.join("checkpoints/baseline-seed3.json");
    let confusion = dir.path().join("confusion.csv");
    let o = hiwave(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data-root",
        &root,
        "--confusion",
        confusion.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let first = stdout(&o).lines().next().unwrap().to_string();
    assert_eq!(first, format!("accuracy {:.6} (60 windows)", r.metrics.test_accuracy));

    let csv = std::fs::read_to_string(&confusion).unwrap();
    let rows: Vec<Vec<String>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    assert_eq!(rows.len(), NUM_CLASSES);
    for row in rows {
        assert_eq!(row.len(), NUM_CLASSES + 1);
        let sum: usize = row[1..].iter().map(|c| c.parse::<usize>().unwrap()).sum();
        assert_eq!(sum, 10);
    }

    let again = hiwave(&[
        "train",
        "--data-root",
        &root,
        "--seeds",
        "3",
        "--epochs",
        "1",
        "--out",
        out_s,
    ]);
    assert_eq!(again.status.code(), Some(1));
    let forced = hiwave(&[
        "train",
        "--data-root",
        &root,
        "--seeds",
        "3",
        "--epochs",
        "1",
        "--out",
        out_s,
        "--force",
    ]);
    assert_eq!(forced.status.code(), Some(0));
}

#[test]
fn saved_checkpoint_restores_identical_logits() {
    let (dir, root) = setup();
    let out = dir.path().join("out");
    let o = hiwave(&[
        "train",
        "--data-root",
        &root,
        "--seeds",
        "1",
        "--epochs",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let ckpt = Checkpoint::load(&out.join("checkpoints/hybrid-L3-db2-gem-seed1.json")).unwrap();
    let model = ckpt.restore().unwrap();
    assert_eq!(model.count_parameters(), 164_430);
    let again = Checkpoint::capture(
        &model,
        &ckpt.variant,
        ckpt.seed,
        ckpt.eval_batch_size,
        ckpt.normalization.clone(),
    );
    assert_eq!(again, ckpt);
    let p: PValues =
        serde_json::from_str(&std::fs::read_to_string(out.join("pvalues/hybrid-L3-db2-gem-seed1.json")).unwrap())
            .unwrap();
    assert_eq!(p.p.len(), 8);
    assert_eq!(p.p, model.learned_exponents());
}

#[test]
fn untrained_model_is_near_chance() {
    let (dir, root) = setup();
    let (train, test) = hiwave::data::load_ucihar(Path::new(&root)).unwrap();
    let prepared = hiwave::data::prepare(&train, &test, true).unwrap();
    let mut accs = Vec::new();
    for seed in 0..8 {
        let model = hiwave_core::HiWaveModel::build(Default::default(), Default::default(), seed).unwrap();
        accs.push(hiwave_core::evaluate(&model, &prepared.test, 64).unwrap().accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 1.0 / 6.0).abs() <= 0.05 + 0.1, "{accs:?}");
    drop(dir);
}

#[test]
fn ablate_and_report_write_seven_rows() {
    let (dir, root) = setup();
    let out = dir.path().join("abl");
    let o = hiwave(&[
        "ablate",
        "--data-root",
        &root,
        "--seeds",
        "0,1",
        "--epochs",
        "1",
        "--jobs",
        "2",
        "--batch-size",
        "128",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let records = read_jsonl(&out.join("runs.jsonl")).unwrap();
    assert_eq!(records.len(), 14);
    let summary = ExperimentSummary::from_records(&records);
    assert_eq!(summary.variants.len(), 7);
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "variant,mean_acc,std_acc,n_seeds,param_count"
    );
    assert_eq!(csv.lines().count(), 8);
    let report = std::fs::read_to_string(out.join("report.md")).unwrap();
    assert_eq!(
        report
            .lines()
            .filter(|l| l.starts_with("| ") && l.contains(" ± ") && !l.contains("mean ± std"))
            .count(),
        7
    );
    let pfiles = std::fs::read_dir(out.join("pvalues")).unwrap().count();
    assert_eq!(pfiles, 5 * 2);
    let o = hiwave(&["report", "--dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("| hybrid-L3-db2-gem | 164430 |"));
}
