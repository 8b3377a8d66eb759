use std::fs;
use std::path::Path;

use hiwave::data::*;
use hiwave::HiwaveError;
use hiwave_core::SplitKind;
use proptest::prelude::*;

fn tree(n_train: usize, n_test: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_tree(dir.path(), n_train, n_test, 3).unwrap();
    dir
}

fn two_row_split(a: f64, b: f64) -> DatasetSplit {
    let window = |v: f64, label, subject| HarWindow {
        signal: (0..9 * WINDOW_LEN).map(|i| v * (i as f64 - 500.0)).collect(),
        label,
        subject,
    };
    DatasetSplit {
        kind: SplitKind::Test,
        windows: vec![window(a, 0, 1), window(b, 5, 30)],
    }
}

#[test]
fn two_row_fixture_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let split = two_row_split(1.234_567_890_123_456_7e-3, -9.87e5);
    write_split(dir.path(), &split).unwrap();
    let back = load_split(dir.path(), SplitKind::Test).unwrap();
    assert_eq!(back, split);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn arbitrary_finite_values_round_trip(a in -1e6..1e6f64, b in -1e-6..1e-6f64) {
        let dir = tempfile::tempdir().unwrap();
        let split = two_row_split(a, b);
        write_split(dir.path(), &split).unwrap();
        prop_assert_eq!(load_split(dir.path(), SplitKind::Test).unwrap(), split);
    }
}

#[test]
fn channels_are_stacked_in_documented_order() {
    let dir = tree(4, 2);
    let (train, _) = load_ucihar(dir.path()).unwrap();
    let gyro_y = fs::read_to_string(channel_path(dir.path(), SplitKind::Train, "body_gyro_y")).unwrap();
    let first: Vec<f64> = gyro_y
        .lines()
        .next()
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    assert_eq!(CHANNELS[4], "body_gyro_y");
    assert_eq!(&train.windows[0].signal[4 * WINDOW_LEN..5 * WINDOW_LEN], &first[..]);
}

#[test]
fn reload_is_idempotent_and_order_stable() {
    let dir = tree(30, 12);
    assert_eq!(load_ucihar(dir.path()).unwrap(), load_ucihar(dir.path()).unwrap());
}

#[test]
fn nested_dataset_directory_is_found() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_tree(&dir.path().join("UCI HAR Dataset"), 12, 6, 0).unwrap();
    assert_eq!(verify(dir.path()).unwrap().to_string(), "OK, train=12, test=6");
}

#[test]
fn missing_gyro_file_is_named() {
    let dir = tree(12, 6);
    let gone = channel_path(dir.path(), SplitKind::Test, "body_gyro_z");
    fs::remove_file(&gone).unwrap();
    match load_ucihar(dir.path()) {
        Err(HiwaveError::MissingFile(p)) => assert_eq!(p, gone),
        other => panic!("{other:?}"),
    }
}

#[test]
fn truncated_row_reports_its_index() {
    let dir = tree(12, 6);
    let path = channel_path(dir.path(), SplitKind::Train, "total_acc_x");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let cut: Vec<&str> = lines[2].split_whitespace().take(100).collect();
    lines[2] = cut.join(" ");
    fs::write(&path, lines.join("\n")).unwrap();
    let err = load_ucihar(dir.path()).unwrap_err();
    match &err {
        HiwaveError::Corrupt { file, row, .. } => {
            assert_eq!(file, &path);
            assert_eq!(*row, 3);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("row 3"));
}

#[test]
fn row_count_mismatch_is_corruption() {
    let dir = tree(12, 6);
    let path = channel_path(dir.path(), SplitKind::Train, "body_acc_y");
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(11).collect();
    fs::write(&path, kept.join("\n")).unwrap();
    assert!(matches!(load_ucihar(dir.path()), Err(HiwaveError::Corrupt { .. })));
}

#[test]
fn labels_are_zero_based_and_range_checked() {
    let dir = tree(12, 6);
    let (train, _) = load_ucihar(dir.path()).unwrap();
    assert!(train
        .windows
        .iter()
        .all(|w| w.label < NUM_CLASSES && (1..=30).contains(&w.subject)));
    fs::write(dir.path().join("train/y_train.txt"), "7\n".repeat(12)).unwrap();
    assert!(matches!(
        load_ucihar(dir.path()),
        Err(HiwaveError::Corrupt { row: 1, .. })
    ));
}

#[test]
fn missing_class_fails_verification() {
    let dir = tree(12, 6);
    fs::write(dir.path().join("test/y_test.txt"), "1\n2\n3\n4\n5\n5\n").unwrap();
    assert!(matches!(verify(dir.path()), Err(HiwaveError::Data(_))));
}

#[test]
fn binary_cache_round_trips() {
    let dir = tree(20, 8);
    let cache = dir.path().join("har.bin");
    let fresh = load_cached(dir.path(), Some(&cache)).unwrap();
    assert!(cache.is_file());
    let bytes = fs::read(&cache).unwrap();
    assert_eq!(&bytes[..8], b"HIWAVE01");
    assert_eq!(bytes.len(), 40 + 28 * (16 + 8 * 9 * 128));
    assert_eq!(read_cache(&cache).unwrap(), fresh);
    assert_eq!(load_cached(Path::new("/nonexistent"), Some(&cache)).unwrap(), fresh);
}

#[test]
fn corrupt_cache_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.bin");
    fs::write(&p, b"HIWAVE01 too short").unwrap();
    assert!(matches!(read_cache(&p), Err(HiwaveError::Corrupt { .. })));
}

#[test]
fn archive_checksum_is_verified() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.zip");
    fs::write(&p, b"abc").unwrap();
    let abc = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
    assert_eq!(sha256_file(&p).unwrap(), abc);
    verify_archive(&p, &abc.to_uppercase()).unwrap();
    assert!(matches!(verify_archive(&p, &"0".repeat(64)), Err(HiwaveError::Data(_))));
}

#[test]
fn standardization_uses_train_statistics_only() {
    let dir = tree(60, 30);
    let (train, test) = load_ucihar(dir.path()).unwrap();
    let p = prepare(&train, &test, true).unwrap();
    let stats = p.stats.unwrap();
    assert_eq!(stats.source, SplitKind::Train);
    let direct = hiwave_core::ChannelStats::from_train(&train.to_window_set());
    assert_eq!(stats, direct);
    assert!(prepare(&test, &train, true).is_err());
    let raw = prepare(&train, &test, false).unwrap();
    assert!(raw.stats.is_none());
    assert_eq!(raw.test.signals(), test.to_window_set().signals());
}
