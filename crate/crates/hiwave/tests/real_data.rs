//! Checks against the distributed UCI-HAR dataset. Run with
//! `HIWAVE_DATA_ROOT=/path/to/UCI\ HAR\ Dataset cargo test -p hiwave --test real_data -- --ignored`.

use std::path::PathBuf;

use hiwave::data::{load_ucihar, verify, NUM_CLASSES};
use hiwave_core::batch_indices;

fn root() -> PathBuf {
    PathBuf::from(std::env::var_os("HIWAVE_DATA_ROOT").expect("set HIWAVE_DATA_ROOT to the UCI-HAR directory"))
}

#[test]
#[ignore = "needs the UCI-HAR dataset under HIWAVE_DATA_ROOT"]
fn split_sizes_match_the_distribution() {
    let report = verify(&root()).unwrap();
    assert_eq!(report.to_string(), "OK, train=7352, test=2947");
}

#[test]
#[ignore = "needs the UCI-HAR dataset under HIWAVE_DATA_ROOT"]
fn every_class_and_subject_range_is_present() {
    let (train, test) = load_ucihar(&root()).unwrap();
    for split in [&train, &test] {
        assert!(split.class_counts().iter().all(|&n| n > 0));
        assert!(split
            .windows
            .iter()
            .all(|w| w.label < NUM_CLASSES && (1..=30).contains(&w.subject)));
    }
    let mut subjects: Vec<u32> = train.windows.iter().chain(&test.windows).map(|w| w.subject).collect();
    subjects.sort_unstable();
    subjects.dedup();
    assert_eq!(subjects, (1..=30).collect::<Vec<_>>());
}

#[test]
#[ignore = "needs the UCI-HAR dataset under HIWAVE_DATA_ROOT"]
fn an_epoch_is_115_batches() {
    let (train, _) = load_ucihar(&root()).unwrap();
    assert_eq!(batch_indices(train.len(), 64, None).len(), 115);
}
