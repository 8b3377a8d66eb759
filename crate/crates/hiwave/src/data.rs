//! UCI-HAR raw inertial signals: loading, validation, caching and fixtures.
//!
//! Expected layout under the dataset root (the directory that contains
//! `train/` and `test/`, or its parent holding `UCI HAR Dataset/`):
//!
//! ```text
//! {split}/Inertial Signals/{channel}_{split}.txt   128 floats per row
//! {split}/y_{split}.txt                            labels 1..=6
//! {split}/subject_{split}.txt                      subject ids 1..=30
//! ```

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use hiwave_core::{standardize, synthetic_har, ChannelStats, SplitKind, WindowSet};
use sha2::{Digest, Sha256};

use crate::error::{HiwaveError, Result};

/// Channel files in model input order.
pub const CHANNELS: [&str; 9] = [
    "body_acc_x",
    "body_acc_y",
    "body_acc_z",
    "body_gyro_x",
    "body_gyro_y",
    "body_gyro_z",
    "total_acc_x",
    "total_acc_y",
    "total_acc_z",
];
pub const WINDOW_LEN: usize = 128;
pub const NUM_CLASSES: usize = 6;

pub const ACTIVITIES: [&str; NUM_CLASSES] = [
    "walking",
    "walking_upstairs",
    "walking_downstairs",
    "sitting",
    "standing",
    "laying",
];

#[derive(Debug, Clone, PartialEq)]
pub struct HarWindow {
    /// `[9, 128]`, row-major in [`CHANNELS`] order.
    pub signal: Vec<f64>,
    /// Zero-based class.
    pub label: usize,
    pub subject: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub kind: SplitKind,
    pub windows: Vec<HarWindow>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for w in &self.windows {
            counts[w.label] += 1;
        }
        counts
    }

    pub fn to_window_set(&self) -> WindowSet {
        let mut signals = Vec::with_capacity(self.len() * CHANNELS.len() * WINDOW_LEN);
        for w in &self.windows {
            signals.extend_from_slice(&w.signal);
        }
        let labels = self.windows.iter().map(|w| w.label).collect();
        WindowSet::new(CHANNELS.len(), WINDOW_LEN, signals, labels).expect("windows validated on load")
    }
}

fn split_name(kind: SplitKind) -> &'static str {
    match kind {
        SplitKind::Train => "train",
        SplitKind::Test => "test",
    }
}

/// Resolves `root` to the directory holding `train/` and `test/`.
pub fn resolve_root(root: &Path) -> PathBuf {
    let nested = root.join("UCI HAR Dataset");
    if !root.join("train").is_dir() && nested.join("train").is_dir() {
        nested
    } else {
        root.to_path_buf()
    }
}

pub fn channel_path(root: &Path, kind: SplitKind, channel: &str) -> PathBuf {
    let s = split_name(kind);
    root.join(s).join("Inertial Signals").join(format!("{channel}_{s}.txt"))
}

fn read_text(path: &Path) -> Result<String> {
    if !path.is_file() {
        return Err(HiwaveError::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| HiwaveError::io(path, e))
}

fn parse_rows(path: &Path, width: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |reason: String| HiwaveError::Corrupt {
            file: path.to_path_buf(),
            row: i + 1,
            reason,
        };
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| corrupt(format!("`{tok}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(w) = width {
            if row.len() != w {
                return Err(corrupt(format!("expected {w} values, found {}", row.len())));
            }
        }
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(corrupt(format!("non-finite value {bad}")));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_ints(path: &Path, lo: u32, hi: u32) -> Result<Vec<u32>> {
    parse_rows(path, Some(1))?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let v = r[0];
            if v.fract() != 0.0 || v < lo as f64 || v > hi as f64 {
                Err(HiwaveError::Corrupt {
                    file: path.to_path_buf(),
                    row: i + 1,
                    reason: format!("{v} is not an integer in {lo}..={hi}"),
                })
            } else {
                Ok(v as u32)
            }
        })
        .collect()
}

/// Loads one split from a UCI-HAR tree.
pub fn load_split(root: &Path, kind: SplitKind) -> Result<DatasetSplit> {
    let root = resolve_root(root);
    let s = split_name(kind);
    let label_path = root.join(s).join(format!("y_{s}.txt"));
    let subject_path = root.join(s).join(format!("subject_{s}.txt"));
    let labels = parse_ints(&label_path, 1, NUM_CLASSES as u32)?;
    let subjects = parse_ints(&subject_path, 1, 30)?;
    let mut channels = Vec::with_capacity(CHANNELS.len());
    for name in CHANNELS {
        let path = channel_path(&root, kind, name);
        let rows = parse_rows(&path, Some(WINDOW_LEN))?;
        if rows.len() != labels.len() {
            return Err(HiwaveError::Corrupt {
                row: rows.len().min(labels.len()) + 1,
                reason: format!("{} rows, but {} has {}", rows.len(), label_path.display(), labels.len()),
                file: path,
            });
        }
        channels.push(rows);
    }
    if subjects.len() != labels.len() {
        return Err(HiwaveError::Corrupt {
            file: subject_path,
            row: subjects.len().min(labels.len()) + 1,
            reason: format!("{} subjects for {} labels", subjects.len(), labels.len()),
        });
    }
    let windows = (0..labels.len())
        .map(|i| {
            let mut signal = Vec::with_capacity(CHANNELS.len() * WINDOW_LEN);
            for ch in &channels {
                signal.extend_from_slice(&ch[i]);
            }
            HarWindow {
                signal,
                label: labels[i] as usize - 1,
                subject: subjects[i],
            }
        })
        .collect();
    Ok(DatasetSplit { kind, windows })
}

/// Loads both splits from a UCI-HAR tree.
pub fn load_ucihar(root: &Path) -> Result<(DatasetSplit, DatasetSplit)> {
    Ok((load_split(root, SplitKind::Train)?, load_split(root, SplitKind::Test)?))
}

/// What `verify-data` reports for a valid tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DataReport {
    pub train: usize,
    pub test: usize,
    pub train_classes: [usize; NUM_CLASSES],
    pub test_classes: [usize; NUM_CLASSES],
}

impl std::fmt::Display for DataReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "OK, train={}, test={}", self.train, self.test)
    }
}

/// Full load plus label coverage: every class present in both splits.
pub fn verify(root: &Path) -> Result<DataReport> {
    let (train, test) = load_ucihar(root)?;
    let report = DataReport {
        train: train.len(),
        test: test.len(),
        train_classes: train.class_counts(),
        test_classes: test.class_counts(),
    };
    for (split, counts) in [("train", report.train_classes), ("test", report.test_classes)] {
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(HiwaveError::Data(format!(
                "{split} split has no windows of class {}",
                ACTIVITIES[c]
            )));
        }
    }
    Ok(report)
}

/// Writes `split` in the UCI text layout. Values use the shortest
/// round-trip representation, so a reload reproduces them exactly.
pub fn write_split(root: &Path, split: &DatasetSplit) -> Result<()> {
    let s = split_name(split.kind);
    let dir = root.join(s).join("Inertial Signals");
    fs::create_dir_all(&dir).map_err(|e| HiwaveError::io(&dir, e))?;
    let write = |path: PathBuf, body: String| fs::write(&path, body).map_err(|e| HiwaveError::io(&path, e));
    for (ch, name) in CHANNELS.iter().enumerate() {
        let mut body = String::new();
        for w in &split.windows {
            let row = &w.signal[ch * WINDOW_LEN..(ch + 1) * WINDOW_LEN];
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            body.push(' ');
            body.push_str(&cells.join(" "));
            body.push('\n');
        }
        write(channel_path(root, split.kind, name), body)?;
    }
    let labels: String = split.windows.iter().map(|w| format!("{}\n", w.label + 1)).collect();
    write(root.join(s).join(format!("y_{s}.txt")), labels)?;
    let subjects: String = split.windows.iter().map(|w| format!("{}\n", w.subject)).collect();
    write(root.join(s).join(format!("subject_{s}.txt")), subjects)
}

/// HAR-shaped windows with class-dependent oscillations; a stand-in for the
/// real dataset in tests and smoke runs.
pub fn synthetic_split(kind: SplitKind, n: usize, seed: u64) -> DatasetSplit {
    let set = synthetic_har(n, NUM_CLASSES, seed);
    let windows = (0..n)
        .map(|i| HarWindow {
            signal: set.window(i).to_vec(),
            label: set.labels()[i],
            subject: (i % 30) as u32 + 1,
        })
        .collect();
    DatasetSplit { kind, windows }
}

/// Writes a synthetic UCI-layout tree with `n_train` and `n_test` windows.
pub fn write_synthetic_tree(root: &Path, n_train: usize, n_test: usize, seed: u64) -> Result<()> {
    write_split(root, &synthetic_split(SplitKind::Train, n_train, seed))?;
    write_split(root, &synthetic_split(SplitKind::Test, n_test, seed.wrapping_add(1)))
}

const CACHE_MAGIC: &[u8; 8] = b"HIWAVE01";

/// Flat binary cache of both splits.
///
/// Layout, all little-endian: the 8-byte magic `HIWAVE01`; `u64` counts
/// `n_train`, `n_test`, `channels`, `len`; then for every window, train
/// first, a `u64` label, a `u64` subject and `channels × len` `f64` samples
/// in row-major order.
pub fn write_cache(path: &Path, train: &DatasetSplit, test: &DatasetSplit) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CACHE_MAGIC);
    for n in [train.len(), test.len(), CHANNELS.len(), WINDOW_LEN] {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for w in train.windows.iter().chain(&test.windows) {
        buf.extend_from_slice(&(w.label as u64).to_le_bytes());
        buf.extend_from_slice(&(w.subject as u64).to_le_bytes());
        for v in &w.signal {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    crate::records::write_atomic(path, &buf)
}

pub fn read_cache(path: &Path) -> Result<(DatasetSplit, DatasetSplit)> {
    let bytes = fs::read(path).map_err(|e| HiwaveError::io(path, e))?;
    let corrupt = |reason: &str| HiwaveError::Corrupt {
        file: path.to_path_buf(),
        row: 0,
        reason: reason.into(),
    };
    if bytes.len() < 40 || &bytes[..8] != CACHE_MAGIC {
        return Err(corrupt("not a hiwave cache file"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().expect("8 bytes"));
    let (n_train, n_test, c, t) = (
        word(8) as usize,
        word(16) as usize,
        word(24) as usize,
        word(32) as usize,
    );
    if c != CHANNELS.len() || t != WINDOW_LEN {
        return Err(corrupt("unexpected window shape"));
    }
    let stride = 16 + 8 * c * t;
    if bytes.len() != 40 + (n_train + n_test) * stride {
        return Err(corrupt("length does not match header"));
    }
    let mut windows = Vec::with_capacity(n_train + n_test);
    for i in 0..n_train + n_test {
        let at = 40 + i * stride;
        let label = word(at) as usize;
        if label >= NUM_CLASSES {
            return Err(corrupt("label out of range"));
        }
        let signal = bytes[at + 16..at + stride]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        windows.push(HarWindow {
            signal,
            label,
            subject: word(at + 8) as u32,
        });
    }
    let test = windows.split_off(n_train);
    Ok((
        DatasetSplit {
            kind: SplitKind::Train,
            windows,
        },
        DatasetSplit {
            kind: SplitKind::Test,
            windows: test,
        },
    ))
}

/// Loads from `cache` when it exists, otherwise parses `root` and writes the cache.
pub fn load_cached(root: &Path, cache: Option<&Path>) -> Result<(DatasetSplit, DatasetSplit)> {
    match cache {
        Some(c) if c.is_file() => read_cache(c),
        Some(c) => {
            let (train, test) = load_ucihar(root)?;
            write_cache(c, &train, &test)?;
            Ok((train, test))
        }
        None => load_ucihar(root),
    }
}

/// Lowercase hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| HiwaveError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| HiwaveError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn verify_archive(path: &Path, expected: &str) -> Result<()> {
    let got = sha256_file(path)?;
    if got.eq_ignore_ascii_case(expected.trim()) {
        Ok(())
    } else {
        Err(HiwaveError::Data(format!(
            "{} has SHA-256 {got}, expected {expected}",
            path.display()
        )))
    }
}

/// Train and test windows ready for training.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: WindowSet,
    pub test: WindowSet,
    pub stats: Option<ChannelStats>,
}

/// Converts both splits and, when asked, z-scores them with train statistics.
pub fn prepare(train: &DatasetSplit, test: &DatasetSplit, standardize_inputs: bool) -> Result<Prepared> {
    if train.kind != SplitKind::Train || test.kind != SplitKind::Test {
        return Err(HiwaveError::Data("splits passed in the wrong order".into()));
    }
    let (tr, te) = (train.to_window_set(), test.to_window_set());
    if !standardize_inputs {
        return Ok(Prepared {
            train: tr,
            test: te,
            stats: None,
        });
    }
    let stats = ChannelStats::from_train(&tr);
    for &ch in &stats.guarded {
        log::warn!("channel {} has zero variance in train; using std 1", CHANNELS[ch]);
    }
    Ok(Prepared {
        train: standardize(&tr, &stats)?,
        test: standardize(&te, &stats)?,
        stats: Some(stats),
    })
}
