//! In-memory labelled windows, per-channel standardization and batching.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Test,
}

/// `n` windows of `channels × len` samples, row-major, with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    channels: usize,
    len: usize,
    signals: Vec<f64>,
    labels: Vec<usize>,
}

impl WindowSet {
    pub fn new(channels: usize, len: usize, signals: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if channels == 0 || len == 0 || signals.len() != labels.len() * channels * len {
            return Err(Error::Dimension(format!(
                "{} samples do not form {} windows of {channels}×{len}",
                signals.len(),
                labels.len()
            )));
        }
        Ok(Self {
            channels,
            len,
            signals,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn window_len(&self) -> usize {
        self.len
    }

    pub fn window(&self, i: usize) -> &[f64] {
        let w = self.channels * self.len;
        &self.signals[i * w..(i + 1) * w]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn signals(&self) -> &[f64] {
        &self.signals
    }

    /// Windows `idx` stacked as `[B, C, T]`, with their labels.
    pub fn gather(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(idx.len() * self.channels * self.len);
        for &i in idx {
            data.extend_from_slice(self.window(i));
        }
        let t = Tensor::new(vec![idx.len(), self.channels, self.len], data).expect("sized above");
        (t, idx.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let (t, labels) = self.gather(idx);
        Self {
            channels: self.channels,
            len: self.len,
            signals: t.into_data(),
            labels,
        }
    }

    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0; classes];
        for &l in &self.labels {
            if l < classes {
                counts[l] += 1;
            }
        }
        counts
    }
}

/// Per-channel mean and standard deviation, tagged with the split they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub source: SplitKind,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels whose standard deviation was zero and was replaced by 1.
    pub guarded: Vec<usize>,
}

impl ChannelStats {
    /// Population statistics of `set`, which must be the training split.
    pub fn from_train(set: &WindowSet) -> Self {
        Self::compute(set, SplitKind::Train)
    }

    pub fn compute(set: &WindowSet, source: SplitKind) -> Self {
        let (c, t) = (set.channels, set.len);
        let count = (set.len() * t) as f64;
        let mut mean = vec![0.0; c];
        for w in set.signals.chunks_exact(c * t) {
            for (ch, row) in w.chunks_exact(t).enumerate() {
                mean[ch] += row.iter().sum::<f64>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![0.0; c];
        for w in set.signals.chunks_exact(c * t) {
            for (ch, row) in w.chunks_exact(t).enumerate() {
                var[ch] += row.iter().map(|v| (v - mean[ch]) * (v - mean[ch])).sum::<f64>();
            }
        }
        let mut guarded = Vec::new();
        let std = var
            .iter()
            .enumerate()
            .map(|(ch, v)| {
                let s = libm::sqrt(v / count);
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    guarded.push(ch);
                    1.0
                }
            })
            .collect();
        Self {
            source,
            mean,
            std,
            guarded,
        }
    }
}

/// Z-scores every channel with `stats`, which must come from the training split.
pub fn standardize(set: &WindowSet, stats: &ChannelStats) -> Result<WindowSet> {
    if stats.source != SplitKind::Train {
        return Err(Error::Config(
            "normalization statistics must come from the training split".into(),
        ));
    }
    if stats.mean.len() != set.channels {
        return Err(Error::Dimension(format!(
            "statistics for {} channels applied to {} channels",
            stats.mean.len(),
            set.channels
        )));
    }
    let t = set.len;
    let mut out = set.clone();
    for w in out.signals.chunks_exact_mut(set.channels * t) {
        for (ch, row) in w.chunks_exact_mut(t).enumerate() {
            let (m, s) = (stats.mean[ch], stats.std[ch]);
            row.iter_mut().for_each(|v| *v = (*v - m) / s);
        }
    }
    Ok(out)
}

/// Index batches over `n` items; shuffled when `rng` is given, in order
/// otherwise. The last batch may be short.
pub fn batch_indices(n: usize, batch_size: usize, rng: Option<&mut ModelRng>) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if let Some(rng) = rng {
        order.shuffle(rng);
    }
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Labelled HAR-shaped windows with a class-dependent oscillation per
/// channel group plus Gaussian noise. Classes are balanced and separable.
pub fn synthetic_har(n: usize, classes: usize, seed: u64) -> WindowSet {
    use rand_distr::{Distribution, Normal};
    let (c, t) = (9, 128);
    let mut rng = crate::model::seeded(seed, 0x5eed);
    let noise = Normal::new(0.0, 0.3).expect("valid");
    let mut signals = Vec::with_capacity(n * c * t);
    let labels: Vec<usize> = (0..n).map(|i| i % classes.max(1)).collect();
    for &label in &labels {
        let phase = rng.random_range(0.0..core::f64::consts::TAU);
        let freq = 1.0 + 1.5 * label as f64;
        for ch in 0..c {
            let amp = 0.5 + 0.25 * ((ch + label) % 3) as f64;
            let offset = if ch >= 6 { 1.0 - 0.1 * label as f64 } else { 0.0 };
            for k in 0..t {
                let arg = core::f64::consts::TAU * freq * k as f64 / t as f64 + phase + ch as f64;
                signals.push(offset + amp * libm::sin(arg) + noise.sample(&mut rng));
            }
        }
    }
    WindowSet::new(c, t, signals, labels).expect("sized above")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::seeded;

    fn random_set(n: usize, seed: u64) -> WindowSet {
        let mut rng = seeded(seed, 0);
        let signals = (0..n * 3 * 8)
            .map(|i| rng.random_range(-1.0..1.0) * (1 + i % 3) as f64 + 9.81 * ((i / 8) % 3 == 2) as u8 as f64)
            .collect();
        WindowSet::new(3, 8, signals, (0..n).map(|i| i % 6).collect()).unwrap()
    }

    #[test]
    fn standardized_train_has_zero_mean_unit_std() {
        let set = random_set(50, 1);
        let stats = ChannelStats::from_train(&set);
        let z = standardize(&set, &stats).unwrap();
        let after = ChannelStats::compute(&z, SplitKind::Train);
        for ch in 0..3 {
            assert!(after.mean[ch].abs() < 1e-9);
            assert!((after.std[ch] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn test_statistics_are_refused() {
        let set = random_set(5, 2);
        let stats = ChannelStats::compute(&set, SplitKind::Test);
        assert!(matches!(standardize(&set, &stats), Err(Error::Config(_))));
    }

    #[test]
    fn zero_variance_channel_is_guarded() {
        let mut signals = vec![0.0; 4 * 2 * 5];
        for (i, v) in signals.iter_mut().enumerate() {
            if (i / 5) % 2 == 1 {
                *v = i as f64;
            } else {
                *v = 7.0;
            }
        }
        let set = WindowSet::new(2, 5, signals, vec![0; 4]).unwrap();
        let stats = ChannelStats::from_train(&set);
        assert_eq!(stats.guarded, vec![0]);
        assert_eq!(stats.std[0], 1.0);
        let z = standardize(&set, &stats).unwrap();
        assert!(z.window(0)[..5].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn batch_count_and_partial_last_batch() {
        let b = batch_indices(7352, 64, None);
        assert_eq!(b.len(), 115);
        assert_eq!(b.last().unwrap().len(), 7352 - 114 * 64);
        assert_eq!(b[0], (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn shuffling_is_seed_deterministic() {
        let a = batch_indices(100, 64, Some(&mut seeded(4, 1)));
        let b = batch_indices(100, 64, Some(&mut seeded(4, 1)));
        let c = batch_indices(100, 64, Some(&mut seeded(5, 1)));
        assert_eq!(a, b);
        assert_ne!(a, c);
        let mut all: Vec<usize> = a.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn gather_stacks_windows() {
        let set = random_set(4, 3);
        let (t, labels) = set.gather(&[2, 0]);
        assert_eq!(t.shape(), &[2, 3, 8]);
        assert_eq!(&t.data()[..24], set.window(2));
        assert_eq!(labels, vec![2, 0]);
        assert!(WindowSet::new(3, 8, vec![0.0; 10], vec![0]).is_err());
    }
}
