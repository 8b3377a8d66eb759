//! Patch-transformer time-series classifier whose tokens carry both the raw
//! patch samples and GeM-pooled wavelet packet energies.
//!
//! The crate is `no_std` (with `alloc`) and holds everything numeric: a small
//! reverse-mode autodiff engine, Daubechies wavelet packets, the tokenizer,
//! the encoder classifier, AdamW and the training loop. File formats, dataset
//! ingestion and the command line live in the `hiwave` crate.

#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod model;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod tokenizer;
pub mod trainer;
pub mod wavelet;

pub use autodiff::{Graph, Var};
pub use dataset::{batch_indices, standardize, synthetic_har, ChannelStats, SplitKind, WindowSet};
pub use error::{Error, Result, TensorError};
pub use model::{expected_parameter_count, HiWaveModel, ModelConfig};
pub use optim::{AdamW, AdamWConfig};
pub use params::{ParamKind, ParamStore};
pub use tensor::Tensor;
pub use tokenizer::{Pooling, Tokenizer, TokenizerConfig, Variant};
pub use trainer::{evaluate, train_one, AccuracySelection, EpochStats, Evaluation, RunMetrics, TrainConfig, Trainer};
pub use wavelet::{make_filters, wpd, wpd_batch, PacketTree, WaveletFilterPair, WaveletKind};
