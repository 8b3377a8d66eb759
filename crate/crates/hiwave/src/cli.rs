//! Command-line verbs. Flags override the config file, which overrides the
//! built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hiwave_core::{evaluate, standardize, AccuracySelection, ChannelStats};

use crate::checkpoint::Checkpoint;
use crate::config::{variant_tokenizer, ExperimentConfig, VARIANTS};
use crate::data::{self, ACTIVITIES, NUM_CLASSES};
use crate::error::{HiwaveError, Result};
use crate::experiment::{load_data, run_experiment, write_summary, RunOptions};
use crate::records::{read_jsonl, write_atomic, ExperimentSummary};

#[derive(Debug, Parser)]
#[command(name = "hiwave", version, about = "Wavelet-augmented patch transformer for UCI-HAR")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a UCI-HAR tree is complete and well formed.
    VerifyData {
        #[arg(long, env = "HIWAVE_DATA_ROOT")]
        data_root: PathBuf,
        /// Downloaded archive to check against --sha256.
        #[arg(long, requires = "sha256")]
        archive: Option<PathBuf>,
        #[arg(long)]
        sha256: Option<String>,
    },
    /// Train one configuration over its seeds.
    Train {
        #[command(flatten)]
        common: Common,
        /// One of the named ablation variants.
        #[arg(long)]
        variant: Option<String>,
    },
    /// Train every ablation variant over its seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of variants; all seven by default.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<String>,
    },
    /// Test accuracy and confusion matrix of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, env = "HIWAVE_DATA_ROOT")]
        data_root: PathBuf,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Where to write the confusion matrix CSV; defaults beside the checkpoint.
        #[arg(long)]
        confusion: Option<PathBuf>,
    },
    /// Rebuild summary and report from an output directory's runs.jsonl.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data_root: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Train on raw, unscaled inputs.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub gem_init: Option<f64>,
    /// Global gradient-norm clipping bound.
    #[arg(long)]
    pub clip: Option<f64>,
    /// Report the best per-epoch test accuracy instead of the final one.
    #[arg(long)]
    pub best_epoch: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Overwrite results already in the output directory.
    #[arg(long)]
    pub force: bool,
}

impl Common {
    /// Config file (or defaults) with flags applied.
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(r) = &self.data_root {
            cfg.data.root = Some(r.clone());
        }
        if let Some(c) = &self.cache {
            cfg.data.cache = Some(c.clone());
        }
        if self.no_standardize {
            cfg.data.standardize = false;
        }
        if !self.seeds.is_empty() {
            cfg.train.seeds = self.seeds.clone();
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.weight_decay {
            cfg.train.weight_decay = v;
        }
        if let Some(v) = self.dropout {
            cfg.model.dropout = v;
        }
        if let Some(v) = self.gem_init {
            cfg.tokenizer.gem_init = v;
        }
        if self.clip.is_some() {
            cfg.train.clip = self.clip;
        }
        if self.best_epoch {
            cfg.train.selection = AccuracySelection::Best;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            jobs: self.jobs,
            force: self.force,
            progress: true,
        }
    }
}

/// Runs a parsed command and returns its exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::VerifyData {
            data_root,
            archive,
            sha256,
        } => {
            if let (Some(a), Some(s)) = (&archive, &sha256) {
                data::verify_archive(a, s)?;
                println!("archive checksum OK");
            }
            let report = data::verify(&data_root)?;
            println!("{report}");
            Ok(())
        }
        Command::Train { common, variant } => {
            let mut cfg = common.resolve()?;
            if let Some(v) = &variant {
                cfg.tokenizer = variant_tokenizer(v, &cfg.tokenizer)?;
            }
            let label = cfg.variant_label().to_string();
            let data = load_data(&cfg)?;
            let (_, summary) = run_experiment(&cfg, &[label], &data, &common.options())?;
            for v in &summary.variants {
                println!(
                    "{}: {:.4} ± {:.4} over {} seeds, params {}",
                    v.variant, v.mean_acc, v.std_acc, v.n_seeds, v.param_count
                );
            }
            Ok(())
        }
        Command::Ablate { common, variants } => {
            let cfg = common.resolve()?;
            let variants: Vec<String> = if variants.is_empty() {
                VARIANTS.iter().map(|v| v.to_string()).collect()
            } else {
                variants
            };
            let data = load_data(&cfg)?;
            let (_, summary) = run_experiment(&cfg, &variants, &data, &common.options())?;
            print!("{}", summary.to_markdown());
            Ok(())
        }
        Command::Eval {
            checkpoint,
            data_root,
            cache,
            confusion,
        } => eval(&checkpoint, &data_root, cache.as_deref(), confusion),
        Command::Report { dir } => {
            let records = read_jsonl(&dir.join("runs.jsonl"))?;
            let summary = ExperimentSummary::from_records(&records);
            write_summary(&dir, &summary)?;
            print!("{}", summary.to_markdown());
            Ok(())
        }
    }
}

fn eval(checkpoint: &Path, root: &Path, cache: Option<&Path>, confusion: Option<PathBuf>) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let model = ckpt.restore()?;
    let (train, test) = data::load_cached(root, cache)?;
    let test = test.to_window_set();
    let test = match &ckpt.normalization {
        Some(stats) => {
            let fresh = ChannelStats::from_train(&train.to_window_set());
            if fresh.mean != stats.mean || fresh.std != stats.std {
                log::warn!("training statistics differ from the checkpoint's; using the checkpoint's");
            }
            standardize(&test, stats)?
        }
        None => test,
    };
    let e = evaluate(&model, &test, ckpt.eval_batch_size)?;
    println!("accuracy {:.6} ({} windows)", e.accuracy, test.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["true\\predicted".to_string()];
    header.extend(ACTIVITIES.iter().map(|a| a.to_string()));
    w.write_record(&header).expect("in-memory write");
    for (c, row) in e.confusion.iter().enumerate().take(NUM_CLASSES) {
        let mut rec = vec![ACTIVITIES[c].to_string()];
        rec.extend(row.iter().map(|n| n.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    let csv_bytes = w.into_inner().expect("flush");
    print!("{}", String::from_utf8_lossy(&csv_bytes));
    let path = confusion.unwrap_or_else(|| checkpoint.with_extension("confusion.csv"));
    write_atomic(&path, &csv_bytes)?;
    if !e.accuracy.is_finite() {
        return Err(HiwaveError::Numeric("accuracy is not finite".into()));
    }
    Ok(())
}
