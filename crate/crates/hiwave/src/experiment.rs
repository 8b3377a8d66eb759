//! Multi-seed, multi-variant experiment execution.
//!
//! Output directory layout:
//!
//! ```text
//! config.json              effective configuration
//! runs.jsonl               one RunRecord per finished run
//! checkpoints/{stem}.json  trained weights per run
//! pvalues/{stem}.json      learned GeM exponents per run
//! summary.csv, summary.json
//! report.md
//! ```
//!
//! `{stem}` is `{variant}-seed{seed}`. Every file is written atomically.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use hiwave_core::{train_one, Pooling, Variant};

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::data::{load_cached, prepare, verify_archive, Prepared};
use crate::error::{HiwaveError, Result};
use crate::records::{write_atomic, write_json, write_jsonl, ExperimentSummary, PValues, RunConfig, RunRecord};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub jobs: usize,
    pub force: bool,
    /// Print one progress line per epoch.
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            jobs: 1,
            force: false,
            progress: true,
        }
    }
}

/// Reads, checks and prepares the dataset named by `cfg.data`.
pub fn load_data(cfg: &ExperimentConfig) -> Result<Prepared> {
    let root = cfg.data_root()?;
    if let (Some(archive), Some(sum)) = (&cfg.data.archive, &cfg.data.sha256) {
        verify_archive(archive, sum)?;
    }
    let (train, test) = load_cached(&root, cfg.data.cache.as_deref())?;
    log::info!(
        "loaded {} train and {} test windows from {}",
        train.len(),
        test.len(),
        root.display()
    );
    prepare(&train, &test, cfg.data.standardize)
}

pub fn checkpoint_path(out: &Path, stem: &str) -> PathBuf {
    out.join("checkpoints").join(format!("{stem}.json"))
}

fn run_single(cfg: &ExperimentConfig, variant: &str, seed: u64, data: &Prepared, progress: bool) -> Result<RunRecord> {
    let tokenizer = cfg.tokenizer_for(variant)?;
    let start = Instant::now();
    let epochs = cfg.train.epochs;
    let mut report = |s: &hiwave_core::EpochStats| {
        if progress {
            let test = s.test_accuracy.map(|a| format!(" test_acc {a:.4}")).unwrap_or_default();
            println!(
                "{variant} seed {seed} epoch {}/{epochs} loss {:.4} acc {:.4}{test}",
                s.epoch, s.train_loss, s.train_accuracy
            );
        }
    };
    let (model, metrics) = train_one(
        &cfg.model,
        &tokenizer,
        &cfg.train,
        seed,
        &data.train,
        &data.test,
        &mut report,
    )?;
    let record = RunRecord {
        config: RunConfig {
            variant: variant.into(),
            tokenizer: tokenizer.clone(),
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            standardize: cfg.data.standardize,
        },
        metrics,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    let out = &cfg.output.dir;
    let stem = record.stem();
    Checkpoint::capture(&model, variant, seed, cfg.train.batch_size, data.stats.clone())
        .save(&checkpoint_path(out, &stem))?;
    if tokenizer.variant != Variant::Baseline && tokenizer.pooling == Pooling::Gem {
        let p = PValues {
            variant: variant.into(),
            seed,
            initial: tokenizer.gem_init,
            p: record.metrics.learned_p.clone(),
        };
        write_json(&out.join("pvalues").join(format!("{stem}.json")), &p)?;
    }
    if progress {
        println!(
            "{variant} seed {seed} done: test_acc {:.4} params {} ({:.1}s)",
            record.metrics.test_accuracy, record.metrics.param_count, record.wall_seconds
        );
    }
    Ok(record)
}

fn order(records: &mut [RunRecord], variants: &[String]) {
    records.sort_by_key(|r| {
        let rank = variants
            .iter()
            .position(|v| *v == r.config.variant)
            .unwrap_or(usize::MAX);
        (rank, r.metrics.seed)
    });
}

/// Trains every `(variant, seed)` pair on up to `jobs` threads and writes
/// records, checkpoints, exponents, summary and report under `cfg.output.dir`.
///
/// Refuses to touch an output directory that already holds `runs.jsonl`
/// unless `force` is set.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    variants: &[String],
    data: &Prepared,
    opts: &RunOptions,
) -> Result<(Vec<RunRecord>, ExperimentSummary)> {
    cfg.validate()?;
    for v in variants {
        cfg.tokenizer_for(v)?;
    }
    let out = &cfg.output.dir;
    let runs_path = out.join("runs.jsonl");
    if runs_path.exists() && !opts.force {
        return Err(HiwaveError::Usage(format!(
            "{} already holds results; pass --force to overwrite",
            out.display()
        )));
    }
    write_atomic(&out.join("config.json"), cfg.to_json().as_bytes())?;

    let plan: Vec<(String, u64)> = variants
        .iter()
        .flat_map(|v| cfg.train.seeds.iter().map(move |&s| (v.clone(), s)))
        .collect();
    let next = AtomicUsize::new(0);
    let done: Mutex<Vec<RunRecord>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<HiwaveError>> = Mutex::new(None);
    let workers = opts.jobs.clamp(1, plan.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failure.lock().expect("lock").is_some() {
                    return;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((variant, seed)) = plan.get(i) else {
                    return;
                };
                match run_single(cfg, variant, *seed, data, opts.progress) {
                    Ok(record) => {
                        let mut all = done.lock().expect("lock");
                        all.push(record);
                        order(&mut all, variants);
                        if let Err(e) = write_jsonl(&runs_path, &all) {
                            failure.lock().expect("lock").get_or_insert(e);
                        }
                    }
                    Err(e) => {
                        failure.lock().expect("lock").get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().expect("lock") {
        return Err(e);
    }
    let records = done.into_inner().expect("lock");
    let summary = ExperimentSummary::from_records(&records);
    write_summary(out, &summary)?;
    Ok((records, summary))
}

pub fn write_summary(out: &Path, summary: &ExperimentSummary) -> Result<()> {
    write_atomic(&out.join("summary.csv"), summary.to_csv().as_bytes())?;
    write_json(&out.join("summary.json"), summary)?;
    let report = format!("# Results\n\n{}", summary.to_markdown());
    write_atomic(&out.join("report.md"), report.as_bytes())
}
