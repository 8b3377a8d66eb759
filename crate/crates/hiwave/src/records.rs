//! Run records, per-variant summaries and the markdown report.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use hiwave_core::{ModelConfig, RunMetrics, TokenizerConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::VARIANTS;
use crate::error::{HiwaveError, Result};

/// Published mean and standard deviation of test accuracy per variant.
pub const REFERENCE: [(&str, f64, f64); 7] = [
    ("baseline", 0.9259, 0.0039),
    ("hybrid-L3-db2-gem", 0.9338, 0.0043),
    ("replacement-L3-db2-gem", 0.9115, 0.0031),
    ("hybrid-L2-db2-gem", 0.9301, 0.0019),
    ("hybrid-pyramid-db2-gem", 0.9324, 0.0051),
    ("hybrid-L3-db4-gem", 0.9290, 0.0025),
    ("hybrid-L3-db2-avg", 0.9287, 0.0059),
];

pub fn reference(variant: &str) -> Option<(f64, f64)> {
    REFERENCE.iter().find(|(v, ..)| *v == variant).map(|&(_, m, s)| (m, s))
}

/// Configuration a run was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: String,
    pub tokenizer: TokenizerConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub standardize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    #[serde(flatten)]
    pub metrics: RunMetrics,
    pub wall_seconds: f64,
}

impl RunRecord {
    /// Stable file stem, e.g. `hybrid-L3-db2-gem-seed3`.
    pub fn stem(&self) -> String {
        format!("{}-seed{}", self.config.variant, self.metrics.seed)
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| HiwaveError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| HiwaveError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| HiwaveError::io(&tmp, e))?;
        f.sync_all().map_err(|e| HiwaveError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| HiwaveError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HiwaveError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| HiwaveError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_jsonl(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("serializable"));
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).map_err(|e| HiwaveError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|source| HiwaveError::Json {
                path: path.to_path_buf(),
                source,
            })
        })
        .collect()
}

/// Mean and N−1 standard deviation; the deviation is 0 for a single value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub n_seeds: usize,
    pub param_count: usize,
    /// Per-packet mean of the learned exponents; empty without GeM.
    pub mean_p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub variants: Vec<VariantSummary>,
}

impl ExperimentSummary {
    /// Groups `records` by variant, in [`VARIANTS`] order then by name.
    pub fn from_records(records: &[RunRecord]) -> Self {
        let mut groups: BTreeMap<(usize, String), Vec<&RunRecord>> = BTreeMap::new();
        for r in records {
            let v = &r.config.variant;
            let rank = VARIANTS.iter().position(|n| n == v).unwrap_or(VARIANTS.len());
            groups.entry((rank, v.clone())).or_default().push(r);
        }
        let variants = groups
            .into_iter()
            .map(|((_, variant), runs)| {
                let accs: Vec<f64> = runs.iter().map(|r| r.metrics.test_accuracy).collect();
                let (mean_acc, std_acc) = mean_std(&accs);
                let k = runs[0].metrics.learned_p.len();
                let mean_p = (0..k)
                    .map(|i| runs.iter().map(|r| r.metrics.learned_p[i]).sum::<f64>() / runs.len() as f64)
                    .collect();
                VariantSummary {
                    variant,
                    mean_acc,
                    std_acc,
                    n_seeds: runs.len(),
                    param_count: runs[0].metrics.param_count,
                    mean_p,
                }
            })
            .collect();
        Self { variants }
    }

    pub fn get(&self, variant: &str) -> Option<&VariantSummary> {
        self.variants.iter().find(|v| v.variant == variant)
    }

    /// Columns `variant, mean_acc, std_acc, n_seeds, param_count`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variant", "mean_acc", "std_acc", "n_seeds", "param_count"])
            .expect("in-memory write");
        for v in &self.variants {
            w.write_record([
                v.variant.clone(),
                format!("{:.6}", v.mean_acc),
                format!("{:.6}", v.std_acc),
                v.n_seeds.to_string(),
                v.param_count.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Markdown table of reproduced against published accuracy.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from(
            "| variant | params | reproduced (mean ± std) | seeds | published (mean ± std) | Δ mean |\n\
             |---|---:|---:|---:|---:|---:|\n",
        );
        for v in &self.variants {
            let (published, delta) = match reference(&v.variant) {
                Some((m, s)) => (format!("{m:.4} ± {s:.4}"), format!("{:+.4}", v.mean_acc - m)),
                None => ("n/a".into(), "n/a".into()),
            };
            out.push_str(&format!(
                "| {} | {} | {:.4} ± {:.4} | {} | {} | {} |\n",
                v.variant, v.param_count, v.mean_acc, v.std_acc, v.n_seeds, published, delta
            ));
        }
        let with_p: Vec<_> = self.variants.iter().filter(|v| !v.mean_p.is_empty()).collect();
        if !with_p.is_empty() {
            out.push_str("\nMean learned GeM exponents per packet:\n\n");
            for v in with_p {
                let ps: Vec<String> = v.mean_p.iter().map(|p| format!("{p:.3}")).collect();
                out.push_str(&format!("- {}: [{}]\n", v.variant, ps.join(", ")));
            }
        }
        out
    }
}

/// Per-packet learned exponents of one run, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValues {
    pub variant: String,
    pub seed: u64,
    pub initial: f64,
    pub p: Vec<f64>,
}
