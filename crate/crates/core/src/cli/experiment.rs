use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::{average_accuracy, init_pipeline, BatchRecord, PipelineConfig, Variant};

/// Where the stream came from, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub description: serde_json::Value,
    pub feature_dim: usize,
    pub n_classes: usize,
    pub source_rows: usize,
    pub target_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean per-batch accuracy over processed batches.
    pub average_accuracy: Option<f64>,
    pub total_seconds: f64,
    pub mean_batch_ms: f64,
    pub p95_batch_ms: f64,
    pub mean_update_ms: f64,
    pub processed: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub batch: usize,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub variant: Variant,
    pub seed: u64,
    pub config: PipelineConfig,
    pub dataset: DatasetInfo,
    pub batches: Vec<BatchRecord>,
    /// 1-based indices of batches skipped after a numerical failure.
    pub skipped: Vec<usize>,
    pub summary: Summary,
    pub aborted: Option<Abort>,
}

impl ExperimentReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    /// Flat per-batch table: `batch,accuracy,source_distance,mean_step,elapsed_ms`.
    pub fn write_batch_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "batch,accuracy,source_distance,mean_step,elapsed_ms")?;
        for r in &self.batches {
            let acc = r.accuracy.map_or(String::new(), |a| a.to_string());
            writeln!(
                out,
                "{},{},{},{},{}",
                r.index, acc, r.source_distance, r.mean_step, r.elapsed_ms
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    // Nearest-rank.
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Runs one variant over the whole stream. Batches failing for numerical
/// reasons are skipped and logged; any other error stops the run and is
/// recorded in [`ExperimentReport::aborted`] alongside the batches done.
pub fn run_experiment(
    dataset: &Dataset,
    description: &serde_json::Value,
    cfg: &PipelineConfig,
    variant: Variant,
) -> Result<ExperimentReport> {
    let cfg = cfg.clone().with_variant(variant);
    let started = Instant::now();
    let mut state = init_pipeline(&dataset.source_x, &dataset.source_y, cfg.clone())?;
    let mut skipped = Vec::new();
    let mut aborted = None;
    for (i, batch) in dataset.batches(cfg.batch_size).iter().enumerate() {
        match state.process_batch(batch) {
            Ok(_) => {}
            Err(e) if e.is_numerical() => {
                log::warn!("{variant}: skipping batch {}: {e}", i + 1);
                skipped.push(i + 1);
            }
            Err(e) => {
                log::error!("{variant}: aborting at batch {}: {e}", i + 1);
                aborted = Some(Abort {
                    batch: i + 1,
                    message: e.to_string(),
                    exit_code: e.exit_code(),
                });
                break;
            }
        }
    }
    let total_seconds = started.elapsed().as_secs_f64();
    let batches = state.history().to_vec();
    let accuracies: Vec<f64> = batches.iter().filter_map(|r| r.accuracy).collect();
    let elapsed: Vec<f64> = batches.iter().map(|r| r.elapsed_ms).collect();
    let updates: Vec<f64> = batches.iter().map(|r| r.mean_update_ms).collect();
    let summary = Summary {
        average_accuracy: average_accuracy(&accuracies).ok(),
        total_seconds,
        mean_batch_ms: mean(&elapsed),
        p95_batch_ms: percentile(&elapsed, 0.95),
        mean_update_ms: mean(&updates),
        processed: batches.len(),
        skipped: skipped.len(),
    };
    Ok(ExperimentReport {
        variant,
        seed: cfg.seed,
        dataset: DatasetInfo {
            description: description.clone(),
            feature_dim: dataset.feature_dim(),
            n_classes: dataset.n_classes,
            source_rows: dataset.source_x.nrows(),
            target_rows: dataset.target_x.nrows(),
        },
        config: cfg,
        batches,
        skipped,
        summary,
        aborted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub subspace_dim: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub average_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub variant: Variant,
    pub base_config: PipelineConfig,
    pub dataset: DatasetInfo,
    pub k_values: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    /// Row-major over `k_values × batch_sizes`.
    pub cells: Vec<SweepCell>,
}

impl SweepReport {
    pub fn cell(&self, k: usize, batch_size: usize) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.subspace_dim == k && c.batch_size == batch_size)
    }
}

/// A(B) over a `k × N_T` grid. Cells run in parallel, each seeded with
/// `base seed + cell index`; a failing cell is recorded and the rest go on.
pub fn sweep(
    dataset: &Dataset,
    description: &serde_json::Value,
    base_cfg: &PipelineConfig,
    variant: Variant,
    k_values: &[usize],
    batch_sizes: &[usize],
) -> Result<SweepReport> {
    let d = dataset.feature_dim();
    if let Some(&k) = k_values.iter().find(|&&k| k == 0 || 2 * k > d) {
        return Err(Error::InvalidSubspaceDim {
            sub_dim: k,
            ambient_dim: d,
        });
    }
    if k_values.is_empty() || batch_sizes.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one k and one batch size".into()));
    }
    let grid: Vec<(usize, usize)> = k_values
        .iter()
        .flat_map(|&k| batch_sizes.iter().map(move |&n| (k, n)))
        .collect();
    let cells = grid
        .par_iter()
        .enumerate()
        .map(|(i, &(k, n))| {
            let mut cfg = base_cfg.clone();
            cfg.subspace_dim = k;
            cfg.batch_size = n;
            cfg.seed = base_cfg.seed.wrapping_add(i as u64);
            let outcome = run_experiment(dataset, description, &cfg, variant);
            let (average_accuracy, error) = match outcome {
                Ok(r) => match (&r.aborted, r.summary.average_accuracy) {
                    (Some(a), _) => (None, Some(a.message.clone())),
                    (None, acc) => (acc, None),
                },
                Err(e) => (None, Some(e.to_string())),
            };
            SweepCell {
                subspace_dim: k,
                batch_size: n,
                seed: cfg.seed,
                average_accuracy,
                error,
            }
        })
        .collect();
    Ok(SweepReport {
        variant,
        base_config: base_cfg.clone(),
        dataset: DatasetInfo {
            description: description.clone(),
            feature_dim: d,
            n_classes: dataset.n_classes,
            source_rows: dataset.source_x.nrows(),
            target_rows: dataset.target_x.nrows(),
        },
        k_values: k_values.to_vec(),
        batch_sizes: batch_sizes.to_vec(),
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanComparisonRow {
    pub method: Variant,
    pub average_accuracy: Option<f64>,
    pub total_seconds: f64,
    /// Time spent in the mean updates alone.
    pub mean_update_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanComparison {
    pub config: PipelineConfig,
    pub dataset: DatasetInfo,
    pub rows: Vec<MeanComparisonRow>,
}

impl MeanComparison {
    pub fn row(&self, method: Variant) -> Option<&MeanComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Incremental averaging, Karcher and ICMS on the same stream, run one after
/// the other so that their timings are comparable.
pub fn compare_means(dataset: &Dataset, description: &serde_json::Value, cfg: &PipelineConfig) -> Result<MeanComparison> {
    let mut rows = Vec::new();
    let mut info = None;
    for method in [Variant::IncrementalAveraging, Variant::Karcher, Variant::Icms] {
        let report = run_experiment(dataset, description, cfg, method)?;
        if let Some(a) = &report.aborted {
            return Err(Error::InvalidConfig(format!("{method} aborted: {}", a.message)));
        }
        rows.push(MeanComparisonRow {
            method,
            average_accuracy: report.summary.average_accuracy,
            total_seconds: report.summary.total_seconds,
            mean_update_seconds: report.batches.iter().map(|r| r.mean_update_ms).sum::<f64>() / 1e3,
        });
        info = Some(report.dataset);
    }
    Ok(MeanComparison {
        config: cfg.clone(),
        dataset: info.expect("three rows"),
        rows,
    })
}
