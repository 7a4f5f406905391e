//! The online adaptation loop: per-batch subspace extraction, mean update,
//! alignment transform, classification and classifier adaptation.

mod classifier;
mod config;

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use classifier::{
    classify, classify_with_confidence, train_source_classifier, update_classifier, Classifier, Labeled,
};
pub use config::{ClassifierKind, MeanMethod, PipelineConfig, Variant};

use crate::error::{Error, Result};
use crate::gfk::{
    apply_transform, cumulative_transform_diagnosed, gfk_transform, TransformMatrix, DIRECTION_MISMATCH_WARN,
};
use crate::grassmann::{check_dims, geodesic_distance, Subspace, RANK_TOL};
use crate::mean::{incremental_average_transform, init_mean, karcher_mean_capped, MeanState};
use crate::predict::{compensate, extrapolate};

/// One target mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamBatch {
    pub features: DMatrix<f64>,
    pub labels: Option<Vec<usize>>,
}

impl StreamBatch {
    pub fn new(features: DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(y) = &labels {
            if y.len() != features.nrows() {
                return Err(Error::LengthMismatch {
                    left: features.nrows(),
                    right: y.len(),
                });
            }
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

/// Top-`k` principal directions of the column-centered rows of `x`.
pub fn pca_subspace(x: &DMatrix<f64>, k: usize) -> Result<Subspace> {
    let (n, d) = x.shape();
    check_dims(d, k)?;
    if n == 0 {
        return Err(Error::EmptyList);
    }
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let svd = centered.svd(false, true);
    let vt = svd.v_t.expect("v requested");
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let top = s.get(order[0]).copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&v| v > RANK_TOL * top.max(f64::MIN_POSITIVE)).count();
    if rank < k {
        return Err(Error::RankDeficient { rank, expected: k });
    }
    let basis = DMatrix::from_fn(d, k, |r, c| vt[(order[c], r)]);
    Ok(Subspace::from_raw(basis))
}

/// Pre-aligns the next batch: `features ← features·G`.
pub fn recursive_feedback(batch: &StreamBatch, g: &TransformMatrix) -> Result<StreamBatch> {
    Ok(StreamBatch {
        features: apply_transform(&batch.features, g)?,
        labels: batch.labels.clone(),
    })
}

/// Arithmetic mean of per-batch accuracies.
pub fn average_accuracy(per_batch: &[f64]) -> Result<f64> {
    if per_batch.is_empty() {
        return Err(Error::EmptyList);
    }
    Ok(per_batch.iter().sum::<f64>() / per_batch.len() as f64)
}

/// Per-batch diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    /// 1-based batch index.
    pub index: usize,
    pub accuracy: Option<f64>,
    /// Distance from the source subspace to the current mean.
    pub source_distance: f64,
    /// Distance between the previous and the current mean (0 for the first
    /// batch).
    pub mean_step: f64,
    pub elapsed_ms: f64,
    /// Time spent in the mean update alone.
    pub mean_update_ms: f64,
    pub prediction_clamped: bool,
    pub direction_mismatch: Option<f64>,
}

/// Result of one [`PipelineState::process_batch`] call.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub labels: Vec<usize>,
    pub accuracy: Option<f64>,
    /// PCA subspace of the (pre-aligned) batch.
    pub observed: Subspace,
    /// Subspace fed to the mean update (the compensated one when
    /// prediction is on).
    pub adjusted: Subspace,
    pub record: BatchRecord,
}

/// Everything the loop carries from one batch to the next.
#[derive(Debug, Clone)]
pub struct PipelineState {
    config: PipelineConfig,
    source_subspace: Subspace,
    mean_state: Option<MeanState>,
    last_transform: Option<TransformMatrix>,
    avg_transform: Option<TransformMatrix>,
    observed: Vec<Subspace>,
    classifier: Classifier,
    batch_index: usize,
    history: Vec<BatchRecord>,
}

/// Embeds the labeled source data and trains the classifier.
pub fn init_pipeline(x_s: &DMatrix<f64>, y_s: &[usize], cfg: PipelineConfig) -> Result<PipelineState> {
    cfg.validate(x_s.ncols())?;
    if x_s.nrows() != y_s.len() {
        return Err(Error::LengthMismatch {
            left: x_s.nrows(),
            right: y_s.len(),
        });
    }
    let source_subspace = pca_subspace(x_s, cfg.subspace_dim)?;
    let classifier = train_source_classifier(x_s, y_s, cfg.classifier_kind, cfg.linear_epochs, cfg.seed)?;
    Ok(PipelineState {
        config: cfg,
        source_subspace,
        mean_state: None,
        last_transform: None,
        avg_transform: None,
        observed: Vec::new(),
        classifier,
        batch_index: 0,
        history: Vec::new(),
    })
}

impl PipelineState {
    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn source_subspace(&self) -> &Subspace {
        &self.source_subspace
    }

    pub fn mean_state(&self) -> Option<&MeanState> {
        self.mean_state.as_ref()
    }

    /// Transform applied to the next batch when feedback is on; the
    /// identity before the first batch.
    pub fn feedback_transform(&self) -> TransformMatrix {
        self.last_transform
            .clone()
            .unwrap_or_else(|| TransformMatrix::identity(self.source_subspace.ambient_dim()))
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn batch_index(&self) -> usize {
        self.batch_index
    }

    pub fn history(&self) -> &[BatchRecord] {
        &self.history
    }

    /// Runs one batch through the loop. On error the state is left as it
    /// was, so a caller may log and skip the batch.
    pub fn process_batch(&mut self, batch: &StreamBatch) -> Result<BatchOutcome> {
        let start = Instant::now();
        let cfg = &self.config;
        let d = self.source_subspace.ambient_dim();
        let k = cfg.subspace_dim;
        if batch.dim() != d {
            return Err(Error::dims("process_batch", d, batch.dim()));
        }

        let feedback = match (&self.last_transform, cfg.use_feedback) {
            (Some(g), true) => Some(g),
            _ => None,
        };
        let pre = match feedback {
            Some(g) => apply_transform(&batch.features, g)?,
            None => batch.features.clone(),
        };

        let observed = pca_subspace(&pre, k)?;
        let mut prediction_clamped = false;
        let adjusted = match (&self.mean_state, cfg.use_prediction) {
            (Some(state), true) if state.prev_mean().is_some() => {
                let prediction = extrapolate(state.prev_mean().expect("checked"), state.mean())?;
                prediction_clamped = prediction.clamped;
                if prediction.clamped {
                    log::warn!("batch {}: prediction step clamped", self.batch_index + 1);
                }
                compensate(&prediction.subspace, &observed, cfg.blend)?
            }
            _ => observed.clone(),
        };

        let mean_start = Instant::now();
        let mut observed_list = Vec::new();
        let mean_state = match cfg.mean_method {
            MeanMethod::Icms => match &self.mean_state {
                None => init_mean(adjusted.clone()),
                Some(state) => state.update(&adjusted)?,
            },
            MeanMethod::Karcher => {
                observed_list = self.observed.clone();
                observed_list.push(adjusted.clone());
                let init = self.mean_state.as_ref().map_or(&adjusted, |s| s.mean()).clone();
                let km = karcher_mean_capped(init, &observed_list, cfg.karcher_tol, cfg.karcher_max_iter)?;
                match &self.mean_state {
                    None => init_mean(km.mean),
                    Some(state) => state.advance_to(km.mean),
                }
            }
            MeanMethod::IncrementalAveraging => match &self.mean_state {
                None => init_mean(adjusted.clone()),
                Some(state) => state.advance_to(adjusted.clone()),
            },
        };
        let mean_update_ms = mean_start.elapsed().as_secs_f64() * 1e3;

        let n = mean_state.count();
        let mut direction_mismatch = None;
        let mut avg_transform = None;
        let transform = if cfg.frozen {
            None
        } else {
            Some(match (cfg.mean_method, mean_state.prev_mean()) {
                (MeanMethod::IncrementalAveraging, _) => {
                    let g_n = gfk_transform(&self.source_subspace, &adjusted)?;
                    let avg = match &self.avg_transform {
                        None => g_n,
                        Some(prev) => incremental_average_transform(prev, &g_n, n)?,
                    };
                    avg_transform = Some(avg.clone());
                    avg
                }
                (_, Some(prev)) if cfg.use_cumulative => {
                    let c = cumulative_transform_diagnosed(&self.source_subspace, prev, mean_state.mean())?;
                    if c.direction_mismatch > DIRECTION_MISMATCH_WARN {
                        log::warn!(
                            "batch {}: principal directions rotated by {:.3} rad between means",
                            self.batch_index + 1,
                            c.direction_mismatch
                        );
                    }
                    direction_mismatch = Some(c.direction_mismatch);
                    c.transform
                }
                _ => gfk_transform(&self.source_subspace, mean_state.mean())?,
            })
        };

        let (aligned, mapped) = match &transform {
            Some(g) => {
                let aligned = apply_transform(&pre, g)?;
                let mut factors = Vec::with_capacity(2);
                if let Some(fb) = feedback {
                    factors.push(fb.matrix());
                }
                factors.push(g.matrix());
                (aligned, self.classifier.mapped(&factors))
            }
            None => (pre, self.classifier.clone()),
        };
        let Labeled { labels, confidence } = classify_with_confidence(&mapped, &aligned)?;
        let accuracy = batch.labels.as_ref().map(|y| {
            y.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / y.len().max(1) as f64
        });

        let classifier = if cfg.adaptive_classifier && !cfg.frozen {
            let keep: Vec<usize> = match cfg.confidence_threshold {
                Some(t) => (0..labels.len()).filter(|&i| confidence[i] >= t).collect(),
                None => (0..labels.len()).collect(),
            };
            let rows = batch.features.select_rows(&keep);
            let y_hat: Vec<usize> = keep.iter().map(|&i| labels[i]).collect();
            update_classifier(&self.classifier, &rows, &y_hat, cfg.update_rate)
        } else {
            self.classifier.clone()
        };

        let source_distance = geodesic_distance(&self.source_subspace, mean_state.mean())?;
        let mean_step = match mean_state.prev_mean() {
            Some(prev) => geodesic_distance(prev, mean_state.mean())?,
            None => 0.0,
        };

        // Commit.
        if cfg.mean_method == MeanMethod::Karcher {
            self.observed = observed_list;
        }
        if avg_transform.is_some() {
            self.avg_transform = avg_transform;
        }
        self.mean_state = Some(mean_state);
        self.last_transform = transform;
        self.classifier = classifier;
        self.batch_index += 1;
        let record = BatchRecord {
            index: self.batch_index,
            accuracy,
            source_distance,
            mean_step,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            mean_update_ms,
            prediction_clamped,
            direction_mismatch,
        };
        self.history.push(record.clone());
        Ok(BatchOutcome {
            labels,
            accuracy,
            observed,
            adjusted,
            record,
        })
    }
}
