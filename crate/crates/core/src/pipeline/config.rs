use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::predict::DEFAULT_BLEND;

/// Classifier family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    NearestClassMean,
    /// One-vs-rest passive-aggressive linear classifier.
    LinearMargin,
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ncm" | "nearest-class-mean" => Ok(Self::NearestClassMean),
            "linear" | "linear-margin" => Ok(Self::LinearMargin),
            _ => Err(Error::InvalidConfig(format!("unknown classifier '{s}'"))),
        }
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NearestClassMean => "nearest-class-mean",
            Self::LinearMargin => "linear-margin",
        })
    }
}

/// How the target subspaces of the stream are summarized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMethod {
    Icms,
    /// Karcher mean of every subspace seen so far, warm-started from the
    /// previous mean.
    Karcher,
    /// No mean subspace; the transforms of each batch are averaged instead.
    IncrementalAveraging,
}

/// Named pipeline variants accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Icms,
    IcmsFb,
    IcmsPred,
    IcmsFbPred,
    IcmsCumul,
    IcmsFbCumul,
    IncrementalAveraging,
    Karcher,
    /// The source classifier applied to raw target data, never updated.
    SourceOnly,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Icms,
        Variant::IcmsFb,
        Variant::IcmsPred,
        Variant::IcmsFbPred,
        Variant::IcmsCumul,
        Variant::IcmsFbCumul,
        Variant::IncrementalAveraging,
        Variant::Karcher,
        Variant::SourceOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Icms => "icms",
            Variant::IcmsFb => "icms-fb",
            Variant::IcmsPred => "icms-pred",
            Variant::IcmsFbPred => "icms-fb-pred",
            Variant::IcmsCumul => "icms-cumul",
            Variant::IcmsFbCumul => "icms-fb-cumul",
            Variant::IncrementalAveraging => "incremental-averaging",
            Variant::Karcher => "karcher",
            Variant::SourceOnly => "source-only",
        }
    }

    /// Sets the variant-dependent switches of `cfg`, leaving the rest alone.
    pub fn apply(self, cfg: &mut PipelineConfig) {
        let (fb, pred, cumul) = match self {
            Variant::IcmsFb => (true, false, false),
            Variant::IcmsPred => (false, true, false),
            Variant::IcmsFbPred => (true, true, false),
            Variant::IcmsCumul => (false, false, true),
            Variant::IcmsFbCumul => (true, false, true),
            _ => (false, false, false),
        };
        cfg.use_feedback = fb;
        cfg.use_prediction = pred;
        cfg.use_cumulative = cumul;
        cfg.mean_method = match self {
            Variant::Karcher => MeanMethod::Karcher,
            Variant::IncrementalAveraging => MeanMethod::IncrementalAveraging,
            _ => MeanMethod::Icms,
        };
        cfg.frozen = self == Variant::SourceOnly;
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown variant '{s}'")))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub subspace_dim: usize,
    pub batch_size: usize,
    pub use_feedback: bool,
    pub use_prediction: bool,
    pub use_cumulative: bool,
    pub adaptive_classifier: bool,
    /// Weight of the prediction when compensating the observed subspace.
    pub blend: f64,
    pub classifier_kind: ClassifierKind,
    pub update_rate: f64,
    /// Pseudo-labels below this confidence are not used for updates.
    pub confidence_threshold: Option<f64>,
    pub mean_method: MeanMethod,
    /// Skip all adaptation (the transform stays the identity and the
    /// classifier is never updated).
    pub frozen: bool,
    pub karcher_tol: f64,
    /// Per-batch iteration cap of the Karcher mean method.
    pub karcher_max_iter: usize,
    /// Passes over the source data when fitting the linear classifier.
    pub linear_epochs: usize,
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(subspace_dim: usize, batch_size: usize) -> Self {
        Self {
            subspace_dim,
            batch_size,
            use_feedback: false,
            use_prediction: false,
            use_cumulative: false,
            adaptive_classifier: true,
            blend: DEFAULT_BLEND,
            classifier_kind: ClassifierKind::NearestClassMean,
            update_rate: 0.1,
            confidence_threshold: None,
            mean_method: MeanMethod::Icms,
            frozen: false,
            karcher_tol: crate::mean::KARCHER_TOL,
            karcher_max_iter: crate::mean::KARCHER_MAX_ITER,
            linear_epochs: 10,
            seed: 0,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        variant.apply(&mut self);
        self
    }

    /// Checks the configuration against the feature dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.subspace_dim == 0 || 2 * self.subspace_dim > d {
            return bad(format!("subspace_dim {} must be in [1, d/2] for d = {d}", self.subspace_dim));
        }
        if self.batch_size < 2 || self.subspace_dim >= self.batch_size {
            return bad(format!(
                "batch_size {} must be >= 2 and exceed subspace_dim {}",
                self.batch_size, self.subspace_dim
            ));
        }
        if self.use_prediction && self.use_cumulative {
            return bad("prediction and cumulative transforms are mutually exclusive".into());
        }
        if self.mean_method == MeanMethod::IncrementalAveraging && (self.use_prediction || self.use_cumulative) {
            return bad("incremental averaging keeps no mean subspace to predict or accumulate".into());
        }
        if !(0.0..=1.0).contains(&self.blend) {
            return bad(format!("blend {} outside [0, 1]", self.blend));
        }
        if !(0.0..=1.0).contains(&self.update_rate) {
            return bad(format!("update_rate {} outside [0, 1]", self.update_rate));
        }
        if let Some(t) = self.confidence_threshold {
            if !(0.0..=1.0).contains(&t) {
                return bad(format!("confidence_threshold {t} outside [0, 1]"));
            }
        }
        if !(self.karcher_tol > 0.0) || self.karcher_max_iter == 0 {
            return bad("karcher_tol must be positive and karcher_max_iter nonzero".into());
        }
        if self.linear_epochs == 0 {
            return bad("linear_epochs must be nonzero".into());
        }
        Ok(())
    }
}
