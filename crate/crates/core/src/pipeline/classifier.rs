use nalgebra::{DMatrix, DVector, RowDVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ClassifierKind;
use crate::error::{Error, Result};

// Aggressiveness bound of the passive-aggressive updates (PA-I).
const PA_C: f64 = 1.0;

/// Per-class centroids plus, for the linear kind, one-vs-rest weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    kind: ClassifierKind,
    centroids: DMatrix<f64>,
    counts: Vec<usize>,
    weights: Option<DMatrix<f64>>,
    bias: Option<DVector<f64>>,
}

impl Classifier {
    /// Nearest-class-mean classifier from explicit centroids (c×d).
    pub fn from_centroids(centroids: DMatrix<f64>) -> Self {
        let c = centroids.nrows();
        Self {
            kind: ClassifierKind::NearestClassMean,
            centroids,
            counts: vec![0; c],
            weights: None,
            bias: None,
        }
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn centroids(&self) -> &DMatrix<f64> {
        &self.centroids
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn weights(&self) -> Option<&DMatrix<f64>> {
        self.weights.as_ref()
    }

    pub fn n_classes(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    /// The classifier seen through the feature map `x ↦ x·F1·F2·…`: centroids
    /// are mapped by the same product so that distances compare like with
    /// like, and linear scores become `⟨w·T̃, x·T̃⟩ + b` with `T̃` the product
    /// divided by `2^m`.
    pub fn mapped(&self, factors: &[&DMatrix<f64>]) -> Classifier {
        let mut out = self.clone();
        for f in factors {
            out.centroids = &out.centroids * *f;
            if let Some(w) = out.weights.as_mut() {
                *w = &*w * *f;
            }
        }
        if let Some(w) = out.weights.as_mut() {
            *w /= 4f64.powi(factors.len() as i32);
        }
        out
    }

    fn scores(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match (&self.weights, &self.bias) {
            (Some(w), Some(b)) => {
                let mut s = x * w.transpose();
                for mut row in s.row_iter_mut() {
                    row += b.transpose();
                }
                s
            }
            _ => {
                // Negative squared distances, up to the per-row constant ‖x‖².
                let norms = self.centroids.row_iter().map(|r| r.norm_squared()).collect::<Vec<_>>();
                let mut s = x * self.centroids.transpose() * 2.0;
                for mut row in s.row_iter_mut() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v -= norms[j];
                    }
                }
                s
            }
        }
    }
}

/// Labels with a per-row confidence in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub labels: Vec<usize>,
    pub confidence: Vec<f64>,
}

fn check_dim(c: &Classifier, x: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != c.dim() {
        return Err(Error::dims("classify", c.dim(), x.ncols()));
    }
    Ok(())
}

/// Fits a classifier on labeled source data. Labels must cover every class
/// in `0..=max(label)`.
pub fn train_source_classifier(
    x: &DMatrix<f64>,
    y: &[usize],
    kind: ClassifierKind,
    epochs: usize,
    seed: u64,
) -> Result<Classifier> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: y.len(),
        });
    }
    let c = y.iter().max().map(|m| m + 1).ok_or(Error::EmptyList)?;
    let d = x.ncols();
    let mut sums = DMatrix::zeros(c, d);
    let mut counts = vec![0usize; c];
    for (i, &label) in y.iter().enumerate() {
        let mut row = sums.row_mut(label);
        row += x.row(i);
        counts[label] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(empty));
    }
    for (j, &n) in counts.iter().enumerate() {
        sums.row_mut(j).scale_mut(1.0 / n as f64);
    }
    let mut classifier = Classifier {
        kind,
        centroids: sums,
        counts,
        weights: None,
        bias: None,
    };
    if kind == ClassifierKind::LinearMargin {
        classifier.weights = Some(DMatrix::zeros(c, d));
        classifier.bias = Some(DVector::zeros(c));
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                pa_step(&mut classifier, &x.row(i).clone_owned(), y[i], PA_C);
            }
        }
    }
    Ok(classifier)
}

// One-vs-rest PA-I update on a single sample.
fn pa_step(c: &mut Classifier, x: &RowDVector<f64>, label: usize, aggressiveness: f64) {
    let (Some(w), Some(b)) = (c.weights.as_mut(), c.bias.as_mut()) else {
        return;
    };
    let denom = x.norm_squared() + 1.0;
    for j in 0..w.nrows() {
        let target = if j == label { 1.0 } else { -1.0 };
        let margin = target * (w.row(j).dot(x) + b[j]);
        let loss = 1.0 - margin;
        if loss > 0.0 {
            let tau = (loss / denom).min(aggressiveness);
            let mut row = w.row_mut(j);
            row += x * (tau * target);
            b[j] += tau * target;
        }
    }
}

/// Predicted labels; see [`classify_with_confidence`].
pub fn classify(c: &Classifier, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    Ok(classify_with_confidence(c, x)?.labels)
}

/// Nearest-class-mean: smallest Euclidean distance to a centroid. Linear:
/// largest score. Ties go to the lowest class index. Confidence is
/// `(d2 - d1)/(d2 + d1)` on the two smallest distances for nearest-mean and
/// the clipped score gap for the linear kind.
pub fn classify_with_confidence(c: &Classifier, x: &DMatrix<f64>) -> Result<Labeled> {
    check_dim(c, x)?;
    let scores = c.scores(x);
    let mut labels = Vec::with_capacity(x.nrows());
    let mut confidence = Vec::with_capacity(x.nrows());
    for (i, row) in scores.row_iter().enumerate() {
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        let runner_up = (0..row.len())
            .filter(|&j| j != best)
            .map(|j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let conf = match c.weights {
            Some(_) => (row[best] - runner_up).clamp(0.0, 1.0),
            None => {
                let norm = x.row(i).norm_squared();
                let d1 = (norm - row[best]).max(0.0).sqrt();
                let d2 = (norm - runner_up).max(0.0).sqrt();
                if d1 + d2 > 0.0 && d2.is_finite() {
                    (d2 - d1) / (d2 + d1)
                } else {
                    1.0
                }
            }
        };
        labels.push(best);
        confidence.push(conf);
    }
    Ok(Labeled { labels, confidence })
}

/// Moves each predicted class's centroid toward the batch mean of the rows
/// assigned to it: `c_j ← (1-η)·c_j + η·m_j`. The linear kind also takes a
/// passive-aggressive step per row with aggressiveness capped at η.
pub fn update_classifier(c: &Classifier, x: &DMatrix<f64>, y_hat: &[usize], rate: f64) -> Classifier {
    let mut out = c.clone();
    if rate == 0.0 {
        return out;
    }
    let k = c.n_classes();
    let mut sums = DMatrix::zeros(k, c.dim());
    let mut counts = vec![0usize; k];
    for (i, &label) in y_hat.iter().enumerate() {
        let mut row = sums.row_mut(label);
        row += x.row(i);
        counts[label] += 1;
    }
    for j in 0..k {
        if counts[j] == 0 {
            continue;
        }
        let mean = sums.row(j) / counts[j] as f64;
        let updated = out.centroids.row(j) * (1.0 - rate) + mean * rate;
        out.centroids.set_row(j, &updated);
        out.counts[j] += counts[j];
    }
    if out.weights.is_some() {
        for (i, &label) in y_hat.iter().enumerate() {
            pa_step(&mut out, &x.row(i).clone_owned(), label, PA_C * rate);
        }
    }
    out
}
