//! Linear least-squares SVM in closed form, plus the frame reservoir that
//! supplies its training set.
//!
//! For labels `y ∈ {−1, +1}` the minimizer of `Σ (wᵀxᵢ + b − yᵢ)² + γ‖w‖²` is
//!
//! ```text
//! w = (2 N₊ N₋ / N²) (S + (γ/N) I)⁻¹ (μ₊ − μ₋)
//! b = (N₊ − N₋)/N − μᵀw
//! ```
//!
//! with `S` the covariance about the global mean `μ`. When the feature
//! dimension exceeds the sample count the same `w` is computed through the
//! `N × N` centered kernel instead: `(XcXcᵀ + γI)⁻¹ Xc y = Xc (XcᵀXc + γI)⁻¹ y`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::pyrpool::PooledFeature;

pub const DEFAULT_GAMMA: f64 = 1e-2;
pub const HEAD_KEEP: usize = 10;
pub const TAIL_KEEP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BiasMode {
    /// `b = (N₊ − N₋)/N − μᵀw`, the stationary point in `b`.
    #[default]
    Corrected,
    /// `b = N₊N₋/N − μᵀw` as commonly printed.
    Verbatim,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub w: DVector<f64>,
    pub b: f64,
    pub gamma: f64,
}

impl LinearModel {
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn predict(&self, feature: &PooledFeature) -> Result<f64> {
        predict(self, feature)
    }
}

pub fn predict(model: &LinearModel, feature: &PooledFeature) -> Result<f64> {
    if feature.len() != model.w.len() {
        return Err(Error::DimensionMismatch(format!(
            "feature length {} vs model dimension {}",
            feature.len(),
            model.w.len()
        )));
    }
    Ok(model.w.dot(&feature.0) + model.b)
}

/// Stacks features into a `d × N` matrix.
pub fn stack_features(features: &[PooledFeature]) -> Result<DMatrix<f64>> {
    let d = features.first().map_or(0, |f| f.len());
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::DimensionMismatch("features differ in length".into()));
    }
    Ok(DMatrix::from_fn(d, features.len(), |r, c| features[c].0[r]))
}

pub fn train(features: &[PooledFeature], labels: &[f64], gamma: f64) -> Result<LinearModel> {
    train_matrix(&stack_features(features)?, labels, gamma, BiasMode::Corrected)
}

/// Trains on a `d × N` sample matrix with labels in {−1, +1}.
pub fn train_matrix(x: &DMatrix<f64>, labels: &[f64], gamma: f64, bias: BiasMode) -> Result<LinearModel> {
    let (d, n) = x.shape();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} labels for {n} samples", labels.len())));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("gamma must be > 0, got {gamma}")));
    }
    if let Some(bad) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidParameter(format!("label {} of sample {bad} is not ±1", labels[bad])));
    }
    if let Some(bad) = (0..n).find(|&c| x.column(c).iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(bad));
    }
    let n_pos = labels.iter().filter(|&&y| y > 0.0).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass {
            positives: n_pos,
            negatives: n_neg,
        });
    }

    let nf = n as f64;
    let mut mu_pos = DVector::zeros(d);
    let mut mu_neg = DVector::zeros(d);
    for (col, &y) in x.column_iter().zip(labels) {
        if y > 0.0 {
            mu_pos += col;
        } else {
            mu_neg += col;
        }
    }
    let mu = (&mu_pos + &mu_neg) / nf;
    mu_pos /= n_pos as f64;
    mu_neg /= n_neg as f64;

    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mu;
    }

    let w = if d <= n {
        let scale = 2.0 * n_pos as f64 * n_neg as f64 / (nf * nf);
        let mut system = &centered * centered.transpose() / nf;
        for i in 0..d {
            system[(i, i)] += gamma / nf;
        }
        solve_spd(system, &(mu_pos - mu_neg)) * scale
    } else {
        let mut kernel = centered.transpose() * &centered;
        for i in 0..n {
            kernel[(i, i)] += gamma;
        }
        let y = DVector::from_column_slice(labels);
        &centered * solve_spd(kernel, &y)
    };

    let offset = match bias {
        BiasMode::Corrected => (n_pos as f64 - n_neg as f64) / nf,
        BiasMode::Verbatim => n_pos as f64 * n_neg as f64 / nf,
    };
    let b = offset - mu.dot(&w);
    Ok(LinearModel { w, b, gamma })
}

fn solve_spd(system: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    match system.clone().cholesky() {
        Some(chol) => chol.solve(rhs),
        None => {
            log::warn!("LS-SVM system not positive definite; falling back to least squares");
            system
                .svd(true, true)
                .solve(rhs, 1e-12)
                .expect("SVD computed with both factors")
        }
    }
}

pub type LabeledSample = (PooledFeature, f64);

/// Training frames: the first `head_keep` frames ever pushed together with
/// the most recent `tail_keep`. Anything else is dropped on push.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    entries: BTreeMap<usize, Vec<LabeledSample>>,
    head: Vec<usize>,
    pub head_keep: usize,
    pub tail_keep: usize,
}

impl Default for Reservoir {
    fn default() -> Self {
        Self::new(HEAD_KEEP, TAIL_KEEP)
    }
}

impl Reservoir {
    pub fn new(head_keep: usize, tail_keep: usize) -> Self {
        Self {
            entries: BTreeMap::new(),
            head: Vec::new(),
            head_keep,
            tail_keep,
        }
    }

    pub fn push(&mut self, frame_index: usize, samples: Vec<LabeledSample>) -> Result<()> {
        if let Some(&last) = self.entries.keys().next_back() {
            if frame_index <= last {
                return Err(Error::NonMonotoneFrame { last, got: frame_index });
            }
        }
        if self.head.len() < self.head_keep {
            self.head.push(frame_index);
        }
        self.entries.insert(frame_index, samples);
        let keys: Vec<usize> = self.entries.keys().copied().collect();
        let recent_from = keys.len().saturating_sub(self.tail_keep);
        for (i, k) in keys.iter().enumerate() {
            if i < recent_from && !self.head.contains(k) {
                self.entries.remove(k);
            }
        }
        Ok(())
    }

    /// Frame indices currently retained, ascending.
    pub fn frames(&self) -> Vec<usize> {
        self.entries.keys().copied().collect()
    }

    pub fn samples(&self, frame_index: usize) -> Option<&[LabeledSample]> {
        self.entries.get(&frame_index).map(|v| v.as_slice())
    }

    /// Swaps the samples of a retained frame (after re-encoding).
    pub fn replace(&mut self, frame_index: usize, samples: Vec<LabeledSample>) -> bool {
        match self.entries.get_mut(&frame_index) {
            Some(slot) => {
                *slot = samples;
                true
            }
            None => false,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All retained samples as a `d × N` matrix plus labels.
    pub fn training_set(&self) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let all: Vec<&LabeledSample> = self.entries.values().flatten().collect();
        let d = all.first().map_or(0, |s| s.0.len());
        if all.iter().any(|s| s.0.len() != d) {
            return Err(Error::DimensionMismatch("reservoir features differ in length".into()));
        }
        let x = DMatrix::from_fn(d, all.len(), |r, c| all[c].0 .0[r]);
        Ok((x, all.iter().map(|s| s.1).collect()))
    }
}
