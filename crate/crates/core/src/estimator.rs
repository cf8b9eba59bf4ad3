//! Binary estimators mapping one learnable scalar per item to a selection
//! bit (forward) and to a differentiable relaxation (backward).
//!
//! Two estimators are supported. The straight-through estimator (STE)
//! rounds a sigmoid with slope `tau` on the forward pass and
//! differentiates that sigmoid on the backward pass; `tau` anneals upward
//! over epochs so the relaxation sharpens toward the rounding function.
//! The pass-through estimator (PTE) rounds a unit-slope sigmoid forward
//! and treats the output as the raw parameter backward (identity
//! gradient).
//!
//! Forward rounding is threshold-inclusive: a sigmoid exactly at the
//! rounding threshold maps to 1, so the all-zeros initialization starts
//! from the all-selected state. Bits are computed by comparing `tau * e`
//! against `logit(threshold)` — exactly equivalent to comparing the
//! sigmoid against the threshold, but immune to rounding of the sigmoid
//! itself.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{logit, sigmoid};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("slope annealing applies to the straight-through estimator only")]
    NotSlopeAnnealed,
    #[error("initial slope tau must be >= 1, got {0}")]
    BadTau(f64),
    #[error("change rate must be > 1, got {0}")]
    BadChangeRate(f64),
    #[error("annealing step must be >= 1, got {0}")]
    BadStep(f64),
    #[error("round threshold must be in (0, 1), got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Ste,
    Pte,
}

/// Estimator hyper-parameters. The annealing fields are meaningful for
/// STE only; PTE ignores them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Initial slope, >= 1 (STE).
    pub tau0: f64,
    /// Annealing change rate r > 1 (STE).
    pub change_rate: f64,
    /// Annealing step parameter s >= 1 (STE).
    pub step: f64,
    /// Forward rounding threshold in (0, 1); ties map to 1.
    pub round_threshold: f64,
}

impl EstimatorConfig {
    /// Straight-through estimator with explicit annealing schedule.
    pub fn ste(tau0: f64, change_rate: f64, step: f64) -> Result<Self, EstimatorError> {
        if !(tau0 >= 1.0) {
            return Err(EstimatorError::BadTau(tau0));
        }
        if !(change_rate > 1.0) {
            return Err(EstimatorError::BadChangeRate(change_rate));
        }
        if !(step >= 1.0) {
            return Err(EstimatorError::BadStep(step));
        }
        Ok(Self {
            kind: EstimatorKind::Ste,
            tau0,
            change_rate,
            step,
            round_threshold: 0.5,
        })
    }

    /// STE with the benchmark defaults: `tau0 = 1`, `r = 1.01`, `s = 50`.
    pub fn ste_default() -> Self {
        Self::ste(1.0, 1.01, 50.0).expect("defaults are valid")
    }

    /// Pass-through estimator.
    pub fn pte() -> Self {
        Self {
            kind: EstimatorKind::Pte,
            tau0: 1.0,
            change_rate: 1.01,
            step: 50.0,
            round_threshold: 0.5,
        }
    }

    pub fn with_round_threshold(mut self, threshold: f64) -> Result<Self, EstimatorError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(EstimatorError::BadThreshold(threshold));
        }
        self.round_threshold = threshold;
        Ok(self)
    }

    /// Annealed slope at the given epoch: `tau(p) = tau0 * r^(p / s)`,
    /// evaluated from the epoch counter. Monotone non-decreasing in `p`.
    /// Errors for PTE, which has no slope.
    pub fn anneal_tau(&self, epoch: usize) -> Result<f64, EstimatorError> {
        match self.kind {
            EstimatorKind::Ste => Ok(self.tau0 * self.change_rate.powf(epoch as f64 / self.step)),
            EstimatorKind::Pte => Err(EstimatorError::NotSlopeAnnealed),
        }
    }

    /// Slope entering the relaxation at this epoch: the annealed tau for
    /// STE, a fixed 1 for PTE.
    pub fn slope(&self, epoch: usize) -> f64 {
        match self.kind {
            EstimatorKind::Ste => self.tau0 * self.change_rate.powf(epoch as f64 / self.step),
            EstimatorKind::Pte => 1.0,
        }
    }

    /// Cutoff in parameter space: the forward bit is `e >= cutoff`. With
    /// the default threshold of 0.5 this is exactly zero.
    pub fn forward_cutoff(&self, epoch: usize) -> f64 {
        logit(self.round_threshold) / self.slope(epoch)
    }

    /// Relaxed output and its derivative at one coordinate, given the
    /// slope for the current epoch.
    #[inline]
    pub fn relaxation_at(&self, e: f64, slope: f64) -> (f64, f64) {
        match self.kind {
            EstimatorKind::Ste => {
                let s = sigmoid(slope * e);
                (s, slope * s * (1.0 - s))
            }
            EstimatorKind::Pte => (e, 1.0),
        }
    }
}

/// The learnable parameters: one scalar per item, plus the epoch counter
/// that drives slope annealing.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub e: Vec<f64>,
    pub epoch: usize,
}

impl EstimatorState {
    pub fn new(e: Vec<f64>) -> Self {
        Self { e, epoch: 0 }
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }
}

/// Forward pass: one bit per coordinate. STE rounds `sigmoid(tau(p) * e)`,
/// PTE rounds `sigmoid(e)`; both map ties at the threshold to 1.
pub fn forward(state: &EstimatorState, config: &EstimatorConfig) -> Vec<bool> {
    let cutoff = config.forward_cutoff(state.epoch);
    let mut bits = Vec::new();
    crate::kernels::map_into(&state.e, &mut bits, |_, &e| e >= cutoff);
    bits
}

/// Backward pass: the relaxed outputs and their derivatives with respect
/// to each parameter. STE: `sigmoid(tau e)` and its derivative; PTE: the
/// identity.
pub fn backward_relaxation(
    state: &EstimatorState,
    config: &EstimatorConfig,
) -> (Vec<f64>, Vec<f64>) {
    let slope = config.slope(state.epoch);
    let n = state.len();
    let mut relaxed = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for i in 0..n {
        let (x, d) = config.relaxation_at(state.e[i], slope);
        relaxed[i] = x;
        grad[i] = d;
    }
    (relaxed, grad)
}
