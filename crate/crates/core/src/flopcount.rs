//! Multiply-add instrumentation for the analytic FLOPs model.
//!
//! The counter records the *logical* dense size (m x k x n) of every matmul
//! the transformer performs, bucketed by role. Masking and softmax sparsity
//! do not change the recorded size; pruning does, because it genuinely
//! shrinks the operand shapes. The analytic model in [`crate::flops`] is
//! checked for exact equality against these counts.

use std::sync::atomic::{AtomicU64, Ordering};

/// Role of a counted matmul.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatmulClass {
    /// Q, K, V and output projections.
    QkvoProj,
    /// Attention logits Q . K^T (all heads).
    AttnScores,
    /// Attention-weighted value aggregation A . V (all heads).
    AttnValues,
    /// Feed-forward gate/up/down projections.
    Ffn,
    /// Visual-text similarity used for anchor selection.
    AnchorSim,
    /// Rotation-free scoring logits at sparse layers.
    PruneScores,
    /// Anything outside the modeled terms (fusion frontend, planner, ...).
    Other,
}

pub const MATMUL_CLASSES: [MatmulClass; 7] = [
    MatmulClass::QkvoProj,
    MatmulClass::AttnScores,
    MatmulClass::AttnValues,
    MatmulClass::Ffn,
    MatmulClass::AnchorSim,
    MatmulClass::PruneScores,
    MatmulClass::Other,
];

impl MatmulClass {
    fn index(self) -> usize {
        match self {
            MatmulClass::QkvoProj => 0,
            MatmulClass::AttnScores => 1,
            MatmulClass::AttnValues => 2,
            MatmulClass::Ffn => 3,
            MatmulClass::AnchorSim => 4,
            MatmulClass::PruneScores => 5,
            MatmulClass::Other => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MatmulClass::QkvoProj => "qkvo_proj",
            MatmulClass::AttnScores => "attn_scores",
            MatmulClass::AttnValues => "attn_values",
            MatmulClass::Ffn => "ffn",
            MatmulClass::AnchorSim => "anchor_sim",
            MatmulClass::PruneScores => "prune_scores",
            MatmulClass::Other => "other",
        }
    }
}

/// Thread-safe tally of multiply-adds per matmul class.
#[derive(Debug, Default)]
pub struct FlopCounter {
    macs: [AtomicU64; 7],
}

impl FlopCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, class: MatmulClass, m: usize, k: usize, n: usize) {
        let macs = (m as u64) * (k as u64) * (n as u64);
        self.macs[class.index()].fetch_add(macs, Ordering::Relaxed);
    }

    /// Multiply-adds recorded for one class.
    pub fn macs(&self, class: MatmulClass) -> u64 {
        self.macs[class.index()].load(Ordering::Relaxed)
    }

    /// Total multiply-adds across all classes.
    pub fn total_macs(&self) -> u64 {
        self.macs.iter().map(|a| a.load(Ordering::Relaxed)).sum()
    }

    pub fn reset(&self) {
        for a in &self.macs {
            a.store(0, Ordering::Relaxed);
        }
    }
}
