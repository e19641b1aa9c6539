//! Shared test support: an independent straight-line recomputation of the
//! full pruning decision, used to cross-check the library implementation.
//! It deliberately avoids every library routine on the checked path: its own
//! softmax, its own means, full sorts for selection.

use std::collections::BTreeSet;

use viewprune_core::layout::SequenceLayout;
use viewprune_core::numerics::Matrix2D;

pub struct OracleDecision {
    pub selected: Vec<usize>,
    pub recycled: Vec<usize>,
    pub retained: Vec<usize>,
    pub budget: usize,
}

/// Direct recomputation of anchor selection, importance scoring, top-K,
/// per-view diversity, and recycling.
pub fn oracle_decision(
    h: &Matrix2D,
    scoring: &Matrix2D,
    layout: &SequenceLayout,
    rate: f64,
    recycle_fraction: f64,
) -> OracleDecision {
    let visual: Vec<usize> = layout.visual_indices();
    let text: Vec<usize> = layout.text_indices();
    assert!(!visual.is_empty() && !text.is_empty());

    // Anchor selection: softmax over text columns per visual row, column
    // means, strict threshold at the mean of means, fallback to all.
    let mut alignment = vec![0.0f64; text.len()];
    for &v in &visual {
        let logits: Vec<f64> = text
            .iter()
            .map(|&t| {
                let mut dot = 0.0;
                for k in 0..h.cols() {
                    dot += h.at(v, k) * h.at(t, k);
                }
                dot
            })
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let denom: f64 = exps.iter().sum();
        for (a, e) in alignment.iter_mut().zip(&exps) {
            *a += e / denom / visual.len() as f64;
        }
    }
    let tau: f64 = alignment.iter().sum::<f64>() / alignment.len() as f64;
    let mut anchors: Vec<usize> = text
        .iter()
        .zip(&alignment)
        .filter(|(_, a)| **a > tau)
        .map(|(t, _)| *t)
        .collect();
    if anchors.is_empty() {
        anchors = text.clone();
    }

    // Importance: mean of the anchor rows at each visual column.
    let scores: Vec<(usize, f64)> = visual
        .iter()
        .map(|&v| {
            let s: f64 =
                anchors.iter().map(|&t| scoring.at(t, v)).sum::<f64>() / anchors.len() as f64;
            (layout.token(v).original_position, s)
        })
        .collect();

    // Budget arithmetic.
    let budget = ((1.0 - rate) * visual.len() as f64).round().max(1.0) as usize;
    let budget = budget.min(visual.len());
    let top_k = ((1.0 - recycle_fraction) * budget as f64).floor() as usize;
    let recycle_k = budget - top_k;

    // Full-sort top-K, ties to the smaller position.
    let mut ranked = scores.clone();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut selected: Vec<usize> = ranked[..top_k].iter().map(|(p, _)| *p).collect();
    selected.sort_unstable();
    let selected_set: BTreeSet<usize> = selected.iter().copied().collect();

    // Per-view diversity over the complement.
    let candidates: Vec<usize> = scores
        .iter()
        .map(|(p, _)| *p)
        .filter(|p| !selected_set.contains(p))
        .collect();
    let mut diversity: Vec<(usize, f64)> = Vec::new();
    for &pos in &candidates {
        let idx = layout.index_of_original(pos).unwrap();
        let view = layout.token(idx).view_id().unwrap();
        let mates: Vec<usize> = candidates
            .iter()
            .filter(|&&q| {
                q != pos && {
                    let j = layout.index_of_original(q).unwrap();
                    layout.token(j).view_id() == Some(view)
                }
            })
            .copied()
            .collect();
        let d = if mates.is_empty() {
            1.0
        } else {
            let norm = |p: usize| {
                let i = layout.index_of_original(p).unwrap();
                (0..h.cols()).map(|k| h.at(i, k) * h.at(i, k)).sum::<f64>().sqrt()
            };
            let mut acc = 0.0;
            for &q in &mates {
                let (ni, nj) = (norm(pos), norm(q));
                if ni == 0.0 || nj == 0.0 {
                    continue;
                }
                let (i, j) = (
                    layout.index_of_original(pos).unwrap(),
                    layout.index_of_original(q).unwrap(),
                );
                let mut dot = 0.0;
                for k in 0..h.cols() {
                    dot += h.at(i, k) * h.at(j, k);
                }
                acc += dot / (ni * nj);
            }
            1.0 - acc / mates.len() as f64
        };
        diversity.push((pos, d));
    }
    diversity.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let take = recycle_k.min(diversity.len());
    let mut recycled: Vec<usize> = diversity[..take].iter().map(|(p, _)| *p).collect();
    recycled.sort_unstable();

    let mut retained: Vec<usize> = selected.iter().chain(&recycled).copied().collect();
    retained.sort_unstable();
    OracleDecision { selected, recycled, retained, budget }
}
