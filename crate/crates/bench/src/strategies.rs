//! Pruning strategies under comparison.
//!
//! The text-guided strategy is the library's own pruning step, taken
//! straight from the forward trace. The baselines all work from the same
//! sparse-layer artifacts so the comparison is apples to apples:
//!
//! - `global_top_b`: the same importance scores, one global top-B, no
//!   recycling (ablates the diversity stage);
//! - `random`: a seeded uniform B-subset of the visual tokens;
//! - `per_view_average`: a fixed per-view budget split, top scores within
//!   each view, remainder to the views with the best next candidate;
//! - `positional`: the same pipeline but scored from the rotated,
//!   causally masked attention matrix (ablates the rotation-free choice).

use std::collections::BTreeSet;

use rand::Rng;
use viewprune_core::layout::SequenceLayout;
use viewprune_core::numerics::Matrix2D;
use viewprune_core::pruning::{prune_step, ImportanceScores, PruneConfig, PruneDecision};
use viewprune_core::rng::RngSeed;

use crate::error::{HarnessError, Result};

pub const STRATEGY_NAMES: [&str; 5] =
    ["text_guided", "global_top_b", "random", "per_view_average", "positional"];

fn decision_from_retained(
    selected: Vec<usize>,
    recycled: Vec<usize>,
    budget: usize,
    importance: Vec<(usize, f64)>,
) -> PruneDecision {
    let mut retained: Vec<usize> = selected.iter().chain(&recycled).copied().collect();
    retained.sort_unstable();
    let top_k = selected.len();
    let recycle_k = recycled.len();
    PruneDecision {
        selected,
        recycled,
        retained,
        budget,
        top_k,
        recycle_k,
        importance,
        diversity: Vec::new(),
        anchors: Vec::new(),
        tau: 0.0,
    }
}

/// Same importance scores, single global top-B, no recycling.
pub fn global_top_b(importance: &[(usize, f64)], budget: usize) -> Result<PruneDecision> {
    let scores = ImportanceScores { entries: importance.to_vec() };
    let selected = viewprune_core::pruning::global_top_k(&scores, budget)?;
    Ok(decision_from_retained(selected, Vec::new(), budget, importance.to_vec()))
}

/// Uniform sample of `budget` visual tokens, deterministic per seed.
pub fn random_baseline(
    layout: &SequenceLayout,
    budget: usize,
    seed: RngSeed,
) -> Result<PruneDecision> {
    let visual: Vec<usize> = layout
        .visual_indices()
        .into_iter()
        .map(|i| layout.token(i).original_position)
        .collect();
    if budget > visual.len() {
        return Err(HarnessError::Contract(format!(
            "random baseline budget {budget} exceeds {} visual tokens",
            visual.len()
        )));
    }
    let mut pool = visual;
    let mut rng = seed.derive("baseline-random").rng();
    for i in 0..budget {
        let j = i + rng.gen_range(0..pool.len() - i);
        pool.swap(i, j);
    }
    let mut selected = pool[..budget].to_vec();
    selected.sort_unstable();
    Ok(decision_from_retained(selected, Vec::new(), budget, Vec::new()))
}

/// Equal per-view budget: floor(B/C) per view by top score within the view,
/// remainder assigned one by one to the views with the highest-scoring next
/// candidate (ties to the lower view id).
pub fn per_view_average(
    importance: &[(usize, f64)],
    layout: &SequenceLayout,
    budget: usize,
) -> Result<PruneDecision> {
    let views = layout.view_ids();
    // Rank candidates inside each view: best first, ties to smaller position.
    let mut ranked: Vec<Vec<(usize, f64)>> = vec![Vec::new(); views.len()];
    for &(pos, score) in importance {
        let idx = layout
            .index_of_original(pos)
            .ok_or_else(|| HarnessError::Contract(format!("score for unknown token {pos}")))?;
        let view = layout.token(idx).view_id().ok_or_else(|| {
            HarnessError::Contract(format!("score for non-visual token {pos}"))
        })?;
        let slot = views.binary_search(&view).expect("view listed");
        ranked[slot].push((pos, score));
    }
    for list in ranked.iter_mut() {
        list.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    }
    let total: usize = ranked.iter().map(Vec::len).sum();
    if budget > total {
        return Err(HarnessError::Contract(format!(
            "per-view baseline budget {budget} exceeds {total} visual tokens"
        )));
    }

    let share = budget / views.len();
    let mut taken: Vec<usize> = ranked.iter().map(|r| share.min(r.len())).collect();
    let mut remaining = budget - taken.iter().sum::<usize>();
    while remaining > 0 {
        // Highest residual (next candidate) score wins the extra slot.
        let mut best: Option<(usize, f64)> = None;
        for (slot, list) in ranked.iter().enumerate() {
            if taken[slot] < list.len() {
                let score = list[taken[slot]].1;
                let better = match best {
                    None => true,
                    Some((_, s)) => score > s,
                };
                if better {
                    best = Some((slot, score));
                }
            }
        }
        let (slot, _) = best.expect("budget <= total guarantees a candidate");
        taken[slot] += 1;
        remaining -= 1;
    }

    let mut selected: Vec<usize> = Vec::with_capacity(budget);
    for (slot, list) in ranked.iter().enumerate() {
        selected.extend(list[..taken[slot]].iter().map(|(p, _)| *p));
    }
    selected.sort_unstable();
    Ok(decision_from_retained(selected, Vec::new(), budget, importance.to_vec()))
}

/// The full pruning pipeline, but scored from the rotated causally masked
/// attention matrix instead of the rotation-free one.
pub fn positional(
    h_input: &Matrix2D,
    masked_weights: &Matrix2D,
    layout: &SequenceLayout,
    cfg: &PruneConfig,
) -> Result<PruneDecision> {
    Ok(prune_step(h_input, masked_weights, layout, cfg)?)
}

/// Sanity helper shared by tests and metrics: all strategies must return
/// exactly `budget` distinct visual tokens.
pub fn check_decision(decision: &PruneDecision, layout: &SequenceLayout) -> Result<()> {
    if decision.retained.len() != decision.budget {
        return Err(HarnessError::Contract(format!(
            "decision retains {} tokens for budget {}",
            decision.retained.len(),
            decision.budget
        )));
    }
    let set: BTreeSet<usize> = decision.retained.iter().copied().collect();
    if set.len() != decision.retained.len() {
        return Err(HarnessError::Contract("duplicate retained tokens".into()));
    }
    for &pos in &decision.retained {
        match layout.index_of_original(pos) {
            Some(i) if layout.token(i).is_visual() => {}
            _ => {
                return Err(HarnessError::Contract(format!(
                    "retained token {pos} is not a visual token of the layout"
                )))
            }
        }
    }
    Ok(())
}
