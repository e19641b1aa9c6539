//! Text-guided visual token pruning with per-view diversity recycling.
//!
//! Given a layer's input hidden states and its rotation-free scoring
//! weights, a pruning step runs four stages:
//!
//! 1. select text anchors: text tokens whose mean softmax similarity over
//!    all visual tokens strictly exceeds the mean of those means;
//! 2. score every visual token by the mean attention it receives from the
//!    anchor rows of the scoring matrix;
//! 3. keep the global top-K by score;
//! 4. among the remaining candidates, compute a per-view feature
//!    distinctiveness score and recycle the global top-k of those.
//!
//! The retained set is the disjoint union of stages 3 and 4 and always has
//! exactly the configured budget size. All index sets are original token
//! positions, so they stay meaningful after the sequence is compacted.

use crate::error::{Error, Result};
use crate::flopcount::{FlopCounter, MatmulClass};
use crate::layout::SequenceLayout;
use crate::numerics::{matmul_counted, softmax_rows, Matrix2D};
use crate::transformer::Sparsifier;

/// Text tokens chosen as raters for visual importance.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    /// Original positions of the anchors, ascending. Never empty.
    pub positions: Vec<usize>,
    /// The selection threshold (mean of the per-text alignment scores).
    pub tau: f64,
    /// (original position, alignment score) for every text token.
    pub alignment: Vec<(usize, f64)>,
}

/// Per-visual-token importance, aligned to the layout's visual tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores {
    /// (original position, score) ascending by position.
    pub entries: Vec<(usize, f64)>,
}

/// Outcome of one pruning step.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneDecision {
    /// Top-K by importance (original positions, ascending).
    pub selected: Vec<usize>,
    /// Diversity-recycled tokens (original positions, ascending).
    pub recycled: Vec<usize>,
    /// Union of the two sets (original positions, ascending).
    pub retained: Vec<usize>,
    /// Retention budget; always equals `retained.len()`.
    pub budget: usize,
    pub top_k: usize,
    pub recycle_k: usize,
    /// Importance of every visual token considered.
    pub importance: Vec<(usize, f64)>,
    /// Diversity of every candidate (visual tokens outside `selected`).
    pub diversity: Vec<(usize, f64)>,
    /// Anchor positions used for scoring.
    pub anchors: Vec<usize>,
    pub tau: f64,
}

/// Pruning configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneConfig {
    /// Fraction of visual tokens removed, in [0, 1).
    pub pruning_rate: f64,
    /// Fraction of the retention budget reserved for recycling.
    pub recycle_fraction: f64,
    /// Layers at which pruning runs.
    pub sparse_layers: Vec<usize>,
}

impl Default for PruneConfig {
    fn default() -> Self {
        PruneConfig { pruning_rate: 0.35, recycle_fraction: 0.10, sparse_layers: vec![2] }
    }
}

/// Budget split for one pruning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    /// Tokens retained in total: round((1 - rate) * visual), at least 1.
    pub total: usize,
    /// Top-K share: floor((1 - recycle_fraction) * total).
    pub top_k: usize,
    /// Recycled share: total - top_k.
    pub recycle_k: usize,
}

impl PruneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.pruning_rate) {
            return Err(Error::InvalidConfig(format!(
                "pruning_rate {} outside [0, 1)",
                self.pruning_rate
            )));
        }
        if !(0.0..=1.0).contains(&self.recycle_fraction) {
            return Err(Error::InvalidConfig(format!(
                "recycle_fraction {} outside [0, 1]",
                self.recycle_fraction
            )));
        }
        Ok(())
    }

    /// Budget arithmetic for a given visual token count.
    pub fn budget(&self, visual_count: usize) -> Budget {
        let total = ((1.0 - self.pruning_rate) * visual_count as f64).round().max(1.0) as usize;
        let total = total.min(visual_count.max(1));
        let top_k = ((1.0 - self.recycle_fraction) * total as f64).floor() as usize;
        Budget { total, top_k, recycle_k: total - top_k }
    }
}

/// Rank text tokens by how much softmax similarity they receive from visual
/// tokens, and keep those strictly above the mean. Falls back to all text
/// tokens when the strict comparison selects none.
pub fn select_text_anchors(h: &Matrix2D, layout: &SequenceLayout) -> Result<AnchorSet> {
    select_text_anchors_counted(h, layout, None)
}

pub fn select_text_anchors_counted(
    h: &Matrix2D,
    layout: &SequenceLayout,
    counter: Option<&FlopCounter>,
) -> Result<AnchorSet> {
    let visual = layout.visual_indices();
    let text = layout.text_indices();
    if text.is_empty() {
        return Err(Error::Precondition("anchor selection requires at least one text token".into()));
    }
    if visual.is_empty() {
        return Err(Error::Precondition(
            "anchor selection requires at least one visual token".into(),
        ));
    }
    let h_v = h.select_rows(&visual);
    let h_t = h.select_rows(&text);
    let sims = matmul_counted(&h_v, &h_t.transpose(), counter, MatmulClass::AnchorSim)?;
    let s = softmax_rows(&sims)?;

    let mut alignment = Vec::with_capacity(text.len());
    for (tj, &t_idx) in text.iter().enumerate() {
        let mean = (0..visual.len()).map(|vi| s.at(vi, tj)).sum::<f64>() / visual.len() as f64;
        alignment.push((layout.token(t_idx).original_position, mean));
    }
    let tau = alignment.iter().map(|(_, a)| a).sum::<f64>() / alignment.len() as f64;
    let mut positions: Vec<usize> =
        alignment.iter().filter(|(_, a)| *a > tau).map(|(p, _)| *p).collect();
    if positions.is_empty() {
        positions = alignment.iter().map(|(p, _)| *p).collect();
    }
    Ok(AnchorSet { positions, tau, alignment })
}

/// Mean attention each visual token receives from the anchor rows.
pub fn importance_scores(
    scoring: &Matrix2D,
    anchors: &AnchorSet,
    layout: &SequenceLayout,
) -> Result<ImportanceScores> {
    let len = layout.len();
    if scoring.rows() != len || scoring.cols() != len {
        return Err(Error::ShapeMismatch {
            op: "importance_scores",
            left_rows: len,
            left_cols: len,
            right_rows: scoring.rows(),
            right_cols: scoring.cols(),
        });
    }
    for i in 0..len {
        let sum: f64 = scoring.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!(
                "scoring weights row {i} sums to {sum}, expected 1"
            )));
        }
    }
    if anchors.positions.is_empty() {
        return Err(Error::ContractViolation("empty anchor set".into()));
    }
    let mut anchor_rows = Vec::with_capacity(anchors.positions.len());
    for &pos in &anchors.positions {
        let idx = layout.index_of_original(pos).ok_or_else(|| {
            Error::ContractViolation(format!("anchor position {pos} not in layout"))
        })?;
        anchor_rows.push(idx);
    }
    let inv = 1.0 / anchor_rows.len() as f64;
    let entries = layout
        .visual_indices()
        .into_iter()
        .map(|vi| {
            let s: f64 = anchor_rows.iter().map(|&t| scoring.at(t, vi)).sum::<f64>() * inv;
            (layout.token(vi).original_position, s)
        })
        .collect();
    Ok(ImportanceScores { entries })
}

/// Indices of the `k` largest scores; ties go to the smaller original
/// position. Returns ascending positions.
fn top_k_by_score(entries: &[(usize, f64)], k: usize, what: &'static str) -> Result<Vec<usize>> {
    if k > entries.len() {
        return Err(Error::Budget { requested: k, available: entries.len() });
    }
    let _ = what;
    let mut ranked: Vec<(usize, f64)> = entries.to_vec();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores must be finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut out: Vec<usize> = ranked.into_iter().take(k).map(|(p, _)| p).collect();
    out.sort_unstable();
    Ok(out)
}

/// Global top-K selection over importance scores.
pub fn global_top_k(scores: &ImportanceScores, k: usize) -> Result<Vec<usize>> {
    top_k_by_score(&scores.entries, k, "global_top_k")
}

/// Feature distinctiveness of each candidate within its own view.
///
/// For a candidate token i in a view with N candidates, the score is
/// 1 - mean cosine similarity to the other N-1 same-view candidates. A view
/// with a single candidate scores 1 (an isolated token is maximally
/// distinct). Zero-norm rows contribute similarity 0.
pub fn diversity_scores(
    h: &Matrix2D,
    candidates: &[usize],
    layout: &SequenceLayout,
) -> Result<Vec<(usize, f64)>> {
    // Group candidates by view, keeping (original position, current index).
    let mut by_view: std::collections::BTreeMap<usize, Vec<(usize, usize)>> =
        std::collections::BTreeMap::new();
    for &pos in candidates {
        let idx = layout.index_of_original(pos).ok_or_else(|| {
            Error::Precondition(format!("candidate {pos} not in layout"))
        })?;
        let view = layout.token(idx).view_id().ok_or_else(|| {
            Error::Precondition(format!("candidate {pos} is not a visual token"))
        })?;
        by_view.entry(view).or_default().push((pos, idx));
    }
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(candidates.len());
    for members in by_view.values() {
        if members.len() == 1 {
            out.push((members[0].0, 1.0));
            continue;
        }
        let norms: Vec<f64> = members
            .iter()
            .map(|&(_, idx)| h.row(idx).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        for (a, &(pos_a, idx_a)) in members.iter().enumerate() {
            let mut sum = 0.0;
            for (b, &(_, idx_b)) in members.iter().enumerate() {
                if a == b {
                    continue;
                }
                if norms[a] == 0.0 || norms[b] == 0.0 {
                    continue; // similarity 0
                }
                let dot: f64 =
                    h.row(idx_a).iter().zip(h.row(idx_b)).map(|(x, y)| x * y).sum();
                sum += dot / (norms[a] * norms[b]);
            }
            out.push((pos_a, 1.0 - sum / (members.len() - 1) as f64));
        }
    }
    out.sort_by_key(|(p, _)| *p);
    Ok(out)
}

/// Global top-k over diversity scores, same tie rule as [`global_top_k`].
pub fn recycle_select(diversity: &[(usize, f64)], k: usize) -> Result<Vec<usize>> {
    top_k_by_score(diversity, k, "recycle_select")
}

/// The full pruning step: anchors, importance, top-K, diversity, recycling.
pub fn prune_step(
    h: &Matrix2D,
    scoring: &Matrix2D,
    layout: &SequenceLayout,
    cfg: &PruneConfig,
) -> Result<PruneDecision> {
    prune_step_counted(h, scoring, layout, cfg, None)
}

pub fn prune_step_counted(
    h: &Matrix2D,
    scoring: &Matrix2D,
    layout: &SequenceLayout,
    cfg: &PruneConfig,
    counter: Option<&FlopCounter>,
) -> Result<PruneDecision> {
    cfg.validate()?;
    let anchors = select_text_anchors_counted(h, layout, counter)?;
    let importance = importance_scores(scoring, &anchors, layout)?;
    let visual_count = importance.entries.len();
    let budget = cfg.budget(visual_count);

    let selected = global_top_k(&importance, budget.top_k)?;
    let selected_set: std::collections::BTreeSet<usize> = selected.iter().copied().collect();
    let candidates: Vec<usize> = importance
        .entries
        .iter()
        .map(|(p, _)| *p)
        .filter(|p| !selected_set.contains(p))
        .collect();
    let recycle_k = budget.recycle_k.min(candidates.len());
    let diversity = diversity_scores(h, &candidates, layout)?;
    let recycled = recycle_select(&diversity, recycle_k)?;

    let mut retained: Vec<usize> = selected.iter().chain(&recycled).copied().collect();
    retained.sort_unstable();

    Ok(PruneDecision {
        selected,
        recycled,
        retained,
        budget: budget.total,
        top_k: budget.top_k,
        recycle_k,
        importance: importance.entries,
        diversity,
        anchors: anchors.positions,
        tau: anchors.tau,
    })
}

/// [`Sparsifier`] backed by [`prune_step`].
#[derive(Debug, Clone)]
pub struct TextGuidedSparsifier {
    pub cfg: PruneConfig,
}

impl TextGuidedSparsifier {
    pub fn new(cfg: PruneConfig) -> Self {
        TextGuidedSparsifier { cfg }
    }
}

impl Sparsifier for TextGuidedSparsifier {
    fn prune(
        &self,
        h_input: &Matrix2D,
        scoring: &Matrix2D,
        layout: &SequenceLayout,
        counter: Option<&FlopCounter>,
    ) -> Result<PruneDecision> {
        prune_step_counted(h_input, scoring, layout, &self.cfg, counter)
    }
}
