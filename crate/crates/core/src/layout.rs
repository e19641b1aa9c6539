//! Per-token structural metadata for interleaved multi-view sequences.
//!
//! The pruning machinery never inspects hidden values to decide what is
//! visual or text; it reads this layout. Original positions are assigned
//! once and survive compaction, so they double as stable token identities
//! in decisions, traces, and reports.

use crate::error::{Error, Result};

/// What a token is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    /// A visual token belonging to camera view `view_id`.
    Visual { view_id: usize },
    Text,
    Other,
}

/// Structural record for one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenInfo {
    pub modality: Modality,
    /// Source frame, when the token is tied to a single frame.
    pub frame_id: Option<usize>,
    /// Position in the original (never-pruned) sequence.
    pub original_position: usize,
}

impl TokenInfo {
    pub fn is_visual(&self) -> bool {
        matches!(self.modality, Modality::Visual { .. })
    }

    pub fn view_id(&self) -> Option<usize> {
        match self.modality {
            Modality::Visual { view_id } => Some(view_id),
            _ => None,
        }
    }
}

/// Token-by-token layout of the current sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceLayout {
    tokens: Vec<TokenInfo>,
}

impl SequenceLayout {
    /// Validates that original positions are strictly increasing.
    pub fn new(tokens: Vec<TokenInfo>) -> Result<Self> {
        for w in tokens.windows(2) {
            if w[1].original_position <= w[0].original_position {
                return Err(Error::Precondition(format!(
                    "original positions must be strictly increasing, got {} then {}",
                    w[0].original_position, w[1].original_position
                )));
            }
        }
        Ok(SequenceLayout { tokens })
    }

    /// Standard construction: `views * tokens_per_view` visual tokens (view
    /// blocks in order), followed by `text_tokens` text tokens.
    pub fn visual_then_text(views: usize, tokens_per_view: usize, text_tokens: usize) -> Self {
        let mut tokens = Vec::with_capacity(views * tokens_per_view + text_tokens);
        let mut pos = 0;
        for view_id in 0..views {
            for _ in 0..tokens_per_view {
                tokens.push(TokenInfo {
                    modality: Modality::Visual { view_id },
                    frame_id: None,
                    original_position: pos,
                });
                pos += 1;
            }
        }
        for _ in 0..text_tokens {
            tokens.push(TokenInfo { modality: Modality::Text, frame_id: None, original_position: pos });
            pos += 1;
        }
        SequenceLayout { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, i: usize) -> &TokenInfo {
        &self.tokens[i]
    }

    pub fn tokens(&self) -> &[TokenInfo] {
        &self.tokens
    }

    /// Current indices of visual tokens.
    pub fn visual_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.tokens[i].is_visual()).collect()
    }

    /// Current indices of text tokens.
    pub fn text_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.tokens[i].modality == Modality::Text)
            .collect()
    }

    pub fn visual_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_visual()).count()
    }

    pub fn text_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.modality == Modality::Text).count()
    }

    /// Original positions of all tokens, in sequence order.
    pub fn original_positions(&self) -> Vec<usize> {
        self.tokens.iter().map(|t| t.original_position).collect()
    }

    /// Current index of the token with the given original position, if present.
    pub fn index_of_original(&self, original_position: usize) -> Option<usize> {
        self.tokens
            .binary_search_by_key(&original_position, |t| t.original_position)
            .ok()
    }

    /// Distinct view ids present, ascending.
    pub fn view_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.tokens.iter().filter_map(TokenInfo::view_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// The layout restricted to the given current indices (must be sorted).
    pub fn subset(&self, sorted_current_indices: &[usize]) -> SequenceLayout {
        let tokens = sorted_current_indices.iter().map(|&i| self.tokens[i]).collect();
        SequenceLayout { tokens }
    }
}
