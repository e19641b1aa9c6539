//! Decision quality metrics.

use serde::Serialize;
use viewprune_core::layout::SequenceLayout;
use viewprune_core::numerics::Matrix2D;

/// Metrics of one strategy on one seed.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct SeedMetrics {
    pub seed: u64,
    pub recall: f64,
    pub coverage: f64,
    pub diversity: f64,
}

/// |retained ∩ planted| / |planted|.
pub fn salient_recall(retained: &[usize], planted: &[usize]) -> f64 {
    if planted.is_empty() {
        return 1.0;
    }
    let set: std::collections::BTreeSet<usize> = retained.iter().copied().collect();
    let hits = planted.iter().filter(|p| set.contains(p)).count();
    hits as f64 / planted.len() as f64
}

/// Fraction of the scenario's views that keep at least one token.
pub fn per_view_coverage(retained: &[usize], layout: &SequenceLayout, views: usize) -> f64 {
    if views == 0 {
        return 1.0;
    }
    let mut covered = vec![false; views];
    for &pos in retained {
        if let Some(i) = layout.index_of_original(pos) {
            if let Some(v) = layout.token(i).view_id() {
                covered[v] = true;
            }
        }
    }
    covered.iter().filter(|c| **c).count() as f64 / views as f64
}

/// Mean over unordered retained-token pairs of (1 - cosine similarity) of
/// their hidden states at the sparse layer.
pub fn retained_diversity_mean(
    h: &Matrix2D,
    retained: &[usize],
    layout: &SequenceLayout,
) -> f64 {
    let rows: Vec<usize> = retained
        .iter()
        .filter_map(|p| layout.index_of_original(*p))
        .collect();
    if rows.len() < 2 {
        return 1.0;
    }
    let norms: Vec<f64> = rows
        .iter()
        .map(|&r| h.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for a in 0..rows.len() {
        for b in (a + 1)..rows.len() {
            let cos = if norms[a] == 0.0 || norms[b] == 0.0 {
                0.0
            } else {
                let dot: f64 =
                    h.row(rows[a]).iter().zip(h.row(rows[b])).map(|(x, y)| x * y).sum();
                dot / (norms[a] * norms[b])
            };
            sum += 1.0 - cos;
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// Sample mean and (population) standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recall_counts_intersection() {
        assert_eq!(salient_recall(&[1, 2, 3], &[2, 3, 9]), 2.0 / 3.0);
        assert_eq!(salient_recall(&[1], &[]), 1.0);
        assert_eq!(salient_recall(&[], &[4]), 0.0);
    }

    #[test]
    fn coverage_fraction_of_views() {
        let layout = SequenceLayout::visual_then_text(3, 4, 1);
        assert_eq!(per_view_coverage(&[0, 1], &layout, 3), 1.0 / 3.0);
        assert_eq!(per_view_coverage(&[0, 5, 9], &layout, 3), 1.0);
        assert_eq!(per_view_coverage(&[], &layout, 3), 0.0);
    }

    #[test]
    fn diversity_mean_matches_hand_case() {
        let layout = SequenceLayout::visual_then_text(1, 3, 1);
        let h = Matrix2D::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![9.0, 9.0],
        ])
        .unwrap();
        // pairs: (0,1) -> 1, (0,2) -> 0, (1,2) -> 1; mean = 2/3.
        let d = retained_diversity_mean(&h, &[0, 1, 2], &layout);
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mean_std_basics() {
        let (m, s) = mean_std(&[1.0, 1.0, 1.0]);
        assert_eq!((m, s), (1.0, 0.0));
        let (m, s) = mean_std(&[0.0, 2.0]);
        assert_eq!(m, 1.0);
        assert_eq!(s, 1.0);
    }
}
