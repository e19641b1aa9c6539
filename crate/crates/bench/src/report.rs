//! Structured bench reports: one JSON document plus CSV summaries.
//!
//! Serialization is deterministic: struct field order, ordered collections,
//! no timestamps. Two runs with the same config and master seed produce
//! byte-identical files.

use serde::Serialize;
use viewprune_core::pruning::PruneDecision;

use crate::config::{PruneSection, ScenarioSection};
use crate::error::Result;
use crate::metrics::{mean_std, SeedMetrics};

#[derive(Debug, Clone, Serialize)]
pub struct BudgetSummary {
    pub visual_tokens: usize,
    pub retained: usize,
    pub top_k: usize,
    pub recycle_k: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlopsSummary {
    pub dense_gflops: f64,
    pub pruned_gflops: f64,
    pub ratio: f64,
    pub frontend_gflops: f64,
}

/// Serializable copy of one pruning decision.
#[derive(Debug, Clone, Serialize)]
pub struct DecisionDump {
    pub seed: u64,
    pub selected: Vec<usize>,
    pub recycled: Vec<usize>,
    pub retained: Vec<usize>,
    /// (original position, importance score) for every visual token.
    pub importance: Vec<(usize, f64)>,
    /// (original position, diversity score) for recycle candidates.
    pub diversity: Vec<(usize, f64)>,
    pub anchors: Vec<usize>,
    pub tau: f64,
}

impl DecisionDump {
    pub fn new(seed: u64, d: &PruneDecision) -> Self {
        DecisionDump {
            seed,
            selected: d.selected.clone(),
            recycled: d.recycled.clone(),
            retained: d.retained.clone(),
            importance: d.importance.clone(),
            diversity: d.diversity.clone(),
            anchors: d.anchors.clone(),
            tau: d.tau,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyReport {
    pub name: String,
    pub mean_recall: f64,
    pub std_recall: f64,
    pub mean_coverage: f64,
    pub std_coverage: f64,
    pub mean_diversity: f64,
    pub std_diversity: f64,
    pub per_seed: Vec<SeedMetrics>,
    pub decisions: Vec<DecisionDump>,
}

impl StrategyReport {
    pub fn from_seeds(name: &str, per_seed: Vec<SeedMetrics>, decisions: Vec<DecisionDump>) -> Self {
        let recalls: Vec<f64> = per_seed.iter().map(|m| m.recall).collect();
        let coverages: Vec<f64> = per_seed.iter().map(|m| m.coverage).collect();
        let diversities: Vec<f64> = per_seed.iter().map(|m| m.diversity).collect();
        let (mean_recall, std_recall) = mean_std(&recalls);
        let (mean_coverage, std_coverage) = mean_std(&coverages);
        let (mean_diversity, std_diversity) = mean_std(&diversities);
        StrategyReport {
            name: name.to_string(),
            mean_recall,
            std_recall,
            mean_coverage,
            std_coverage,
            mean_diversity,
            std_diversity,
            per_seed,
            decisions,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub master_seed: u64,
    pub seeds: u64,
    pub scenario: ScenarioSection,
    pub prune: PruneSection,
    pub budget: BudgetSummary,
    pub flops: FlopsSummary,
    pub strategies: Vec<StrategyReport>,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One line per strategy with the aggregates.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "strategy,mean_recall,std_recall,mean_coverage,std_coverage,mean_diversity,std_diversity,flops_ratio\n",
        );
        for s in &self.strategies {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                s.name,
                s.mean_recall,
                s.std_recall,
                s.mean_coverage,
                s.std_coverage,
                s.mean_diversity,
                s.std_diversity,
                self.flops.ratio
            ));
        }
        out
    }

    /// One line per (seed, strategy).
    pub fn per_seed_csv(&self) -> String {
        let mut out = String::from("seed,strategy,recall,coverage,diversity\n");
        for s in &self.strategies {
            for m in &s.per_seed {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    m.seed, s.name, m.recall, m.coverage, m.diversity
                ));
            }
        }
        out
    }

    pub fn write_files(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json())?;
        std::fs::write(dir.join("summary.csv"), self.summary_csv())?;
        std::fs::write(dir.join("per_seed.csv"), self.per_seed_csv())?;
        Ok(())
    }
}
