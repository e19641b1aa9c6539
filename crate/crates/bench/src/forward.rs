//! Single-scenario end-to-end run: fusion, decoder with pruning, trajectory
//! decoding, and the serialized trace.

use serde::Serialize;
use viewprune_core::planner::Trajectory;

use crate::config::Config;
use crate::error::Result;
use crate::report::DecisionDump;
use crate::runner::full_forward;
use crate::scenario::{generate_scenario, ScenarioInfo};

#[derive(Debug, Clone, Serialize)]
pub struct ForwardStep {
    pub layer: usize,
    pub sequence_before: usize,
    pub sequence_after: usize,
    pub decision: DecisionDump,
}

/// Serialized trace of one forward run.
#[derive(Debug, Clone, Serialize)]
pub struct ForwardReport {
    pub scenario: ScenarioInfo,
    pub steps: Vec<ForwardStep>,
    pub final_tokens: usize,
    pub final_visual_tokens: usize,
}

pub struct ForwardRun {
    pub report: ForwardReport,
    pub trajectory: Trajectory,
}

/// Run one seeded scenario end to end.
pub fn run_forward(seed: u64, cfg: &Config) -> Result<ForwardRun> {
    let bundle = generate_scenario(seed, cfg)?;
    let (out, trajectory) = full_forward(&bundle)?;
    let steps = out
        .trace
        .steps
        .iter()
        .map(|s| {
            let before = s
                .artifacts
                .as_ref()
                .map(|a| a.layout.len())
                .unwrap_or_default();
            ForwardStep {
                layer: s.layer,
                sequence_before: before,
                sequence_after: before - (s.decision.importance.len() - s.decision.retained.len()),
                decision: DecisionDump::new(seed, &s.decision),
            }
        })
        .collect();
    let report = ForwardReport {
        scenario: bundle.info.clone(),
        steps,
        final_tokens: out.layout.len(),
        final_visual_tokens: out.layout.visual_count(),
    };
    Ok(ForwardRun { report, trajectory })
}

/// Write trace.json and trajectory.csv into `dir`.
pub fn write_forward_outputs(dir: &std::path::Path, run: &ForwardRun) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(&run.report)
        .map_err(|e| crate::error::HarnessError::Other(e.to_string()))?;
    json.push('\n');
    std::fs::write(dir.join("trace.json"), json)?;
    std::fs::write(dir.join("trajectory.csv"), run.trajectory.to_csv())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_produces_trace_and_trajectory() {
        let mut cfg = Config::default();
        cfg.scenario.views = 3;
        cfg.scenario.tokens_per_view = 10;
        cfg.scenario.planted_views = 1;
        cfg.scenario.planted_per_view = 4;
        cfg.scenario.text_tokens = 4;
        cfg.arch.num_layers = 4;
        cfg.prune.sparse_layers = vec![1];
        let run = run_forward(3, &cfg).unwrap();
        assert_eq!(run.report.steps.len(), 1);
        assert_eq!(run.trajectory.len(), cfg.planner.trajectory_len);
        let budget = cfg.prune_config().budget(30).total;
        assert_eq!(run.report.final_visual_tokens, budget);
        assert_eq!(run.report.final_tokens, budget + 4);
        let step = &run.report.steps[0];
        assert_eq!(step.sequence_before, 34);
        assert_eq!(step.sequence_after, budget + 4);
    }
}
