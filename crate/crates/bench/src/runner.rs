//! Scenario execution: decision probes, full forwards, and the multi-seed
//! bench loop.
//!
//! Scenarios are independent, so the bench loop can run them on the rayon
//! pool (feature `parallel`, on by default) or strictly sequentially; the
//! per-seed results are merged in seed order either way, so reports are
//! byte-identical across modes and thread counts.

use viewprune_core::flops::{dense_flops, pruned_flops, reduction_ratio, FlopsArchAssumptions};
use viewprune_core::numerics::Matrix2D;
use viewprune_core::planner::{decode_trajectory, Trajectory};
use viewprune_core::pruning::{PruneDecision, TextGuidedSparsifier};
use viewprune_core::rng::RngSeed;
use viewprune_core::transformer::{
    model_forward, ForwardOptions, ModelOutput, SparseArtifacts,
};

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::metrics::{per_view_coverage, retained_diversity_mean, salient_recall, SeedMetrics};
use crate::report::{BenchReport, BudgetSummary, DecisionDump, FlopsSummary, StrategyReport};
use crate::scenario::{generate_scenario, ScenarioBundle};
use crate::strategies;

/// How to run the seed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Rayon pool when compiled with the `parallel` feature; falls back to
    /// sequential otherwise.
    Parallel,
}

/// What one seed produced: the probe's sparse-layer artifacts and every
/// strategy's decision plus metrics.
pub struct SeedOutcome {
    pub seed: u64,
    pub per_strategy: Vec<(String, SeedMetrics, PruneDecision)>,
}

/// Run layers up to (and including) the last sparse layer and return the
/// pruning steps with captured artifacts.
pub fn probe(bundle: &ScenarioBundle, position_offset: u64) -> Result<ModelOutput> {
    probe_with_positions(bundle, position_offset, 1)
}

/// [`probe`] with both a constant position offset and a stretch factor on
/// the position indices.
pub fn probe_with_positions(
    bundle: &ScenarioBundle,
    position_offset: u64,
    position_stretch: u64,
) -> Result<ModelOutput> {
    let embeddings = bundle.llm_embeddings()?;
    let sparsifier = TextGuidedSparsifier::new(prune_cfg_of(bundle));
    let opts = ForwardOptions {
        position_offset,
        position_stretch,
        stop_after_last_sparse: true,
        capture_artifacts: true,
        ..Default::default()
    };
    Ok(model_forward(
        &embeddings,
        &bundle.layout,
        &bundle.stack.spec,
        &bundle.stack.weights,
        Some(&sparsifier),
        opts,
    )?)
}

fn prune_cfg_of(bundle: &ScenarioBundle) -> viewprune_core::pruning::PruneConfig {
    bundle.prune.clone()
}

/// Full forward pass plus trajectory decoding.
pub fn full_forward(bundle: &ScenarioBundle) -> Result<(ModelOutput, Trajectory)> {
    let embeddings = bundle.llm_embeddings()?;
    let sparsifier = TextGuidedSparsifier::new(prune_cfg_of(bundle));
    let opts = ForwardOptions { capture_artifacts: true, ..Default::default() };
    let out = model_forward(
        &embeddings,
        &bundle.layout,
        &bundle.stack.spec,
        &bundle.stack.weights,
        Some(&sparsifier),
        opts,
    )?;
    let trajectory =
        decode_trajectory(&out.hidden, &bundle.stack.planner_cfg, &bundle.stack.planner_weights)?;
    Ok((out, trajectory))
}

fn first_sparse_artifacts(out: &ModelOutput) -> Result<(&PruneDecision, &SparseArtifacts)> {
    let step = out
        .trace
        .steps
        .first()
        .ok_or_else(|| HarnessError::Contract("no sparse layer ran".into()))?;
    let artifacts = step
        .artifacts
        .as_ref()
        .ok_or_else(|| HarnessError::Contract("sparse artifacts were not captured".into()))?;
    Ok((&step.decision, artifacts))
}

fn metrics_for(
    seed: u64,
    decision: &PruneDecision,
    bundle: &ScenarioBundle,
    h: &Matrix2D,
) -> SeedMetrics {
    SeedMetrics {
        seed,
        recall: salient_recall(&decision.retained, bundle.planted()),
        coverage: per_view_coverage(&decision.retained, &bundle.layout, bundle.info.views),
        diversity: retained_diversity_mean(h, &decision.retained, &bundle.layout),
    }
}

/// Run every strategy on one seed.
pub fn evaluate_seed(seed: u64, cfg: &Config) -> Result<SeedOutcome> {
    let bundle = generate_scenario(seed, cfg)?;
    let out = probe(&bundle, 0)?;
    let (ours, artifacts) = first_sparse_artifacts(&out)?;
    let layout = &artifacts.layout;
    let h = &artifacts.h_input;
    let budget = ours.budget;

    let prune_cfg = prune_cfg_of(&bundle);
    let global = strategies::global_top_b(&ours.importance, budget)?;
    let random = strategies::random_baseline(layout, budget, RngSeed::new(seed))?;
    let pva = strategies::per_view_average(&ours.importance, layout, budget)?;
    let positional =
        strategies::positional(h, &artifacts.masked_weights, layout, &prune_cfg)?;

    let mut per_strategy = Vec::new();
    for (name, decision) in [
        ("text_guided", ours.clone()),
        ("global_top_b", global),
        ("random", random),
        ("per_view_average", pva),
        ("positional", positional),
    ] {
        strategies::check_decision(&decision, layout)?;
        let m = metrics_for(seed, &decision, &bundle, h);
        per_strategy.push((name.to_string(), m, decision));
    }
    Ok(SeedOutcome { seed, per_strategy })
}

fn seed_list(cfg: &Config) -> Vec<u64> {
    let master = RngSeed::new(cfg.bench.master_seed);
    (0..cfg.bench.seeds).map(|i| master.derive_index(i).0).collect()
}

fn map_seeds(cfg: &Config, mode: ExecMode) -> Result<Vec<SeedOutcome>> {
    let seeds = seed_list(cfg);
    #[cfg(feature = "parallel")]
    {
        if mode == ExecMode::Parallel {
            use rayon::prelude::*;
            // Ordered collect keeps the report independent of scheduling.
            return seeds.par_iter().map(|&s| evaluate_seed(s, cfg)).collect();
        }
    }
    let _ = mode;
    seeds.iter().map(|&s| evaluate_seed(s, cfg)).collect()
}

/// Desk-scale cost-model assumptions matching the harness config.
pub fn flops_assumptions(cfg: &Config) -> FlopsArchAssumptions {
    FlopsArchAssumptions {
        decoder_layers: cfg.arch.num_layers,
        d_model: cfg.arch.d_model,
        num_heads: cfg.arch.num_heads,
        ffn_dim: cfg.arch.ffn_dim,
        views: cfg.scenario.views,
        encoder_tokens_per_view: cfg.scenario.tokens_per_view,
        llm_tokens_per_view: cfg.scenario.tokens_per_view,
        text_tokens: cfg.scenario.text_tokens,
        history: cfg.tfm.history,
        sparse_layers: cfg.prune.sparse_layers.clone(),
        frontend_gflops: Some(0.0),
    }
}

/// The multi-seed comparison: all strategies, aggregated metrics, analytic
/// cost ratio.
pub fn run_bench(cfg: &Config, mode: ExecMode) -> Result<BenchReport> {
    cfg.validate()?;
    let outcomes = map_seeds(cfg, mode)?;

    let assumptions = flops_assumptions(cfg);
    let dense = dense_flops(&assumptions)?;
    let pruned = pruned_flops(&assumptions, &cfg.prune_config())?;
    let flops = FlopsSummary {
        dense_gflops: dense.total_gflops,
        pruned_gflops: pruned.total_gflops,
        ratio: reduction_ratio(&dense, &pruned),
        frontend_gflops: dense.frontend_gflops,
    };

    let budget_split = cfg.prune_config().budget(cfg.visual_tokens());
    let budget = BudgetSummary {
        visual_tokens: cfg.visual_tokens(),
        retained: budget_split.total,
        top_k: budget_split.top_k,
        recycle_k: budget_split.recycle_k,
    };

    let mut strategies_out = Vec::new();
    for name in strategies::STRATEGY_NAMES {
        let mut per_seed = Vec::new();
        let mut decisions = Vec::new();
        for outcome in &outcomes {
            let (_, m, d) = outcome
                .per_strategy
                .iter()
                .find(|(n, _, _)| n == name)
                .expect("every outcome carries every strategy");
            per_seed.push(*m);
            if cfg.bench.dump_decisions || decisions.is_empty() {
                decisions.push(DecisionDump::new(outcome.seed, d));
            }
        }
        strategies_out.push(StrategyReport::from_seeds(name, per_seed, decisions));
    }

    Ok(BenchReport {
        master_seed: cfg.bench.master_seed,
        seeds: cfg.bench.seeds,
        scenario: cfg.scenario.clone(),
        prune: cfg.prune.clone(),
        budget,
        flops,
        strategies: strategies_out,
    })
}
