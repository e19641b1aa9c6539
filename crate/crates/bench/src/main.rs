//! CLI entry point.
//!
//! Subcommands: `forward` (one scenario end to end), `bench` (multi-seed
//! strategy comparison), `flops` (analytic cost report), `masks` (render
//! pruning masks). Exit codes: 0 success, 2 config error, 3 contract
//! violation, 1 anything else.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use viewprune_bench::config::Config;
use viewprune_bench::error::{HarnessError, Result};
use viewprune_bench::forward::{run_forward, write_forward_outputs};
use viewprune_bench::masks::write_masks;
use viewprune_bench::runner::{self, ExecMode};
use viewprune_core::flops::{
    dense_flops, pruned_flops, reduction_ratio, FlopsArchAssumptions, FlopsReport,
};
use viewprune_core::pruning::PruneConfig;
use viewprune_core::rng::RngSeed;

#[derive(Parser)]
#[command(name = "viewprune", version, about = "Multi-view token pruning playground")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// JSON config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario end to end and dump trace + trajectory.
    Forward {
        #[command(flatten)]
        common: CommonOpts,
        /// Scenario seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Multi-seed strategy comparison; writes report.json and CSV summaries.
    Bench {
        #[command(flatten)]
        common: CommonOpts,
        /// Override bench.seeds.
        #[arg(long)]
        seeds: Option<u64>,
        /// Override bench.master_seed.
        #[arg(long)]
        master_seed: Option<u64>,
        /// Force the sequential seed loop.
        #[arg(long)]
        sequential: bool,
        /// Also write mask images for the first seed.
        #[arg(long)]
        write_masks: bool,
    },
    /// Analytic FLOPs report (reference scale by default, desk scale with
    /// --config).
    Flops {
        /// Desk-scale config; without it the reference-scale assumptions
        /// apply.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Pruning rate.
        #[arg(long)]
        rate: Option<f64>,
        /// Comma-separated sparse layer indices.
        #[arg(long, value_delimiter = ',')]
        sparse_layers: Option<Vec<usize>>,
        /// Text token count.
        #[arg(long)]
        text_tokens: Option<usize>,
        /// Fixed frontend constant in GFLOPs (otherwise calibrated at
        /// reference scale, zero at desk scale).
        #[arg(long)]
        frontend_gflops: Option<f64>,
        /// Write the JSON report here as well.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render pruning masks for one scenario.
    Masks {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

#[derive(Serialize)]
struct FlopsDump<'a> {
    dense_gflops: f64,
    pruned_gflops: f64,
    ratio: f64,
    reduction_percent: f64,
    frontend_gflops: f64,
    frontend_calibrated: bool,
    frontend_residual_gflops: f64,
    eager_overhead_gflops: f64,
    text_token_sensitivity: &'a [(usize, f64)],
}

fn flops_command(
    config: Option<PathBuf>,
    rate: Option<f64>,
    sparse_layers: Option<Vec<usize>>,
    text_tokens: Option<usize>,
    frontend_gflops: Option<f64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut assumptions = match &config {
        Some(p) => runner::flops_assumptions(&Config::load(p)?),
        None => FlopsArchAssumptions::reference_7b(),
    };
    if let Some(t) = text_tokens {
        assumptions.text_tokens = t;
    }
    if let Some(f) = frontend_gflops {
        assumptions.frontend_gflops = Some(f);
    }
    if let Some(layers) = sparse_layers {
        assumptions.sparse_layers = layers;
    }
    let prune = PruneConfig {
        pruning_rate: rate.unwrap_or(0.35),
        recycle_fraction: 0.10,
        sparse_layers: assumptions.sparse_layers.clone(),
    };

    let dense = dense_flops(&assumptions)?;
    let pruned = pruned_flops(&assumptions, &prune)?;
    let ratio = reduction_ratio(&dense, &pruned);

    // Sensitivity of the ratio to the (unknown) prompt length.
    let mut sensitivity = Vec::new();
    for t in [32usize, 64, 128] {
        let a = FlopsArchAssumptions { text_tokens: t, ..assumptions.clone() };
        let d = dense_flops(&a)?;
        let p = pruned_flops(&a, &prune)?;
        sensitivity.push((t, reduction_ratio(&d, &p)));
    }

    print_flops_summary(&assumptions, &prune, &dense, &pruned, &sensitivity);
    if let Some(path) = out {
        let dump = FlopsDump {
            dense_gflops: dense.total_gflops,
            pruned_gflops: pruned.total_gflops,
            ratio,
            reduction_percent: (1.0 - ratio) * 100.0,
            frontend_gflops: dense.frontend_gflops,
            frontend_calibrated: dense.frontend_calibrated,
            frontend_residual_gflops: dense.frontend_residual_gflops,
            eager_overhead_gflops: pruned.eager_overhead_gflops,
            text_token_sensitivity: &sensitivity,
        };
        let mut json = serde_json::to_string_pretty(&dump)
            .map_err(|e| HarnessError::Other(e.to_string()))?;
        json.push('\n');
        std::fs::write(&path, json)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_flops_summary(
    a: &FlopsArchAssumptions,
    prune: &PruneConfig,
    dense: &FlopsReport,
    pruned: &FlopsReport,
    sensitivity: &[(usize, f64)],
) {
    println!(
        "arch: {} layers, d_model {}, {} heads, ffn {}, {} views x {} decoder tokens + {} text",
        a.decoder_layers,
        a.d_model,
        a.num_heads,
        a.ffn_dim,
        a.views,
        a.llm_tokens_per_view,
        a.text_tokens
    );
    if dense.frontend_calibrated {
        println!(
            "frontend: {:.1} GFLOPs (calibrated; residual {:.3})",
            dense.frontend_gflops, dense.frontend_residual_gflops
        );
    } else {
        println!("frontend: {:.1} GFLOPs (fixed)", dense.frontend_gflops);
    }
    println!("dense total:  {:.1} GFLOPs", dense.total_gflops);
    println!(
        "pruned total: {:.1} GFLOPs (sparse layers {:?}, rate {:.2}, overhead {:.2} GFLOPs)",
        pruned.total_gflops, prune.sparse_layers, prune.pruning_rate, pruned.eager_overhead_gflops
    );
    let ratio = pruned.total_gflops / dense.total_gflops;
    println!("ratio: {:.4} (reduction {:.1}%)", ratio, (1.0 - ratio) * 100.0);
    for (t, r) in sensitivity {
        println!("  text={t:>4}: ratio {:.4} (reduction {:.1}%)", r, (1.0 - r) * 100.0);
    }
}

fn bench_command(
    common: CommonOpts,
    seeds: Option<u64>,
    master_seed: Option<u64>,
    sequential: bool,
    masks: bool,
) -> Result<()> {
    let mut cfg = load_config(&common.config)?;
    if let Some(s) = seeds {
        cfg.bench.seeds = s;
    }
    if let Some(m) = master_seed {
        cfg.bench.master_seed = m;
    }
    if masks {
        cfg.bench.write_masks = true;
    }
    let mode = if sequential || !cfg.bench.parallel {
        ExecMode::Sequential
    } else {
        ExecMode::Parallel
    };
    let report = runner::run_bench(&cfg, mode)?;
    report.write_files(&common.out)?;

    if cfg.bench.write_masks && cfg.bench.seeds > 0 {
        write_first_seed_masks(&cfg, &common.out)?;
    }

    println!(
        "bench: {} seeds, budget {}/{} visual tokens, flops ratio {:.4}",
        report.seeds, report.budget.retained, report.budget.visual_tokens, report.flops.ratio
    );
    for s in &report.strategies {
        println!(
            "  {:<17} recall {:.3} +/- {:.3}  coverage {:.3}  diversity {:.3}",
            s.name, s.mean_recall, s.std_recall, s.mean_coverage, s.mean_diversity
        );
    }
    println!("wrote {}", common.out.join("report.json").display());
    Ok(())
}

fn write_first_seed_masks(cfg: &Config, out: &std::path::Path) -> Result<()> {
    let seed = RngSeed::new(cfg.bench.master_seed).derive_index(0).0;
    masks_for_seed(cfg, seed, &out.join("masks"))
}

fn masks_for_seed(cfg: &Config, seed: u64, dir: &std::path::Path) -> Result<()> {
    let bundle = viewprune_bench::scenario::generate_scenario(seed, cfg)?;
    let out = runner::probe(&bundle, 0)?;
    let step = out
        .trace
        .steps
        .first()
        .ok_or_else(|| HarnessError::Config("config has no sparse layers".into()))?;
    let layout = &step.artifacts.as_ref().expect("probe captures artifacts").layout;
    write_masks(
        dir,
        &step.decision,
        layout,
        bundle.planted(),
        cfg.scenario.views,
        cfg.scenario.tokens_per_view,
    )?;
    println!("wrote {} views of masks to {}", cfg.scenario.views, dir.display());
    Ok(())
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Forward { common, seed } => {
            let cfg = load_config(&common.config)?;
            let run = run_forward(seed, &cfg)?;
            write_forward_outputs(&common.out, &run)?;
            println!(
                "forward: seed {seed}, {} -> {} tokens, {} waypoints",
                run.report.scenario.views * run.report.scenario.tokens_per_view
                    + run.report.scenario.text_tokens,
                run.report.final_tokens,
                run.trajectory.len()
            );
            println!("wrote {}", common.out.join("trace.json").display());
            Ok(())
        }
        Command::Bench { common, seeds, master_seed, sequential, write_masks } => {
            bench_command(common, seeds, master_seed, sequential, write_masks)
        }
        Command::Flops { config, rate, sparse_layers, text_tokens, frontend_gflops, out } => {
            flops_command(config, rate, sparse_layers, text_tokens, frontend_gflops, out)
        }
        Command::Masks { common, seed } => {
            let cfg = load_config(&common.config)?;
            masks_for_seed(&cfg, seed, &common.out)
        }
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
